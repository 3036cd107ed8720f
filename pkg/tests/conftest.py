"""Shared pytest plumbing: one pass/fail line per acceptance criterion."""

ACCEPTANCE = {}


def record(number, title, checks, details=None):
    """Store the outcome of one acceptance criterion; ``checks`` maps name -> bool."""
    ok = all(bool(v) for v in checks.values())
    ACCEPTANCE[number] = (title, ok, checks, details or {})
    return ok


def pytest_terminal_summary(terminalreporter):
    ran = [i.nodeid for i in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", [])
           + terminalreporter.stats.get("error", []) if "test_acceptance" in i.nodeid]
    if not ACCEPTANCE and not ran:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in range(1, 12):
        if number not in ACCEPTANCE:
            if any(f"criterion_{number:02d}" in n for n in ran):
                tr.write_line(f"[FAIL] {number:>2}  (errored before reporting)")
            continue
        title, ok, checks, details = ACCEPTANCE[number]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}  {title}")
        for name, v in checks.items():
            extra = details.get(name)
            tr.write_line(f"         {'ok ' if v else 'BAD'} {name}" + (f"  ({extra})" if extra is not None else ""))
