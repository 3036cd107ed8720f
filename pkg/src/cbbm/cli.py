"""Command-line front end.

Every run prints the resolved configuration and master seed as ``#`` lines,
then the report (JSON by default, ``--format text`` for aligned columns).
Exit status: 0 success, 2 configuration error, 3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import stats
from .bbm import sample_positions
from .config import ConfigError, ExperimentConfig
from .gw import HorizonTooLarge, sample_tree
from .observables import Beta
from .phase import NoCltRule, classify, limiting_log_partition
from .rng import fresh_seed, substream

SCHEMA = 1
COMMANDS = ("tree", "simulate", "free-energy-map", "clt", "martingale", "smoothing-check", "phase")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _beta(text):
    try:
        return Beta.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--config", help="JSON config file; flags given explicitly override it")
    g.add_argument("--beta", type=_beta, help="complex inverse temperature, e.g. 0.5+1.0i")
    g.add_argument("--sigma", type=float)
    g.add_argument("--tau", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--t", type=float, help="horizon")
    g.add_argument("--r", type=float, help="conditioning / inner time")
    g.add_argument("--horizons", type=_floats, help="comma-separated list of horizons")
    g.add_argument("--A", type=float, dest="A")
    g.add_argument("--gamma", type=float)
    g.add_argument("--barrier", action="store_true", default=None)
    g.add_argument("--offspring", help="offspring law, e.g. 2:1 or 1:0.5,3:0.5")
    g.add_argument("--p", type=float)
    r = common.add_argument_group("run")
    r.add_argument("--replicas", type=int)
    r.add_argument("--first-replica", type=int, dest="first_replica")
    r.add_argument("--seed", type=_seed)
    r.add_argument("--threads", type=int)
    r.add_argument("--node-cap", type=int, dest="node_cap")
    r.add_argument("--grid-n", type=int, dest="grid_n")
    r.add_argument("--grid-max", type=float, dest="grid_max")
    r.add_argument("--min-boundary-distance", type=float, dest="min_boundary_distance")
    o = common.add_argument_group("output")
    o.add_argument("--out", help="write the report here instead of stdout")
    o.add_argument("--csv", help="spill per-replica rows (or tree/leaf dumps for 'tree') here")
    o.add_argument("--format", choices=("json", "text"))

    parser = argparse.ArgumentParser(prog="cbbm", description="Complex BBM energy model Monte Carlo lab")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "tree": "sample one genealogy (and leaf positions) and summarise it",
        "simulate": "run replicas and report observable summaries per horizon",
        "free-energy-map": "median (1/t) log|X| over a beta grid against the limiting formula",
        "clt": "conditional CLT experiment for the normalized partition function",
        "martingale": "mean, p-th moment and increments of the McKean martingale",
        "smoothing-check": "two-sample KS for the smoothing identity",
        "phase": "print the phase label and limiting free energy of beta "
                 "(boundary equalities are tested with absolute tolerance 1e-12)",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


_FLAG_KEYS = ("rho", "t", "r", "horizons", "A", "gamma", "barrier", "offspring", "p", "replicas",
              "first_replica", "seed", "threads", "node_cap", "grid_n", "grid_max", "min_boundary_distance",
              "out", "csv", "format")


def resolve_config(ns: argparse.Namespace) -> ExperimentConfig:
    base = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                base = ExperimentConfig.from_json(fh.read()).to_dict()
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    base["command"] = ns.command
    for k in _FLAG_KEYS:
        v = getattr(ns, k)
        if v is not None:
            base[k] = v
    if ns.beta is not None:
        for name, v in (("sigma", ns.sigma), ("tau", ns.tau)):
            if v is not None and v != getattr(ns.beta, name):
                raise ConfigError(f"--beta {ns.beta} conflicts with --{name} {v}")
        base["sigma"], base["tau"] = ns.beta.sigma, ns.beta.tau
    else:
        if ns.sigma is not None:
            base["sigma"] = ns.sigma
        if ns.tau is not None:
            base["tau"] = ns.tau
    try:
        cfg = ExperimentConfig.from_dict(base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def render_json(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _table(rows: list[dict]) -> list[str]:
    keys = list(rows[0])
    cells = [[_fmt(r[k]) for k in keys] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    lines = ["  ".join(k.rjust(w) for k, w in zip(keys, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return lines


def render_text(report: dict, prefix: str = "") -> str:
    lines = []
    scalars = {k: v for k, v in report.items() if not (isinstance(v, list) and v and isinstance(v[0], dict))}
    tables = {k: v for k, v in report.items() if k not in scalars}
    for k in sorted(scalars):
        v = scalars[k]
        if isinstance(v, dict):
            lines.append(f"{prefix}{k}:")
            lines.append(render_text(v, prefix + "  ").rstrip("\n"))
        else:
            lines.append(f"{prefix}{k:<24} {_fmt(v)}")
    for k in sorted(tables):
        lines.append(f"{prefix}{k}:")
        lines += [prefix + "  " + ln for ln in _table(tables[k])]
    return "\n".join(lines) + "\n"


# -- subcommands ---------------------------------------------------------------

def _run_tree(cfg: ExperimentConfig) -> dict:
    rng = substream(cfg.seed, cfg.first_replica)
    tree = sample_tree(cfg.t, cfg.law, rng, node_cap=cfg.node_cap)
    forest = sample_positions(tree, cfg.rho, rng)
    if cfg.csv:
        with open(cfg.csv, "w") as fh:
            fh.write(tree.dump())
        with open(cfg.csv + ".leaves", "w") as fh:
            fh.write(forest.dump_leaves())
    x = forest.x
    return {"n_nodes": tree.n_nodes, "n_leaves": tree.n_leaves, "expected_leaves": math.exp(cfg.t),
            "max_x": float(x.max()), "mean_x": float(x.mean()), "max_y": float(forest.y.max())}


def _run_simulate(cfg: ExperimentConfig) -> dict:
    table = stats.run_replicas(cfg)
    if cfg.csv:
        table.write_csv(cfg.csv)
    if len(table) == 0:
        return {"replicas": 0}
    return {"replicas": len(table), **stats.summary_from_table(table, cfg.law.K)}


def _run_free_energy(cfg: ExperimentConfig) -> dict:
    grid = stats.grid_points(cfg.grid_n, cfg.grid_max, cfg.min_boundary_distance)
    if cfg.t < 6:
        raise ConfigError("free-energy map needs t >= 6")
    table = stats.run_replicas(cfg, probes=[(b, cfg.rho) for b in grid])
    if cfg.csv:
        table.write_csv(cfg.csv)
    rows = stats.free_energy_from_table(table, grid, cfg.rho, cfg.t)
    within = [abs(r["gap"]) <= 0.15 for r in rows]
    return {"points": rows, "n_points": len(rows), "fraction_within_0.15": float(np.mean(within)) if rows else None}


def _clt_config(cfg: ExperimentConfig):
    if cfg.r is None:
        raise ConfigError("clt needs --r")
    if not 0 < cfg.r < cfg.t:
        raise ConfigError("clt needs 0 < r < t")
    return cfg


def _run_clt(cfg: ExperimentConfig) -> dict:
    _clt_config(cfg)
    from .phase import clt_scaling

    clt_scaling(cfg.beta)
    table = stats.run_replicas(cfg)
    if cfg.csv:
        table.write_csv(cfg.csv)
    return stats.clt_from_table(table, cfg.beta, cfg.rho, cfg.r, cfg.t, cfg.law.K).to_dict()


def _run_martingale(cfg: ExperimentConfig) -> dict:
    horizons = cfg.horizons or (cfg.t,)
    try:
        stats._check_martingale_args(cfg.beta, cfg.p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    table = stats.run_replicas(cfg)
    if cfg.csv:
        table.write_csv(cfg.csv)
    return stats.martingale_from_table(table, cfg.beta, cfg.rho, horizons, cfg.p, cfg.law.K).to_dict()


def _run_smoothing(cfg: ExperimentConfig) -> dict:
    r = cfg.r if cfg.r is not None else 0.0
    try:
        rep = stats.smoothing_recursion_check(cfg.beta, cfg.rho, r, cfg.t, cfg.replicas, cfg.seed, cfg.law,
                                              cfg.threads, cfg.node_cap)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return rep.to_dict()


_RUNNERS = {
    "tree": _run_tree,
    "simulate": _run_simulate,
    "free-energy-map": _run_free_energy,
    "clt": _run_clt,
    "martingale": _run_martingale,
    "smoothing-check": _run_smoothing,
}


def _emit(text: str, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(ns)
    except (ConfigError, ValueError) as exc:
        print(f"cbbm: error: {exc}", file=sys.stderr)
        return 2

    if cfg.command == "phase":
        print(f"# config {cfg.to_json()}")
        label = classify(cfg.beta)
        print(f"{label.value}  {limiting_log_partition(cfg.beta)!r}")
        return 0

    if cfg.seed is None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": fresh_seed()})
    print(f"# config {cfg.to_json()}")
    print(f"# seed {cfg.seed}")
    sys.stdout.flush()
    try:
        body = _RUNNERS[cfg.command](cfg)
    except HorizonTooLarge as exc:
        print(f"cbbm: error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, NoCltRule) as exc:
        print(f"cbbm: error: {exc}", file=sys.stderr)
        return 2
    report = {"schema": SCHEMA, "command": cfg.command, "config": cfg.report_dict(), "result": body}
    text = render_json(report) if cfg.format == "json" else render_text(report)
    _emit(text, cfg.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
