import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbbm import observables as obs
from cbbm.bbm import Cloud, sample_positions
from cbbm.gw import sample_tree
from cbbm.observables import Beta, ComplexExpSum
from cbbm.oracles import MomentOracleInput, mean_partition, second_moment_normalized
from cbbm.rng import substream

SQRT2 = math.sqrt(2.0)


def _forest(t, seed, i=0, rho=0.0):
    rng = substream(seed, i)
    return sample_positions(sample_tree(t, rng=rng), rho, rng)


def _cloud(xs, ys=None, t=1.0, rho=0.0):
    x = np.asarray(xs, dtype=float)
    z = np.zeros_like(x) if ys is None else np.asarray(ys, dtype=float)
    return Cloud(t, rho, x, z, np.arange(x.size))


def test_single_leaf_at_origin():
    X = obs.partition_function(_cloud([0.0]), Beta(0.7, 1.3))
    assert X.value == 1 + 0j
    assert X.log_magnitude == 0.0 and X.phase == 0.0


def test_symmetric_pair_cancels():
    tau = 1.7
    b = math.pi / (2 * tau)
    X = obs.partition_function(_cloud([1.0, 1.0], [b, -b]), Beta(0.4, tau))
    assert abs(X.value) < 1e-15


def test_empty_forest_rejected():
    with pytest.raises(ValueError):
        obs.partition_function(_cloud([]), Beta(1.0))


def test_fast_phase_sum_matches_numpy():
    rng = np.random.default_rng(0)
    th = rng.uniform(-2e4, 2e4, 100000)
    w = rng.exponential(size=th.size)
    re, im = obs._phase_sum(w, th)
    assert math.isclose(re, float(w @ np.cos(th)), rel_tol=1e-9, abs_tol=1e-9 * w.sum())
    assert math.isclose(im, float(w @ np.sin(th)), rel_tol=1e-9, abs_tol=1e-9 * w.sum())


def test_huge_phases_fall_back_to_numpy():
    th = np.array([3e5, -7e6])
    X = ComplexExpSum.from_terms(np.zeros(2), th)
    assert cmath.isclose(X.value, complex(np.cos(th).sum(), np.sin(th).sum()), abs_tol=1e-12)


def test_streaming_matches_two_pass_on_a_million_terms():
    rng = np.random.default_rng(1)
    e = rng.normal(0, 30, 10**6)
    th = rng.uniform(-50, 50, 10**6)
    a = ComplexExpSum.from_terms(e, th)
    b = ComplexExpSum.streaming(e, th)
    assert math.isclose(a.log_magnitude, b.log_magnitude, rel_tol=1e-10)
    assert abs(a.phase - b.phase) < 1e-8


def test_no_overflow_with_large_exponents():
    X = ComplexExpSum.from_terms(np.array([5000.0, 5000.0]), np.zeros(2))
    assert math.isclose(X.log_magnitude, 5000 + math.log(2))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-300, 300), st.floats(-100, 100)), min_size=1, max_size=40),
       st.integers(1, 39))
def test_merge_is_associative_up_to_rounding(terms, cut):
    e = np.array([a for a, _ in terms])
    th = np.array([b for _, b in terms])
    cut = min(cut, len(terms))
    whole = ComplexExpSum.from_terms(e, th)
    parts = ComplexExpSum.from_terms(e[:cut], th[:cut]).merge(ComplexExpSum.from_terms(e[cut:], th[cut:]))
    pushed = ComplexExpSum()
    for a, b in terms:
        pushed = pushed.push(a, b)
    scale = math.exp(whole.shift) * np.exp(e - whole.shift).sum()
    for other in (parts, pushed):
        assert other.count == whole.count
        d = abs(other.scaled(-whole.shift) - whole.scaled(-whole.shift))
        assert d <= 1e-12 * scale / math.exp(whole.shift) + 1e-300


def test_conjugation_symmetry_is_exact():
    f = _forest(6.0, 1, rho=0.3)
    a = obs.partition_function(f, Beta(0.6, 0.9))
    b = obs.partition_function(f, Beta(0.6, -0.9))
    assert a.shift == b.shift and a.re == b.re and a.im == -b.im


def test_real_beta_mckean_is_rho_free_and_classical():
    f = _forest(6.0, 2)
    beta = Beta(0.5, 0.0)
    vals = {obs.mckean_martingale(f.with_rho(r), beta) for r in (-1.0, 0.0, 0.3, 1.0)}
    assert len(vals) == 1
    m = vals.pop()
    assert m.imag == 0.0 and m.real > 0
    classical = math.exp(-6.0 * (1 + 0.125)) * np.exp(0.5 * f.x).sum()
    assert math.isclose(m.real, classical, rel_tol=1e-12)


def test_mckean_single_particle_near_zero_time():
    c = _cloud([0.0], t=1e-12)
    assert cmath.isclose(obs.mckean_martingale(c, Beta(0.3, 0.4), 1e-12), 1.0, abs_tol=1e-11)
    assert cmath.isclose(obs.normalized_partition(c, Beta(0.3, 0.4), 1e-12), 1.0, abs_tol=1e-11)


def test_boundary_scaling_rejected_below_one():
    with pytest.raises(ValueError):
        obs.normalized_partition(_cloud([0.0], t=0.5), Beta(0.6, 0.8), 0.5, boundary_scaling=True)


def test_boundary_scaling_divides_by_root_t():
    f = _forest(4.0, 3)
    b = Beta(0.6, 0.8)
    assert cmath.isclose(obs.normalized_partition(f, b, boundary_scaling=True),
                         obs.normalized_partition(f, b) / 2.0, rel_tol=1e-14)


def test_additive_real_martingale_at_zero_theta():
    f = _forest(5.0, 4)
    assert math.isclose(obs.additive_real_martingale(f, 0.0), math.exp(-5.0) * f.tree.n_leaves, rel_tol=1e-12)


def test_derivative_and_seneta_heyde_single_leaf():
    assert obs.derivative_martingale(_cloud([SQRT2 * 3.0], t=3.0)) == 0.0
    assert math.isclose(obs.seneta_heyde(_cloud([SQRT2], t=1.0)), 1.0)


def test_critical_mckean_equals_seneta_heyde_over_root_t():
    for i in range(5):
        f = _forest(5.0, 5, i)
        m = obs.mckean_martingale(f, Beta(SQRT2, 0.0))
        assert math.isclose(m.real, obs.seneta_heyde(f) / math.sqrt(5.0), rel_tol=1e-12)


def _means(fn, n, seed, t, rho=0.0):
    vals = np.array([fn(_forest(t, seed, i, rho)) for i in range(n)])
    return vals


def _within(vals, target, k):
    vals = np.asarray(vals)
    for part, tgt in ((vals.real, complex(target).real), (vals.imag, complex(target).imag)):
        se = part.std(ddof=1) / math.sqrt(part.size)
        if se == 0:
            assert part.mean() == pytest.approx(tgt)
        else:
            assert abs(part.mean() - tgt) < k * se, (part.mean(), tgt, se)


def test_partition_mean_matches_oracle():
    beta, rho, t = Beta(0.4, 0.3), 0.5, 5.0
    vals = _means(lambda f: obs.partition_function(f, beta).value, 4000, 6, t, rho)
    _within(vals, mean_partition(MomentOracleInput(0.4, 0.3, rho, t)), 5)


def test_mckean_mean_is_one_with_phase_repair():
    beta, rho = Beta(0.4, 0.3), 0.7
    vals = _means(lambda f: obs.mckean_martingale(f, beta), 4000, 7, 6.0, rho)
    _within(vals, 1.0, 5)
    # without the repair the mean would be e^{i sigma tau rho t}, off by ~0.5 in the imaginary part
    assert abs(np.mean(vals).imag) < 0.1


def test_additive_real_martingale_mean():
    vals = _means(lambda f: obs.additive_real_martingale(f, 0.8), 4000, 8, 6.0)
    _within(vals, 1.0, 3.5)
    assert np.all(vals > 0)


def test_derivative_martingale_mean_zero():
    vals = _means(lambda f: obs.derivative_martingale(f), 6000, 9, 4.0)
    _within(vals, 0.0, 4)


def test_seneta_heyde_mean_root_t():
    vals = _means(lambda f: obs.seneta_heyde(f), 6000, 10, 4.0)
    _within(vals, 2.0, 3.5)


def test_second_moment_of_normalized_sum():
    beta, t = Beta(0.5, 1.0), 5.0
    vals = _means(lambda f: abs(obs.normalized_partition(f, beta)) ** 2, 6000, 11, t)
    target = second_moment_normalized(MomentOracleInput(0.5, 1.0, 0.0, t))
    _within(vals, target, 4)


@pytest.mark.parametrize("t", [4.0, 6.0, 8.0])
def test_real_martingale_variance_tracks_oracle(t):
    # theta = 0.6 sits inside the L2 region theta < 1, so the variance stays bounded in t
    theta = 0.6
    v = _means(lambda f: obs.additive_real_martingale(f, theta, t), 3000, 12, t)
    c = 1.0 - theta ** 2
    expected = second_moment_normalized(MomentOracleInput(theta, 0.0, 0.0, t)) * math.exp(-c * t) - 1.0
    assert expected < 2.0 / c - 1.0
    assert abs(v.var(ddof=1) / expected - 1.0) < 0.2


def test_constrained_equals_unconstrained_when_nothing_excluded():
    f = _forest(6.0, 13)
    beta = Beta(3.0, 0.5)
    c = obs.constrained_partition(f, beta, r=6.0, gamma=0.75, A=100.0, rng=substream(13, 1))
    assert c == obs.normalized_partition(f, beta)


def test_constrained_needs_stream_and_positive_A():
    f = _forest(2.0, 14)
    with pytest.raises(ValueError):
        obs.constrained_partition(f, Beta(0.5, 1.0), r=1.0)
    with pytest.raises(ValueError):
        obs.constrained_partition(f, Beta(0.5, 1.0), r=1.0, A=0.0, rng=substream(0, 0))
    with pytest.raises(ValueError, match="invalid barrier exponent"):
        obs.constrained_partition(f, Beta(0.5, 1.0), r=1.0, gamma=1.2, rng=substream(0, 0))


def test_constrained_gap_shrinks_with_A():
    beta, t, n = Beta(0.5, 1.0), 8.0, 300
    fractions, second = [], []
    for A in (2.0, 4.0, 8.0):
        big, m2 = 0, 0.0
        for i in range(n):
            f = _forest(t, 15, i)
            full = obs.normalized_partition(f, beta)
            # same stream for every A, so the path marks coincide and only the endpoint cut moves
            c = obs.constrained_partition(f, beta, r=1.0, A=A, rng=substream(15, 1, i))
            big += abs(full - c) > 0.1
            m2 += abs(c) ** 2
        fractions.append(big / n)
        second.append(m2 / n)
    assert fractions[0] >= fractions[1] >= fractions[2]
    assert second[0] <= second[1] <= second[2]
    assert second[2] <= second_moment_normalized(MomentOracleInput(0.5, 1.0, 0.0, t)) * 1.5


def test_beta_parse_and_format():
    assert Beta.parse("0.5+1.0i") == Beta(0.5, 1.0)
    assert Beta.parse("0.5-1i") == Beta(0.5, -1.0)
    assert Beta.parse("2i") == Beta(0.0, 2.0)
    assert Beta.parse("1.5") == Beta(1.5, 0.0)
    assert Beta.parse(str(Beta(0.1, -0.3))) == Beta(0.1, -0.3)
    with pytest.raises(ValueError):
        Beta.parse("abc")
    with pytest.raises(ValueError):
        Beta(float("nan"), 0.0)
