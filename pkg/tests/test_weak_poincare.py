import math

import numpy as np
import pytest

from sandwich_gap import constructions as C
from sandwich_gap import fixtures as fx
from sandwich_gap import measure_kernel as mk
from sandwich_gap import verify_suite as vs
from sandwich_gap import weak_poincare as wp


def osc_ratio_max(K, mu, s, g):
    """Brute force ``max (var(g) - s E(g)) / osc(g)^2`` over the rows of ``g``."""
    mu = mk._as_measure(mu)
    w = mu.weights
    L = mk.dirichlet_bilinear(K, mu)
    gc = g - (g @ w)[:, None]
    var = np.einsum("mi,i,mi->m", gc, w, gc)
    en = np.einsum("mi,ij,mj->m", g, L, g)
    osc = g.max(axis=1) - g.min(axis=1)
    ok = osc > 1e-9
    return float(np.max((var[ok] - s * en[ok]) / osc[ok] ** 2))


# -- oscillation norm -------------------------------------------------------

def test_osc_norm_examples():
    assert wp.osc_norm([1.0, -3.0, 0.5], mk.FiniteMeasure.uniform(3)) == pytest.approx(4.0)
    assert wp.osc_norm([7.0, 7.0], mk.FiniteMeasure.uniform(2)) == 0.0


def test_osc_norm_ignores_null_states():
    mu = mk.FiniteMeasure(np.array([0.5, 0.0, 0.5]))
    assert wp.osc_norm([0.0, 100.0, 1.0], mu) == pytest.approx(1.0)


# -- tight local profiles ---------------------------------------------------

def test_popoviciu_two_points():
    mu = mk.FiniteMeasure.uniform(2)
    assert wp.exact_local_alpha(np.eye(2), mu, 0.0) == pytest.approx(0.25, abs=1e-12)
    assert wp.exact_local_alpha(np.eye(2), mu, 1e6) == pytest.approx(0.25, abs=1e-12)


def test_popoviciu_bound_at_zero():
    rng = fx.rng_for(1)
    for n in range(2, 7):
        mu = mk.FiniteMeasure(fx.random_measure(rng, n))
        a = wp.exact_local_alpha(fx.reversible_for(rng, mu), mu, 0.0)
        assert 0.0 < a <= 0.25 + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_vanishes_beyond_inverse_gap(seed):
    rng = fx.rng_for(seed, 2)
    mu = mk.FiniteMeasure(fx.random_measure(rng, 5))
    K = fx.reversible_for(rng, mu, sparsity=0.0)
    g = mk.right_gap(K, mu)
    assert wp.exact_local_alpha(K, mu, 1.0 / g) == pytest.approx(0.0, abs=1e-12)
    assert wp.exact_local_alpha(K, mu, 0.5 / g) > 0


def test_random_box_oracle_three_point_lazy():
    mu = mk.FiniteMeasure(np.array([0.2, 0.3, 0.5]))
    K = mk.lazy_resampling_kernel(mu, 0.5)
    exact = wp.exact_local_alpha(K, mu, 1.0)
    # E(g) = var(g) / 2, so alpha(1) = max var / (2 osc^2) = 1/8
    assert exact == pytest.approx(0.125, abs=1e-12)
    rng = np.random.default_rng(0)
    g = rng.random((1_000_000, 3))
    approx = osc_ratio_max(K, mu, 1.0, g)
    assert approx <= exact + 1e-12
    assert approx >= exact - 5e-3


@pytest.mark.parametrize("seed", range(6))
def test_exact_dominates_random_functions(seed):
    rng = fx.rng_for(seed, 3)
    n = int(rng.integers(2, 7))
    mu = mk.FiniteMeasure(fx.random_measure(rng, n))
    K = fx.reversible_for(rng, mu)
    g = np.concatenate([rng.normal(size=(20000, n)), (rng.random((4000, n)) < 0.5).astype(float)])
    for s in (0.0, 0.3, 1.0, 4.0):
        a = wp.exact_local_alpha(K, mu, s)
        assert osc_ratio_max(K, mu, s, g) <= a + 1e-10


def test_profile_monotone_and_convex():
    rng = fx.rng_for(4)
    mu = mk.FiniteMeasure(fx.random_measure(rng, 6))
    prof = wp.tight_profile(fx.reversible_for(rng, mu), mu)
    assert prof.is_nonincreasing()
    assert prof.interp == "linear" and prof.vanishing
    g, v = prof.s_grid, prof.values
    # second differences are nonnegative
    d = np.diff(v) / np.diff(g)
    assert np.all(np.diff(d) >= -1e-9)


def test_linear_interpolation_is_upper_bound():
    rng = fx.rng_for(5)
    mu = mk.FiniteMeasure(fx.random_measure(rng, 5))
    K = fx.reversible_for(rng, mu)
    prof = wp.tight_profile(K, mu)
    s = np.geomspace(0.02, 50.0, 40)
    exact = wp.exact_local_alpha(K, mu, s)
    assert np.all(np.array([prof(x) for x in s]) >= exact - 1e-12)


def test_exactness_limit():
    rng = fx.rng_for(6)
    mu = mk.FiniteMeasure(fx.random_measure(rng, wp.EXACT_LIMIT + 1))
    K = fx.reversible_for(rng, mu)
    with pytest.raises(wp.ExactnessLimitError) as err:
        wp.exact_local_alpha(K, mu, 1.0)
    assert err.value.n == wp.EXACT_LIMIT + 1
    assert err.value.lower_bound >= 0
    val, exact = wp.local_alpha_with_flag(K, mu, 1.0)
    assert not exact and val == err.value.lower_bound


def test_exactness_limit_uses_support():
    w = np.zeros(12)
    w[:4] = 0.25
    K = np.eye(12)
    val, exact = wp.local_alpha_with_flag(K, w, 1.0)
    assert exact and val == pytest.approx(0.25)


def test_negative_s_rejected():
    with pytest.raises(ValueError):
        wp.exact_local_alpha(np.eye(2), [0.5, 0.5], -1.0)


# -- aggregation and composition --------------------------------------------

def test_aggregate_single_slice():
    J = np.array([[0.2], [0.3], [0.5]])
    Q = mk.lazy_resampling_kernel(J[:, 0], 0.4)
    con = C.from_data_augmentation(J, [Q])
    s = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(wp.aggregate_alpha(con.system, s), wp.exact_local_alpha(Q, J[:, 0], s))


def test_calculus_oracle():
    a, b, c0 = 2.0, 0.5, 0.7
    beta = wp.DecayProfile.from_rule(lambda s: a / s)
    ab = wp.DecayProfile.from_rule(lambda s: b / s)
    for s in (1.0, 10.0, 1e3):
        val, s1 = wp.compose_point(beta, ab, c0, s)
        assert val == pytest.approx(3 * (a * a * b / (4 * c0 * s)) ** (1 / 3), rel=1e-6)
        assert s1 == pytest.approx((a * c0 * s / (2 * b)) ** (1 / 3), rel=1e-3)


def test_popoviciu_branch_below_one():
    beta = wp.DecayProfile.from_rule(lambda s: 0.01 / max(s, 1e-3))
    ab = wp.DecayProfile.from_rule(lambda s: 0.01 / max(s, 1e-3))
    val, s1 = wp.compose_point(beta, ab, 1.0, 0.5)
    assert val == 0.25 and s1 is None
    big = wp.DecayProfile.from_rule(lambda s: 0.3)
    assert wp.compose_point(big, big, 1.0, 0.5)[0] == pytest.approx(0.6)


def test_compose_is_nonincreasing():
    beta = wp.DecayProfile.from_rule(lambda s: 1 / (1 + s))
    ab = wp.DecayProfile.from_rule(lambda s: 0.1 * math.exp(-s))
    bt = wp.compose_beta(beta, ab, 0.5)
    assert bt.is_nonincreasing()


def test_decay_profile_evaluation():
    p = wp.DecayProfile(np.array([1.0, 2.0, 4.0]), np.array([0.2, 0.1, 0.05]))
    assert p(0.5) == 0.25
    assert p(3.0) == 0.1
    assert p(100.0) == 0.05
    q = wp.DecayProfile(p.s_grid, p.values, interp="linear")
    assert q(3.0) == pytest.approx(0.075)
    with pytest.raises(ValueError):
        wp.DecayProfile(np.array([2.0, 1.0]), np.array([0.1, 0.2]))


# -- end to end -------------------------------------------------------------

def _da(seed, zero_gap_slice=False):
    rng = fx.rng_for(seed, 7)
    J = fx.random_joint(rng, 4, 3)
    Qz = [fx.slice_kernel(rng, "metropolis", J[:, z] / J[:, z].sum()) for z in range(3)]
    if zero_gap_slice:
        Qz[0] = np.eye(4)
    return C.from_data_augmentation(J, Qz).system


@pytest.mark.parametrize("seed", range(5))
def test_lemma_on_da(seed):
    s = _da(seed)
    reps = wp.verify_weak_lemma(s, s_grid=2.0 ** np.arange(0, 11))
    assert reps and all(r.passed for r in reps)
    assert reps[0].claim_id == "weak.lemma"


@pytest.mark.parametrize("seed", range(5))
def test_composition_on_generated_da(seed):
    s = vs.gen_da(seed, 7).system
    reps, bt, beta, ab = wp.verify_weak_composition(s, seed=seed)
    assert all(r.passed for r in reps)
    assert bt.is_nonincreasing()


def test_zero_gap_slice_plateaus():
    s = _da(1, zero_gap_slice=True)
    reps, bt, beta, ab = wp.verify_weak_composition(s)
    assert all(r.passed for r in reps)
    assert not ab.vanishing and not bt.vanishing
    assert ab(2.0 ** 20) > 0
    assert bt.values[-1] > 0.1 * bt.values[np.searchsorted(bt.s_grid, 1.0)]


def test_positive_slice_gaps_vanish():
    s = _da(2)
    assert np.all(s.slice_gaps() > 0)
    reps, bt, beta, ab = wp.verify_weak_composition(s)
    assert all(r.passed for r in reps)
    assert bt.vanishing
    assert bt(2.0 ** 20) < 1e-3 * bt(1.0)


def test_osc_contraction_holds_for_markov_P():
    s = _da(3)
    F = wp.function_suite(np.random.default_rng(0), s.pi)
    assert wp.osc_contraction_margin(s, F) >= -1e-12
