import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sandwich_gap import fixtures as fx
from sandwich_gap import measure_kernel as mk

BD = np.array([[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]])
BD_MU = np.array([0.25, 0.5, 0.25])
FLIP = np.array([[0.0, 1.0], [1.0, 0.0]])


# -- measures and functions -------------------------------------------------

def test_measure_validation():
    with pytest.raises(ValueError):
        mk.FiniteMeasure([0.5, 0.6])
    with pytest.raises(ValueError):
        mk.FiniteMeasure([1.5, -0.5])
    with pytest.raises(mk.DimensionError):
        mk.FiniteMeasure([])
    mu = mk.FiniteMeasure([0.2, 0.0, 0.8])
    assert list(mu.support) == [0, 2]
    assert not mu.full_support


def test_l0_basis_is_orthonormal_and_centered():
    mu = mk.FiniteMeasure(fx.random_measure(fx.rng_for(3), 6))
    B = mu.l0_function_basis
    G = (B * mu.weights[:, None]).T @ B
    np.testing.assert_allclose(G, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(mu.weights @ B, 0.0, atol=1e-12)


def test_centered_function_rejects_uncentered():
    mu = mk.FiniteMeasure.uniform(3)
    with pytest.raises(ValueError):
        mk.CenteredFunction(np.array([1.0, 0.0, 0.0]), mu)
    f = mk.CenteredFunction.from_values([1.0, 0.0, 0.0], mu)
    assert abs(mu.mean(f.values)) < 1e-15


# -- reversibility ----------------------------------------------------------

def test_reversibility_examples():
    mu = fx.random_measure(fx.rng_for(1), 4)
    assert mk.is_reversible(np.eye(4), mu)
    assert mk.is_reversible(mk.resampling_kernel(mu), mu)
    assert mk.is_reversible(BD, BD_MU)
    assert not mk.is_reversible(BD, [1 / 3] * 3)


def test_reversibility_dimension_mismatch():
    with pytest.raises(mk.DimensionError):
        mk.is_reversible(np.eye(3), [0.5, 0.5])


# -- gaps and norms ---------------------------------------------------------

def test_gap_examples():
    mu = fx.random_measure(fx.rng_for(2), 5)
    assert mk.right_gap(np.eye(5), mu) == pytest.approx(0.0, abs=1e-12)
    assert mk.left_gap(np.eye(5), mu) == pytest.approx(2.0, abs=1e-12)
    assert mk.right_gap(mk.resampling_kernel(mu), mu) == pytest.approx(1.0, abs=1e-12)
    assert mk.operator_norm_L0(mk.resampling_kernel(mu), mu) == pytest.approx(0.0, abs=1e-7)


def test_birth_death_spectrum():
    # eigenvalues {1, 0.5, 0}
    np.testing.assert_allclose(np.sort(mk.l0_spectrum(BD, BD_MU)), [0.0, 0.5], atol=1e-12)
    assert mk.right_gap(BD, BD_MU) == pytest.approx(0.5, abs=1e-12)
    assert mk.left_gap(BD, BD_MU) == pytest.approx(1.0, abs=1e-12)
    assert mk.operator_norm_L0(BD, BD_MU) == pytest.approx(0.5, abs=1e-12)


def test_flip_kernel():
    mu = [0.5, 0.5]
    assert mk.left_gap(FLIP, mu) == pytest.approx(0.0, abs=1e-12)
    assert mk.operator_norm_L0(FLIP, mu) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(mk.power(FLIP, 2), np.eye(2))


def test_gap_rejects_zero_weights_and_nonreversible():
    with pytest.raises(mk.ZeroWeightError):
        mk.right_gap(np.eye(3), [0.5, 0.5, 0.0])
    with pytest.raises(mk.NotSelfAdjointError):
        mk.right_gap(BD, [1 / 3] * 3)


def test_norm_requires_stationarity():
    with pytest.raises(ValueError):
        mk.operator_norm_L0(BD, [1 / 3] * 3)


def test_one_state_conventions():
    K = np.ones((1, 1))
    assert mk.right_gap(K, [1.0]) == 1.0
    assert mk.left_gap(K, [1.0]) == 1.0
    assert mk.operator_norm_L0(K, [1.0]) == 0.0


@pytest.mark.parametrize("seed", range(50))
def test_gap_norm_identity(seed):
    rng = fx.rng_for(seed, 40)
    n = int(rng.integers(2, 15))
    K, mu = fx.random_reversible(rng, n, sparsity=0.3)
    g, gl, nrm = mk.right_gap(K, mu), mk.left_gap(K, mu), mk.operator_norm_L0(K, mu)
    assert min(g, gl) == pytest.approx(1.0 - nrm, abs=1e-9)
    P = fx.psd_for(rng, mu)
    assert mk.right_gap(P, mu) + mk.operator_norm_L0(P, mu) >= 1.0 - 1e-9
    assert mk.left_gap(P, mu) >= 1.0 - 1e-9


# -- Dirichlet forms --------------------------------------------------------

def test_dirichlet_examples():
    f = np.array([1.0, 0.0, -1.0])
    assert mk.dirichlet_form(BD, BD_MU, f) == pytest.approx(0.25, abs=1e-14)
    assert mk.dirichlet_form(BD, BD_MU, np.zeros(3)) == 0.0
    assert mk.dirichlet_form(np.eye(3), BD_MU, f) == 0.0


def test_dirichlet_rejects_uncentered():
    with pytest.raises(ValueError):
        mk.dirichlet_form(BD, BD_MU, np.ones(3))


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 40))
def test_dirichlet_formulas_agree(seed, n):
    rng = fx.rng_for(seed, 41)
    K, mu = fx.random_reversible(rng, n, sparsity=0.4)
    f = mu.center(rng.normal(size=n))
    val = mk.dirichlet_form(K, mu, f)
    L = mk.dirichlet_bilinear(K, mu)
    assert f @ L @ f == pytest.approx(val, abs=1e-10 * max(1.0, mu.norm2(f)))


def test_dirichlet_bilinear_allows_zero_weights():
    L = mk.dirichlet_bilinear(np.eye(3), [0.5, 0.5, 0.0])
    np.testing.assert_array_equal(L, 0.0)


# -- square roots and algebra -----------------------------------------------

def test_square_root_examples():
    mu = mk.FiniteMeasure(fx.random_measure(fx.rng_for(5), 4))
    R = mk.psd_square_root(np.eye(4), mu).matrix
    np.testing.assert_allclose(R, np.eye(4), atol=1e-12)
    Pi = mk.resampling_kernel(mu)
    np.testing.assert_allclose(mk.psd_square_root(Pi, mu).matrix, Pi, atol=1e-9)
    M = mk.lazy_resampling_kernel(mu, 0.5)
    R = mk.psd_square_root(M, mu).matrix
    np.testing.assert_allclose(R @ R, M, atol=1e-12)
    # {1, 1/2} -> {1, 1/sqrt 2}
    np.testing.assert_allclose(mk.l0_spectrum(R, mu), np.full(3, 2 ** -0.5), atol=1e-12)


def test_square_root_rejects_indefinite():
    with pytest.raises(mk.NotPSDError):
        mk.psd_square_root(FLIP, [0.5, 0.5])


@pytest.mark.parametrize("seed", range(20))
def test_square_root_random_psd(seed):
    rng = fx.rng_for(seed, 42)
    mu = fx.random_measure(rng, int(rng.integers(2, 12)))
    M = fx.psd_for(rng, mu)
    R = mk.psd_square_root(M, mu).matrix
    np.testing.assert_allclose(R @ R, M, atol=1e-9)


def test_adjoint_examples():
    K, mu = fx.random_reversible(fx.rng_for(6), 5)
    np.testing.assert_allclose(mk.adjoint(K, mu), K, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_gap_of_JstarJ_matches_JJstar(seed):
    rng = fx.rng_for(seed, 43)
    n, m = 5, int(rng.integers(2, 7))
    rho = fx.random_measure(rng, n)
    table = rho[:, None] * rng.dirichlet(np.ones(m), size=n)
    rho_p = table.sum(axis=0)
    J = (table / rho_p[None, :]).T  # maps functions on [n] to functions on [m]
    Js = mk.adjoint(J, rho, rho_p)
    f, g = rng.normal(size=n), rng.normal(size=m)
    assert np.sum(rho_p * (J @ f) * g) == pytest.approx(np.sum(rho * f * (Js @ g)), abs=1e-12)
    assert mk.right_gap(Js @ J, rho) == pytest.approx(mk.right_gap(J @ Js, rho_p), abs=1e-9)


def test_compose_checks_dimensions():
    with pytest.raises(mk.DimensionError):
        mk.compose(np.eye(2), np.eye(3))
    np.testing.assert_array_equal(mk.compose(BD, np.eye(3)), BD)


# -- asymptotic variance ----------------------------------------------------

def test_asym_variance_examples():
    mu = mk.FiniteMeasure(fx.random_measure(fx.rng_for(7), 4))
    f = np.array([1.0, -2.0, 0.5, 3.0])
    var = mu.variance(f)
    assert mk.asym_variance_exact(mk.resampling_kernel(mu), mu, f) == pytest.approx(var, abs=1e-12)
    lazy = mk.lazy_resampling_kernel(mu, 0.5)
    assert mk.asym_variance_exact(lazy, mu, f) == pytest.approx(3 * var, abs=1e-12)
    # birth-death, f = (1, 0, -1): Kf = f/2 gives 0.5 * (2/(1 - 1/2) - 1) = 1.5
    assert mk.asym_variance_exact(BD, BD_MU, [1.0, 0.0, -1.0]) == pytest.approx(1.5, abs=1e-12)


def test_asym_variance_no_gap():
    with pytest.raises(mk.NoSpectralGapError):
        mk.asym_variance_exact(np.eye(3), BD_MU, [1.0, 0.0, 0.0])
    with pytest.raises(mk.NoSpectralGapError):
        mk.asym_variance_series(FLIP, [0.5, 0.5], [1.0, 0.0])


@pytest.mark.parametrize("seed", range(30))
def test_asym_variance_series_matches(seed):
    rng = fx.rng_for(seed, 44)
    n = int(rng.integers(2, 20))
    K, mu = fx.random_reversible(rng, n)
    f = rng.normal(size=n)
    exact = mk.asym_variance_exact(K, mu, f)
    assert mk.asym_variance_series(K, mu, f) == pytest.approx(exact, abs=1e-8 * max(1.0, abs(exact)))


# -- support restriction ----------------------------------------------------

@pytest.mark.parametrize("seed", range(20))
def test_padding_leaves_spectrum_unchanged(seed):
    rng = fx.rng_for(seed, 45)
    n = int(rng.integers(2, 8))
    K1, mu1 = fx.random_reversible(rng, n)
    mapping = rng.permutation(n + 3)[:n]
    K, mu = mk.embed(K1, mu1, mapping, n + 3)
    with pytest.raises(mk.ZeroWeightError):
        mk.right_gap(K, mu)
    assert mk.gap_restricted(K, mu) == pytest.approx(mk.right_gap(K1, mu1), abs=1e-12)
    assert mk.left_gap_restricted(K, mu) == pytest.approx(mk.left_gap(K1, mu1), abs=1e-12)
    assert mk.norm_restricted(K, mu) == pytest.approx(mk.operator_norm_L0(K1, mu1), abs=1e-12)


def test_restriction_detects_leak():
    K = np.array([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError):
        mk.restrict_to_support(K, [1.0, 0.0])


# -- serialization ----------------------------------------------------------

def test_text_round_trip_is_exact():
    K, mu = fx.random_reversible(fx.rng_for(8), 7)
    K2, mu2 = mk.kernel_from_text(mk.kernel_to_text(K, mu))
    np.testing.assert_array_equal(K, K2)
    np.testing.assert_array_equal(mu.weights, mu2.weights)
    buf = io.StringIO()
    mk.write_kernel(buf, BD, BD_MU)
    assert buf.getvalue().splitlines()[0] == "3"


def test_vectorized_asym_variances():
    rng = fx.rng_for(40)
    mu = mk.FiniteMeasure(fx.random_measure(rng, 6))
    K = fx.reversible_for(rng, mu, sparsity=0.0)
    F = rng.normal(size=(6, 5))
    v = mk.asym_variances(K, mu, F)
    for j in range(5):
        assert v[j] == pytest.approx(mk.asym_variance_exact(K, mu, F[:, j]), rel=1e-10)
