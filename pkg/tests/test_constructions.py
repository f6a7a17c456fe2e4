import numpy as np
import pytest

from sandwich_gap import constructions as C
from sandwich_gap import fixtures as fx
from sandwich_gap import measure_kernel as mk
from sandwich_gap import sandwich as sw


def all_pass(con):
    bad = [r for r in con.reports if r.failed]
    assert not bad, bad


def rep(con, claim):
    hits = [r for r in con.reports if r.claim_id == claim]
    assert hits, f"no report {claim}"
    return hits[0]


def gap(K, mu):
    return mk.right_gap(K, mu)


# -- partitions -------------------------------------------------------------

def test_partition_identity_N():
    rng = fx.rng_for(1)
    pi = mk.FiniteMeasure(fx.random_measure(rng, 6))
    M = fx.psd_for(rng, pi)
    con = C.from_partition(M, np.eye(6), pi, C.Partition(np.array([0, 0, 1, 1, 2, 2])))
    all_pass(con)
    assert min(con.extras["gap_H"]) == pytest.approx(0.0, abs=1e-12)


def test_partition_resampling_M():
    rng = fx.rng_for(2)
    pi = mk.FiniteMeasure(fx.random_measure(rng, 7))
    M = mk.resampling_kernel(pi)
    N = fx.reversible_for(rng, pi)
    part = C.Partition(np.array([0, 1, 2, 0, 1, 2, 2]))
    con = C.from_partition(M, N, pi, part)
    all_pass(con)
    varpi = np.array([pi.weights[part.assignment == z].sum() for z in range(3)])
    np.testing.assert_allclose(con.extras["M0"], mk.resampling_kernel(varpi), atol=1e-10)
    assert gap(con.S, pi) == pytest.approx(1.0, abs=1e-9)


def test_partition_random_psd():
    rng = fx.rng_for(3)
    pi = mk.FiniteMeasure(fx.random_measure(rng, 12))
    M = fx.psd_for(rng, pi)
    con = C.from_partition(M, M, pi, C.Partition(np.arange(12) % 3))
    all_pass(con)
    assert all(r.passed for r in sw.check_axioms(con.system))


def test_partition_rejects_empty_block():
    with pytest.raises(ValueError):
        C.Partition(np.array([0, 0, 2]))


def test_partition_rejects_indefinite_M():
    pi = mk.FiniteMeasure.uniform(2)
    with pytest.raises(mk.NotPSDError):
        C.from_partition(np.array([[0.0, 1.0], [1.0, 0.0]]), np.eye(2), pi, C.Partition(np.array([0, 1])))


# -- overlapping covers -----------------------------------------------------

def test_cover_statistics():
    cov = C.Cover(np.array([[1, 1, 1, 0, 0], [0, 0, 1, 1, 1]], dtype=bool))
    assert cov.Theta == 2
    np.testing.assert_array_equal(cov.L, [1, 1, 2, 1, 1])
    assert cov.Delta(np.full(5, 0.2)) == pytest.approx(1.2)


def test_cover_rejects_uncovered_state():
    with pytest.raises(ValueError):
        C.Cover(np.array([[1, 1, 0], [0, 1, 0]], dtype=bool))


def test_disjoint_cover_keeps_pi():
    rng = fx.rng_for(4)
    pi0 = mk.FiniteMeasure(fx.random_measure(rng, 6))
    N = fx.reversible_for(rng, pi0)
    cov = C.Cover(np.array([[1, 1, 1, 0, 0, 0], [0, 0, 0, 1, 1, 1]], dtype=bool))
    con = C.from_overlap_cover(N, pi0, cov)
    all_pass(con)
    assert cov.Theta == 1
    np.testing.assert_allclose(con.extras["pi"].weights, pi0.weights, atol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_two_blocks_one_shared_state(seed):
    rng = fx.rng_for(seed, 5)
    pi0 = mk.FiniteMeasure(fx.random_measure(rng, 5))
    N = fx.reversible_for(rng, pi0, sparsity=0.0)
    cov = C.Cover(np.array([[1, 1, 1, 0, 0], [0, 0, 1, 1, 1]], dtype=bool))
    con = C.from_overlap_cover(N, pi0, cov)
    all_pass(con)
    for step in ("step1", "step2", "step3", "prop"):
        assert any(r.claim_id.endswith(step) for r in con.reports)


def test_overlap_resampling_N():
    pi0 = mk.FiniteMeasure(fx.random_measure(fx.rng_for(6), 5))
    cov = C.Cover(np.array([[1, 1, 1, 0, 0], [0, 1, 1, 1, 1]], dtype=bool))
    con = C.from_overlap_cover(mk.resampling_kernel(pi0), pi0, cov)
    all_pass(con)
    r = [r for r in con.reports if r.claim_id.endswith("prop")][0]
    assert r.lhs == pytest.approx(1.0, abs=1e-9) and r.rhs <= 1.0


# -- data augmentation ------------------------------------------------------

def test_da_hand_fixture():
    J = np.array([[0.4, 0.1], [0.1, 0.4]])
    con = C.from_data_augmentation(J, [mk.resampling_kernel(J[:, z] / 0.5) for z in range(2)])
    all_pass(con)
    np.testing.assert_allclose(con.S, con.Sbar, atol=1e-12)
    assert gap(con.Sbar, con.system.pi) == pytest.approx(0.64, abs=1e-12)


def test_da_product_joint():
    J = np.outer([0.2, 0.3, 0.5], [0.6, 0.4])
    rng = fx.rng_for(7)
    Qz = [fx.reversible_for(rng, J[:, z] / J[:, z].sum()) for z in range(2)]
    con = C.from_data_augmentation(J, Qz)
    all_pass(con)
    assert gap(con.Sbar, con.system.pi) == pytest.approx(1.0, abs=1e-12)
    assert gap(con.S, con.system.pi) >= con.system.kappa_dagger - 1e-12


def test_da_seeded_lazy():
    rng = fx.rng_for(8)
    J = fx.random_joint(rng, 6, 4)
    Qz = [mk.lazy_resampling_kernel(J[:, z] / J[:, z].sum(), rng.uniform(0.1, 0.9)) for z in range(4)]
    all_pass(C.from_data_augmentation(J, Qz))


def test_da_variance_identity_reported():
    rng = fx.rng_for(9)
    J = fx.random_joint(rng, 4, 3, zero_frac=0.3)
    Qz = [fx.slice_kernel(rng, "metropolis", J[:, z] / J[:, z].sum()) for z in range(3)]
    con = C.from_data_augmentation(J, Qz)
    all_pass(con)
    assert any("variance_identity" in r.claim_id for r in con.reports)


# -- random-scan Gibbs ------------------------------------------------------

def test_gibbs_exact_conditionals():
    pind = np.array([[0.3, 0.1], [0.2, 0.4]])
    con = C.from_random_scan_gibbs(pind, lambda i, u: mk.resampling_kernel(C.gibbs_conditional(pind, i, u)),
                                   [0.5, 0.5])
    all_pass(con)
    np.testing.assert_allclose(con.S, con.Sbar, atol=1e-12)


def test_gibbs_lazy_is_affine_in_ideal():
    pind = np.array([[0.35, 0.15], [0.15, 0.35]])
    eps = 0.3
    con = C.from_random_scan_gibbs(
        pind, lambda i, u: mk.lazy_resampling_kernel(C.gibbs_conditional(pind, i, u), eps), [0.4, 0.6])
    all_pass(con)
    np.testing.assert_allclose(con.S, (1 - eps) * np.eye(4) + eps * con.Sbar, atol=1e-12)
    pi = con.system.pi
    assert gap(con.S, pi) == pytest.approx(eps * gap(con.Sbar, pi), abs=1e-12)


def test_gibbs_three_coordinates():
    rng = fx.rng_for(10)
    pind = rng.exponential(size=(3, 3, 2)) + 0.05
    pind /= pind.sum()
    kinds = ["lazy", "metropolis", "psd", "random"]
    con = C.from_random_scan_gibbs(
        pind, lambda i, u: fx.slice_kernel(rng, kinds[(i + sum(u)) % 4], C.gibbs_conditional(pind, i, u)),
        [0.2, 0.3, 0.5])
    all_pass(con)


# -- localization -----------------------------------------------------------

def test_trivial_tree():
    pi = mk.FiniteMeasure(fx.random_measure(fx.rng_for(11), 4))
    ones = np.ones(4)
    tree = C.LocalizationTree(pi, (((((0,), 1.0, ones),)), (((0, 0), 1.0, ones),)))
    con = C.from_localization(tree)
    all_pass(con)
    np.testing.assert_allclose(con.extras["K"][1], mk.resampling_kernel(pi), atol=1e-14)
    assert con.extras["gaps"][1] == pytest.approx(1.0)
    assert con.extras["kappas"] == [pytest.approx(1.0)]


def test_full_pinning():
    tree = C.pinning_tree(np.full((2, 2), 0.25), [0, 1])
    con = C.from_localization(tree)
    all_pass(con)
    np.testing.assert_allclose(con.extras["K"][2], np.eye(4), atol=1e-14)
    assert con.extras["gaps"][2] == pytest.approx(0.0, abs=1e-12)
    assert con.extras["kappas"][-1] == pytest.approx(0.0, abs=1e-12)


def test_one_coordinate_pinning():
    tree = C.pinning_tree(np.full((2, 2), 0.25), [0])
    con = C.from_localization(tree)
    all_pass(con)
    # K_1 resamples the free coordinate within each pinned block
    K1 = con.extras["K"][1]
    np.testing.assert_allclose(K1, np.kron(np.eye(2), np.full((2, 2), 0.5)), atol=1e-14)
    assert con.extras["gaps"][1] == pytest.approx(0.0, abs=1e-12)
    bil = [r for r in con.reports if r.claim_id.startswith("localization.bilinear")]
    assert bil and all(abs(r.margin) <= 1e-10 for r in bil)


@pytest.mark.parametrize("seed", range(10))
def test_random_trees(seed):
    rng = fx.rng_for(seed, 12)
    pi = mk.FiniteMeasure(fx.random_measure(rng, 6))
    tree = C.random_localization_tree(rng, pi, depth=3, branching=2, pin=seed % 2 == 0)
    assert all(r.passed for r in tree.check())
    all_pass(C.from_localization(tree))


def test_broken_martingale_detected():
    pi = mk.FiniteMeasure.uniform(2)
    lv0 = (((0,), 1.0, np.ones(2)),)
    lv1 = (((0, 0), 0.5, np.array([2.0, 0.0])), ((0, 1), 0.5, np.array([2.0, 0.0])))
    tree = C.LocalizationTree(pi, (lv0, lv1))
    assert not all(r.passed for r in tree.check())


# -- grid hit-and-run -------------------------------------------------------

def _grid(seed, m=4):
    rng = fx.rng_for(seed, 13)
    return rng, rng.exponential(size=(m, m)) + 0.05


def test_grid_exact_lines():
    _, pg = _grid(1)

    def H(w, ell):
        cond = pg[ell] if w == 0 else pg[:, ell]
        return mk.resampling_kernel(cond / cond.sum())

    con = C.from_grid_hit_and_run(pg, H)
    all_pass(con)
    np.testing.assert_allclose(con.S, con.Sbar, atol=1e-12)


def test_grid_lazy_lines():
    _, pg = _grid(2)
    eps = 0.4

    def H(w, ell):
        cond = pg[ell] if w == 0 else pg[:, ell]
        return mk.lazy_resampling_kernel(cond / cond.sum(), eps)

    con = C.from_grid_hit_and_run(pg, H)
    all_pass(con)
    pi = con.system.pi
    assert gap(con.S, pi) == pytest.approx(eps * gap(con.Sbar, pi), abs=1e-12)


def test_grid_metropolis_lines():
    _, pg = _grid(3)

    def H(w, ell):
        cond = pg[ell] if w == 0 else pg[:, ell]
        return fx.metropolis(cond / cond.sum())

    con = C.from_grid_hit_and_run(pg, H, nu=(0.3, 0.7))
    all_pass(con)
    assert mk.is_reversible(con.S, con.system.pi)


# -- doubly intractable -----------------------------------------------------

def _cond(phi):
    c1 = [phi[:, j] / phi[:, j].sum() for j in range(phi.shape[1])]
    c2 = [phi[i] / phi[i].sum() for i in range(phi.shape[0])]
    return c1, c2


def test_doubly_exact_conditionals():
    phi = np.array([[0.3, 0.1], [0.2, 0.4]])
    c1, c2 = _cond(phi)
    con = C.from_doubly_intractable(phi, [mk.resampling_kernel(w) for w in c1],
                                    [mk.resampling_kernel(w) for w in c2])
    all_pass(con)
    np.testing.assert_allclose(con.extras["S1"], con.extras["S2"], atol=1e-12)
    assert con.extras["norm_H1"] == pytest.approx(0.0, abs=1e-7)


def test_doubly_lazy():
    phi = np.array([[0.4, 0.1], [0.1, 0.4]])
    c1, c2 = _cond(phi)
    e1, e2 = 0.3, 0.6
    con = C.from_doubly_intractable(phi, [mk.lazy_resampling_kernel(w, e1) for w in c1],
                                    [mk.lazy_resampling_kernel(w, e2) for w in c2])
    all_pass(con)
    assert con.extras["norm_H1"] == pytest.approx(1 - e1, abs=1e-12)
    assert con.extras["norm_H2"] == pytest.approx(1 - e2, abs=1e-12)
    assert rep(con, "doubly.core_gap_vs_norm").passed


def test_doubly_seeded_metropolis():
    rng = fx.rng_for(14)
    phi = rng.exponential(size=(5, 4)) + 0.05
    phi /= phi.sum()
    c1, c2 = _cond(phi)
    con = C.from_doubly_intractable(phi, [fx.metropolis(w) for w in c1], [fx.metropolis(w) for w in c2])
    all_pass(con)
    assert 0.0 <= con.extras["norm_T"] <= 1.0 + 1e-12
    assert max(con.extras["norm_H1"], con.extras["norm_H2"]) <= 1.0 + 1e-12


def test_partition_uncapped_bound_fails_when_slice_gaps_exceed_one():
    # block flips have slice gap 2 while S is the pi-resampling kernel
    pi = mk.FiniteMeasure.uniform(4)
    N = np.kron(np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]]))
    con = C.from_partition(mk.resampling_kernel(pi), N, pi, C.Partition(np.array([0, 0, 1, 1])))
    all_pass(con)
    np.testing.assert_allclose(con.extras["gap_H"], [2.0, 2.0])
    assert rep(con, "partition.prop").lhs == pytest.approx(1.0)
    unc = rep(con, "partition.prop_uncapped")
    assert not unc.premise_ok and unc.lhs == pytest.approx(1.0) and unc.rhs == pytest.approx(2.0)
