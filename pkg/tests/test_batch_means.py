import math

import numpy as np
import pytest

from sandwich_gap.batch_means import batch_means, batch_means_variance, ratio_with_se


def ar1(rng, n, rho):
    e = rng.standard_normal(n) * math.sqrt(1 - rho * rho)
    x = np.empty(n)
    x[0] = rng.standard_normal()
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    return x


def test_iid_gives_one():
    r = batch_means(np.random.default_rng(0).standard_normal(1_000_000))
    assert r.batch_size == 1000 and r.n_batches == 1000
    assert r.estimate == pytest.approx(1.0, abs=4 * r.se)


def test_ar1_gives_three():
    # (1 + rho) / (1 - rho) with rho = 1/2
    r = batch_means(ar1(np.random.default_rng(1), 1_000_000, 0.5))
    assert r.estimate == pytest.approx(3.0, abs=4 * r.se)


def test_constant_gives_zero():
    r = batch_means(np.full(10_000, 2.5))
    assert r.estimate == 0.0 and r.se == 0.0


def test_se_formula():
    r = batch_means(np.random.default_rng(2).standard_normal(40_000))
    assert r.se == pytest.approx(r.estimate * math.sqrt(2 / (r.n_batches - 1)))


def test_short_series_rejected():
    with pytest.raises(ValueError):
        batch_means(np.zeros(9_999))


def test_too_few_batches_rejected():
    with pytest.raises(ValueError):
        batch_means(np.zeros(10_000), batch_size=2_000)


def test_leftover_values_dropped():
    x = np.random.default_rng(3).standard_normal(10_150)
    r = batch_means(x)
    assert r.batch_size == 100 and r.n_batches == 101
    x2 = x.copy()
    x2[-1] = 1e6
    assert batch_means(x2).estimate == pytest.approx(r.estimate)


def test_coordinatewise_and_function():
    rng = np.random.default_rng(4)
    X = np.column_stack([rng.standard_normal(20_000), 3 * rng.standard_normal(20_000)])
    v, se = batch_means_variance(X)
    assert v.shape == (2,) and se.shape == (2,)
    assert v[1] / v[0] == pytest.approx(9.0, rel=0.4)
    s, _ = batch_means_variance(X, lambda S: S.sum(axis=1))
    assert np.isscalar(s)
    b, _ = batch_means_variance(X, burnin=5_000)
    assert b.shape == (2,)


def test_ratio_delta_method():
    r, se = ratio_with_se(2.0, 0.2, 4.0, 0.4)
    assert r == 0.5
    assert se == pytest.approx(0.5 * math.sqrt(0.01 + 0.01))
