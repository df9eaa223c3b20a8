import numpy as np
import pytest

from mcms import published
from mcms.descriptives import (
    alpha_from_data,
    composite_correlations,
    composite_stats,
    cronbach_alpha,
    feldt_interval,
)
from mcms.scale import FactorDef, ResponseMatrix, ScaleDefinition
from mcms.simulate import mcms_config, simulate_responses

TWO = ScaleDefinition("two", "", 1, 7, (FactorDef("A", ("a1", "a2")), FactorDef("B", ("b1", "b2"))))


def test_constant_respondent():
    stats = composite_stats(ResponseMatrix(TWO.items, [[7, 7, 7, 7]]), TWO)
    np.testing.assert_array_equal(stats.mean, [7, 7])
    np.testing.assert_array_equal(stats.sd, [0, 0])


def test_two_respondents():
    stats = composite_stats(ResponseMatrix(TWO.items, [[1, 1, 1, 1], [3, 3, 3, 3]]), TWO)
    np.testing.assert_allclose(stats.mean, [2, 2])
    np.testing.assert_allclose(stats.sd, [np.sqrt(2)] * 2)


@pytest.fixture(scope="module")
def big_sample():
    return simulate_responses(mcms_config(50_000, seed=3)).genuine("ALL")


def test_composite_means_match_intercepts(mcms, big_sample):
    stats = composite_stats(big_sample, mcms)
    tau = published.intercepts(mcms.items).reshape(6, 3).mean(axis=1)
    np.testing.assert_allclose(stats.mean, tau, atol=0.05)
    assert set(stats.to_dict()) == set(mcms.factor_names)


def test_intrinsic_amotivation_correlation(mcms, big_sample):
    ct = composite_correlations(big_sample, mcms)
    k_am = mcms.factor_names.index("Amotivation")
    k_in = mcms.factor_names.index("Intrinsic Motivation")
    assert ct.r[k_in, k_am] == pytest.approx(-0.43, abs=0.05)
    assert ct.p_values[k_in, k_am] < 1e-10


def test_correlation_matrix_properties(mcms, big_sample):
    ct = composite_correlations(big_sample, mcms)
    np.testing.assert_allclose(ct.r, ct.r.T)
    np.testing.assert_allclose(np.diag(ct.r), 1.0)
    assert np.abs(ct.r).max() <= 1.0
    assert np.linalg.eigvalsh(ct.r).min() > -1e-10


def test_identical_composites_correlate_perfectly(rng):
    x = rng.integers(1, 8, size=(40, 1))
    m = ResponseMatrix(TWO.items, np.hstack([x, x, x, x]))
    assert composite_correlations(m, TWO).r[0, 1] == pytest.approx(1.0)


def test_independent_composites(rng):
    n = 20_000
    m = ResponseMatrix(TWO.items, rng.normal(size=(n, 4)))
    assert abs(composite_correlations(m, TWO).r[0, 1]) < 3 / np.sqrt(n)


def test_zero_variance_flagged(rng):
    x = np.hstack([np.full((10, 2), 4), rng.integers(1, 8, size=(10, 2))])
    ct = composite_correlations(ResponseMatrix(TWO.items, x), TWO)
    assert ct.undefined[0, 1] and np.isnan(ct.r[0, 1]) and np.isnan(ct.p_values[0, 1])
    assert not ct.undefined[1, 1]


def test_correlations_need_three_rows():
    with pytest.raises(ValueError):
        composite_correlations(ResponseMatrix(TWO.items, [[1, 2, 3, 4], [2, 3, 4, 5]]), TWO)


def test_alpha_uncorrelated_items_is_zero():
    x = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    assert alpha_from_data(x) == pytest.approx(0.0, abs=1e-15)


def test_alpha_spearman_brown():
    R = np.full((3, 3), 0.5)
    np.fill_diagonal(R, 1)
    z = np.random.default_rng(0).standard_normal((30, 3))
    z -= z.mean(axis=0)
    q, _ = np.linalg.qr(z)
    assert alpha_from_data(q @ np.linalg.cholesky(R).T) == pytest.approx(0.75, abs=1e-12)


def test_alpha_shift_invariant(rng):
    x = rng.normal(size=(50, 3)) + rng.normal(size=(50, 1))
    shifted = x + np.array([0, 2.5, 0])
    assert alpha_from_data(shifted) == pytest.approx(alpha_from_data(x), abs=1e-12)


def test_alpha_can_be_negative():
    x = np.array([[1, 7], [2, 6], [3, 4], [7, 2]], dtype=float)
    m = ResponseMatrix(("a", "b"), x)
    est = cronbach_alpha(m, ("a", "b"))
    assert est.alpha < 0
    assert est.ci_low <= est.alpha <= est.ci_high


def test_cronbach_alpha_factor(rng):
    x = rng.normal(size=(100, 4)) + rng.normal(size=(100, 1))
    est = cronbach_alpha(ResponseMatrix(TWO.items, x), TWO.factors[0])
    assert est.k == 2 and est.n == 100
    assert est.ci_low < est.alpha < est.ci_high <= 1


def test_feldt_interval_formula():
    from scipy import stats

    low, high = feldt_interval(0.8, 3, 100)
    assert low == pytest.approx(1 - 0.2 * stats.f.ppf(0.975, 99, 198))
    assert high == pytest.approx(1 - 0.2 * stats.f.ppf(0.025, 99, 198))


def test_alpha_preconditions():
    with pytest.raises(ValueError):
        cronbach_alpha(ResponseMatrix(("a",), [[1], [2], [3]]), ("a",))
    with pytest.raises(ValueError):
        cronbach_alpha(ResponseMatrix(("a", "b"), [[1, 2], [2, 3]]), ("a", "b"))
    with pytest.raises(ValueError, match="zero variance"):
        alpha_from_data(np.ones((5, 2)))
