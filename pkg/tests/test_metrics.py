import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from bakeoff.metrics import (
    ComparisonMatrix,
    aggregate_seeds,
    cross_entropy,
    friedman_permutation_pvalue,
    friedman_test,
    pairwise_friedman,
    relative_deterioration,
    squared_error,
    task_loss,
)

STRICT_3x4 = np.array([[1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 4.0, 5.0], [3.0, 4.0, 5.0, 6.0]])


# ---------------------------------------------------------------- losses


def test_cross_entropy_one_hot_correct_is_zero():
    P = np.eye(3)
    assert cross_entropy(P, [0, 1, 2]) == pytest.approx(0.0, abs=1e-11)


def test_cross_entropy_uniform_binary():
    v = cross_entropy(np.full((5, 2), 0.5), [0, 1, 1, 0, 1])
    assert v == pytest.approx(math.log(2), abs=1e-15)
    assert f"{v * 100:.4f}" == "69.3147"


def test_cross_entropy_clamps_zero_probability():
    v = cross_entropy(np.array([[1.0, 0.0]]), [1])
    assert v == pytest.approx(-math.log(1e-12))


def test_cross_entropy_length_mismatch():
    with pytest.raises(ValueError):
        cross_entropy(np.full((3, 2), 0.5), [0, 1])


@given(st.integers(1, 30), st.integers(2, 5), st.integers(0, 2**31))
def test_cross_entropy_nonnegative(n, k, seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(k), n)
    assert cross_entropy(P, rng.integers(0, k, n)) >= 0.0


def test_squared_error_examples():
    assert squared_error([1.0, 2.0], [1.0, 2.0]) == {"mse": 0.0, "rmse": 0.0}
    r = squared_error([0.0, 0.0], [3.0, 4.0])
    assert r["mse"] == 12.5
    assert r["rmse"] == pytest.approx(3.5355339059327378, abs=1e-12)
    assert squared_error([1.0, 1.0], [0.0, 2.0])["mse"] == 1.0 < squared_error([0.0, 0.0], [0.0, 2.0])["mse"]


def test_squared_error_empty():
    with pytest.raises(ValueError):
        squared_error([], [])


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=40))
def test_rmse_squared_is_mse(pairs):
    a, b = zip(*pairs)
    r = squared_error(a, b)
    assert abs(r["rmse"] ** 2 - r["mse"]) <= 1e-12 * max(1.0, r["mse"])


def test_task_loss_dispatch():
    assert task_loss([1.0], [3.0], "regression") == 4.0
    assert task_loss(np.array([[0.5, 0.5]]), [0], "binary") == pytest.approx(math.log(2))


def test_aggregate_seeds():
    assert aggregate_seeds([0.3] * 4) == {"mean": pytest.approx(0.3), "sem": 0.0}
    r = aggregate_seeds([1, 2, 3, 4])
    assert r["mean"] == 2.5
    assert r["sem"] == pytest.approx(0.6454972243679028, abs=1e-12)
    assert aggregate_seeds([7.0])["sem"] == 0.0


# ---------------------------------------------------------------- deterioration


def test_deterioration_best_everywhere():
    m = ComparisonMatrix(np.array([[1.0, 2.0], [1.5, 2.5]]), np.ones((2, 2), bool), ("a", "b"), ("d1", "d2"))
    assert relative_deterioration(m, "a") == 0.0


def test_deterioration_hand_value():
    L = np.array([[1.1, 1.21], [1.0, 1.0]])
    U = np.array([[True, True], [False, False]])
    m = ComparisonMatrix(L, U, ("m", "best"), ("d1", "d2"))
    v = relative_deterioration(m, "m")
    assert v == pytest.approx((math.sqrt(1.1 * 1.21) - 1) * 100, abs=1e-12)
    assert round(v, 2) == 15.37


def test_deterioration_only_unseen_columns():
    L = np.array([[2.0, 1.0], [1.0, 1.0]])
    U = np.array([[False, True], [True, True]])
    m = ComparisonMatrix(L, U, ("a", "b"), ("d1", "d2"))
    assert relative_deterioration(m, "a") == 0.0


def test_deterioration_errors():
    m = ComparisonMatrix(np.array([[1.0, 0.0], [1.0, 1.0]]), np.array([[False, False], [True, True]]), ("a", "b"), ("x", "y"))
    with pytest.raises(ValueError, match="no unseen"):
        relative_deterioration(m, "a")
    with pytest.raises(ValueError, match="positive"):
        relative_deterioration(m, "b")


def test_mask_shape_mismatch():
    with pytest.raises(ValueError):
        ComparisonMatrix(np.ones((2, 2)), np.ones((2, 3), bool), ("a", "b"), ("x", "y"))


@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_deterioration_column_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    L = rng.uniform(0.1, 2.0, (3, 4))
    U = rng.random((3, 4)) < 0.7
    U[:, 0] = True
    m1 = ComparisonMatrix(L, U, ("a", "b", "c"), tuple("wxyz"))
    L2 = L.copy()
    L2[:, 2] *= c
    m2 = ComparisonMatrix(L2, U, m1.models, m1.datasets)
    for i in range(3):
        assert relative_deterioration(m2, i) == pytest.approx(relative_deterioration(m1, i), rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------- Friedman


def test_friedman_strict_order_fixture():
    r = friedman_test(STRICT_3x4)
    np.testing.assert_array_equal(r.mean_ranks, [1.0, 2.0, 3.0])
    assert r.statistic == 8.0
    assert r.p_value == pytest.approx(math.exp(-4), abs=1e-12)
    assert r.dof == 2 and r.reject


def test_friedman_identical_losses():
    r = friedman_test(np.ones((3, 5)))
    assert r.statistic == 0.0 and r.p_value == 1.0 and not r.reject


def test_friedman_ties_average_ranks():
    L = np.array([[1.0, 1.0], [1.0, 2.0], [3.0, 0.5]])
    r = friedman_test(L)
    # dataset 0: models 0 and 1 tie for rank 1.5
    np.testing.assert_allclose(r.rank_sums, [1.5 + 2.0, 1.5 + 3.0, 3.0 + 1.0])


def test_friedman_degenerate_inputs():
    with pytest.raises(ValueError):
        friedman_test(np.ones((1, 4)))
    with pytest.raises(ValueError):
        friedman_test(np.ones((3, 1)))


@given(st.integers(2, 5), st.integers(2, 8), st.integers(0, 2**31))
def test_friedman_rank_sum_total_and_monotone_invariance(k, n, seed):
    rng = np.random.default_rng(seed)
    L = rng.integers(0, 4, (k, n)).astype(float)  # ties are common
    r = friedman_test(L)
    assert r.rank_sums.sum() == n * k * (k + 1) / 2
    assert 0.0 <= r.p_value <= 1.0
    r2 = friedman_test(np.exp(3 * L) + 7)
    assert r2.statistic == pytest.approx(r.statistic, abs=1e-12)


def test_chi2_matches_scipy_without_ties():
    rng = np.random.default_rng(4)
    L = rng.random((4, 9))
    ours = friedman_test(L)
    ref = stats.friedmanchisquare(*L)
    assert ours.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-12)


def _brute_force_pvalue(L):
    """Enumerate all k!^N rank assignments independently of the library code."""
    k, n = L.shape
    ranks = np.array([stats.rankdata(L[:, j]) for j in range(n)]).T

    def stat(R):
        s = R.sum(axis=1)
        return 12.0 / (n * k * (k + 1)) * np.sum(s**2) - 3 * n * (k + 1)

    obs = stat(ranks)
    hits = total = 0
    for perms in itertools.product(itertools.permutations(range(k)), repeat=n):
        R = np.stack([ranks[list(p), j] for j, p in enumerate(perms)], axis=1)
        hits += stat(R) >= obs - 1e-9
        total += 1
    return hits / total


@pytest.mark.parametrize("seed", range(6))
def test_exact_mode_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = 2 + seed % 3
    L = rng.integers(0, 3, (3, n)).astype(float)
    assert friedman_permutation_pvalue(L) == pytest.approx(_brute_force_pvalue(L), abs=1e-12)
    assert friedman_test(L, exact=True).p_value == pytest.approx(_brute_force_pvalue(L), abs=1e-12)


def test_fixture_permutation_agreement():
    exact = friedman_test(STRICT_3x4, exact=True).p_value
    assert exact == pytest.approx(_brute_force_pvalue(STRICT_3x4))
    assert abs(exact - friedman_test(STRICT_3x4).p_value) < 0.02


def test_exact_mode_size_limit():
    with pytest.raises(ValueError):
        friedman_test(np.random.default_rng(0).random((4, 3)), exact=True)


def test_pairwise_matches_submatrix_tests():
    P = pairwise_friedman(STRICT_3x4)
    assert P.shape == (3, 3)
    np.testing.assert_array_equal(np.diag(P), 1.0)
    for a, b in itertools.combinations(range(3), 2):
        assert P[a, b] == P[b, a] == friedman_test(STRICT_3x4[[a, b]]).p_value
