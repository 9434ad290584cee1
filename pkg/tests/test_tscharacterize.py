import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tgdetect.errors import DegenerateMatrix, InputError, SingleClassInput
from tgdetect.series import TimeSeries
from tgdetect.tscharacterize import (
    StatisticCatalog,
    correlation_prune,
    gini_rank,
    pca_reduce,
    pearson_matrix,
    select_features,
    summarize,
    top_k,
)

CAT = StatisticCatalog()
IDX = {n: i for i, n in enumerate(CAT.names)}


def test_empty_series_zero_vector():
    assert summarize(TimeSeries.empty()).tolist() == [0.0] * 12


def test_constant_series():
    s = summarize([3.0] * 5)
    for n in ("min", "max", "mean", "median"):
        assert s[IDX[n]] == 3.0
    assert s[IDX["std"]] == 0 and s[IDX["sum"]] == 15 and s[IDX["count_above_mean"]] == 0
    assert s[IDX["longest_run_above_mean"]] == 0


def test_quantiles_linear():
    s = summarize([1, 2, 3, 4, 5])
    assert (s[IDX["q0.25"]], s[IDX["median"]], s[IDX["q0.75"]]) == (2.0, 3.0, 4.0)
    assert s[IDX["q0.1"]] == pytest.approx(1.4)


def test_run_statistics():
    s = summarize([0, 5, 5, 0, 5, 0])
    assert s[IDX["count_above_mean"]] == 3 and s[IDX["longest_run_above_mean"]] == 2


def test_catalog_validation():
    with pytest.raises(InputError):
        StatisticCatalog(("min", "min"))
    with pytest.raises(InputError):
        StatisticCatalog(("kurtosis",))
    with pytest.raises(InputError):
        StatisticCatalog(())
    assert summarize([1, 2, 3], StatisticCatalog(("q0.5", "max"))).tolist() == [2.0, 3.0]


_vals = arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e6, 1e6, allow_nan=False))


@settings(max_examples=100)
@given(_vals, st.randoms(use_true_random=False))
def test_order_free_statistics_are_permutation_invariant(x, rnd):
    perm = x.copy()
    rnd.shuffle(perm)
    a, b = summarize(x), summarize(perm)
    for n in ("min", "max", "median", "q0.1", "q0.25", "q0.75", "q0.9", "count_above_mean"):
        assert a[IDX[n]] == b[IDX[n]]
    for n in ("mean", "sum", "std"):
        assert a[IDX[n]] == pytest.approx(b[IDX[n]], rel=1e-9, abs=1e-6)


def test_run_statistic_is_order_sensitive():
    a = summarize([9, 9, 0, 0])[IDX["longest_run_above_mean"]]
    b = summarize([9, 0, 9, 0])[IDX["longest_run_above_mean"]]
    assert a == 2 and b == 1


@settings(max_examples=100)
@given(_vals)
def test_quantiles_match_numpy(x):
    s = summarize(x)
    for q in (0.1, 0.25, 0.5, 0.75, 0.9):
        name = "median" if q == 0.5 else f"q{q}"
        assert s[IDX[name]] == pytest.approx(np.quantile(x, q), rel=1e-12, abs=1e-9)


# gini ---------------------------------------------------------------------


def test_gini_perfect_separator():
    X = np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0], [4.0, 7.0]])
    rank = gini_rank(X, [0, 0, 1, 1], ["sep", "const"])
    assert rank == [("sep", 0.5), ("const", 0.0)]


def brute_stump(col, y):
    y = np.asarray(y)

    def gini(lab):
        if lab.size == 0:
            return 0.0
        p = np.bincount(lab, minlength=2) / lab.size
        return 1 - (p**2).sum()

    best = 0.0
    for t in np.unique(col)[:-1]:
        left, right = y[col <= t], y[col > t]
        best = max(best, gini(y) - (left.size * gini(left) + right.size * gini(right)) / y.size)
    return best


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=30))
def test_gini_matches_exhaustive_scan(rows):
    col = np.array([r[0] for r in rows], dtype=float)
    y = [r[1] for r in rows]
    if len(set(y)) < 2:
        with pytest.raises(SingleClassInput):
            gini_rank(col[:, None], y)
        return
    ((_, score),) = gini_rank(col[:, None], y)
    assert score == pytest.approx(brute_stump(col, y), abs=1e-12)
    assert 0 <= score <= 0.5 + 1e-12
    # order-based: a strictly increasing transform keeps the score
    ((_, score2),) = gini_rank(np.exp(col / 3)[:, None], y)
    assert score2 == pytest.approx(score, abs=1e-12)


def test_top_k_groups_by_attribute():
    ranking = [("a__max", 0.4), ("a__min", 0.3), ("b__sum", 0.25), ("a__std", 0.2), ("a__q0.1", 0.1), ("c", 0.0)]
    top = top_k(ranking, 3)
    assert [n for n, _ in top["a"]] == ["a__max", "a__min", "a__std"]
    assert list(top) == ["a", "b", "c"]


# correlation --------------------------------------------------------------


def test_duplicate_and_negated_columns_dropped():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    X = np.column_stack([x, x, -x, rng.normal(size=200)])
    kept, dropped = correlation_prune(X, 0.9, ["x", "dup", "neg", "other"])
    assert kept == [0, 3]
    assert [(d, k) for d, k, _ in dropped] == [("dup", "x"), ("neg", "x")]
    assert dropped[1][2] == pytest.approx(-1.0)


def test_independent_columns_kept():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(10_000, 2))
    assert correlation_prune(X, 0.9)[0] == [0, 1]


def test_zero_variance_column():
    X = np.column_stack([np.arange(5.0), np.ones(5)])
    assert pearson_matrix(X)[0, 1] == 0.0
    assert correlation_prune(X, 0.9)[0] == [0, 1]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.3, 0.99))
def test_prune_leaves_no_correlated_pair(seed, thr):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(60, 3))
    X = np.column_stack([base, base @ rng.normal(size=(3, 5)) + 0.1 * rng.normal(size=(60, 5))])
    kept, _ = correlation_prune(X, thr)
    r = pearson_matrix(X[:, kept])
    off = np.abs(r - np.diag(np.diag(r)))
    assert (off < thr).all()


# PCA ----------------------------------------------------------------------


def test_pca_line():
    t = np.linspace(0, 1, 20)
    res = pca_reduce(np.column_stack([t, 3 * t + 1]))
    assert res.n_components == 1
    assert res.explained_ratio[0] == pytest.approx(1.0)


def test_pca_isotropic():
    X = np.random.default_rng(2).normal(size=(10_000, 3))
    res = pca_reduce(X, 0.982)
    assert res.n_components == 3
    assert np.allclose(res.explained_ratio, 1 / 3, atol=0.02)


def test_pca_round_trip_and_orthonormal():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 6)) @ rng.normal(size=(6, 6))
    res = pca_reduce(X, n_components=6)
    assert np.allclose(res.components @ res.components.T, np.eye(6), atol=1e-12)
    back = res.inverse_transform(res.transformed)
    assert np.linalg.norm(back - X) / np.linalg.norm(X) < 1e-9
    assert np.all(np.diff(res.explained_ratio) <= 1e-15)
    assert res.explained_ratio.sum() <= 1 + 1e-9
    for row in res.components:
        assert row[np.argmax(np.abs(row))] > 0
    # projecting a basis vector gives the unit vector in component space
    assert np.allclose(res.components @ res.components[2], np.eye(6)[2], atol=1e-12)
    # scores along each component have norm equal to its singular value
    assert np.allclose(np.linalg.norm(res.transformed, axis=0), res.singular_values, rtol=1e-9)


def test_pca_degenerate():
    with pytest.raises(DegenerateMatrix):
        pca_reduce(np.ones((1, 3)))
    with pytest.raises(DegenerateMatrix):
        pca_reduce(np.ones((4, 3)))


def test_select_features_pipeline():
    rng = np.random.default_rng(4)
    n = 300
    y = rng.integers(0, 2, n)
    signal = y + 0.3 * rng.normal(size=n)
    X = np.column_stack([signal, 2 * signal, rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)])
    names = ["s__a", "s__b", "n__a", "n__b", "k"]
    sel = select_features(X, y, names, k=1)
    # s__a and s__b tie; column order wins
    assert sel.selected[0] == "s__a" and sel.selected[-1] == "k" and len(sel.selected) == 3
    assert sel.pca.components.shape[1] == len(sel.retained)
    rep = sel.report()
    assert set(rep) == {"top_per_attribute", "selected", "retained_after_correlation",
                        "dropped_by_correlation", "pca"}
