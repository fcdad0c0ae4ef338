import itertools
import math

import numpy as np
import pytest
import scipy.stats

from ledgermetrics.errors import (
    AdequacyFailed,
    ConstantSeries,
    HeywoodCase,
    NonPositiveData,
    SingularCorrelation,
)
from ledgermetrics.model import MetricSeries
from ledgermetrics.stats import (
    DataMatrix,
    align_series,
    average_ranks,
    box_cox,
    boxcox_llf,
    correlation,
    detect_outliers,
    efa,
    efa_from_correlation,
    eigen_symmetric,
    kaiser_count,
    kmo,
    promax,
    run_efa_pipeline,
    spearman,
    spearman_matrix,
    strength_label,
    varimax,
)
from ledgermetrics.synthlab import generate_factor_dataset


def brute_ranks(x):
    """Average 1-based rank: 1 + (#smaller) + (#ties - 1) / 2."""
    x = list(x)
    return [1 + sum(v < xi for v in x) + (sum(v == xi for v in x) - 1) / 2 for xi in x]


def pearson_plain(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    a, b = a - a.mean(), b - b.mean()
    return float((a * b).sum() / math.sqrt((a * a).sum() * (b * b).sum()))


def test_spearman_exact():
    assert spearman([1, 2, 3], [10, 20, 30]) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
    assert spearman([1, 2, 3, 4], np.exp([1, 2, 3, 4])) == 1.0


def test_spearman_constant():
    with pytest.raises(ConstantSeries):
        spearman([1, 1, 1], [1, 2, 3])


def test_ties_match_brute_force(rng):
    for _ in range(200):
        n = int(rng.integers(3, 30))
        x = rng.integers(0, 5, n)
        y = rng.integers(0, 5, n)
        assert list(average_ranks(x)) == brute_ranks(x)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        want = pearson_plain(brute_ranks(x), brute_ranks(y))
        assert abs(spearman(x, y) - want) < 1e-12
        assert abs(spearman(x, y) - scipy.stats.spearmanr(x, y).statistic) < 1e-12


def test_strength_labels():
    assert strength_label(0.95) == "very high"
    assert strength_label(-0.75) == "high"
    assert strength_label(0.5) == "moderate"
    assert strength_label(0.3) == "low"
    assert strength_label(0.1) == "negligible"


def test_spearman_matrix_layout_and_exclusion():
    m = DataMatrix(("a", "b", "c"), (0, 1, 2, 3), np.array([[1, 4, 7], [2, 3, 7], [3, 2, 7], [4, 1, 7]], float))
    res = spearman_matrix(m)
    assert res.columns == ("a", "b") and res.excluded == {"c": "constant series"}
    assert np.array_equal(res.matrix, [[1.0, -1.0], [-1.0, 1.0]])


def test_align_series_inner_join():
    a = MetricSeries("a", ((1, 1.0), (2, 2.0), (3, 3.0)))
    b = MetricSeries("b", ((2, 5.0), (3, 6.0), (4, 7.0)))
    m = align_series([a, b])
    assert m.rows == (2, 3) and m.values.tolist() == [[2.0, 5.0], [3.0, 6.0]]


def test_outlier_examples():
    assert detect_outliers([0, 0, 0, 100]) == []
    assert detect_outliers([5, 5, 5, 5]) == []
    rest = np.tile([1.0, 2.0, 3.0], 10)
    x = np.append(rest, rest.mean() + 10 * rest.std())
    assert detect_outliers(x) == [30]


def test_box_cox_fixed():
    x = np.array([0.5, 1.0, 2.0, 7.0])
    assert np.allclose(box_cox(x, 1.0)[0], x - 1)
    assert np.allclose(box_cox(x, 0.0)[0], np.log(x))
    with pytest.raises(NonPositiveData):
        box_cox([0.0, 1.0, 2.0])
    y, _ = box_cox([0.0, 1.0, 2.0], 1.0, shift=True)
    assert y.tolist() == [0.0, 1.0, 2.0]


def test_box_cox_mle(rng):
    for _ in range(10):
        x = rng.lognormal(0.0, 0.7, 200)
        _, lam = box_cox(x)
        grid = np.linspace(-5, 5, 100001)
        best = grid[np.argmax([boxcox_llf(x, g) for g in grid[::100]]) * 100]
        fine = grid[max(0, np.searchsorted(grid, best) - 100): np.searchsorted(grid, best) + 101]
        best = fine[np.argmax([boxcox_llf(x, g) for g in fine])]
        assert abs(lam - best) < 2e-4
        assert abs(lam - scipy.stats.boxcox(x)[1]) < 2e-4
        assert abs(boxcox_llf(x, 0.3) - scipy.stats.boxcox_llf(0.3, x)) < 1e-8


def test_eigen_identity_and_closed_form():
    w, v = eigen_symmetric(np.eye(5))
    assert np.array_equal(w, np.ones(5)) and kaiser_count(w) == 0
    for rho in (0.3, -0.8, 0.999):
        w, _ = eigen_symmetric([[1.0, rho], [rho, 1.0]])
        assert abs(w[0] - (1 + abs(rho))) < 1e-12 and abs(w[1] - (1 - abs(rho))) < 1e-12


def test_eigen_reconstruction(rng):
    for _ in range(20):
        a = rng.normal(size=(8, 8))
        a = (a + a.T) / 2
        w, v = eigen_symmetric(a)
        assert np.abs(v @ np.diag(w) @ v.T - a).max() < 1e-8
        assert np.abs(v.T @ v - np.eye(8)).max() < 1e-10
        assert np.allclose(w, np.linalg.eigvalsh(a)[::-1], atol=1e-10)
        assert list(w) == sorted(w, reverse=True)


def test_kaiser_examples():
    assert kaiser_count([3.2, 1.4, 0.2, 0.2]) == 2
    l = np.zeros((6, 2))
    l[:3, 0] = l[3:, 1] = 0.8
    r = l @ l.T
    np.fill_diagonal(r, 1.0)
    assert kaiser_count(eigen_symmetric(r)[0]) == 2


def kmo_by_regression(x):
    """KMO from partial correlations of residuals, one pair at a time."""
    x = np.asarray(x, float)
    x = x - x.mean(axis=0)
    p = x.shape[1]
    r = np.corrcoef(x, rowvar=False)
    num = den = 0.0
    for i, j in itertools.permutations(range(p), 2):
        rest = [k for k in range(p) if k not in (i, j)]
        z = x[:, rest]
        ri = x[:, i] - z @ np.linalg.lstsq(z, x[:, i], rcond=None)[0]
        rj = x[:, j] - z @ np.linalg.lstsq(z, x[:, j], rcond=None)[0]
        partial = pearson_plain(ri, rj)
        num += r[i, j] ** 2
        den += r[i, j] ** 2 + partial ** 2
    return num / den


def test_kmo_one_factor():
    m = generate_factor_dataset(500, [[0.8]] * 6, 1.0, seed=11)
    score = kmo(m)
    assert score > 0.6
    assert abs(score - kmo_by_regression(m.values)) < 1e-10


def test_kmo_duplicate_columns():
    m = generate_factor_dataset(200, [[0.8]] * 4, 0.5, seed=2)
    dup = DataMatrix(m.columns + ("dup",), m.rows, np.column_stack([m.values, m.values[:, 0]]))
    with pytest.raises(SingularCorrelation):
        kmo(dup)


def congruence(a, b):
    return float(a @ b / math.sqrt((a @ a) * (b @ b)))


def matched_congruence(est, planted):
    """Best column matching with sign alignment; per-factor Tucker congruence."""
    k = planted.shape[1]
    best = None
    for perm in itertools.permutations(range(est.shape[1]), k):
        cs = [abs(congruence(est[:, perm[j]], planted[:, j])) for j in range(k)]
        if best is None or sum(cs) > sum(best):
            best = cs
    return best


TWO = np.zeros((6, 2))
TWO[:3, 0] = TWO[3:, 1] = 0.8


@pytest.mark.parametrize("rotation", ["varimax", "promax"])
def test_planted_two_factor(rotation):
    m = generate_factor_dataset(500, TWO, 0.6, seed=3)
    assert kmo(m) > 0.5
    w, _ = eigen_symmetric(correlation(m))
    assert kaiser_count(w) == 2
    model = efa(m, 2, rotation)
    assert min(matched_congruence(model.loadings, TWO)) >= 0.95


def test_planted_one_factor():
    m = generate_factor_dataset(500, [[0.8]] * 6, 0.6, seed=4)
    run = run_efa_pipeline(m, outliers="none")
    assert run.model.n_factors == 1
    assert np.all(np.abs(run.model.loadings) >= 0.6)
    raw = run_efa_pipeline(m, outliers="none", rotation="none")
    assert raw.model.n_factors == run.model.n_factors


def test_rotation_none_returns_raw():
    m = generate_factor_dataset(300, TWO, 0.6, seed=8)
    r = correlation(m)
    a = efa_from_correlation(r, 2, "none")
    assert a.factor_correlations is None
    assert np.allclose((a.loadings**2).sum(axis=1), a.communalities)


def test_varimax_orthogonal_promax_reproduces(rng):
    a = rng.uniform(-1, 1, (8, 3)) * 0.6
    v, t = varimax(a)
    assert np.allclose(t.T @ t, np.eye(3), atol=1e-10)
    assert np.allclose(v @ t.T, a, atol=1e-10)
    # communalities are invariant under the oblique transform
    pattern, rot, phi = promax(a)
    assert np.allclose(np.diag(phi), 1.0)
    assert np.allclose(np.einsum("ij,jk,ik->i", pattern, phi, pattern), (a**2).sum(axis=1), atol=1e-8)


def test_varimax_matches_reference(rng):
    # unnormalized varimax criterion is maximal: no small rotation improves it
    a = rng.uniform(-1, 1, (10, 2))
    v, _ = varimax(a, normalize=False)

    def crit(x):
        return ((x**2) ** 2).sum() - ((x**2).sum(axis=0) ** 2).sum() / len(x)

    for th in (-1e-3, 1e-3):
        rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        assert crit(v @ rot) <= crit(v) + 1e-9


def test_pipeline_adequacy_gate():
    rng = np.random.default_rng(0)
    m = DataMatrix(tuple("abcd"), tuple(range(60)), rng.normal(size=(60, 4)))
    with pytest.raises(AdequacyFailed):
        run_efa_pipeline(m, outliers="none")
    with pytest.warns(HeywoodCase):
        steps = [s["step"] for s in run_efa_pipeline(m, outliers="none", force=True, n_factors=1).steps]
    assert steps == ["outliers", "treatment", "kmo", "kaiser", "extraction", "rotation"]


def test_noise_spectrum_is_flat():
    # pure noise: every eigenvalue stays near 1, inside the Marchenko-Pastur edges
    m = generate_factor_dataset(20000, np.zeros((6, 1)), 1.0, seed=5)
    w, _ = eigen_symmetric(correlation(m))
    edge = (1 + math.sqrt(6 / 20000)) ** 2
    assert w[0] < edge * 1.05 and w[-1] > (1 - math.sqrt(6 / 20000)) ** 2 * 0.95


def test_rank_one_without_noise():
    m = generate_factor_dataset(100, [[0.9], [0.5], [-0.7], [0.3]], 0.0, seed=1)
    w, _ = eigen_symmetric(correlation(m))
    assert abs(w[0] - 4.0) < 1e-9 and np.abs(w[1:]).max() < 1e-9
