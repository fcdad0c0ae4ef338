"""Statistics over metric series: rank correlation and exploratory factor analysis.

The factor-analysis driver runs, in order: outlier detection and treatment,
Box-Cox transformation, KMO adequacy, Kaiser factor count, principal-axis
extraction, rotation.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _backend
from .errors import (
    AdequacyFailed,
    ConstantSeries,
    HeywoodCase,
    LedgerMetricsError,
    NoConvergence,
    NonPositiveData,
    SingularCorrelation,
)
from .model import MetricSeries

log = logging.getLogger(__name__)

RIDGE = 1e-8
KMO_MIN = 0.5
STRENGTH_CUTS = ((0.9, "very high"), (0.7, "high"), (0.5, "moderate"), (0.3, "low"))


class Rotation(str, enum.Enum):
    NONE = "none"
    VARIMAX = "varimax"
    PROMAX = "promax"


class OutlierTreatment(str, enum.Enum):
    NONE = "none"
    DROP = "drop"
    WINSORIZE = "winsorize"
    TRANSFORM = "transform"


@dataclass(frozen=True, eq=False)
class DataMatrix:
    columns: tuple[str, ...]
    rows: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape != (len(self.rows), len(self.columns)):
            raise LedgerMetricsError(
                f"values shape {vals.shape} does not match {len(self.rows)} rows x {len(self.columns)} columns"
            )
        if not np.all(np.isfinite(vals)):
            raise LedgerMetricsError("data matrix holds missing or non-finite cells")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "values", vals)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def require_analyzable(self) -> None:
        if len(self.rows) < 3 or len(self.columns) < 2:
            raise LedgerMetricsError(
                f"need at least 3 rows and 2 columns, got {len(self.rows)} x {len(self.columns)}"
            )


def align_series(series: Sequence[MetricSeries]) -> DataMatrix:
    """Inner-join series on their snapshots."""
    if not series:
        raise LedgerMetricsError("no series to align")
    common = set(series[0].snapshots)
    for s in series[1:]:
        common &= set(s.snapshots)
    rows = sorted(common)
    cols = []
    for s in series:
        lookup = dict(s.points)
        cols.append([lookup[t] for t in rows])
    values = np.array(cols, dtype=np.float64).T.reshape(len(rows), len(series))
    return DataMatrix(tuple(s.metric_name for s in series), tuple(rows), values)


# rank correlation


def average_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    n = len(x)
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantSeries("correlation undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LedgerMetricsError("spearman needs two aligned 1-d series")
    if len(x) < 3:
        raise LedgerMetricsError(f"spearman needs at least 3 aligned points, got {len(x)}")
    rx, ry = average_ranks(x), average_ranks(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise ConstantSeries("spearman undefined for a constant series")
    if np.array_equal(rx, ry):
        return 1.0
    if np.array_equal(rx, len(x) + 1 - ry):
        return -1.0
    return pearson(rx, ry)


def strength_label(r: float) -> str:
    a = abs(r)
    for cut, label in STRENGTH_CUTS:
        if a >= cut:
            return label
    return "negligible"


@dataclass
class CorrelationResult:
    columns: tuple[str, ...]
    matrix: np.ndarray
    excluded: dict[str, str] = field(default_factory=dict)

    def labels(self) -> list[list[str]]:
        return [[strength_label(v) for v in row] for row in self.matrix]


def spearman_matrix(m: DataMatrix) -> CorrelationResult:
    """Pairwise Spearman grid; constant columns are excluded and reported."""
    keep, excluded = [], {}
    for j, name in enumerate(m.columns):
        if np.ptp(m.values[:, j]) == 0:
            excluded[name] = "constant series"
        else:
            keep.append(j)
    k = len(keep)
    mat = np.eye(k)
    for a in range(k):
        for b in range(a + 1, k):
            r = spearman(m.values[:, keep[a]], m.values[:, keep[b]])
            mat[a, b] = mat[b, a] = r
    return CorrelationResult(tuple(m.columns[j] for j in keep), mat, excluded)


# outliers and transformation


def detect_outliers(series) -> list[int]:
    """Indices more than 3 population standard deviations from the mean."""
    x = np.asarray(series, dtype=np.float64)
    if len(x) < 3:
        raise LedgerMetricsError("outlier detection needs at least 3 values")
    sd = x.std()
    if sd == 0:
        return []
    return np.flatnonzero(np.abs(x - x.mean()) > 3.0 * sd).tolist()


def winsorize(series) -> np.ndarray:
    x = np.asarray(series, dtype=np.float64)
    mu, sd = x.mean(), x.std()
    return np.clip(x, mu - 3 * sd, mu + 3 * sd)


def _boxcox_apply(x: np.ndarray, lam: float) -> np.ndarray:
    if lam == 0.0:
        return np.log(x)
    if lam == 1.0:
        return x - 1.0
    return np.expm1(lam * np.log(x)) / lam


def boxcox_llf(x, lam: float) -> float:
    """Profile log-likelihood of the Box-Cox model at ``lam`` (up to a constant)."""
    x = np.asarray(x, dtype=np.float64)
    y = _boxcox_apply(x, lam)
    var = y.var()
    if var <= 0:
        return -math.inf
    return (lam - 1.0) * float(np.log(x).sum()) - 0.5 * len(x) * math.log(var)


def golden_max(f, lo: float, hi: float, tol: float = 1e-4) -> float:
    """Maximizer of a unimodal ``f`` on [lo, hi] by golden-section search."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def box_cox(series, lam: float | None = None, *, shift: bool = False, bounds=(-5.0, 5.0)):
    """Box-Cox transform; estimates lambda by maximum likelihood when not given.

    With ``shift=True`` a series touching or below zero is moved to start at 1
    first. Returns ``(transformed, lambda)``.
    """
    x = np.asarray(series, dtype=np.float64)
    if np.any(x <= 0):
        if not shift:
            raise NonPositiveData("Box-Cox needs strictly positive data (enable shift)")
        x = x - x.min() + 1.0
    if lam is None:
        if np.ptp(x) == 0:
            lam = 1.0
        else:
            lam = golden_max(lambda l: boxcox_llf(x, l), bounds[0], bounds[1], 1e-4)
    return _boxcox_apply(x, lam), float(lam)


# eigen decomposition and adequacy


def eigen_symmetric(r, *, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix by cyclic Jacobi rotations, descending."""
    a = np.array(r, dtype=np.float64, order="C", copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LedgerMetricsError("eigen_symmetric needs a square matrix")
    if not np.allclose(a, a.T, rtol=0, atol=1e-10 * max(1.0, np.abs(a).max(initial=0.0))):
        raise LedgerMetricsError("matrix is not symmetric")
    a = (a + a.T) / 2.0
    tol = 1e-12 * max(1.0, float(np.abs(a).max(initial=0.0)))
    w, v, sweeps = _backend.jacobi_eigen(a, tol, max_sweeps)
    if sweeps < 0:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    order = np.argsort(-w, kind="mergesort")
    return np.asarray(w)[order], np.asarray(v)[:, order]


def kaiser_count(eigenvalues) -> int:
    return int(sum(1 for e in eigenvalues if e > 1.0))


def correlation(m: DataMatrix | np.ndarray) -> np.ndarray:
    x = m.values if isinstance(m, DataMatrix) else np.asarray(m, dtype=np.float64)
    sd = x.std(axis=0)
    if np.any(sd == 0):
        names = m.columns if isinstance(m, DataMatrix) else range(x.shape[1])
        bad = [str(c) for c, s in zip(names, sd) if s == 0]
        raise ConstantSeries(f"constant columns: {bad}")
    z = (x - x.mean(axis=0)) / sd
    r = (z.T @ z) / x.shape[0]
    r = (r + r.T) / 2.0
    np.fill_diagonal(r, 1.0)
    return r


def _inverse(r: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """Inverse correlation matrix with a diagonal ridge when R is singular."""
    w, _ = eigen_symmetric(r)
    if w[-1] > 1e-12:
        return np.linalg.inv(r)
    p = np.linalg.inv(r + RIDGE * np.eye(len(r)))
    d = np.sqrt(np.diag(p))
    partial = -p / np.outer(d, d)
    np.fill_diagonal(partial, 0.0)
    i, j = np.unravel_index(np.argmax(np.abs(partial)), partial.shape)
    if abs(partial[i, j]) >= 1.0 - 1e-6:
        raise SingularCorrelation(
            f"correlation matrix is singular: {names[i]!r} and {names[j]!r} are perfectly "
            f"collinear given the rest; drop one of them (e.g. nakamoto duplicates tau_0.5)"
        )
    log.warning("near-singular correlation matrix; applied ridge %g", RIDGE)
    return p


def kmo(m: DataMatrix | np.ndarray, *, names: Sequence[str] | None = None, is_correlation: bool = False) -> float:
    """Kaiser-Meyer-Olkin sampling adequacy over all variables."""
    if isinstance(m, DataMatrix):
        names = m.columns
        r = correlation(m)
    else:
        r = np.asarray(m, dtype=np.float64) if is_correlation else correlation(m)
        names = names or [f"v{i}" for i in range(r.shape[0])]
    p = _inverse(r, names)
    d = np.sqrt(np.diag(p))
    u = -p / np.outer(d, d)
    off = ~np.eye(len(r), dtype=bool)
    r2 = float((r[off] ** 2).sum())
    u2 = float((u[off] ** 2).sum())
    if r2 + u2 == 0:
        return 0.0
    return r2 / (r2 + u2)


# extraction and rotation


@dataclass
class FactorModel:
    variables: tuple[str, ...]
    correlation: np.ndarray
    eigenvalues: np.ndarray
    n_factors: int
    loadings: np.ndarray
    rotation: Rotation
    factor_correlations: np.ndarray | None = None
    communalities: np.ndarray | None = None
    iterations: int = 0
    heywood: list[str] = field(default_factory=list)

    @property
    def explained_variance(self) -> np.ndarray:
        return (self.loadings**2).sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "eigenvalues": self.eigenvalues.tolist(),
            "n_factors": self.n_factors,
            "rotation": self.rotation.value,
            "loadings": self.loadings.tolist(),
            "communalities": None if self.communalities is None else self.communalities.tolist(),
            "factor_correlations": None
            if self.factor_correlations is None
            else self.factor_correlations.tolist(),
            "iterations": self.iterations,
            "heywood": self.heywood,
        }


def smc(r: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """Squared multiple correlation of each variable with all the others."""
    return 1.0 - 1.0 / np.diag(_inverse(r, names))


def principal_axis(
    r: np.ndarray,
    n_factors: int,
    names: Sequence[str],
    *,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> tuple[np.ndarray, np.ndarray, int, list[str]]:
    """Iterated principal-axis factoring from squared multiple correlations.

    Returns (loadings, communalities, iterations, Heywood variables).
    """
    h = np.clip(smc(r, names), 0.0, 1.0)
    heywood: set[str] = set()
    for it in range(1, max_iter + 1):
        reduced = r.copy()
        np.fill_diagonal(reduced, h)
        w, v = eigen_symmetric(reduced)
        lam = np.clip(w[:n_factors], 0.0, None)
        loadings = v[:, :n_factors] * np.sqrt(lam)
        h_new = (loadings**2).sum(axis=1)
        over = h_new > 1.0
        if np.any(over):
            for i in np.flatnonzero(over):
                heywood.add(names[i])
            h_new = np.where(over, 1.0 - 1e-6, h_new)
        if np.max(np.abs(h_new - h)) < tol:
            h = h_new
            break
        h = h_new
    else:
        raise NoConvergence(f"principal-axis factoring did not converge in {max_iter} iterations")
    if heywood:
        warnings.warn(
            f"Heywood case: communality > 1 for {sorted(heywood)}; clamped to 1 - 1e-6",
            HeywoodCase,
            stacklevel=2,
        )
        norms = np.sqrt((loadings**2).sum(axis=1))
        cap = math.sqrt(1.0 - 1e-6)
        scale = np.where(norms > cap, cap / np.where(norms > 0, norms, 1.0), 1.0)
        loadings = loadings * scale[:, None]
    return loadings, (loadings**2).sum(axis=1), it, sorted(heywood)


def varimax(loadings: np.ndarray, *, normalize: bool = True, tol: float = 1e-6, max_iter: int = 1000):
    """Orthogonal varimax rotation; returns (rotated loadings, rotation matrix)."""
    a = np.asarray(loadings, dtype=np.float64)
    p, k = a.shape
    if k < 2:
        return a.copy(), np.eye(k)
    if normalize:
        h = np.sqrt((a**2).sum(axis=1))
        h = np.where(h > 0, h, 1.0)
        a = a / h[:, None]
    t = np.eye(k)
    crit = 0.0
    for _ in range(max_iter):
        b = a @ t
        g = a.T @ (b**3 - b @ np.diag((b**2).sum(axis=0)) / p)
        u, s, vt = np.linalg.svd(g)
        t = u @ vt
        new = float(s.sum())
        if new < crit * (1.0 + tol):
            break
        crit = new
    rotated = a @ t
    if normalize:
        rotated = rotated * h[:, None]
    return rotated, t


def promax(loadings: np.ndarray, *, power: int = 4):
    """Oblique promax rotation built on varimax.

    Returns (pattern loadings, rotation matrix, factor correlations).
    """
    a = np.asarray(loadings, dtype=np.float64)
    k = a.shape[1]
    if k < 2:
        return a.copy(), np.eye(k), np.eye(k)
    v, t_var = varimax(a)
    h = np.sqrt((v**2).sum(axis=1))
    h = np.where(h > 0, h, 1.0)
    target = v / h[:, None]
    target = np.abs(target) ** (power - 1) * target
    u, *_ = np.linalg.lstsq(v, target, rcond=None)
    d = np.diag(np.linalg.inv(u.T @ u))
    u = u @ np.diag(np.sqrt(d))
    pattern = v @ u
    phi = np.linalg.inv(u.T @ u)
    phi = (phi + phi.T) / 2.0
    return pattern, t_var @ u, phi


def _orient(loadings: np.ndarray, phi: np.ndarray | None):
    """Flip columns so each factor's largest |loading| is positive; sort by explained variance."""
    lo = loadings.copy()
    k = lo.shape[1]
    signs = np.ones(k)
    for j in range(k):
        i = int(np.argmax(np.abs(lo[:, j])))
        if lo[i, j] < 0:
            signs[j] = -1.0
    lo = lo * signs
    order = np.argsort(-(lo**2).sum(axis=0), kind="mergesort")
    lo = lo[:, order]
    if phi is not None:
        phi = (phi * np.outer(signs, signs))[np.ix_(order, order)]
    return lo, phi


def efa_from_correlation(
    r: np.ndarray,
    n_factors: int,
    rotation: Rotation | str = Rotation.PROMAX,
    *,
    names: Sequence[str] | None = None,
    power: int = 4,
) -> FactorModel:
    r = np.asarray(r, dtype=np.float64)
    p = r.shape[0]
    names = tuple(names) if names is not None else tuple(f"v{i}" for i in range(p))
    rotation = Rotation(rotation)
    if not 1 <= n_factors <= p - 1:
        raise LedgerMetricsError(f"n_factors must be in [1, {p - 1}], got {n_factors}")
    eigenvalues, _ = eigen_symmetric(r)
    loadings, _, iters, heywood = principal_axis(r, n_factors, names)
    phi = None
    if rotation is Rotation.VARIMAX:
        loadings, _ = varimax(loadings)
    elif rotation is Rotation.PROMAX:
        loadings, _, phi = promax(loadings, power=power)
    loadings, phi = _orient(loadings, phi)
    communalities = (loadings**2).sum(axis=1) if phi is None else np.einsum(
        "ij,jk,ik->i", loadings, phi, loadings
    )
    return FactorModel(
        variables=names,
        correlation=r,
        eigenvalues=eigenvalues,
        n_factors=n_factors,
        loadings=loadings,
        rotation=rotation,
        factor_correlations=phi,
        communalities=communalities,
        iterations=iters,
        heywood=heywood,
    )


def efa(m: DataMatrix, n_factors: int, rotation: Rotation | str = Rotation.PROMAX, *, power: int = 4) -> FactorModel:
    m.require_analyzable()
    return efa_from_correlation(correlation(m), n_factors, rotation, names=m.columns, power=power)


@dataclass
class EfaRun:
    model: FactorModel
    kmo: float
    kaiser: int
    matrix: DataMatrix
    steps: list[dict] = field(default_factory=list)


def run_efa_pipeline(
    m: DataMatrix,
    *,
    outliers: OutlierTreatment | str = OutlierTreatment.TRANSFORM,
    rotation: Rotation | str = Rotation.PROMAX,
    power: int = 4,
    force: bool = False,
    n_factors: int | None = None,
) -> EfaRun:
    """Outliers, Box-Cox, KMO, Kaiser count, extraction and rotation, in that order.

    Raises AdequacyFailed when KMO <= 0.5 unless ``force`` is set.
    """
    outliers = OutlierTreatment(outliers)
    m.require_analyzable()
    steps: list[dict] = []
    cols = list(m.columns)
    values = m.values.copy()
    rows = list(m.rows)

    flagged = {c: detect_outliers(values[:, j]) for j, c in enumerate(cols)}
    steps.append({"step": "outliers", "rule": "|x - mean| > 3 sd", "flagged": {c: len(v) for c, v in flagged.items()}})

    if outliers is OutlierTreatment.DROP:
        bad = sorted(set().union(*flagged.values()))
        dropped = set(bad)
        keep = [i for i in range(len(rows)) if i not in dropped]
        values = values[keep]
        rows = [rows[i] for i in keep]
        steps.append({"step": "treatment", "method": "drop", "rows_dropped": len(bad)})
    elif outliers is OutlierTreatment.WINSORIZE:
        values = np.column_stack([winsorize(values[:, j]) for j in range(len(cols))])
        steps.append({"step": "treatment", "method": "winsorize"})
    elif outliers is OutlierTreatment.TRANSFORM:
        lams = {}
        out = []
        for j, c in enumerate(cols):
            y, lam = box_cox(values[:, j], shift=True)
            lams[c] = round(lam, 6)
            out.append(y)
        values = np.column_stack(out)
        after = {c: len(detect_outliers(values[:, j])) for j, c in enumerate(cols)}
        steps.append({"step": "treatment", "method": "box-cox", "lambda": lams, "flagged_after": after})
    else:
        steps.append({"step": "treatment", "method": "none"})

    constant = [c for j, c in enumerate(cols) if np.ptp(values[:, j]) == 0]
    if constant:
        keep = [j for j, c in enumerate(cols) if c not in constant]
        values = values[:, keep]
        cols = [cols[j] for j in keep]
        steps.append({"step": "drop_constant", "columns": constant})
    dm = DataMatrix(tuple(cols), tuple(rows), values)
    dm.require_analyzable()

    score = kmo(dm)
    steps.append({"step": "kmo", "value": score, "suitable": score > KMO_MIN})
    if score <= KMO_MIN and not force:
        raise AdequacyFailed(f"KMO = {score:.3f} <= {KMO_MIN}; data unsuitable for factor analysis (use force)")

    r = correlation(dm)
    eig, _ = eigen_symmetric(r)
    kc = kaiser_count(eig)
    steps.append({"step": "kaiser", "eigenvalues": eig.tolist(), "count": kc})
    k = n_factors if n_factors is not None else kc
    if k < 1:
        raise AdequacyFailed("no eigenvalue exceeds 1; nothing to extract")
    k = min(k, len(cols) - 1)
    model = efa_from_correlation(r, k, rotation, names=dm.columns, power=power)
    steps.append({"step": "extraction", "method": "principal-axis", "n_factors": k, "iterations": model.iterations,
                  "heywood": model.heywood})
    steps.append({"step": "rotation", "method": Rotation(rotation).value, "power": power})
    return EfaRun(model, score, kc, dm, steps)
