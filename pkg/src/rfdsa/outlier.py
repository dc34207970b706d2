"""Unknown-signal detection on classifier features.

Two detectors are provided: a FAST-MCD elliptic envelope thresholded on
Mahalanobis distance, and two-cluster k-means where the cluster holding the
minority of known inliers is declared the outlier cluster.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, stats

INLIER = "Inlier"
OUTLIER = "Outlier"


class TooFewSamples(ValueError):
    pass


class DegenerateFeatures(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class Uncalibrated(RuntimeError):
    pass


class EmptyTraining(ValueError):
    pass


# --- minimum covariance determinant -------------------------------------------

@dataclass(frozen=True)
class MCDModel:
    location: np.ndarray
    covariance: np.ndarray
    support_fraction: float
    chol: np.ndarray
    threshold: Optional[float] = None
    contamination: Optional[float] = None
    support: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.location.size


def _mean_cov(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    d = x - mu
    return mu, d.T @ d / len(x)


def _sq_dist(x: np.ndarray, mu: np.ndarray, cov: np.ndarray) -> np.ndarray:
    try:
        c = linalg.cho_factor(cov, lower=True)
    except linalg.LinAlgError:
        c = linalg.cho_factor(cov + np.eye(len(mu)) * 1e-9 * max(np.trace(cov), 1e-12), lower=True)
    z = linalg.solve_triangular(c[0], (x - mu).T, lower=True)
    return np.sum(z * z, axis=0)


def _logdet(cov: np.ndarray) -> float:
    sign, ld = np.linalg.slogdet(cov)
    return ld if sign > 0 else -np.inf


def _c_steps(x, subset_idx, h, n_steps):
    """Concentration steps from an initial subset; stops early when det stops decreasing."""
    mu, cov = _mean_cov(x[subset_idx])
    det = _logdet(cov)
    idx = subset_idx
    for _ in range(n_steps):
        if det == -np.inf:
            break
        d2 = _sq_dist(x, mu, cov)
        new_idx = np.sort(np.argpartition(d2, h - 1)[:h])
        new_mu, new_cov = _mean_cov(x[new_idx])
        new_det = _logdet(new_cov)
        if new_det >= det - 1e-12:
            if new_det <= det:
                idx, mu, cov, det = new_idx, new_mu, new_cov, new_det
            break
        idx, mu, cov, det = new_idx, new_mu, new_cov, new_det
    return det, idx, mu, cov


def _ridge(cov: np.ndarray) -> np.ndarray:
    p = len(cov)
    cond_ok = True
    try:
        ev = np.linalg.eigvalsh(cov)
        cond_ok = ev[0] > 1e-10 * max(ev[-1], 1e-300)
    except np.linalg.LinAlgError:
        cond_ok = False
    if cond_ok:
        return cov
    return cov + np.eye(p) * 1e-6 * np.trace(cov) / p


def mcd_fit(features, support_fraction: Optional[float] = None, seed: int = 0,
            n_trials: int = 50, n_csteps: int = 3, n_best: int = 5, reweight: bool = True) -> MCDModel:
    """FAST-MCD location/scatter estimate.

    ``n_trials`` random (p+1)-subsets are grown to h points and improved by
    ``n_csteps`` concentration steps; the ``n_best`` lowest-determinant
    candidates are iterated to convergence. The winning scatter is scaled for
    consistency at the normal model and, with ``reweight``, re-estimated on the
    points within the 97.5% chi-square cut.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("features must be an n x p matrix")
    n, p = x.shape
    if n <= 2 * p:
        raise TooFewSamples(f"MCD needs n > 2p (n={n}, p={p})")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    if support_fraction is None:
        h = int(math.ceil((n + p + 1) / 2))
    else:
        h = int(math.ceil(support_fraction * n))
    h = min(max(h, p + 1), n)
    rng = np.random.default_rng(seed)

    candidates = []
    for _ in range(n_trials):
        start = rng.choice(n, size=p + 1, replace=False)
        mu, cov = _mean_cov(x[start])
        if _logdet(cov) == -np.inf:
            cov = cov + np.eye(p) * 1e-6 * max(np.trace(np.cov(x.T)) / p, 1e-12)
        d2 = _sq_dist(x, mu, cov)
        init = np.sort(np.argpartition(d2, h - 1)[:h])
        candidates.append(_c_steps(x, init, h, n_csteps))
    candidates.sort(key=lambda c: c[0])
    refined = [_c_steps(x, c[1], h, 100) for c in candidates[:n_best]]
    refined.sort(key=lambda c: c[0])
    _, support, mu, cov = refined[0]

    cov = _ridge(cov)
    d2 = _sq_dist(x, mu, cov)
    cov = cov * np.median(d2) / stats.chi2.ppf(0.5, p)
    if reweight:
        d2 = _sq_dist(x, mu, cov)
        keep = d2 <= stats.chi2.ppf(0.975, p)
        if keep.sum() > p:
            mu, cov = _mean_cov(x[keep])
            cov = _ridge(cov)
            support = np.flatnonzero(keep)
    cov = 0.5 * (cov + cov.T)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFeatures("scatter matrix is not positive definite after ridge") from exc
    return MCDModel(mu, cov, h / n, chol, support=support)


def mahalanobis(model: MCDModel, x) -> np.ndarray | float:
    """Distance(s) of ``x`` (a p-vector or n x p matrix) from the fitted location."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != model.dim:
        raise DimensionMismatch(f"expected dimension {model.dim}, got {x2.shape[1]}")
    z = linalg.solve_triangular(model.chol, (x2 - model.location).T, lower=True)
    d = np.sqrt(np.sum(z * z, axis=0))
    return float(d[0]) if single else d


def _flag_count(contamination: float, n: int) -> int:
    return int(math.floor(contamination * n + 1e-9))


def mcd_calibrate(model: MCDModel, training_inliers, contamination: float) -> MCDModel:
    """Set the threshold so a ``contamination`` share of training points lies beyond it."""
    if not 0.0 < contamination <= 0.5:
        raise ValueError("contamination must lie in (0, 0.5]")
    d = np.sort(np.atleast_1d(mahalanobis(model, np.atleast_2d(training_inliers))))
    if d.size == 0:
        raise EmptyTraining("no training inliers")
    k = _flag_count(contamination, d.size)
    threshold = float(d[d.size - 1 - k])
    if threshold <= 0.0:
        threshold = float(np.finfo(float).tiny)
    return replace(model, threshold=threshold, contamination=contamination)


def mcd_predict(model: MCDModel, x):
    """``"Outlier"`` iff the distance exceeds the threshold (boundary is inlier)."""
    if model.threshold is None:
        raise Uncalibrated("call mcd_calibrate first")
    d = mahalanobis(model, x)
    if np.ndim(d) == 0:
        return OUTLIER if d > model.threshold else INLIER
    return np.where(d > model.threshold, OUTLIER, INLIER)


@dataclass
class SweepResult:
    rows: list[tuple[float, float, float]]
    selected: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["contamination", "inlier_acc", "outlier_acc", "is_selected"])
            for c, a_in, a_out in self.rows:
                w.writerow([c, a_in, a_out, int(c == self.selected)])

    def at(self, contamination: float) -> tuple[float, float]:
        for c, a_in, a_out in self.rows:
            if c == contamination:
                return a_in, a_out
        raise KeyError(contamination)


DEFAULT_GRID = tuple(round(0.01 * k, 2) for k in range(1, 51))


def sweep_contamination(train_inliers, test_inliers, test_outliers,
                        grid: Sequence[float] = DEFAULT_GRID, seed: int = 0,
                        model: Optional[MCDModel] = None) -> SweepResult:
    """Inlier/outlier accuracy per contamination; picks the max-min point (ties: smaller c)."""
    for name, arr in (("training inliers", train_inliers), ("test inliers", test_inliers),
                      ("test outliers", test_outliers)):
        if len(arr) == 0:
            raise EmptyTraining(f"{name} are empty")
    if model is None:
        model = mcd_fit(train_inliers, seed=seed)
    d_train = np.sort(mahalanobis(model, np.asarray(train_inliers)))
    d_in = mahalanobis(model, np.asarray(test_inliers))
    d_out = mahalanobis(model, np.asarray(test_outliers))
    rows = []
    for c in sorted(grid):
        if not 0.0 < c <= 0.5:
            raise ValueError("contamination grid must lie in (0, 0.5]")
        thr = d_train[d_train.size - 1 - _flag_count(c, d_train.size)]
        rows.append((float(c), float(np.mean(d_in <= thr)), float(np.mean(d_out > thr))))
    best = max(rows, key=lambda r: (min(r[1], r[2]), -r[0]))
    return SweepResult(rows, best[0])


def random_projection(dim_in: int, dim_out: int = 16, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dim_in, dim_out)) / math.sqrt(dim_out)


def reduce_features(train, *others, n_train: Optional[int] = None, dim: int = 16, seed: int = 0):
    """Project to ``dim`` dimensions when p > n/5; returns the arrays in order."""
    train = np.asarray(train, dtype=float)
    n, p = train.shape
    if p <= (n_train or n) / 5:
        return (train, *[np.asarray(o, dtype=float) for o in others])
    proj = random_projection(p, dim, seed)
    return (train @ proj, *[np.asarray(o, dtype=float) @ proj for o in others])


# --- k-means ------------------------------------------------------------------

@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray
    inertia: float
    inertia_history: tuple = ()
    outlier_cluster_id: Optional[int] = None
    shift: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.shift is not None:
            x = (x - self.shift) / self.scale
        return x

    def assign(self, x) -> np.ndarray:
        z = self.transform(np.atleast_2d(x))
        d2 = ((z[:, None, :] - self.centroids[None]) ** 2).sum(axis=-1)
        return np.argmin(d2, axis=1)

    def predict(self, x) -> np.ndarray:
        if self.outlier_cluster_id is None:
            raise Uncalibrated("outlier cluster has not been labeled")
        return np.where(self.assign(x) == self.outlier_cluster_id, OUTLIER, INLIER)


def _sq_dists(x, c):
    return ((x[:, None, :] - c[None]) ** 2).sum(axis=-1)


def kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def _lloyd(x, centers, max_iter, tol):
    history = [float(_sq_dists(x, centers).min(axis=1).sum())]
    for _ in range(max_iter):
        labels = _sq_dists(x, centers).argmin(axis=1)
        new = centers.copy()
        for j in range(len(centers)):
            members = x[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
            else:
                far = _sq_dists(x, centers).min(axis=1).argmax()
                new[j] = x[far]
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        history.append(float(_sq_dists(x, centers).min(axis=1).sum()))
        if shift < tol:
            break
    return centers, history


def kmeans_fit(features, k: int = 2, seed: int = 0, max_iter: int = 300, tol: float = 1e-6,
               n_init: int = 10, standardize: bool = False) -> KMeansModel:
    """Lloyd iterations from k-means++ seeds; the lowest-inertia restart wins."""
    x = np.asarray(features, dtype=float)
    if len(x) < k:
        raise TooFewSamples(f"k-means needs at least k={k} samples")
    shift = scale = None
    if standardize:
        shift = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        x = (x - shift) / scale
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers, history = _lloyd(x, kmeans_plus_plus(x, k, rng), max_iter, tol)
        if best is None or history[-1] < best[1][-1]:
            best = (centers, history)
    centers, history = best
    return KMeansModel(centers, history[-1], tuple(history), None, shift, scale)


def kmeans_label_outlier_cluster(model: KMeansModel, labeled_inliers) -> KMeansModel:
    """Mark the cluster holding fewer labeled inliers as the outlier cluster.

    On a tie the cluster whose centroid is farther from the inlier centroid wins.
    """
    inl = np.atleast_2d(np.asarray(labeled_inliers, dtype=float))
    counts = np.bincount(model.assign(inl), minlength=len(model.centroids))
    fewest = np.flatnonzero(counts == counts.min())
    if len(fewest) > 1:
        ref = model.transform(inl).mean(axis=0)
        dist = ((model.centroids[fewest] - ref) ** 2).sum(axis=1)
        out = int(fewest[np.argmax(dist)])
    else:
        out = int(fewest[0])
    return replace(model, outlier_cluster_id=out)
