"""Two-source blind separation with whitening and symmetric FastICA.

Complex observations are separated as real rows: each observation contributes
its I samples followed by its Q samples (256 reals), and the same unmixing is
applied to both halves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional, Sequence

import numpy as np

from rfdsa.nnet.model import NeuralModel, classify
from rfdsa.sigsynth import FRAME_LEN, IQFrame, SignalClass


class RankDeficient(ValueError):
    pass


class NotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class MixtureObservation:
    first: IQFrame
    second: IQFrame
    mixing: Optional[np.ndarray] = None

    def stacked(self) -> np.ndarray:
        """2 x 256 real matrix: [I | Q] per observation."""
        return np.stack([_to_real(self.first.samples), _to_real(self.second.samples)])


@dataclass
class SeparationResult:
    unmixing: np.ndarray
    sources: np.ndarray
    iterations: int
    converged: bool
    whitening: Optional[np.ndarray] = field(default=None, repr=False)


def _to_real(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def _to_complex(r: np.ndarray) -> np.ndarray:
    half = r.size // 2
    return r[:half] + 1j * r[half:]


def whiten(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zero-mean, identity-covariance rows.

    Returns ``(whitened, transform, mean)`` with ``whitened = transform @ (x - mean)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] < 64:
        raise ValueError("whiten needs a (rows x N) matrix with N >= 64")
    mean = x.mean(axis=1, keepdims=True)
    xc = x - mean
    cov = xc @ xc.T / x.shape[1]
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= 1e-10 * max(evals[-1], 1e-300):
        raise RankDeficient("observations are linearly dependent")
    transform = (evecs / np.sqrt(evals)).T
    return transform @ xc, transform, mean


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    s, u = np.linalg.eigh(w @ w.T)
    return (u / np.sqrt(s)) @ u.T @ w


def fastica(xw, tol: float = 1e-6, max_iter: int = 500, seed: int = 0) -> SeparationResult:
    """Symmetric fixed-point FastICA with the tanh (log-cosh) contrast.

    ``xw`` must already be white. Convergence: every diagonal entry of
    ``W_new W_old^T`` has magnitude above ``1 - tol`` on two successive
    iterations. A single small step is not enough, because a start close to
    the unstable (saddle) fixed point moves slowly at first. When
    ``max_iter`` is exhausted the last iterate is returned with
    ``converged=False``.
    """
    xw = np.asarray(xw, dtype=float)
    k, n = xw.shape
    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((k, k)))
    converged, it, calm = False, 0, 0
    for it in range(1, max_iter + 1):
        y = w @ xw
        g = np.tanh(y)
        g_prime = 1.0 - g * g
        w_new = _sym_decorrelate(g @ xw.T / n - g_prime.mean(axis=1)[:, None] * w)
        calm = calm + 1 if np.min(np.abs(np.einsum("ij,ij->i", w_new, w))) > 1.0 - tol else 0
        w = w_new
        if calm >= 2:
            converged = True
            break
    sources = w @ xw
    sources = sources / sources.std(axis=1, keepdims=True)
    return SeparationResult(w, sources, it, converged)


def separate(obs: MixtureObservation, tol: float = 1e-6, max_iter: int = 500,
             seed: int = 0) -> tuple[SeparationResult, list[IQFrame]]:
    """Unmix an observation pair; recovered frames are rescaled to unit power."""
    x = obs.stacked()
    xw, transform, _ = whiten(x)
    res = fastica(xw, tol, max_iter, seed)
    res.whitening = transform
    full = res.unmixing @ transform
    frames = []
    for row in full @ x:
        z = _to_complex(row)
        power = np.mean(np.abs(z) ** 2)
        z = z / np.sqrt(power) if power > 0 else z
        frames.append(IQFrame(z, obs.first.snr_db, "idle"))
    return res, frames


def separate_and_classify(obs: MixtureObservation, model: NeuralModel,
                          seed: int = 0) -> tuple[SignalClass, SignalClass]:
    """Classify both recovered components; the pair is returned sorted by class code."""
    _, frames = separate(obs, seed=seed)
    found = sorted(classify(model, f.samples)[0] for f in frames)
    return found[0], found[1]


def matched_correlation(recovered, truth) -> float:
    """Smallest |corr| over the best source-to-estimate matching (sign and order free)."""
    recovered = np.atleast_2d(np.asarray(recovered, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    k = len(truth)
    c = np.abs(np.corrcoef(recovered, truth)[:k, k:])
    best = max(permutations(range(k)), key=lambda p: min(c[i, p[i]] for i in range(k)))
    return float(min(c[i, best[i]] for i in range(k)))


def random_orthogonal(rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0, 2 * np.pi)
    c, s = np.cos(theta), np.sin(theta)
    if rng.random() < 0.5:
        return np.array([[c, -s], [s, c]])
    return np.array([[c, s], [s, -c]])


def write_trials_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["trial_id", "snr_db", "true_pair", "predicted_pair", "correct"])
        w.writeheader()
        w.writerows(rows)
