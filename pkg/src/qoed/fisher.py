"""
Fisher information matrices built from trajectory score samples.

A score sample is the gradient of a trajectory log-likelihood with respect
to the hidden parameters; the Fisher information matrix (FIM) is the
expected outer product of the score.  Everything here is a pure function of
its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import QoedError

__all__ = [
    "FisherMatrix",
    "EigenDecomp",
    "as_scores",
    "estimate_fim",
    "eigendecompose",
    "directional_information",
    "crlb_trace",
    "principal_submatrix_trace",
]

PSD_TOL = 1e-10
EIG_CLAMP = 1e-10


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """Symmetric PSD information matrix.

    ``sample_count`` is the number of score samples the matrix was averaged
    from; 0 marks a closed-form matrix.
    """

    matrix: np.ndarray
    sample_count: int = 0

    def __post_init__(self):
        a = np.array(self.matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise QoedError("not-square", f"shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise QoedError("non-finite", "FIM has NaN/Inf entries")
        a = 0.5 * (a + a.T)
        if a.size:
            lam_min = np.linalg.eigvalsh(a)[0]
            scale = max(np.trace(a), 0.0)
            if lam_min < -PSD_TOL * max(scale, 1e-300) and lam_min < -1e-300:
                raise QoedError("not-psd", f"smallest eigenvalue {lam_min:.3e}")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        if self.sample_count < 0:
            raise QoedError("bad-count", str(self.sample_count))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True, eq=False)
class EigenDecomp:
    """Eigenvalues sorted descending; eigenvectors are the columns of W."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


def as_scores(scores) -> np.ndarray:
    """Stack score samples into an (N, m) array, validating shape and values."""
    if isinstance(scores, np.ndarray):
        arr = np.asarray(scores, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise QoedError("dim-mismatch", f"score array of shape {arr.shape}")
    else:
        rows = [np.asarray(g, dtype=float).ravel() for g in scores]
        if not rows:
            raise QoedError("no-samples")
        if len({r.shape[0] for r in rows}) != 1:
            raise QoedError("dim-mismatch", "score samples differ in length")
        arr = np.stack(rows)
    if arr.shape[0] == 0:
        raise QoedError("no-samples")
    if not np.all(np.isfinite(arr)):
        raise QoedError("non-finite", "score sample has NaN/Inf entries")
    return arr


def estimate_fim(scores) -> FisherMatrix:
    """Monte-Carlo FIM ``(1/N) sum g_n g_n^T`` from N score samples."""
    g = as_scores(scores)
    n = g.shape[0]
    # sort rows so the result does not depend on sample order
    order = np.lexsort(g.T[::-1])
    g = g[order]
    return FisherMatrix(g.T @ g / n, sample_count=n)


def _fix_signs(w: np.ndarray) -> np.ndarray:
    w = w.copy()
    for j in range(w.shape[1]):
        col = w[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            w[:, j] = -col
    return w


def eigendecompose(F) -> EigenDecomp:
    """Eigenpairs of a FIM, sorted by decreasing eigenvalue.

    Ties keep the order returned for the original basis, eigenvalues below
    ``1e-10 * lambda_1`` are clamped to zero, and each eigenvector is
    oriented so its first nonzero entry is positive.
    """
    a = F.matrix if isinstance(F, FisherMatrix) else np.asarray(F, dtype=float)
    lam, w = np.linalg.eigh(a)
    # eigh returns ascending order; reverse blocks of equal values stably
    order = np.argsort(-lam, kind="stable")
    lam, w = lam[order], w[:, order]
    top = lam[0] if lam.size else 0.0
    lam = np.where(lam < EIG_CLAMP * max(top, 0.0), 0.0, lam)
    lam = np.maximum(lam, 0.0)
    return EigenDecomp(lam, _fix_signs(w))


def directional_information(F, w) -> float:
    """Fisher information ``w^T F w`` along a unit direction."""
    a = F.matrix if isinstance(F, FisherMatrix) else np.asarray(F, dtype=float)
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1.0) > 1e-8:
        raise QoedError("not-normalized", f"|w| = {np.linalg.norm(w):.12g}")
    return max(float(w @ a @ w), 0.0)


def crlb_trace(F, eps: float) -> float:
    """``tr((F + eps I)^-1)``, the Cramer-Rao bound on total estimator MSE.

    A small explicit ``eps`` makes degenerate directions dominate the bound
    instead of hiding them behind a pseudo-inverse.
    """
    if not eps > 0:
        raise QoedError("bad-eps", f"eps must be positive, got {eps}")
    a = F.matrix if isinstance(F, FisherMatrix) else np.asarray(F, dtype=float)
    lam = np.linalg.eigvalsh(a + eps * np.eye(a.shape[0]))
    return float(np.sum(1.0 / lam))


def _check_index(k, m) -> np.ndarray:
    idx = np.asarray(list(k), dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= m):
        raise QoedError("bad-index", f"indices {idx.tolist()} outside [0, {m})")
    if len(set(idx.tolist())) != idx.size:
        raise QoedError("bad-index", f"repeated index in {idx.tolist()}")
    return idx


def principal_submatrix_trace(F, k) -> float:
    """Trace of the principal submatrix ``F[k, k]``."""
    a = F.matrix if isinstance(F, FisherMatrix) else np.asarray(F, dtype=float)
    idx = _check_index(k, a.shape[0])
    if idx.size == 0:
        raise QoedError("bad-index", "empty index set")
    return float(np.trace(a[np.ix_(idx, idx)]))
