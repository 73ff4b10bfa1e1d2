"""
Observable-subspace split of a FIM eigenbasis and greedy selection of
identifiable parameter coordinates.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import QoedError
from .fisher import EigenDecomp

__all__ = [
    "EigenSplit",
    "SelectionResult",
    "split_observable",
    "cosine_rows",
    "select_identifiable",
    "logdet_gram",
    "abs_cosines",
]

ZERO_ROW = 1e-10
RANK_TOL = 1e-12
GAIN_DECIMALS = 12


@dataclass(frozen=True, eq=False)
class EigenSplit:
    observable_idx: np.ndarray
    weak_idx: np.ndarray
    W_o: np.ndarray
    lambda_o: np.ndarray
    threshold_used: float

    @property
    def n(self) -> int:
        return int(self.observable_idx.size)


@dataclass
class SelectionResult:
    """Greedy selection outcome.

    ``k`` lists the selected row indices in the order they were added and
    ``objective_value`` is ``log det(W_k W_k^T + eps I)`` for the final set.
    ``history`` holds ``log det(I + W_k W_k^T / eps)`` after each addition,
    the shifted form of the same objective that never decreases.
    """

    k: list
    objective_value: float
    rejected: list = field(default_factory=list)
    history: list = field(default_factory=list)


def split_observable(decomp: EigenDecomp, delta_eig: float = 0.1,
                     alpha_eig: float = 0.01) -> EigenSplit:
    """Keep eigen-directions whose eigenvalue reaches
    ``max(delta_eig, alpha_eig * lambda_1)``."""
    if not (delta_eig > 0 and alpha_eig > 0):
        raise QoedError("bad-threshold", f"delta_eig={delta_eig}, alpha_eig={alpha_eig}")
    lam = np.asarray(decomp.eigenvalues, dtype=float)
    top = float(lam[0]) if lam.size else 0.0
    thr = max(delta_eig, alpha_eig * top)
    mask = lam >= thr
    o = np.flatnonzero(mask)
    return EigenSplit(
        observable_idx=o,
        weak_idx=np.flatnonzero(~mask),
        W_o=decomp.eigenvectors[:, o],
        lambda_o=lam[o],
        threshold_used=thr,
    )


def cosine_rows(r_i, r_j) -> float:
    r_i = np.asarray(r_i, dtype=float)
    r_j = np.asarray(r_j, dtype=float)
    ni, nj = np.linalg.norm(r_i), np.linalg.norm(r_j)
    if ni < 1e-12 or nj < 1e-12:
        raise QoedError("zero-row", "cosine of a zero-norm row")
    return float(np.clip(r_i @ r_j / (ni * nj), -1.0, 1.0))


def abs_cosines(W) -> np.ndarray:
    """Pairwise ``|cos|`` between the rows of ``W``; zero rows get 0."""
    W = np.asarray(W, dtype=float)
    norms = np.sqrt(np.einsum("ij,ij->i", W, W))
    safe = np.where(norms < ZERO_ROW, 1.0, norms)
    C = np.abs(W @ W.T) / np.outer(safe, safe)
    C[norms < ZERO_ROW] = 0.0
    C[:, norms < ZERO_ROW] = 0.0
    return C


def logdet_gram(rows: np.ndarray, eps: float) -> float:
    """``log det(R R^T + eps I)`` for a stack of rows ``R``."""
    if rows.shape[0] == 0:
        return 0.0
    sign, val = np.linalg.slogdet(rows @ rows.T + eps * np.eye(rows.shape[0]))
    return float(val) if sign > 0 else -np.inf


class _Residuals:
    """Regularized residual variance of a row given the selected rows.

    ``c_j(S) = eps + |r_j|^2 - r_S^T (G_S + eps I)^-1 r_S`` equals
    ``det(G_{S+j} + eps I) / det(G_S + eps I)``, so ``log c_j(S)`` is the
    exact marginal log-det gain.  It only shrinks as S grows.
    """

    def __init__(self, W, eps):
        self.W = W
        self.eps = eps
        self.sq = np.einsum("ij,ij->i", W, W)
        self.sel = []
        self.chol = None

    def add(self, j):
        self.sel.append(j)
        R = self.W[self.sel]
        self.chol = np.linalg.cholesky(R @ R.T + self.eps * np.eye(len(self.sel)))

    def c(self, j) -> float:
        if not self.sel:
            return self.eps + self.sq[j]
        b = self.W[self.sel] @ self.W[j]
        y = np.linalg.solve(self.chol, b)
        return self.eps + self.sq[j] - float(y @ y)


def select_identifiable(W_o, budget=None, delta_cos: float = 0.95,
                        eps_logdet: float = 1e-9) -> SelectionResult:
    """Lazy-greedy maximization of ``log det(W_ko W_ko^T + eps I)``.

    Rows are added one at a time, always the feasible row with the largest
    marginal gain (ties go to the smaller index).  A row is feasible when its
    absolute cosine with every selected row is at most ``delta_cos``.
    Selection stops at ``budget`` (default: number of columns) or when no
    feasible row adds a new direction to the span of the selection.
    """
    W = np.asarray(W_o, dtype=float)
    if W.ndim != 2 or W.shape[1] == 0:
        raise QoedError("no-observable-subspace", "W_o has no columns")
    m, n = W.shape
    if budget is None:
        budget = n
    if not 1 <= budget <= n:
        raise QoedError("bad-budget", f"budget {budget} not in [1, {n}]")
    if not 0 < delta_cos <= 1:
        raise QoedError("bad-threshold", f"delta_cos={delta_cos}")

    res = _Residuals(W, eps_logdet)
    norms = np.sqrt(res.sq)
    too_close = abs_cosines(W) > delta_cos
    rejected = []
    heap = []
    for j in range(m):
        if norms[j] < ZERO_ROW:
            rejected.append((j, "zero-row"))
            continue
        gain = round(np.log(res.c(j)), GAIN_DECIMALS)
        heap.append((-gain, j, 0))
    heapq.heapify(heap)

    k = []
    history = []
    shifted = 0.0
    step = 0
    while heap and len(k) < budget:
        neg_gain, j, stamp = heapq.heappop(heap)
        if too_close[k, j].any():
            # the selection only grows, so an infeasible row stays infeasible
            rejected.append((j, "cosine"))
            continue
        if stamp != step:
            gain = round(np.log(res.c(j)), GAIN_DECIMALS)
            heapq.heappush(heap, (-gain, j, step))
            continue
        c = np.exp(-neg_gain)
        if c - eps_logdet <= RANK_TOL:
            heapq.heappush(heap, (neg_gain, j, stamp))
            break
        k.append(j)
        res.add(j)
        shifted += np.log(c / eps_logdet)
        history.append(shifted)
        step += 1
    for j in sorted(j for _, j, _ in heap):
        rejected.append((j, "cosine" if too_close[k, j].any() else "budget"))
    return SelectionResult(
        k=k,
        objective_value=logdet_gram(W[k], eps_logdet),
        rejected=rejected,
        history=history,
    )
