"""
Scalar information objectives (BOED, Agnostic, QOED) computed from a FIM
and a set of critical parameter indices, plus the quasi-optimality
constants that relate the QOED optimum to the full-trace optimum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import QoedError
from .fisher import FisherMatrix, _check_index, eigendecompose, estimate_fim
from .subspace import (EigenSplit, SelectionResult, abs_cosines, select_identifiable,
                       split_observable)

__all__ = [
    "Thresholds",
    "FimBlocks",
    "QuasiOptConstants",
    "BonusBreakdown",
    "KINDS",
    "default_eps",
    "block_partition",
    "schur_complement",
    "boed_objective",
    "agnostic_objective",
    "qoed_objective",
    "residual_regression_trace",
    "quasiopt_constants",
    "rho_factor",
    "projection_residual",
    "analyze_fim",
    "selection_classes",
    "qoed_bonus",
    "bonus_value",
]

KINDS = ("boed", "agnostic", "qoed")


@dataclass(frozen=True)
class Thresholds:
    """Knobs of the selection pipeline.

    ``eps=None`` picks the scale-aware default of :func:`default_eps`;
    ``budget=None`` lets the selection use every observable direction.
    """

    delta_eig: float = 0.1
    alpha_eig: float = 0.01
    delta_cos: float = 0.95
    eps: float | None = None
    eps_logdet: float = 1e-9
    budget: int | None = None


@dataclass(frozen=True, eq=False)
class FimBlocks:
    kk: np.ndarray
    kn: np.ndarray
    nk: np.ndarray
    nn: np.ndarray
    k: np.ndarray
    kbar: np.ndarray

    def reassemble(self) -> np.ndarray:
        m = self.k.size + self.kbar.size
        out = np.empty((m, m))
        out[np.ix_(self.k, self.k)] = self.kk
        out[np.ix_(self.k, self.kbar)] = self.kn
        out[np.ix_(self.kbar, self.k)] = self.nk
        out[np.ix_(self.kbar, self.kbar)] = self.nn
        return out


@dataclass(frozen=True)
class QuasiOptConstants:
    eta: float
    beta: float
    rho: float


def _mat(F) -> np.ndarray:
    return F.matrix if isinstance(F, FisherMatrix) else np.asarray(F, dtype=float)


def default_eps(F) -> float:
    """Scale-aware stabilization ``1e-8 * max(1, tr(F)/m)``."""
    a = _mat(F)
    return 1e-8 * max(1.0, float(np.trace(a)) / a.shape[0])


def block_partition(F, k) -> FimBlocks:
    a = _mat(F)
    m = a.shape[0]
    idx = _check_index(k, m)
    if idx.size == 0 or idx.size == m:
        raise QoedError("degenerate-partition",
                        f"|k|={idx.size} of m={m}; use the BOED or empty objective")
    kbar = np.setdiff1d(np.arange(m), idx)
    return FimBlocks(
        kk=a[np.ix_(idx, idx)],
        kn=a[np.ix_(idx, kbar)],
        nk=a[np.ix_(kbar, idx)],
        nn=a[np.ix_(kbar, kbar)],
        k=idx,
        kbar=kbar,
    )


def schur_complement(blocks: FimBlocks, eps: float) -> np.ndarray:
    """Nuisance-adjusted information ``F_kk - F_kn (F_nn + eps I)^-1 F_nk``."""
    if not eps > 0:
        raise QoedError("bad-eps", f"eps must be positive, got {eps}")
    nn = blocks.nn + eps * np.eye(blocks.nn.shape[0])
    c = scipy.linalg.cho_factor(nn, lower=True)
    s = blocks.kk - blocks.kn @ scipy.linalg.cho_solve(c, blocks.nk)
    return 0.5 * (s + s.T)


def boed_objective(F) -> float:
    return float(np.trace(_mat(F)))


def agnostic_objective(F, k) -> float:
    a = _mat(F)
    idx = _check_index(k, a.shape[0])
    return float(np.trace(a[np.ix_(idx, idx)])) if idx.size else 0.0


def qoed_objective(F, k, eps: float | None = None) -> float:
    """Trace of the Schur complement of the nuisance block.

    With no nuisance coordinates this is the full trace; with no critical
    coordinates it is zero.
    """
    a = _mat(F)
    m = a.shape[0]
    idx = _check_index(k, m)
    if idx.size == 0:
        return 0.0
    if idx.size == m:
        return boed_objective(a)
    if eps is None:
        eps = default_eps(a)
    return float(np.trace(schur_complement(block_partition(a, idx), eps)))


def residual_regression_trace(blocks: FimBlocks, eps: float = 0.0) -> float:
    """Residual score energy after the best linear prediction from nuisances.

    Minimizes ``tr(F_kk - A F_nk - F_kn A^T + A (F_nn + eps I) A^T)`` over A,
    i.e. ``min_A E|g_k - A g_n|^2`` (ridge-penalized when ``eps > 0``), by
    solving the normal equations for A and evaluating the quadratic form.
    """
    nn = blocks.nn + eps * np.eye(blocks.nn.shape[0])
    # normal equations A nn = kn, solved by least squares on nn^T
    A = np.linalg.lstsq(nn.T, blocks.kn.T, rcond=None)[0].T
    val = (np.trace(blocks.kk) - np.trace(A @ blocks.nk) - np.trace(blocks.kn @ A.T)
           + np.trace(A @ nn @ A.T))
    return float(val)


def _inv_sqrt(a: np.ndarray) -> np.ndarray:
    lam, v = np.linalg.eigh(0.5 * (a + a.T))
    top = max(lam[-1], 0.0)
    lam = np.maximum(lam, 1e-12 * top if top > 0 else 1e-300)
    return (v / np.sqrt(lam)) @ v.T


def rho_factor(eta: float, beta: float) -> float:
    """Guaranteed fraction ``(1 - beta) / (1 + eta)`` of the full-trace optimum."""
    return (1.0 - beta) / (1.0 + eta)


def quasiopt_constants(F, k) -> QuasiOptConstants:
    """Nuisance mass ``eta`` and cross-block confounding ``beta`` for one FIM."""
    b = block_partition(F, k)
    tkk = float(np.trace(b.kk))
    if tkk <= 0:
        raise QoedError("degenerate-critical-block", "tr(F_kk) = 0, eta undefined")
    eta = float(np.trace(b.nn)) / tkk
    M = _inv_sqrt(b.kk) @ b.kn @ _inv_sqrt(b.nn)
    beta = float(np.linalg.norm(M, 2) ** 2) if M.size else 0.0
    return QuasiOptConstants(eta=eta, beta=beta, rho=rho_factor(eta, beta))


def projection_residual(F, o) -> float:
    """Expected squared score lost by projecting onto eigen-directions ``o``:
    ``tr((I - W_o W_o^T) F)``."""
    a = _mat(F)
    d = eigendecompose(a)
    idx = _check_index(o, a.shape[0]) if len(o) else np.array([], dtype=int)
    W_o = d.eigenvectors[:, idx]
    P = W_o @ W_o.T
    return float(np.trace((np.eye(a.shape[0]) - P) @ a))


@dataclass
class BonusBreakdown:
    """Everything the selection pipeline produces for one FIM."""

    fim: FisherMatrix
    eigenvalues: np.ndarray
    split: EigenSplit
    selection: SelectionResult
    boed: float
    agnostic: float
    qoed: float

    @property
    def k(self) -> list:
        return list(self.selection.k)

    def value(self, kind: str) -> float:
        if kind not in KINDS:
            raise QoedError("bad-kind", kind)
        return getattr(self, kind)


def analyze_fim(F, thresholds: Thresholds = Thresholds()) -> BonusBreakdown:
    """Eigen-split, coordinate selection and all three objectives for one FIM."""
    if not isinstance(F, FisherMatrix):
        F = FisherMatrix(F)
    d = eigendecompose(F)
    split = split_observable(d, thresholds.delta_eig, thresholds.alpha_eig)
    if split.n == 0:
        sel = SelectionResult(k=[], objective_value=0.0)
    else:
        budget = split.n if thresholds.budget is None else min(thresholds.budget, split.n)
        sel = select_identifiable(split.W_o, budget, thresholds.delta_cos,
                                  thresholds.eps_logdet)
    eps = thresholds.eps if thresholds.eps is not None else default_eps(F)
    return BonusBreakdown(
        fim=F,
        eigenvalues=d.eigenvalues,
        split=split,
        selection=sel,
        boed=boed_objective(F),
        agnostic=agnostic_objective(F, sel.k),
        qoed=qoed_objective(F, sel.k, eps),
    )


def selection_classes(F, thresholds_seq) -> np.ndarray:
    """Group threshold settings that are indistinguishable on ``F``.

    Returns one integer label per entry of ``thresholds_seq``.  Settings with
    equal labels give :func:`analyze_fim` the same observable split, budget,
    cosine-feasibility pattern and stabilizers, hence bit-identical
    selections and objective values, without running the greedy per setting.
    """
    if not isinstance(F, FisherMatrix):
        F = FisherMatrix(F)
    d = eigendecompose(F)
    splits, cosines, keys = {}, {}, {}
    labels = np.empty(len(thresholds_seq), dtype=int)
    for i, th in enumerate(thresholds_seq):
        se = (th.delta_eig, th.alpha_eig)
        if se not in splits:
            splits[se] = split_observable(d, *se)
        sp = splits[se]
        eps = th.eps if th.eps is not None else default_eps(F)
        if sp.n == 0:
            key = (0,)
        else:
            budget = sp.n if th.budget is None else min(th.budget, sp.n)
            if sp.n not in cosines:
                cosines[sp.n] = abs_cosines(sp.W_o)
            pattern = (cosines[sp.n] > th.delta_cos).tobytes()
            key = (sp.n, budget, pattern, th.eps_logdet, eps)
        labels[i] = keys.setdefault(key, len(keys))
    return labels


def qoed_bonus(scores, thresholds: Thresholds = Thresholds()):
    """QOED exploration bonus from trajectory score samples.

    Returns ``(bonus, selection)``.  An empty observable subspace yields a
    zero bonus and an empty selection.
    """
    out = analyze_fim(estimate_fim(scores), thresholds)
    return out.qoed, out.selection


def bonus_value(F, kind: str, thresholds: Thresholds = Thresholds()) -> float:
    if kind == "boed":
        return boed_objective(F)
    return analyze_fim(F, thresholds).value(kind)
