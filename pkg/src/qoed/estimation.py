"""
Parameter estimation by rollout matching with the cross-entropy method, and
the Gaussian belief over parameters that the exploration loop maintains.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import QoedError
from .fisher import FisherMatrix
from .models import DynamicsModel, Trajectory, rollout

__all__ = ["ParamBelief", "CemConfig", "CemResult", "cem_minimize",
           "rollout_mismatch", "cem_estimate", "belief_update", "belief_trace",
           "prior_belief"]


@dataclass(frozen=True, eq=False)
class ParamBelief:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (mu.size, mu.size):
            raise QoedError("dim-mismatch", f"covariance {cov.shape} for mean of size {mu.size}")
        cov = 0.5 * (cov + cov.T)
        if mu.size and np.linalg.eigvalsh(cov)[0] < 1e-12:
            raise QoedError("bad-prior", "covariance is not positive definite")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", cov)


def prior_belief(model: DynamicsModel, width: float = 0.25) -> ParamBelief:
    """Gaussian centred in the parameter box with std ``width * range``."""
    span = model.upper - model.lower
    return ParamBelief(0.5 * (model.lower + model.upper), np.diag((width * span) ** 2))


@dataclass(frozen=True)
class CemConfig:
    iterations: int = 5
    samples_per_iter: int = 2048
    elite_fraction: float = 0.1
    variance_floor: float = 1e-8
    rollouts: int = 8

    def __post_init__(self):
        if self.iterations < 1 or self.samples_per_iter < 1 or self.rollouts < 1:
            raise QoedError("bad-config", "iterations, samples and rollouts must be positive")
        if not 0 < self.elite_fraction < 1:
            raise QoedError("bad-config", "elite_fraction must lie in (0, 1)")
        if self.n_elite < 2:
            raise QoedError("bad-config", "fewer than two elites per iteration")

    @property
    def n_elite(self) -> int:
        return int(np.ceil(self.elite_fraction * self.samples_per_iter))


@dataclass
class CemResult:
    x: np.ndarray
    value: float
    best_history: list = field(default_factory=list)
    mean: np.ndarray | None = None
    covariance: np.ndarray | None = None
    best_x: np.ndarray | None = None


def cem_minimize(objective, mean, cov, lower, upper, cfg: CemConfig, rng,
                 diagonal: bool = False) -> CemResult:
    """Cross-entropy minimization of a batched objective over a box.

    ``objective`` maps an (n, d) array of candidates to n values.  Candidates
    are drawn from the current Gaussian and clipped to the box; the elites
    (lowest values, ties by candidate index) refit mean and covariance.  The
    best candidate so far is re-inserted each iteration, so the best value
    never increases.  Returns the final elite mean as ``x``.  ``diagonal``
    refits only per-coordinate variances, for searches with more dimensions
    than elites.
    """
    mean = np.asarray(mean, dtype=float).copy()
    cov = np.asarray(cov, dtype=float).copy()
    d = mean.size
    n = cfg.samples_per_iter
    best_x, best_v = None, np.inf
    history = []
    for _ in range(cfg.iterations):
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise QoedError("collapsed-search", "search covariance lost definiteness") from None
        X = mean + rng.standard_normal((n, d)) @ L.T
        if best_x is not None:
            X[0] = best_x
        X = np.clip(X, lower, upper)
        v = np.asarray(objective(X), dtype=float)
        v = np.where(np.isfinite(v), v, np.inf)
        order = np.lexsort((np.arange(n), v))
        elite = X[order[: cfg.n_elite]]
        if v[order[0]] <= best_v:
            best_v, best_x = float(v[order[0]]), X[order[0]].copy()
        history.append(best_v)
        mean = elite.mean(axis=0)
        diff = elite - mean
        if diagonal:
            cov = np.diag(np.mean(diff * diff, axis=0) + cfg.variance_floor)
        else:
            cov = diff.T @ diff / elite.shape[0] + cfg.variance_floor * np.eye(d)
        cov = 0.5 * (cov + cov.T)
        if not np.all(np.isfinite(cov)):
            raise QoedError("collapsed-search", "non-finite search covariance")
    return CemResult(x=mean, value=best_v, best_history=history, mean=mean,
                     covariance=cov, best_x=best_x)


def rollout_mismatch(model: DynamicsModel, observed, phis, noise) -> np.ndarray:
    """Monte-Carlo estimate of ``E |tau_obs - tau(phi)|^2`` for each candidate.

    ``observed`` is a list of trajectories; ``noise`` holds one standard-normal
    array of shape (R, T_i, d_s) per trajectory, shared by all candidates.
    """
    phis = np.asarray(phis, dtype=float)
    total = np.zeros(phis.shape[0])
    for traj, z in zip(observed, noise):
        sim = rollout(model, phis[:, None, :], traj.states[0], traj.actions, z[None])
        err = sim[:, :, 1:, :] - traj.states[1:]
        total += np.mean(np.sum(err * err, axis=(-1, -2)), axis=1)
    return total


def cem_estimate(model: DynamicsModel, observed, belief: ParamBelief,
                 cfg: CemConfig = CemConfig(), rng=None, return_result=False):
    """Estimate phi by matching open-loop rollouts to observed trajectories.

    ``observed`` is a trajectory or a list of them (all replayed with their
    recorded actions).  Rollout noise uses common random numbers across every
    candidate and iteration.
    """
    if isinstance(observed, Trajectory):
        observed = [observed]
    if not observed or any(len(t) < 1 for t in observed):
        raise QoedError("empty-trajectory", "need at least one transition")
    rng = np.random.default_rng(rng)
    noisy = np.any(model.sigma > 0)
    R = cfg.rollouts if noisy else 1
    noise = [rng.standard_normal((R, len(t), model.d_s)) if noisy
             else np.zeros((1, len(t), model.d_s)) for t in observed]
    res = cem_minimize(lambda X: rollout_mismatch(model, observed, X, noise),
                       belief.mean, belief.covariance, model.lower, model.upper, cfg, rng)
    x = model.clip_phi(res.x)
    return (x, res) if return_result else x


def belief_update(belief: ParamBelief, F, mean=None) -> ParamBelief:
    """Information-form covariance update ``(F + Sigma^-1)^-1``.

    The mean is replaced by ``mean`` when given (the caller passes its latest
    estimate) and kept otherwise.
    """
    S = belief.covariance
    if np.linalg.eigvalsh(S)[0] < 1e-12:
        raise QoedError("bad-prior", "prior covariance is not positive definite")
    a = F.matrix if isinstance(F, FisherMatrix) else np.asarray(F, dtype=float)
    # (Sigma^-1 + F)^-1 = (I + Sigma F)^-1 Sigma, avoiding an explicit inverse
    new = np.linalg.solve(np.eye(S.shape[0]) + S @ a, S)
    new = 0.5 * (new + new.T)
    lam, v = np.linalg.eigh(new)
    new = (v * np.maximum(lam, 1e-12)) @ v.T
    mu = belief.mean if mean is None else np.asarray(mean, dtype=float)
    return ParamBelief(mu, new)


def belief_trace(belief: ParamBelief) -> float:
    return float(np.trace(belief.covariance))
