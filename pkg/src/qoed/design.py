"""
Open-loop experiment design and the explore / estimate / update loop.

A design is an action sequence held piecewise constant over ``knots``
segments.  Its value is the expected discounted task reward plus ``alpha``
times an information bonus (BOED, Agnostic or QOED) computed from
trajectory scores simulated at the belief mean.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import QoedError
from .estimation import (CemConfig, ParamBelief, belief_trace, belief_update,
                         cem_estimate, cem_minimize)
from .fisher import FisherMatrix
from .models import DynamicsModel, Trajectory, rollout, trajectory_fim
from .objectives import KINDS, Thresholds, analyze_fim, quasiopt_constants

__all__ = [
    "ExplorationConfig",
    "DesignCandidate",
    "HiddenSystem",
    "RoundRecord",
    "ExplorationReport",
    "EvalSet",
    "make_eval_set",
    "expand_knots",
    "design_fims",
    "evaluate_designs",
    "evaluate_design",
    "optimize_design",
    "dynamics_prediction_rmse",
    "run_exploration",
    "breakdown_constants",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExplorationConfig:
    """Settings of the exploration loop.

    ``alpha``, ``horizon_seconds``, ``delta_var`` and ``delta_dyn`` default to
    the published values; the rest are desk-scale choices.  ``fim_source``
    selects how the design FIM is formed from simulated trajectories:
    ``"scores"`` averages score outer products, ``"expected"`` averages the
    exact per-step conditional information along the same trajectories.
    """

    alpha: float = 1.0
    horizon_seconds: float = 2.0
    dt: float = 0.05
    gamma: float = 0.99
    delta_var: float = 0.05 ** 2
    delta_dyn: float = 1.0
    max_rounds: int = 6
    knots: int = 4
    n_mc: int = 32
    fim_source: str = "expected"
    bonus_average: bool = False
    state_cost: float = 1.0
    action_cost: float = 0.0
    design_iterations: int = 5
    design_samples: int = 64
    design_elite_fraction: float = 0.125
    eval_episodes: int = 16

    def __post_init__(self):
        if not (self.alpha >= 0 and self.horizon_seconds > 0 and self.dt > 0):
            raise QoedError("bad-config", "alpha, horizon and dt must be positive")
        if not 0 < self.gamma <= 1:
            raise QoedError("bad-config", "gamma must lie in (0, 1]")
        if not (self.delta_var > 0 and self.delta_dyn > 0 and self.max_rounds >= 1):
            raise QoedError("bad-config", "termination thresholds must be positive")
        if self.fim_source not in ("scores", "expected"):
            raise QoedError("bad-config", f"fim_source {self.fim_source!r}")

    @property
    def steps(self) -> int:
        return int(round(self.horizon_seconds / self.dt))

    def design_cem(self) -> CemConfig:
        return CemConfig(iterations=self.design_iterations,
                         samples_per_iter=self.design_samples,
                         elite_fraction=self.design_elite_fraction)


@dataclass
class DesignCandidate:
    actions: np.ndarray
    objective_value: float
    objective_kind: str
    history: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class HiddenSystem:
    """The simulator with the true (hidden) parameters."""

    model: DynamicsModel
    phi: np.ndarray
    s0: np.ndarray

    def execute(self, actions, rng) -> Trajectory:
        z = rng.standard_normal((len(actions), self.model.d_s))
        states = rollout(self.model, self.phi, self.s0, actions, z)
        return Trajectory(states, actions)


@dataclass(frozen=True, eq=False)
class EvalSet:
    s0: np.ndarray        # (E, d_s)
    actions: np.ndarray   # (E, T, d_a)


def make_eval_set(model: DynamicsModel, episodes: int, steps: int, rng,
                  s0_scale: float = 0.0) -> EvalSet:
    """Held-out open-loop probes: i.i.d. uniform actions inside the bounds."""
    a = rng.uniform(model.action_low, model.action_high, size=(episodes, steps, model.d_a))
    s0 = s0_scale * rng.standard_normal((episodes, model.d_s))
    return EvalSet(s0, a)


def dynamics_prediction_rmse(model: DynamicsModel, phi_true, phi_hat,
                             eval_set: EvalSet) -> float:
    """RMSE between noiseless rollouts under the true and estimated parameters,
    over every predicted state of every probe (reports scale it by 100)."""
    true = rollout(model, phi_true, eval_set.s0, eval_set.actions)
    pred = rollout(model, phi_hat, eval_set.s0, eval_set.actions)
    diff = true[..., 1:, :] - pred[..., 1:, :]
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=-1))))


def expand_knots(knots, steps: int) -> np.ndarray:
    """Hold each of K knot actions for an equal share of ``steps``.

    ``knots`` has shape (..., K, d_a); returns (..., steps, d_a).
    """
    knots = np.asarray(knots, dtype=float)
    K = knots.shape[-2]
    idx = np.minimum((np.arange(steps) * K) // steps, K - 1)
    return knots[..., idx, :]


def design_fims(model: DynamicsModel, phi, s0, actions, noise,
                source: str = "scores") -> np.ndarray:
    """Trajectory FIMs for a batch of designs, shape (P, m, m).

    ``actions`` is (P, T, d_a) and ``noise`` (N, T, d_s) standard normals shared
    across designs.  ``phi`` is (m,) or (N, m) (one draw per rollout).
    """
    phi = np.asarray(phi, dtype=float)
    phi_b = phi[None] if phi.ndim == 2 else phi
    states = rollout(model, phi_b, s0, actions[:, None], noise[None])
    J = model.jacobian(states[..., :-1, :], actions[:, None], phi_b[..., None, :])
    J = J / model.sigma[:, None]
    if source == "scores":
        # score = sum_t J_t^T z_t / sigma, with z the injected standard normals
        g = np.einsum("pntij,nti->pnj", J, noise)
        F = np.einsum("pni,pnj->pij", g, g) / noise.shape[0]
    else:
        F = np.einsum("pntij,pntik->pjk", J, J) / noise.shape[0]
    return 0.5 * (F + np.swapaxes(F, -1, -2))


def _discounted_reward(states, actions, cfg: ExplorationConfig) -> np.ndarray:
    T = actions.shape[-2]
    disc = cfg.gamma ** np.arange(T)
    cost = cfg.state_cost * np.sum(states[..., :-1, :] ** 2, axis=-1)
    if cfg.action_cost:
        cost = cost + cfg.action_cost * np.sum(actions ** 2, axis=-1)
    return -(cost * disc).sum(axis=-1)


def _bonus_values(fims, kind, thresholds, observer=None):
    if kind == "boed":
        return np.trace(fims, axis1=-2, axis2=-1)
    if observer is not None:
        observer(fims)
    out = np.empty(fims.shape[0])
    for i, F in enumerate(fims):
        out[i] = analyze_fim(FisherMatrix(F), thresholds).value(kind)
    return out


def evaluate_designs(model: DynamicsModel, belief: ParamBelief, actions, kind: str,
                     cfg: ExplorationConfig, thresholds: Thresholds, s0,
                     phi_draws, noise, observer=None) -> np.ndarray:
    """Objective of a batch of designs under shared random numbers.

    ``phi_draws`` (N, m) are belief samples for the reward term and ``noise``
    (N, T, d_s) the rollout noise, reused for the bonus rollouts at the belief
    mean.  ``observer``, if given, sees every stack of design FIMs before the
    Agnostic or QOED bonus is taken from it.
    """
    if kind not in KINDS:
        raise QoedError("bad-kind", kind)
    actions = model.clip_actions(np.asarray(actions, dtype=float))
    states = rollout(model, phi_draws[None], s0, actions[:, None], noise[None])
    value = _discounted_reward(states, actions[:, None], cfg).mean(axis=1)
    if cfg.alpha == 0:
        return value
    phi_bonus = phi_draws if cfg.bonus_average else model.clip_phi(belief.mean)
    fims = design_fims(model, phi_bonus, s0, actions, noise, cfg.fim_source)
    return value + cfg.alpha * _bonus_values(fims, kind, thresholds, observer)


def _draws(model, belief, n, steps, rng):
    phi = rng.multivariate_normal(belief.mean, belief.covariance, size=n,
                                  method="eigh")
    return model.clip_phi(phi), rng.standard_normal((n, steps, model.d_s))


def evaluate_design(model: DynamicsModel, belief: ParamBelief, actions, kind: str,
                    n_mc: int, rng, cfg: ExplorationConfig = ExplorationConfig(),
                    thresholds: Thresholds = Thresholds(), s0=None) -> float:
    """Monte-Carlo value of one action sequence (shape (T, d_a))."""
    rng = np.random.default_rng(rng)
    actions = np.asarray(actions, dtype=float).reshape(-1, model.d_a)
    s0 = np.zeros(model.d_s) if s0 is None else s0
    phi, z = _draws(model, belief, n_mc, actions.shape[0], rng)
    return float(evaluate_designs(model, belief, actions[None], kind, cfg, thresholds,
                                  s0, phi, z)[0])


def optimize_design(model: DynamicsModel, belief: ParamBelief, kind: str,
                    cfg: ExplorationConfig, rng, thresholds: Thresholds = Thresholds(),
                    s0=None, observer=None) -> DesignCandidate:
    """CEM search over knot actions maximizing :func:`evaluate_designs`.

    All candidates and iterations share one set of random numbers, so the
    reported best value never decreases across iterations.
    """
    steps = cfg.steps
    if steps < 1:
        raise QoedError("empty-horizon", "horizon has zero steps")
    rng = np.random.default_rng(rng)
    s0 = np.zeros(model.d_s) if s0 is None else np.asarray(s0, dtype=float)
    K = min(cfg.knots, steps)
    phi, z = _draws(model, belief, cfg.n_mc, steps, rng)
    lo = np.tile(model.action_low, K)
    hi = np.tile(model.action_high, K)

    def neg_value(X):
        acts = expand_knots(X.reshape(-1, K, model.d_a), steps)
        return -evaluate_designs(model, belief, acts, kind, cfg, thresholds, s0, phi, z,
                                 observer)

    span = hi - lo
    cem = cfg.design_cem()
    # the floor keeps a degenerate (zero-width) action box searchable
    cov = np.diag((0.5 * span) ** 2 + cem.variance_floor)
    res = cem_minimize(neg_value, 0.5 * (lo + hi), cov, lo, hi, cem, rng, diagonal=True)
    # the returned design is the best evaluated candidate, not the elite mean
    acts = expand_knots(res.best_x.reshape(K, model.d_a), steps)
    return DesignCandidate(acts, -res.value, kind, [-v for v in res.best_history])


@dataclass
class RoundRecord:
    round: int
    phi_hat: list
    belief_trace: float
    bonus: float
    boed: float
    agnostic: float
    qoed: float
    k: list
    eta: float | None
    beta: float | None
    rho: float | None
    param_rmse_x100: float
    rmse_x100: float


@dataclass
class ExplorationReport:
    kind: str
    model: str
    phi_true: list
    phi_hat: list
    param_rmse_x100: float
    dyn_rmse_x100: float
    terminated: bool
    rounds: list

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def breakdown_constants(bd):
    """``(eta, beta, rho)`` of a breakdown's selection, or Nones when the
    selection is empty, complete or has a degenerate critical block."""
    k = bd.k
    m = bd.fim.dim
    if not 0 < len(k) < m:
        return None, None, None
    try:
        c = quasiopt_constants(bd.fim, k)
    except QoedError:
        return None, None, None
    return c.eta, c.beta, c.rho


def run_exploration(system: HiddenSystem, model: DynamicsModel, kind: str,
                    cfg: ExplorationConfig, cem_cfg: CemConfig, rng,
                    prior: ParamBelief, thresholds: Thresholds = Thresholds(),
                    eval_set: EvalSet | None = None, observer=None) -> ExplorationReport:
    """Design, execute, estimate and update until the belief is tight and the
    model predicts well, or ``max_rounds`` is reached.

    ``system`` is the simulator with hidden parameters; ``model`` is the
    parametric model the learner reasons with (it may differ from the system
    in noise level).  Each round executes one full-horizon design, re-fits
    phi with CEM on all data collected so far, and contracts the belief with
    the FIM of the executed trajectory at the new estimate.  ``observer`` is
    passed through to :func:`evaluate_designs`.
    """
    rng = np.random.default_rng(rng)
    if eval_set is None:
        eval_set = make_eval_set(model, cfg.eval_episodes, cfg.steps, rng)
    belief = prior
    data = []
    rounds = []
    phi_hat = model.clip_phi(prior.mean)
    terminated = False
    for r in range(cfg.max_rounds):
        design = optimize_design(model, belief, kind, cfg, rng, thresholds, system.s0,
                                 observer)
        traj = system.execute(design.actions, rng)
        data.append(traj)
        phi_hat = cem_estimate(model, data, belief, cem_cfg, rng)
        F = FisherMatrix(trajectory_fim(model, traj.states, traj.actions, phi_hat))
        belief = belief_update(belief, F, mean=phi_hat)
        bd = analyze_fim(F, thresholds)
        eta, beta, rho = breakdown_constants(bd)
        dyn = dynamics_prediction_rmse(model, system.phi, phi_hat, eval_set)
        rec = RoundRecord(
            round=r,
            phi_hat=phi_hat.tolist(),
            belief_trace=belief_trace(belief),
            bonus=bd.value(kind),
            boed=bd.boed,
            agnostic=bd.agnostic,
            qoed=bd.qoed,
            k=[int(i) for i in bd.k],
            eta=eta,
            beta=beta,
            rho=rho,
            param_rmse_x100=100 * float(np.sqrt(np.mean((phi_hat - system.phi) ** 2))),
            rmse_x100=100 * dyn,
        )
        rounds.append(rec)
        log.debug("round %d %s: trace %.3g rmse %.3g", r, kind, rec.belief_trace, dyn)
        if rec.belief_trace < cfg.delta_var and dyn < cfg.delta_dyn:
            terminated = True
            break
    last = rounds[-1]
    return ExplorationReport(
        kind=kind,
        model=model.name,
        phi_true=np.asarray(system.phi).tolist(),
        phi_hat=phi_hat.tolist(),
        param_rmse_x100=last.param_rmse_x100,
        dyn_rmse_x100=last.rmse_x100,
        terminated=terminated,
        rounds=[asdict(x) for x in rounds],
    )
