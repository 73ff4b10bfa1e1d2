"""
Parametric stochastic dynamics with exact Gaussian transition likelihoods.

Every model has the form ``s' = f(s, a, phi) + w`` with ``w ~ N(0, diag(sigma^2))``
so the transition log-density, its gradient in ``phi`` (the score) and the
per-step Fisher information ``J^T diag(sigma^-2) J`` with ``J = df/dphi`` are all
available in closed form.  ``mean`` and ``jacobian`` broadcast over leading
axes, which is what the rollout and estimation code relies on for speed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import QoedError
from .fisher import FisherMatrix

__all__ = [
    "Trajectory",
    "DynamicsModel",
    "LinearGaussian1D",
    "Push2D",
    "NuisanceCoupled",
    "MODELS",
    "make_model",
    "rollout",
    "simulate_trajectory",
    "trajectory_score",
    "trajectory_loglik",
    "trajectory_fim",
    "counterexample_family",
]

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``s_0..s_T`` (shape (T+1, d_s)) and actions ``a_0..a_{T-1}``."""

    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.states, dtype=float))
        a = np.asarray(self.actions, dtype=float)
        if a.ndim == 1:
            a = a.reshape(len(a), -1) if a.size else a.reshape(0, 1)
        if s.shape[0] != a.shape[0] + 1:
            raise QoedError("bad-trajectory",
                            f"{s.shape[0]} states for {a.shape[0]} actions")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    def __len__(self):
        return self.actions.shape[0]

    def concat(self, other: "Trajectory") -> "Trajectory":
        if not np.array_equal(self.states[-1], other.states[0]):
            raise QoedError("bad-trajectory", "trajectories do not join")
        return Trajectory(np.vstack([self.states, other.states[1:]]),
                          np.vstack([self.actions, other.actions]))


class DynamicsModel:
    """Base class; subclasses define ``mean`` and ``jacobian``.

    Attributes set by subclasses: ``name``, ``param_names``, ``lower``,
    ``upper``, ``action_low``, ``action_high``, ``d_s``, ``d_a`` and
    ``sigma`` (per state dimension, may be zero for noiseless simulation).
    """

    name = "base"
    param_names: tuple = ()
    d_s = 0
    d_a = 0

    def __init__(self, sigma, lower, upper, action_low, action_high):
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (self.d_s,)).copy()
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.action_low = np.broadcast_to(np.asarray(action_low, float), (self.d_a,)).copy()
        self.action_high = np.broadcast_to(np.asarray(action_high, float), (self.d_a,)).copy()
        if np.any(self.sigma < 0):
            raise QoedError("bad-sigma", "noise scale must be nonnegative")
        if np.any(self.lower > self.upper):
            raise QoedError("bad-bounds", "lower bound above upper bound")
        for arr in (self.sigma, self.lower, self.upper, self.action_low, self.action_high):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.param_names)

    def __repr__(self):
        return (f"{type(self).__name__}(sigma={self.sigma.tolist()}, "
                f"lower={self.lower.tolist()}, upper={self.upper.tolist()})")

    def mean(self, s, a, phi):
        raise NotImplementedError

    def jacobian(self, s, a, phi):
        raise NotImplementedError

    # -- checks ---------------------------------------------------------
    def check_phi(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if phi.shape[-1] != self.m:
            raise QoedError("dim-mismatch", f"phi has {phi.shape[-1]} entries, model has {self.m}")
        if np.any(phi < self.lower - 1e-12) or np.any(phi > self.upper + 1e-12):
            raise QoedError("phi-out-of-bounds", f"phi={np.round(phi, 6).tolist()}")
        return phi

    def clip_phi(self, phi) -> np.ndarray:
        return np.clip(phi, self.lower, self.upper)

    def clip_actions(self, a) -> np.ndarray:
        return np.clip(a, self.action_low, self.action_high)

    def _check_sa(self, s, a):
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        if s.shape[-1] != self.d_s or a.shape[-1] != self.d_a:
            raise QoedError("dim-mismatch",
                            f"state dim {s.shape[-1]}/{self.d_s}, action dim {a.shape[-1]}/{self.d_a}")
        return s, a

    def _require_noise(self):
        if np.any(self.sigma <= 0):
            raise QoedError("zero-noise", "likelihood needs a positive noise scale")

    # -- single transitions ---------------------------------------------
    def step_sample(self, s, a, phi, rng) -> np.ndarray:
        """Draw ``s' = f(s, a, phi) + w``."""
        s, a = self._check_sa(np.atleast_1d(s), np.atleast_1d(a))
        phi = self.check_phi(phi)
        mu = self.mean(s, a, phi)
        return mu + self.sigma * rng.standard_normal(mu.shape)

    def step_loglik(self, s, a, phi, s_next) -> np.ndarray:
        """Gaussian log-density of ``s_next``; broadcasts over leading axes."""
        self._require_noise()
        s, a = self._check_sa(np.atleast_1d(s), np.atleast_1d(a))
        phi = self.check_phi(phi)
        z = (np.asarray(s_next, dtype=float) - self.mean(s, a, phi)) / self.sigma
        return (-0.5 * np.sum(z * z, axis=-1) - np.sum(np.log(self.sigma))
                - 0.5 * self.d_s * LOG_2PI)

    def step_score(self, s, a, phi, s_next) -> np.ndarray:
        """``J^T (s_next - f) / sigma^2``, the gradient of ``step_loglik`` in phi."""
        self._require_noise()
        s, a = self._check_sa(np.atleast_1d(s), np.atleast_1d(a))
        phi = self.check_phi(phi)
        r = (np.asarray(s_next, dtype=float) - self.mean(s, a, phi)) / self.sigma ** 2
        return np.einsum("...ij,...i->...j", self.jacobian(s, a, phi), r)

    def step_fim(self, s, a, phi) -> np.ndarray:
        """Per-step conditional information ``J^T diag(sigma^-2) J`` (raw array)."""
        self._require_noise()
        s, a = self._check_sa(np.atleast_1d(s), np.atleast_1d(a))
        J = self.jacobian(s, a, self.check_phi(phi)) / self.sigma[:, None]
        return np.einsum("...ij,...ik->...jk", J, J)

    def closed_form_fim(self, s, a, phi) -> FisherMatrix:
        return FisherMatrix(self.step_fim(s, a, phi), sample_count=0)


class LinearGaussian1D(DynamicsModel):
    """``s' = gain * s + input_gain * a + w``."""

    name = "linear_gaussian_1d"
    param_names = ("gain", "input_gain")
    d_s = 1
    d_a = 1

    def __init__(self, sigma=0.05, lower=(0.0, 0.0), upper=(1.5, 1.0),
                 action_low=-1.0, action_high=1.0):
        super().__init__(sigma, lower, upper, action_low, action_high)

    def mean(self, s, a, phi):
        phi = np.asarray(phi)
        return phi[..., 0:1] * s + phi[..., 1:2] * a

    def jacobian(self, s, a, phi):
        s, a = np.broadcast_arrays(s, a)
        J = np.stack([s, a], axis=-1)
        return np.broadcast_to(J, np.broadcast_shapes(J.shape, np.shape(phi)[:-1] + (1, 2)))


class Push2D(DynamicsModel):
    """Planar box push with unknown mass and Coulomb friction.

    State ``(x, y, vx, vy)``, action is the applied force ``(Fx, Fy)`` in N.
    Semi-implicit Euler with time step ``dt``; the friction sign is smoothed
    with ``tanh(slope * v)`` per axis so the mean map is differentiable.
    """

    name = "push_2d"
    param_names = ("mass", "friction")
    d_s = 4
    d_a = 2

    def __init__(self, sigma=(0.002, 0.002, 0.01, 0.01), lower=(0.5, 0.05),
                 upper=(5.0, 1.0), action_low=-10.0, action_high=10.0,
                 dt=0.05, gravity=9.81, slope=100.0):
        super().__init__(sigma, lower, upper, action_low, action_high)
        self.dt = dt
        self.gravity = gravity
        self.slope = slope

    def _accel_parts(self, s, a, phi):
        phi = np.asarray(phi)
        v = s[..., 2:4]
        mass = phi[..., 0:1]
        mu = phi[..., 1:2]
        fric = self.gravity * np.tanh(self.slope * v)
        return v, mass, mu, fric

    def mean(self, s, a, phi):
        v, mass, mu, fric = self._accel_parts(s, a, phi)
        v_new = v + self.dt * (a / mass - mu * fric)
        p_new = s[..., 0:2] + self.dt * v_new
        return np.concatenate([p_new, v_new], axis=-1)

    def jacobian(self, s, a, phi):
        v, mass, mu, fric = self._accel_parts(s, a, phi)
        dv_dmass = -self.dt * a / mass ** 2
        dv_dmu = -self.dt * fric
        dv_dmass, dv_dmu = np.broadcast_arrays(dv_dmass, dv_dmu)
        dv = np.stack([dv_dmass, dv_dmu], axis=-1)
        return np.concatenate([self.dt * dv, dv], axis=-2)


class NuisanceCoupled(DynamicsModel):
    """Two-axis actuator with two critical gains and two coupled nuisances.

    ``s' = s + dt * (g * a + c * a^p / scale - damping * s)`` per axis, with
    odd ``p``.  The linear gains ``g = (g0, g1)`` are the critical parameters;
    the saturation terms ``c = (c0, c1)`` are nuisances that only act near
    full actuation.  At ``|a| = 1`` the nuisance score of an axis equals its
    critical score up to ``1 / scale``, so designs that saturate the actuator
    carry a large but confounded amount of information about ``g``.
    """

    name = "nuisance_coupled"
    param_names = ("gain_0", "gain_1", "sat_0", "sat_1")
    d_s = 2
    d_a = 2

    def __init__(self, sigma=0.01, lower=(0.5, 0.5, -4.0, -4.0),
                 upper=(2.0, 2.0, 4.0, 4.0), action_low=-1.0, action_high=1.0,
                 dt=0.05, power=7, scale=3.0, damping=0.5):
        super().__init__(sigma, lower, upper, action_low, action_high)
        if int(power) != power or power < 3 or power % 2 == 0:
            raise QoedError("bad-model", "power must be an odd integer >= 3")
        self.dt = dt
        self.power = int(power)
        self.scale = scale
        self.damping = damping

    def _feature(self, a):
        return a ** self.power / self.scale

    def mean(self, s, a, phi):
        phi = np.asarray(phi)
        drive = phi[..., 0:2] * a + phi[..., 2:4] * self._feature(a)
        return s + self.dt * (drive - self.damping * s)

    def jacobian(self, s, a, phi):
        s, a = np.broadcast_arrays(s, a)
        shape = np.broadcast_shapes(a.shape, np.shape(phi)[:-1] + (2,))
        a = np.broadcast_to(a, shape)
        J = np.zeros(shape + (4,))
        h = self._feature(a)
        J[..., 0, 0] = self.dt * a[..., 0]
        J[..., 1, 1] = self.dt * a[..., 1]
        J[..., 0, 2] = self.dt * h[..., 0]
        J[..., 1, 3] = self.dt * h[..., 1]
        return J


MODELS = {cls.name: cls for cls in (LinearGaussian1D, Push2D, NuisanceCoupled)}


def make_model(name: str, **kwargs) -> DynamicsModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise QoedError("unknown-model", f"{name!r}; known: {sorted(MODELS)}") from None
    return cls(**kwargs)


# -- trajectories -----------------------------------------------------------

def rollout(model: DynamicsModel, phi, s0, actions, noise=None) -> np.ndarray:
    """Batched open-loop rollout.

    ``phi`` (..., m), ``s0`` (..., d_s), ``actions`` (..., T, d_a) and the
    optional standard-normal ``noise`` (..., T, d_s) broadcast together.
    Returns states of shape (..., T+1, d_s).  Parameters are not bounds-checked
    here; callers sampling candidates clip them first.
    """
    phi = np.asarray(phi, dtype=float)
    actions = np.asarray(actions, dtype=float)
    T = actions.shape[-2]
    s = np.asarray(s0, dtype=float)
    lead = np.broadcast_shapes(phi.shape[:-1], s.shape[:-1], actions.shape[:-2],
                               () if noise is None else noise.shape[:-2])
    s = np.broadcast_to(s, lead + (model.d_s,))
    out = np.empty(lead + (T + 1, model.d_s))
    out[..., 0, :] = s
    for t in range(T):
        s = model.mean(s, actions[..., t, :], phi)
        if noise is not None:
            s = s + model.sigma * noise[..., t, :]
        out[..., t + 1, :] = s
    return out


def simulate_trajectory(model: DynamicsModel, phi, s0, actions, rng) -> Trajectory:
    """Sample one trajectory by sequential ``step_sample`` calls."""
    phi = model.check_phi(phi)
    actions = np.asarray(actions, dtype=float).reshape(-1, model.d_a)
    states = [np.asarray(s0, dtype=float).reshape(model.d_s)]
    for a in actions:
        states.append(model.step_sample(states[-1], a, phi, rng))
    return Trajectory(np.array(states), actions)


def trajectory_loglik(model: DynamicsModel, traj: Trajectory, phi) -> float:
    """Sum of per-step transition log-densities; policy and initial-state
    terms are omitted because they do not depend on phi."""
    if len(traj) == 0:
        return 0.0
    s = traj.states
    return float(np.sum(model.step_loglik(s[:-1], traj.actions, phi, s[1:])))


def trajectory_score(model: DynamicsModel, traj: Trajectory, phi) -> np.ndarray:
    """Sum of per-step scores."""
    if len(traj) == 0:
        model.check_phi(phi)
        return np.zeros(model.m)
    s = traj.states
    return np.sum(model.step_score(s[:-1], traj.actions, phi, s[1:]), axis=0)


def trajectory_fim(model: DynamicsModel, states, actions, phi) -> np.ndarray:
    """Sum of per-step conditional FIMs along one or more state sequences.

    ``states`` (..., T+1, d_s) and ``actions`` (..., T, d_a); leading axes are
    averaged, giving the Monte-Carlo-over-states trajectory FIM.
    """
    states = np.asarray(states, dtype=float)
    F = model.step_fim(states[..., :-1, :], actions, phi).sum(axis=-3)
    return F.reshape(-1, model.m, model.m).mean(axis=0)


def counterexample_family(delta: float = 0.1, M: float = 100.0) -> dict:
    """Two designs whose FIMs defeat the agnostic objective with ``k = {0}``.

    ``A`` carries ``1 + delta`` information on the critical coordinate only;
    ``B`` carries 1 on it and ``M`` on the nuisance coordinate.
    """
    if not delta > 0:
        raise QoedError("bad-delta", "delta must be positive")
    if not M > delta:
        raise QoedError("bad-M", "M must exceed delta")
    return {
        "A": FisherMatrix(np.diag([1.0 + delta, 0.0])),
        "B": FisherMatrix(np.diag([1.0, M])),
    }
