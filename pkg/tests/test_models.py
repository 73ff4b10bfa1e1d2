import numpy as np
import pytest
from hypothesis import given, strategies as st

from qoed import QoedError
from qoed.fisher import estimate_fim
from qoed.models import (LinearGaussian1D, NuisanceCoupled, Push2D, Trajectory, make_model,
                         rollout, simulate_trajectory, trajectory_fim, trajectory_loglik,
                         trajectory_score)

MODELS = [LinearGaussian1D, Push2D, NuisanceCoupled]


def test_linear_hand_values():
    m = LinearGaussian1D()
    phi = np.array([0.9, 0.2])
    # mean 0.9 * 1 + 0.2 * 0.5 = 1.0, residual 0.05 with sigma 0.05
    np.testing.assert_allclose(m.step_score([1.0], [0.5], phi, [1.05]), [20.0, 10.0])
    np.testing.assert_allclose(m.step_fim([1.0], [0.5], phi), [[400.0, 200.0], [200.0, 100.0]])
    ll = m.step_loglik([1.0], [0.5], phi, [1.05])
    assert ll == pytest.approx(-0.5 - np.log(0.05) - 0.5 * np.log(2 * np.pi))


def test_noiseless_step_sample():
    m = LinearGaussian1D(sigma=0.0)
    out = m.step_sample([1.0], [1.0], [0.9, 0.2], np.random.default_rng(0))
    np.testing.assert_allclose(out, [1.1])


def test_nuisance_coupled_hand_values():
    m = NuisanceCoupled()
    phi = np.array([1.0, 1.0, 3.0, 3.0])
    # drive per axis: 1 * a + 3 * a^7 / 3 = 2a at |a| = 1
    np.testing.assert_allclose(m.mean(np.zeros(2), np.array([1.0, -1.0]), phi), [0.1, -0.1])
    J = m.jacobian(np.zeros(2), np.array([1.0, 0.5]), phi)
    np.testing.assert_allclose(J, [[0.05, 0, 0.05 / 3, 0], [0, 0.025, 0, 0.05 * 0.5 ** 7 / 3]])


def test_push_hand_values():
    m = Push2D()
    out = m.mean(np.array([0.0, 0.0, 1.0, 0.0]), np.array([2.0, 0.0]), np.array([1.0, 0.5]))
    vx = 1.0 + 0.05 * (2.0 - 0.5 * 9.81 * np.tanh(100.0))
    np.testing.assert_allclose(out, [0.05 * vx, 0.0, vx, 0.0])


def _fd(model, s, a, phi, s_next, h=1e-6):
    g = np.empty(model.m)
    for i in range(model.m):
        e = np.zeros(model.m)
        e[i] = h
        up, dn = np.minimum(phi + e, model.upper), np.maximum(phi - e, model.lower)
        g[i] = (model.step_loglik(s, a, up, s_next) - model.step_loglik(s, a, dn, s_next)) \
            / (up[i] - dn[i])
    return g


@pytest.mark.parametrize("cls", MODELS)
@given(seed=st.integers(0, 2**32 - 1))
def test_scores_match_finite_differences(cls, seed):
    model = cls()
    rng = np.random.default_rng(seed)
    phi = rng.uniform(model.lower, model.upper)
    s = rng.standard_normal(model.d_s)
    a = rng.uniform(model.action_low, model.action_high)
    s_next = model.mean(s, a, phi) + model.sigma * rng.standard_normal(model.d_s)
    np.testing.assert_allclose(model.step_score(s, a, phi, s_next),
                               _fd(model, s, a, phi, s_next), atol=1e-5)


@pytest.mark.parametrize("cls", MODELS)
def test_jacobian_matches_mean_differences(cls, rng):
    model = cls()
    for _ in range(20):
        phi = rng.uniform(model.lower + 1e-3, model.upper - 1e-3)
        s = rng.standard_normal(model.d_s)
        a = rng.uniform(model.action_low, model.action_high)
        J = model.jacobian(s, a, phi)
        for i in range(model.m):
            e = np.zeros(model.m)
            e[i] = 1e-6
            fd = (model.mean(s, a, phi + e) - model.mean(s, a, phi - e)) / 2e-6
            np.testing.assert_allclose(J[:, i], fd, atol=1e-7)


@pytest.mark.parametrize("cls", MODELS)
def test_mc_fim_approaches_step_fim(cls, rng):
    model = cls()
    phi = 0.5 * (model.lower + model.upper)
    s = rng.standard_normal(model.d_s)
    a = rng.uniform(model.action_low, model.action_high)
    s_next = model.mean(s, a, phi) + model.sigma * rng.standard_normal((40000, model.d_s))
    F_mc = estimate_fim(model.step_score(s, a, phi, s_next)).matrix
    F = model.step_fim(s, a, phi)
    assert np.linalg.norm(F_mc - F) <= 0.05 * np.linalg.norm(F)


def test_errors():
    m = LinearGaussian1D()
    with pytest.raises(QoedError, match="phi-out-of-bounds"):
        m.step_score([0.0], [0.0], [2.0, 0.5], [0.0])
    with pytest.raises(QoedError, match="dim-mismatch"):
        m.step_score([0.0], [0.0], [0.5], [0.0])
    with pytest.raises(QoedError, match="dim-mismatch"):
        m.step_fim([0.0, 1.0], [0.0], [0.5, 0.5])
    with pytest.raises(QoedError, match="zero-noise"):
        LinearGaussian1D(sigma=0.0).step_loglik([0.0], [0.0], [0.5, 0.5], [0.0])
    with pytest.raises(QoedError, match="bad-sigma"):
        LinearGaussian1D(sigma=-1.0)
    with pytest.raises(QoedError, match="bad-model"):
        NuisanceCoupled(power=4)
    with pytest.raises(QoedError, match="unknown-model"):
        make_model("pendulum")
    with pytest.raises(QoedError, match="bad-trajectory"):
        Trajectory(np.zeros((3, 1)), np.zeros((3, 1)))


def test_make_model_passes_options():
    m = make_model("nuisance_coupled", power=5, sigma=0.02)
    assert m.power == 5 and m.sigma.tolist() == [0.02, 0.02]
    assert m.param_names == ("gain_0", "gain_1", "sat_0", "sat_1")


@pytest.mark.parametrize("cls", MODELS)
def test_seeded_simulation_is_deterministic(cls):
    model = cls()
    phi = 0.5 * (model.lower + model.upper)
    acts = np.random.default_rng(1).uniform(model.action_low, model.action_high, (12, model.d_a))
    t1 = simulate_trajectory(model, phi, np.zeros(model.d_s), acts, np.random.default_rng(5))
    t2 = simulate_trajectory(model, phi, np.zeros(model.d_s), acts, np.random.default_rng(5))
    np.testing.assert_array_equal(t1.states, t2.states)


@pytest.mark.parametrize("cls", MODELS)
def test_rollout_replays_simulation(cls):
    model = cls()
    phi = 0.5 * (model.lower + model.upper)
    acts = np.random.default_rng(2).uniform(model.action_low, model.action_high, (10, model.d_a))
    traj = simulate_trajectory(model, phi, np.zeros(model.d_s), acts, np.random.default_rng(3))
    z = np.random.default_rng(3).standard_normal((10, model.d_s))
    np.testing.assert_allclose(rollout(model, phi, np.zeros(model.d_s), acts, z), traj.states,
                               atol=1e-12)


def test_rollout_broadcasts_over_parameters():
    model = LinearGaussian1D()
    phis = np.array([[0.5, 1.0], [1.0, 0.0]])
    out = rollout(model, phis, np.array([1.0]), np.ones((3, 1)))
    assert out.shape == (2, 4, 1)
    np.testing.assert_allclose(out[0, :, 0], [1.0, 1.5, 1.75, 1.875])
    np.testing.assert_allclose(out[1, :, 0], [1.0, 1.0, 1.0, 1.0])


def test_trajectory_sums():
    model = LinearGaussian1D()
    traj = Trajectory(np.array([[1.0], [1.05], [1.0]]), np.array([[0.5], [0.0]]))
    phi = [0.9, 0.2]
    steps = model.step_score(traj.states[:-1], traj.actions, phi, traj.states[1:])
    np.testing.assert_allclose(trajectory_score(model, traj, phi), steps.sum(axis=0))
    F = trajectory_fim(model, traj.states, traj.actions, phi)
    np.testing.assert_allclose(F, model.step_fim([1.0], [0.5], phi)
                               + model.step_fim([1.05], [0.0], phi))
    assert trajectory_loglik(model, traj, phi) == pytest.approx(
        float(model.step_loglik(traj.states[:-1], traj.actions, phi, traj.states[1:]).sum()))
    empty = Trajectory(np.array([[0.0]]), np.zeros((0, 1)))
    assert trajectory_loglik(model, empty, phi) == 0.0
    np.testing.assert_array_equal(trajectory_score(model, empty, phi), [0.0, 0.0])


def test_trajectory_concat():
    a = Trajectory(np.array([[0.0], [1.0]]), np.array([[0.1]]))
    b = Trajectory(np.array([[1.0], [2.0]]), np.array([[0.2]]))
    c = a.concat(b)
    assert len(c) == 2 and c.states[:, 0].tolist() == [0.0, 1.0, 2.0]
    with pytest.raises(QoedError, match="bad-trajectory"):
        b.concat(b)


def test_nuisance_fim_is_parameter_free():
    model = NuisanceCoupled()
    states = np.zeros((5, 2))
    acts = np.array([[1.0, 0.2], [-1.0, 0.4], [0.5, -0.9], [0.1, 1.0]])
    F1 = trajectory_fim(model, states, acts, model.lower)
    F2 = trajectory_fim(model, states, acts, model.upper)
    np.testing.assert_array_equal(F1, F2)
