import numpy as np
import pytest
from hypothesis import given, strategies as st

from qoed import QoedError
from qoed.models import counterexample_family
from qoed.objectives import (Thresholds, agnostic_objective, analyze_fim, block_partition,
                             boed_objective, default_eps, projection_residual, qoed_bonus,
                             qoed_objective, quasiopt_constants, residual_regression_trace,
                             rho_factor, schur_complement, selection_classes)

from helpers import random_psd

F22 = np.array([[4.0, 2.0], [2.0, 3.0]])


def test_two_by_two_hand_values():
    assert boed_objective(F22) == 7.0
    assert agnostic_objective(F22, [0]) == 4.0
    # 4 - 2 * 2 / 3
    assert qoed_objective(F22, [0], eps=1e-15) == pytest.approx(8 / 3, abs=1e-12)
    c = quasiopt_constants(F22, [0])
    assert c.eta == pytest.approx(0.75)
    # beta = 2^2 / (4 * 3)
    assert c.beta == pytest.approx(1 / 3)
    assert c.rho == pytest.approx(8 / 21)


def test_edge_selections():
    assert qoed_objective(F22, []) == 0.0
    assert agnostic_objective(F22, []) == 0.0
    assert qoed_objective(F22, [0, 1]) == 7.0


def test_block_partition_round_trip(rng):
    F = random_psd(rng, 5)
    b = block_partition(F, [3, 0])
    assert b.k.tolist() == [3, 0]
    np.testing.assert_array_equal(b.reassemble(), F)
    with pytest.raises(QoedError, match="degenerate-partition"):
        block_partition(F, range(5))


def test_schur_requires_positive_eps():
    with pytest.raises(QoedError, match="bad-eps"):
        schur_complement(block_partition(F22, [0]), 0.0)


def test_default_eps_is_scale_aware():
    assert default_eps(np.eye(3) * 1e-3) == 1e-8
    assert default_eps(np.eye(2) * 500.0) == pytest.approx(5e-6)


@pytest.mark.parametrize("eta,beta,rho", [(0.0011, 0.0008, 0.9981),
                                          (0.0012, 0.2784, 0.7207),
                                          (0.0162, 0.1421, 0.8442)])
def test_published_tuples(eta, beta, rho):
    assert rho_factor(eta, beta) == pytest.approx(rho, abs=5e-4)


def test_counterexample_fools_agnostic():
    fam = counterexample_family(0.1, 100.0)
    ag = {n: agnostic_objective(F, [0]) for n, F in fam.items()}
    assert max(ag, key=ag.get) == "A"
    assert fam["A"].trace / fam["B"].trace == pytest.approx(1.1 / 101, abs=1e-12)
    with pytest.raises(QoedError, match="bad-delta"):
        counterexample_family(0.0)


def test_degenerate_critical_block():
    with pytest.raises(QoedError, match="degenerate-critical-block"):
        quasiopt_constants(np.diag([0.0, 1.0]), [0])


def test_empty_observable_subspace_gives_zero_bonus():
    bonus, sel = qoed_bonus(np.full((4, 3), 1e-4))
    assert bonus == 0.0 and sel.k == []


def test_analyze_fim_values_agree():
    bd = analyze_fim(F22)
    assert bd.k == [0, 1]
    assert bd.boed == bd.agnostic == bd.qoed == 7.0
    with pytest.raises(QoedError, match="bad-kind"):
        bd.value("dopt")


def _partition(data, m):
    k = data.draw(st.lists(st.integers(0, m - 1), min_size=1, max_size=m - 1, unique=True))
    return sorted(k)


@given(st.data(), st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_sandwich_and_oracle(data, m, seed):
    rng = np.random.default_rng(seed)
    F = random_psd(rng, m, rank=int(rng.integers(1, m + 1)))
    k = _partition(data, m)
    q, a, b = qoed_objective(F, k), agnostic_objective(F, k), boed_objective(F)
    tol = 1e-10 * b
    assert -tol <= q <= a + tol and a <= b + tol
    eps = default_eps(F)
    blocks = block_partition(F, k)
    ref = residual_regression_trace(blocks, eps)
    assert q == pytest.approx(ref, rel=1e-8, abs=1e-12 * b)
    # explicit inverse; it cancels badly on rank-deficient nuisance blocks
    kb = blocks.kbar
    S = F[np.ix_(k, k)] - F[np.ix_(k, kb)] @ np.linalg.inv(
        F[np.ix_(kb, kb)] + eps * np.eye(kb.size)) @ F[np.ix_(kb, k)]
    assert q == pytest.approx(np.trace(S), rel=1e-7, abs=1e-8 * b)


@given(st.data(), st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_qoed_nondecreasing_in_eps(data, m, seed):
    rng = np.random.default_rng(seed)
    F = random_psd(rng, m)
    k = _partition(data, m)
    vals = [qoed_objective(F, k, e) for e in (1e-10, 1e-6, 1e-2, 1.0, 1e2)]
    assert all(y >= x - 1e-9 * np.trace(F) for x, y in zip(vals, vals[1:]))


@given(st.data(), st.integers(2, 9), st.integers(0, 2**32 - 1))
def test_beta_at_most_one(data, m, seed):
    rng = np.random.default_rng(seed)
    c = quasiopt_constants(random_psd(rng, m), _partition(data, m))
    assert 0 <= c.beta <= 1 + 1e-8
    assert c.eta >= 0


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_projection_residual_is_tail_sum(m, seed):
    rng = np.random.default_rng(seed)
    F = random_psd(rng, m)
    lam = np.sort(np.linalg.eigvalsh(F))[::-1]
    r = int(rng.integers(0, m + 1))
    got = projection_residual(F, list(range(r)))
    assert got == pytest.approx(lam[r:].sum(), rel=1e-9, abs=1e-10 * lam[0])


def _family_value(fams, k, adaptive):
    vals, etas, betas = [], [0.0], [0.0]
    for F in fams:
        kk = analyze_fim(F).k if adaptive else k
        if 0 < len(kk) < F.shape[0]:
            vals.append(qoed_objective(F, kk))
            c = quasiopt_constants(F, kk)
            etas.append(c.eta)
            betas.append(c.beta)
        else:
            vals.append(np.trace(F) if kk else 0.0)
    return vals, rho_factor(max(etas), max(betas))


@pytest.mark.parametrize("adaptive", [False, True])
def test_quasi_optimality_bound(rng, adaptive):
    for _ in range(40):
        m = int(rng.integers(2, 7))
        fams = [random_psd(rng, m) for _ in range(int(rng.integers(5, 21)))]
        k = sorted(rng.choice(m, int(rng.integers(1, m)), replace=False).tolist())
        vals, rho = _family_value(fams, k, adaptive)
        best = max(np.trace(F) for F in fams)
        assert np.trace(fams[int(np.argmax(vals))]) >= rho * best - 1e-12 * best


def test_thresholds_feed_through():
    F = np.diag([10.0, 1.0, 0.05])
    bd = analyze_fim(F, Thresholds(delta_eig=0.5, alpha_eig=0.01))
    assert bd.k == [0, 1]
    assert bd.agnostic == 11.0


def test_selection_classes_group_equal_breakdowns(rng):
    from itertools import product
    ths = [Thresholds(delta_eig=d, alpha_eig=a, delta_cos=c)
           for d, a, c in product((0.05, 0.5), (0.005, 0.02, 0.05), (0.3, 0.9, 0.99))]
    for _ in range(30):
        m = int(rng.integers(2, 6))
        F = random_psd(rng, m, spread=4)
        labels = selection_classes(F, ths)
        bds = [analyze_fim(F, th) for th in ths]
        for i in range(len(ths)):
            for j in range(len(ths)):
                if labels[i] == labels[j]:
                    assert bds[i].k == bds[j].k
                    assert bds[i].qoed == bds[j].qoed and bds[i].agnostic == bds[j].agnostic


@given(st.data(), st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_agnostic_is_eigen_weighted_row_norm(data, m, seed):
    F = random_psd(np.random.default_rng(seed), m)
    k = _partition(data, m)
    lam, V = np.linalg.eigh(F)
    ref = float(np.sum(lam * np.sum(V[k] ** 2, axis=0)))
    assert agnostic_objective(F, k) == pytest.approx(ref, rel=1e-9, abs=1e-12 * np.trace(F))
