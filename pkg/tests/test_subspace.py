import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qoed import QoedError
from qoed.fisher import EigenDecomp, eigendecompose
from qoed.subspace import cosine_rows, logdet_gram, select_identifiable, split_observable

from helpers import random_psd


def _decomp(lams, m=None):
    lams = np.asarray(lams, dtype=float)
    return EigenDecomp(lams, np.eye(m or lams.size)[:, : lams.size])


def plain_greedy(W, budget, delta_cos, eps):
    """Reference: re-evaluate every feasible row each step (no laziness)."""
    k = []
    while len(k) < budget:
        base = np.linalg.slogdet(W[k] @ W[k].T + eps * np.eye(len(k)))[1] if k else 0.0
        best, best_j = None, None
        for j in range(W.shape[0]):
            if j in k or np.linalg.norm(W[j]) < 1e-10:
                continue
            if any(abs(cosine_rows(W[i], W[j])) > delta_cos for i in k):
                continue
            S = k + [j]
            gain = np.linalg.slogdet(W[S] @ W[S].T + eps * np.eye(len(S)))[1] - base
            if best is None or round(gain, 12) > round(best, 12):
                best, best_j = gain, j
        if best_j is None or np.exp(best) - eps <= 1e-12:
            break
        k.append(best_j)
    return k


def test_split_uses_absolute_floor():
    sp = split_observable(_decomp([10.0, 0.5, 0.05]), 0.1, 0.01)
    assert sp.threshold_used == pytest.approx(0.1)
    assert sp.observable_idx.tolist() == [0, 1]
    assert sp.weak_idx.tolist() == [2]
    assert sp.n == 2


def test_split_uses_relative_floor():
    sp = split_observable(_decomp([100.0, 0.5, 0.05]), 0.1, 0.01)
    assert sp.threshold_used == pytest.approx(1.0)
    assert sp.observable_idx.tolist() == [0]
    assert sp.W_o.shape == (3, 1)


def test_split_boundary_is_inclusive():
    sp = split_observable(_decomp([10.0, 0.1]), 0.1, 0.001)
    assert sp.observable_idx.tolist() == [0, 1]


def test_split_rejects_bad_thresholds():
    with pytest.raises(QoedError, match="bad-threshold"):
        split_observable(_decomp([1.0]), 0.0, 0.01)


def test_duplicate_row_kept_once():
    W = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    res = select_identifiable(W)
    assert res.k == [0, 2]
    assert (1, "cosine") in res.rejected


def test_near_parallel_row_rejected_after_first():
    r3 = np.array([0.999, 0.0447])
    W = np.array([[1.0, 0.0], [0.0, 1.0], r3 / np.linalg.norm(r3)])
    res = select_identifiable(W, budget=2, delta_cos=0.95)
    assert sorted(res.k) == [0, 1]
    assert (2, "cosine") in res.rejected


def test_cosine_is_signed_but_constraint_uses_magnitude():
    assert cosine_rows([1.0, 0.0], [-1.0, 0.0]) == -1.0
    res = select_identifiable(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]))
    assert res.k == [0, 2]


def test_zero_rows_are_rejected():
    W = np.array([[0.0, 0.0], [0.6, 0.0], [0.0, 0.8]])
    res = select_identifiable(W)
    assert sorted(res.k) == [1, 2]
    assert (0, "zero-row") in res.rejected


def test_budget_truncates_and_is_recorded():
    W = np.eye(3)
    res = select_identifiable(W, budget=2)
    assert res.k == [0, 1]
    assert (2, "budget") in res.rejected


def test_selection_errors():
    with pytest.raises(QoedError, match="no-observable-subspace"):
        select_identifiable(np.zeros((3, 0)))
    with pytest.raises(QoedError, match="bad-budget"):
        select_identifiable(np.eye(2), budget=3)
    with pytest.raises(QoedError, match="zero-row"):
        cosine_rows([0.0, 0.0], [1.0, 0.0])


def test_orthonormal_objective_value():
    eps = 1e-9
    res = select_identifiable(np.eye(4), eps_logdet=eps)
    assert res.k == [0, 1, 2, 3]
    assert res.objective_value == pytest.approx(4 * np.log(1 + eps), abs=1e-12)


@pytest.mark.parametrize("m", range(1, 11))
def test_orthonormal_rows_match_exhaustive(m, rng):
    eps = 1e-9
    for n in range(1, m + 1):
        W = np.zeros((m, n))
        W[rng.choice(m, n, replace=False)] = np.linalg.qr(rng.standard_normal((n, n)))[0]
        for budget in range(1, n + 1):
            res = select_identifiable(W, budget=budget, eps_logdet=eps)
            best = max(logdet_gram(W[list(c)], eps) for c in itertools.combinations(range(m), budget))
            assert len(res.k) == budget
            assert res.objective_value == pytest.approx(best, abs=1e-9)


def _random_W(rng):
    m = int(rng.integers(2, 9))
    n = int(rng.integers(1, m + 1))
    W = np.linalg.qr(rng.standard_normal((m, m)))[0][:, :n]
    W *= rng.uniform(0.2, 1.5, size=(m, 1))
    if rng.random() < 0.5:
        i, j = rng.choice(m, 2, replace=False)
        W[j] = -W[i] + 1e-2 * rng.standard_normal(n)
    return W


def test_lazy_greedy_equals_plain_greedy(rng):
    for _ in range(200):
        W = _random_W(rng)
        dc = float(rng.uniform(0.6, 0.99))
        budget = int(rng.integers(1, W.shape[1] + 1))
        res = select_identifiable(W, budget=budget, delta_cos=dc)
        assert res.k == plain_greedy(W, budget, dc, 1e-9)


def test_greedy_history_monotone_and_constraint(rng):
    for _ in range(200):
        W = _random_W(rng)
        dc = float(rng.uniform(0.5, 0.99))
        res = select_identifiable(W, delta_cos=dc)
        assert np.all(np.diff(res.history) >= 0)
        for i, j in itertools.combinations(res.k, 2):
            assert abs(cosine_rows(W[i], W[j])) <= dc


@given(st.integers(1, 8), st.integers(0, 2**32 - 1),
       st.floats(0.01, 1.0), st.floats(0.001, 0.2))
def test_split_partitions_indices(m, seed, delta, alpha):
    rng = np.random.default_rng(seed)
    d = eigendecompose(random_psd(rng, m, spread=6))
    sp = split_observable(d, delta, alpha)
    o, w = set(sp.observable_idx.tolist()), set(sp.weak_idx.tolist())
    assert o.isdisjoint(w) and o | w == set(range(m))
    assert all(d.eigenvalues[i] >= sp.threshold_used for i in o)
    assert all(d.eigenvalues[i] < sp.threshold_used for i in w)
