import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from qoed import QoedError
from qoed.fisher import (FisherMatrix, crlb_trace, directional_information, eigendecompose,
                         estimate_fim, principal_submatrix_trace)

from helpers import random_psd

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
score_arrays = st.integers(1, 6).flatmap(
    lambda m: arrays(float, st.tuples(st.integers(1, 25), st.just(m)), elements=finite))


def test_estimate_hand_computed():
    # (1/2) * ([1,2]^T[1,2] + [3,4]^T[3,4])
    F = estimate_fim([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(F.matrix, [[5.0, 7.0], [7.0, 10.0]])
    assert F.sample_count == 2
    assert F.trace == 15.0


def test_estimate_accepts_list_of_vectors():
    F = estimate_fim([np.array([1.0, 0.0]), np.array([0.0, 2.0])])
    np.testing.assert_array_equal(F.matrix, [[0.5, 0.0], [0.0, 2.0]])


def test_estimate_errors():
    with pytest.raises(QoedError, match="no-samples"):
        estimate_fim([])
    with pytest.raises(QoedError, match="no-samples"):
        estimate_fim(np.zeros((0, 3)))
    with pytest.raises(QoedError, match="dim-mismatch"):
        estimate_fim([[1.0, 2.0], [1.0]])
    with pytest.raises(QoedError, match="non-finite"):
        estimate_fim([[1.0, np.nan]])


def test_fisher_matrix_is_frozen_and_symmetrized():
    F = FisherMatrix(np.array([[2.0, 1.0], [0.0, 2.0]]))
    np.testing.assert_array_equal(F.matrix, [[2.0, 0.5], [0.5, 2.0]])
    with pytest.raises(ValueError):
        F.matrix[0, 0] = 5.0


def test_fisher_matrix_rejects_indefinite():
    with pytest.raises(QoedError):
        FisherMatrix(np.diag([1.0, -1.0]))
    with pytest.raises(QoedError):
        FisherMatrix(np.ones((2, 3)))


def test_eigendecompose_orders_and_orients():
    d = eigendecompose(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(d.eigenvalues, [3.0, 1.0], atol=1e-14)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(d.eigenvectors, [[s, s], [s, -s]], atol=1e-14)


def test_eigendecompose_clamps_tiny_eigenvalues():
    F = np.diag([1.0, 1e-12, 0.0])
    d = eigendecompose(F)
    np.testing.assert_array_equal(d.eigenvalues, [1.0, 0.0, 0.0])


def test_eigendecompose_ties_are_stable():
    d = eigendecompose(np.eye(3))
    np.testing.assert_array_equal(d.eigenvalues, [1.0, 1.0, 1.0])
    assert np.all(d.eigenvectors.sum(axis=0) != 0)


def test_directional_information_value():
    F = np.array([[5.0, 7.0], [7.0, 10.0]])
    # 0.36*5 + 2*0.48*7 + 0.64*10
    assert directional_information(F, [0.6, 0.8]) == pytest.approx(14.92, abs=1e-12)
    with pytest.raises(QoedError, match="not-normalized"):
        directional_information(F, [1.0, 1.0])


def test_crlb_trace_value():
    assert crlb_trace(np.diag([1.0, 3.0]), 1.0) == pytest.approx(0.75)
    with pytest.raises(QoedError, match="bad-eps"):
        crlb_trace(np.eye(2), 0.0)


def test_principal_submatrix_trace():
    F = np.diag([1.0, 2.0, 3.0])
    assert principal_submatrix_trace(F, [0, 2]) == 4.0
    with pytest.raises(QoedError, match="bad-index"):
        principal_submatrix_trace(F, [3])
    with pytest.raises(QoedError, match="bad-index"):
        principal_submatrix_trace(F, [1, 1])


@given(score_arrays, st.randoms(use_true_random=False))
def test_estimate_permutation_invariant(g, rnd):
    perm = list(range(len(g)))
    rnd.shuffle(perm)
    np.testing.assert_array_equal(estimate_fim(g).matrix, estimate_fim(g[perm]).matrix)


@given(score_arrays)
def test_estimate_psd_and_trace(g):
    F = estimate_fim(g)
    d = eigendecompose(F)
    assert np.all(d.eigenvalues >= 0)
    assert np.all(np.diff(d.eigenvalues) <= 0)
    assert abs(F.trace - d.eigenvalues.sum()) <= 1e-10 * max(F.trace, 1e-300) + 1e-300


@given(score_arrays)
def test_directional_information_matches_eigenvalues(g):
    F = estimate_fim(g)
    d = eigendecompose(F)
    for lam, w in zip(d.eigenvalues, d.eigenvectors.T):
        assert abs(directional_information(F, w) - lam) <= 1e-8 * (1 + d.eigenvalues[0])


def test_ky_fan_truncation(rng):
    for _ in range(50):
        m = int(rng.integers(2, 7))
        F = random_psd(rng, m)
        lam = eigendecompose(F).eigenvalues
        for r in range(1, m):
            for k in itertools.combinations(range(m), r):
                assert np.trace(F) - principal_submatrix_trace(F, k) >= lam[r:].sum() - 1e-8
