"""Shared generators for the test-suite."""
import numpy as np


def random_psd(rng, m, rank=None, spread=3.0):
    rank = m if rank is None else rank
    n = max(rank, 1) + int(rng.integers(0, 2 * m + 1))
    G = rng.standard_normal((n, rank)) @ rng.standard_normal((rank, m))
    G *= 10.0 ** rng.uniform(-spread / 2, spread / 2, size=m)
    return G.T @ G / n


def random_spectrum_psd(rng, m, decades=3.0):
    """``Q diag(lam) Q^T`` with a Haar-random Q and log-uniform eigenvalues
    spanning at most ``decades`` orders of magnitude."""
    Q, R = np.linalg.qr(rng.standard_normal((m, m)))
    Q *= np.sign(np.diag(R))
    lam = 10.0 ** rng.uniform(-decades, 0.0, size=m) * 10.0 ** rng.uniform(-2, 2)
    F = (Q * lam) @ Q.T
    return 0.5 * (F + F.T)
