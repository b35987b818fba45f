"""Shared fixtures and independent reference computations."""

import numpy as np
import pytest
import scipy.linalg as spla
import scipy.sparse as sps

from phdae_mor.models import CATEGORIES, GeneratorSpec, generate_staircase


def full(M):
    return M.toarray() if sps.issparse(M) else np.asarray(M)


def dense_transfer(sys, s):
    """``C (sE - A)^{-1} B + D`` from the full matrices, no block algebra."""
    E, J, R = full(sys.E), full(sys.J), full(sys.R)
    A, B = J - R, sys.G - sys.P
    C, D = (sys.G + sys.P).T, sys.S + sys.N
    return C @ np.linalg.solve(s * E - A, B.astype(complex)) + D


def finite_poles_and_residues(sys):
    """Finite poles of ``(A, E)`` and rank-one residue factors ``l_i r_i^T``.

    For a simple finite eigenvalue with right/left eigenvectors ``v, w`` the
    residue of ``C (sE - A)^{-1} B`` is ``(C v)(w^H B) / (w^H E v)``.
    """
    E, J, R = full(sys.E), full(sys.J), full(sys.R)
    A, B, C = J - R, sys.G - sys.P, (sys.G + sys.P).T
    lam, W, V = spla.eig(A, E, left=True, right=True)
    keep = np.isfinite(lam) & (np.abs(lam) < 1e12)
    out = []
    for k in np.flatnonzero(keep):
        v, w = V[:, k], W[:, k]
        scale = w.conj() @ E @ v
        out.append((lam[k], C @ v / scale, B.T @ w.conj()))
    return out


@pytest.fixture(scope='session')
def random_systems():
    """Two small random systems per category (mixed m, dense and sparse)."""
    out = []
    for k, cat in enumerate(CATEGORIES):
        for seed, m, sparse in ((k, 1, False), (100 + k, 2, True)):
            out.append(generate_staircase(GeneratorSpec(cat, n=24, m=m, seed=seed, sparse=sparse)))
    return out
