"""Small sparse/dense linear algebra helpers shared by all modules."""

import os
import warnings

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sps
import scipy.sparse.linalg as spsla

#: matrices up to this size are handled with dense eigen/singular value solvers
DENSE_LIMIT = 4000


def issparse(M):
    return sps.issparse(M)


def dense(M):
    """Return `M` as a dense ndarray."""
    if sps.issparse(M):
        return M.toarray()
    return np.asarray(M)


def maxabs(M):
    if M is None or np.prod(M.shape) == 0:
        return 0.0
    if sps.issparse(M):
        return float(abs(M).max()) if M.nnz else 0.0
    return float(np.max(np.abs(M)))


def sym(M):
    return (M + M.T) / 2


def skew(M):
    return (M - M.T) / 2


def num_workers():
    """Parallelism cap taken from ``PHDAE_NUM_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get('PHDAE_NUM_THREADS', '1')))
    except ValueError:
        return 1


class LU:
    """LU factorization of a square sparse or dense matrix.

    Solves with the matrix or its (non-conjugated) transpose. Zero-sized
    matrices are allowed and act as the empty identity.
    """

    def __init__(self, M, name='matrix'):
        self.name = name
        self.shape = M.shape
        self.n = M.shape[0]
        self._sparse = sps.issparse(M)
        if self.n == 0:
            self._f = None
            return
        self._complex = np.iscomplexobj(M.data if sps.issparse(M) else M)
        if self._sparse:
            self._f = spsla.splu(sps.csc_matrix(M))
        else:
            with warnings.catch_warnings():
                warnings.simplefilter('error', spla.LinAlgWarning)
                self._f = spla.lu_factor(np.asarray(M), check_finite=True)

    def solve(self, rhs, trans=False):
        rhs = dense(rhs)
        if self.n == 0:
            return np.zeros(rhs.shape, dtype=rhs.dtype)
        if self._sparse:
            f = self._f
            cplx = np.iscomplexobj(rhs) and not self._complex
            tr = 'T' if trans else 'N'
            if self._complex and not np.iscomplexobj(rhs):
                rhs = rhs.astype(complex)
            if cplx:
                return f.solve(np.ascontiguousarray(rhs.real), trans=tr) + \
                    1j * f.solve(np.ascontiguousarray(rhs.imag), trans=tr)
            return f.solve(np.ascontiguousarray(rhs), trans=tr)
        return spla.lu_solve(self._f, rhs, trans=1 if trans else 0)


def factorize(M, name='matrix', tol=1e-12):
    """LU-factorize `M` and raise :class:`InvertibilityError` when singular."""
    from phdae_mor.errors import InvertibilityError
    if M.shape[0] == 0:
        return LU(M, name)
    try:
        lu = LU(M, name)
    except (RuntimeError, spla.LinAlgError, spla.LinAlgWarning, ValueError) as exc:
        raise InvertibilityError(name, f'block {name} is singular ({exc})') from exc
    ratio = singular_value_ratio(M)
    if ratio is not None and ratio < tol:
        raise InvertibilityError(name, f'block {name} is numerically singular '
                                       f'(sigma_min/sigma_max = {ratio:.2e})')
    return lu


def singular_value_ratio(M):
    """Return ``sigma_min / sigma_max`` of a square matrix.

    For large sparse matrices the ratio is replaced by the reciprocal of a
    1-norm condition estimate.
    """
    n = M.shape[0]
    if n == 0:
        return None
    if n <= DENSE_LIMIT:
        s = spla.svd(dense(M), compute_uv=False)
        return float(s[-1] / s[0]) if s[0] > 0 else 0.0
    lu = LU(M)
    inv = spsla.LinearOperator(M.shape, matvec=lu.solve,
                               rmatvec=lambda x: lu.solve(x, trans=True), dtype=float)
    normA = spsla.onenormest(sps.csc_matrix(M))
    normAinv = spsla.onenormest(inv)
    if not np.isfinite(normAinv) or normA == 0:
        return 0.0
    return float(1.0 / (normA * normAinv))


def min_eig_sym(M):
    """Smallest eigenvalue of the symmetric part of `M` and the method used.

    Dense eigenvalues for moderate sizes. For large sparse matrices a
    Gershgorin lower bound is tried first, then ``eigsh`` on the smallest
    algebraic end.
    """
    n = M.shape[0]
    if n == 0:
        return 0.0, 'empty'
    S = sym(M)
    if n <= DENSE_LIMIT:
        return float(spla.eigvalsh(dense(S))[0]), 'dense'
    S = sps.csr_matrix(S)
    d = S.diagonal()
    off = np.asarray(abs(S).sum(axis=1)).ravel() - np.abs(d)
    gersh = float(np.min(d - off))
    if gersh >= 0:
        return gersh, 'gershgorin'
    val = spsla.eigsh(S, k=1, which='SA', return_eigenvectors=False, tol=1e-10)
    return float(val[0]), 'eigsh'


def norm2_sym(M):
    """Spectral norm of a symmetric matrix (dense or estimated)."""
    n = M.shape[0]
    if n == 0:
        return 0.0
    if n <= DENSE_LIMIT:
        return float(np.max(np.abs(spla.eigvalsh(dense(sym(M))))))
    return float(abs(spsla.eigsh(sps.csr_matrix(sym(M)), k=1, which='LM',
                                 return_eigenvectors=False)[0]))


def block_sizes_to_slices(sizes):
    out, start = [], 0
    for k in sizes:
        out.append(slice(start, start + k))
        start += k
    return out


def hstack(blocks):
    if any(sps.issparse(b) for b in blocks):
        return sps.hstack(blocks, format='csr')
    return np.hstack(blocks)


def bmat(rows, sparse=True):
    """Assemble a block matrix; ``None`` entries are zeros."""
    if sparse:
        return sps.bmat(rows, format='csr')
    return np.block([[dense(b) for b in row] for row in rows])
