"""Structure-preserving tangential interpolation of pH-DAEs.

The pipeline is

1. solve the shifted systems ``(sigma_i E - A) v_i = B b_i`` and collect a
   real basis ``V`` (:func:`tangential_basis`),
2. extract an orthonormal basis ``Vbar2`` of the range of the second block
   row of ``V`` (:func:`orthonormalize_v2`),
3. build left/right reduction matrices of the Rosenbrock system matrix
   (:func:`reduction_matrices`) and project it (:func:`reduce`),
4. factor the improper coefficient ``Dinf = Linf Linf^T``
   (:func:`factor_dinf`) and assemble a minimal staircase ROM
   (:func:`assemble_rom`).

:func:`interpolate` runs all stages.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sps

from phdae_mor import _linalg as la
from phdae_mor.errors import (EmptyBasisError, NotPortHamiltonianError, PHDAEError,
                              ShiftSingularityError, StageError)
from phdae_mor.pencil import SystemMatrixParts
from phdae_mor.staircase import StaircaseSystem, assemble_operator_blocks

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# interpolation data
# ---------------------------------------------------------------------------

class InterpolationData:
    """Right tangential interpolation data ``(sigma_i, b_i)``.

    The data must be closed under complex conjugation: for every non-real
    pair ``(sigma, b)`` the pair ``(conj(sigma), conj(b))`` is present.
    Real shifts need real directions.

    Parameters
    ----------
    shifts
        Sequence of (complex) interpolation points.
    directions
        Array of shape ``(m, r)`` or sequence of ``r`` vectors of length ``m``.
    tol
        Relative tolerance for matching conjugate partners.
    """

    def __init__(self, shifts, directions, tol=1e-10):
        shifts = np.atleast_1d(np.asarray(shifts, dtype=complex))
        r = len(shifts)
        D = np.asarray(directions, dtype=complex)
        if D.ndim == 1:
            D = D.reshape(-1, 1) if r == 1 else D.reshape(1, -1)
        elif D.shape[1] != r and D.shape[0] == r:
            D = D.T
        if D.shape[1] != r:
            raise ValueError(f'got {r} shifts but directions of shape {D.shape}')
        self.shifts = shifts
        self.directions = D
        self.tol = tol
        self._check()

    @classmethod
    def with_conjugates(cls, shifts, directions=None, m=None):
        """Complete data by adding the conjugate of every non-real pair.

        When `directions` is ``None`` all directions are the first unit
        vector of length `m`.
        """
        shifts = np.atleast_1d(np.asarray(shifts, dtype=complex))
        if directions is None:
            directions = np.zeros((m or 1, len(shifts)), dtype=complex)
            directions[0] = 1.0
        D = np.asarray(directions, dtype=complex).reshape(-1, len(shifts))
        s_out, d_out = [], []
        for s, b in zip(shifts, D.T):
            s_out.append(s)
            d_out.append(b)
            if s.imag != 0:
                s_out.append(np.conj(s))
                d_out.append(np.conj(b))
        return cls(s_out, np.array(d_out).T)

    @property
    def r(self):
        return len(self.shifts)

    @property
    def m(self):
        return self.directions.shape[0]

    def __len__(self):
        return self.r

    def __repr__(self):
        return f'InterpolationData(r={self.r}, m={self.m})'

    def _check(self):
        s, D = self.shifts, self.directions
        scale = max(1.0, float(np.max(np.abs(s)))) if len(s) else 1.0
        tol = self.tol * scale
        if len(s) == 0:
            raise ValueError('interpolation data is empty')
        if not np.all(np.isfinite(s)) or not np.all(np.isfinite(D)):
            raise ValueError('interpolation data contains non-finite values')
        diff = np.abs(s[:, None] - s[None, :]) + np.eye(len(s)) * (tol + 1)
        if np.any(diff <= tol):
            raise ValueError('interpolation points must be distinct')
        if np.any(np.linalg.norm(D, axis=0) == 0):
            raise ValueError('tangential directions must be nonzero')
        for i in range(len(s)):
            b = D[:, i]
            if abs(s[i].imag) <= tol:
                if np.max(np.abs(b.imag)) > self.tol * np.max(np.abs(b)):
                    raise ValueError(f'real shift {s[i].real} needs a real direction')
                continue
            j = int(np.argmin(np.abs(s - np.conj(s[i]))))
            bn = np.max(np.abs(b))
            if abs(s[j] - np.conj(s[i])) > tol or np.max(np.abs(D[:, j] - np.conj(b))) > 1e-8 * bn:
                raise ValueError(f'interpolation data is not closed under conjugation '
                                 f'(missing partner of sigma={s[i]})')

    def representatives(self):
        """Indices of real shifts and of one member (``Im > 0``) of each pair, in order."""
        tol = self.tol * max(1.0, float(np.max(np.abs(self.shifts))))
        return [i for i, s in enumerate(self.shifts) if s.imag > tol or abs(s.imag) <= tol]

    def is_real(self, i):
        return abs(self.shifts[i].imag) <= self.tol * max(1.0, float(np.max(np.abs(self.shifts))))


# ---------------------------------------------------------------------------
# tangential basis
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TangentialBasis:
    """Real tangential Krylov basis.

    Attributes
    ----------
    V
        Real ``n x r`` basis; a conjugate pair contributes ``Re v`` and
        ``Im v``.
    slices
        Row slices of the four state groups.
    directions
        Real ``m x r`` matrix that matches the realification of ``V``:
        ``[Re b, Im b]`` for a pair and ``b`` for a real shift.
    solutions
        Complex solutions ``v_i`` for the representatives, keyed by the
        index into the interpolation data.
    Vbar2, Tv, cs
        Filled by :func:`orthonormalize_v2`.
    """

    V: np.ndarray
    slices: list
    directions: np.ndarray
    solutions: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    Vbar2: np.ndarray = None
    Tv: np.ndarray = None
    cs: np.ndarray = None
    warnings: list = field(default_factory=list)

    @property
    def r(self):
        return self.V.shape[1]

    def block(self, i):
        return self.V[self.slices[i - 1]]

    @property
    def V2(self):
        return self.block(2)


def shifted_solve(sys_or_blocks, sigma, rhs, complex_mode='complex', check=True, tol=1e-10):
    """Solve ``(sigma E - A) X = rhs`` and check the residual.

    ``complex_mode='complex'`` factors the complex matrix directly,
    ``'real-block'`` solves the equivalent real ``2n x 2n`` system.

    Raises
    ------
    ShiftSingularityError
        If the factorization fails or the relative residual exceeds `tol`.
    """
    blocks = sys_or_blocks if hasattr(sys_or_blocks, 'a') else assemble_operator_blocks(sys_or_blocks)
    E, A = blocks.E, blocks.A
    rhs = np.asarray(rhs, dtype=complex)
    vec = rhs.ndim == 1
    rhs2 = rhs.reshape(rhs.shape[0], -1)
    M = sigma * E - A
    try:
        if complex_mode == 'real-block' and sigma.imag != 0:
            Mr = M.real
            Mi = M.imag
            big = la.bmat([[Mr, -Mi], [Mi, Mr]], sparse=la.issparse(M))
            lu = la.LU(sps.csc_array(big) if la.issparse(big) else big)
            Y = lu.solve(np.vstack([rhs2.real, rhs2.imag]))
            n = M.shape[0]
            X = Y[:n] + 1j * Y[n:]
        else:
            if complex_mode not in ('complex', 'real-block'):
                raise ValueError(f'unknown complex_mode {complex_mode!r}')
            X = la.LU(M if sigma.imag != 0 else M.real).solve(rhs2)
    except (RuntimeError, spla.LinAlgError, spla.LinAlgWarning, ValueError) as exc:
        if isinstance(exc, ValueError) and 'complex_mode' in str(exc):
            raise
        raise ShiftSingularityError(sigma) from exc
    if check:
        res = la.dense(M @ X) - rhs2
        scale = np.linalg.norm(rhs2, axis=0)
        rel = float(np.max(np.linalg.norm(res, axis=0) / np.where(scale > 0, scale, 1.0)))
        if not np.isfinite(rel) or rel > tol:
            raise ShiftSingularityError(sigma, rel)
    return X.ravel() if vec else X


def tangential_basis(sys, data, complex_mode='complex', tol=1e-10, workers=None):
    """Real basis of the tangential Krylov space.

    Parameters
    ----------
    sys
        :class:`~phdae_mor.staircase.StaircaseSystem`.
    data
        :class:`InterpolationData`.
    complex_mode
        ``'complex'`` or ``'real-block'`` (see :func:`shifted_solve`).
    tol
        Relative residual tolerance of the shifted solves.
    workers
        Number of threads for the independent solves (default from
        ``PHDAE_NUM_THREADS``).

    Returns
    -------
    TangentialBasis
        With ``V`` filled and ``Vbar2`` unset.
    """
    blocks = assemble_operator_blocks(sys)
    B = blocks.B
    reps = data.representatives()

    def solve(i):
        s = data.shifts[i]
        b = data.directions[:, i]
        if data.is_real(i):
            s, b = complex(s.real), b.real.astype(complex)
        x = shifted_solve(blocks, complex(s), B @ b, complex_mode=complex_mode, tol=tol)
        M = s * blocks.E - blocks.A
        rhs = B @ b
        rel = np.linalg.norm(M @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
        return i, x, float(rel)

    workers = workers or la.num_workers()
    if workers > 1 and len(reps) > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(solve, reps))
    else:
        results = [solve(i) for i in reps]

    cols, dirs = [], []
    sols, res = {}, {}
    for i, x, rel in results:
        b = data.directions[:, i]
        sols[i], res[i] = x, rel
        if data.is_real(i):
            cols.append(x.real)
            dirs.append(b.real)
        else:
            cols += [x.real, x.imag]
            dirs += [b.real, b.imag]
    V = np.column_stack(cols)
    return TangentialBasis(V, blocks.slices, np.column_stack(dirs), sols, res)


def orthonormalize_v2(V, rows2=None, tol_cs=1e-10):
    """Orthonormal basis of the range of the second block row of `V`.

    `V` is first orthonormalized by a column-pivoted QR decomposition
    ``V[:, piv] = Q R``. The thin SVD ``Q2 = U diag(c) W^T`` of the second
    block row of ``Q`` yields the cosines ``c`` and the orthonormal basis
    ``Vbar2 = U[:, keep]`` with ``keep = c > tol_cs * max(c)``. The
    transformation ``Tv`` satisfies ``V2 @ Tv = Vbar2``.

    Parameters
    ----------
    V
        ``n x r`` array or :class:`TangentialBasis` (which is updated in place).
    rows2
        Row slice of the second block (taken from the basis when omitted).
    tol_cs
        Relative threshold for discarding small cosines.

    Returns
    -------
    Vbar2, Tv, r_prime
    """
    basis = V if isinstance(V, TangentialBasis) else None
    if basis is not None:
        V, rows2 = basis.V, basis.slices[1]
    if rows2 is None:
        rows2 = slice(0, V.shape[0])
    r = V.shape[1]
    # unit columns make the rank decision independent of the column scaling
    scale = np.linalg.norm(V, axis=0)
    scale[scale == 0] = 1.0
    Q, Rq, piv = spla.qr(V / scale, mode='economic', pivoting=True)
    d = np.abs(np.diag(Rq))
    k = int(np.sum(d > tol_cs * d[0])) if len(d) and d[0] > 0 else 0
    msgs = []
    if k < r:
        msgs.append(f'basis V has numerical rank {k} < {r}')
    Q2 = Q[rows2, :k]
    if k == 0 or Q2.size == 0:
        raise EmptyBasisError('the basis has no component in the proper state block')
    U, c, Wt = spla.svd(Q2, full_matrices=False)
    if c[0] <= tol_cs:
        raise EmptyBasisError('the basis has no component in the proper state block')
    keep = c > tol_cs * c[0]
    rp = int(np.sum(keep))
    if rp < r:
        msgs.append(f'proper basis rank {rp} < {r}; reduced order shrinks to {rp}')
    for msg in msgs:
        logger.warning(msg)
    Vbar2 = U[:, keep]
    T_k = spla.solve_triangular(Rq[:k, :k], Wt[keep].T / c[keep])
    Tv = np.zeros((r, rp))
    Tv[piv[:k]] = T_k
    Tv /= scale[:, None]
    if basis is not None:
        basis.Vbar2, basis.Tv, basis.cs = Vbar2, Tv, c[keep]
        basis.warnings += msgs
    return Vbar2, Tv, rp


# ---------------------------------------------------------------------------
# reduction matrices and projection
# ---------------------------------------------------------------------------

def _lu_blocks(blocks, inv_tol):
    return blocks.lu(3, 3, inv_tol), blocks.lu(1, 4, inv_tol)


def reduction_matrices(sys, Vbar2, X=None, inv_tol=1e-12):
    """Left and right reduction matrices of the Rosenbrock system matrix.

    Both are ``(n+m) x (r'+m)``. The left one has the column blocks
    ``[0; V; -A33^{-T} A23^T V; 0; 0]`` and
    ``[A14^{-T} C4^T; 0; A33^{-T}(C3^T - A13^T A14^{-T} C4^T); 0; I]``
    with ``V = X Vbar2`` (``X = I`` by default); the right one has
    ``[0; Vbar2; 0; 0; 0]`` and ``[A14^{-T} B4; 0; 0; 0; I]``.

    Returns
    -------
    We, Ve : ndarray
    """
    blocks = sys if hasattr(sys, 'a') else assemble_operator_blocks(sys)
    n1, n2, n3, n4 = blocks.sizes
    m = blocks.m
    n = n1 + n2 + n3 + n4
    rp = Vbar2.shape[1]
    if Vbar2.shape[0] != n2:
        raise ValueError(f'Vbar2 has {Vbar2.shape[0]} rows, expected {n2}')
    lu33, lu14 = _lu_blocks(blocks, inv_tol)
    s1, s2, s3, _ = blocks.slices
    d = la.dense
    XV = Vbar2 if X is None else la.dense(X) @ Vbar2

    We = np.zeros((n + m, rp + m))
    Ve = np.zeros((n + m, rp + m))
    We[s2, :rp] = XV
    We[n:, rp:] = np.eye(m)
    Ve[s2, :rp] = Vbar2
    Ve[n:, rp:] = np.eye(m)
    if n3:
        We[s3, :rp] = -lu33.solve(d(blocks.a(2, 3)).T @ XV, trans=True)
    if n1:
        Z = lu14.solve(d(blocks.c(4)).T, trans=True)
        We[s1, rp:] = Z
        Ve[s1, rp:] = lu14.solve(d(blocks.b(4)), trans=True)
    else:
        Z = np.zeros((0, m))
    if n3:
        rhs = d(blocks.c(3)).T - (d(blocks.a(1, 3)).T @ Z if n1 else 0.0)
        We[s3, rp:] = lu33.solve(rhs, trans=True)
    return We, Ve


def rosenbrock_constant(blocks):
    """Constant part ``[[-A, -B], [C, D]]`` of the Rosenbrock system matrix."""
    if la.issparse(blocks.A):
        return sps.csr_array(sps.bmat([[-blocks.A, -sps.csr_array(blocks.B)],
                                       [sps.csr_array(blocks.C), sps.csr_array(blocks.D)]]))
    return np.block([[-blocks.A, -blocks.B], [blocks.C, blocks.D]])


def reduce(sys, Vbar2, X=None, tol=1e-10, inv_tol=1e-12):
    """Project the Rosenbrock system matrix with the reduction matrices.

    Forms ``Rr(s) = We^T R(s) Ve`` and splits it into
    ``s*blkdiag(Er, Dinf) + Gamma_r + W_r`` with skew ``Gamma_r`` and
    symmetric ``W_r``.

    Returns
    -------
    SystemMatrixParts

    Raises
    ------
    NotPortHamiltonianError
        If ``W_r`` is indefinite or ``Er`` is not positive definite beyond `tol`.
    """
    blocks = assemble_operator_blocks(sys) if not hasattr(sys, 'a') else sys
    We, Ve = reduction_matrices(blocks, Vbar2, X=X, inv_tol=inv_tol)
    n = We.shape[0] - blocks.m
    rp = Vbar2.shape[1]
    K = rosenbrock_constant(blocks)
    M0 = We.T @ la.dense(K @ Ve)
    EVe = la.dense(blocks.E @ Ve[:n])
    M1 = We[:n].T @ EVe
    off = max(la.maxabs(M1[:rp, rp:]), la.maxabs(M1[rp:, :rp]))
    scale = max(1.0, la.maxabs(M1))
    if off > 1e-8 * scale:
        raise NotPortHamiltonianError(f'projected descriptor matrix is not block diagonal '
                                      f'(off-diagonal {off:.2e})')
    Er = M1[:rp, :rp]
    Dinf = M1[rp:, rp:]
    parts = SystemMatrixParts(E=la.sym(Er), Gamma=la.skew(M0), W=la.sym(M0), Dinf=la.sym(Dinf))
    defects = parts.structure_defects()
    defects['E_asym'] = la.maxabs(Er - Er.T) / scale
    if defects['W_min_eig_rel'] < -tol:
        raise NotPortHamiltonianError(f'reduced dissipation matrix is indefinite '
                                      f'(relative min eig {defects["W_min_eig_rel"]:.2e})')
    if rp and defects['E_min_eig'] <= 0:
        raise NotPortHamiltonianError('reduced descriptor matrix is not positive definite')
    return parts


def factor_dinf(Dinf, tol=1e-12):
    """Rank-revealing factorization ``Dinf = Linf @ Linf.T``.

    Keeps the eigenpairs with ``lambda > tol * lambda_max``.

    Returns
    -------
    Linf : ndarray, shape ``(m, q)``
    q : int
    """
    Dinf = np.atleast_2d(np.asarray(Dinf, dtype=float))
    m = Dinf.shape[0]
    nrm = la.maxabs(Dinf)
    if la.maxabs(Dinf - Dinf.T) > 1e-10 * max(nrm, 1e-300):
        raise ValueError('Dinf must be symmetric')
    if nrm == 0:
        return np.zeros((m, 0)), 0
    w, U = spla.eigh(la.sym(Dinf))
    lmax = w[-1]
    if lmax <= 0:
        return np.zeros((m, 0)), 0
    keep = w > tol * lmax
    return U[:, keep] * np.sqrt(w[keep]), int(np.sum(keep))


# ---------------------------------------------------------------------------
# reduced model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReducedModel(StaircaseSystem):
    """Reduced pH-DAE in staircase form with dims ``(q, r', 0, q)``.

    Besides the staircase blocks it carries the proper reduced pencil
    (`proper`), the factor `Linf` of its improper part and a `provenance`
    dictionary (method, shifts, directions, iteration history).
    """

    proper: SystemMatrixParts = field(default=None, compare=False)
    Linf: np.ndarray = field(default=None, compare=False)
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def q(self):
        return self.n1

    @property
    def r_proper(self):
        return self.n2

    @property
    def order(self):
        return self.n

    @property
    def Dinf(self):
        return self.Linf @ self.Linf.T if self.Linf is not None else np.zeros((self.m, self.m))

    def transfer(self, s):
        """Transfer function of the staircase realization at `s`."""
        E, J, R = (la.dense(M) for M in (self.E, self.J, self.R))
        A, B, C, D = J - R, self.G - self.P, (self.G + self.P).T, self.S + self.N
        if self.n == 0:
            return D.astype(complex)
        return C @ np.linalg.solve(s * E - A, B) + D

    def transfer_many(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        return np.array([self.transfer(x) for x in s])


def assemble_rom(parts, Linf=None, q=None, provenance=None, name='rom'):
    """Minimal staircase ROM from a reduced pencil and ``Dinf = Linf Linf^T``.

    With ``q = 0`` the ROM is the proper pH-ODE itself. Otherwise

    ``E = blkdiag(I_q, Er, 0)``, ``J = [[0, 0, I], [0, Jr, 0], [-I, 0, 0]]``,
    ``R = blkdiag(0, Rr, 0)``, ``G = [0; Gr; Linf^T]``, ``P = [0; Pr; 0]``.
    """
    if Linf is None:
        Linf, q = factor_dinf(parts.Dinf)
    if q is None:
        q = Linf.shape[1]
    rp, m = parts.k, parts.m
    Er, Jr, Rr = parts.E, parts.J, parts.R
    Gr, Pr = parts.G, parts.P
    n = 2 * q + rp
    E = np.zeros((n, n))
    J = np.zeros((n, n))
    R = np.zeros((n, n))
    G = np.zeros((n, m))
    P = np.zeros((n, m))
    s2 = slice(q, q + rp)
    E[:q, :q] = np.eye(q)
    E[s2, s2] = Er
    J[s2, s2] = Jr
    J[:q, q + rp:] = np.eye(q)
    J[q + rp:, :q] = -np.eye(q)
    R[s2, s2] = Rr
    G[s2] = Gr
    G[q + rp:] = Linf.T
    P[s2] = Pr
    return ReducedModel(q, rp, 0, q, m, E, J, R, G, P, parts.S, parts.N, name=name,
                        proper=parts, Linf=Linf, provenance=dict(provenance or {}))


@dataclass
class InterpolationOptions:
    """Options of :func:`interpolate`."""

    tol_cs: float = 1e-10
    tol_dinf: float = 1e-12
    solve_tol: float = 1e-10
    complex_mode: str = 'complex'
    X: object = None
    inv_tol: float = 1e-12
    workers: int = None


def _stage(stage, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except (PHDAEError, np.linalg.LinAlgError, ValueError) as exc:
        raise StageError(stage, exc) from exc


def project(sys, data, opts=None):
    """Stages 1-4: basis, orthonormalization and projection.

    Returns
    -------
    parts : SystemMatrixParts
        Reduced proper pencil with the improper coefficient.
    basis : TangentialBasis
    """
    opts = opts or InterpolationOptions()
    basis = _stage('basis', tangential_basis, sys, data, complex_mode=opts.complex_mode,
                   tol=opts.solve_tol, workers=opts.workers)
    _stage('orthonormalize', orthonormalize_v2, basis, tol_cs=opts.tol_cs)
    parts = _stage('reduce', reduce, sys, basis.Vbar2, X=opts.X, inv_tol=opts.inv_tol)
    return parts, basis


def finalize(parts, opts=None, provenance=None, name='rom'):
    """Stages 5-10: factor ``Dinf`` and assemble the staircase ROM."""
    opts = opts or InterpolationOptions()
    Linf, q = _stage('factor_dinf', factor_dinf, parts.Dinf, opts.tol_dinf)
    return _stage('assemble', assemble_rom, parts, Linf, q, provenance=provenance, name=name)


def interpolate(sys, data, opts=None, provenance=None):
    """Structure-preserving tangential interpolation.

    Parameters
    ----------
    sys
        Full-order :class:`~phdae_mor.staircase.StaircaseSystem`.
    data
        :class:`InterpolationData` closed under conjugation.
    opts
        :class:`InterpolationOptions`.

    Returns
    -------
    ReducedModel
        Satisfies ``Hr(sigma_i) b_i = H(sigma_i) b_i`` for all data and
        has the same ``Dinf`` and ``D_p`` as `sys`.

    Raises
    ------
    StageError
        Wrapping the error of the failing stage (``basis``,
        ``orthonormalize``, ``reduce``, ``factor_dinf``, ``assemble``).
    """
    opts = opts or InterpolationOptions()
    parts, basis = project(sys, data, opts)
    prov = dict(method='interpolation', shifts=data.shifts.copy(),
                directions=data.directions.copy(), warnings=list(basis.warnings))
    prov.update(provenance or {})
    rom = finalize(parts, opts, prov, name=f'{sys.name or "fom"}-rom')
    rom.provenance['basis'] = basis
    return rom


__all__ = ['InterpolationData', 'TangentialBasis', 'ReducedModel', 'InterpolationOptions',
           'tangential_basis', 'shifted_solve', 'orthonormalize_v2', 'reduction_matrices',
           'rosenbrock_constant', 'reduce', 'factor_dinf', 'assemble_rom', 'interpolate']
