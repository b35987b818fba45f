"""Strict system equivalence and the proper/improper split of a staircase pH-DAE.

Two constant block matrices ``T1`` and ``T2`` transform the system matrix
``[[sE - A, -B], [C, D]]`` such that only its second state group and the
port block remain coupled. That part is the proper subsystem
``(Ep, Ap, Bp, Cp, Dp)``; the port block additionally carries the linear
improper term ``s*Dinf``::

    H(s) = Cp (s Ep - Ap)^{-1} Bp + Dp + s Dinf.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from phdae_mor import _linalg as la
from phdae_mor.errors import ConsistencyError, NotPortHamiltonianError
from phdae_mor.pencil import SystemMatrixParts
from phdae_mor.staircase import assemble_operator_blocks

logger = logging.getLogger(__name__)

# block positions (1-based, 5 = port block) that vanish after the transformation
_M0_ZERO = ((1, 2), (1, 3), (2, 1), (2, 3), (2, 4), (3, 1), (3, 2), (3, 4), (3, 5),
            (4, 2), (4, 3), (4, 4), (4, 5), (5, 3), (5, 4))
_M0_MINUS_IDENTITY = ((3, 3), (1, 4), (4, 1))
_M1_FREE = ((1, 1), (1, 5), (5, 1), (2, 2), (5, 5))


class _Inverse:
    """Inverse of a factorized block, applied from either side."""

    def __init__(self, lu):
        self.lu = lu
        self.shape = lu.shape[::-1]

    def lmul(self, X):
        return self.lu.solve(la.dense(X))

    def rmul(self, X):
        return self.lu.solve(la.dense(X).T, trans=True).T

    def toarray(self):
        return self.lu.solve(np.eye(self.lu.n))


def _empty(X):
    return X is None or 0 in X.shape


def _mul(a, b):
    if _empty(a) or _empty(b):
        return None
    if isinstance(a, _Inverse):
        return a.lmul(b.toarray() if isinstance(b, _Inverse) else b)
    if isinstance(b, _Inverse):
        return b.rmul(a)
    out = a @ b
    return out


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    if sps.issparse(a) and sps.issparse(b):
        return a + b
    return la.dense(a) + la.dense(b)


def _block_product(X, Y):
    n = len(X)
    out = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            acc = None
            for k in range(n):
                acc = _add(acc, _mul(X[i][k], Y[k][j]))
            out[i][j] = acc
    return out


def _block_dense(blocks, sizes):
    rows = []
    for i, row in enumerate(blocks):
        r = []
        for j, b in enumerate(row):
            if _empty(b):
                r.append(np.zeros((sizes[i], sizes[j])))
            elif isinstance(b, _Inverse):
                r.append(b.toarray())
            else:
                r.append(la.dense(b))
        rows.append(r)
    return np.block(rows)


@dataclass(eq=False)
class SseTransform:
    """Constant transformation pair ``(T1, T2)`` stored as 5x5 block lists.

    Blocks are ``None`` (zero), explicit matrices, or inverse operators of
    the factorized blocks ``A33``, ``A41``, ``A14``.
    """

    T1: list
    T2: list
    sizes: tuple
    lu33: object
    lu41: object
    lu14: object

    def dense(self):
        """Return ``(T1, T2)`` as explicit dense matrices."""
        return _block_dense(self.T1, self.sizes), _block_dense(self.T2, self.sizes)


def _factor_blocks(blocks, inv_tol=1e-12):
    return blocks.lu(3, 3, inv_tol), blocks.lu(4, 1, inv_tol), blocks.lu(1, 4, inv_tol)


def build_transformations(blocks, inv_tol=1e-12):
    """Return the strict-system-equivalence pair ``(T1, T2)``.

    Raises
    ------
    InvertibilityError
        If ``A33``, ``A41`` or ``A14`` is singular.
    """
    n1, n2, n3, n4 = blocks.sizes
    m = blocks.m
    lu33, lu41, lu14 = _factor_blocks(blocks, inv_tol)
    a, b, c = blocks.a, blocks.b, blocks.c
    eye = lambda k: sps.identity(k, format='csr') if k else None  # noqa: E731

    def right33(X):  # X A33^{-1}
        return lu33.solve(la.dense(X).T, trans=True).T

    A13_33 = right33(a(1, 3))
    A23_33 = right33(a(2, 3))
    A33_31 = lu33.solve(a(3, 1))
    A33_32 = lu33.solve(a(3, 2))
    A41_B4 = lu41.solve(b(4))
    C4_14 = lu14.solve(la.dense(c(4)).T, trans=True).T
    schur21 = la.dense(a(2, 1)) - A23_33 @ la.dense(a(3, 1))
    T1 = [[None] * 5 for _ in range(5)]
    T2 = [[None] * 5 for _ in range(5)]

    T1[0][0] = eye(n1)
    T1[0][2] = -A13_33
    T1[1][1] = eye(n2)
    T1[1][2] = -A23_33
    T1[1][3] = -lu41.solve(schur21.T, trans=True).T
    T1[2][2] = _Inverse(lu33) if n3 else None
    T1[3][3] = _Inverse(lu41) if n4 else None
    T1[4][0] = C4_14
    T1[4][2] = right33(la.dense(c(3)) - C4_14 @ la.dense(a(1, 3)))
    T1[4][4] = eye(m)

    T2[0][0] = eye(n1)
    T2[0][4] = -A41_B4
    T2[1][1] = eye(n2)
    T2[2][0] = -A33_31
    T2[2][1] = -A33_32
    T2[2][2] = eye(n3)
    T2[2][4] = -lu33.solve(la.dense(b(3)) - la.dense(a(3, 1)) @ A41_B4)
    T2[3][1] = lu14.solve(-la.dense(a(1, 2)) + la.dense(a(1, 3)) @ A33_32)
    T2[3][3] = _Inverse(lu14) if n4 else None
    T2[4][4] = eye(m)
    return SseTransform(T1, T2, (n1, n2, n3, n4, m), lu33, lu41, lu14)


def _system_blocks(blocks):
    """Constant and s-coefficient parts of the system matrix as 5x5 block lists."""
    K = [[None] * 5 for _ in range(5)]
    Ex = [[None] * 5 for _ in range(5)]
    for i in range(1, 5):
        for j in range(1, 5):
            K[i - 1][j - 1] = -blocks.a(i, j)
        K[i - 1][4] = -blocks.b(i)
        K[4][i - 1] = blocks.c(i)
    K[4][4] = blocks.D
    Ex[0][0] = blocks.e(1, 1)
    Ex[1][1] = blocks.e(2, 2)
    return K, Ex


class ProperStateOperator:
    """Implicit ``Ap = A22 - A23 A33^{-1} A32`` that is never assembled."""

    def __init__(self, blocks, lu33):
        self.A22 = blocks.a(2, 2)
        self.A23 = blocks.a(2, 3)
        self.A32 = blocks.a(3, 2)
        self.lu33 = lu33
        self.shape = self.A22.shape
        self.T = _TransposedProperOperator(self)

    def __matmul__(self, Z):
        Z = la.dense(Z)
        out = self.A22 @ Z
        if self.lu33.n:
            out = out - self.A23 @ self.lu33.solve(self.A32 @ Z)
        return out

    def toarray(self):
        return self @ np.eye(self.shape[1])


class _TransposedProperOperator:
    def __init__(self, op):
        self.op = op
        self.shape = op.shape[::-1]

    def __matmul__(self, Z):
        op = self.op
        Z = la.dense(Z)
        out = op.A22.T @ Z
        if op.lu33.n:
            out = out - op.A32.T @ op.lu33.solve(op.A23.T @ Z, trans=True)
        return out


@dataclass(eq=False)
class ProperSubsystem:
    """Proper ODE part ``(Ep, Ap, Bp, Cp, Dp)`` plus the improper coefficient ``Dinf``.

    `Ap` is a dense array, or a :class:`ProperStateOperator` when the
    subsystem was extracted without materializing it.
    """

    Ep: object
    Ap: object
    Bp: np.ndarray
    Cp: np.ndarray
    Dp: np.ndarray
    Dinf: np.ndarray
    checks: dict = field(default_factory=dict)

    @property
    def n2(self):
        return self.Ep.shape[0]

    @property
    def m(self):
        return self.Dp.shape[0]

    @property
    def materialized(self):
        return isinstance(self.Ap, np.ndarray)

    def dense(self):
        if self.materialized and not sps.issparse(self.Ep):
            return self
        return ProperSubsystem(la.dense(self.Ep), self.Ap if self.materialized else self.Ap.toarray(),
                               self.Bp, self.Cp, self.Dp, self.Dinf, dict(self.checks))

    @property
    def ph(self):
        return ph_form_of_proper(self)

    def transfer(self, s, include_improper=True):
        M = s * self.Ep - la.dense(self.Ap) if self.materialized else None
        if M is None:
            raise ValueError('transfer evaluation needs a materialized subsystem')
        X = np.linalg.solve(M, self.Bp) if self.n2 else np.zeros((0, self.m))
        H = self.Cp @ X + self.Dp
        return H + s * self.Dinf if include_improper else H


def _direct_formulas(blocks, lu33, lu41, lu14):
    """Proper blocks from closed-form expressions in the original blocks.

    Only products of (sparse) blocks with ``m`` columns are formed, so the
    cost stays linear in the number of nonzeros.
    """
    a, b, c = blocks.a, blocks.b, blocks.c
    d = la.dense
    y4 = lu41.solve(d(b(4)))                     # A41^{-1} B4
    c4 = lu14.solve(d(c(4)).T, trans=True).T     # C4 A14^{-1}
    z3 = lu33.solve(d(b(3)) - d(a(3, 1) @ y4))   # A33^{-1} (B3 - A31 A41^{-1} B4)
    w3 = lu33.solve((d(c(3)) - d((a(1, 3).T @ c4.T).T)).T, trans=True)

    Bp = d(b(2)) - d(a(2, 1) @ y4) - d(a(2, 3) @ z3)
    Cp = d(c(2)) - d((a(1, 2).T @ c4.T).T) - d(a(3, 2).T @ w3).T
    Dp = (blocks.D - d(c(1)) @ y4 - d(c(3)) @ z3
          + c4 @ (d(a(1, 1) @ y4) + d(a(1, 3) @ z3) - d(b(1))))
    Dinf = -c4 @ d(blocks.e(1, 1) @ y4)
    return Bp, Cp, Dp, Dinf


def proper_state_matrix(blocks, lu33=None):
    """Dense ``A22 - A23 A33^{-1} A32``."""
    if lu33 is None:
        lu33 = blocks.lu(3, 3)
    return ProperStateOperator(blocks, lu33).toarray()


def extract_proper(sys, materialize=None, tol=1e-10, inv_tol=1e-12):
    """Extract the proper subsystem and the improper coefficient ``Dinf``.

    With ``materialize=True`` the transformed system matrix ``T1 R(s) T2`` is
    formed block by block, its constant block pattern is asserted and the
    proper blocks are read off it and cross-checked against the closed-form
    expressions. With ``materialize=False`` only the closed-form route is
    used and ``Ap`` stays implicit (large sparse models). The default
    materializes for ``n <= 4000``.

    Raises
    ------
    ConsistencyError
        If the transformed system matrix does not have the expected pattern.
    """
    blocks = assemble_operator_blocks(sys)
    if materialize is None:
        materialize = sys.n <= la.DENSE_LIMIT
    lu33, lu41, lu14 = _factor_blocks(blocks, inv_tol)
    Bp, Cp, Dp, Dinf = _direct_formulas(blocks, lu33, lu41, lu14)
    Ep = blocks.e(2, 2)
    if not materialize:
        return ProperSubsystem(Ep, ProperStateOperator(blocks, lu33), Bp, Cp, Dp, la.sym(Dinf))

    T = build_transformations(blocks, inv_tol)
    K, Ex = _system_blocks(blocks)
    M0 = _block_product(T.T1, _block_product(K, T.T2))
    M1 = _block_product(T.T1, _block_product(Ex, T.T2))
    sizes = T.sizes
    get = lambda M, i, j: (np.zeros((sizes[i - 1], sizes[j - 1])) if _empty(M[i - 1][j - 1])  # noqa: E731
                           else la.dense(M[i - 1][j - 1]))

    scale = max(1.0, max(la.maxabs(get(M0, i, j)) for i in range(1, 6) for j in range(1, 6)),
                max(la.maxabs(get(M1, i, j)) for i in range(1, 6) for j in range(1, 6)))
    worst = 0.0
    for i, j in _M0_ZERO:
        worst = max(worst, la.maxabs(get(M0, i, j)))
    for i, j in _M0_MINUS_IDENTITY:
        X = get(M0, i, j)
        if X.size:
            worst = max(worst, la.maxabs(X + np.eye(X.shape[0])))
    for i in range(1, 6):
        for j in range(1, 6):
            if (i, j) not in _M1_FREE:
                worst = max(worst, la.maxabs(get(M1, i, j)))
    if worst > tol * scale:
        raise ConsistencyError(f'transformed system matrix violates the constant block pattern '
                               f'(defect {worst:.2e}, scale {scale:.2e})')

    Ap = -get(M0, 2, 2)
    parts = dict(Ep=get(M1, 2, 2), Ap=Ap, Bp=-get(M0, 2, 5), Cp=get(M0, 5, 2),
                 Dp=get(M0, 5, 5), Dinf=get(M1, 5, 5))
    Ap_direct = proper_state_matrix(blocks, lu33)
    direct = dict(Ap=Ap_direct, Bp=Bp, Cp=Cp, Dp=Dp, Dinf=Dinf)
    checks = {'pattern_defect': worst / scale}
    for key, ref in direct.items():
        dev = la.maxabs(parts[key] - ref) / max(1.0, la.maxabs(ref))
        checks[f'{key}_direct'] = dev
        if dev > tol:
            raise ConsistencyError(f'{key} from the transformed system matrix deviates from the '
                                   f'closed form by {dev:.2e}')
    if la.maxabs(parts['Ep'] - la.dense(Ep)) > tol * max(1.0, la.maxabs(Ep)):
        raise ConsistencyError('Ep differs from E22')
    return ProperSubsystem(Ep, Ap, parts['Bp'], parts['Cp'], parts['Dp'],
                           la.sym(parts['Dinf']), checks)


def dinf_closed_form(blocks, E11=None, inv_tol=1e-12):
    """``Dinf = G4^T A41^{-T} E11 A41^{-1} G4`` (zero when there is no index-2 part)."""
    n1, _, _, n4 = blocks.sizes
    m = blocks.m
    if n4 == 0:
        return np.zeros((m, m))
    if E11 is None:
        E11 = blocks.e(1, 1)
    lu41 = blocks.lu(4, 1, inv_tol)
    G4 = la.dense(blocks.c(4)).T   # C4 = G4^T since P4 = 0
    Y = lu41.solve(G4)
    return Y.T @ (la.dense(E11) @ Y)


def ph_form_of_proper(p, tol=1e-10):
    """pH-ODE representation of the proper subsystem by symmetric/skew splitting.

    Returns
    -------
    SystemMatrixParts
        With ``E = Ep`` and ``Dinf`` carried along.

    Raises
    ------
    NotPortHamiltonianError
        If the dissipation part is indefinite beyond `tol` (relative).
    """
    p = p.dense()
    parts = SystemMatrixParts.from_realization(p.Ep, p.Ap, p.Bp, p.Cp, p.Dp, p.Dinf)
    defects = parts.structure_defects()
    if defects['W_min_eig_rel'] < -tol:
        raise NotPortHamiltonianError(
            f'dissipation matrix of the proper subsystem is indefinite '
            f'(relative min eig {defects["W_min_eig_rel"]:.2e})')
    return parts
