"""Port-Hamiltonian descriptor systems in staircase form.

A pH-DAE

    E x' = (J - R) x + (G - P) u,
    y    = (G + P)^T x + (S + N) u

is stored with its state split into four groups of sizes ``n1, n2, n3, n4``.
In staircase form ``E = diag(E11, E22, 0, 0)`` with positive definite
``E11, E22``, the blocks ``J24, J34, J42, J43, J44`` vanish, ``R`` has zero
fourth block row and column, ``P4 = 0`` and ``J41`` as well as
``J33 - R33`` are invertible.
"""

import weakref
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from phdae_mor import _linalg as la
from phdae_mor.errors import StructuralError

#: zero blocks of J in staircase form (1-based block indices)
J_ZERO_BLOCKS = ((2, 4), (3, 4), (4, 2), (4, 3), (4, 4))


def _as_matrix(M, shape, name):
    if M is None:
        return sps.csr_array(shape)
    if sps.issparse(M):
        M = sps.csr_array(M, dtype=float)
    else:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.size == 0:
            M = M.reshape(shape)
    if M.shape != shape:
        raise StructuralError(f'{name} has shape {M.shape}, expected {shape}')
    return M


@dataclass(frozen=True, eq=False)
class StaircaseSystem:
    """Block-structured pH-DAE.

    Parameters
    ----------
    n1, n2, n3, n4
        Sizes of the four state groups.
    m
        Number of inputs (= outputs).
    E, J, R
        ``n x n`` matrices (dense ndarrays or scipy sparse).
    G, P
        ``n x m`` port matrices.
    S, N
        ``m x m`` feedthrough matrices. Only ``S + N`` enters the transfer
        function; its symmetric and skew parts are used as dissipative and
        structural feedthrough.
    """

    n1: int
    n2: int
    n3: int
    n4: int
    m: int
    E: object
    J: object
    R: object
    G: np.ndarray
    P: np.ndarray
    S: np.ndarray
    N: np.ndarray
    name: str = field(default='', compare=False)

    def __post_init__(self):
        dims = (self.n1, self.n2, self.n3, self.n4, self.m)
        if any(int(d) != d or d < 0 for d in dims):
            raise StructuralError(f'block dimensions must be nonnegative integers, got {dims}')
        n, m = self.n, self.m
        set_ = object.__setattr__
        for nm in ('E', 'J', 'R'):
            set_(self, nm, _as_matrix(getattr(self, nm), (n, n), nm))
        for nm in ('G', 'P'):
            set_(self, nm, la.dense(_as_matrix(getattr(self, nm), (n, m), nm)))
        for nm in ('S', 'N'):
            set_(self, nm, la.dense(_as_matrix(getattr(self, nm), (m, m), nm)))

    @classmethod
    def from_blocks(cls, E11=None, E22=None, J=None, R=None, G=None, P=None, S=None, N=None,
                    dims=None, m=None, name=''):
        """Assemble a system from block dictionaries.

        `J` and `R` map 1-based ``(i, j)`` tuples to blocks, `G` and `P` map
        ``i`` to block rows. Missing blocks are zero. `dims` is
        ``(n1, n2, n3, n4)``.
        """
        n1, n2, n3, n4 = dims
        sizes = dims
        n = sum(sizes)

        def assemble(blocks):
            # sparse storage iff any supplied block is sparse
            blocks = blocks or {}
            sparse = any(sps.issparse(b) for b in blocks.values() if b is not None)
            rows = []
            for i in range(4):
                row = []
                for j in range(4):
                    b = blocks.get((i + 1, j + 1))
                    if b is None:
                        b = np.zeros((sizes[i], sizes[j]))
                    row.append(sps.csr_array(b) if sparse else la.dense(b).reshape(sizes[i], sizes[j]))
                rows.append(row)
            if sparse:
                return sps.csr_array(sps.block_array(rows, format='csr'))
            return np.block(rows)

        E_blocks = {}
        if E11 is not None:
            E_blocks[(1, 1)] = E11
        if E22 is not None:
            E_blocks[(2, 2)] = E22
        E = assemble(E_blocks)

        def stack(blocks):
            cols = []
            for i in range(4):
                b = (blocks or {}).get(i + 1)
                cols.append(np.zeros((sizes[i], m)) if b is None else la.dense(b).reshape(sizes[i], m))
            return np.vstack(cols)

        return cls(n1, n2, n3, n4, m, E, assemble(J), assemble(R), stack(G), stack(P),
                   np.zeros((m, m)) if S is None else S,
                   np.zeros((m, m)) if N is None else N, name=name)

    @property
    def n(self):
        return self.n1 + self.n2 + self.n3 + self.n4

    @property
    def dims(self):
        return (self.n1, self.n2, self.n3, self.n4)

    @cached_property
    def slices(self):
        return la.block_sizes_to_slices(self.dims)

    def block(self, M, i, j=None):
        """Return block ``(i, j)`` (1-based) of the state matrix `M`.

        `M` is an attribute name (``'E'``, ``'J'``, ``'R'``, ``'G'``, ``'P'``)
        or a matrix partitioned like the state.
        """
        if isinstance(M, str):
            M = getattr(self, M)
        si = self.slices[i - 1]
        if j is None:
            return M[si]
        return M[si, self.slices[j - 1]]

    @property
    def E11(self):
        return self.block('E', 1, 1)

    @property
    def E22(self):
        return self.block('E', 2, 2)

    @property
    def S_sym(self):
        return la.sym(self.S + self.N)

    @property
    def N_skew(self):
        return la.skew(self.S + self.N)

    @property
    def is_sparse(self):
        return sps.issparse(self.J) or sps.issparse(self.E)

    def __repr__(self):
        tag = f' {self.name!r}' if self.name else ''
        return (f'StaircaseSystem{tag}(n1={self.n1}, n2={self.n2}, n3={self.n3}, '
                f'n4={self.n4}, m={self.m})')


@dataclass(frozen=True, eq=False)
class OperatorBlocks:
    """Descriptor realization ``A = J - R, B = G - P, C = (G + P)^T, D = S + N``."""

    A: object
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: object
    slices: list
    _lu: dict = field(default_factory=dict, repr=False)

    def lu(self, i, j, tol=1e-12):
        """Cached LU factorization of block ``A[i, j]`` (checked for invertibility)."""
        key = (i, j, tol)
        if key not in self._lu:
            self._lu[key] = la.factorize(self.a(i, j), f'A{i}{j}', tol)
        return self._lu[key]

    def a(self, i, j):
        return self.A[self.slices[i - 1], self.slices[j - 1]]

    def b(self, i):
        return self.B[self.slices[i - 1]]

    def c(self, j):
        return self.C[:, self.slices[j - 1]]

    def e(self, i, j):
        return self.E[self.slices[i - 1], self.slices[j - 1]]

    @property
    def sizes(self):
        return tuple(s.stop - s.start for s in self.slices)

    @property
    def m(self):
        return self.D.shape[0]


_BLOCKS = weakref.WeakKeyDictionary()


def assemble_operator_blocks(sys):
    """Return the descriptor realization of `sys` (sparsity is kept).

    The result is cached per system, so repeated calls share block
    factorizations.
    """
    blocks = _BLOCKS.get(sys)
    if blocks is None:
        A = sys.J - sys.R
        if sps.issparse(A):
            A = sps.csr_array(A)
        blocks = OperatorBlocks(A=A, B=sys.G - sys.P, C=(sys.G + sys.P).T, D=sys.S + sys.N,
                                E=sys.E, slices=sys.slices)
        _BLOCKS[sys] = blocks
    return blocks


def differentiation_index(sys):
    """Differentiation index of the uncontrolled system, read off the block sizes."""
    if sys.n1 != sys.n4:
        raise StructuralError(f'n1={sys.n1} and n4={sys.n4} must coincide')
    if sys.n1 > 0:
        return 2
    return 1 if sys.n3 > 0 else 0


def hamiltonian(sys, x):
    """Stored energy ``x^T E x / 2``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise StructuralError(f'state has shape {x.shape}, expected ({sys.n},)')
    return 0.5 * float(x @ (sys.E @ x))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    violation: float
    tolerance: float
    note: str = ''


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def valid(self):
        return all(c.passed for c in self.checks)

    def __bool__(self):
        return self.valid

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def add(self, name, violation, tolerance, passed=None, note=''):
        if passed is None:
            passed = violation <= tolerance
        self.checks.append(Check(name, bool(passed), float(violation), float(tolerance), note))

    def to_dict(self):
        return {'valid': self.valid,
                'checks': [dict(name=c.name, passed=c.passed, violation=c.violation,
                                tolerance=c.tolerance, note=c.note) for c in self.checks]}

    def __str__(self):
        lines = [f'{"check":<22} {"status":<6} {"violation":>12} {"tolerance":>12}']
        for c in self.checks:
            lines.append(f'{c.name:<22} {"ok" if c.passed else "FAIL":<6} '
                         f'{c.violation:>12.3e} {c.tolerance:>12.3e} {c.note}')
        lines.append('valid staircase pH-DAE' if self.valid else 'INVALID')
        return '\n'.join(lines)


def _check_dims(sys):
    if sys.n1 != sys.n4:
        raise StructuralError(f'n1={sys.n1} and n4={sys.n4} must coincide (index-2 pairing)')
    n, m = sys.n, sys.m
    for nm, shape in (('E', (n, n)), ('J', (n, n)), ('R', (n, n)), ('G', (n, m)),
                      ('P', (n, m)), ('S', (m, m)), ('N', (m, m))):
        if getattr(sys, nm).shape != shape:
            raise StructuralError(f'{nm} has shape {getattr(sys, nm).shape}, expected {shape}')


def dissipation_matrix(sys):
    """``W = [[R, P], [P^T, sym(S + N)]]``."""
    R = sys.R
    if sps.issparse(R):
        return sps.csr_array(sps.bmat([[R, sps.csr_array(sys.P)],
                                       [sps.csr_array(sys.P.T), sps.csr_array(sys.S_sym)]]))
    return np.block([[R, sys.P], [sys.P.T, sys.S_sym]])


def structure_matrix(sys):
    """``Gamma = [[-J, -G], [G^T, skew(S + N)]]``."""
    J = sys.J
    if sps.issparse(J):
        return sps.csr_array(sps.bmat([[-J, sps.csr_array(-sys.G)],
                                       [sps.csr_array(sys.G.T), sps.csr_array(sys.N_skew)]]))
    return np.block([[-J, -sys.G], [sys.G.T, sys.N_skew]])


def validate_staircase(sys, tol=1e-10, skew_tol=1e-12, inv_tol=1e-12, seed=0):
    """Check every structural invariant of a staircase pH-DAE.

    Parameters
    ----------
    sys
        The :class:`StaircaseSystem`.
    tol
        Relative slack for positive semi-definiteness: ``min eig >= -tol*||.||_2``.
    skew_tol
        Relative tolerance for skew symmetry: ``||J + J^T||_max <= skew_tol*||J||_max``.
    inv_tol
        Threshold for ``sigma_min / sigma_max`` of ``J41`` and ``J33 - R33``.
    seed
        Seed of the random point used for the regularity test.

    Returns
    -------
    ValidationReport

    Raises
    ------
    StructuralError
        If block dimensions are inconsistent.
    """
    _check_dims(sys)
    rep = ValidationReport()

    # descriptor matrix
    for k in (1, 2):
        Ekk = sys.block('E', k, k)
        if Ekk.shape[0] == 0:
            continue
        asym = la.maxabs(Ekk - Ekk.T)
        rep.add(f'E{k}{k}_symmetric', asym, skew_tol * max(1.0, la.maxabs(Ekk)))
        lam, how = la.min_eig_sym(Ekk)
        rep.add(f'E{k}{k}_posdef', -lam, 0.0, passed=lam > 0, note=f'min eig {lam:.3e} ({how})')
    e_off = 0.0
    for i in range(1, 5):
        for j in range(1, 5):
            if (i, j) not in ((1, 1), (2, 2)):
                e_off = max(e_off, la.maxabs(sys.block('E', i, j)))
    rep.add('E_zero_pattern', e_off, 0.0)

    # structure part
    Jmax = la.maxabs(sys.J)
    rep.add('J_skew', la.maxabs(sys.J + sys.J.T), skew_tol * Jmax)
    rep.add('J_zero_pattern', max(la.maxabs(sys.block('J', i, j)) for i, j in J_ZERO_BLOCKS), 0.0)
    Gam = structure_matrix(sys)
    rep.add('Gamma_skew', la.maxabs(Gam + Gam.T), skew_tol * max(1.0, la.maxabs(Gam)))

    # dissipation part
    Rmax = la.maxabs(sys.R)
    rep.add('R_symmetric', la.maxabs(sys.R - sys.R.T), skew_tol * max(1.0, Rmax))
    r4 = max(la.maxabs(sys.block('R', 4, j)) for j in range(1, 5))
    r4 = max(r4, max(la.maxabs(sys.block('R', i, 4)) for i in range(1, 5)))
    rep.add('R_zero_pattern', r4, 0.0)
    rep.add('P4_zero', la.maxabs(sys.block('P', 4)), 0.0)
    lam, how = la.min_eig_sym(sys.R)
    scale = la.norm2_sym(sys.R)
    rep.add('R_psd', max(0.0, -lam), tol * scale, note=f'min eig {lam:.3e} ({how})')
    W = dissipation_matrix(sys)
    lam, how = la.min_eig_sym(W)
    scale = la.norm2_sym(W)
    rep.add('W_psd', max(0.0, -lam), tol * scale, note=f'min eig {lam:.3e} ({how})')

    # invertibility of the algebraic blocks
    if sys.n4 > 0:
        ratio = la.singular_value_ratio(sys.block('J', 4, 1))
        rep.add('J41_invertible', -ratio, -inv_tol, passed=ratio >= inv_tol,
                note=f'sigma ratio {ratio:.3e}')
    if sys.n3 > 0:
        A33 = sys.block('J', 3, 3) - sys.block('R', 3, 3)
        ratio = la.singular_value_ratio(A33)
        rep.add('A33_invertible', -ratio, -inv_tol, passed=ratio >= inv_tol,
                note=f'sigma ratio {ratio:.3e}')

    # probabilistic regularity test of the pencil
    rng = np.random.default_rng(seed)
    lam0 = np.exp(2j * np.pi * rng.uniform())
    ok, res = _regular_at(sys, lam0, rng)
    rep.add('pencil_regular', res, 1e-8, passed=ok, note=f'lambda0={lam0:.3f}')
    return rep


def _regular_at(sys, lam0, rng):
    if sys.n == 0:
        return True, 0.0
    M = lam0 * sys.E - (sys.J - sys.R)
    if sps.issparse(M):
        M = sps.csc_matrix(M)
    try:
        lu = la.LU(M)
        x = rng.standard_normal(sys.n)
        y = lu.solve(x.astype(complex))
    except Exception:
        return False, np.inf
    if not np.all(np.isfinite(y)):
        return False, np.inf
    res = np.linalg.norm(M @ y - x) / np.linalg.norm(x)
    return res <= 1e-8, float(res)
