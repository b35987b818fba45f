"""KYP inequality and alternative pH representations of the proper part.

A passive proper system ``(Ep, Ap, Bp, Cp, Dp)`` is port-Hamiltonian with
respect to every ``X`` satisfying ``X^T Ep = Ep^T X >= 0`` and

    [[-Ap^T X - X^T Ap, Cp^T - X^T Bp],
     [Cp - Bp^T X,      Dp + Dp^T    ]] >= 0.

For a pH proper part, ``X = I`` is feasible. The minimal solution ``X-``
solves the positive-real Riccati equation and makes the closed loop
``Ap - Bp (Dp + Dp^T)^{-1} (Cp - Bp^T X)`` stable. All computations are done
in the frame ``Ep = L L^T``, where ``X = L^{-T} Z L^T`` and ``X = I``
corresponds to ``Z = I``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from phdae_mor import _linalg as la
from phdae_mor.errors import ConsistencyError, UnsupportedCaseError
from phdae_mor.interpolation import reduction_matrices

logger = logging.getLogger(__name__)


@dataclass
class KypResidual:
    """KYP block matrix of a candidate ``X`` and derived margins."""

    matrix: np.ndarray
    min_eig: float
    symmetry_defect: float
    energy_min_eig: float

    @property
    def norm(self):
        return max(float(np.max(np.abs(spla.eigvalsh(self.matrix)))), 1e-300)

    @property
    def feasible(self):
        return self.min_eig >= -1e-8 * self.norm

    @property
    def strict(self):
        """``X^T Ep`` positive definite (certified margin ``> 1e-12`` relative)."""
        return self.energy_min_eig > 1e-12


@dataclass
class KypSolution:
    """Solution of the KYP inequality.

    Attributes
    ----------
    X
        ``n2 x n2`` matrix.
    kind
        ``'identity'``, ``'minimal'`` or ``'user'``.
    residual_min_eig, riccati_residual
        Minimum eigenvalue of the KYP matrix and relative Riccati residual.
    ordering_min_eig
        Minimum eigenvalue of ``I - Z`` in the ``Ep`` frame (``X <= I``).
    positivity_margin
        Relative minimum eigenvalue of ``sym(X^T Ep)``.
    """

    X: np.ndarray
    kind: str = 'minimal'
    residual_min_eig: float = None
    riccati_residual: float = None
    ordering_min_eig: float = None
    positivity_margin: float = None
    iterations: int = 0
    info: dict = field(default_factory=dict)


def _proper_dense(p):
    p = p.dense()
    return la.dense(p.Ep), la.dense(p.Ap), p.Bp, p.Cp, p.Dp


def check_behavioural_observability(p, tol=1e-10):
    """Hautus test ``rank [[s Ep - Ap], [Cp]] = n2`` at all eigenvalues of ``(Ep, Ap)``."""
    Ep, Ap, _, Cp, _ = _proper_dense(p)
    n2 = Ep.shape[0]
    if n2 == 0:
        return True
    lam = spla.eigvals(Ap, Ep)
    for s in lam[np.isfinite(lam)]:
        sv = spla.svd(np.vstack([s * Ep - Ap, Cp]), compute_uv=False)
        if sv[-1] <= tol * sv[0]:
            return False
    return True


def kyp_residual(p, X):
    """KYP block matrix for `X` together with its minimum eigenvalue.

    Returns
    -------
    KypResidual
        ``matrix``, ``min_eig``, the symmetry defect
        ``|X^T Ep - Ep^T X|`` and the relative minimum eigenvalue of
        ``sym(X^T Ep)``.
    """
    Ep, Ap, Bp, Cp, Dp = _proper_dense(p)
    X = np.asarray(X, dtype=float)
    K11 = -Ap.T @ X - X.T @ Ap
    K12 = Cp.T - X.T @ Bp
    K = np.block([[K11, K12], [K12.T, Dp + Dp.T]])
    K = la.sym(K)
    XE = X.T @ Ep
    defect = la.maxabs(XE - XE.T)
    en = spla.eigvalsh(la.sym(XE)) if Ep.shape[0] else np.array([1.0])
    en_rel = float(en[0] / max(np.max(np.abs(en)), 1e-300))
    return KypResidual(K, float(spla.eigvalsh(K)[0]), defect, en_rel)


class _Frame:
    """Coordinates with ``Ep = I``."""

    def __init__(self, p):
        Ep, Ap, Bp, Cp, Dp = _proper_dense(p)
        self.L = spla.cholesky(la.sym(Ep), lower=True)
        Li = lambda M: spla.solve_triangular(self.L, M, lower=True)  # noqa: E731
        self.A = Li(Li(Ap).T).T
        self.B = Li(Bp)
        self.C = Li(Cp.T).T
        self.D0 = Dp + Dp.T

    def to_X(self, Z):
        L = self.L
        return spla.solve_triangular(L.T, Z @ L.T, lower=False)

    def riccati(self, Z):
        K = self.C - self.B.T @ Z
        return self.A.T @ Z + Z @ self.A + K.T @ np.linalg.solve(self.D0, K)

    def closed_loop(self, Z):
        return self.A - self.B @ np.linalg.solve(self.D0, self.C - self.B.T @ Z)


def _newton(fr, Z, tol, max_iter):
    Q = fr.C.T @ np.linalg.solve(fr.D0, fr.C)
    BD = fr.B @ np.linalg.solve(fr.D0, fr.B.T)
    scale = max(1.0, la.maxabs(Q))
    for it in range(1, max_iter + 1):
        Ac = fr.closed_loop(Z)
        Zn = spla.solve_continuous_lyapunov(Ac.T, -Q + Z @ BD @ Z)
        Zn = la.sym(Zn)
        step = la.maxabs(Zn - Z) / max(1.0, la.maxabs(Zn))
        Z = Zn
        if step < tol and la.maxabs(fr.riccati(Z)) < 1e-10 * scale:
            return Z, it
    return Z, max_iter


def minimal_kyp_solution(p, tol=1e-13, max_iter=60, check_observability='auto', restart='auto'):
    """Minimal solution ``X-`` of the KYP inequality.

    Newton-Kleinman iteration on the positive-real Riccati equation started
    at the feasible ``X = I``; each step solves a Lyapunov equation with the
    Bartels-Stewart method. The limit is cross-checked against the
    stabilizing solution obtained from a Hamiltonian-Schur Riccati solver.

    The Hautus observability test and the restarted second Newton run are
    skipped by default (``'auto'``) when ``n2 > 200``; so is the
    cross-check unless the identity is not a stabilizing start.

    Raises
    ------
    UnsupportedCaseError
        If ``Dp + Dp^T`` is singular or the system is not behaviourally
        observable.
    ConsistencyError
        If the result fails the residual, feasibility or ordering checks.
    """
    Ep, Ap, Bp, Cp, Dp = _proper_dense(p)
    n2 = Ep.shape[0]
    D0 = Dp + Dp.T
    if D0.size and spla.svd(D0, compute_uv=False)[-1] <= 1e-12 * max(1.0, la.maxabs(D0)):
        raise UnsupportedCaseError('Dp + Dp^T is singular; the minimal KYP solution is not '
                                   'characterized by a Riccati equation')
    if n2 == 0:
        return KypSolution(np.zeros((0, 0)), 'minimal', 0.0, 0.0, 0.0, 1.0)
    if check_observability == 'auto':
        check_observability = n2 <= 200
    if restart == 'auto':
        restart = n2 <= 200
    if check_observability and not check_behavioural_observability(p):
        raise UnsupportedCaseError('proper part is not behaviourally observable')
    fr = _Frame(p)
    info = {}
    I = np.eye(n2)
    start = 'identity'
    if np.max(np.linalg.eigvals(fr.closed_loop(I)).real) >= 0:
        start = 'riccati-solver'
    Zref = None
    if restart or start != 'identity':
        try:
            F0 = fr.A - fr.B @ np.linalg.solve(fr.D0, fr.C)
            Q = -fr.C.T @ np.linalg.solve(fr.D0, fr.C)
            Zref = -la.sym(spla.solve_continuous_are(F0, fr.B, Q, fr.D0))
        except (np.linalg.LinAlgError, ValueError) as exc:
            info['riccati_solver_error'] = str(exc)
            if start != 'identity':
                raise ConsistencyError(f'no stabilizing start for the Newton iteration '
                                       f'({exc})') from exc
    Z, its = _newton(fr, I if start == 'identity' else Zref, tol, max_iter)
    info['start'] = start
    if Zref is not None:
        info['riccati_solver_deviation'] = la.maxabs(Z - Zref) / max(1.0, la.maxabs(Z))
    # a second run from a different stabilizing start has to reach the same limit
    if restart:
        Z2, _ = _newton(fr, 0.5 * (Z + I), tol, max_iter)
        info['restart_deviation'] = la.maxabs(Z2 - Z) / max(1.0, la.maxabs(Z))

    X = fr.to_X(Z)
    res = kyp_residual(p, X)
    ric = la.maxabs(fr.riccati(Z)) / max(1.0, la.maxabs(fr.C.T @ np.linalg.solve(fr.D0, fr.C)))
    order = float(spla.eigvalsh(I - Z)[0])
    ac = float(np.max(np.linalg.eigvals(fr.closed_loop(Z)).real))
    info['closed_loop_max_real'] = ac
    sol = KypSolution(X, 'minimal', res.min_eig, ric, order, res.energy_min_eig, its, info)
    if ric > 1e-8:
        raise ConsistencyError(f'Riccati residual {ric:.2e} too large')
    if not res.feasible:
        raise ConsistencyError(f'KYP matrix of X- is indefinite (min eig {res.min_eig:.2e})')
    if order < -1e-8:
        raise ConsistencyError(f'X- is not below the identity solution (min eig {order:.2e})')
    if res.energy_min_eig <= 1e-12:
        logger.warning('X- is only semidefinite (margin %.2e)', res.energy_min_eig)
    return sol


def identity_solution(p):
    res = kyp_residual(p, np.eye(p.n2))
    return KypSolution(np.eye(p.n2), 'identity', res.min_eig, None, 0.0, res.energy_min_eig)


def reduction_matrix_minus(sys, Vbar2, X):
    """Left reduction matrix with ``Vbar2`` replaced by ``X Vbar2`` in the first column block."""
    X = X.X if isinstance(X, KypSolution) else X
    return reduction_matrices(sys, Vbar2, X=X)[0]
