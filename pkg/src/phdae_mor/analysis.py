"""Frequency responses and error measures for full and reduced models.

The H2 error is computed from the proper parts of both models (the
polynomial parts have to coincide, otherwise the error is unbounded) with a
Lyapunov equation of the error system. The H-infinity error is estimated by
sampling the imaginary axis with local refinement around the maximum.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
from scipy.integrate import trapezoid

from phdae_mor import _linalg as la
from phdae_mor.errors import ConsistencyError, ShiftSingularityError
from phdae_mor.pencil import SystemMatrixParts
from phdae_mor.rosenbrock import ProperSubsystem, extract_proper

#: default frequency window (rad/s) and grid size
OMEGA_MIN, OMEGA_MAX, N_POINTS = 1e-4, 1e6, 400
#: above this error-system order the H2 norm is computed by quadrature
H2_DENSE_LIMIT = 2000
#: polynomial parts are considered equal below this relative deviation
MATCH_TOL = 1e-12


class Unbounded:
    """Marker for an infinite system norm."""

    def __init__(self, reason):
        self.reason = reason

    def __str__(self):
        return f'unbounded ({self.reason})'

    __repr__ = __str__

    def __float__(self):
        return float('inf')


def is_unbounded(x):
    return isinstance(x, Unbounded)


def frequency_grid(omega_min=OMEGA_MIN, omega_max=OMEGA_MAX, points=N_POINTS):
    return np.logspace(np.log10(omega_min), np.log10(omega_max), points)


# ---------------------------------------------------------------------------
# transfer function evaluation
# ---------------------------------------------------------------------------

def _realization(model):
    if isinstance(model, SystemMatrixParts):
        return model.E, model.A, model.B, model.C, model.D, model.Dinf
    if isinstance(model, ProperSubsystem):
        return model.Ep, model.Ap, model.Bp, model.Cp, model.Dp, model.Dinf
    A = model.J - model.R
    return model.E, A, model.G - model.P, (model.G + model.P).T, model.S + model.N, None


def transfer_eval(model, s):
    """``(G+P)^T (sE - (J-R))^{-1} (G-P) + S + N`` at a complex point.

    Works for staircase systems (sparse or dense), reduced models, proper
    subsystems and split system matrices.

    Raises
    ------
    ShiftSingularityError
        If ``sE - A`` is singular.
    """
    E, A, B, C, D, Dinf = _realization(model)
    s = complex(s)
    if isinstance(model, ProperSubsystem) and not model.materialized:
        model = model.dense()
        E, A = model.Ep, model.Ap
    n = E.shape[0]
    H = np.asarray(D, dtype=complex).copy()
    if n:
        M = s * E - A
        try:
            if la.issparse(M):
                X = la.LU(M).solve(B.astype(complex))
            else:
                X = np.linalg.solve(la.dense(M), B)
        except (RuntimeError, np.linalg.LinAlgError) as exc:
            raise ShiftSingularityError(s) from exc
        if not np.all(np.isfinite(X)):
            raise ShiftSingularityError(s)
        H += C @ X
    if Dinf is not None:
        H += s * Dinf
    return H


def transfer_many(model, points, workers=None):
    """Transfer function at several points, shape ``(len(points), m, m)``."""
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    if not la.issparse(getattr(model, 'E', np.zeros(0))) and hasattr(model, 'transfer_many') \
            and getattr(model, 'n', 0) <= 400:
        try:
            return model.transfer_many(points)
        except np.linalg.LinAlgError:
            pass
    workers = workers or la.num_workers()
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(workers) as ex:
            return np.array(list(ex.map(lambda s: transfer_eval(model, s), points)))
    return np.array([transfer_eval(model, s) for s in points])


@dataclass
class FrequencyResponse:
    """Sampled frequency response ``H(i omega)``.

    Attributes
    ----------
    frequencies
        Strictly increasing positive frequencies (rad/s).
    values
        Complex array ``(len(frequencies), m, m)``.
    sigma
        Largest singular value per frequency (``nan`` where evaluation failed).
    failed
        Indices of frequencies where the pencil was singular.
    """

    frequencies: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    failed: list = field(default_factory=list)

    def to_csv(self, path):
        """Write ``omega,Re_Hij,Im_Hij,...,sigma_max`` rows."""
        m = self.values.shape[1]
        header = ['omega']
        for i in range(m):
            for j in range(m):
                header += [f'Re_H{i + 1}{j + 1}', f'Im_H{i + 1}{j + 1}']
        header.append('sigma_max')
        rows = []
        for w, H, sg in zip(self.frequencies, self.values, self.sigma):
            row = [w]
            for x in H.ravel():
                row += [x.real, x.imag]
            row.append(sg)
            rows.append(row)
        np.savetxt(path, np.array(rows).reshape(len(rows), len(header)), delimiter=',',
                   header=','.join(header), comments='', fmt='%.17g')


def sigma_response(model, grid=None, workers=None):
    """Largest singular value of ``H(i omega)`` on a frequency grid.

    Points where the pencil is singular are skipped and listed in
    ``failed``.
    """
    grid = frequency_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError('frequency grid must be positive and strictly increasing')
    m = model.m
    try:
        values = transfer_many(model, 1j * grid, workers)
        failed = []
    except ShiftSingularityError:
        values = np.full((len(grid), m, m), np.nan, dtype=complex)
        failed = []
        for k, w in enumerate(grid):
            try:
                values[k] = transfer_eval(model, 1j * w)
            except ShiftSingularityError:
                failed.append(k)
    sigma = np.full(len(grid), np.nan)
    ok = np.all(np.isfinite(values), axis=(1, 2))
    if np.any(ok):
        sigma[ok] = np.linalg.norm(values[ok], ord=2, axis=(1, 2))
    return FrequencyResponse(grid, values, sigma, failed)


# ---------------------------------------------------------------------------
# interpolation check
# ---------------------------------------------------------------------------

@dataclass
class InterpolationReport:
    shifts: np.ndarray
    residuals: np.ndarray
    tol: float

    @property
    def max_residual(self):
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0

    @property
    def passed(self):
        return bool(self.max_residual <= self.tol)

    def __bool__(self):
        return self.passed


def verify_interpolation(fom, rom, data, tol=1e-8, fom_values=None):
    """Relative tangential residuals ``|H(s_i) b_i - Hr(s_i) b_i| / |H(s_i) b_i|``.

    `fom_values` may hold precomputed ``H(s_i)`` of the full model.
    """
    res = []
    for k, (s, b) in enumerate(zip(data.shifts, data.directions.T)):
        H = fom_values[k] if fom_values is not None else transfer_eval(fom, s)
        y = H @ b
        yr = transfer_eval(rom, s) @ b
        res.append(np.linalg.norm(y - yr) / max(np.linalg.norm(y), 1e-300))
    return InterpolationReport(np.asarray(data.shifts), np.array(res), tol)


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------

class ModelData:
    """Proper part of a model with cached Gramian data for error norms.

    Parameters
    ----------
    model
        Staircase system, reduced model or proper subsystem.
    """

    def __init__(self, model):
        self.model = model
        if isinstance(model, ModelData):
            raise TypeError('already prepared')
        proper = getattr(model, 'proper', None)
        if isinstance(model, SystemMatrixParts):
            proper = model
        if isinstance(proper, SystemMatrixParts):
            self.E, self.A, self.B, self.C = proper.E, proper.A, proper.B, proper.C
            self.Dp, self.Dinf = proper.D, proper.Dinf
            self.implicit = False
        else:
            p = model if isinstance(model, ProperSubsystem) else extract_proper(model)
            self.Dp, self.Dinf = p.Dp, p.Dinf
            self.implicit = not p.materialized or p.n2 > H2_DENSE_LIMIT
            if self.implicit:
                self.proper = p
                self.E = self.A = self.B = self.C = None
            else:
                p = p.dense()
                self.E, self.A, self.B, self.C = p.Ep, p.Ap, p.Bp, p.Cp
        self.m = self.Dp.shape[0]
        self._std = None
        self._gram = None

    @property
    def order(self):
        return self.proper.n2 if self.implicit else self.E.shape[0]

    def standard(self):
        """State-space form ``(A~, B~, C~)`` via the Cholesky factor of ``E``."""
        if self._std is None:
            E = la.dense(self.E)
            if E.shape[0] == 0:
                self._std = (E, self.B, self.C)
            else:
                L = spla.cholesky(la.sym(E), lower=True)
                At = spla.solve_triangular(L, spla.solve_triangular(L, la.dense(self.A), lower=True).T,
                                           lower=True).T
                Bt = spla.solve_triangular(L, self.B, lower=True)
                Ct = spla.solve_triangular(L, self.C.T, lower=True).T
                self._std = (At, Bt, Ct)
        return self._std

    def gramian(self):
        if self._gram is None:
            At, Bt, _ = self.standard()
            self._gram = spla.solve_continuous_lyapunov(At, -Bt @ Bt.T) if At.shape[0] else At
        return self._gram

    def strictly_proper(self, s):
        H = transfer_eval(self.model, s)
        return H - self.Dp - s * self.Dinf


def prepare(model):
    return model if isinstance(model, ModelData) else ModelData(model)


def _rel(a, b):
    return la.maxabs(a - b) / max(1.0, la.maxabs(a), la.maxabs(b))


def polynomial_mismatch(fom, rom):
    """Relative deviations of the constant and improper parts."""
    f, r = prepare(fom), prepare(rom)
    return _rel(f.Dp, r.Dp), _rel(f.Dinf, r.Dinf)


def h2_error(fom, rom, method='auto', quad_points=20000, omega=(OMEGA_MIN, OMEGA_MAX)):
    """H2 norm of the error ``H - Hr``.

    Returns an :class:`Unbounded` marker when the constant or improper
    parts differ (relative ``> 1e-12``). Otherwise the error is strictly
    proper and its H2 norm is computed from the Gramian of the error system
    (``method='lyapunov'``) or by trapezoidal quadrature of
    ``(1/pi) int ||H_sp - H_sp,r||_F^2 d omega`` on a log grid
    (``method='quadrature'``). ``'auto'`` picks the Gramian up to a combined
    order of 2000.
    """
    f, r = prepare(fom), prepare(rom)
    ddp, ddinf = polynomial_mismatch(f, r)
    if ddinf > MATCH_TOL:
        return Unbounded('improper part mismatch')
    if ddp > MATCH_TOL:
        return Unbounded('feedthrough mismatch')
    if method == 'auto':
        method = 'lyapunov' if not f.implicit and f.order + r.order <= H2_DENSE_LIMIT else 'quadrature'
    if method == 'quadrature':
        return h2_quadrature(f, r, quad_points, omega)
    if f.implicit:
        raise ValueError('Gramian-based H2 error needs a materialized proper part')
    A1, B1, C1 = f.standard()
    A2, B2, C2 = r.standard()
    P11 = f.gramian()
    P22 = r.gramian()
    t = np.trace(C1 @ P11 @ C1.T) + np.trace(C2 @ P22 @ C2.T)
    if A1.shape[0] and A2.shape[0]:
        P12 = spla.solve_sylvester(A1, A2.T, -B1 @ B2.T)
        t -= 2 * np.trace(C1 @ P12 @ C2.T)
    if t < -1e-10 * max(1.0, np.trace(C1 @ P11 @ C1.T)):
        raise ConsistencyError(f'negative squared H2 error {t:.3e}; error system unstable?')
    return float(np.sqrt(max(t, 0.0)))


def h2_quadrature(fom, rom, points=20000, omega=(OMEGA_MIN, OMEGA_MAX)):
    """Trapezoidal quadrature of the squared H2 error on a log grid."""
    f, r = prepare(fom), prepare(rom)
    w = frequency_grid(omega[0], omega[1], points)
    vals = np.empty(len(w))
    for k, x in enumerate(w):
        d = f.strictly_proper(1j * x) - r.strictly_proper(1j * x)
        vals[k] = np.sum(np.abs(d) ** 2)
    return float(np.sqrt(trapezoid(vals, w) / np.pi))


def hinf_error(fom, rom, grid=None, refine=3, refine_points=25, fom_cache=None):
    """Sampled estimate (lower bound) of the H-infinity error.

    The maximum of ``sigma_max(H(i w) - Hr(i w))`` over `grid` is refined
    `refine` times on a finer grid between the neighbours of the current
    maximizer. The value at infinity (constant part difference) is included.

    Parameters
    ----------
    fom_cache
        Optional dict mapping frequencies to ``H(i w)`` of `fom`; filled on
        the fly.

    Returns
    -------
    value : float or Unbounded
    omega : float
        Frequency of the maximum (``inf`` for the constant offset).
    meta : dict
        Grid metadata.
    """
    f, r = prepare(fom), prepare(rom)
    _, ddinf = polynomial_mismatch(f, r)
    if ddinf > MATCH_TOL:
        return Unbounded('improper part mismatch'), float('inf'), {}
    grid = frequency_grid() if grid is None else np.asarray(grid, dtype=float)
    cache = {} if fom_cache is None else fom_cache

    def err(ws):
        out = np.empty(len(ws))
        missing = [w for w in ws if w not in cache]
        if missing:
            for w, H in zip(missing, transfer_many(f.model, 1j * np.array(missing))):
                cache[w] = H
        Hr = transfer_many(r.model, 1j * np.asarray(ws))
        for k, w in enumerate(ws):
            out[k] = np.linalg.norm(cache[w] - Hr[k], 2)
        return out

    ws = np.array(grid)
    vals = err(ws)
    k = int(np.argmax(vals))
    best, wbest = float(vals[k]), float(ws[k])
    lo_hi = ws
    for _ in range(refine):
        k = int(np.argmin(np.abs(lo_hi - wbest)))
        lo = lo_hi[max(k - 1, 0)]
        hi = lo_hi[min(k + 1, len(lo_hi) - 1)]
        if hi <= lo:
            break
        lo_hi = np.geomspace(lo, hi, refine_points)
        v = err(lo_hi)
        j = int(np.argmax(v))
        if v[j] > best:
            best, wbest = float(v[j]), float(lo_hi[j])
    const = float(np.linalg.norm(f.Dp - r.Dp, 2)) if f.m else 0.0
    if const > best:
        best, wbest = const, float('inf')
    meta = dict(points=len(grid), omega_min=float(grid[0]), omega_max=float(grid[-1]),
                refine=refine, refine_points=refine_points)
    return best, wbest, meta


@dataclass
class ErrorReport:
    """H2 and H-infinity errors with bookkeeping of polynomial mismatches."""

    h2: object = None
    hinf: object = None
    hinf_omega: float = None
    grid: dict = field(default_factory=dict)
    delta_dp: float = 0.0
    delta_dinf: float = 0.0

    @property
    def h2_bounded(self):
        return self.h2 is not None and not is_unbounded(self.h2)

    def to_dict(self):
        def enc(x):
            if x is None:
                return None
            if is_unbounded(x):
                return str(x)
            return float(x)
        w = self.hinf_omega
        return dict(h2=enc(self.h2), hinf=enc(self.hinf),
                    hinf_omega=None if w is None else (str(w) if not np.isfinite(w) else float(w)),
                    grid=self.grid, delta_dp=float(self.delta_dp), delta_dinf=float(self.delta_dinf),
                    hinf_kind='sampled lower-bound estimate')


def error_report(fom, rom, norm='both', grid=None, refine=3):
    """Compute the requested error norms (``'h2'``, ``'hinf'`` or ``'both'``)."""
    f, r = prepare(fom), prepare(rom)
    ddp, ddinf = polynomial_mismatch(f, r)
    rep = ErrorReport(delta_dp=ddp, delta_dinf=ddinf)
    if norm in ('h2', 'both'):
        rep.h2 = h2_error(f, r)
    if norm in ('hinf', 'both'):
        rep.hinf, rep.hinf_omega, rep.grid = hinf_error(f, r, grid=grid, refine=refine)
    return rep
