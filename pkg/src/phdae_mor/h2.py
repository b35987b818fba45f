"""Iterative choice of interpolation data.

:func:`irka_ph` is a fixed-point iteration that replaces the shifts by the
mirrored reduced poles and the directions by the reduced residue
directions. :func:`trksm_ph` adds interpolation points greedily where the
residual of the projected resolvent is largest.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
from scipy.optimize import linear_sum_assignment
import scipy.sparse.linalg as spsla

from phdae_mor import _linalg as la
from phdae_mor.errors import PHDAEError, ShiftSingularityError, StageError, UnsupportedCaseError
from phdae_mor.interpolation import (InterpolationData, InterpolationOptions, finalize,
                                     project)
from phdae_mor.rosenbrock import extract_proper

logger = logging.getLogger(__name__)


@dataclass
class IrkaOptions:
    """Options of :func:`irka_ph`.

    `shift_tol` bounds the relative change of the shift set (and of the
    normalized directions) between two iterations. A shift that makes the
    shifted full-order pencil singular is moved by `eig_tol` to the right.
    Initial shifts lie in ``[omega_min, omega_max]``; unset bounds are
    taken from :func:`spectral_window`.

    `damping` is the step ``alpha`` of the update
    ``sigma <- (1 - alpha) sigma + alpha sigma_mirrored`` (fixed points are
    unchanged). The default is the plain update. With ``'auto'`` the plain
    update is used until the change has not improved for `stall_window`
    iterations; then ``alpha`` is halved (down to 1/16).
    """

    r: int = 10
    max_iter: int = 100
    shift_tol: float = 1e-6
    eig_tol: float = 1e-10
    omega_min: float = None
    omega_max: float = None
    kyp_minus: bool = False
    restart: bool = False
    damping: object = 1.0
    stall_window: int = 10
    interpolation: InterpolationOptions = field(default_factory=InterpolationOptions)

    def __post_init__(self):
        if self.damping != 'auto' and not 0 < float(self.damping) <= 1:
            raise ValueError("damping must be 'auto' or in (0, 1]")
        if self.max_iter < 1:
            raise ValueError('max_iter must be >= 1')
        if self.shift_tol <= 0 or self.eig_tol <= 0:
            raise ValueError('tolerances must be positive')


@dataclass
class IterationHistory:
    """Per-iteration record of an adaptive method."""

    shifts: list = field(default_factory=list)
    directions: list = field(default_factory=list)
    change: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    converged: bool = False
    messages: list = field(default_factory=list)

    def __len__(self):
        return len(self.shifts)

    def add(self, data, change=None, residual=None):
        self.shifts.append(np.array(data.shifts))
        self.directions.append(np.array(data.directions))
        self.change.append(change)
        self.residual.append(residual)

    def to_dict(self):
        enc = lambda a: [[float(x.real), float(x.imag)] for x in np.ravel(a)]  # noqa: E731
        return dict(converged=self.converged, messages=list(self.messages),
                    iterations=[dict(shifts=enc(s), change=c, residual=r)
                                for s, c, r in zip(self.shifts, self.change, self.residual)])


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def default_shifts(r, m, omega_min=1e-3, omega_max=1e3):
    """Log-spaced conjugate pairs on the imaginary axis (one real shift if `r` is odd).

    Directions cycle through the canonical basis of ``R^m``.
    """
    npair = r // 2
    w = np.logspace(np.log10(omega_min), np.log10(omega_max), max(npair, 1))[:npair]
    shifts = list(1j * w)
    if r % 2:
        shifts.append(np.sqrt(omega_min * omega_max))
    D = np.zeros((m, len(shifts)))
    for k in range(len(shifts)):
        D[k % m, k] = 1.0
    return InterpolationData.with_conjugates(shifts, D)


def spectral_window(sys, fallback=(1e-3, 1e3)):
    """Estimate ``(min |lambda|, max |lambda|)`` over the finite poles of `sys`.

    Uses a few Arnoldi steps on ``Ep^{-1} Ap`` and on its inverse; the
    inverse is applied by solving with the full (sparse) ``A``, whose second
    block of the solution of ``A x = [0; y; 0; 0]`` is ``Ap^{-1} y``.
    Returns `fallback` if the estimate fails.
    """
    from phdae_mor.staircase import assemble_operator_blocks
    try:
        p = extract_proper(sys, materialize=False)
        n2 = p.n2
        if n2 == 0:
            return fallback
        if n2 <= 400:
            lam = spla.eigvals(p.Ap.toarray() if not p.materialized else p.Ap, la.dense(p.Ep))
            lam = np.abs(lam[np.isfinite(lam)])
            lam = lam[lam > 0]
            return float(lam.min()), float(lam.max())
        blocks = assemble_operator_blocks(sys)
        luE = la.LU(p.Ep)
        luA = la.LU(blocks.A)
        s2 = blocks.slices[1]
        n = blocks.A.shape[0]

        def inv(y):
            f = np.zeros(n, dtype=np.result_type(y, float))
            f[s2] = la.dense(p.Ep @ y)
            return luA.solve(f)[s2]

        fwd = spsla.LinearOperator((n2, n2), matvec=lambda x: luE.solve(p.Ap @ x), dtype=float)
        bwd = spsla.LinearOperator((n2, n2), matvec=inv, dtype=float)
        hi = np.abs(spsla.eigs(fwd, k=1, which='LM', tol=1e-2, return_eigenvectors=False))[0]
        lo = 1.0 / np.abs(spsla.eigs(bwd, k=1, which='LM', tol=1e-2,
                                     return_eigenvectors=False))[0]
        if not (np.isfinite(lo) and np.isfinite(hi) and 0 < lo <= hi):
            return fallback
        return float(lo), float(hi)
    except (PHDAEError, RuntimeError, ValueError, np.linalg.LinAlgError,
            spsla.ArpackError) as exc:
        logger.warning('spectral window estimate failed (%s); using %s', exc, fallback)
        return fallback


# ---------------------------------------------------------------------------
# reduced spectral data
# ---------------------------------------------------------------------------

def _normalize(b):
    b = b / np.linalg.norm(b)
    k = int(np.argmax(np.abs(b)))
    return b * (abs(b[k]) / b[k])


def reduced_left_eigen(parts, eig_tol=1e-10):
    """Eigenvalues, left eigenvectors and residue directions of the reduced pencil.

    For ``lambda Er - (Jr - Rr)`` returns ``(lam, T, Rdir)`` with
    ``T[:, i]^T (lam_i Er - Ar) = 0`` and ``Rdir[:, i] = (Gr - Pr)^T T[:, i]``.
    The output is closed under conjugation; a warning is logged when two
    eigenvalues are closer than `eig_tol` (relative).
    """
    Er, Ar, Br = parts.E, parts.A, parts.B
    lam, vl = spla.eig(Ar, Er, left=True, right=False)
    if not np.all(np.isfinite(lam)):
        raise UnsupportedCaseError('reduced pencil has infinite eigenvalues')
    T = np.conj(vl)
    scale = max(1.0, float(np.max(np.abs(lam))))
    if len(lam) > 1:
        gap = np.abs(lam[:, None] - lam[None, :]) + np.eye(len(lam)) * scale
        if np.min(gap) < eig_tol * scale:
            logger.warning('reduced pencil has (nearly) multiple eigenvalues; '
                           'eigenvectors may be ill-conditioned')
    # exact conjugate closure for the realified data
    tol = 1e-10 * scale
    for i in range(len(lam)):
        if abs(lam[i].imag) <= tol:
            lam[i] = lam[i].real
            t = T[:, i]
            k = int(np.argmax(np.abs(t)))
            T[:, i] = (t * abs(t[k]) / t[k]).real
    for i in range(len(lam)):
        if lam[i].imag > tol:
            j = int(np.argmin(np.abs(lam - np.conj(lam[i]))))
            lam[j] = np.conj(lam[i])
            T[:, j] = np.conj(T[:, i])
    return lam, T, Br.T @ T


def mirrored_data(lam, Rdir, eig_tol=1e-10):
    """Interpolation data ``(-lam_i, r_i)`` with normalized directions."""
    scale = max(1.0, float(np.max(np.abs(lam))))
    shifts, dirs = [], []
    for i in range(len(lam)):
        if lam[i].imag < -1e-10 * scale:
            continue
        b = _normalize(Rdir[:, i])
        if abs(lam[i].imag) <= 1e-10 * scale:
            b = b.real
        shifts.append(-lam[i])
        dirs.append(b)
    return InterpolationData.with_conjugates(shifts, np.array(dirs).T)


def _reps(data):
    idx = data.representatives()
    real = [i for i in idx if data.is_real(i)]
    return real, [i for i in idx if i not in real]


def damped_update(old, new, alpha):
    """Convex combination of matched shifts and phase-aligned directions.

    Falls back to `new` when the two sets differ in their numbers of real
    shifts and conjugate pairs.
    """
    if alpha >= 1:
        return new
    ro, co = _reps(old)
    rn, cn = _reps(new)
    if len(ro) != len(rn) or len(co) != len(cn):
        return new
    shifts, dirs = [], []
    for io, in_ in ((ro, rn), (co, cn)):
        if not io:
            continue
        cost = np.abs(old.shifts[io][:, None] - new.shifts[in_][None, :])
        rows, cols = linear_sum_assignment(cost)
        for a, b in zip(rows, cols):
            i, j = io[a], in_[b]
            bo, bn = old.directions[:, i], new.directions[:, j]
            c = np.vdot(bo, bn)
            if abs(c) > 0:
                bn = bn * np.conj(c) / abs(c)
            shifts.append((1 - alpha) * old.shifts[i] + alpha * new.shifts[j])
            d = _normalize((1 - alpha) * bo + alpha * bn)
            dirs.append(d.real if old.is_real(i) else d)
    return InterpolationData.with_conjugates(shifts, np.array(dirs).T)


def shift_distance(a, b):
    """Relative Hausdorff-like distance between two shift multisets."""
    if len(a) != len(b):
        return np.inf
    a = np.asarray(a)
    b = np.asarray(b)
    d = np.abs(a[:, None] - b[None, :])
    da = np.max(np.min(d, axis=1) / np.maximum(np.abs(a), 1e-300))
    db = np.max(np.min(d, axis=0) / np.maximum(np.abs(b), 1e-300))
    return float(max(da, db))


def direction_distance(old, new):
    """Maximum direction change between matched shifts (``1 - |cos angle|``)."""
    d = np.abs(old.shifts[:, None] - new.shifts[None, :])
    out = 0.0
    for i, j in enumerate(np.argmin(d, axis=1)):
        a, b = old.directions[:, i], new.directions[:, j]
        c = abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
        out = max(out, 1.0 - min(c, 1.0))
    return out


def _project_robust(sys, data, iopts, eig_tol, history, max_tries=5):
    for _ in range(max_tries):
        try:
            return project(sys, data, iopts), data
        except StageError as exc:
            if not isinstance(exc.cause, ShiftSingularityError):
                raise
            s = exc.cause.shift
            msg = f'shift {s} collides with the full-order spectrum; moved by {eig_tol:g}'
            logger.warning(msg)
            history.messages.append(msg)
            shifts = np.array(data.shifts)
            scale = max(1.0, abs(s))
            hit = np.abs(shifts - s) <= 1e-12 * scale
            hit |= np.abs(shifts - np.conj(s)) <= 1e-12 * scale
            shifts[hit] += eig_tol * scale
            data = InterpolationData(shifts, data.directions)
    raise StageError('basis', ShiftSingularityError(s))


def _kyp_X(sys, opts):
    if not opts.kyp_minus:
        return opts.interpolation.X
    from phdae_mor.kyp import minimal_kyp_solution
    return minimal_kyp_solution(extract_proper(sys)).X


def irka_ph(sys, init=None, opts=None):
    """Structure-preserving IRKA.

    Parameters
    ----------
    sys
        Full-order staircase system.
    init
        Initial :class:`InterpolationData` (default: :func:`default_shifts`
        with ``opts.r`` points).
    opts
        :class:`IrkaOptions`. ``kyp_minus=True`` projects with the minimal
        KYP solution in the left reduction matrix.

    Returns
    -------
    rom : ReducedModel
        Assembled from the last iterate. ``rom.provenance['converged']``
        flags convergence.
    history : IterationHistory
    """
    opts = opts or IrkaOptions()
    if init is None:
        lo, hi = opts.omega_min, opts.omega_max
        if lo is None or hi is None:
            est = spectral_window(sys)
            lo = est[0] if lo is None else lo
            hi = est[1] if hi is None else hi
        init = default_shifts(opts.r, sys.m, lo, hi)
    data = init
    iopts = InterpolationOptions(**{**vars(opts.interpolation), 'X': _kyp_X(sys, opts)})
    history = IterationHistory()
    parts = used = None
    alpha = 1.0 if opts.damping == 'auto' else float(opts.damping)
    best, stall = np.inf, 0
    for it in range(opts.max_iter):
        (parts, basis), data = _project_robust(sys, data, iopts, opts.eig_tol, history)
        used = data
        lam, _, Rdir = reduced_left_eigen(parts, opts.eig_tol)
        if np.max(lam.real) > 1e-10 * max(1.0, np.max(np.abs(lam))):
            logger.warning('reduced pencil has eigenvalues with positive real part')
        new = mirrored_data(lam, Rdir, opts.eig_tol)
        ds = shift_distance(data.shifts, new.shifts)
        dd = direction_distance(data, new) if np.isfinite(ds) else np.inf
        history.add(data, change=float(max(ds, dd)))
        if ds < opts.shift_tol and dd < opts.shift_tol:
            history.converged = True
            break
        change = max(ds, dd)
        if change < best:
            best, stall = change, 0
        else:
            stall += 1
        if opts.damping == 'auto' and stall >= opts.stall_window and alpha > 1 / 16:
            alpha /= 2
            best, stall = change, 0
            history.messages.append(f'iteration {it + 1}: no progress, damping set to {alpha:g}')
        data = damped_update(data, new, alpha)
    data = used
    rom = finalize(parts, iopts, dict(method='irka-ph', shifts=data.shifts.copy(),
                                      directions=data.directions.copy(),
                                      converged=history.converged, iterations=len(history),
                                      kyp_minus=opts.kyp_minus, history=history),
                   name=f'{sys.name or "fom"}-irka')
    rom.provenance['data'] = data
    if not history.converged:
        logger.warning('IRKA-PH did not converge in %d iterations', opts.max_iter)
    return rom, history


# ---------------------------------------------------------------------------
# greedy residual-based selection
# ---------------------------------------------------------------------------

@dataclass
class RegionSpec:
    """Candidate set for the greedy selection.

    `points` are taken in the closed upper half-plane; conjugates are
    implied. With ``policy='ritz'`` the mirrored stable Ritz values of the
    current reduced pencil are added in every iteration.
    """

    omega_min: float = 1e-3
    omega_max: float = 1e3
    points: np.ndarray = None
    n_points: int = 200
    policy: str = 'ritz'

    def __post_init__(self):
        if self.points is None:
            self.points = 1j * np.logspace(np.log10(self.omega_min), np.log10(self.omega_max),
                                           self.n_points)
        self.points = np.asarray(self.points, dtype=complex)
        if len(self.points) == 0:
            raise ValueError('candidate set is empty')
        self.points = np.where(self.points.imag < 0, np.conj(self.points), self.points)

    def candidates(self, parts=None):
        pts = self.points
        if self.policy == 'ritz' and parts is not None and parts.k:
            lam = spla.eigvals(parts.A, parts.E)
            lam = lam[np.isfinite(lam) & (lam.real < 0) & (lam.imag >= 0)]
            pts = np.concatenate([pts, -lam])
        return pts


@dataclass
class TrksmOptions:
    r_max: int = 20
    tol: float = 1e-4
    probe_points: int = 100
    region: RegionSpec = field(default_factory=RegionSpec)
    interpolation: InterpolationOptions = field(default_factory=InterpolationOptions)


class _ResidualOperator:
    """Evaluates the residual matrix of the projected resolvent for one basis."""

    def __init__(self, proper, Vbar2, parts):
        self.AV = proper.Ap @ Vbar2
        self.EV = la.dense(proper.Ep @ Vbar2)
        self.Bp = proper.Bp
        self.parts = parts

    def __call__(self, mu):
        Ar, Er, Br = self.parts.A, self.parts.E, self.parts.B
        Y = np.linalg.solve(Ar - mu * Er, Br)
        return self.AV @ Y - mu * (self.EV @ Y) - self.Bp


def residual_zeta(proper, Vbar2, parts, mu):
    """``(Ap - mu Ep) Vbar2 (Ar - mu Er)^{-1} Br - Bp`` for the reduced proper pencil `parts`."""
    return _ResidualOperator(proper, Vbar2, parts)(complex(mu))


def _proper_sigma(parts, w):
    H = parts.with_(Dinf=np.zeros_like(parts.Dinf)).transfer_many(1j * w)
    return np.linalg.norm(H, ord=2, axis=(1, 2))


def trksm_ph(sys, init=None, r_max=None, region=None, opts=None):
    """Greedy tangential interpolation driven by the residual matrix.

    In each step the candidate ``mu`` with the largest ``|zeta(mu)|_2`` is
    added together with the dominant right singular vector of
    ``zeta(mu)`` as direction (and the conjugate pair). Stops when the
    sigma response of the reduced proper part changes by less than
    ``opts.tol`` (relative, on a probe grid) or when ``r_max`` would be
    exceeded.

    Returns
    -------
    rom : ReducedModel
    history : IterationHistory
        ``residual`` holds the maximum residual norm over the candidates.
    """
    opts = opts or TrksmOptions()
    r_max = r_max or opts.r_max
    region = region or opts.region
    proper = extract_proper(sys, materialize=sys.n <= la.DENSE_LIMIT)
    if init is None:
        w0 = np.sqrt(region.omega_min * region.omega_max)
        init = InterpolationData.with_conjugates([1j * w0], np.eye(sys.m)[:, :1])
    if init.r > r_max:
        raise ValueError('initial data already exceeds r_max')
    data = init
    history = IterationHistory()
    probe = np.logspace(np.log10(region.omega_min), np.log10(region.omega_max), opts.probe_points)
    iopts = opts.interpolation
    prev_sigma = None
    parts = None
    while True:
        (parts, basis), data = _project_robust(sys, data, iopts, 1e-10, history)
        sig = _proper_sigma(parts, probe)
        change = None
        if prev_sigma is not None:
            change = float(np.max(np.abs(sig - prev_sigma)) / max(np.max(prev_sigma), 1e-300))
        prev_sigma = sig
        zeta = _ResidualOperator(proper, basis.Vbar2, parts)
        cands = region.candidates(parts)
        scale = max(1.0, float(np.max(np.abs(data.shifts))))
        cands = np.array([c for c in cands
                          if np.min(np.abs(data.shifts - c)) > 1e-8 * scale])
        norms = np.full(len(cands), -1.0)
        for k, mu in enumerate(cands):
            try:
                norms[k] = np.linalg.norm(zeta(mu), 2)
            except np.linalg.LinAlgError:
                pass
        best = float(np.max(norms)) if len(norms) else 0.0
        history.add(data, change=change, residual=best)
        if change is not None and change < opts.tol:
            history.converged = True
            break
        if len(norms) == 0 or best < 0:
            history.messages.append('candidate set exhausted')
            break
        mu = cands[int(np.argmax(norms))]
        real = abs(mu.imag) <= 1e-12 * max(1.0, abs(mu))
        need = 1 if real else 2
        if data.r + need > r_max:
            history.messages.append('maximum order reached')
            break
        _, _, Wh = np.linalg.svd(zeta(mu))
        b = _normalize(np.conj(Wh[0]))
        if real:
            mu, b = complex(mu.real), b.real
        shifts = list(data.shifts) + ([mu] if real else [mu, np.conj(mu)])
        dirs = np.column_stack([data.directions] + ([b] if real else [b, np.conj(b)]))
        data = InterpolationData(shifts, dirs)
    rom = finalize(parts, iopts, dict(method='trksm-ph', shifts=data.shifts.copy(),
                                      directions=data.directions.copy(),
                                      converged=history.converged, history=history),
                   name=f'{sys.name or "fom"}-trksm')
    rom.provenance['data'] = data
    return rom, history
