"""Interpolation-preserving feedthrough perturbations and H-infinity tuning.

Given a reduced system matrix obtained by tangential interpolation, the
structure and dissipation parts can be modified by

    Gamma + K DN K^T,   W + K DS K^T,   K = [Vbar2^T F; -I]

with skew ``DN`` and positive semidefinite ``DS``. If ``F^T Vbar2`` equals
the tangential directions in reduced coordinates, the perturbed model is
still pH and interpolates the same data. :func:`iha_ph` optimizes the
perturbation parameters for a small sampled H-infinity error.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from phdae_mor import _linalg as la
from phdae_mor.analysis import frequency_grid, hinf_error, prepare
from phdae_mor.errors import ConsistencyError
from phdae_mor.h2 import IrkaOptions, irka_ph
from phdae_mor.interpolation import InterpolationOptions, finalize, project

logger = logging.getLogger(__name__)


def _check_len(theta, n, what):
    theta = np.asarray(theta, dtype=float).ravel()
    if len(theta) != n:
        raise ValueError(f'{what} needs {n} entries, got {len(theta)}')
    return theta


def vtsu(theta_n, m):
    """Fill the strict upper triangle of an ``m x m`` matrix row by row."""
    theta_n = _check_len(theta_n, m * (m - 1) // 2, 'theta_N')
    U = np.zeros((m, m))
    U[np.triu_indices(m, 1)] = theta_n
    return U


def vtu(theta_s, m):
    """Fill the upper triangle (with diagonal) of an ``m x m`` matrix row by row."""
    theta_s = _check_len(theta_s, m * (m + 1) // 2, 'theta_S')
    U = np.zeros((m, m))
    U[np.triu_indices(m)] = theta_s
    return U


def delta_n(theta_n, m):
    U = vtsu(theta_n, m)
    return U.T - U


def delta_s(theta_s, m):
    U = vtu(theta_s, m)
    return U.T @ U


@dataclass
class PerturbationParams:
    """Parameters ``theta = [theta_N, theta_S]`` of length ``m**2``."""

    theta_n: np.ndarray
    theta_s: np.ndarray

    @classmethod
    def from_vector(cls, theta, m):
        theta = _check_len(theta, m * m, 'theta')
        k = m * (m - 1) // 2
        return cls(theta[:k].copy(), theta[k:].copy())

    @classmethod
    def zeros(cls, m):
        return cls.from_vector(np.zeros(m * m), m)

    @property
    def m(self):
        return int(round((np.sqrt(8 * len(self.theta_s) + 1) - 1) / 2))

    def vector(self):
        return np.concatenate([self.theta_n, self.theta_s])

    def deltas(self):
        m = self.m
        return delta_n(self.theta_n, m), delta_s(self.theta_s, m)


@dataclass
class InterpolationCertificate:
    """Matrix ``F`` with ``F^T Vbar2 = B_tan Tv`` (realified directions)."""

    F: np.ndarray
    Vbar2: np.ndarray
    Tv: np.ndarray
    directions: np.ndarray
    shifts: np.ndarray = None

    @property
    def reduced(self):
        """``Vbar2^T F`` (``r' x m``)."""
        return self.Vbar2.T @ self.F

    @property
    def residual(self):
        return la.maxabs(self.F.T @ self.Vbar2 - self.directions @ self.Tv)


def build_certificate(basis, data=None, tol=1e-10):
    """Minimum-norm ``F = Vbar2 (B_tan Tv)^T`` from an orthonormalized basis.

    `basis` is a :class:`~phdae_mor.interpolation.TangentialBasis` after
    :func:`~phdae_mor.interpolation.orthonormalize_v2`; its realified
    directions ``B_tan`` match the realified columns of ``V``.

    Raises
    ------
    ConsistencyError
        If the right-hand side ``B_tan Tv`` is not real.
    """
    rhs = basis.directions @ basis.Tv
    if np.iscomplexobj(rhs):
        if la.maxabs(rhs.imag) > tol * max(1.0, la.maxabs(rhs)):
            raise ConsistencyError('realified tangential directions have an imaginary part')
        rhs = rhs.real
    F = basis.Vbar2 @ rhs.T
    shifts = None if data is None else np.array(data.shifts)
    return InterpolationCertificate(F, basis.Vbar2, basis.Tv, basis.directions, shifts)


def perturb_rom(parts, cert, theta):
    """Perturbed reduced system matrix for parameters `theta`.

    Parameters
    ----------
    parts
        :class:`~phdae_mor.pencil.SystemMatrixParts` of the interpolating ROM.
    cert
        :class:`InterpolationCertificate` of the same basis.
    theta
        :class:`PerturbationParams` or vector of length ``m**2``.
    """
    m = parts.m
    if not isinstance(theta, PerturbationParams):
        theta = PerturbationParams.from_vector(theta, m)
    DN, DS = theta.deltas()
    M = cert.reduced
    if M.shape != (parts.k, m):
        raise ValueError(f'certificate of shape {M.shape} does not match the reduced model')
    K = np.vstack([M, -np.eye(m)])
    return parts.with_(Gamma=parts.Gamma + K @ DN @ K.T, W=parts.W + K @ DS @ K.T)


@dataclass
class IhaOptions:
    """Options of :func:`iha_ph`.

    The objective is the sampled H-infinity error on `points` log-spaced
    frequencies in ``[omega_min, omega_max]`` with `refine` local
    refinements; it is minimized with Nelder-Mead.
    """

    omega_min: float = 1e-4
    omega_max: float = 1e6
    points: int = 400
    refine: int = 3
    max_evals: int = 400
    xatol: float = 1e-6
    fatol: float = 1e-10
    irka: IrkaOptions = field(default_factory=IrkaOptions)
    interpolation: InterpolationOptions = field(default_factory=InterpolationOptions)


def iha_ph(sys, data=None, theta0=None, opts=None):
    """Interpolation-preserving H-infinity tuning of the reduced feedthrough.

    Parameters
    ----------
    sys
        Full-order staircase system.
    data
        Interpolation data. When omitted, IRKA-PH (``opts.irka``) supplies it.
    theta0
        Initial parameters (default zero, i.e. the unperturbed ROM).

    Returns
    -------
    ReducedModel
        ``provenance`` holds ``theta``, the initial and final objective
        values and the optimizer status.
    """
    opts = opts or IhaOptions()
    base_history = None
    if data is None:
        base, base_history = irka_ph(sys, opts=opts.irka)
        data = base.provenance['data']
    parts, basis = project(sys, data, opts.interpolation)
    cert = build_certificate(basis, data)
    m = sys.m
    theta0 = np.zeros(m * m) if theta0 is None else np.asarray(theta0, dtype=float).ravel()
    fom = prepare(sys)
    grid = frequency_grid(opts.omega_min, opts.omega_max, opts.points)
    cache = {}

    def objective(theta):
        val, _, _ = hinf_error(fom, perturb_rom(parts, cert, theta), grid=grid,
                               refine=opts.refine, fom_cache=cache)
        return float(val)

    f0 = objective(theta0)
    res = minimize(objective, theta0, method='Nelder-Mead',
                   options=dict(maxfev=opts.max_evals, xatol=opts.xatol, fatol=opts.fatol,
                                initial_simplex=_simplex(theta0)))
    theta, fbest = (res.x, float(res.fun)) if res.fun <= f0 else (theta0, f0)
    final = perturb_rom(parts, cert, theta)
    prov = dict(method='iha-ph', shifts=data.shifts.copy(), directions=data.directions.copy(),
                theta=theta.tolist(), objective_initial=f0, objective=fbest,
                optimizer_success=bool(res.success), optimizer_message=str(res.message),
                evaluations=int(res.nfev), certificate_residual=cert.residual,
                h2='unbounded' if la.maxabs(theta[m * (m - 1) // 2:]) > 0 else 'finite')
    if base_history is not None:
        prov['history'] = base_history
    rom = finalize(final, opts.interpolation, prov, name=f'{sys.name or "fom"}-iha')
    rom.provenance['data'] = data
    rom.provenance['certificate'] = cert
    return rom


def _simplex(theta0):
    n = len(theta0)
    step = np.maximum(0.1 * np.abs(theta0), 0.1)
    return np.vstack([theta0] + [theta0 + step[k] * np.eye(n)[k] for k in range(n)])
