import numpy as np
import pytest
import scipy.linalg as spla

from conftest import dense_transfer, finite_poles_and_residues
from phdae_mor.h2 import (IrkaOptions, damped_update, RegionSpec, TrksmOptions, default_shifts, irka_ph,
                          spectral_window, trksm_ph)
from phdae_mor.models import CATEGORIES, GeneratorSpec, generate_rcl_ladder, generate_staircase
from phdae_mor.rosenbrock import extract_proper
from phdae_mor.staircase import validate_staircase


def multiset_distance(a, b):
    """Largest relative distance of a point to its partner under the best matching."""
    from scipy.optimize import linear_sum_assignment
    a, b = np.asarray(a), np.asarray(b)
    cost = np.abs(a[:, None] - b[None, :]) / np.maximum(np.abs(a)[:, None], 1e-300)
    i, j = linear_sum_assignment(cost)
    return cost[i, j].max() if len(a) == len(b) else np.inf


def test_default_shifts_are_conjugate_closed():
    d = default_shifts(5, 2, 0.1, 10)
    assert d.r == 5 and np.sum(np.abs(d.shifts.imag) == 0) == 1
    assert np.allclose(np.sort_complex(d.shifts), np.sort_complex(d.shifts.conj()))


@pytest.mark.parametrize('category', ['index-1', 'improper-index-1-2'])
def test_spectral_window_brackets_the_poles(category):
    sys = generate_staircase(GeneratorSpec(category, n=40, seed=0))
    p = extract_proper(sys)
    lam = np.abs(spla.eigvals(p.Ap, p.Ep))
    lo, hi = spectral_window(sys)
    assert lo == pytest.approx(lam.min(), rel=1e-8) and hi == pytest.approx(lam.max(), rel=1e-8)


def test_spectral_window_of_a_large_ladder():
    lad = generate_rcl_ladder(300, variant='index1')      # n2 = 600 uses the iterative branch
    p = extract_proper(lad).dense()
    lam = np.abs(spla.eigvals(p.Ap, p.Ep))
    lo, hi = spectral_window(lad)
    assert lo == pytest.approx(lam.min(), rel=1e-2) and hi == pytest.approx(lam.max(), rel=1e-2)


@pytest.mark.parametrize('category', CATEGORIES)
def test_irka_fixed_point(category):
    fom = generate_staircase(GeneratorSpec(category, n=30, m=2, seed=6))
    rom, hist = irka_ph(fom, opts=IrkaOptions(r=4, shift_tol=1e-9, max_iter=1500))
    assert hist.converged and rom.provenance['converged']
    assert validate_staircase(rom).valid
    poles = finite_poles_and_residues(rom)
    assert len(poles) == 4
    mirrored = np.array([-lam for lam, _, _ in poles])
    assert multiset_distance(rom.provenance['data'].shifts, mirrored) <= 1e-5
    for lam, _, r in poles:
        y = dense_transfer(fom, -lam) @ r
        assert np.linalg.norm(y - dense_transfer(rom, -lam) @ r) <= 1e-6 * np.linalg.norm(y)


def test_irka_history_and_non_convergence():
    fom = generate_staircase(GeneratorSpec('index-0', n=30, m=1, seed=0))
    rom, hist = irka_ph(fom, opts=IrkaOptions(r=4, max_iter=2, shift_tol=1e-14))
    assert not hist.converged and len(hist) == 2
    assert rom.provenance['iterations'] == 2
    d = hist.to_dict()
    assert len(d['iterations']) == 2 and d['converged'] is False


def test_trksm_grows_to_rmax_and_interpolates():
    fom = generate_staircase(GeneratorSpec('proper-index-1-2', n=40, m=2, seed=2))
    rom, hist = trksm_ph(fom, r_max=6, opts=TrksmOptions(tol=1e-14))
    assert rom.r_proper <= 6 and validate_staircase(rom).valid
    data = rom.provenance['data']
    for s, b in zip(data.shifts, data.directions.T):
        y = dense_transfer(fom, s) @ b
        assert np.linalg.norm(y - dense_transfer(rom, s) @ b) <= 1e-8 * np.linalg.norm(y)
    assert all(r is None or r >= 0 for r in hist.residual)


def test_trksm_custom_region():
    fom = generate_staircase(GeneratorSpec('index-1', n=30, m=1, seed=1))
    region = RegionSpec(points=np.array([0.5j, 1j, 2j, 1.0]), policy='fixed')
    rom, _ = trksm_ph(fom, r_max=4, region=region)
    assert set(np.round(rom.provenance['data'].shifts, 12)) <= \
        set(np.round(np.r_[region.points, region.points.conj()], 12))


def test_minimal_kyp_projection_in_irka():
    fom = generate_staircase(GeneratorSpec('improper-index-1-2', n=30, m=2, seed=1))
    rom, hist = irka_ph(fom, opts=IrkaOptions(r=4, kyp_minus=True, max_iter=200))
    assert validate_staircase(rom).valid and rom.provenance['kyp_minus']


def test_damped_update_keeps_closure_and_fixed_points():
    a = default_shifts(5, 2, 0.1, 10)
    b = default_shifts(5, 2, 0.2, 20)
    half = damped_update(a, b, 0.5)
    assert half.r == 5
    assert np.allclose(np.sort_complex(half.shifts), np.sort_complex(half.shifts.conj()))
    assert multiset_distance(damped_update(a, a, 0.5).shifts, a.shifts) < 1e-15
    assert damped_update(a, b, 1.0) is b


def test_damped_irka_reaches_the_same_fixed_point():
    fom = generate_staircase(GeneratorSpec('improper-index-2', n=30, m=2, seed=7))
    plain, h1 = irka_ph(fom, opts=IrkaOptions(r=4, shift_tol=1e-9, max_iter=1500))
    damped, h2 = irka_ph(fom, opts=IrkaOptions(r=4, shift_tol=1e-9, max_iter=1500, damping=0.5))
    assert h1.converged and h2.converged
    assert multiset_distance(plain.provenance['data'].shifts,
                             damped.provenance['data'].shifts) < 1e-6
