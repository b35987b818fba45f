import numpy as np
import pytest
import scipy.linalg as spla
from hypothesis import given, settings, strategies as st

from conftest import dense_transfer, full
from phdae_mor.errors import ShiftSingularityError, StageError
from phdae_mor.interpolation import (InterpolationData, InterpolationOptions, interpolate,
                                     orthonormalize_v2, tangential_basis)
from phdae_mor.models import CATEGORIES, GeneratorSpec, generate_staircase
from phdae_mor.rosenbrock import extract_proper
from phdae_mor.staircase import validate_staircase


def _data(rng, m, npairs, nreal):
    shifts = list(rng.uniform(0.05, 2, npairs) + 1j * rng.uniform(0.1, 5, npairs))
    shifts += list(rng.uniform(0.1, 3, nreal))
    D = rng.standard_normal((m, len(shifts))) + 0j
    D[:, :npairs] += 1j * rng.standard_normal((m, npairs))
    return InterpolationData.with_conjugates(shifts, D)


def _residuals(fom, rom, data):
    out = []
    for s, b in zip(data.shifts, data.directions.T):
        y = dense_transfer(fom, s) @ b
        out.append(np.linalg.norm(y - dense_transfer(rom, s) @ b) / np.linalg.norm(y))
    return np.array(out)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), cat=st.sampled_from(CATEGORIES), m=st.integers(1, 3),
       npairs=st.integers(0, 3), nreal=st.integers(0, 2))
def test_rom_interpolates_and_is_valid(seed, cat, m, npairs, nreal):
    if npairs + nreal == 0:
        nreal = 1
    fom = generate_staircase(GeneratorSpec(cat, n=30, m=m, seed=seed))
    data = _data(np.random.default_rng(seed), m, npairs, nreal)
    rom = interpolate(fom, data)
    assert _residuals(fom, rom, data).max() <= 1e-8
    assert validate_staircase(rom).valid


@pytest.mark.parametrize('category', CATEGORIES)
def test_rom_is_minimal(category):
    fom = generate_staircase(GeneratorSpec(category, n=30, m=2, seed=3))
    data = _data(np.random.default_rng(0), 2, 2, 1)
    rom = interpolate(fom, data)
    q = np.linalg.matrix_rank(extract_proper(fom).Dinf, tol=1e-10)
    assert rom.q == q and rom.dims == (q, data.r, 0, q)
    if category == 'index-1':
        assert rom.dims == (0, data.r, 0, 0)


def test_polynomial_part_is_preserved():
    fom = generate_staircase(GeneratorSpec('improper-index-1-2', n=30, m=2, seed=1))
    rom = interpolate(fom, _data(np.random.default_rng(1), 2, 2, 0))
    pf, pr = extract_proper(fom), extract_proper(rom)
    assert np.allclose(pf.Dp, pr.Dp, atol=1e-12) and np.allclose(pf.Dinf, pr.Dinf, atol=1e-12)


def test_real_block_mode_gives_the_same_rom():
    fom = generate_staircase(GeneratorSpec('proper-index-1-2', n=30, m=2, seed=4))
    data = _data(np.random.default_rng(4), 2, 2, 1)
    a = interpolate(fom, data)
    b = interpolate(fom, data, InterpolationOptions(complex_mode='real-block'))
    for s in (0.5j, 1 + 1j):
        assert np.allclose(dense_transfer(a, s), dense_transfer(b, s), rtol=1e-9)


def test_basis_spans_the_shifted_solutions():
    fom = generate_staircase(GeneratorSpec('index-1', n=20, m=1, seed=0))
    data = _data(np.random.default_rng(2), 1, 1, 1)
    basis = tangential_basis(fom, data)
    A = full(fom.J) - full(fom.R)
    assert sorted(basis.solutions) == data.representatives()
    for k in data.representatives():
        s, b = data.shifts[k], data.directions[:, k]
        x = np.linalg.solve(s * full(fom.E) - A, (fom.G - fom.P) @ b)
        assert np.allclose(basis.solutions[k], x, rtol=1e-10, atol=1e-12)


def test_orthonormalization_and_rank_drop():
    rng = np.random.default_rng(0)
    V = rng.standard_normal((10, 3))
    V = np.hstack([V, V[:, :1] * 2.0])          # dependent column
    Vbar2, Tv, r = orthonormalize_v2(V)
    assert r == 3 and Vbar2.shape == (10, 3)
    assert np.allclose(Vbar2.T @ Vbar2, np.eye(3), atol=1e-12)
    assert np.allclose(V @ Tv, Vbar2, atol=1e-10)


def test_duplicate_direction_data_drops_rank_but_still_interpolates():
    fom = generate_staircase(GeneratorSpec('index-0', n=20, m=1, seed=1))
    data = InterpolationData([0.5, 1.0, 2.0], [[1.0, 1.0, 1.0]])
    rom = interpolate(fom, data)
    assert rom.r_proper == 3 and _residuals(fom, rom, data).max() < 1e-8


def test_shift_at_a_pole_is_reported():
    fom = generate_staircase(GeneratorSpec('index-1', n=12, m=1, seed=0))
    p = extract_proper(fom)
    lam = spla.eigvals(p.Ap, p.Ep)
    pole = lam[np.argmin(np.abs(lam.imag))]
    with pytest.raises(StageError) as info:
        interpolate(fom, InterpolationData.with_conjugates([pole], [[1.0]]))
    assert info.value.stage == 'basis' and isinstance(info.value.cause, ShiftSingularityError)


@pytest.mark.parametrize('shifts, dirs', [([1.0, 1.0], [[1.0, 1.0]]),          # not distinct
                                          ([1j], [[1.0]]),                     # no conjugate
                                          ([2.0], [[1j]])])                    # complex direction
def test_invalid_interpolation_data(shifts, dirs):
    with pytest.raises(ValueError):
        InterpolationData(shifts, dirs)
