import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dense_transfer
from phdae_mor.analysis import h2_error, hinf_error, is_unbounded
from phdae_mor.hinf import (IhaOptions, PerturbationParams, build_certificate, delta_n, delta_s,
                            iha_ph, perturb_rom, vtsu, vtu)
from phdae_mor.h2 import IrkaOptions
from phdae_mor.interpolation import InterpolationData, finalize, project
from phdae_mor.models import CATEGORIES, GeneratorSpec, generate_staircase
from phdae_mor.staircase import validate_staircase


def test_triangular_fill_order():
    assert np.array_equal(vtsu([1, 2, 3], 3), [[0, 1, 2], [0, 0, 3], [0, 0, 0]])
    assert np.array_equal(vtu([1, 2, 3], 2), [[1, 2], [0, 3]])
    with pytest.raises(ValueError):
        vtu([1, 2], 2)


@given(st.integers(1, 4), st.integers(0, 1000))
def test_perturbation_blocks_are_skew_and_psd(m, seed):
    th = np.random.default_rng(seed).standard_normal(m * m)
    p = PerturbationParams.from_vector(th, m)
    DN, DS = p.deltas()
    assert np.allclose(DN, -DN.T)
    assert np.linalg.eigvalsh(DS).min() >= -1e-12 * max(1.0, np.abs(DS).max())
    assert np.array_equal(p.vector(), th) and p.m == m
    assert np.array_equal(DN, delta_n(p.theta_n, m)) and np.array_equal(DS, delta_s(p.theta_s, m))


def _setup(category, seed, m=2):
    fom = generate_staircase(GeneratorSpec(category, n=30, m=m, seed=seed))
    shifts = [0.2 + 0.6j, 0.5 + 2j, 0.8]
    D = np.ones((m, 3)) + 0j
    D[:, :2] += 0.4j * np.arange(1, m + 1)[:, None]
    data = InterpolationData.with_conjugates(shifts, D)
    parts, basis = project(fom, data)
    return fom, data, parts, build_certificate(basis, data)


@pytest.mark.parametrize('category', CATEGORIES)
def test_random_perturbations_keep_interpolation(category):
    fom, data, parts, cert = _setup(category, 3)
    assert cert.residual < 1e-10
    rng = np.random.default_rng(0)
    for _ in range(5):
        rom = finalize(perturb_rom(parts, cert, rng.standard_normal(4)))
        assert validate_staircase(rom).valid
        for s, b in zip(data.shifts, data.directions.T):
            y = dense_transfer(fom, s) @ b
            assert np.linalg.norm(y - dense_transfer(rom, s) @ b) <= 1e-8 * np.linalg.norm(y)


def test_zero_parameters_reproduce_the_rom_exactly():
    _, _, parts, cert = _setup('improper-index-1-2', 1)
    same = perturb_rom(parts, cert, np.zeros(4))
    assert np.array_equal(same.Gamma, parts.Gamma) and np.array_equal(same.W, parts.W)


def test_nonzero_symmetric_part_makes_h2_unbounded():
    fom, _, parts, cert = _setup('index-1', 2)
    rom = finalize(perturb_rom(parts, cert, [0.0, 0.3, 0.1, 0.2]))
    assert is_unbounded(h2_error(fom, rom))
    assert not is_unbounded(hinf_error(fom, rom)[0])


def test_iha_does_not_increase_the_objective():
    fom = generate_staircase(GeneratorSpec('proper-index-1-2', n=30, m=1, seed=4))
    opts = IhaOptions(points=150, max_evals=60, irka=IrkaOptions(r=4, max_iter=200))
    rom = iha_ph(fom, opts=opts)
    prov = rom.provenance
    assert prov['objective'] <= prov['objective_initial']
    assert validate_staircase(rom).valid
    data = prov['data']
    for s, b in zip(data.shifts, data.directions.T):
        y = dense_transfer(fom, s) @ b
        assert np.linalg.norm(y - dense_transfer(rom, s) @ b) <= 1e-8 * np.linalg.norm(y)


def test_iha_initial_objective_is_the_unperturbed_error():
    fom, data, parts, _ = _setup('index-0', 5, m=1)
    opts = IhaOptions(points=100, max_evals=5)
    rom = iha_ph(fom, data=data, opts=opts)
    base = finalize(parts)
    ref = hinf_error(fom, base, grid=np.logspace(-4, 6, 100), refine=opts.refine)[0]
    assert rom.provenance['objective_initial'] == pytest.approx(ref, rel=1e-12)
