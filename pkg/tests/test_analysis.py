import csv
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import dense_transfer
from phdae_mor.analysis import (error_report, frequency_grid, h2_error, hinf_error,
                                is_unbounded, sigma_response, transfer_eval)
from phdae_mor.interpolation import InterpolationData, interpolate
from phdae_mor.models import CATEGORIES, GeneratorSpec, generate_staircase
from phdae_mor.staircase import StaircaseSystem


def _pair(category, seed=0, m=2, r=4):
    fom = generate_staircase(GeneratorSpec(category, n=24, m=m, seed=seed))
    shifts = [0.3 + 0.5j, 1.0 + 2j][: r // 2]
    D = np.ones((m, len(shifts))) + 0.5j
    return fom, interpolate(fom, InterpolationData.with_conjugates(shifts, D))


def _h2_by_integration(fom, rom):
    def f(w):
        E = dense_transfer(fom, 1j * w) - dense_transfer(rom, 1j * w)
        return np.linalg.norm(E, 'fro') ** 2
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')    # quad's roundoff notice near the tolerance
        val = sum(quad(f, a, b, limit=400, epsabs=0, epsrel=1e-10)[0]
                  for a, b in ((0, 1), (1, 10), (10, 100), (100, np.inf)))
    return np.sqrt(val / np.pi)


@pytest.mark.parametrize('category', CATEGORIES)
def test_h2_error_matches_integration(category):
    fom, rom = _pair(category)
    ref = _h2_by_integration(fom, rom)
    assert float(h2_error(fom, rom)) == pytest.approx(ref, rel=1e-6)


def test_h2_quadrature_is_close():
    fom, rom = _pair('index-1')
    a, b = float(h2_error(fom, rom)), float(h2_error(fom, rom, method='quadrature'))
    assert b == pytest.approx(a, rel=1e-3)


def _with_feedthrough(sys, dS):
    return StaircaseSystem(sys.n1, sys.n2, sys.n3, sys.n4, sys.m, sys.E, sys.J, sys.R, sys.G,
                           sys.P, sys.S + dS, sys.N)


def test_feedthrough_mismatch_is_unbounded():
    fom, rom = _pair('index-0')
    other = _with_feedthrough(rom, 0.1 * np.eye(rom.m))
    val = h2_error(fom, other)
    assert is_unbounded(val) and 'feedthrough' in str(val)
    assert not is_unbounded(hinf_error(fom, other)[0])


def test_improper_mismatch_is_unbounded_in_both_norms():
    fom, rom = _pair('improper-index-2')
    other = generate_staircase(GeneratorSpec('proper-index-2', n=24, m=2, seed=0))
    assert is_unbounded(h2_error(fom, other))
    assert is_unbounded(hinf_error(fom, other)[0])
    assert not is_unbounded(h2_error(fom, rom)) and not is_unbounded(hinf_error(fom, rom)[0])


def test_hinf_estimate_matches_a_dense_sweep():
    fom, rom = _pair('proper-index-1-2', seed=3)
    val, w, _ = hinf_error(fom, rom)
    sweep = np.logspace(-4, 6, 20000)
    ref = max(np.linalg.norm(dense_transfer(fom, 1j * x) - dense_transfer(rom, 1j * x), 2)
              for x in sweep)
    assert val >= ref * (1 - 1e-6)
    assert val == pytest.approx(ref, rel=1e-3)
    assert np.linalg.norm(dense_transfer(fom, 1j * w) - dense_transfer(rom, 1j * w), 2) == \
        pytest.approx(val, rel=1e-10)


def test_transfer_eval_agrees_with_dense_formula():
    fom, rom = _pair('improper-index-1-2')
    for s in (0.1j, 2 + 3j):
        assert np.allclose(transfer_eval(fom, s), dense_transfer(fom, s), rtol=1e-10)
        assert np.allclose(transfer_eval(rom, s), dense_transfer(rom, s), rtol=1e-10)


def test_sigma_response_csv(tmp_path):
    fom, _ = _pair('index-1')
    resp = sigma_response(fom, frequency_grid(1e-2, 1e2, 7))
    path = tmp_path / 'r.csv'
    resp.to_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ['omega', 'Re_H11', 'Im_H11', 'Re_H12', 'Im_H12', 'Re_H21', 'Im_H21',
                       'Re_H22', 'Im_H22', 'sigma_max']
    assert len(rows) == 8
    w, smax = float(rows[3][0]), float(rows[3][-1])
    assert smax == pytest.approx(np.linalg.norm(dense_transfer(fom, 1j * w), 2), rel=1e-12)


def test_error_report_dict():
    fom, rom = _pair('index-0')
    d = error_report(fom, rom, 'both').to_dict()
    assert isinstance(d['h2'], float) and isinstance(d['hinf'], float)
    assert d['delta_dp'] < 1e-12
