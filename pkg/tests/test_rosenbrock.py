import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dense_transfer, full
from phdae_mor.models import CATEGORIES, GeneratorSpec, generate_rcl_ladder, generate_staircase
from phdae_mor.rosenbrock import dinf_closed_form, extract_proper
from phdae_mor.staircase import assemble_operator_blocks


def _split_transfer(p, s):
    Ep, Ap = full(p.Ep), full(p.Ap)
    return p.Cp @ np.linalg.solve(s * Ep - Ap, p.Bp.astype(complex)) + p.Dp + s * p.Dinf


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), cat=st.sampled_from(CATEGORIES),
       n=st.integers(8, 30), m=st.integers(1, 3))
def test_proper_plus_polynomial_part_equals_full_transfer(seed, cat, n, m):
    sys = generate_staircase(GeneratorSpec(cat, n=n, m=m, seed=seed))
    p = extract_proper(sys)
    rng = np.random.default_rng(seed)
    for s in rng.uniform(-2, 2, 10) + 1j * rng.uniform(-5, 5, 10):
        H = dense_transfer(sys, s)
        assert np.linalg.norm(_split_transfer(p, s) - H) <= 1e-9 * np.linalg.norm(H)
    assert np.abs(p.Dinf - dinf_closed_form(assemble_operator_blocks(sys))).max() <= 1e-12


@pytest.mark.parametrize('category', CATEGORIES)
def test_dinf_is_the_growth_rate(category):
    sys = generate_staircase(GeneratorSpec(category, n=24, m=2, seed=9))
    p = extract_proper(sys)
    w = 1e7
    slope = (dense_transfer(sys, 2j * w) - dense_transfer(sys, 1j * w)) / (1j * w)
    assert np.allclose(slope, p.Dinf, atol=1e-5 * max(1.0, np.abs(p.Dinf).max()))
    if category.startswith('improper'):
        assert np.linalg.matrix_rank(p.Dinf) > 0
    else:
        assert np.abs(p.Dinf).max() == 0


def test_implicit_and_materialized_extraction_agree():
    sys = generate_staircase(GeneratorSpec('improper-index-1-2', n=40, m=2, seed=4, sparse=True))
    a = extract_proper(sys, materialize=True)
    b = extract_proper(sys, materialize=False)
    assert not b.materialized
    assert np.allclose(b.Ap.toarray(), a.Ap, atol=1e-12)
    x = np.random.default_rng(0).standard_normal(sys.n2)
    assert np.allclose(b.Ap @ x, a.Ap @ x, atol=1e-12)
    for k in ('Bp', 'Cp', 'Dp', 'Dinf'):
        assert np.allclose(getattr(a, k), getattr(b, k), atol=1e-12)


def test_consistency_checks_are_recorded():
    sys = generate_staircase(GeneratorSpec('improper-index-2', n=20, seed=1))
    p = extract_proper(sys, materialize=True)
    assert p.checks['pattern_defect'] < 1e-12
    assert max(v for k, v in p.checks.items() if k.endswith('_direct')) < 1e-10


@pytest.mark.parametrize('variant', ['index1', 'index12'])
def test_ladder_extraction(variant):
    lad = generate_rcl_ladder(20, variant=variant)
    p = extract_proper(lad)
    for s in (0.3j, 1 + 2j, 40j):
        H = dense_transfer(lad, s)
        assert np.linalg.norm(_split_transfer(p, s) - H) <= 1e-10 * np.linalg.norm(H)
    if variant == 'index12':
        assert p.Dinf[0, 0] == pytest.approx(1.0)    # source capacitance


def test_proper_part_is_port_hamiltonian():
    sys = generate_staircase(GeneratorSpec('improper-index-1-2', n=30, m=2, seed=7))
    d = extract_proper(sys).ph.structure_defects()
    assert d['gamma_skew'] < 1e-12 and d['W_min_eig_rel'] > -1e-10 and d['E_min_eig'] > 0
