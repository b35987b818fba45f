import json

import numpy as np
import pytest
import scipy.sparse as sps

from phdae_mor.errors import ModelIOError
from phdae_mor.io import load_model, save_model
from phdae_mor.models import CATEGORIES, GeneratorSpec, generate_rcl_ladder, generate_staircase
from phdae_mor.staircase import validate_staircase


@pytest.mark.parametrize('category', CATEGORIES)
@pytest.mark.parametrize('sparse', [False, True])
def test_roundtrip_is_exact(tmp_path, category, sparse):
    sys = generate_staircase(GeneratorSpec(category, n=25, m=2, seed=8, sparse=sparse))
    save_model(sys, tmp_path)
    back = load_model(tmp_path)
    assert back.dims == sys.dims and back.m == sys.m
    for nm in 'EJRGPSN':
        a, b = getattr(sys, nm), getattr(back, nm)
        assert sps.issparse(a) == sps.issparse(b)
        a = a.toarray() if sps.issparse(a) else a
        b = b.toarray() if sps.issparse(b) else b
        assert np.array_equal(a, b)


def test_manifest_schema_and_formats(tmp_path):
    lad = generate_rcl_ladder(4, variant='index12')
    save_model(lad, tmp_path, provenance={'note': 'x'})
    man = json.loads((tmp_path / 'manifest.json').read_text())
    assert {'version', 'n1', 'n2', 'n3', 'n4', 'm', 'files'} <= set(man)
    assert man['provenance'] == {'note': 'x'}
    assert {'E11', 'E22', 'J.41', 'J.14', 'G.4'} <= set(man['files'])
    assert 'coordinate' in (tmp_path / man['files']['J.22']).read_text().splitlines()[0]
    dense = generate_staircase(GeneratorSpec('index-0', n=5, seed=0, sparse=False))
    save_model(dense, tmp_path / 'd')
    assert 'array' in (tmp_path / 'd' / 'E22.mtx').read_text().splitlines()[0]


def test_bundle_bytes_are_deterministic(tmp_path):
    for d in ('a', 'b'):
        save_model(generate_staircase(GeneratorSpec('index-1', n=20, seed=1)), tmp_path / d)
    for f in (tmp_path / 'a').iterdir():
        assert f.read_bytes() == (tmp_path / 'b' / f.name).read_bytes()


def test_dimension_mismatch_names_block(tmp_path):
    save_model(generate_rcl_ladder(3, variant='index12'), tmp_path)
    path = tmp_path / 'manifest.json'
    man = json.loads(path.read_text())
    man['n2'] += 1
    path.write_text(json.dumps(man))
    with pytest.raises(ModelIOError, match='E22') as info:
        load_model(tmp_path)
    assert info.value.block == 'E22'


def test_missing_and_corrupt_files(tmp_path):
    save_model(generate_rcl_ladder(3, variant='index1'), tmp_path)
    (tmp_path / 'J.22.mtx').write_text('garbage\n')
    with pytest.raises(ModelIOError, match='J.22'):
        load_model(tmp_path)
    (tmp_path / 'J.22.mtx').unlink()
    with pytest.raises(ModelIOError, match='missing'):
        load_model(tmp_path)
    with pytest.raises(ModelIOError):
        load_model(tmp_path / 'nowhere')


def test_converted_external_layout_loads_and_validates(tmp_path):
    # an externally supplied pH-ODE (E, J, R, Q-free form) written in bundle layout by hand
    rng = np.random.default_rng(0)
    n = 6
    M = rng.standard_normal((n, n))
    J, L = M - M.T, rng.standard_normal((n, n))
    import scipy.io as sio
    sio.mmwrite(tmp_path / 'E22.mtx', np.eye(n))
    sio.mmwrite(tmp_path / 'J.22.mtx', sps.coo_array(J))
    sio.mmwrite(tmp_path / 'R.22.mtx', L @ L.T)
    sio.mmwrite(tmp_path / 'G.2.mtx', rng.standard_normal((n, 1)))
    (tmp_path / 'manifest.json').write_text(json.dumps(dict(
        version=1, n1=0, n2=n, n3=0, n4=0, m=1,
        files={'E22': 'E22.mtx', 'J.22': 'J.22.mtx', 'R.22': 'R.22.mtx', 'G.2': 'G.2.mtx'})))
    assert validate_staircase(load_model(tmp_path)).valid
