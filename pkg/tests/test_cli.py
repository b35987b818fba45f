import json

import numpy as np
import pytest

from phdae_mor.cli import main
from phdae_mor.io import load_model
from phdae_mor.staircase import validate_staircase


@pytest.fixture(scope='module')
def fom_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp('cli') / 'fom'
    assert main(['generate', '--category', 'improper-index-1-2', '--n', '30', '--m', '2',
                 '--seed', '1', '--out', str(d)]) == 0
    return d


def test_generate_validate_info(fom_dir, capsys):
    assert main(['validate', str(fom_dir)]) == 0
    capsys.readouterr()
    assert main(['info', str(fom_dir)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info['index'] == 2 and info['rank_dinf'] == 2 and info['n'] == 30


def test_generate_with_dims_and_ladder(tmp_path):
    assert main(['generate', '--category', 'index-1', '--dims', '0,8,4,0', '--out',
                 str(tmp_path / 'a')]) == 0
    assert load_model(tmp_path / 'a').dims == (0, 8, 4, 0)
    assert main(['generate', '--category', 'ladder-index12', '--cells', '5', '--out',
                 str(tmp_path / 'b')]) == 0
    assert load_model(tmp_path / 'b').dims == (1, 10, 5, 1)


@pytest.mark.parametrize('method', ['fixed', 'irka', 'trksm', 'iha'])
def test_reduce_produces_valid_bundles(fom_dir, tmp_path, method):
    out = tmp_path / method
    args = ['reduce', str(fom_dir), '--method', method, '--order', '4', '--out', str(out)]
    if method == 'irka':
        args += ['--max-iter', '300', '--tol', '1e-8']
    assert main(args) == 0
    rom = load_model(out)
    assert validate_staircase(rom).valid and rom.n2 == 4
    prov = json.loads((out / 'provenance.json').read_text())
    assert prov['method'] == method and len(prov['shifts']) >= 1
    assert main(['validate', str(out)]) == 0


def test_reduce_with_shift_file_and_kyp_minus(fom_dir, tmp_path):
    f = tmp_path / 'shifts.json'
    f.write_text(json.dumps({'shifts': [[0.3, 1.0], 0.5],
                             'directions': [[[1, 0], [0, 1]], [1, 1]]}))
    out = tmp_path / 'rom'
    assert main(['reduce', str(fom_dir), '--method', 'fixed', '--order', '3',
                 '--shifts', str(f), '--kyp-minus', '--out', str(out)]) == 0
    prov = json.loads((out / 'provenance.json').read_text())
    assert prov['kyp_minus'] and len(prov['shifts']) == 3


def test_response_csv(fom_dir, tmp_path):
    out = tmp_path / 'r.csv'
    assert main(['response', str(fom_dir), '--fmin', '0.1', '--fmax', '10', '--points', '9',
                 '--out', str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith('omega,Re_H11,Im_H11') and lines[0].endswith('sigma_max')
    assert len(lines) == 10


def test_error_reports_unbounded_h2_for_iha(fom_dir, tmp_path):
    rom = tmp_path / 'iha'
    assert main(['reduce', str(fom_dir), '--method', 'iha', '--order', '2', '--out', str(rom)]) == 0
    out = tmp_path / 'e.json'
    assert main(['error', str(fom_dir), str(rom), '--norm', 'h2', '--out', str(out)]) == 0
    rep = json.loads(out.read_text())
    theta_s = json.loads((rom / 'provenance.json').read_text())['theta'][1:]
    if np.any(np.asarray(theta_s) != 0):
        assert rep['h2'] == 'unbounded (feedthrough mismatch)'


def test_error_both_norms(fom_dir, tmp_path, capsys):
    rom = tmp_path / 'rom'
    main(['reduce', str(fom_dir), '--method', 'fixed', '--order', '4', '--out', str(rom)])
    capsys.readouterr()
    assert main(['error', str(fom_dir), str(rom)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep['h2'] > 0 and rep['hinf'] > 0 and rep['version'] == 1


def test_corrupted_bundle_fails_with_json_error(fom_dir, tmp_path, capsys):
    import shutil
    bad = tmp_path / 'bad'
    shutil.copytree(fom_dir, bad)
    (bad / 'J.41.mtx').write_text('%%MatrixMarket matrix array real general\n1 1\n')
    assert main(['validate', str(bad)]) != 0
    err = json.loads(capsys.readouterr().err)
    assert err['error'] == 'ModelIOError' and err['block'] == 'J.41'


def test_invalid_model_exits_nonzero(tmp_path, capsys):
    from phdae_mor.io import save_model
    from phdae_mor.models import GeneratorSpec, generate_staircase
    from phdae_mor.staircase import StaircaseSystem
    s = generate_staircase(GeneratorSpec('index-0', n=6, seed=0))
    R = np.asarray(s.R) - 10 * np.eye(6)
    bad = StaircaseSystem(0, 6, 0, 0, 1, s.E, s.J, R, s.G, s.P, s.S, s.N)
    save_model(bad, tmp_path / 'm')
    assert main(['validate', str(tmp_path / 'm')]) == 1
    assert 'INVALID' in capsys.readouterr().out
