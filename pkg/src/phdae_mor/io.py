"""Model bundles: one Matrix Market file per nonzero block plus ``manifest.json``.

Sparse blocks are written in coordinate format, dense blocks in array format,
both with 17 significant digits so that a save/load round trip reproduces
every value exactly.
"""

import json
from pathlib import Path

import numpy as np
import scipy.io as sio
import scipy.sparse as sps

from phdae_mor import _linalg as la
from phdae_mor.errors import ModelIOError, PHDAEError
from phdae_mor.staircase import StaircaseSystem

FORMAT_VERSION = 1
MANIFEST = 'manifest.json'


def _blocks(sys):
    """Yield ``(key, matrix)`` for every block of the bundle layout."""
    yield 'E11', sys.E11
    yield 'E22', sys.E22
    for nm in ('J', 'R'):
        for i in range(1, 5):
            for j in range(1, 5):
                yield f'{nm}.{i}{j}', sys.block(nm, i, j)
    for nm in ('G', 'P'):
        for i in range(1, 5):
            yield f'{nm}.{i}', sys.block(nm, i)
    yield 'S', sys.S
    yield 'N', sys.N


def _nnz(M):
    return M.count_nonzero() if sps.issparse(M) else np.count_nonzero(M)


def _nonzero(M):
    return _nnz(M) > 0


def _write(path, M):
    M = sps.coo_array(M) if sps.issparse(M) else np.asarray(M)
    sio.mmwrite(path, M, precision=17, symmetry='general')


def save_model(sys, directory, provenance=None):
    """Write `sys` as a bundle to `directory` (created if needed).

    Parameters
    ----------
    sys
        :class:`~phdae_mor.staircase.StaircaseSystem`.
    provenance
        Optional JSON-serializable dictionary stored in the manifest.

    Returns
    -------
    pathlib.Path
        The manifest path.
    """
    if _nnz(sys.E) != _nnz(sys.E11) + _nnz(sys.E22):
        raise ModelIOError('E has nonzero entries outside the E11 and E22 blocks', block='E')
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for key, M in _blocks(sys):
        if not _nonzero(M):
            continue
        fname = f'{key}.mtx'
        _write(d / fname, M)
        files[key] = fname
    manifest = dict(version=FORMAT_VERSION, n1=sys.n1, n2=sys.n2, n3=sys.n3, n4=sys.n4,
                    m=sys.m, name=sys.name, files=files,
                    storage={nm: 'sparse' if sps.issparse(getattr(sys, nm)) else 'dense'
                             for nm in ('E', 'J', 'R')})
    if provenance is not None:
        manifest['provenance'] = provenance
    path = d / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    return path


def read_manifest(directory):
    path = Path(directory) / MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ModelIOError(f'no {MANIFEST} in {directory}') from exc
    except json.JSONDecodeError as exc:
        raise ModelIOError(f'{path} is not valid JSON ({exc})') from exc
    missing = [k for k in ('version', 'n1', 'n2', 'n3', 'n4', 'm', 'files') if k not in manifest]
    if missing:
        raise ModelIOError(f'{path} lacks the fields {missing}')
    if manifest['version'] > FORMAT_VERSION:
        raise ModelIOError(f'bundle format version {manifest["version"]} is newer than '
                           f'the supported version {FORMAT_VERSION}')
    return manifest


def _expected_shape(key, sizes, m):
    nm, _, idx = key.partition('.')
    if key == 'E11':
        return sizes[0], sizes[0]
    if key == 'E22':
        return sizes[1], sizes[1]
    if key in ('S', 'N'):
        return m, m
    if nm in ('J', 'R') and len(idx) == 2 and set(idx) <= set('1234'):
        return sizes[int(idx[0]) - 1], sizes[int(idx[1]) - 1]
    if nm in ('G', 'P') and len(idx) == 1 and idx in '1234':
        return sizes[int(idx) - 1], m
    raise ModelIOError(f'unknown block name {key!r} in manifest', block=key)


def load_model(directory):
    """Read a bundle written by :func:`save_model`.

    Raises
    ------
    ModelIOError
        If the manifest or a block file is missing or corrupt, or a block's
        shape disagrees with the manifest dimensions (the message and the
        ``block`` attribute name the offending block).
    """
    d = Path(directory)
    man = read_manifest(d)
    sizes = tuple(int(man[k]) for k in ('n1', 'n2', 'n3', 'n4'))
    m = int(man['m'])
    storage = man.get('storage', {})
    blocks = {}
    for key, fname in man['files'].items():
        shape = _expected_shape(key, sizes, m)
        if not (d / fname).is_file():
            raise ModelIOError(f'block {key}: file {fname} is missing', block=key)
        try:
            M = sio.mmread(d / fname)
        except Exception as exc:  # mmread raises a variety of parse errors
            raise ModelIOError(f'block {key}: cannot read {fname} ({exc})', block=key) from exc
        if M.shape != shape:
            raise ModelIOError(f'block {key}: file {fname} has shape {M.shape}, manifest '
                               f'dimensions require {shape}', block=key)
        blocks[key] = sps.csr_array(M) if sps.issparse(M) else np.asarray(M, dtype=float)

    def square(nm):
        sparse = storage.get(nm) == 'sparse'
        rows = []
        for i in range(4):
            row = []
            for j in range(4):
                if nm == 'E':
                    key = f'E{i + 1}{i + 1}' if i == j else None
                else:
                    key = f'{nm}.{i + 1}{j + 1}'
                b = blocks.get(key)
                if b is None:
                    b = sps.csr_array((sizes[i], sizes[j])) if sparse else np.zeros((sizes[i], sizes[j]))
                row.append(sps.csr_array(b) if sparse else la.dense(b))
            rows.append(row)
        if sparse:
            return sps.csr_array(sps.block_array(rows, format='csr'))
        return np.block(rows)

    def ports(nm):
        return np.vstack([la.dense(blocks[f'{nm}.{i}']) if f'{nm}.{i}' in blocks
                          else np.zeros((sizes[i - 1], m)) for i in range(1, 5)])

    def ff(nm):
        return la.dense(blocks[nm]) if nm in blocks else np.zeros((m, m))

    try:
        return StaircaseSystem(*sizes, m, square('E'), square('J'), square('R'),
                               ports('G'), ports('P'), ff('S'), ff('N'), name=man.get('name', ''))
    except PHDAEError as exc:
        raise ModelIOError(f'inconsistent bundle in {d}: {exc}') from exc
