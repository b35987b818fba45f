"""Command-line interface (``phdae-mor``)."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from phdae_mor import __version__
from phdae_mor.analysis import error_report, frequency_grid, sigma_response
from phdae_mor.errors import PHDAEError, StageError
from phdae_mor.h2 import (IrkaOptions, RegionSpec, TrksmOptions, default_shifts, irka_ph,
                          spectral_window, trksm_ph)
from phdae_mor.hinf import IhaOptions, iha_ph
from phdae_mor.interpolation import InterpolationData, InterpolationOptions, interpolate
from phdae_mor.io import load_model, save_model
from phdae_mor.models import CATEGORIES, GeneratorSpec, generate_rcl_ladder, generate_staircase
from phdae_mor.rosenbrock import extract_proper
from phdae_mor.staircase import differentiation_index, validate_staircase

PROVENANCE_VERSION = 1
LADDERS = ('ladder-index1', 'ladder-index12')


class CliError(Exception):
    pass


def _jsonable(x):
    """Convert provenance values (arrays, complex numbers, histories) to JSON types."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()
                if k not in ('basis', 'certificate', 'data')}
    if hasattr(x, 'to_dict'):
        return _jsonable(x.to_dict())
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def _complex(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise CliError(f'complex numbers are written as [re, im], got {v}')
        return complex(v[0], v[1])
    if isinstance(v, str):
        return complex(v.replace(' ', ''))
    return complex(v)


def read_shifts(path, m):
    """Interpolation data from a JSON file.

    The file holds ``{"shifts": [...], "directions": [...]}`` where shifts
    are numbers, ``[re, im]`` pairs or strings like ``"1+2j"`` and
    ``directions`` (optional) is a list of ``r`` vectors of length ``m``.
    Missing conjugate partners are added.
    """
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f'cannot read shift file {path}: {exc}') from exc
    if isinstance(raw, list):
        raw = {'shifts': raw}
    shifts = [_complex(s) for s in raw.get('shifts', [])]
    if not shifts:
        raise CliError(f'shift file {path} contains no shifts')
    if 'directions' in raw:
        D = np.array([[_complex(v) for v in b] for b in raw['directions']]).T
        if D.shape != (m, len(shifts)):
            raise CliError(f'directions must be {len(shifts)} vectors of length {m}')
    else:
        D = np.zeros((m, len(shifts)), dtype=complex)
        D[np.arange(len(shifts)) % m, np.arange(len(shifts))] = 1.0
    try:
        return InterpolationData(shifts, D)
    except ValueError:
        return InterpolationData.with_conjugates(shifts, D)


def _write_json(obj, out):
    text = json.dumps(_jsonable(obj), indent=2)
    if out in (None, '-'):
        print(text)
    else:
        Path(out).write_text(text + '\n')


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args):
    if args.category in LADDERS:
        variant = args.category.split('-')[1]
        model = generate_rcl_ladder(args.cells, variant=variant)
    else:
        dims = None
        if args.dims:
            dims = tuple(int(d) for d in args.dims.split(','))
            if len(dims) != 4:
                raise CliError('--dims expects n1,n2,n3,n4')
        spec = GeneratorSpec(args.category, dims=dims, m=args.m, seed=args.seed, n=args.n,
                             bandwidth=args.bandwidth, sparse=args.sparse)
        model = generate_staircase(spec)
    save_model(model, args.out)
    print(f'wrote {model!r} to {args.out}')
    return 0


def cmd_validate(args):
    model = load_model(args.dir)
    report = validate_staircase(model, tol=args.tol)
    print(report)
    return 0 if report.valid else 1


def _nnz(M):
    return int(M.count_nonzero() if sps.issparse(M) else np.count_nonzero(M))


def cmd_info(args):
    model = load_model(args.dir)
    p = extract_proper(model, materialize=False)
    dinf = np.atleast_2d(p.Dinf)
    rank = int(np.linalg.matrix_rank(dinf, tol=1e-12 * max(1.0, np.abs(dinf).max()))) if dinf.size else 0
    n = model.n
    info = dict(name=model.name, n=n, n1=model.n1, n2=model.n2, n3=model.n3, n4=model.n4,
                m=model.m, index=differentiation_index(model), rank_dinf=rank,
                storage='sparse' if model.is_sparse else 'dense',
                nnz={nm: _nnz(getattr(model, nm)) for nm in ('E', 'J', 'R')},
                density={nm: _nnz(getattr(model, nm)) / max(n * n, 1) for nm in ('E', 'J', 'R')})
    _write_json(info, None)
    return 0


def _reduce(model, args):
    iopts = InterpolationOptions()
    if args.kyp_minus and args.method in ('fixed', 'trksm'):
        from phdae_mor.kyp import minimal_kyp_solution
        iopts.X = minimal_kyp_solution(extract_proper(model)).X
    data = None
    if args.shifts:
        data = read_shifts(args.shifts, model.m)
    elif args.method == 'fixed':
        data = default_shifts(args.order, model.m, *spectral_window(model))
    history = None
    if args.method == 'fixed':
        rom = interpolate(model, data, iopts, provenance=dict(method='fixed'))
    elif args.method == 'irka':
        opts = IrkaOptions(r=args.order, max_iter=args.max_iter or 100,
                           shift_tol=args.tol or 1e-6, kyp_minus=args.kyp_minus, interpolation=iopts)
        rom, history = irka_ph(model, init=data, opts=opts)
    elif args.method == 'trksm':
        lo, hi = spectral_window(model)
        opts = TrksmOptions(r_max=args.order, tol=args.tol or 1e-4, interpolation=iopts,
                            region=RegionSpec(omega_min=lo, omega_max=hi))
        rom, history = trksm_ph(model, init=data, opts=opts)
    else:
        irka = IrkaOptions(r=args.order, max_iter=args.max_iter or 100,
                           shift_tol=args.tol or 1e-6, kyp_minus=args.kyp_minus)
        rom = iha_ph(model, data=data, opts=IhaOptions(irka=irka))
        history = rom.provenance.get('history')
    return rom, history


def cmd_reduce(args):
    model = load_model(args.dir)
    if args.order < 1:
        raise CliError('--order must be positive')
    rom, history = _reduce(model, args)
    prov = dict(version=PROVENANCE_VERSION, source=str(Path(args.dir).resolve()),
                method=args.method, requested_order=args.order, kyp_minus=args.kyp_minus,
                dims=list(rom.dims), proper_order=rom.r_proper, q=rom.q)
    prov.update({k: v for k, v in rom.provenance.items() if k not in ('method', 'history')})
    if history is not None:
        prov['history'] = history
    prov = _jsonable(prov)
    save_model(rom, args.out, provenance=prov)
    _write_json(prov, Path(args.out) / 'provenance.json')
    if rom.r_proper != args.order:
        print(f'note: proper order {rom.r_proper} differs from the requested {args.order}',
              file=sys.stderr)
    print(f'wrote reduced model of order {rom.order} (proper {rom.r_proper}, improper {rom.q}) '
          f'to {args.out}')
    return 0


def cmd_response(args):
    model = load_model(args.dir)
    resp = sigma_response(model, frequency_grid(args.fmin, args.fmax, args.points))
    resp.to_csv(args.out)
    if resp.failed:
        print(f'warning: evaluation failed at {len(resp.failed)} frequencies', file=sys.stderr)
    print(f'wrote {len(resp.frequencies)} frequencies to {args.out}')
    return 0


def cmd_error(args):
    fom, rom = load_model(args.fom), load_model(args.rom)
    rep = error_report(fom, rom, norm=args.norm)
    out = dict(version=PROVENANCE_VERSION, norm=args.norm, fom=args.fom, rom=args.rom,
               **rep.to_dict())
    _write_json(out, args.out)
    if args.out not in (None, '-'):
        print(json.dumps({k: out[k] for k in ('h2', 'hinf')}))
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog='phdae-mor',
                                 description='Structure-preserving model reduction of '
                                             'port-Hamiltonian descriptor systems.')
    ap.add_argument('--version', action='version', version=__version__)
    ap.add_argument('-v', '--verbose', action='store_true', help='log progress to stderr')
    sub = ap.add_subparsers(dest='command', required=True)

    p = sub.add_parser('generate', help='generate a benchmark model bundle')
    p.add_argument('--category', required=True, choices=CATEGORIES + LADDERS)
    p.add_argument('--dims', help='n1,n2,n3,n4 (random categories)')
    p.add_argument('--n', type=int, default=20, help='state dimension when --dims is omitted')
    p.add_argument('--m', type=int, default=1, help='number of ports')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--bandwidth', type=int, default=2)
    p.add_argument('--sparse', action=argparse.BooleanOptionalAction, default=None)
    p.add_argument('--cells', type=int, default=10, help='ladder cells')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser('validate', help='check the staircase pH structure')
    p.add_argument('dir')
    p.add_argument('--tol', type=float, default=1e-10)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser('info', help='print dimensions, index and sparsity as JSON')
    p.add_argument('dir')
    p.set_defaults(func=cmd_info)

    p = sub.add_parser('reduce', help='compute a structure-preserving reduced model')
    p.add_argument('dir')
    p.add_argument('--method', choices=('fixed', 'irka', 'trksm', 'iha'), default='irka')
    p.add_argument('--order', type=int, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument('--shifts', help='JSON file with shifts and optional directions')
    g.add_argument('--auto', action='store_true', help='choose initial shifts automatically')
    p.add_argument('--max-iter', type=int)
    p.add_argument('--tol', type=float)
    p.add_argument('--kyp-minus', action='store_true',
                   help='project with the minimal KYP solution')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser('response', help='write the frequency response as CSV')
    p.add_argument('dir')
    p.add_argument('--fmin', type=float, default=1e-4)
    p.add_argument('--fmax', type=float, default=1e6)
    p.add_argument('--points', type=int, default=400)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_response)

    p = sub.add_parser('error', help='H2 / H-infinity error between two bundles')
    p.add_argument('fom')
    p.add_argument('rom')
    p.add_argument('--norm', choices=('h2', 'hinf', 'both'), default='both')
    p.add_argument('--out')
    p.set_defaults(func=cmd_error)
    return ap


def _error_json(exc):
    err = dict(error=type(exc).__name__, message=str(exc))
    if isinstance(exc, StageError):
        err.update(stage=exc.stage, cause=type(exc.cause).__name__)
    block = getattr(exc, 'block', None)
    if block is not None:
        err['block'] = block
    return err


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except (PHDAEError, CliError, ValueError, OSError) as exc:
        print(json.dumps(_error_json(exc)), file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
