"""Sigma plots of the two ladder variants and their reduced models as CSV.

Writes ``<variant>_fom.csv`` and ``<variant>_r<order>.csv`` with the columns
``omega, Re/Im H_ij, sigma_max`` to the output directory; plot the last
column against the first on log-log axes.

    python demos/sigma_response.py --out /tmp/sigma
"""

import argparse
from pathlib import Path

from phdae_mor import IrkaOptions, frequency_grid, generate_rcl_ladder, irka_ph, sigma_response


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument('--out', default='sigma')
    ap.add_argument('--cells', type=int, default=200)
    ap.add_argument('--order', type=int, default=10)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = frequency_grid(1e-4, 1e4, 300)
    for variant in ('index1', 'index12'):
        fom = generate_rcl_ladder(args.cells, variant=variant)
        rom, _ = irka_ph(fom, opts=IrkaOptions(r=args.order))
        for tag, model in (('fom', fom), (f'r{args.order}', rom)):
            resp = sigma_response(model, grid)
            resp.to_csv(out / f'{variant}_{tag}.csv')
            print(f'{variant:8s} {tag:4s} sigma_max at 1e-4: {resp.sigma[0]:.3e}, '
                  f'at 1e4: {resp.sigma[-1]:.3e}')


if __name__ == '__main__':
    main()
