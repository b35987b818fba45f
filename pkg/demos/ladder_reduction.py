"""Reduce an RCL ladder with an index-2 part and compare methods.

The ladder is driven by a voltage source with a parallel capacitor, so its
transfer function grows like omega at high frequency. The reduced models
keep that improper part exactly and approximate the proper part.

    python demos/ladder_reduction.py [--cells 500]
"""

import argparse
import logging
import time

from phdae_mor import (IhaOptions, IrkaOptions, generate_rcl_ladder, h2_error, hinf_error,
                       iha_ph, irka_ph, validate_staircase)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument('--cells', type=int, default=500)
    ap.add_argument('--orders', type=int, nargs='+', default=[2, 6, 10, 14, 20])
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)

    fom = generate_rcl_ladder(args.cells, variant='index12')
    print(f'full model: {fom!r}, n = {fom.n}')
    print(f'{"r":>3} {"H2 error":>11} {"Hinf error":>11} {"iters":>6} {"time":>7}')
    for r in args.orders:
        t = time.perf_counter()
        rom, hist = irka_ph(fom, opts=IrkaOptions(r=r))
        h2 = float(h2_error(fom, rom))
        hinf = hinf_error(fom, rom)[0]
        print(f'{r:>3} {h2:11.3e} {hinf:11.3e} {len(hist):6d} {time.perf_counter() - t:6.1f}s')

    print('\nminimal KYP solution in the left projection (r = 10):')
    std, _ = irka_ph(fom, opts=IrkaOptions(r=10))
    alt, _ = irka_ph(fom, opts=IrkaOptions(r=10, kyp_minus=True))
    for name, rom in (('identity', std), ('minimal', alt)):
        print(f'  {name:9s} H2 {float(h2_error(fom, rom)):.3e}  Hinf {hinf_error(fom, rom)[0]:.3e}')

    print('\nfeedthrough tuning (r = 18):')
    base, _ = irka_ph(fom, opts=IrkaOptions(r=18))
    tuned = iha_ph(fom, data=base.provenance['data'], opts=IhaOptions(max_evals=80))
    p = tuned.provenance
    print(f'  sampled Hinf error {p["objective_initial"]:.3e} -> {p["objective"]:.3e}, '
          f'theta = {p["theta"]}')
    print(f'  H2 error of the tuned model: {h2_error(fom, tuned)}')
    print(f'  tuned model valid: {validate_staircase(tuned).valid}')


if __name__ == '__main__':
    main()
