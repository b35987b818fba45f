"""Why the reduction works on the original sparse blocks.

For an index-1 system the proper state matrix Ap = A22 - A23 A33^{-1} A32
is dense although every block of A is banded. Shifted solves with the
sparse staircase matrix are therefore far cheaper than solves with Ap.

    python demos/sparsity.py [--n 4000]
"""

import argparse
import time

import numpy as np

from phdae_mor import GeneratorSpec, extract_proper, generate_staircase
from phdae_mor.interpolation import shifted_solve
from phdae_mor.staircase import assemble_operator_blocks


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument('--n', type=int, default=4000)
    ap.add_argument('--solves', type=int, default=20)
    args = ap.parse_args()
    half = args.n // 2
    fom = generate_staircase(GeneratorSpec('index-1', dims=(0, half, args.n - half, 0),
                                           sparse=True, seed=0))
    print(f'{fom!r}: nnz(E) = {fom.E.nnz}, nnz(J) = {fom.J.nnz}, nnz(R) = {fom.R.nnz}')

    t = time.perf_counter()
    Ap = extract_proper(fom, materialize=False).Ap.toarray()
    fill = np.count_nonzero(np.abs(Ap) > 1e-14) / Ap.size
    print(f'assembling Ap took {time.perf_counter() - t:.2f} s; fill {100 * fill:.1f} %')

    rng = np.random.default_rng(1)
    shifts = rng.uniform(0.1, 1, args.solves) + 1j * rng.uniform(-10, 10, args.solves)
    blocks = assemble_operator_blocks(fom)
    t = time.perf_counter()
    for s in shifts:
        shifted_solve(blocks, s, fom.G - fom.P, check=False)
    sparse = (time.perf_counter() - t) / len(shifts)
    p = extract_proper(fom, materialize=False)
    Ep = p.Ep.toarray()
    t = time.perf_counter()
    for s in shifts[:2]:
        np.linalg.solve(s * Ep - Ap, p.Bp.astype(complex))
    dense = (time.perf_counter() - t) / 2
    print(f'shifted solve: sparse blocks {1e3 * sparse:.1f} ms, dense Ap {1e3 * dense:.0f} ms '
          f'({dense / sparse:.0f}x)')


if __name__ == '__main__':
    main()
