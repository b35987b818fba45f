"""Benchmark model generation.

`generate_staircase` draws random banded staircase systems in each of the
six categories (index 0, index 1, proper/improper index 2, proper/improper
index 1+2). `generate_rcl_ladder` assembles RCL ladder networks with
modified nodal analysis and orders the unknowns so that the result is in
staircase form.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from phdae_mor.errors import StructuralError
from phdae_mor.staircase import StaircaseSystem

CATEGORIES = ('index-0', 'index-1', 'proper-index-2', 'improper-index-2',
              'proper-index-1-2', 'improper-index-1-2')


@dataclass
class GeneratorSpec:
    """Parameters of a random staircase system.

    `dims` is ``(n1, n2, n3, n4)``; when omitted it is derived from `n`
    and the category.
    """

    category: str
    dims: tuple = None
    m: int = 1
    seed: int = 0
    n: int = 20
    bandwidth: int = 2
    sparse: bool = None
    dissipation: float = 1.0
    feedthrough: bool = True
    extra: dict = field(default_factory=dict)

    def resolved_dims(self):
        if self.category not in CATEGORIES:
            raise StructuralError(f'unknown category {self.category!r}; expected one of {CATEGORIES}')
        if self.dims is not None:
            dims = tuple(int(d) for d in self.dims)
        else:
            n = self.n
            if self.category == 'index-0':
                dims = (0, n, 0, 0)
            elif self.category == 'index-1':
                dims = (0, n - n // 3, n // 3, 0)
            elif self.category.endswith('-index-2'):
                k = max(1, n // 10)
                dims = (k, n - 2 * k, 0, k)
            else:
                k = max(1, n // 10)
                n3 = max(1, n // 4)
                dims = (k, n - 2 * k - n3, n3, k)
        n1, n2, n3, n4 = dims
        cat = self.category
        ok = n1 == n4 and n2 > 0
        if cat == 'index-0':
            ok &= n1 == 0 and n3 == 0
        elif cat == 'index-1':
            ok &= n1 == 0 and n3 > 0
        elif cat.endswith('-index-2'):
            ok &= n1 > 0 and n3 == 0
        else:
            ok &= n1 > 0 and n3 > 0
        if cat.startswith('improper') and self.m < 1:
            ok = False
        if not ok:
            raise StructuralError(f'dims {dims} are inconsistent with category {cat!r}')
        return dims


def _banded(rng, n, bw, sparse):
    """Random banded matrix with bandwidth `bw` (entries in [-1, 1])."""
    if n == 0:
        return sps.csr_array((0, 0)) if sparse else np.zeros((0, 0))
    offsets = [k for k in range(-bw, bw + 1) if abs(k) < n]
    diags = [rng.uniform(-1, 1, n - abs(k)) for k in offsets]
    M = sps.diags(diags, offsets, shape=(n, n), format='csr')
    return sps.csr_array(M) if sparse else M.toarray()


def _coupling(rng, nr, nc, bw):
    """Random ``nr x nc`` matrix banded around the scaled diagonal ``j ~ i nc / nr``."""
    if nr == 0 or nc == 0:
        return sps.csr_array((nr, nc))
    rows, cols = [], []
    for i in range(nr):
        c = int(round(i * (nc - 1) / max(nr - 1, 1)))
        for j in range(max(0, c - bw), min(nc, c + bw + 1)):
            rows.append(i)
            cols.append(j)
    vals = rng.uniform(-1, 1, len(rows))
    return sps.csr_array((vals, (rows, cols)), shape=(nr, nc))


def _spd_banded(rng, n, bw, sparse):
    B = _banded(rng, n, bw, True)
    B = (B + B.T) / 2
    B = sps.csr_array(B - sps.diags(B.diagonal()))
    rowsum = np.asarray(abs(B).sum(axis=1)).ravel()
    M = B + sps.diags(rowsum + rng.uniform(0.5, 1.5, n))
    return sps.csr_array(M) if sparse else M.toarray()


def generate_staircase(spec):
    """Draw a random valid staircase pH-DAE.

    The construction guarantees every invariant: banded diagonally
    dominant ``E11, E22``; banded skew ``J`` with the staircase zero
    pattern and ``J41 = I + small``; ``R = L L^T + shift`` on the first
    three groups; ``P = L Z S^{1/2}`` with ``||Z||_2 < 1`` so that the
    dissipation matrix is PSD. Output is deterministic in ``spec.seed``.
    """
    n1, n2, n3, n4 = spec.resolved_dims()
    m = spec.m
    n123 = n1 + n2 + n3
    n = n123 + n4
    sparse = spec.sparse if spec.sparse is not None else n > 500
    rng = np.random.default_rng(spec.seed)
    bw = spec.bandwidth

    E11 = _spd_banded(rng, n1, bw, True)
    E22 = _spd_banded(rng, n2, bw, True)
    E = sps.block_diag([E11, E22, sps.csr_array((n3 + n4, n3 + n4))], format='csr')

    K = _banded(rng, n123, bw, True)
    # banded couplings between the groups, so that eliminating group 3 fills in Ap
    sizes = (n1, n2, n3)
    C = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(i + 1, 3):
            C[i][j] = _coupling(rng, sizes[i], sizes[j], bw)
    for i in range(3):
        C[i][i] = sps.csr_array((sizes[i], sizes[i]))
        for j in range(i):
            C[i][j] = sps.csr_array((sizes[i], sizes[j]))
    K = K + sps.block_array(C, format='csr')
    J123 = sps.csr_array(K - K.T)
    J41 = sps.identity(n1) + 0.3 * _banded(rng, n1, min(bw, 1), True) / max(1, 2 * min(bw, 1) + 1)
    J = sps.bmat([[J123, sps.vstack([-J41.T, sps.csr_array((n2 + n3, n4))]) if n4 else None],
                  [sps.hstack([J41, sps.csr_array((n4, n2 + n3))]) if n4 else None, None]],
                 format='csr') if n4 else J123

    # R = L L^T with L lower banded and nonsingular, scaled; shift on group 3
    L = sps.tril(_banded(rng, n123, bw, True), format='csr')
    L = L - sps.diags(L.diagonal()) + sps.diags(rng.uniform(0.5, 1.0, n123))
    L = spec.dissipation * L / np.sqrt(max(1, bw + 1))
    R123 = sps.csr_array(L @ L.T)
    if n3:
        R123 = R123 + sps.diags(np.r_[np.zeros(n1 + n2), np.full(n3, 0.5)])
    R = sps.block_diag([R123, sps.csr_array((n4, n4))], format='csr') if n4 else sps.csr_array(R123)

    G = rng.standard_normal((n, m))
    if spec.category.startswith('proper') and n4:
        G[n123:] = 0.0
    if spec.feedthrough:
        M_ = rng.standard_normal((m, m))
        S = M_ @ M_.T / m + 0.5 * np.eye(m)
        Nh = rng.standard_normal((m, m))
        N = (Nh - Nh.T) / 2
        Z = rng.standard_normal((n123, m))
        Z *= 0.5 / max(np.linalg.norm(Z, 2), 1e-300)
        w, U = np.linalg.eigh(S)
        S_half = U @ np.diag(np.sqrt(w)) @ U.T
        P = np.zeros((n, m))
        P[:n123] = L @ Z @ S_half
    else:
        S = np.zeros((m, m))
        N = np.zeros((m, m))
        P = np.zeros((n, m))

    conv = (lambda X: sps.csr_array(X)) if sparse else (lambda X: X.toarray())
    return StaircaseSystem(n1, n2, n3, n4, m, conv(E), conv(J), conv(R), G, P, S, N,
                           name=f'{spec.category}-seed{spec.seed}')


# ---------------------------------------------------------------------------
# RCL ladders
# ---------------------------------------------------------------------------

@dataclass
class LadderParams:
    """Element values of one ladder cell (SI units)."""

    C: float = 1.0
    L: float = 1.0
    R: float = 1.0
    R_in: float = 1.0
    R_load: float = 1.0
    R_shunt: float = None
    C_source: float = 1.0

    def check(self):
        for k, v in vars(self).items():
            if v is not None and not v > 0:
                raise ValueError(f'ladder parameter {k} must be positive, got {v}')


def mna_staircase(n_nodes, capacitors, inductors, resistors, current_ports=(),
                  voltage_ports=(), name=''):
    """Assemble a pH-DAE in staircase form from an RCL netlist.

    Nodes are numbered ``0..n_nodes-1``; ``-1`` is ground. Capacitors are
    ``(node, C)`` to ground, inductors and resistors ``(a, b, value)``.
    Current-source ports inject into a node and measure its potential.
    Voltage-source ports ``node`` fix a node potential (the node must carry
    a capacitor) and measure the source current.

    Unknown ordering: voltage-port node potentials (group 1), capacitive
    node potentials and inductor currents (group 2), remaining node
    potentials (group 3), voltage-source currents (group 4).
    """
    cap = np.zeros(n_nodes)
    for node, c in capacitors:
        cap[node] += c
    vnodes = list(voltage_ports)
    if any(cap[v] <= 0 for v in vnodes):
        raise StructuralError('voltage-source nodes need a grounded capacitor')
    cnodes = [k for k in range(n_nodes) if cap[k] > 0 and k not in vnodes]
    anodes = [k for k in range(n_nodes) if cap[k] <= 0]
    nL = len(inductors)
    n1, n3, n4 = len(vnodes), len(anodes), len(vnodes)
    n2 = len(cnodes) + nL
    n = n1 + n2 + n3 + n4
    pos = {}
    for i, k in enumerate(vnodes):
        pos[k] = i
    for i, k in enumerate(cnodes):
        pos[k] = n1 + i
    for i, k in enumerate(anodes):
        pos[k] = n1 + n2 + i
    lpos = [n1 + len(cnodes) + j for j in range(nL)]
    spos = [n1 + n2 + n3 + j for j in range(n4)]

    E = sps.lil_array((n, n))
    J = sps.lil_array((n, n))
    R = sps.lil_array((n, n))
    for k in range(n_nodes):
        if cap[k] > 0:
            E[pos[k], pos[k]] = cap[k]
    for j, (a, b, Lval) in enumerate(inductors):
        E[lpos[j], lpos[j]] = Lval
        for node, sign in ((a, 1.0), (b, -1.0)):
            if node >= 0:
                # current leaves node a and enters node b
                J[pos[node], lpos[j]] += -sign
                J[lpos[j], pos[node]] += sign
    for a, b, Rval in resistors:
        g = 1.0 / Rval
        for x in (a, b):
            if x >= 0:
                R[pos[x], pos[x]] += g
        if a >= 0 and b >= 0:
            R[pos[a], pos[b]] -= g
            R[pos[b], pos[a]] -= g
    for j, node in enumerate(vnodes):
        # source current enters the node; constraint 0 = -v + u
        J[pos[node], spos[j]] = 1.0
        J[spos[j], pos[node]] = -1.0
    m = len(current_ports) + len(vnodes)
    G = np.zeros((n, m))
    for j, node in enumerate(current_ports):
        G[pos[node], j] = 1.0
    for j in range(n4):
        G[spos[j], len(current_ports) + j] = 1.0
    return StaircaseSystem(n1, n2, n3, n4, m, sps.csr_array(E), sps.csr_array(J),
                           sps.csr_array(R), G, np.zeros((n, m)), np.zeros((m, m)),
                           np.zeros((m, m)), name=name)


def generate_rcl_ladder(cells, params=None, variant='index1'):
    """RCL ladder network in staircase form.

    Each cell consists of a grounded capacitor node, a series inductor to
    an internal node without capacitance and a series resistor to the next
    cell. ``variant='index1'`` is driven by current sources at both ends
    (``m = 2``, dims ``(0, 2c, c+1, 0)``, bounded gain at high frequency).
    ``variant='index12'`` is driven by a voltage source in parallel with a
    capacitor at the input (``m = 1``, dims ``(1, 2c, c, 1)``, ``Dinf`` is
    the source capacitance, gain grows like ``omega``).
    """
    if cells < 1:
        raise ValueError('cells must be >= 1')
    p = params or LadderParams()
    p.check()
    c = cells
    if variant == 'index1':
        # nodes: a0 = 0, v_k = 2k-1, a_k = 2k (k = 1..c)
        v = lambda k: 2 * k - 1  # noqa: E731
        a = lambda k: 2 * k  # noqa: E731
        n_nodes = 2 * c + 1
        capacitors = [(v(k), p.C) for k in range(1, c + 1)]
        inductors = [(v(k), a(k), p.L) for k in range(1, c + 1)]
        resistors = [(0, v(1), p.R_in)]
        resistors += [(a(k), v(k + 1), p.R) for k in range(1, c)]
        resistors += [(a(c), -1, p.R_load)]
        if p.R_shunt:
            resistors += [(v(k), -1, p.R_shunt) for k in range(1, c + 1)]
        return mna_staircase(n_nodes, capacitors, inductors, resistors,
                             current_ports=(0, a(c)), name=f'rcl-ladder-index1-{c}')
    if variant == 'index12':
        # nodes: source node 0, v_k = 2k-1, a_k = 2k
        v = lambda k: 2 * k - 1  # noqa: E731
        a = lambda k: 2 * k  # noqa: E731
        n_nodes = 2 * c + 1
        capacitors = [(0, p.C_source)] + [(v(k), p.C) for k in range(1, c + 1)]
        inductors = [(v(k), a(k), p.L) for k in range(1, c + 1)]
        resistors = [(0, v(1), p.R_in)]
        resistors += [(a(k), v(k + 1), p.R) for k in range(1, c)]
        resistors += [(a(c), -1, p.R_load)]
        if p.R_shunt:
            resistors += [(v(k), -1, p.R_shunt) for k in range(1, c + 1)]
        return mna_staircase(n_nodes, capacitors, inductors, resistors,
                             voltage_ports=(0,), name=f'rcl-ladder-index12-{c}')
    raise ValueError(f"unknown ladder variant {variant!r} (use 'index1' or 'index12')")
