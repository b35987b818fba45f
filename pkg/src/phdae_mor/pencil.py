"""Split system matrices ``s*[[E, 0], [0, Dinf]] + Gamma + W``.

Both the proper subsystem of a full-order model and the reduced system
matrix of a ROM are kept in this form: a descriptor block ``E`` (``k x k``),
an improper coefficient ``Dinf`` (``m x m``), a skew-symmetric structure
matrix ``Gamma`` and a symmetric dissipation matrix ``W`` (both
``(k+m) x (k+m)``).
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as spla

from phdae_mor import _linalg as la


@dataclass(frozen=True, eq=False)
class SystemMatrixParts:
    E: np.ndarray
    Gamma: np.ndarray
    W: np.ndarray
    Dinf: np.ndarray

    @classmethod
    def from_realization(cls, E, A, B, C, D, Dinf=None):
        """Decompose ``[[sE - A, -B], [C, D + s*Dinf]]`` into skew and symmetric parts."""
        E, A, B, C, D = (la.dense(X) for X in (E, A, B, C, D))
        m = D.shape[0]
        M0 = np.block([[-A, -B], [C, D]])
        return cls(E=la.sym(E), Gamma=la.skew(M0), W=la.sym(M0),
                   Dinf=np.zeros((m, m)) if Dinf is None else la.sym(la.dense(Dinf)))

    @classmethod
    def from_ph(cls, E, J, R, G, P, S, N, Dinf=None):
        m = S.shape[0]
        Gamma = np.block([[-J, -G], [G.T, N]])
        W = np.block([[R, P], [P.T, S]])
        return cls(E=np.asarray(E), Gamma=Gamma, W=W,
                   Dinf=np.zeros((m, m)) if Dinf is None else Dinf)

    @property
    def k(self):
        return self.E.shape[0]

    @property
    def m(self):
        return self.Dinf.shape[0]

    def _b(self, M, i, j):
        k = self.k
        rows = slice(0, k) if i == 0 else slice(k, None)
        cols = slice(0, k) if j == 0 else slice(k, None)
        return M[rows, cols]

    @property
    def J(self):
        return -self._b(self.Gamma, 0, 0)

    @property
    def G(self):
        return -self._b(self.Gamma, 0, 1)

    @property
    def N(self):
        return self._b(self.Gamma, 1, 1)

    @property
    def R(self):
        return self._b(self.W, 0, 0)

    @property
    def P(self):
        return self._b(self.W, 0, 1)

    @property
    def S(self):
        return self._b(self.W, 1, 1)

    @property
    def A(self):
        return self.J - self.R

    @property
    def B(self):
        return self.G - self.P

    @property
    def C(self):
        return (self.G + self.P).T

    @property
    def D(self):
        return self.S + self.N

    def with_(self, **kw):
        return replace(self, **kw)

    def transfer(self, s):
        """``C (sE - A)^{-1} B + D + s*Dinf`` at a scalar point."""
        X = np.linalg.solve(s * self.E - self.A, self.B) if self.k else np.zeros((0, self.m))
        return self.C @ X + self.D + s * self.Dinf

    def transfer_many(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        if self.k == 0:
            return self.D[None] + s[:, None, None] * self.Dinf[None]
        M = s[:, None, None] * self.E[None] - self.A[None]
        X = np.linalg.solve(M, np.broadcast_to(self.B.astype(complex), (len(s),) + self.B.shape))
        return self.C[None] @ X + self.D[None] + s[:, None, None] * self.Dinf[None]

    def structure_defects(self):
        """Relative skew defect of Gamma and min-eigenvalue margins of W and E."""
        g = la.maxabs(self.Gamma + self.Gamma.T) / max(1.0, la.maxabs(self.Gamma))
        wl = spla.eigvalsh(la.sym(self.W))
        wn = max(np.max(np.abs(wl)), 1e-300)
        el = spla.eigvalsh(la.sym(self.E)) if self.k else np.array([1.0])
        return dict(gamma_skew=g, W_min_eig_rel=float(wl[0] / wn), E_min_eig=float(el[0]))
