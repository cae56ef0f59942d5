"""Pairwise Jastrow wavefunction: ln psi = sum_{i<j} w_ij cos(theta_i - theta_j)."""

from __future__ import annotations

import numpy as np

from ..lattice import Lattice
from .base import VariationalState


class Jastrow(VariationalState):
    """One complex parameter per unordered site pair, lexicographic (i<j) order."""

    kind = "jastrow"

    def __init__(self, lattice: Lattice, alpha=None):
        n = lattice.n_sites
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        self.pair_i = np.array([p[0] for p in pairs], dtype=np.int64)
        self.pair_j = np.array([p[1] for p in pairs], dtype=np.int64)
        n_pairs = len(pairs)
        if alpha is None:
            alpha = np.zeros(n_pairs, dtype=np.complex128)
        super().__init__(lattice, alpha, [("w", (n_pairs,))])
        # one-hot pair-to-site incidence used to accumulate angle derivatives
        self._inc_i = np.zeros((n_pairs, n), dtype=np.float64)
        self._inc_j = np.zeros((n_pairs, n), dtype=np.float64)
        self._inc_i[np.arange(n_pairs), self.pair_i] = 1.0
        self._inc_j[np.arange(n_pairs), self.pair_j] = 1.0

    def _pair_diffs(self, theta):
        return theta[:, self.pair_i] - theta[:, self.pair_j]

    def _log_psi(self, theta):
        return np.cos(self._pair_diffs(theta)) @ self.alpha

    def _log_derivatives(self, theta):
        return np.cos(self._pair_diffs(theta)).astype(np.complex128)

    def _angle_derivatives(self, theta):
        d = self._pair_diffs(theta)
        cos_d = np.cos(d)
        w = self.alpha
        logpsi = cos_d @ w
        ws = w * np.sin(d)
        wc = w * cos_d
        d1 = -ws @ self._inc_i + ws @ self._inc_j
        d2 = -wc @ (self._inc_i + self._inc_j)
        return logpsi, d1, d2
