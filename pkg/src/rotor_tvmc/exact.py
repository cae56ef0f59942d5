"""Exact small-system reference in the truncated angular-momentum basis.

Per site the basis is |m>, m in [-M, M], with <theta|m> = exp(-i m theta) /
sqrt(2 pi).  Ladder operators act as L+|m> = |m+1>, L-|m> = |m-1>, truncated
so L+|M> = L-|-M> = 0, giving the bond coupling

    n_k . n_l = (L+_k L-_l + L-_k L+_l) / 2 .

Multi-indices map to flat indices with site 0 most significant, matching the
row-major grid layout used by the quadrature conversion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .ansatz.base import VariationalState
from .lattice import Lattice

DIM_GUARD = 200_000
GRID_GUARD = 10_000_000


class OracleGuardError(RuntimeError):
    """Requested basis or quadrature grid exceeds the desk-scale guard."""


@dataclass
class TruncatedBasis:
    n_sites: int
    m_cut: int = 5

    def __post_init__(self):
        if self.m_cut < 1:
            raise ValueError("m_cut must be >= 1")
        self.local_dim = 2 * self.m_cut + 1
        self.dim = self.local_dim ** self.n_sites

    def flat_index(self, m_multi) -> int:
        idx = 0
        for m in m_multi:
            if abs(m) > self.m_cut:
                raise ValueError(f"|m| > {self.m_cut}")
            idx = idx * self.local_dim + (m + self.m_cut)
        return idx

    def multi_index(self, flat: int) -> tuple[int, ...]:
        out = []
        for _ in range(self.n_sites):
            flat, rem = divmod(flat, self.local_dim)
            out.append(rem - self.m_cut)
        return tuple(reversed(out))

    def m_values(self) -> np.ndarray:
        """(dim, n_sites) array of m_k for every basis state."""
        local = np.arange(-self.m_cut, self.m_cut + 1)
        grids = np.meshgrid(*([local] * self.n_sites), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)


@dataclass
class DenseState:
    coefficients: np.ndarray
    normalized: bool = False

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def normalize(self) -> "DenseState":
        return DenseState(self.coefficients / self.norm(), normalized=True)


def _local_ladder(m_cut: int):
    d = 2 * m_cut + 1
    raise_op = sp.diags([np.ones(d - 1)], [-1], format="csr")  # |m+1><m|
    lower_op = sp.diags([np.ones(d - 1)], [1], format="csr")  # |m-1><m|
    return raise_op, lower_op


def _site_operator(basis: TruncatedBasis, site: int, local: sp.spmatrix) -> sp.spmatrix:
    d = basis.local_dim
    left = sp.identity(d ** site, format="csr")
    right = sp.identity(d ** (basis.n_sites - site - 1), format="csr")
    return sp.kron(sp.kron(left, local), right, format="csr")


def ladder_operators(basis: TruncatedBasis, site: int):
    """(L+_k, L-_k) embedded into the full truncated Hilbert space."""
    raise_loc, lower_loc = _local_ladder(basis.m_cut)
    return (
        _site_operator(basis, site, raise_loc),
        _site_operator(basis, site, lower_loc),
    )


def bond_coupling(basis: TruncatedBasis, k: int, l: int) -> sp.spmatrix:
    """n_k . n_l = (L+_k L-_l + L-_k L+_l) / 2 as a sparse matrix."""
    rk, lk = ladder_operators(basis, k)
    rl, ll = ladder_operators(basis, l)
    return 0.5 * (rk @ ll + lk @ rl)


def cos_sin_operators(basis: TruncatedBasis, site: int):
    """(cos theta_k, sin theta_k); exp(i theta) lowers m in this convention."""
    rk, lk = ladder_operators(basis, site)
    return 0.5 * (rk + lk), 0.5j * (rk - lk)


def build_hamiltonian(basis: TruncatedBasis, lattice: Lattice, g: float, J: float) -> sp.spmatrix:
    if basis.dim > DIM_GUARD:
        raise OracleGuardError(f"dim {basis.dim} exceeds guard {DIM_GUARD}")
    if basis.n_sites != lattice.n_sites:
        raise ValueError("basis and lattice disagree on site count")
    m2 = np.sum(basis.m_values() ** 2, axis=-1).astype(np.float64)
    h = sp.diags([(g * J / 2.0) * m2], [0], format="csr")
    for k, l in lattice.bonds:
        h = h - J * bond_coupling(basis, int(k), int(l))
    return h.tocsr()


def initial_product_state(basis: TruncatedBasis) -> DenseState:
    """Coherent superposition of all |theta>: the m = 0 product state."""
    c = np.zeros(basis.dim, dtype=np.complex128)
    c[basis.flat_index((0,) * basis.n_sites)] = 1.0
    return DenseState(c, normalized=True)


class ExactEvolver:
    """Unitary evolution by one dense Hermitian eigendecomposition."""

    def __init__(self, hamiltonian):
        dense = hamiltonian.toarray() if sp.issparse(hamiltonian) else np.asarray(hamiltonian)
        if dense.shape[0] > 5000:
            raise OracleGuardError(
                f"dense eigendecomposition guard: dim {dense.shape[0]} > 5000"
            )
        self.energies, self.modes = np.linalg.eigh(dense)

    def evolve(self, state: DenseState, t: float) -> DenseState:
        c = self.modes.conj().T @ state.coefficients
        c = self.modes @ (np.exp(-1j * self.energies * t) * c)
        return DenseState(c, normalized=state.normalized)


def evolve_exact(hamiltonian, state: DenseState, t: float) -> DenseState:
    return ExactEvolver(hamiltonian).evolve(state, t)


def angle_grid(q: int) -> np.ndarray:
    return -np.pi + 2.0 * np.pi * np.arange(q) / q


def evaluate_on_grid(state: VariationalState, q: int, chunk_size: int = 8192):
    """psi on the uniform product grid, shape (q,) * N, scaled by exp(-shift).

    Returns (tensor, shift) with shift = max Re ln psi, so the caller can undo
    the overall scale when it matters (it cancels in normalized quantities).
    """
    n = state.n_sites
    if q ** n > GRID_GUARD:
        raise OracleGuardError(f"grid size {q}^{n} exceeds guard {GRID_GUARD}")
    grid = angle_grid(q)
    meshes = np.meshgrid(*([grid] * n), indexing="ij")
    points = np.stack([m.ravel() for m in meshes], axis=-1)
    logs = np.empty(points.shape[0], dtype=np.complex128)
    for lo in range(0, points.shape[0], chunk_size):
        logs[lo : lo + chunk_size] = state.log_psi(points[lo : lo + chunk_size])
    shift = float(np.max(np.real(logs)))
    return np.exp(logs - shift).reshape((q,) * n), shift


def vqs_to_dense(state: VariationalState, basis: TruncatedBasis, q: int | None = None):
    """Project a variational state onto the truncated basis by grid Fourier sums.

    c_m = (2 pi)^(-N/2) Int dtheta psi(theta) exp(+i m . theta), evaluated with
    q uniform points per site (exact up to aliasing beyond the grid band).
    Returns (DenseState normalized, aliasing_mass) where aliasing_mass is the
    squared-amplitude fraction carried by the top grid Fourier shell.
    """
    n = state.n_sites
    if q is None:
        q = max(2 * basis.m_cut + 1, 16)
    if q < 2 * basis.m_cut + 1:
        raise ValueError("need q >= 2 m_cut + 1 grid points per site")
    tensor, _ = evaluate_on_grid(state, q)
    # q * ifft gives sum_j psi_j exp(+2 pi i m j / q); the grid starts at -pi,
    # which contributes the (-1)^m phase per axis.
    for axis in range(n):
        tensor = q * np.fft.ifft(tensor, axis=axis)
    power = np.abs(tensor) ** 2
    total = float(np.sum(power))
    top = q // 2
    alias_mass = 0.0
    if total > 0:
        any_top = np.zeros(tensor.shape, dtype=bool)
        for axis in range(n):
            modes = np.fft.fftfreq(q, d=1.0 / q).astype(int)
            sel = np.abs(modes) >= top
            shape = [1] * n
            shape[axis] = q
            any_top |= sel.reshape(shape)
        alias_mass = float(np.sum(power[any_top]) / total)

    m_local = np.arange(-basis.m_cut, basis.m_cut + 1)
    take = np.mod(m_local, q)
    phase = (-1.0) ** np.abs(m_local)
    coeff = tensor
    for axis in range(n):
        coeff = np.take(coeff, take, axis=axis)
        shape = [1] * n
        shape[axis] = basis.local_dim
        coeff = coeff * phase.reshape(shape)
    c = coeff.ravel()
    norm = np.linalg.norm(c)
    if norm == 0:
        raise ValueError("variational state projects to the zero vector")
    return DenseState(c / norm, normalized=True), alias_mass


def expectation(op, state: DenseState) -> complex:
    c = state.coefficients
    return complex(c.conj() @ (op @ c)) / float(np.real(c.conj() @ c))


def exact_observables(state: DenseState, basis: TruncatedBasis, lattice: Lattice,
                      J: float = 1.0) -> dict:
    """Potential energy density, magnetization components and circular variance."""
    e_bonds = sum(
        np.real(expectation(bond_coupling(basis, int(k), int(l)), state))
        for k, l in lattice.bonds
    )
    n = lattice.n_sites
    mx_sites, my_sites = [], []
    for k in range(n):
        cos_op, sin_op = cos_sin_operators(basis, k)
        mx_sites.append(np.real(expectation(cos_op, state)))
        my_sites.append(np.real(expectation(sin_op, state)))
    mx, my = float(np.mean(mx_sites)), float(np.mean(my_sites))
    resultants = np.hypot(mx_sites, my_sites)
    with np.errstate(divide="ignore"):
        var_sites = -2.0 * np.log(resultants)
    return {
        "e_pot": -J * e_bonds / n,
        "mag_x": mx,
        "mag_y": my,
        "var_mean": float(np.mean(var_sites)),
    }


def exact_fidelity(a: DenseState, b: DenseState) -> float:
    ca = a.coefficients / np.linalg.norm(a.coefficients)
    cb = b.coefficients / np.linalg.norm(b.coefficients)
    return float(np.abs(ca.conj() @ cb) ** 2)


def dense_magnetization_quadrature(state: DenseState, basis: TruncatedBasis, q: int = 32) -> float:
    """Eq.-17-style magnetization (modulus inside the average) via a theta grid."""
    n = basis.n_sites
    if q ** n > GRID_GUARD:
        raise OracleGuardError(f"grid size {q}^{n} exceeds guard {GRID_GUARD}")
    c = state.coefficients.reshape((basis.local_dim,) * n)
    # psi(theta_j) on the grid is an inverse transform of the coefficients
    grid = angle_grid(q)
    m_local = np.arange(-basis.m_cut, basis.m_cut + 1)
    dft = np.exp(-1j * np.outer(grid, m_local))  # <theta|m> up to 1/sqrt(2 pi)
    psi = c
    for axis in range(n):
        psi = np.tensordot(dft, psi, axes=(1, axis))
        psi = np.moveaxis(psi, 0, axis)
    prob = np.abs(psi.ravel()) ** 2
    prob /= prob.sum()
    meshes = np.meshgrid(*([grid] * n), indexing="ij")
    thetas = np.stack([m.ravel() for m in meshes], axis=-1)
    resultant = np.hypot(
        np.sum(np.cos(thetas), axis=-1), np.sum(np.sin(thetas), axis=-1)
    )
    return float(np.sum(prob * resultant) / n)
