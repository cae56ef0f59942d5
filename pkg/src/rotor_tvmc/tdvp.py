"""Quantum geometric tensor estimation and the regularized TDVP right-hand side.

The geometric tensor S and force vector g are centered covariances of the
parameter log-derivatives O over |psi|^2-distributed configurations:

    S_mn = <O_m^* O_n> - <O_m^*><O_n>,   g_m = <O_m^* E_L> - <O_m^*><E_L> .

The regularized pseudoinverse keeps the smooth spectral filter
f(s) = 1 / (1 + (lambda^2 / s)^6) applied eigenvalue by eigenvalue.
Monte Carlo averages use the 1/n convention throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ansatz.base import VariationalState

CUTOFF_EXPONENT = 6


class TdvpError(RuntimeError):
    pass


@dataclass
class QgtEstimate:
    s_matrix: np.ndarray  # (P, P) Hermitian
    gvec: np.ndarray  # (P,)
    e_mean: complex
    e_var: float  # <|E_L - <E_L>|^2| >= 0
    n_samples: int


@dataclass
class RegularizationPolicy:
    """Adaptive spectral cutoff: lambda^2 = max(a_c, r_c * max eigenvalue)."""

    a_c: float = 1e-4
    r_c: float = 1e-2

    def __post_init__(self):
        if self.a_c <= 0 or self.r_c <= 0:
            raise ValueError("regularization floors must be positive")


@dataclass
class RegularizedInverse:
    eigenvectors: np.ndarray
    spectrum: np.ndarray  # clamped eigenvalues, ascending
    inv_diag: np.ndarray  # f(s)/s per eigenvalue
    rho: float  # effective rank sum f(s)
    lambda2: float

    def apply(self, x: np.ndarray) -> np.ndarray:
        u = self.eigenvectors
        x_hat = u.conj().T @ x
        scale = self.inv_diag.reshape(-1, *([1] * (x_hat.ndim - 1)))
        return u @ (scale * x_hat)


def estimate_qgt(state: VariationalState, samples: np.ndarray, g: float, J: float,
                 weights: np.ndarray | None = None,
                 chunk_size: int = 512) -> QgtEstimate:
    """Sampled (or quadrature-weighted) covariance estimate of S, g and Var H.

    ``weights`` defaults to uniform 1/n; a quadrature caller passes the
    normalized |psi|^2 grid weights instead.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n = samples.shape[0]
    if n < 2:
        raise TdvpError("need at least 2 samples to estimate covariances")
    if weights is None:
        weights = np.full(n, 1.0 / n)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        weights = weights / np.sum(weights)

    p = state.n_params
    o_mean = np.zeros(p, dtype=np.complex128)
    e_mean = 0.0 + 0.0j
    s_raw = np.zeros((p, p), dtype=np.complex128)
    ge_raw = np.zeros(p, dtype=np.complex128)
    e2_raw = 0.0

    # two passes in chunks: means first, then centered second moments
    o_chunks, e_chunks = [], []
    for lo in range(0, n, chunk_size):
        sl = slice(lo, min(lo + chunk_size, n))
        o = state.log_derivatives(samples[sl])
        e = state.local_energy(samples[sl], g, J)
        o_chunks.append(o)
        e_chunks.append(e)
        o_mean += weights[sl] @ o
        e_mean += weights[sl] @ e
    for (lo, o, e) in zip(range(0, n, chunk_size), o_chunks, e_chunks):
        sl = slice(lo, lo + o.shape[0])
        oc = o - o_mean
        ec = e - e_mean
        s_raw += (weights[sl, None] * oc).conj().T @ oc
        ge_raw += oc.conj().T @ (weights[sl] * ec)
        e2_raw += weights[sl] @ np.abs(ec) ** 2

    s_matrix = 0.5 * (s_raw + s_raw.conj().T)
    return QgtEstimate(
        s_matrix=s_matrix,
        gvec=ge_raw,
        e_mean=complex(e_mean),
        e_var=float(e2_raw),
        n_samples=n,
    )


def spectral_filter(spectrum: np.ndarray, lambda2: float) -> np.ndarray:
    """f(s) = 1 / (1 + (lambda^2/s)^6), with f(0) = 0."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    out = np.zeros_like(spectrum)
    pos = spectrum > 0
    out[pos] = 1.0 / (1.0 + (lambda2 / spectrum[pos]) ** CUTOFF_EXPONENT)
    return out


def adaptive_lambda(spectrum: np.ndarray, policy: RegularizationPolicy) -> float:
    spectrum = np.asarray(spectrum, dtype=np.float64)
    if spectrum.size == 0:
        raise TdvpError("empty spectrum")
    return max(policy.a_c, policy.r_c * float(np.max(spectrum)))


def regularized_pseudoinverse(s_matrix: np.ndarray, lambda2: float) -> RegularizedInverse:
    """Hermitian eigendecomposition with the smooth cutoff applied.

    Negative eigenvalues (Monte Carlo noise) are clamped to zero and excluded
    from both the inverse and the effective rank.
    """
    try:
        spectrum, u = np.linalg.eigh(s_matrix)
    except np.linalg.LinAlgError as exc:
        raise TdvpError(f"eigendecomposition failed: {exc}") from exc
    spectrum = np.where(spectrum > 0, spectrum, 0.0)
    f = spectral_filter(spectrum, lambda2)
    inv_diag = np.zeros_like(spectrum)
    pos = spectrum > 0
    inv_diag[pos] = f[pos] / spectrum[pos]
    return RegularizedInverse(
        eigenvectors=u,
        spectrum=spectrum,
        inv_diag=inv_diag,
        rho=float(np.sum(f)),
        lambda2=float(lambda2),
    )


def effective_rank(spectrum: np.ndarray, lambda2: float) -> float:
    return float(np.sum(spectral_filter(spectrum, lambda2)))


def tdvp_rhs(qgt: QgtEstimate, policy: RegularizationPolicy, mode: str):
    """Parameter velocity: -i S^-1 g in real time, -S^-1 g in imaginary time.

    Returns (alpha_dot, RegularizedInverse) so callers can log the spectrum,
    lambda^2 and effective rank, and reuse the solve for the r^2 residual.
    """
    if mode not in ("real", "imag"):
        raise ValueError(f"mode must be 'real' or 'imag', got {mode!r}")
    spectrum = np.linalg.eigvalsh(qgt.s_matrix)
    lambda2 = adaptive_lambda(np.where(spectrum > 0, spectrum, 0.0), policy)
    pinv = regularized_pseudoinverse(qgt.s_matrix, lambda2)
    solution = pinv.apply(qgt.gvec)
    alpha_dot = -1j * solution if mode == "real" else -solution
    return alpha_dot, pinv


def residual_r2(qgt: QgtEstimate, pinv: RegularizedInverse):
    """Single-step projection residual r^2 = 1 - g^dag S^-1 g / Var H.

    Clamped to [0, 1]; the boolean flag reports whether clamping fired.
    Defined as 0 when Var H vanishes (exact eigenstate).
    """
    if qgt.e_var <= 0:
        return 0.0, False
    raw = 1.0 - float(np.real(qgt.gvec.conj() @ pinv.apply(qgt.gvec))) / qgt.e_var
    clamped = min(1.0, max(0.0, raw))
    return clamped, clamped != raw
