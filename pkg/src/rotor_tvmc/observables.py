"""Physical measurements over sampled rotor configurations.

Sample arrays are either flat (n_samples, n_sites) or chain-resolved
(n_chains, n_draws, n_sites).  Error bars always come from bootstrap
resampling; when the chain structure is available whole chains are resampled
(block bootstrap) to respect autocorrelation, otherwise draws are treated as
independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ansatz.base import VariationalState
from .lattice import Lattice, wrap_angle

DEFAULT_RESAMPLES = 200
_LOG_UNDERFLOW = -700.0


def _flatten(samples):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 2:
        return samples, None
    if samples.ndim == 3:
        return samples.reshape(-1, samples.shape[-1]), samples.shape[:2]
    raise ValueError("samples must have 2 or 3 dimensions")


def bootstrap_sigma(values, n_resamples: int = DEFAULT_RESAMPLES,
                    rng: np.random.Generator | None = None) -> float:
    """Standard deviation of the resampled mean.

    1D input: i.i.d. bootstrap over entries.  2D input (chains, draws):
    chains are resampled whole.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim not in (1, 2) or values.shape[0] < 2:
        raise ValueError("need >= 2 values (or >= 2 chains)")
    if rng is None:
        rng = np.random.default_rng(20240817)
    n = values.shape[0]
    picks = rng.integers(0, n, size=(n_resamples, n))
    means = values[picks].mean(axis=tuple(range(1, values.ndim + 1)))
    return float(np.std(means))


def _mean_and_sigma(per_sample, chain_shape, n_resamples, rng):
    value = float(np.mean(per_sample))
    if chain_shape is not None:
        per_sample = np.reshape(per_sample, chain_shape)
    sigma = bootstrap_sigma(per_sample, n_resamples, rng)
    return value, sigma


def potential_energy_density(samples, lattice: Lattice, J: float,
                             n_resamples: int = DEFAULT_RESAMPLES, rng=None):
    """eps_p = -(J/N) < sum_bonds cos(theta_k - theta_l) >, with bootstrap sigma."""
    flat, chain_shape = _flatten(samples)
    bk, bl = lattice.bonds[:, 0], lattice.bonds[:, 1]
    per_sample = -(J / lattice.n_sites) * np.sum(
        np.cos(flat[:, bk] - flat[:, bl]), axis=-1
    )
    return _mean_and_sigma(per_sample, chain_shape, n_resamples, rng)


def magnetization(samples, n_resamples: int = DEFAULT_RESAMPLES, rng=None):
    """Returns (M, M_x, M_y, sigma_M).

    M keeps the modulus inside the sample average (per-sample resultant length
    over N); the components average the unit vectors first.  The two
    definitions are deliberately kept distinct and never interconverted.
    """
    flat, chain_shape = _flatten(samples)
    n = flat.shape[1]
    cos_t, sin_t = np.cos(flat), np.sin(flat)
    per_sample = np.hypot(np.sum(cos_t, axis=1), np.sum(sin_t, axis=1)) / n
    m, sigma = _mean_and_sigma(per_sample, chain_shape, n_resamples, rng)
    return m, float(np.mean(cos_t)), float(np.mean(sin_t)), sigma


def circular_variance_mean(samples) -> float:
    """Lattice average of the per-site circular variance -2 ln |<n_k>|."""
    from .lattice import circular_site_stats

    flat, _ = _flatten(samples)
    _, _, variance = circular_site_stats(flat)
    return float(np.mean(variance))


def vorticity(samples, lattice: Lattice, ell: int,
              n_resamples: int = DEFAULT_RESAMPLES, rng=None):
    """Average plaquette circulation v_ell with minimal-image edge differences.

    Per loop, v(A) = (1/ell^2) * sum over directed boundary edges of the
    wrapped angle difference; averaged over all ell x ell loops, then samples.
    """
    if lattice.ndim != 2:
        raise ValueError("vorticity requires a 2D lattice")
    loops = lattice.plaquettes(ell)
    if loops.shape[0] == 0:
        raise ValueError(f"no {ell}x{ell} plaquettes on this lattice")
    flat, chain_shape = _flatten(samples)
    cur = flat[:, loops]  # (B, n_loops, 4*ell)
    nxt = np.roll(cur, -1, axis=-1)
    circulation = np.sum(wrap_angle(nxt - cur), axis=-1) / ell ** 2
    per_sample = np.mean(circulation, axis=-1)
    return _mean_and_sigma(per_sample, chain_shape, n_resamples, rng)


def loop_circulation(theta, loop_sites, ell: int) -> float:
    """Circulation of a single loop on a single configuration."""
    theta = np.asarray(theta, dtype=np.float64)
    cur = theta[np.asarray(loop_sites)]
    nxt = np.roll(cur, -1)
    return float(np.sum(wrap_angle(nxt - cur)) / ell ** 2)


def _log_mean_exp(z: np.ndarray) -> complex:
    """Complex log of the mean of exp(z), stabilized by the max real part."""
    shift = float(np.max(np.real(z)))
    return complex(np.log(np.mean(np.exp(z - shift))) + shift)


@dataclass
class FidelityResult:
    value: float
    sigma: float
    raw: complex
    clamped: bool
    overlap_lost: bool


def fidelity(state_0: VariationalState, state_t: VariationalState,
             samples_0, samples_t, n_resamples: int = DEFAULT_RESAMPLES,
             rng=None) -> FidelityResult:
    """Normalization-free overlap estimator

        F = < psi_t/psi_0 >_{|psi_0|^2} * < psi_0/psi_t >_{|psi_t|^2},

    with both factors accumulated in log space and the real part of the
    product clamped to [0, 1].  If both factors underflow (log means below
    -700) the overlap is reported as 0 with ``overlap_lost`` set.
    """
    flat0, shape0 = _flatten(samples_0)
    flat_t, shape_t = _flatten(samples_t)
    z0 = state_t.log_psi(flat0) - state_0.log_psi(flat0)
    zt = state_0.log_psi(flat_t) - state_t.log_psi(flat_t)
    log_f0 = _log_mean_exp(z0)
    log_ft = _log_mean_exp(zt)
    if np.real(log_f0) < _LOG_UNDERFLOW and np.real(log_ft) < _LOG_UNDERFLOW:
        return FidelityResult(0.0, 0.0, 0.0j, False, True)
    raw = np.exp(log_f0 + log_ft)
    value = float(np.real(raw))
    clamped = not 0.0 <= value <= 1.0
    value = min(1.0, max(0.0, value))

    if rng is None:
        rng = np.random.default_rng(20240817)
    z0b = z0.reshape(shape0) if shape0 is not None else z0
    ztb = zt.reshape(shape_t) if shape_t is not None else zt
    estimates = np.empty(n_resamples)
    for r in range(n_resamples):
        pick0 = rng.integers(0, z0b.shape[0], size=z0b.shape[0])
        pick_t = rng.integers(0, ztb.shape[0], size=ztb.shape[0])
        f = np.exp(_log_mean_exp(z0b[pick0].ravel()) + _log_mean_exp(ztb[pick_t].ravel()))
        estimates[r] = min(1.0, max(0.0, float(np.real(f))))
    return FidelityResult(value, float(np.std(estimates)), raw, clamped, False)


def half_fidelity_time(times, fids) -> float | None:
    """First crossing of F = 0.5 by linear interpolation; None if never reached."""
    times = np.asarray(times, dtype=np.float64)
    fids = np.asarray(fids, dtype=np.float64)
    if times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("need a strictly increasing time series")
    if fids[0] < 0.5:
        raise ValueError("fidelity series starts below 0.5")
    if abs(fids[0] - 1.0) > 0.01:
        raise ValueError("fidelity series must start within 0.01 of 1")
    below = np.nonzero(fids < 0.5)[0]
    if below.size == 0:
        return None
    i = below[0]
    t0, t1 = times[i - 1], times[i]
    f0, f1 = fids[i - 1], fids[i]
    return float(t0 + (0.5 - f0) * (t1 - t0) / (f1 - f0))
