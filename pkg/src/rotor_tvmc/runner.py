"""Run orchestration: ground-state preparation, quench dynamics, oracle
benchmarking, sampler diagnostics, and reproducible persistence.

Sampling RNG streams are keyed by (seed, mode code, evaluation counter,
chain index) through ``numpy``'s seed-sequence spawning, so a rerun with the
same configuration replays the exact draw sequence regardless of how chains
are partitioned across workers.  All floating-point output is serialized
with an explicit repr-precision format, which makes CSVs byte-comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import exact, observables, quadrature
from .ansatz import make_ansatz, random_alpha
from .config import RunConfig, config_echo
from .hmc import init_chain, sample, warmup
from .integrator import AdaptiveStepper
from .tdvp import estimate_qgt, residual_r2, tdvp_rhs

CHECKPOINT_FORMAT_VERSION = 1

# mode codes folded into per-run RNG keys
_MODE_GROUND_STATE = 0
_MODE_QUENCH = 1
_MODE_SAMPLER_CHECK = 2


class RunnerError(RuntimeError):
    """Numerical failure with a typed reason for run metadata."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


# ---------------------------------------------------------------------------
# persistence


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return "nan"
    return format(float(value), ".17g")


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(col)) for col in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def write_metadata(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def save_checkpoint(path, state, t: float, extra: dict | None = None) -> None:
    """Parameter vector plus an embedded layout descriptor and version tag."""
    names = np.array([name for name, _ in state.layout])
    shapes = np.array(
        [",".join(str(s) for s in shape) for _, shape in state.layout]
    )
    np.savez(
        path,
        format_version=np.int64(CHECKPOINT_FORMAT_VERSION),
        kind=np.str_(state.kind),
        alpha=state.alpha,
        layout_names=names,
        layout_shapes=shapes,
        t=np.float64(t),
        extra=np.str_(json.dumps(extra or {})),
    )


def load_checkpoint(path, state):
    """Verify the descriptor against ``state`` and return (alpha, t, extra)."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise RunnerError(
                "checkpoint-version",
                f"checkpoint format {version} != {CHECKPOINT_FORMAT_VERSION}",
            )
        kind = str(data["kind"])
        names = [str(s) for s in data["layout_names"]]
        shapes = [
            tuple(int(tok) for tok in s.split(",") if tok)
            for s in data["layout_shapes"]
        ]
        if kind != state.kind or list(zip(names, shapes)) != [
            (n, tuple(s)) for n, s in state.layout
        ]:
            raise RunnerError(
                "checkpoint-mismatch",
                f"checkpoint holds a {kind} layout incompatible with {state.kind}",
            )
        return (
            np.asarray(data["alpha"], dtype=np.complex128),
            float(data["t"]),
            json.loads(str(data["extra"])),
        )


# ---------------------------------------------------------------------------
# sampling engines


class _HmcEngine:
    """Fresh warmed-up chains per evaluation, keyed by an evaluation counter."""

    def __init__(self, config: RunConfig, mode_code: int):
        self.config = config
        self.mode_code = mode_code
        self.counter = 0
        self.last_diag = None

    def draw(self, state, counter: int | None = None) -> np.ndarray:
        """(n_chains, n_samples, N) angles from |psi|^2 at state.alpha."""
        cfg = self.config
        if counter is None:
            counter = self.counter
            self.counter += 1
        chains = [
            init_chain(
                state.n_sites,
                cfg.hmc,
                np.random.default_rng([cfg.seed, self.mode_code, counter, c]),
            )
            for c in range(cfg.hmc.n_chains)
        ]
        warmup(chains, cfg.hmc, state)
        flat, diag = sample(chains, cfg.hmc.n_samples, state, cfg.hmc, cfg.n_workers)
        self.last_diag = diag
        return flat.reshape(cfg.hmc.n_chains, cfg.hmc.n_samples, state.n_sites)

    def qgt(self, state, g: float):
        samples = self.draw(state)
        return estimate_qgt(
            state, samples.reshape(-1, state.n_sites), g, self.config.physics.j
        )


class _QuadratureEngine:
    """Noiseless grid-weighted averages; the deterministic reference engine."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.last_diag = None

    def qgt(self, state, g: float):
        return quadrature.quadrature_qgt(
            state, g, self.config.physics.j, q=self.config.quadrature_points
        )


def _weighted_rows(state, q: int):
    points = quadrature.grid_points(state.n_sites, q)
    weights = quadrature.born_weights(state, points)
    return points, weights


def _weighted_observables(state, config: RunConfig, lattice) -> dict:
    """Quadrature-mode observable row (zero Monte Carlo error by construction)."""
    points, w = _weighted_rows(state, config.quadrature_points)
    j = config.physics.j
    bk, bl = lattice.bonds[:, 0], lattice.bonds[:, 1]
    e_pot = -(j / lattice.n_sites) * float(
        w @ np.sum(np.cos(points[:, bk] - points[:, bl]), axis=-1)
    )
    cos_t, sin_t = np.cos(points), np.sin(points)
    resultant = np.hypot(np.sum(cos_t, axis=1), np.sum(sin_t, axis=1)) / lattice.n_sites
    row = {
        "e_pot": e_pot,
        "e_pot_sigma": 0.0,
        "mag": float(w @ resultant),
        "mag_x": float(w @ cos_t.mean(axis=1)),
        "mag_y": float(w @ sin_t.mean(axis=1)),
        "mag_sigma": 0.0,
        "var_mean": _weighted_circular_variance(points, w),
    }
    if lattice.ndim == 2:
        row["vort_1"], row["vort_sigma"] = _weighted_vorticity(points, w, lattice)
    return row


def _weighted_circular_variance(points, w) -> float:
    mean_cos = w @ np.cos(points)
    mean_sin = w @ np.sin(points)
    r = np.hypot(mean_cos, mean_sin)
    with np.errstate(divide="ignore"):
        return float(np.mean(np.where(r > 0, -2.0 * np.log(r), np.inf)))


def _weighted_vorticity(points, w, lattice):
    from .lattice import wrap_angle

    loops = lattice.plaquettes(1)
    if loops.shape[0] == 0:
        return None, None
    cur = points[:, loops]
    circ = np.sum(wrap_angle(np.roll(cur, -1, axis=-1) - cur), axis=-1)
    return float(w @ np.mean(circ, axis=-1)), 0.0


def _weighted_fidelity(state_0, state_t, q: int):
    """Noiseless version of the two-factor overlap estimator."""
    points0, w0 = _weighted_rows(state_0, q)
    points_t, wt = _weighted_rows(state_t, q)
    z0 = state_t.log_psi(points0) - state_0.log_psi(points0)
    zt = state_0.log_psi(points_t) - state_t.log_psi(points_t)
    s0 = float(np.max(np.real(z0)))
    st = float(np.max(np.real(zt)))
    f = np.exp(np.log(w0 @ np.exp(z0 - s0)) + s0 + np.log(wt @ np.exp(zt - st)) + st)
    return min(1.0, max(0.0, float(np.real(f)))), 0.0


def _mc_observables(samples, config: RunConfig, lattice) -> dict:
    e_pot, e_sigma = observables.potential_energy_density(
        samples, lattice, config.physics.j
    )
    mag, mag_x, mag_y, mag_sigma = observables.magnetization(samples)
    row = {
        "e_pot": e_pot,
        "e_pot_sigma": e_sigma,
        "mag": mag,
        "mag_x": mag_x,
        "mag_y": mag_y,
        "mag_sigma": mag_sigma,
        "var_mean": observables.circular_variance_mean(samples),
    }
    if lattice.ndim == 2:
        row["vort_1"], row["vort_sigma"] = observables.vorticity(samples, lattice, 1)
    return row


# ---------------------------------------------------------------------------
# ground state


@dataclass
class GroundStateResult:
    state: object
    energies: list[float]
    converged: bool
    iterations: int


def run_ground_state(config: RunConfig, alpha0: np.ndarray | None = None,
                     out_dir: Path | None = None) -> GroundStateResult:
    """Imaginary-time descent at g_initial until the energy trace flattens."""
    lattice = config.lattice
    state = make_ansatz(config.ansatz_kind, lattice, **config.ansatz_hyper)
    if alpha0 is None:
        alpha0 = random_alpha(state, np.random.default_rng([config.seed, 97]))
    state = state.with_alpha(alpha0)

    gs = config.ground_state
    g = config.physics.g_initial
    engine = (
        _QuadratureEngine(config)
        if config.sampling == "quadrature"
        else _HmcEngine(config, _MODE_GROUND_STATE)
    )
    energies: list[float] = []
    converged = False
    n = lattice.n_sites
    scale = gs.tolerance * config.physics.j * n
    for iteration in range(gs.max_iters):
        qgt = engine.qgt(state, g)
        alpha_dot, _ = tdvp_rhs(qgt, config.regularization, mode="imag")
        energies.append(float(np.real(qgt.e_mean)))
        state = state.with_alpha(state.alpha + gs.tau * alpha_dot)
        if len(energies) > gs.window:
            recent = energies[-(gs.window + 1):]
            if max(recent) - min(recent) < scale:
                converged = True
                break

    result = GroundStateResult(state, energies, converged, len(energies))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(
            out_dir / "ground_state.npz", state, 0.0,
            extra={"converged": converged, "g": g},
        )
        write_csv(
            out_dir / "ground_state.csv",
            ["iteration", "energy", "energy_per_site"],
            [
                {"iteration": i, "energy": e, "energy_per_site": e / n}
                for i, e in enumerate(energies)
            ],
        )
        write_metadata(out_dir / "metadata.json", {
            "mode": "ground-state",
            "config": config_echo(config),
            "converged": converged,
            "iterations": len(energies),
            "final_energy": energies[-1] if energies else None,
        })
    if not converged:
        raise RunnerError(
            "ground-state-nonconvergence",
            f"energy trace did not flatten within {gs.max_iters} iterations "
            f"(checkpoint persisted)" if out_dir else
            f"energy trace did not flatten within {gs.max_iters} iterations",
        )
    return result


# ---------------------------------------------------------------------------
# quench


TRAJECTORY_COLUMNS = [
    "t", "dt", "energy", "e_pot", "e_pot_sigma", "mag", "mag_x", "mag_y",
    "mag_sigma", "var_mean", "vort_1", "vort_sigma", "fidelity",
    "fidelity_sigma", "rho", "lambda2", "r2", "r2_integral",
    "acceptance", "divergences", "rhat_max",
]


@dataclass
class TrajectoryRecord:
    rows: list[dict] = field(default_factory=list)
    checkpoints: list[tuple[float, np.ndarray]] = field(default_factory=list)
    status: str = "ok"

    @property
    def times(self) -> np.ndarray:
        return np.array([row["t"] for row in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=np.float64)


def run_quench(config: RunConfig, initial_state, out_dir: Path | None = None,
               g_final: float | None = None) -> TrajectoryRecord:
    """Real-time variational dynamics under g_final from ``initial_state``."""
    lattice = config.lattice
    j = config.physics.j
    g = config.physics.g_final if g_final is None else g_final
    state_0 = initial_state
    engine = (
        _QuadratureEngine(config)
        if config.sampling == "quadrature"
        else _HmcEngine(config, _MODE_QUENCH)
    )
    noiseless = config.sampling == "quadrature"

    samples_0 = None if noiseless else engine.draw(state_0)

    # cache the stage-0 estimate of each attempt so r^2 / rho / lambda^2 can
    # be logged for the accepted step without an extra solve
    stage_log = {}
    cached = {}

    def rhs(t, alpha):
        st = initial_state.with_alpha(alpha)
        if config.resample == "per-step" and "qgt" in cached:
            qgt = estimate_qgt(
                st, cached["samples"], g, j,
            ) if not noiseless else engine.qgt(st, g)
        else:
            qgt = engine.qgt(st, g)
        alpha_dot, pinv = tdvp_rhs(qgt, config.regularization, mode="real")
        r2, _ = residual_r2(qgt, pinv)
        stage_log["rho"] = pinv.rho
        stage_log["lambda2"] = pinv.lambda2
        stage_log["r2"] = r2
        stage_log["energy"] = float(np.real(qgt.e_mean))
        return alpha_dot

    if config.resample == "per-step" and not noiseless:
        # one sample set per accepted-step attempt chain: drawn at the step's
        # starting parameters and reused across stages (documented bias)
        def refresh_cache(st):
            cached["samples"] = engine.draw(st).reshape(-1, st.n_sites)
            cached["qgt"] = True
    else:
        def refresh_cache(st):
            return None

    stepper = AdaptiveStepper(config.controller, fsal=noiseless)
    record = TrajectoryRecord()
    alpha = np.array(initial_state.alpha, copy=True)
    t, dt = 0.0, min(config.dt0, config.controller.dt_max)
    r2_integral = 0.0
    prev_r2 = None
    prev_t = 0.0
    step_index = 0

    def emit(t_now, dt_now):
        nonlocal r2_integral, prev_r2, prev_t
        st = initial_state.with_alpha(alpha)
        if noiseless:
            row = _weighted_observables(st, config, lattice)
            fid, fid_sigma = _weighted_fidelity(state_0, st, config.quadrature_points)
        else:
            samples_t = engine.draw(st)
            row = _mc_observables(samples_t, config, lattice)
            fres = observables.fidelity(state_0, st, samples_0, samples_t)
            if fres.overlap_lost:
                raise RunnerError(
                    "fidelity-overlap-loss",
                    f"overlap estimator underflowed at t={t_now:.4f}",
                )
            fid, fid_sigma = fres.value, fres.sigma
        r2_now = stage_log.get("r2", 0.0)
        if prev_r2 is not None:
            r2_integral += 0.5 * (prev_r2 + r2_now) * (t_now - prev_t)
        prev_r2, prev_t = r2_now, t_now
        diag = engine.last_diag
        row.update({
            "t": t_now,
            "dt": dt_now,
            "energy": stage_log.get("energy"),
            "fidelity": fid,
            "fidelity_sigma": fid_sigma,
            "rho": stage_log.get("rho"),
            "lambda2": stage_log.get("lambda2"),
            "r2": r2_now,
            "r2_integral": r2_integral,
            "acceptance": float(np.mean(diag.acceptance)) if diag else None,
            "divergences": int(np.sum(diag.divergences)) if diag else 0,
            "rhat_max": diag.rhat_max if diag else None,
        })
        row.setdefault("vort_1", None)
        row.setdefault("vort_sigma", None)
        record.rows.append(row)

    # row at t = 0 (fidelity is 1 by construction; still estimated)
    rhs(0.0, alpha)
    emit(0.0, dt)
    record.checkpoints.append((0.0, alpha.copy()))

    try:
        while t < config.physics.t_max - 1e-12:
            dt = min(dt, config.physics.t_max - t)
            refresh_cache(initial_state.with_alpha(alpha))
            alpha, t, dt = stepper.advance(rhs, alpha, t, dt)
            step_index += 1
            emit(t, dt)
            if step_index % config.checkpoint_stride == 0:
                record.checkpoints.append((t, alpha.copy()))
    except Exception as exc:
        record.status = getattr(exc, "reason", type(exc).__name__)
        record.checkpoints.append((t, alpha.copy()))
        if out_dir is not None:
            _persist_trajectory(config, record, initial_state, alpha, t, out_dir)
        raise
    record.checkpoints.append((t, alpha.copy()))
    if out_dir is not None:
        _persist_trajectory(config, record, initial_state, alpha, t, out_dir)
    return record


def _persist_trajectory(config, record, initial_state, alpha, t, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "trajectory.csv", TRAJECTORY_COLUMNS, record.rows)
    save_checkpoint(
        out_dir / "final_state.npz", initial_state.with_alpha(alpha), t,
        extra={"status": record.status},
    )
    write_metadata(out_dir / "metadata.json", {
        "mode": "quench",
        "config": config_echo(config),
        "status": record.status,
        "steps": len(record.rows) - 1,
        "final_time": t,
    })


# ---------------------------------------------------------------------------
# oracle benchmark


def run_oracle_benchmark(config: RunConfig, initial_state=None,
                         out_dir: Path | None = None):
    """Paired t-VMC / exact-evolution curves from the same initial state.

    Returns (TrajectoryRecord, exact rows, summary dict).  The exact engine
    projects the variational initial state onto the truncated basis, evolves
    it densely, and is evaluated at the t-VMC output times.
    """
    lattice = config.lattice
    basis = exact.TruncatedBasis(lattice.n_sites, config.m_cut)
    if initial_state is None:
        gs = run_ground_state(config)
        initial_state = gs.state
    dense0, alias_mass = exact.vqs_to_dense(initial_state, basis)
    hamiltonian = exact.build_hamiltonian(
        basis, lattice, config.physics.g_final, config.physics.j
    )
    evolver = exact.ExactEvolver(hamiltonian)

    record = run_quench(config, initial_state, out_dir=None)

    exact_rows = []
    for row in record.rows:
        dense_t = evolver.evolve(dense0, row["t"])
        obs = exact.exact_observables(dense_t, basis, lattice, J=config.physics.j)
        exact_rows.append({
            "t": row["t"],
            "e_pot": obs["e_pot"],
            "mag_x": obs["mag_x"],
            "mag_y": obs["mag_y"],
            "var_mean": obs["var_mean"],
            "fidelity": exact.exact_fidelity(dense0, dense_t),
        })

    summary = {
        "alias_mass": alias_mass,
        "max_e_pot_error": max(
            abs(r["e_pot"] - x["e_pot"]) for r, x in zip(record.rows, exact_rows)
        ),
        "max_fidelity_error": max(
            abs(r["fidelity"] - x["fidelity"])
            for r, x in zip(record.rows, exact_rows)
        ),
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "trajectory.csv", TRAJECTORY_COLUMNS, record.rows)
        write_csv(
            out_dir / "exact_reference.csv",
            ["t", "e_pot", "mag_x", "mag_y", "var_mean", "fidelity"],
            exact_rows,
        )
        write_metadata(out_dir / "metadata.json", {
            "mode": "oracle-benchmark",
            "config": config_echo(config),
            "summary": summary,
        })
    return record, exact_rows, summary


# ---------------------------------------------------------------------------
# sampler check


SAMPLER_NS_SWEEP = (250, 500, 1000, 2000, 4000)
SAMPLER_L_SWEEP = (1, 2, 10, 20)


def run_sampler_check(config: RunConfig, state=None, out_dir: Path | None = None):
    """Hyperparameter sweeps on a frozen target state.

    Sweeps samples-per-chain for the magnetization error bar scaling and the
    leapfrog length for the variance-reduction comparison; returns a report
    dict with both tables and the fitted scaling slope.
    """
    if state is None:
        state = make_ansatz(config.ansatz_kind, config.lattice, **config.ansatz_hyper)
        state = state.with_alpha(
            random_alpha(state, np.random.default_rng([config.seed, 97]))
        )

    def draw(hmc_cfg, counter):
        chains = [
            init_chain(
                state.n_sites, hmc_cfg,
                np.random.default_rng([config.seed, _MODE_SAMPLER_CHECK, counter, c]),
            )
            for c in range(hmc_cfg.n_chains)
        ]
        warmup(chains, hmc_cfg, state)
        flat, diag = sample(chains, hmc_cfg.n_samples, state, hmc_cfg, config.n_workers)
        return flat.reshape(hmc_cfg.n_chains, hmc_cfg.n_samples, state.n_sites), diag

    ns_rows = []
    for idx, n_samples in enumerate(SAMPLER_NS_SWEEP):
        cfg = replace(config.hmc, n_samples=n_samples)
        samples, diag = draw(cfg, idx)
        mag, _, _, sigma = observables.magnetization(samples)
        ns_rows.append({
            "n_samples": n_samples,
            "mag": mag,
            "sigma_mag": sigma,
            "acceptance": float(np.mean(diag.acceptance)),
        })
    log_ns = np.log([row["n_samples"] for row in ns_rows])
    log_sigma = np.log([row["sigma_mag"] for row in ns_rows])
    slope = float(np.polyfit(log_ns, log_sigma, 1)[0])

    l_rows = []
    sigma_draws = {}
    rng = np.random.default_rng([config.seed, _MODE_SAMPLER_CHECK, 999])
    for idx, l0 in enumerate(SAMPLER_L_SWEEP):
        cfg = replace(config.hmc, l0=l0)
        samples, diag = draw(cfg, 100 + idx)
        mag, _, _, sigma = observables.magnetization(samples)
        # bootstrap distribution of the error bar, reused for the L comparison
        per_sample = np.hypot(
            np.sum(np.cos(samples), axis=-1), np.sum(np.sin(samples), axis=-1)
        ) / state.n_sites
        boots = np.empty(200)
        for b in range(200):
            pick = rng.integers(0, per_sample.shape[0], size=per_sample.shape[0])
            boots[b] = per_sample[pick].mean(axis=1).std() / np.sqrt(per_sample.shape[0])
        sigma_draws[l0] = boots
        l_rows.append({
            "l0": l0,
            "mag": mag,
            "sigma_mag": sigma,
            "acceptance": float(np.mean(diag.acceptance)),
        })
    diff = sigma_draws[10] ** 2 - sigma_draws[1] ** 2
    variance_reduction_confident = bool(np.quantile(diff, 0.95) <= 0.0)

    report = {
        "ns_sweep": ns_rows,
        "l_sweep": l_rows,
        "sigma_slope": slope,
        "variance_reduction_confident": variance_reduction_confident,
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "ns_sweep.csv",
                  ["n_samples", "mag", "sigma_mag", "acceptance"], ns_rows)
        write_csv(out_dir / "l_sweep.csv",
                  ["l0", "mag", "sigma_mag", "acceptance"], l_rows)
        write_metadata(out_dir / "metadata.json", {
            "mode": "sampler-check",
            "config": config_echo(config),
            "sigma_slope": slope,
            "variance_reduction_confident": variance_reduction_confident,
        })
    return report
