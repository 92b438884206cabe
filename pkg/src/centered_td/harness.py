"""Experiment harness: single runs, grid sweeps, and trace aggregation.

Runs are deterministic functions of (config, run index): each run derives its
own RNG substream and owns its learner state, so runs parallelize trivially.
Internally every run is a row of a batched state matrix advanced in lockstep
by the shared learner kernel; because the kernel uses only elementwise
operations and fixed-axis reductions, traces are bitwise identical whether a
run executes alone, inside a sweep, or under any ``threads`` setting.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import learners
from .envs import EnvironmentSpec, RngStream, get_environment, sample_path
from .errors import ConfigError, ModelError
from .learners import ALGORITHMS, LINEAR_ALGORITHMS, StepSizes
from .mdp import FeatureMap, rmscbe_batch, stationary_distribution

log = logging.getLogger(__name__)

THETA_INIT_POLICIES = ("ones", "zeros")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on; hashable into a trace fingerprint."""

    environment: str | dict | EnvironmentSpec
    algorithm: str
    sizes: StepSizes
    steps_per_run: int
    n_runs: int = 50
    record_every: int = 10
    seed: int = 0
    sampling_mode: str | None = None  # None: use the environment's default
    theta_init: str | tuple = "ones"
    ctdc_mode: str = "rho"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {self.algorithm!r}; expected one of {', '.join(ALGORITHMS)}"
            )
        if self.steps_per_run < 1:
            raise ConfigError(f"steps_per_run must be >= 1, got {self.steps_per_run}")
        if self.n_runs < 1:
            raise ConfigError(f"n_runs must be >= 1, got {self.n_runs}")
        if self.record_every < 1 or self.steps_per_run % self.record_every != 0:
            raise ConfigError(
                "record_every must be >= 1 and divide steps_per_run "
                f"(got {self.record_every} for {self.steps_per_run} steps)"
            )
        if self.sampling_mode is not None and self.sampling_mode not in (
            "trajectory",
            "iid-stationary",
        ):
            raise ConfigError(f"invalid sampling_mode {self.sampling_mode!r}")
        if self.ctdc_mode not in learners.CTDC_MODES:
            raise ConfigError(f"invalid ctdc_mode {self.ctdc_mode!r}")
        if isinstance(self.theta_init, str):
            if self.theta_init not in THETA_INIT_POLICIES:
                raise ConfigError(
                    f"theta_init must be 'ones', 'zeros', or an explicit vector; got {self.theta_init!r}"
                )
        else:
            object.__setattr__(self, "theta_init", tuple(float(v) for v in self.theta_init))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class MetricTrace:
    """Recorded time series of one run."""

    run_id: int
    steps: np.ndarray
    rmscbe: np.ndarray
    theta_norm: np.ndarray
    diverged: np.ndarray
    fingerprint: str

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.int64)
        if (np.diff(steps) <= 0).any():
            raise ModelError("trace step indices must be strictly increasing")
        for name, dtype in (("rmscbe", float), ("theta_norm", float), ("diverged", bool)):
            arr = np.asarray(getattr(self, name), dtype=dtype)
            if arr.shape != steps.shape:
                raise ModelError(f"trace field {name} has mismatched length")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if (self.rmscbe < 0).any():
            raise ModelError("trace rmscbe values must be nonnegative")
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)


@dataclass(frozen=True)
class AggregateCurve:
    """Pointwise mean/std of RMSCBE over the non-diverged runs of one cell."""

    steps: np.ndarray
    mean_rmscbe: np.ndarray
    std_rmscbe: np.ndarray
    n_diverged: np.ndarray
    n_runs: int
    fingerprint: str


@dataclass(frozen=True)
class CellResult:
    """One sweep cell: its rates, aggregate curve, and final mean RMSCBE."""

    alpha: float
    beta: float | None
    zeta: float | None
    curve: AggregateCurve
    final_mean: float
    traces: tuple | None = None
    final_weights: np.ndarray | None = None


@dataclass(frozen=True)
class SweepResult:
    cells: tuple
    best_index: int | None

    @property
    def best(self) -> CellResult | None:
        return None if self.best_index is None else self.cells[self.best_index]


def _environment_payload(env: str | dict | EnvironmentSpec):
    if isinstance(env, str):
        return env
    if isinstance(env, EnvironmentSpec):
        return {
            "name": env.name,
            "n_states": env.model.n_states,
            "p_behavior": env.model.p_behavior.tolist(),
            "p_target": env.model.p_target.tolist(),
            "rewards": env.model.rewards.tolist(),
            "gamma": env.model.gamma,
            "features": env.features.phi.tolist(),
            "start_state": env.start_state,
            "random_start": env.random_start,
        }
    return env


def config_payload(config: ExperimentConfig) -> dict:
    """Canonical JSON-compatible view of a config (what gets fingerprinted)."""
    theta_init = config.theta_init
    if not isinstance(theta_init, str):
        theta_init = list(theta_init)
    return {
        "environment": _environment_payload(config.environment),
        "algorithm": config.algorithm,
        "sizes": {
            "alpha": config.sizes.alpha,
            "beta": config.sizes.beta,
            "zeta": config.sizes.zeta,
            "decay_mode": config.sizes.decay_mode,
            "alpha_exponent": config.sizes.alpha_exponent,
            "beta_exponent": config.sizes.beta_exponent,
            "zeta_exponent": config.sizes.zeta_exponent,
        },
        "steps_per_run": config.steps_per_run,
        "n_runs": config.n_runs,
        "record_every": config.record_every,
        "seed": config.seed,
        "sampling_mode": config.sampling_mode,
        "theta_init": theta_init,
        "ctdc_mode": config.ctdc_mode,
    }


def fingerprint(config: ExperimentConfig) -> str:
    blob = json.dumps(config_payload(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def resolve_environment(config: ExperimentConfig) -> EnvironmentSpec:
    env = config.environment
    if isinstance(env, str):
        spec = get_environment(env)
    elif isinstance(env, EnvironmentSpec):
        spec = env
    else:
        from .envs import environment_from_dict

        spec = environment_from_dict(env)
    if config.sampling_mode is not None and config.sampling_mode != spec.sampling_mode:
        spec = replace(spec, sampling_mode=config.sampling_mode)
    return spec


def _initial_weights(config: ExperimentConfig, env: EnvironmentSpec) -> np.ndarray:
    dim = (
        env.features.n_features
        if config.algorithm in LINEAR_ALGORITHMS
        else env.model.n_states
    )
    if config.theta_init == "ones":
        return np.ones(dim)
    if config.theta_init == "zeros":
        return np.zeros(dim)
    vec = np.asarray(config.theta_init, dtype=float)
    if vec.shape != (dim,):
        raise ConfigError(f"theta_init has length {vec.shape[0]}, expected {dim}")
    return vec


def _sample_arrays(env: EnvironmentSpec, config: ExperimentConfig, run_indices):
    """Per-run sample streams, shared by every cell of a sweep."""
    subsample = config.algorithm == "ctdc" and config.ctdc_mode == "subsample"
    base = RngStream(config.seed)
    steps = config.steps_per_run
    n_sel = len(run_indices)
    s = np.empty((n_sel, steps), dtype=np.int64)
    sp = np.empty((n_sel, steps), dtype=np.int64)
    r = np.empty((n_sel, steps))
    rho = np.empty((n_sel, steps))
    for i, idx in enumerate(run_indices):
        rng = base.substream(idx).generator()
        s[i], sp[i], r[i], rho[i] = sample_path(env, steps, rng, subsample=subsample)
    return s, sp, r, rho


def _decay_factors(sizes: StepSizes, steps: int):
    if sizes.decay_mode == "constant":
        ones = np.ones(steps)
        return ones, ones, ones
    k = np.arange(1, steps + 1, dtype=float)
    return (
        k ** -sizes.alpha_exponent,
        k ** -sizes.beta_exponent,
        k ** -sizes.zeta_exponent,
    )


def _run_cell_block(env, config, cells, samples, run_indices, keep_finals):
    """Advance every (cell, run) pair of this block in one batched loop."""
    model = env.model
    algo = config.algorithm
    s_all, sp_all, r_all, rho_all = samples
    n_sel = len(run_indices)
    n_cells = len(cells)
    n_rows = n_cells * n_sel
    run_of_row = np.tile(np.arange(n_sel), n_cells)

    weights0 = _initial_weights(config, env)
    linear = algo in LINEAR_ALGORITHMS
    if linear:
        theta = np.tile(weights0, (n_rows, 1))
        u = np.zeros_like(theta) if algo in ("tdc", "ctdc") else None
        v_table = None
        metric_features = env.features
    else:
        theta = None
        u = None
        v_table = np.tile(weights0, (n_rows, 1))
        metric_features = FeatureMap(np.eye(model.n_states))
    omega = np.zeros(n_rows)
    diverged = np.zeros(n_rows, dtype=bool)

    def _rate_column(name):
        vals = [getattr(c, name) for c in cells]
        if any(v is None for v in vals):
            return 0.0  # unused by this algorithm; kernel never reads it
        return np.repeat(np.asarray(vals, dtype=float), n_sel)

    alpha_base = _rate_column("alpha")
    beta_base = _rate_column("beta")
    zeta_base = _rate_column("zeta")
    f_alpha, f_beta, f_zeta = _decay_factors(config.sizes, config.steps_per_run)

    d_mu = stationary_distribution(model.p_behavior).d
    phi = env.features.phi
    n_records = config.steps_per_run // config.record_every
    rms_rec = np.empty((n_records, n_rows))
    norm_rec = np.empty((n_records, n_rows))
    div_rec = np.empty((n_records, n_rows), dtype=bool)
    rec_i = 0

    for t in range(config.steps_per_run):
        s_t = s_all[:, t][run_of_row]
        sp_t = sp_all[:, t][run_of_row]
        r_t = r_all[:, t][run_of_row]
        rho_t = rho_all[:, t][run_of_row]
        phi_s = phi[s_t] if linear else None
        phi_n = phi[sp_t] if linear else None
        theta, omega, u, v_table, diverged = learners.step_batch(
            algo,
            model.gamma,
            theta,
            omega,
            u,
            v_table,
            diverged,
            s_t,
            sp_t,
            r_t,
            rho_t,
            phi_s,
            phi_n,
            alpha_base * f_alpha[t],
            beta_base * f_beta[t],
            zeta_base * f_zeta[t],
            ctdc_mode=config.ctdc_mode,
        )
        if (t + 1) % config.record_every == 0:
            current = theta if linear else v_table
            rms_rec[rec_i] = rmscbe_batch(model, metric_features, current, d_mu)
            norm_rec[rec_i] = np.sqrt((current * current).sum(axis=-1))
            div_rec[rec_i] = diverged
            rec_i += 1

    step_grid = np.arange(1, n_records + 1, dtype=np.int64) * config.record_every
    results = []
    final = theta if linear else v_table
    for ci, cell in enumerate(cells):
        cell_config = replace(config, sizes=cell)
        fp = fingerprint(cell_config)
        traces = []
        for ri, run_id in enumerate(run_indices):
            row = ci * n_sel + ri
            traces.append(
                MetricTrace(
                    run_id=run_id,
                    steps=step_grid,
                    rmscbe=rms_rec[:, row],
                    theta_norm=norm_rec[:, row],
                    diverged=div_rec[:, row],
                    fingerprint=fp,
                )
            )
        finals = None
        if keep_finals:
            finals = final[ci * n_sel : (ci + 1) * n_sel].copy()
        results.append((traces, finals))
    return results


def _run_cells(env, config, cells, run_indices, threads=1, keep_finals=False):
    for rate in learners._required_rates(config.algorithm):
        if any(getattr(c, rate) is None for c in cells):
            raise ConfigError(f"{config.algorithm} requires step size {rate!r}")
    samples = _sample_arrays(env, config, run_indices)
    if threads <= 1 or len(cells) == 1:
        blocks = [cells]
    else:
        bounds = np.array_split(np.arange(len(cells)), min(threads, len(cells)))
        blocks = [[cells[i] for i in chunk] for chunk in bounds if len(chunk)]
    if len(blocks) == 1:
        block_results = [_run_cell_block(env, config, blocks[0], samples, run_indices, keep_finals)]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            block_results = list(
                pool.map(
                    lambda blk: _run_cell_block(env, config, blk, samples, run_indices, keep_finals),
                    blocks,
                )
            )
    results = []
    for block in block_results:
        results.extend(block)
    return results


def run_one(config: ExperimentConfig, run_index: int) -> MetricTrace:
    """Execute a single run; deterministic given (config, run_index)."""
    env = resolve_environment(config)
    [(traces, _)] = _run_cells(env, config, [config.sizes], [run_index])
    return traces[0]


def run_many(config: ExperimentConfig, keep_finals: bool = False):
    """All ``n_runs`` runs of a config.

    Returns the list of traces, or ``(traces, final_weights)`` when
    ``keep_finals`` is set (one weight row per run, in run order).
    """
    env = resolve_environment(config)
    [(traces, finals)] = _run_cells(
        env, config, [config.sizes], list(range(config.n_runs)), keep_finals=keep_finals
    )
    return (traces, finals) if keep_finals else traces


def aggregate(traces) -> AggregateCurve:
    """Pointwise mean/std (population convention) over non-diverged runs.

    Runs are excluded from the mean/std at every step where their diverged
    flag is set; the per-step diverged count is reported alongside.  Order of
    the trace list does not matter.
    """
    traces = list(traces)
    if not traces:
        raise ModelError("cannot aggregate an empty trace list")
    fp = traces[0].fingerprint
    steps = traces[0].steps
    for t in traces[1:]:
        if t.fingerprint != fp:
            raise ModelError("cannot aggregate traces with mixed config fingerprints")
        if not np.array_equal(t.steps, steps):
            raise ModelError("cannot aggregate traces with different recording grids")
    vals = np.stack([t.rmscbe for t in traces])
    div = np.stack([t.diverged for t in traces])
    ok = ~div
    counts = ok.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, (vals * ok).sum(axis=0) / counts, np.nan)
        residual = np.where(ok, vals - mean, 0.0)
        std = np.where(counts > 0, np.sqrt((residual**2).sum(axis=0) / counts), np.nan)
    return AggregateCurve(
        steps=steps,
        mean_rmscbe=mean,
        std_rmscbe=std,
        n_diverged=div.sum(axis=0).astype(np.int64),
        n_runs=len(traces),
        fingerprint=fp,
    )


def applicable_grids(algorithm: str) -> tuple[str, ...]:
    """Which rate grids a sweep over this algorithm actually varies."""
    return learners._required_rates(algorithm)


def sweep(
    config: ExperimentConfig,
    alpha_grid,
    beta_grid=None,
    zeta_grid=None,
    threads: int = 1,
    keep_traces: bool = False,
    keep_finals: bool = False,
) -> SweepResult:
    """Cartesian sweep over the applicable rate grids.

    Cells are enumerated in lexicographic (alpha, beta, zeta) order and each
    cell runs the full ``n_runs`` repetition with shared per-run sample
    streams.  The best cell minimizes the mean final RMSCBE; exact ties keep
    the lexicographically smallest rates.  Grids supplied for rates the
    algorithm does not use are ignored with a notice.
    """
    applicable = applicable_grids(config.algorithm)
    grids = {"alpha": alpha_grid, "beta": beta_grid, "zeta": zeta_grid}
    for name in ("beta", "zeta"):
        if name not in applicable and grids[name]:
            log.warning("%s grid is not used by %s; ignoring it", name, config.algorithm)
            grids[name] = None
    for name in applicable:
        if not grids[name]:
            raise ConfigError(f"{config.algorithm} sweep requires a non-empty {name} grid")
    alphas = [float(v) for v in grids["alpha"]]
    betas = [float(v) for v in grids["beta"]] if "beta" in applicable else [None]
    zetas = [float(v) for v in grids["zeta"]] if "zeta" in applicable else [None]
    cells = [
        replace(config.sizes, alpha=a, beta=b, zeta=z)
        for a in alphas
        for b in betas
        for z in zetas
    ]
    env = resolve_environment(config)
    results = _run_cells(
        env, config, cells, list(range(config.n_runs)), threads=threads, keep_finals=keep_finals
    )
    cell_results = []
    best_index = None
    best_final = np.inf
    for i, (sizes, (traces, finals)) in enumerate(zip(cells, results)):
        curve = aggregate(traces)
        final_mean = float(curve.mean_rmscbe[-1])
        cell_results.append(
            CellResult(
                alpha=sizes.alpha,
                beta=sizes.beta,
                zeta=sizes.zeta,
                curve=curve,
                final_mean=final_mean,
                traces=tuple(traces) if keep_traces else None,
                final_weights=finals,
            )
        )
        if np.isfinite(final_mean) and final_mean < best_final:
            best_final = final_mean
            best_index = i
    return SweepResult(cells=tuple(cell_results), best_index=best_index)
