"""Command-line front end.

Subcommands: ``fixpoint`` (analytic system and centered TD fixpoint),
``run`` (trace CSV), ``sweep`` (per-cell aggregate CSVs plus a summary),
``lemma`` (two-state positive-definiteness cross-check), and ``report``
(SVG learning curves regenerated from sweep CSVs).

Every output byte is a deterministic function of the inputs: floats are
printed with 17 significant digits, JSON keys are sorted, and plots embed no
timestamps.  Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import load_config
from .envs import ENVIRONMENT_NAMES, get_environment
from .errors import ConfigError, ModelError
from .harness import config_payload, resolve_environment, run_many, sweep
from .mdp import analytic_system, fixpoint_solve, lemma_two_state, stationary_distribution

TRACE_HEADER = "step,run,rmscbe,theta_norm,diverged"
CELL_HEADER = "step,mean_rmscbe,std_rmscbe,n_diverged"
REPORT_HEADER = "environment,algorithm,alpha,beta,zeta,step,mean_rmscbe,std_rmscbe,n_diverged"

LEMMA_DEFAULTS = (0.5, 0.5, 0.0, 0.0, 1.0, 2.0, 0.9)


def f17(x: float) -> str:
    """Decimal with 17 significant digits; round-trips doubles exactly."""
    return "%.17g" % x


def _json_dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def cmd_fixpoint(args) -> int:
    name = args.environment
    if name in ENVIRONMENT_NAMES:
        env = get_environment(name)
    elif Path(name).is_file():
        config, _ = load_config(name)
        env = resolve_environment(config)
    else:
        raise ConfigError(
            f"unknown environment {name!r}; expected one of {', '.join(ENVIRONMENT_NAMES)} "
            "or a path to a config file"
        )
    d_mu = stationary_distribution(env.model.p_behavior)
    system = analytic_system(env.model, env.features)
    theta_star, singular = fixpoint_solve(system)
    a = system.a_matrix
    residual = float(np.linalg.norm(a @ theta_star - system.b_vector))
    min_eig = float(np.linalg.eigvalsh(0.5 * (a + a.T)).min())
    payload = {
        "environment": env.name,
        "n_features": system.n_features,
        "d_mu": _jsonable(d_mu.d),
        "a_matrix": _jsonable(a),
        "b_vector": _jsonable(system.b_vector),
        "c_matrix": _jsonable(system.c_matrix),
        "theta_star": _jsonable(theta_star),
        "singular": singular,
        "residual": residual,
        "min_eigenvalue_symmetrized_a": min_eig,
    }
    sys.stdout.write(_json_dump(payload))
    return 0


def trace_csv(traces) -> str:
    """Frozen trace schema: step,run,rmscbe,theta_norm,diverged (run-major rows)."""
    lines = [TRACE_HEADER]
    for trace in traces:
        for i, step in enumerate(trace.steps):
            lines.append(
                f"{int(step)},{trace.run_id},{f17(trace.rmscbe[i])},"
                f"{f17(trace.theta_norm[i])},{int(trace.diverged[i])}"
            )
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    config, _ = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    traces = run_many(config)
    text = trace_csv(traces)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cell_filename(cell) -> str:
    parts = [f"cell_a{cell.alpha!r}"]
    if cell.beta is not None:
        parts.append(f"b{cell.beta!r}")
    if cell.zeta is not None:
        parts.append(f"z{cell.zeta!r}")
    return "_".join(parts) + ".csv"


def cell_csv(curve) -> str:
    lines = [CELL_HEADER]
    for i, step in enumerate(curve.steps):
        lines.append(
            f"{int(step)},{f17(curve.mean_rmscbe[i])},{f17(curve.std_rmscbe[i])},"
            f"{int(curve.n_diverged[i])}"
        )
    return "\n".join(lines) + "\n"


def _cell_summary(cell) -> dict:
    final = cell.final_mean
    return {
        "alpha": cell.alpha,
        "beta": cell.beta,
        "zeta": cell.zeta,
        "file": _cell_filename(cell),
        # NaN (every run diverged) is not representable in JSON
        "final_mean_rmscbe": final if np.isfinite(final) else None,
        "n_diverged_final": int(cell.curve.n_diverged[-1]),
    }


def cmd_sweep(args) -> int:
    config, grids = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if not grids:
        raise ConfigError("sweep requires a 'grids' section in the config file")
    result = sweep(
        config,
        grids.get("alpha"),
        grids.get("beta"),
        grids.get("zeta"),
        threads=max(1, args.threads),
    )
    env = resolve_environment(config)
    out_dir = Path(args.out_dir or "sweep_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    for cell in result.cells:
        (out_dir / _cell_filename(cell)).write_text(cell_csv(cell.curve), encoding="utf-8")
    summary = {
        "environment": env.name,
        "algorithm": config.algorithm,
        "config": config_payload(config),
        "grids": grids,
        "cells": [_cell_summary(c) for c in result.cells],
        "best": None if result.best is None else _cell_summary(result.best),
    }
    (out_dir / "summary.json").write_text(_json_dump(summary), encoding="utf-8")
    return 0


def _lemma_verdict(m: float, n: float, closed: float) -> str:
    if m == n:
        return "degenerate (m=n)"
    return "positive" if closed > 0 else "not positive"


def cmd_lemma(args) -> int:
    if args.grid is not None:
        if args.params:
            raise ConfigError("lemma takes either explicit parameters or --grid, not both")
        if args.grid < 1:
            raise ConfigError("--grid must be >= 1")
        seed = args.seed if args.seed is not None else 0
        rng = np.random.Generator(np.random.Philox(key=seed))
        max_diff = 0.0
        min_value = np.inf
        for _ in range(args.grid):
            a = rng.uniform(0.05, 0.95)
            b = rng.uniform(0.05, 0.95)
            x = rng.uniform(0.0, 1.0)
            y = rng.uniform(0.0, 1.0)
            while True:
                m = rng.uniform(-3.0, 3.0)
                n = rng.uniform(-3.0, 3.0)
                if m != 0.0 and n != 0.0 and abs(m - n) >= 0.1:
                    break
            gamma = 0.9 if rng.random() < 0.5 else 0.99
            closed, matrix = lemma_two_state(a, b, x, y, m, n, gamma)
            max_diff = max(max_diff, abs(closed - matrix))
            min_value = min(min_value, closed)
        payload = {
            "n": args.grid,
            "seed": seed,
            "max_abs_difference": max_diff,
            "min_value": float(min_value),
            "all_positive": bool(min_value > 0),
        }
        sys.stdout.write(_json_dump(payload))
        return 0

    params = args.params if args.params else list(LEMMA_DEFAULTS)
    if len(params) != 7:
        raise ConfigError("lemma expects 7 parameters: a b x y m n gamma")
    a, b, x, y, m, n, gamma = params
    try:
        closed, matrix = lemma_two_state(a, b, x, y, m, n, gamma)
    except ModelError as exc:  # bad user parameters are a usage error
        raise ConfigError(str(exc)) from exc
    payload = {
        "a": a,
        "b": b,
        "x": x,
        "y": y,
        "m": m,
        "n": n,
        "gamma": gamma,
        "closed_form": closed,
        "matrix_form": matrix,
        "abs_difference": abs(closed - matrix),
        "verdict": _lemma_verdict(m, n, closed),
    }
    sys.stdout.write(_json_dump(payload))
    return 0


def _read_cell_csv(path: Path):
    rows = []
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    if lines and lines[0] == CELL_HEADER:
        for line in lines[1:]:
            step, mean, std, ndiv = line.split(",")
            rows.append((int(step), float(mean), float(std), int(ndiv)))
    return rows


def cmd_report(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "centered-td"

    out_dir = Path(args.out_dir or "report_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    by_env: dict[str, list] = {}
    missing = []
    for sweep_dir in args.sweep_dirs:
        sweep_path = Path(sweep_dir)
        summary_path = sweep_path / "summary.json"
        if not summary_path.is_file():
            missing.append(str(summary_path))
            continue
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        best = summary.get("best")
        if best is None:
            missing.append(f"{sweep_path}: no best cell (all runs diverged)")
            continue
        cell_path = sweep_path / best["file"]
        if not cell_path.is_file():
            missing.append(str(cell_path))
            continue
        rows = _read_cell_csv(cell_path)
        by_env.setdefault(summary["environment"], []).append((summary["algorithm"], best, rows))
    for item in missing:
        print(f"missing: {item}", file=sys.stderr)

    tidy_lines = [REPORT_HEADER]
    for env_name in sorted(by_env):
        curves = sorted(by_env[env_name], key=lambda c: c[0])
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        for algorithm, best, rows in curves:
            steps = np.array([r[0] for r in rows])
            mean = np.array([r[1] for r in rows])
            std = np.array([r[2] for r in rows])
            label = f"{algorithm} (alpha={best['alpha']!r}"
            if best["beta"] is not None:
                label += f", beta={best['beta']!r}"
            if best["zeta"] is not None:
                label += f", zeta={best['zeta']!r}"
            label += ")"
            ax.plot(steps, mean, label=label)
            ax.fill_between(steps, mean - std, mean + std, alpha=0.25)
            beta_field = "" if best["beta"] is None else repr(best["beta"])
            zeta_field = "" if best["zeta"] is None else repr(best["zeta"])
            for step, m_val, s_val, ndiv in rows:
                tidy_lines.append(
                    f"{env_name},{algorithm},{best['alpha']!r},{beta_field},"
                    f"{zeta_field},{step},{f17(m_val)},{f17(s_val)},{ndiv}"
                )
        ax.set_xlabel("step")
        ax.set_ylabel("RMSCBE")
        ax.set_title(env_name)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(out_dir / f"report_{env_name}.svg", format="svg", metadata={"Date": None})
        plt.close(fig)
    (out_dir / "report_data.csv").write_text("\n".join(tidy_lines) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="centered-td",
        description="Centered temporal-difference policy evaluation toolkit",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker count for sweeps")
    parser.add_argument("--out-dir", default=None, help="output directory for sweep/report")
    commands = parser.add_subparsers(dest="command", required=True)

    p_fix = commands.add_parser("fixpoint", help="print the analytic system and fixpoint as JSON")
    p_fix.add_argument("environment", help="environment name or config file path")

    p_run = commands.add_parser("run", help="run an experiment and emit a trace CSV")
    p_run.add_argument("--config", required=True, help="experiment config file")
    p_run.add_argument("--out", default=None, help="output CSV path (default stdout)")

    p_sweep = commands.add_parser("sweep", help="grid sweep; writes cell CSVs and summary.json")
    p_sweep.add_argument("--config", required=True, help="experiment config file with grids")

    p_lemma = commands.add_parser("lemma", help="two-state positive-definiteness cross-check")
    p_lemma.add_argument("params", nargs="*", type=float, help="a b x y m n gamma")
    p_lemma.add_argument("--grid", type=int, default=None, help="sample N random parameter tuples")

    p_report = commands.add_parser("report", help="plot sweep results as SVG learning curves")
    p_report.add_argument("sweep_dirs", nargs="+", help="sweep output directories")

    return parser


_COMMANDS = {
    "fixpoint": cmd_fixpoint,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "lemma": cmd_lemma,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime/numeric failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
