"""Command-line experiment runner.

Subcommands: propagate (trajectory export), optimize (single control
optimization), sweep (parallel parameter sweep with manifest), fit
(effective-decay-time extraction from an M-curve table) and qsl.

All result tables are CSV with a fixed column order and 15-significant-digit
values, and are byte-identical for a given (config, seed) regardless of the
worker count.  Exit codes: 0 success, 2 config error, 3 numerical failure,
4 partial sweep failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import (
    bloch_stack,
    from_bloch,
    hilbert_schmidt_distance_stack,
    purity_stack,
    trace_distance_stack,
)
from .config import ConfigError, ExperimentConfig, config_hash, load_config, parse_config
from .controls import load_field_csv, save_field_csv
from .dynamics import (
    DiscriminationProblem,
    LindbladSpec,
    PropagationError,
    TimeGrid,
    propagate_forward,
)
from .krotov import KrotovError, KrotovOptimizer
from .protocols import (
    FitError,
    MCurve,
    effective_m_gamma,
    fit_effective_time,
    m_numeric,
    qfi,
    qsl_time,
    ramsey_analytic,
)
from .validation import ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4

WORKER_ENV_VAR = "QDISCRIM_MAX_WORKERS"

RESULT_COLUMNS = (
    "delta_b", "t_final", "protocol",
    "d_hs", "d_tr", "purity1", "purity2", "qfi_over_t",
)
TRAJECTORY_COLUMNS = (
    "t",
    "bloch1_x", "bloch1_y", "bloch1_z",
    "bloch2_x", "bloch2_y", "bloch2_z",
    "d_hs", "d_tr", "purity1", "purity2",
)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    return f"{float(value):.15g}"


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _grid_for(config: ExperimentConfig, t_final: float, delta_b: float) -> TimeGrid:
    if config.n_steps is not None:
        return TimeGrid(t_final, config.n_steps)
    return TimeGrid.with_default_steps(t_final, delta_b, config.noise.rate)


def _problem_for(config: ExperimentConfig, delta_b: float, t_final: float) -> DiscriminationProblem:
    return DiscriminationProblem(
        b=config.b,
        delta_b=delta_b,
        noise=config.noise,
        grid=_grid_for(config, t_final, delta_b),
        initial=config.initial,
    )


def _optimizer_for(config: ExperimentConfig) -> KrotovOptimizer:
    k = config.krotov
    return KrotovOptimizer(
        lambda_x=k.lambdas["x"], lambda_y=k.lambdas["y"], lambda_z=k.lambdas["z"],
        optimize_x=k.optimize["x"], optimize_y=k.optimize["y"], optimize_z=k.optimize["z"],
        guess_x=k.guesses["x"], guess_y=k.guesses["y"], guess_z=k.guesses["z"],
        shape_ramp_fraction=k.shape_ramp_fraction,
        max_iterations=k.max_iterations,
        delta_jt_tolerance=k.delta_jt_tolerance,
    )


def _tag(delta_b: float, t_final: float) -> str:
    return f"db{delta_b:g}_T{t_final:g}"


def _trajectory_rows(times, traj1, traj2):
    b1 = bloch_stack(traj1)
    b2 = bloch_stack(traj2)
    d_tr = trace_distance_stack(traj1, traj2)
    d_hs = hilbert_schmidt_distance_stack(traj1, traj2)
    p1 = purity_stack(traj1)
    p2 = purity_stack(traj2)
    for i, t in enumerate(times):
        yield {
            "t": t,
            "bloch1_x": b1[i, 0], "bloch1_y": b1[i, 1], "bloch1_z": b1[i, 2],
            "bloch2_x": b2[i, 0], "bloch2_y": b2[i, 1], "bloch2_z": b2[i, 2],
            "d_hs": d_hs[i], "d_tr": d_tr[i],
            "purity1": p1[i], "purity2": p2[i],
        }


def _summary_row(delta_b, t_final, protocol, traj1, traj2) -> dict:
    final1, final2 = traj1[-1], traj2[-1]
    d_tr = float(trace_distance_stack(final1[None], final2[None])[0])
    return {
        "delta_b": delta_b,
        "t_final": t_final,
        "protocol": protocol,
        "d_hs": float(hilbert_schmidt_distance_stack(final1[None], final2[None])[0]),
        "d_tr": d_tr,
        "purity1": float(purity_stack(final1[None])[0]),
        "purity2": float(purity_stack(final2[None])[0]),
        "qfi_over_t": qfi(final1, final2, delta_b) / t_final,
    }


def _load_fields(fields_dir: str, grid: TimeGrid) -> np.ndarray:
    fields = []
    for axis in ("x", "y", "z"):
        path = Path(fields_dir) / f"field_{axis}.csv"
        if path.exists():
            _, samples = load_field_csv(path, grid)
        else:
            samples = np.zeros(grid.n_steps)
        fields.append(samples)
    return np.stack(fields)


def cmd_propagate(config: ExperimentConfig, out_dir: Path) -> int:
    """Free-precession (or fixed-field) trajectories and final-state summary."""
    if not config.t_final_values:
        raise ConfigError("grid.t_final", "required for the propagate command")
    summary_rows = []
    for delta_b in config.delta_b_values:
        for t_final in config.t_final_values:
            problem = _problem_for(config, delta_b, t_final)
            if config.fields_dir is not None:
                fields = _load_fields(config.fields_dir, problem.grid)
            else:
                fields = np.zeros((3, problem.grid.n_steps))
            traj1 = propagate_forward(problem, 1, fields, check_cptp=True)
            traj2 = propagate_forward(problem, 2, fields, check_cptp=True)
            rows = _trajectory_rows(problem.grid.times(), traj1, traj2)
            _write_csv(out_dir / f"trajectory_{_tag(delta_b, t_final)}.csv",
                       TRAJECTORY_COLUMNS, rows)
            summary_rows.append(
                _summary_row(delta_b, t_final, "ramsey", traj1, traj2)
            )
    summary_rows.sort(key=lambda r: (r["delta_b"], r["t_final"], r["protocol"]))
    _write_csv(out_dir / "summary.csv", RESULT_COLUMNS, summary_rows)
    return EXIT_OK


def cmd_optimize(config: ExperimentConfig, out_dir: Path) -> int:
    """Single optimization run: convergence log, final fields, final states."""
    if not config.t_final_values:
        raise ConfigError("grid.t_final", "required for the optimize command")
    delta_b = config.delta_b_values[0]
    t_final = config.t_final_values[0]
    problem = _problem_for(config, delta_b, t_final)
    optimizer = _optimizer_for(config).fit(problem)

    conv_rows = [
        {
            "iteration": i,
            "j_t": optimizer.jt_history_[i],
            "g": optimizer.g_history_[i - 1] if i > 0 else 0.0,
            "fluence": optimizer.fluence_history_[i],
        }
        for i in range(len(optimizer.jt_history_))
    ]
    _write_csv(out_dir / "convergence.csv", ("iteration", "j_t", "g", "fluence"), conv_rows)
    for k, axis in enumerate(("x", "y", "z")):
        save_field_csv(out_dir / f"field_{axis}.csv", problem.grid, optimizer.fields_[k])
    summary = _summary_row(delta_b, t_final, "optimize",
                           optimizer.forward1_, optimizer.forward2_)
    _write_csv(out_dir / "final_states.csv", RESULT_COLUMNS, [summary])
    rows = _trajectory_rows(problem.grid.times(), optimizer.forward1_, optimizer.forward2_)
    _write_csv(out_dir / f"trajectory_{_tag(delta_b, t_final)}.csv", TRAJECTORY_COLUMNS, rows)
    logger.info(
        "optimize: J_T %.6e after %d iterations (converged=%s)",
        optimizer.jt_, optimizer.n_iterations_, optimizer.converged_,
    )
    return EXIT_OK if optimizer.converged_ else EXIT_NUMERICAL


def _sweep_job(args: tuple) -> dict:
    """One sweep point; runs in a worker process."""
    config_raw, delta_b, t_final, protocol = args
    config = parse_config(config_raw)
    problem = _problem_for(config, delta_b, t_final)
    if protocol == "ramsey":
        result = ramsey_analytic(problem)
        rho1 = from_bloch(result.bloch_1[-1])
        rho2 = from_bloch(result.bloch_2[-1])
        return {
            "delta_b": delta_b,
            "t_final": t_final,
            "protocol": "ramsey",
            "d_hs": float(result.d_hs[-1]),
            "d_tr": float(result.d_tr[-1]),
            "purity1": float(result.purity_1[-1]),
            "purity2": float(result.purity_2[-1]),
            "qfi_over_t": qfi(rho1, rho2, delta_b) / t_final,
            "m_run": float(np.min(1.0 - result.d_tr)),
        }
    optimizer = _optimizer_for(config).fit(problem)
    row = _summary_row(delta_b, t_final, "optimize",
                       optimizer.forward1_, optimizer.forward2_)
    row["m_run"] = m_numeric(optimizer.forward1_, optimizer.forward2_)
    return row


def cmd_sweep(config: ExperimentConfig, out_dir: Path, workers: int) -> int:
    """Parameter sweep over (delta_b, T, protocol) with a worker pool."""
    jobs = []
    for delta_b in config.delta_b_values:
        t_values = list(config.t_final_values)
        if not t_values:
            t_values = [f * qsl_time(delta_b) for f in config.sweep.t_factors]
        cap = config.sweep.decay_cap_multiple * config.decay_time
        t_values = sorted({min(t, cap) for t in t_values})
        for protocol in config.sweep.protocols:
            if protocol == "optimize" and config.krotov is None:
                raise ConfigError("krotov", "section required for optimized sweep points")
            for t_final in t_values:
                jobs.append((config.raw, delta_b, t_final, protocol))

    statuses = []
    rows = []
    if workers <= 1:
        outcomes = []
        for job in jobs:
            try:
                outcomes.append(_sweep_job(job))
            except Exception as exc:  # job isolation mirrors the pool path
                outcomes.append(exc)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_job, job) for job in jobs]
            outcomes = []
            for future in futures:
                try:
                    outcomes.append(future.result())
                except Exception as exc:
                    outcomes.append(exc)
    n_failed = 0
    for job, outcome in zip(jobs, outcomes):
        _, delta_b, t_final, protocol = job
        if isinstance(outcome, Exception):
            n_failed += 1
            statuses.append({
                "delta_b": delta_b, "t_final": t_final, "protocol": protocol,
                "status": "failed", "error": f"{type(outcome).__name__}: {outcome}",
            })
            logger.error("sweep job (%g, %g, %s) failed: %s",
                         delta_b, t_final, protocol, outcome)
        else:
            rows.append(outcome)
            statuses.append({
                "delta_b": delta_b, "t_final": t_final, "protocol": protocol,
                "status": "ok", "error": "",
            })

    rows.sort(key=lambda r: (r["delta_b"], r["t_final"], r["protocol"]))
    _write_csv(out_dir / "results.csv", RESULT_COLUMNS, rows)

    written = [str(out_dir / "results.csv")]
    for protocol in config.sweep.protocols:
        curve_rows = []
        for delta_b in config.delta_b_values:
            m_values = [r["m_run"] for r in rows
                        if r["protocol"] == protocol and r["delta_b"] == delta_b]
            if m_values:
                curve_rows.append({"delta_b": delta_b, "m": min(m_values)})
        if curve_rows:
            path = out_dir / f"m_curve_{protocol}.csv"
            _write_csv(path, ("delta_b", "m"), curve_rows)
            written.append(str(path))

    manifest = {
        "tool_version": __version__,
        "config_hash": config_hash(config),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": config.seed,
        "jobs": statuses,
        "outputs": written,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
    for path in written:
        if not Path(path).exists() or Path(path).stat().st_size == 0:
            raise RuntimeError(f"manifest lists missing or empty output {path}")
    if n_failed and n_failed == len(jobs):
        return EXIT_NUMERICAL
    return EXIT_PARTIAL if n_failed else EXIT_OK


def cmd_fit(table: Path, noise_kind: str, decay_time: float, out_dir: Path) -> int:
    """Effective-decay-time fit of an M-curve table with (delta_b, m) columns."""
    delta_b, m = [], []
    with open(table, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not {"delta_b", "m"} <= set(reader.fieldnames):
            raise ValidationError(f"{table} must have columns (delta_b, m)")
        for row in reader:
            delta_b.append(float(row["delta_b"]))
            m.append(float(row["m"]))
    gamma_nominal = effective_m_gamma(LindbladSpec(noise_kind, 1.0 / decay_time))
    curve = MCurve(np.array(delta_b), np.array(m), gamma_label=gamma_nominal)
    fit = fit_effective_time(curve, noise_kind)
    _write_csv(
        out_dir / "fit_summary.csv",
        ("noise_kind", "gamma_eff", "ratio", "residual"),
        [{"noise_kind": noise_kind, "gamma_eff": fit.gamma_eff,
          "ratio": fit.ratio, "residual": fit.residual}],
    )
    print(f"noise={noise_kind} gamma_eff={fit.gamma_eff:.6g} "
          f"ratio={fit.ratio:.4f} residual={fit.residual:.3g}")
    return EXIT_OK


def _resolve_workers(requested: int | None) -> int:
    workers = requested if requested else (os.cpu_count() or 1)
    cap = os.environ.get(WORKER_ENV_VAR)
    if cap:
        workers = min(workers, max(1, int(cap)))
    return max(1, workers)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdiscrim",
        description="Qubit state-discrimination experiments: propagation, "
                    "control optimization, sweeps and effective-decay fits.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")

    for name, help_text in (
        ("propagate", "export free-precession or fixed-field trajectories"),
        ("optimize", "run one control optimization"),
        ("sweep", "run a (delta_b, T, protocol) sweep with a worker pool"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--config", type=Path, required=True)
        if name == "sweep":
            p.add_argument("--workers", type=int, default=None,
                           help=f"worker processes (capped by ${WORKER_ENV_VAR})")

    p_fit = sub.add_parser("fit", parents=[common],
                           help="fit an M-curve table with the analytic formula")
    p_fit.add_argument("--table", type=Path, required=True,
                       help="CSV with (delta_b, m) columns")
    p_fit.add_argument("--noise-kind", choices=("relaxation", "dephasing"), required=True)
    p_fit.add_argument("--decay-time", type=float, required=True,
                       help="nominal T1 or T2 for the reported ratio")

    p_qsl = sub.add_parser("qsl", help="print the quantum speed limit pi/delta_b")
    p_qsl.add_argument("--delta-b", type=float, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.command == "qsl":
        try:
            print(f"{qsl_time(args.delta_b):.15g}")
        except ValidationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    try:
        if args.command == "fit":
            out_dir = args.out or Path(".")
            out_dir.mkdir(parents=True, exist_ok=True)
            if args.decay_time <= 0:
                raise ValidationError("--decay-time must be positive")
            return cmd_fit(args.table, args.noise_kind, args.decay_time, out_dir)

        config = load_config(args.config)
        if args.seed is not None:
            config.raw["seed"] = args.seed
        out_dir = args.out or Path(config.output_directory)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "propagate":
            return cmd_propagate(config, out_dir)
        if args.command == "optimize":
            return cmd_optimize(config, out_dir)
        if args.command == "sweep":
            return cmd_sweep(config, out_dir, _resolve_workers(args.workers))
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KrotovError, PropagationError, FitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
