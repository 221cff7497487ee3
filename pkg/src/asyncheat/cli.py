"""Command-line interface: JSON experiment config in, CSV artifacts out.

Subcommands:
  simulate  seeded ensemble + synchronous reference -> trajectory CSVs
  analyze   Lyapunov certificate and bounds from the worst-case mode only
  verify    enumeration-based cross checks (small systems)
  compare   empirical exceedance vs Markov curve vs analytic bound

Exit codes: 0 success, 2 config error, 3 numerical-verification failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import analysis, grid, modes, sim

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class VerificationFailure(RuntimeError):
    """A numerical cross-check failed."""


_REQUIRED_KEYS = {"num_pes", "dx", "dt", "alpha", "buffer_len", "steps", "seed"}
_OPTIONAL_KEYS = {
    "points_per_pe",
    "initial",
    "u_left",
    "u_right",
    "ensemble_size",
    "epsilons",
    "delay_probs",
    "snapshot_steps",
    "sweep_step",
    "sweep_epsilons",
    "mode_cap",
    "output_dir",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (mirrors the JSON schema)."""

    num_pes: int
    points_per_pe: int
    dx: float
    dt: float
    alpha: float
    buffer_len: int
    steps: int
    seed: int
    initial: object
    u_left: float
    u_right: float
    ensemble_size: int
    epsilons: tuple[float, ...]
    delay_probs: tuple[float, ...] | None
    snapshot_steps: tuple[int, ...]
    sweep_step: int
    sweep_epsilons: tuple[float, ...]
    mode_cap: int
    output_dir: str | None


def load_config(path: str) -> ExperimentConfig:
    """Parse and strictly validate a JSON experiment config."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _REQUIRED_KEYS - _OPTIONAL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(raw)
    if missing:
        raise ConfigError(f"missing required config keys: {sorted(missing)}")

    steps = int(raw["steps"])
    snapshot_steps = raw.get("snapshot_steps")
    if snapshot_steps is None:
        snapshot_steps = sorted({0, steps // 2, steps})
    epsilons = tuple(float(e) for e in raw.get("epsilons", (0.01, 1.0)))
    sweep_eps = raw.get("sweep_epsilons")
    cfg = ExperimentConfig(
        num_pes=int(raw["num_pes"]),
        points_per_pe=int(raw.get("points_per_pe", 1)),
        dx=float(raw["dx"]),
        dt=float(raw["dt"]),
        alpha=float(raw["alpha"]),
        buffer_len=int(raw["buffer_len"]),
        steps=steps,
        seed=int(raw["seed"]),
        initial=raw.get("initial", "cos2"),
        u_left=float(raw.get("u_left", 1.0)),
        u_right=float(raw.get("u_right", 0.0)),
        ensemble_size=int(raw.get("ensemble_size", 300)),
        epsilons=epsilons,
        delay_probs=(
            tuple(float(p) for p in raw["delay_probs"])
            if raw.get("delay_probs") is not None
            else None
        ),
        snapshot_steps=tuple(int(s) for s in snapshot_steps),
        sweep_step=int(raw.get("sweep_step", min(9000, steps))),
        sweep_epsilons=(
            tuple(float(e) for e in sweep_eps)
            if sweep_eps is not None
            else epsilons
        ),
        mode_cap=int(raw.get("mode_cap", 100_000)),
        output_dir=raw.get("output_dir"),
    )
    # fail fast on module-level invariants
    build_problem(cfg)
    return cfg


def build_problem(cfg: ExperimentConfig):
    """Construct the domain objects, mapping validation to ConfigError."""
    try:
        spec = grid.GridSpec(
            num_pes=cfg.num_pes,
            points_per_pe=cfg.points_per_pe,
            dx=cfg.dx,
            dt=cfg.dt,
            alpha=cfg.alpha,
        )
        aspec = modes.AugmentedSpec(grid=spec, buffer_len=cfg.buffer_len)
        if cfg.delay_probs is None:
            dist = modes.SwitchingDistribution.uniform(aspec)
        else:
            dist = modes.SwitchingDistribution.from_delay_probs(
                aspec, cfg.delay_probs
            )
        bc = grid.BoundaryConditions(u_left=cfg.u_left, u_right=cfg.u_right)
        if cfg.initial == "cos2":
            u0 = grid.cos2_initial_condition(spec)
        elif cfg.initial == "ramp":
            u0 = grid.steady_state_profile(spec, bc)
        elif isinstance(cfg.initial, (list, tuple)):
            u0 = np.asarray(cfg.initial, dtype=float)
        else:
            raise ConfigError(
                f"initial must be 'cos2', 'ramp' or a vector, got {cfg.initial!r}"
            )
        run_cfg = sim.RunConfig(
            aspec=aspec,
            dist=dist,
            initial=u0,
            bc=bc,
            steps=cfg.steps,
            seed=cfg.seed,
            epsilons=cfg.epsilons,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return run_cfg


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _initial_error(run_cfg: sim.RunConfig) -> np.ndarray:
    """e(0) = X(0) - psi X(0) in the augmented space."""
    q = run_cfg.aspec.buffer_len
    ramp = grid.steady_state_profile(run_cfg.aspec.grid, run_cfg.bc)
    x0 = np.tile(run_cfg.initial, q)
    return x0 - np.tile(ramp, q)


def cmd_simulate(cfg: ExperimentConfig, outdir: str, workers: int) -> int:
    run_cfg = build_problem(cfg)
    sync = sim.run_sync_reference(run_cfg, snapshot_steps=cfg.snapshot_steps)
    ens = sim.run_ensemble(run_cfg, cfg.ensemble_size, workers=workers)

    steps = cfg.steps
    _write_csv(
        os.path.join(outdir, "sync_trajectory.csv"),
        ["step", "error_norm", "inf_error"],
        (
            [k, _fmt(sync.error_norms[k]), _fmt(sync.inf_norms[k])]
            for k in range(steps + 1)
        ),
    )
    if sync.snapshots:
        _write_csv(
            os.path.join(outdir, "sync_snapshots.csv"),
            ["step", "point", "value"],
            (
                [k, i + 1, _fmt(v)]
                for k in sorted(sync.snapshots)
                for i, v in enumerate(sync.snapshots[k])
            ),
        )
    mean_norm = ens.mean_error_norm
    mean_sq = ens.mean_sq_error
    max_inf = ens.inf_norms.max(axis=0)
    _write_csv(
        os.path.join(outdir, "async_ensemble.csv"),
        ["step", "mean_error_norm", "mean_sq_error", "max_inf_error"],
        (
            [k, _fmt(mean_norm[k]), _fmt(mean_sq[k]), _fmt(max_inf[k])]
            for k in range(steps + 1)
        ),
    )
    table = ens.exceedance_table
    _write_csv(
        os.path.join(outdir, "exceedance.csv"),
        ["step", "epsilon", "empirical_probability"],
        (
            [k, _fmt(eps), _fmt(table[k, j])]
            for j, eps in enumerate(cfg.epsilons)
            for k in range(steps + 1)
        ),
    )
    print(
        f"simulate: {cfg.ensemble_size} runs x {steps} steps, "
        f"final mean error norm {mean_norm[-1]:.3e}"
    )
    return EXIT_OK


def _certificate_pipeline(cfg: ExperimentConfig, run_cfg: sim.RunConfig):
    """Worst-case-mode certificate, mean-contraction check, tail constants."""
    aspec = run_cfg.aspec
    proj = modes.build_projector(aspec)
    wm = modes.worst_case_mode(aspec)
    wtm = modes.deflate(wm, proj)
    cert = analysis.solve_discrete_lyapunov(wtm)
    lam = modes.expected_matrix(aspec, run_cfg.dist, proj)
    contraction = analysis.verify_mean_contraction(lam, cert)
    tc = analysis.tail_constants(wtm)
    return proj, wtm, cert, lam, contraction, tc


def cmd_analyze(cfg: ExperimentConfig, outdir: str) -> int:
    run_cfg = build_problem(cfg)
    _, _, cert, _, contraction, tc = _certificate_pipeline(cfg, run_cfg)
    e0 = _initial_error(run_cfg)
    e0_norm = float(np.linalg.norm(e0))

    bound = analysis.convergence_rate_bound(
        cert, e0_norm, cfg.steps, k_const=contraction.k_const
    )
    _write_csv(
        os.path.join(outdir, "rate_bound.csv"),
        ["step", "mean_error_bound"],
        ([k, _fmt(bound[k])] for k in range(cfg.steps + 1)),
    )
    curves = [
        analysis.error_probability_bound(
            tc, e0, eps, cfg.steps, dim=run_cfg.aspec.dim
        )
        for eps in cfg.epsilons
    ]
    _write_csv(
        os.path.join(outdir, "prob_bound.csv"),
        ["step", "epsilon", "bound"],
        (
            [k, _fmt(curve.epsilon), _fmt(curve.values[k])]
            for curve in curves
            for k in range(cfg.steps + 1)
        ),
    )
    certificate = {
        "dim": run_cfg.aspec.dim,
        "lambda_max_p_m": cert.lambda_max,
        "lambda_min_p_m": cert.lambda_min,
        "lyapunov_residual": cert.residual,
        "mean_rate": cert.rate,
        "mean_k_const": contraction.k_const,
        "mean_contraction_margin": contraction.margin,
        "mean_contraction_passed": contraction.passed,
        "lambda_smallest_singular_value": contraction.smallest_singular_value,
        "k0": tc.k0,
        "c0": tc.c0,
        "c1": tc.c1,
        "second_moment_rate": tc.second_moment_rate,
        "initial_error_norm": e0_norm,
    }
    with open(
        os.path.join(outdir, "certificate.json"), "w", encoding="utf-8"
    ) as fh:
        json.dump(certificate, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"analyze: rate {cert.rate:.10f}, K {contraction.k_const:.6g}, "
        f"k0 {tc.k0}, c0 {tc.c0:.6g}, c1 {tc.c1:.6g}"
    )
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, cap: int) -> int:
    run_cfg = build_problem(cfg)
    aspec = run_cfg.aspec
    proj = modes.build_projector(aspec)
    all_modes = modes.enumerate_modes(aspec, cap=cap)
    failures = []

    for mode in all_modes:
        report = modes.verify_eigenstructure(mode, proj)
        if not report.passed:
            failures.append(f"eigenstructure failed for delays {mode.delays}")
        if abs(report.inf_norm - 1.0) > 0:
            failures.append(f"inf norm != 1 for delays {mode.delays}")

    lam_fact = modes.expected_matrix(aspec, run_cfg.dist, proj)
    lam_enum = modes.enumerated_expected_matrix(
        aspec, run_cfg.dist, proj, cap=cap
    )
    lam_diff = float(np.max(np.abs(lam_fact - lam_enum)))
    if lam_diff > 1e-12:
        failures.append(f"factorized vs enumerated Lambda differ by {lam_diff}")

    prob_sum = sum(
        modes.mode_probability(mode.delays, run_cfg.dist)
        for mode in all_modes
    )
    if abs(prob_sum - 1.0) > 1e-12:
        failures.append(f"mode probabilities sum to {prob_sum}")

    rng = np.random.default_rng(cfg.seed)
    q, nn = aspec.buffer_len, aspec.grid.total_points
    for _ in range(20):
        state = sim.AsyncSimState(history=rng.standard_normal((q, nn)))
        mode = all_modes[rng.integers(len(all_modes))]
        stepped = sim.async_step(state, mode.delays, aspec).augmented
        direct = mode.w @ state.augmented
        if not np.array_equal(stepped, direct):
            failures.append(
                f"simulator/matrix mismatch for delays {mode.delays}"
            )
            break

    print(f"verify: {len(all_modes)} modes, Lambda diff {lam_diff:.3e}, "
          f"probability sum {prob_sum:.15f}")
    if failures:
        for f in failures:
            print(f"FAIL: {f}", file=sys.stderr)
        return EXIT_NUMERICAL
    print("verify: all checks passed")
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, outdir: str, workers: int) -> int:
    run_cfg = build_problem(cfg)
    ens = sim.run_ensemble(run_cfg, cfg.ensemble_size, workers=workers)
    _, _, cert, _, contraction, tc = _certificate_pipeline(cfg, run_cfg)
    e0 = _initial_error(run_cfg)
    mean_sq = ens.mean_sq_error
    sq_norms = ens.error_norms**2

    rows = []
    for eps in cfg.epsilons:
        empirical = ens.exceedance(eps)
        markov = np.minimum(1.0, mean_sq / eps)
        bound = analysis.error_probability_bound(
            tc, e0, eps, cfg.steps, dim=run_cfg.aspec.dim
        ).values
        for k in range(cfg.steps + 1):
            rows.append(
                [k, _fmt(eps), _fmt(empirical[k]), _fmt(markov[k]),
                 _fmt(bound[k])]
            )
    _write_csv(
        os.path.join(outdir, "comparison.csv"),
        ["step", "epsilon", "empirical_probability", "empirical_markov",
         "analytic_bound"],
        rows,
    )

    k_fix = min(cfg.sweep_step, cfg.steps)
    sweep_rows = []
    for eps in cfg.sweep_epsilons:
        empirical = float((sq_norms[:, k_fix] > eps).mean())
        markov = float(min(1.0, mean_sq[k_fix] / eps))
        bound = analysis.error_probability_bound(
            tc, e0, eps, k_fix, dim=run_cfg.aspec.dim
        ).values[k_fix]
        sweep_rows.append(
            [k_fix, _fmt(eps), _fmt(empirical), _fmt(markov), _fmt(bound)]
        )
    _write_csv(
        os.path.join(outdir, "comparison_sweep.csv"),
        ["step", "epsilon", "empirical_probability", "empirical_markov",
         "analytic_bound"],
        sweep_rows,
    )
    print(f"compare: wrote comparison curves for {len(cfg.epsilons)} epsilons "
          f"and a sweep at step {k_fix}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncheat",
        description=(
            "Asynchronous heat-equation simulation and switched-system "
            "analysis"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "analyze", "verify", "compare"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument(
            "--workers", type=int, default=os.cpu_count() or 1,
            help="ensemble worker threads",
        )
        p.add_argument(
            "--cap", type=int, default=None,
            help="mode-enumeration cap (verify only)",
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG

    outdir = args.out or cfg.output_dir or "."
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_IO

    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, outdir, args.workers)
        if args.command == "analyze":
            return cmd_analyze(cfg, outdir)
        if args.command == "verify":
            return cmd_verify(cfg, args.cap or cfg.mode_cap)
        if args.command == "compare":
            return cmd_compare(cfg, outdir, args.workers)
        raise AssertionError(f"unknown command {args.command}")
    except modes.ModeCountError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG
    except (
        analysis.LyapunovError,
        analysis.HorizonExhaustedError,
        modes.DeflationError,
        VerificationFailure,
    ) as exc:
        print(json.dumps({"error": "numerical", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}),
              file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
