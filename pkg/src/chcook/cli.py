"""Command-line entry point.

Usage::

    chcook <experiment> --config PATH [--out DIR] [--seed N] [--threads N]

``<experiment>`` must match the ``experiment`` key of the configuration.
Every run writes into the output directory:

``<experiment>.csv``
    Data table with a header row.  For ``simulate`` this is the trajectory
    snapshot file with columns ``t, c_0, ..., c_M`` (one row per recorded
    step, coefficients in the cosine basis ``e_0 = 1``,
    ``e_i = sqrt(2) cos(i pi theta)``), written with ``repr`` precision.
``<experiment>.summary.json``
    Key scalars and the pass/fail verdict (``null`` when the driver has none).
``<experiment>.<part>.csv``
    Secondary tables of drivers that produce more than one (``control``).
``run.meta.json``
    Resolved configuration, package versions, thread count and a timestamp.

CSV bodies depend only on the configuration and seed, never on
``--threads``.  Exit status: 0 on success, 1 on driver failure, 2 on a
configuration error, 3 on numerical blow-up (the partial CSV and summary
are still written).
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import platform
import sys
from dataclasses import replace

import numpy as np

from . import __version__, kernels
from .config import EXPERIMENTS, ConfigError, RunConfig, load_config
from .dynamics import DIAG_BASIC, NumericalBlowup, run_ensemble
from .experiments import (
    control_residual,
    energy_report,
    invariant_convergence,
    mixing_estimate,
    mixing_report,
    random_pairs,
    reflection_profile,
    reflection_report,
    sample_measure,
    semigroup_convergence,
    smoothing_check,
    steering_check,
    strong_feller_check,
)
from .experiments.pathwise import initial_ensemble
from .experiments.report import ExperimentReport
from .measures import clipped_square, constant_one, exceedance_mass, gaussian_bump, tanh_mode
from .spectral import synthesize

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3


def initial_state(rc: RunConfig) -> np.ndarray:
    """Start field from the ``init`` options: ``c e_0``, a ``mu_c`` draw or a single mode."""
    s, o = rc.solver, rc.options
    if o["init"] == "mu_c":
        return initial_ensemble(s, 1)[0]
    x = np.zeros(s.M + 1)
    x[0] = s.c
    if o["init"] == "mode":
        x[o["init_mode"]] += o["init_amplitude"]
    return x


def _snapshot_report(cfg, steps, records, acc, blowup=None):
    cols = ["t"] + [f"c_{i}" for i in range(cfg.M + 1)]
    rows = [[float(k * cfg.dt)] + [float(v) for v in rec] for k, rec in zip(steps, records)]
    snaps = np.asarray(records).reshape(-1, cfg.M + 1)
    summary = {
        "steps": cfg.n_steps,
        "stability_number": cfg.stability_number(),
        "mean_drift": float(np.max(np.abs(snaps[:, 0] - cfg.c))) if len(snaps) else 0.0,
        "overshoot": float(acc[kernels.ACC_OVERSHOOT]),
        "drift_l1": float(acc[kernels.ACC_DRIFT_L1]),
        "substepped_steps": int(acc[kernels.ACC_SUBSTEPS]),
        "final_sup": float(np.max(np.abs(synthesize(snaps[-1], cfg.P)))) if len(snaps) else None,
    }
    if blowup is not None:
        summary["blowup_step"] = blowup
    return ExperimentReport("simulate", cols, rows, summary,
                            passed=None if blowup is None else False)


def run_simulate(rc, threads):
    cfg = rc.solver
    x0 = initial_state(rc)
    every = rc.options["record_every"]
    steps = np.arange(0, cfg.n_steps + 1, every)
    if steps[-1] != cfg.n_steps:
        steps = np.append(steps, cfg.n_steps)
    try:
        res = run_ensemble(x0, cfg, [0], record_steps=steps, diag=DIAG_BASIC, threads=threads)
    except NumericalBlowup as exc:
        p = exc.partial
        recs = p.records[0] if p.records is not None else np.empty((0, cfg.M + 1))
        rep = _snapshot_report(cfg, steps[:len(recs)], recs, p.acc[0], blowup=exc.step)
        raise _Blowup(rep, exc) from exc
    return [_snapshot_report(cfg, steps, res.records[0], res.acc[0])]


def run_sample_measure(rc, threads):
    s, o = rc.solver, rc.options
    return [sample_measure(s.c, s.M, s.P, s.spec, o["kind"], o["count"], rc.master_seed,
                           o["keep"])]


def run_invariant(rc, threads):
    s, o = rc.solver, rc.options
    return [invariant_convergence(s.c, s.M, s.P, s.spec.lam, o["n_list"],
                                  [exceedance_mass(o["exceed_level"])], o["count"],
                                  rc.master_seed)]


def run_reflection(rc, threads):
    o = rc.options
    est = reflection_profile(rc.solver, o["n_list"], o["ensemble"], o["windows"],
                             threads=threads, chunk_size=o["chunk_size"])
    return [reflection_report(est)]


def _bounded_observables(o):
    return [tanh_mode(1, o["tanh_gain"]), clipped_square, gaussian_bump(10.0), constant_one]


def run_semigroup(rc, threads):
    o = rc.options
    return [semigroup_convergence(initial_state(rc), rc.solver, _bounded_observables(o),
                                  o["n_list"], o["ensemble"], threads, o["chunk_size"])]


def run_strong_feller(rc, threads):
    s, o = rc.solver, rc.options
    pairs = random_pairs(o["pairs"], s.c, s.M, s.P, rc.master_seed, modes=o["pair_modes"])
    phis = [tanh_mode(1, o["tanh_gain"]), gaussian_bump(10.0), exceedance_mass(0.5)]
    reps = [strong_feller_check(x, y, s, phis, o["ensemble"], threads, o["chunk_size"], pair_id=k)
            for k, (x, y) in enumerate(pairs)]
    rows = [r for rep in reps for r in rep.rows]
    ok = all(rep.passed for rep in reps)
    return [ExperimentReport("strong-feller", reps[0].columns, rows,
                             {"lambda": s.spec.lam, "t": s.T, "pairs": len(pairs)}, passed=ok)]


def run_control(rc, threads):
    s, o = rc.solver, rc.options
    res = control_residual(o["x_coeffs"], o["y_coeffs"], s.T, s.spec, o["P_list"],
                           floor=o["residual_floor"])
    steer = steering_check(o["x_coeffs"], o["y_coeffs"], s, o["noise_scales"], o["ensemble"],
                           threads=threads)
    smooth = smoothing_check()
    res.summary.update({"steering": dict(zip(steer.column("noise_scale"),
                                             steer.column("hit_fraction"))),
                        "smoothing_passed": smooth.passed,
                        "smoothing_rel_change": smooth.summary["rel_change"]})
    res.passed = bool(res.passed and smooth.passed)
    steer.name, smooth.name = "control.steering", "control.smoothing"
    return [res, steer, smooth]


def _lags(o, dt):
    fine = np.arange(0.0, o["lag_fine_until"], o["lag_fine_step"])
    coarse = np.arange(o["lag_fine_until"], o["lag_max"] + 1e-9, o["lag_coarse_step"])
    lags = np.unique(np.round(np.concatenate([fine, coarse]) / dt).astype(int)) * dt
    return lags[lags <= o["lag_max"] + 1e-12]


def run_mixing(rc, threads):
    s, o = rc.solver, rc.options
    x = np.zeros(s.M + 1)
    x[0] = s.c
    x[o["init_mode"]] += o["init_amplitude"]
    y = 2 * x[0] * np.eye(1, s.M + 1)[0] - x
    rep = mixing_estimate(s, [x, y], _lags(o, s.dt), o["ensemble"],
                          [tanh_mode(1, o["tanh_gain"]), constant_one],
                          reference_count=o["reference_count"], threads=threads,
                          chunk_size=o["chunk_size"])
    return [mixing_report(rep)]


def run_energy(rc, threads):
    o = rc.options
    return [energy_report(rc.solver, o["ensemble"], o["q_order"], windows=o["windows"])]


DRIVERS = {
    "simulate": run_simulate,
    "sample-measure": run_sample_measure,
    "invariant-convergence": run_invariant,
    "reflection": run_reflection,
    "semigroup": run_semigroup,
    "strong-feller": run_strong_feller,
    "control": run_control,
    "mixing": run_mixing,
    "energy": run_energy,
}


class _Blowup(Exception):
    def __init__(self, report, exc):
        super().__init__(str(exc))
        self.report = report


def _versions():
    import scipy

    return {"chcook": __version__, "backend": kernels.BACKEND, "numpy": np.__version__,
            "scipy": scipy.__version__, "python": platform.python_version()}


def _write_meta(rc, out_dir, threads, status):
    meta = {"config": rc.echo(), "config_text": rc.raw, "versions": _versions(),
            "threads": threads, "status": status,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    path = os.path.join(out_dir, "run.meta.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def _verdict(p):
    return {True: "PASS", False: "FAIL", None: "DONE"}[p]


def _scalars(summary, limit=4):
    parts = []
    for k, v in summary.items():
        if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool):
            parts.append(f"{k}={v:.6g}")
        if len(parts) == limit:
            break
    return " ".join(parts)


def run(rc: RunConfig, out_dir: str | None = None, threads: int = 1, stream=None) -> int:
    """Run the configured driver, write its artifacts and return the exit status."""
    stream = sys.stdout if stream is None else stream
    out_dir = out_dir or rc.output_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out_dir}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    status = EXIT_OK
    try:
        reports = DRIVERS[rc.experiment](rc, threads)
    except _Blowup as exc:
        reports = [exc.report]
        status = EXIT_BLOWUP
        print(f"error: numerical blow-up: {exc}", file=sys.stderr)
    except NumericalBlowup as exc:
        reports = [ExperimentReport(rc.experiment, ["blowup_step"], [[exc.step]],
                                    {"blowup_step": exc.step}, passed=False)]
        status = EXIT_BLOWUP
        print(f"error: numerical blow-up: {exc}", file=sys.stderr)
    except Exception as exc:  # noqa: BLE001 - surfaced as a driver failure
        print(f"error: {rc.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        _write_meta(rc, out_dir, threads, "failed")
        return EXIT_FAILURE
    try:
        for rep in reports:
            csv_path, _ = rep.write(out_dir)
            print(f"{rep.name}: {_verdict(rep.passed)} {_scalars(rep.summary)} -> {csv_path}",
                  file=stream)
        _write_meta(rc, out_dir, threads, "blowup" if status == EXIT_BLOWUP else "ok")
    except OSError as exc:
        print(f"error: writing {getattr(exc, 'filename', out_dir)}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chcook", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"chcook {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} driver")
        p.add_argument("--config", required=True, metavar="PATH", help="run configuration")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="output directory (default: output_dir from config, else ./out)")
        p.add_argument("--seed", type=int, default=None, metavar="N",
                       help="master seed, overrides the config")
        p.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker threads (results do not depend on it)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rc = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if rc.experiment != args.experiment:
        print(f"error: {args.config}: experiment = {rc.experiment} does not match subcommand "
              f"{args.experiment}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        rc = replace(rc, master_seed=args.seed, solver=replace(rc.solver, seed=args.seed))
    return run(rc, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
