"""Command-line front end: ``run``, ``sweep``, ``verify`` and ``oracle``."""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import checks, config, timeops
from .errors import (ClockDynError, ConfigError, NonConvergent, PulseTooWide, PulseUnresolvable,
                     QuasimonochromaticWarning, WindowGridMisaligned, WraparoundDetected)
from .joint import WindowMap, dump_state, evolve
from .oracle import MAX_DENSE_DIM, build_dense, exact_evolve
from .protocol import MODES, ModulationObserver, protocol_fidelity
from .spectral import free_step, make_gaussian_pulse

log = logging.getLogger("clockdyn")

EXIT_OK, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2

SWEEP_RESULT_COLUMNS = ("status", "D_final", "D_excess", "min_margin", "F_avg", "D_free", "oracle_error",
                        "truncated", "message")


# ---------------------------------------------------------------- output helpers

def write_trajectory_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(timeops.CSV_COLUMNS)
        for rec in records:
            w.writerow(rec.as_row())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _min_margin(records) -> float:
    margins = []
    for rec in records:
        try:
            margins.append(timeops.uncertainty_check(rec)[1])
        except ClockDynError:
            continue
    return min(margins) if margins else math.nan


# ---------------------------------------------------------------- simulation core

def _warn_coverage(setup, duration: float) -> None:
    sched = setup.schedule
    if not sched.windows:
        return
    lo = sched.origin
    hi = sched.origin + len(sched.windows) * sched.window_width
    start = setup.pulse.x0
    end = start + timeops.lambda_stats(_clock(setup), setup.disp, 1.0)[0] * duration
    spread = 3.0 / setup.pulse.omega
    if min(start, end) - spread < lo or max(start, end) + spread > hi:
        log.warning("schedule windows [%g, %g] do not cover the clock path; uncovered positions are uncoupled",
                    lo, hi)


def _clock(setup):
    # the initial joint state is a product, so the clock factor is the configured pulse
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuasimonochromaticWarning)
        return make_gaussian_pulse(setup.grid, setup.pulse)


def simulate(cfg: config.SimConfig):
    """Run one configuration; returns ``(setup, trajectory, summary)``."""
    setup = config.build(cfg)
    _warn_coverage(setup, cfg.run.duration)
    wmap = WindowMap.build(setup.grid, setup.schedule.window_width, setup.schedule.origin,
                           tol=cfg.windows.align_tol)
    obs = [ModulationObserver(setup.schedule, cfg.run.mode)]
    traj = evolve(setup.state, setup.schedule, setup.disp, setup.step, cfg.run.duration, obs,
                  h_engine=setup.h_engine, c=setup.c, sentinel=cfg.run.sentinel, window_map=wmap)
    last = traj.records[-1]
    summary = {
        "t_final": last.t,
        "D_final": last.D,
        "D_excess": last.D_excess,
        "mean_T_final": last.mean_T,
        "norm_final": last.norm,
        "min_margin": _min_margin(traj.records),
        "n_records": len(traj.records),
        "truncated": traj.truncated,
        "mode": cfg.run.mode,
    }
    if len(traj.records) >= 10:
        fit = timeops.degradation_series(traj.records)
        summary.update(q=fit.q, sqrt_q=fit.sqrt_q, var_Lambda=fit.var_Lambda)
        summary["pauli_rate"] = timeops.pauli_rate(traj.records)
    return setup, traj, summary


def _fidelity(cfg, setup):
    if setup.target is None:
        return None
    return protocol_fidelity(setup.target, setup.schedule, _clock(setup), setup.disp, setup.step,
                             cfg.run.duration, setup.h_engine, c=setup.c, mode=cfg.run.mode,
                             sentinel=cfg.run.sentinel)


def _apply_flags(cfg, args):
    if getattr(args, "mode", None):
        cfg.run.mode = args.mode
    if getattr(args, "out", None):
        cfg.run.out = args.out
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_flags(config.load(args.config), args)
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    setup, traj, summary = simulate(cfg)
    write_trajectory_csv(traj.records, out / "trajectory.csv")
    if cfg.run.dump_state:
        dump_state(traj.final, out / "final_state.qclk")
    if cfg.run.fidelity:
        rep = _fidelity(cfg, setup)
        if rep is not None:
            (out / "fidelity.txt").write_text(rep.to_text())
            summary["F_avg"] = rep.F_avg
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if not args.quiet:
        for k in sorted(summary):
            print(f"{k} = {_fmt(summary[k])}")
    if traj.truncated:
        print(f"error: probability reached the grid edge at t={traj.records[-1].t:g}; run truncated",
              file=sys.stderr)
        return EXIT_GUARD
    return EXIT_OK


# ---------------------------------------------------------------- sweep

def _sweep_point(task):
    """Worker: run one sweep point and return its summary row (never raises)."""
    tree, deltas, want_oracle, free_disp = task
    row = {k: "" for k in SWEEP_RESULT_COLUMNS}
    try:
        cfg = config.with_overrides(config.from_dict(tree), deltas)
        setup, traj, summary = simulate(cfg)
        row.update(status="ok", D_final=summary["D_final"], D_excess=summary["D_excess"],
                   min_margin=summary["min_margin"], truncated=summary["truncated"])
        if traj.truncated:
            row.update(status="guard", message="wraparound")
        rep = _fidelity(cfg, setup) if setup.target is not None and setup.h_engine.shape[0] <= 4 else None
        if rep is not None:
            row["F_avg"] = rep.F_avg
        if free_disp is not None:
            disp = config.build_dispersion(config.DispersionConfig(**free_disp))
            _, var = timeops.time_stats(free_step(_clock(setup), disp, cfg.run.duration), setup.c)
            row["D_free"] = math.sqrt(var)
        if want_oracle:
            if setup.state.dim * setup.grid.n_points > MAX_DENSE_DIM:
                row["message"] = "oracle skipped: dense dimension too large"
            else:
                dense = build_dense(setup.grid, setup.disp, setup.h_engine, setup.schedule)
                ref = exact_evolve(dense, setup.state, traj.records[-1].t)
                row["oracle_error"] = float(np.max(np.abs(traj.final.flat() - ref.flat())))
    except (ClockDynError, ValueError, RuntimeError) as exc:
        row.update(status="failed", message=f"{type(exc).__name__}: {exc}".replace("\n", " "))
    return row


def run_sweep(cfg: config.SimConfig, jobs: int = 1):
    """Evaluate the cartesian product of ``cfg.sweep.axes``; returns ``(axis_names, rows)``."""
    if cfg.sweep is None:
        raise ConfigError("sweep: section missing", "sweep")
    names = list(cfg.sweep.axes)
    points = list(itertools.product(*(cfg.sweep.axes[n] for n in names)))
    tree = cfg.to_dict()
    tree.pop("sweep", None)
    free = None
    if cfg.sweep.degradation_dispersion is not None:
        free = asdict(cfg.sweep.degradation_dispersion)
    tasks = [(tree, dict(zip(names, p)), cfg.sweep.oracle, free) for p in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    rows = [dict(zip(names, p), **r) for p, r in zip(points, results)]
    return names, rows


def _oracle_slope(names, rows):
    if names != ["dt"]:
        return None
    pts = [(r["dt"], r["oracle_error"]) for r in rows if isinstance(r["oracle_error"], float)]
    if len(pts) < 2:
        return None
    dts, errs = map(np.array, zip(*pts))
    return checks.fit_order(dts, errs)


def cmd_sweep(args) -> int:
    cfg = _apply_flags(config.load(args.config), args)
    if cfg.sweep is None:
        raise ConfigError(f"{args.config}: sweep section missing", "sweep")
    jobs = args.jobs or cfg.sweep.jobs
    names, rows = run_sweep(cfg, jobs)
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", *names, *SWEEP_RESULT_COLUMNS])
        for i, r in enumerate(rows):
            w.writerow([i, *(_fmt(r[n]) for n in names), *(_fmt(r[c]) for c in SWEEP_RESULT_COLUMNS)])
    failed = sum(r["status"] != "ok" for r in rows)
    if not args.quiet:
        print(f"{len(rows)} points, {failed} flagged -> {out / 'sweep.csv'}")
        slope = _oracle_slope(names, rows)
        if slope is not None:
            print(f"oracle error order = {slope:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- verify / oracle

def cmd_verify(args) -> int:
    results = checks.run_battery(fault=args.inject_fault)
    if not args.quiet:
        for c in results:
            print(c.line())
    bad = [c for c in results if not c.passed]
    print(f"{len(results) - len(bad)}/{len(results)} checks passed")
    return 1 if bad else EXIT_OK


ORACLE_INSTANCES = ("n16",)


def cmd_oracle(args) -> int:
    dts = np.array([4e-2, 2e-2, 1e-2, 5e-3])
    errs = checks.oracle_errors(dts, splitting=args.splitting)
    order = checks.fit_order(dts, errs)
    if not args.quiet:
        for dt, e in zip(dts, errs):
            print(f"dt={dt:<8g} max_deviation={e:.6e}")
    print(f"fitted order = {order:.4f}")
    target = 2.0 if args.splitting == "strang" else 1.0
    ok = abs(order - target) <= 0.2 and (args.splitting != "strang" or errs[2] <= 5e-6)
    return EXIT_OK if ok else 1


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clockdyn", description=__doc__)
    p.add_argument("--quiet", action="store_true", help="suppress per-item output")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_config=True):
        sp.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
        if with_config:
            sp.add_argument("--config", required=True, help="JSON configuration file")
            sp.add_argument("--out", help="output directory (overrides run.out)")
            sp.add_argument("--mode", choices=MODES, help="modulation-factor mode override")

    sp = sub.add_parser("run", help="run one simulation")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="cartesian parameter sweep")
    common(sp)
    sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: sweep.jobs)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="run the invariant battery")
    common(sp, with_config=False)
    sp.add_argument("--inject-fault", choices=checks.FAULTS, default=None, help="test hook")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("oracle", help="split-step vs dense comparison on a small instance")
    common(sp, with_config=False)
    sp.add_argument("--instance", choices=ORACLE_INSTANCES, default="n16")
    sp.add_argument("--splitting", choices=("strang", "lie"), default="strang")
    sp.set_defaults(func=cmd_oracle)
    return p


def _log_warning(message, category, filename, lineno, file=None, line=None):
    log.warning("%s: %s", category.__name__, message)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    warnings.showwarning = _log_warning
    warnings.filterwarnings("once")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    except (PulseUnresolvable, PulseTooWide) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WindowGridMisaligned, WraparoundDetected, NonConvergent) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
