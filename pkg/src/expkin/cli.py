"""Command-line harness: single runs, tolerance sweeps, spectrum analysis.

Exit codes: 0 success, 2 config/parse error, 3 solver failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import diagnostics, mechio
from .integrator import ControllerConfig, exp_euler_step, integrate_mechanism
from .kinetics import KineticsError, ThermoState
from .mechio import MechIoError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


class CliError(Exception):
    def __init__(self, message, exit_code):
        self.exit_code = exit_code
        super().__init__(message)


def _read_text(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO)


def load_run(args):
    """Parse config + mechanism and build the initial state."""
    cfg_text = _read_text(args.config)
    try:
        run_cfg = mechio.parse_config(cfg_text)
    except MechIoError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG)
    if args.clamp_mode:
        run_cfg.clamp_mode = args.clamp_mode
    if args.reverse_rate_convention:
        run_cfg.reverse_rate_convention = args.reverse_rate_convention
    mech_path = args.mech or os.path.join(os.path.dirname(os.path.abspath(args.config)),
                                          run_cfg.mechanism_path)
    try:
        mech = mechio.parse_mechanism(_read_text(mech_path))
    except MechIoError as exc:
        raise CliError(f"mechanism error: {exc}", EXIT_CONFIG)
    Y = np.zeros(mech.n_species)
    try:
        for name, frac in run_cfg.Y0.items():
            Y[mech.species_index(name)] = frac
    except KeyError as exc:
        raise CliError(f"config error: species {exc} not in mechanism", EXIT_CONFIG)
    try:
        state0 = ThermoState(T=run_cfg.T0, Y=Y, p=run_cfg.pressure).validate(check_sum=True)
    except KineticsError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG)
    return run_cfg, mech, state0


def controller_from_run(run_cfg, atol=None, rtol=None):
    return ControllerConfig(
        atol=atol if atol is not None else run_cfg.atol,
        rtol=rtol if rtol is not None else run_cfg.rtol,
        safety=run_cfg.safety, facmin=run_cfg.facmin, facmax=run_cfg.facmax,
        embedded_order=run_cfg.embedded_order, h0=run_cfg.h0,
        h_min=run_cfg.h_min, clamp_mode=run_cfg.clamp_mode,
    )


def _out_dir(args, run_cfg):
    out = args.out or run_cfg.output_dir
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output dir {out}: {exc}", EXIT_IO)
    return out


def _run_once(run_cfg, mech, state0, cfg, output_times=None, step_hook=None):
    out = integrate_mechanism(state0, mech, run_cfg.t_final, cfg,
                              output_times=output_times,
                              convention=run_cfg.reverse_rate_convention,
                              step_hook=step_hook)
    return out


def cmd_validate(args):
    load_run(args)
    print("ok")
    return EXIT_OK


def cmd_run(args):
    run_cfg, mech, state0 = load_run(args)
    out_dir = _out_dir(args, run_cfg)
    sample_times = np.linspace(0.0, run_cfg.t_final, run_cfg.n_output_samples)
    result = _run_once(run_cfg, mech, state0, controller_from_run(run_cfg),
                       output_times=sample_times)
    _write_solution(out_dir, mech, result)
    mechio.write_csv(os.path.join(out_dir, "steps.csv"),
                     mechio.STEPS_CSV_HEADER, mechio.steps_csv_rows(result.records))
    if not result.success:
        print(f"solver failure: {result.message}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"completed: {len(result.accepted_records)} accepted steps, "
          f"T(t_final) = {result.y[0]:.2f} K")
    return EXIT_OK


def _write_solution(out_dir, mech, result):
    header = list(mechio.SOLUTION_CSV_HEADER_PREFIX) + \
        [f"Y_{s.name}" for s in mech.species]
    rows = []
    if result.samples is not None:
        for t, y in zip(result.sample_times, result.samples):
            rows.append((float(t), float(y[0]), *[float(v) for v in y[1:]]))
    mechio.write_csv(os.path.join(out_dir, "solution.csv"), header, rows)


def cmd_sweep(args):
    run_cfg, mech, state0 = load_run(args)
    if not run_cfg.sweep_points:
        raise CliError("config error: sweep requires 'sweep atol rtol' lines",
                       EXIT_CONFIG)
    ref_tols = run_cfg.reference_tols
    if ref_tols is None:
        raise CliError("config error: sweep requires a 'reference atol rtol' line",
                       EXIT_CONFIG)
    # Equality is allowed so a sweep can include the reference pair itself
    # (a self-consistency check: that row's error should be ~0).
    for atol, rtol in run_cfg.sweep_points:
        if not (ref_tols[0] <= atol and ref_tols[1] <= rtol):
            raise CliError(
                "config error: reference tolerances must be at least as tight "
                "as every sweep point", EXIT_CONFIG)
    out_dir = _out_dir(args, run_cfg)

    ref = _run_once(run_cfg, mech, state0, controller_from_run(run_cfg, *ref_tols))
    if not ref.success:
        print(f"reference run failed: {ref.message}", file=sys.stderr)
        return EXIT_SOLVER
    y_ref = ref.y
    scale = run_cfg.atol + run_cfg.rtol * np.abs(y_ref)

    def one_point(tols):
        atol, rtol = tols
        start = time.perf_counter()
        res = _run_once(run_cfg, mech, state0, controller_from_run(run_cfg, atol, rtol))
        elapsed = time.perf_counter() - start
        if res.success:
            err = float(np.linalg.norm(res.y - y_ref))
            err_scaled = float(np.linalg.norm((res.y - y_ref) / scale))
        else:
            err = err_scaled = float("nan")
        return (float(atol), float(rtol), float(elapsed), err, err_scaled,
                int(not res.success))

    if args.parallel:
        with ThreadPoolExecutor() as pool:
            rows = list(pool.map(one_point, run_cfg.sweep_points))
    else:
        rows = [one_point(p) for p in run_cfg.sweep_points]
    mechio.write_csv(os.path.join(out_dir, "sweep.csv"),
                     mechio.SWEEP_CSV_HEADER, rows)
    print(f"sweep complete: {len(rows)} points")
    return EXIT_OK


def cmd_spectrum(args):
    run_cfg, mech, state0 = load_run(args)
    out_dir = _out_dir(args, run_cfg)
    every = max(1, args.spectrum_every)
    rows = []
    counter = {"accepted": 0}

    def hook(record, y, J):
        if not record.accepted:
            return
        cost = diagnostics.normalized_step_cost(record)
        if counter["accepted"] % every == 0:
            try:
                stats = diagnostics.jacobian_spectrum(J, t=record.t)
                rows.append((record.t, stats.alpha, stats.beta, stats.omega,
                             stats.max_real, cost))
            except diagnostics.EigensolverError:
                rows.append((record.t, float("nan"), float("nan"), float("nan"),
                             float("nan"), cost))
        else:
            rows.append((record.t, "", "", "", "", cost))
        counter["accepted"] += 1

    result = _run_once(run_cfg, mech, state0, controller_from_run(run_cfg),
                       step_hook=hook)
    mechio.write_csv(os.path.join(out_dir, "spectrum.csv"),
                     mechio.SPECTRUM_CSV_HEADER, rows)
    if not result.success:
        print(f"solver failure: {result.message}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"spectrum complete: {len(rows)} rows")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="expkin",
        description="Adaptive exponential integration of zero-D reactor kinetics",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("sweep", cmd_sweep),
                     ("spectrum", cmd_spectrum), ("validate", cmd_validate)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run config file")
        p.add_argument("--mech", help="mechanism file (overrides config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--clamp-mode", choices=("standard", "paper_literal"))
        p.add_argument("--reverse-rate-convention", choices=("divide", "multiply"))
        p.add_argument("--spectrum-every", type=int, default=1)
        p.add_argument("--parallel", action="store_true")
        p.add_argument("--seed", type=int, default=0,
                       help="reserved; the solver core is deterministic")
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
