"""``swipt-alloc`` command line.

Exit status: 0 on success, 2 for an invalid or infeasible configuration,
3 when a solver fails to converge.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .beamform import BeamformingError, second_moments, slr_directions, slr_value, leakage_matrix, zf_directions
from .channel import CHANNEL_DUMP_FIELDS, STREAM_CHANNEL, STREAM_TUNING, load_channels, sample_uplink, stream_rng
from .energy import eh_threshold_inverse
from .harness import (
    ARMS,
    ExperimentResult,
    allocate_arm,
    design_plan,
    emit,
    run_comparison,
    run_mobility,
)
from .plan import PlanConvergenceError, plan_objectives, solve_plan
from .power import InfeasibleError, SolverError, coupling_from_moments, feasibility, lemma4_coeffs
from .scenario import ConfigError, default_table1, load_config_file, user_labels

log = logging.getLogger("swipt_alloc")

EXIT_OK, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3
DEFAULT_CORR_GRID = (1.0, 0.9, 0.7, 0.5, 0.3, 0.0)

PLAN_COLUMNS = ("r", "group", "user", "q", "b", "alpha", "weighted_sum", "deviation", "iterations")
BEAM_COLUMNS = ("group", "user", "antenna", "re", "im", "slr")
ALLOCATION_COLUMNS = ("group", "user", "p_w", "p_dbm", "rho", "sinr_db", "margin_w", "mean_dominates", "gain_positive")


def _config(args):
    cfg = load_config_file(args.config) if args.config else default_table1()
    if args.profile:
        cfg = cfg.with_profile(args.profile)
    return cfg


def _seed(args, cfg) -> int:
    return cfg.seed if args.seed is None else args.seed


def _channels(args, cfg, seed):
    if getattr(args, "channels", None):
        with open(args.channels, encoding="utf-8") as fh:
            ch = load_channels(fh.read())
        if ch.n_users != cfg.n_users or ch.m_antennas != cfg.m_antennas:
            raise ConfigError(f"channel dump is {ch.n_users}x{ch.m_antennas}, config needs {cfg.n_users}x{cfg.m_antennas}")
        return ch
    return sample_uplink(cfg, stream_rng(seed, args.realization, STREAM_CHANNEL))


def cmd_plan(args, cfg, seed) -> ExperimentResult:
    grid = args.r_grid or [cfg.plan_weight]
    q, b = cfg.existing_plan, cfg.priorities
    rows, summary = [], {}
    for r in grid:
        pv = solve_plan(q, b, r)
        ws, dev = plan_objectives(pv.alpha, q, b)
        summary[repr(float(r))] = {"weighted_sum": ws, "deviation": dev, "iterations": pv.iterations}
        for i, (g, n) in enumerate(user_labels(cfg)):
            rows.append({"r": float(r), "group": g, "user": n, "q": float(q[i]), "b": float(b[i]),
                         "alpha": float(pv.alpha[i]), "weighted_sum": ws, "deviation": dev,
                         "iterations": pv.iterations})
    return ExperimentResult(PLAN_COLUMNS, rows, summary)


def cmd_channels(args, cfg, seed) -> ExperimentResult:
    ch = _channels(args, cfg, seed)
    rows = []
    for i, (g, n) in enumerate(user_labels(cfg)):
        for a, val in enumerate(ch.u[i]):
            rows.append({"group": g, "user": n, "antenna": a + 1, "re": float(val.real), "im": float(val.imag)})
    return ExperimentResult(CHANNEL_DUMP_FIELDS, rows, {"realization": args.realization, "seed": seed})


def cmd_beamform(args, cfg, seed) -> ExperimentResult:
    ch = _channels(args, cfg, seed)
    a_mats = second_moments(ch.u, cfg.sigma_cal_sq)
    nus = zf_directions(ch.u) if args.arm == "zf_baseline" else slr_directions(a_mats)
    rows = []
    for i, (g, n) in enumerate(user_labels(cfg)):
        slr = slr_value(nus[i], a_mats[i], leakage_matrix(a_mats, i)) if cfg.n_users > 1 else float("inf")
        for a, val in enumerate(nus[i]):
            rows.append({"group": g, "user": n, "antenna": a + 1, "re": float(val.real), "im": float(val.imag),
                         "slr": slr})
    return ExperimentResult(BEAM_COLUMNS, rows, {"directions": "zf" if args.arm == "zf_baseline" else "slr"})


def cmd_allocate(args, cfg, seed) -> ExperimentResult:
    ch = _channels(args, cfg, seed)
    plan = design_plan(cfg)
    nus, mt, alloc = allocate_arm(args.arm, cfg, ch.u, plan.alpha, tune_rng=stream_rng(seed, args.realization, STREAM_TUNING))
    cm = coupling_from_moments(mt, cfg.sinr_target)
    theta_hat = [eh_threshold_inverse(t, cfg.eh_circuit) for t in cfg.eh_target]
    coeffs = [lemma4_coeffs(cm, mt, plan.alpha[n], theta_hat[n], n, cfg.sigma0_sq, cfg.sigma1_sq)
              for n in range(cfg.n_users)]
    report = feasibility(cm, coeffs)
    rows = []
    for i, (g, n) in enumerate(user_labels(cfg)):
        rows.append({
            "group": g, "user": n,
            "p_w": float(alloc.p[i]),
            "p_dbm": float(10 * np.log10(alloc.p[i] * 1e3)),
            "rho": float(alloc.rho[i]),
            "sinr_db": float(10 * np.log10(alloc.predicted_sinr[i])),
            "margin_w": float(alloc.chebyshev_margin[i]),
            "mean_dominates": int(report.mean_dominates[i]),
            "gain_positive": int(report.gain_positive[i]),
        })
    summary = {
        "arm": args.arm,
        "total_power_w": alloc.total_power,
        "total_power_dbm": float(alloc.total_power_dbm),
        "spectral_radius": report.spectral_radius,
        "feasible": alloc.feasible,
        "plan_alpha": [float(a) for a in plan.alpha],
    }
    return ExperimentResult(ALLOCATION_COLUMNS, rows, summary)


def cmd_simulate(args, cfg, seed) -> ExperimentResult:
    return run_comparison(cfg, arms=[args.arm], realizations=args.realizations, seed=seed,
                          samples=args.samples, workers=args.workers)


def cmd_compare(args, cfg, seed) -> ExperimentResult:
    return run_comparison(cfg, arms=args.arm, realizations=args.realizations, seed=seed,
                          samples=args.samples, workers=args.workers)


def cmd_mobility(args, cfg, seed) -> ExperimentResult:
    return run_mobility(cfg, args.corr_grid, realizations=args.realizations, seed=seed,
                        samples=args.samples, arm=args.arm, workers=args.workers)


COMMANDS = {
    "plan": cmd_plan,
    "channels": cmd_channels,
    "beamform": cmd_beamform,
    "allocate": cmd_allocate,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "mobility": cmd_mobility,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON scenario file (default: built-in six-user scenario)")
    common.add_argument("--seed", type=int, help="root seed (default: the config's mc.seed)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--profile", choices=("ci", "paper"), help="Monte Carlo sizes: ci = 50x1e4, paper = 1000x1e5")
    common.add_argument("--figure", help="also write a PNG figure to this path")
    common.add_argument("-v", "--verbose", action="store_true")

    single = argparse.ArgumentParser(add_help=False)
    single.add_argument("--channels", help="channel dump CSV to use instead of sampling")
    single.add_argument("--realization", type=int, default=0, help="realization index to sample (default 0)")

    batch = argparse.ArgumentParser(add_help=False)
    batch.add_argument("--realizations", type=int, help="override the number of channel realizations")
    batch.add_argument("--samples", type=int, help="override calibration draws per realization (0 skips MC)")
    batch.add_argument("--workers", type=int, default=1, help="worker processes (output is identical for any value)")

    parser = argparse.ArgumentParser(prog="swipt-alloc", description="SWIPT downlink resource allocation")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("plan", parents=[common], help="redesign the serving plan")
    p.add_argument("--r-grid", type=float, nargs="+", help="trade-off weights to sweep")
    sub.add_parser("channels", parents=[common, single], help="dump one sampled channel realization")
    p = sub.add_parser("beamform", parents=[common, single], help="beam directions for one realization")
    p.add_argument("--arm", choices=ARMS, default="proposed")
    p = sub.add_parser("allocate", parents=[common, single], help="powers and splits for one realization")
    p.add_argument("--arm", choices=ARMS, default="proposed")
    p = sub.add_parser("simulate", parents=[common, batch], help="one arm over many realizations")
    p.add_argument("--arm", choices=ARMS, default="proposed")
    p = sub.add_parser("compare", parents=[common, batch], help="several arms on paired realizations")
    p.add_argument("--arm", choices=ARMS, nargs="+", default=list(ARMS))
    p = sub.add_parser("mobility", parents=[common, batch], help="SINR and coverage loss under channel drift")
    p.add_argument("--corr-grid", type=float, nargs="+", default=list(DEFAULT_CORR_GRID))
    p.add_argument("--arm", choices=("proposed", "proposed_suboptimal"), default="proposed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        seed = _seed(args, cfg)
        result = COMMANDS[args.command](args, cfg, seed)
    except (ConfigError, InfeasibleError, BeamformingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, PlanConvergenceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    text = emit(result, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    if args.figure:
        from .plotting import FIGURES

        if args.command in FIGURES:
            FIGURES[args.command](result, args.figure)
        else:
            print(f"note: no figure for '{args.command}'", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
