"""Command line entry point: ``dphawkes <subcommand> ...``.

Exit codes: 0 success, 1 configuration/input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .discretize import BinConfig, bin_counts, build_design, estimate_R, read_bins, write_bins
from .estimator import ConvergenceError
from .harness import ConfigError, ExperimentConfig, fit, kernel_overlay, resolve_model, run_sweep
from .hawkes_sim import EnvelopeError, horizon_for_events, read_events, simulate, write_events
from .optimizers import NoisePlan, PrivacyBudget, calibrate_cg, calibrate_pgd, epsilon_of_sigma
from .recovery import discretize_truth, relative_error, rescale

log = logging.getLogger("dphawkes")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _cmd_simulate(args) -> int:
    model = resolve_model(args.model)
    if (args.horizon is None) == (args.events is None):
        raise ConfigError("give exactly one of --horizon and --events")
    horizon = args.horizon if args.horizon is not None else horizon_for_events(model, args.events)
    stream = simulate(model, horizon, np.random.default_rng(args.seed))
    write_events(stream, args.output)
    log.info("wrote %d events on (0, %.6g] to %s", len(stream), horizon, args.output)
    return EXIT_OK


def _cmd_discretize(args) -> int:
    stream = read_events(args.input, horizon=args.horizon, dim=args.dim)
    config = BinConfig(args.delta, stream.horizon, args.lag)
    write_bins(bin_counts(stream, config), args.output)
    return EXIT_OK


def _plan_for(method: str, args, rho: float, R: float) -> NoisePlan:
    if args.sigma2 is not None:
        eps = epsilon_of_sigma(args.sigma2, args.iters, args.delta, rho, R, method)
        return NoisePlan.manual(
            args.sigma2, R=R, radius=rho, epsilon=eps if math.isfinite(eps) else None, delta=args.delta, iterations=args.iters
        )
    budget = PrivacyBudget(args.epsilon, args.delta, args.iters)
    return calibrate_pgd(budget, rho, R) if method == "pgd" else calibrate_cg(budget, rho, R)


def _cmd_estimate(args) -> int:
    bins = read_bins(args.bins, args.bin_width, args.lag)
    design = build_design(bins)
    if args.method == "cls":
        plan = NoisePlan.manual(0.0)
    else:
        if args.radius is None:
            raise ConfigError("--radius is required for pgd and cg")
        if (args.epsilon is None) == (args.sigma2 is None):
            raise ConfigError("give exactly one of --epsilon and --sigma2")
        R = args.R
        if R is None:
            R = estimate_R(design)
            log.warning("no --R given; using the data-dependent R=%.6g, which voids the privacy guarantee", R)
        plan = _plan_for(args.method, args, args.radius, R)
    U, final = fit(
        design,
        args.method,
        args.radius,
        plan,
        args.iters,
        rng=args.seed,
        step_constant=args.step_constant,
        cg_schedule=args.schedule,
    )
    est = rescale(U, args.bin_width)
    out = {
        "theta": U.tolist(),
        "H_blocks": est.blocks.tolist(),
        "eta": est.eta_hat.tolist(),
        "delta_bin": args.bin_width,
        "lag": args.lag,
        "sigma2": plan.sigma2,
        "epsilon": plan.epsilon,
        "delta": plan.delta,
        "K": None if args.method == "cls" else args.iters,
        "seed": args.seed,
        "method": args.method,
        "final_loss": final,
    }
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


def _cmd_accountant(args) -> int:
    if (args.epsilon is None) == (args.sigma2 is None):
        raise ConfigError("give exactly one of --epsilon and --sigma2")
    if args.sigma2 is not None:
        eps = epsilon_of_sigma(args.sigma2, args.iters, args.delta, args.radius, args.R, args.method)
        print(f"epsilon={eps!r}" if math.isfinite(eps) else "epsilon=inf (non-private)")
    else:
        budget = PrivacyBudget(args.epsilon, args.delta, args.iters)
        calibrate = calibrate_pgd if args.method == "pgd" else calibrate_cg
        print(f"sigma2={calibrate(budget, args.radius, args.R).sigma2!r}")
    return EXIT_OK


def _cmd_recover(args) -> int:
    obj = json.loads(Path(args.estimate).read_text())
    delta_bin = float(obj["delta_bin"])
    est = rescale(np.array(obj["theta"]), delta_bin)
    truth = discretize_truth(resolve_model(args.truth), delta_bin, est.lag)
    if truth.dim != est.dim:
        raise ConfigError(f"estimate has {est.dim} dims, truth has {truth.dim}")
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "grid_t", "h_hat", "h_true"])
        for k, t in enumerate(est.grid):
            for i in range(est.dim):
                for j in range(est.dim):
                    writer.writerow([i, j, repr(float(t)), repr(float(est.blocks[k, i, j])), repr(float(truth.blocks[k, i, j]))])
        writer.writerow(["summary", "relative_error", "", repr(relative_error(est, truth)), ""])
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    rows = run_sweep(config)
    failed = sum(row.status != "ok" for row in rows)
    log.info("%d rows, %d failed", len(rows), failed)
    return EXIT_OK


def _cmd_overlay(args) -> int:
    config = ExperimentConfig.load(args.config)
    try:
        i, j = (int(x) for x in args.entry.split(","))
    except ValueError as exc:
        raise ConfigError(f"--entry must look like 'i,j', got {args.entry!r}") from exc
    if args.interpolation:
        config.interpolation = args.interpolation
    rows = kernel_overlay(config, (i, j), args.sigma2, delta_index=args.delta_index)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "h_true", "h_hat"])
        for row in rows:
            writer.writerow([format(x, ".17g") for x in row])
    return EXIT_OK


def _add_privacy_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--delta", type=float, default=1e-5, help="privacy delta")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--radius", type=float, help="ball radius on U (Delta*B or Delta*r)")
    p.add_argument("--R", type=float, help="data-scale bound R")


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not argparse's default exit 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dphawkes", description="Private estimation of multivariate Hawkes kernels.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a Hawkes event stream")
    p.add_argument("--model", required=True, help="builtin name (paper-2d, paper-4d) or model JSON")
    p.add_argument("--horizon", type=float)
    p.add_argument("--events", type=float, help="target expected event count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("discretize", help="bin an event CSV into counts")
    p.add_argument("--delta", type=float, required=True, help="bin width")
    p.add_argument("--lag", type=int, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--horizon", type=float, help="observation horizon (default: last event time)")
    p.add_argument("--dim", type=int, help="number of dims (default: max dim index + 1)")
    p.set_defaults(func=_cmd_discretize)

    p = sub.add_parser("estimate", help="fit the kernel matrix from bin counts")
    p.add_argument("--method", choices=["pgd", "cg", "cls"], required=True)
    p.add_argument("--bins", required=True)
    p.add_argument("--bin-width", type=float, required=True)
    p.add_argument("--lag", type=int, required=True)
    _add_privacy_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step-constant", choices=["appendix", "theorem"], default="appendix")
    p.add_argument("--schedule", choices=["fixed", "classical"], default="fixed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("accountant", help="convert between epsilon and sigma^2")
    p.add_argument("--method", choices=["pgd", "cg"], required=True)
    _add_privacy_args(p)
    p.set_defaults(func=_cmd_accountant)

    p = sub.add_parser("recover", help="compare an estimate with a ground-truth model")
    p.add_argument("--estimate", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("sweep", help="run an experiment sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("overlay", help="dense true/estimated curve for one kernel entry")
    p.add_argument("--config", required=True)
    p.add_argument("--entry", required=True, help="i,j (0-indexed)")
    p.add_argument("--sigma2", type=float, default=0.0)
    p.add_argument("--delta-index", type=int, default=0)
    p.add_argument("--interpolation", choices=["step", "linear"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_overlay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.command == "accountant" and (args.radius is None or args.R is None):
        log.error("accountant needs --radius and --R")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (np.linalg.LinAlgError, EnvelopeError, ConvergenceError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, IndexError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
