"""Command-line front end.

Subcommands: generate-data, sample, estimate-temperature, calibrate, train,
compare, report. Exit codes: 0 success, 2 bad configuration or malformed
files, 3 numerical estimation failure.
"""

import argparse
import sys

import numpy as np

from . import annealer as annealer_mod
from . import harness, learning, thermometry
from .errors import EstimationError
from .model import load_control_parameters


def _load_experiment_config(args, preset=None):
    mapping = harness.load_config(args.config) if args.config else {}
    cfg = harness.config_from_mapping(mapping, preset=preset)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "output", None):
        cfg.output = args.output
    return cfg


def _cmd_generate_data(args):
    ds = harness.generate_bas(args.side)
    harness.save_dataset(ds, args.output)
    print(f"wrote {len(ds)} {args.side}x{args.side} patterns to {args.output}")
    return 0


def _cmd_sample(args):
    cfg = _load_experiment_config(args)
    graph = cfg.graph()
    control = load_control_parameters(args.control, graph)
    profile = cfg.profile(graph, cfg.annealer.get("location_seed", 0))
    samples = annealer_mod.program_and_sample(
        profile, control, args.r, np.random.SeedSequence(args.seed),
        scale=args.scale)
    annealer_mod.save_samples(samples, args.output)
    print(f"wrote {len(samples)} samples (scale {args.scale:g}) "
          f"to {args.output}")
    return 0


def _cmd_estimate_temperature(args):
    if args.x == 1.0:
        raise harness.ConfigError(
            "x = 1 leaves the control parameters unchanged; the two sample "
            "sets would be statistically identical")
    native = annealer_mod.load_samples(args.native)
    scaled = annealer_mod.load_samples(args.scaled)
    est = thermometry.estimate_temperature_regression(native, scaled, args.x)
    print("t_eff_hat = %.17g" % est.t_eff)
    print("beta_eff = %.17g" % est.beta_eff)
    print("slope = %.17g" % est.slope)
    print("intercept = %.17g" % est.intercept)
    print("r_coeff = %.17g" % est.r_coeff)
    print("n_points = %d" % est.n_points)
    if args.diagnostics:
        thermometry.save_regression_diagnostics(est, args.x, args.diagnostics)
        print(f"wrote point cloud to {args.diagnostics}")
    return 0


def _cmd_calibrate(args):
    cfg = _load_experiment_config(args)
    graph = cfg.graph()
    profile = cfg.profile(graph, cfg.annealer.get("location_seed", 0))
    est = annealer_mod.calibrate_persistent_bias(
        profile, args.r, np.random.SeedSequence(args.seed),
        temperature=args.temperature, rounds=args.rounds)
    harness.save_bias_estimate(est, args.output)
    print("max |dh| = %.6g" % np.abs(est.h).max())
    print("max |dJ| = %.6g" % (np.abs(est.j[graph.mask]).max()
                               if graph.n_edges else 0.0))
    print(f"wrote bias estimate to {args.output}")
    return 0


def _cmd_train(args):
    cfg = _load_experiment_config(args)
    label = args.algorithm
    cfg.curves = ((harness._sanitize(label), label, {}),)
    cfg.repeats = 1
    outdir = harness.run_experiment(cfg)
    print(f"wrote trace and summary to {outdir}")
    return 0


def _cmd_compare(args):
    cfg = _load_experiment_config(args, preset=args.preset)
    outdir = harness.run_experiment(cfg, workers=args.workers)
    print(f"wrote {len(cfg.curves) * cfg.repeats} traces and summary "
          f"to {outdir}")
    return 0


def _cmd_report(args):
    if args.against:
        mismatches = harness.compare_directories(args.outdir, args.against)
        if mismatches:
            for m in mismatches:
                print(m, file=sys.stderr)
            return 3
        print("directories match (wall_ms ignored)")
        return 0
    lines = harness.recompute_summary(args.outdir)
    print(harness.SUMMARY_HEADER)
    for line in lines:
        print(line)
    if not harness.summary_matches(args.outdir):
        print("stored summary.csv disagrees with the traces", file=sys.stderr)
        return 2
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="qarbm",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="write a bars-and-stripes CSV")
    g.add_argument("--side", type=int, default=4)
    g.add_argument("--output", required=True)
    g.set_defaults(func=_cmd_generate_data)

    s = sub.add_parser("sample", help="program the emulator and save samples")
    s.add_argument("--control", required=True,
                   help="control-parameter file (J, h)")
    s.add_argument("--config", default=None)
    s.add_argument("--r", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--output", required=True)
    s.set_defaults(func=_cmd_sample)

    e = sub.add_parser("estimate-temperature",
                       help="regression thermometry from two sample files")
    e.add_argument("native")
    e.add_argument("scaled")
    e.add_argument("--x", type=float, required=True)
    e.add_argument("--diagnostics", default=None)
    e.set_defaults(func=_cmd_estimate_temperature)

    c = sub.add_parser("calibrate",
                       help="estimate persistent control offsets")
    c.add_argument("--config", default=None)
    c.add_argument("--r", type=int, default=100000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--temperature", type=float, default=None)
    c.add_argument("--rounds", type=int, default=5,
                   help="refinement rounds; 1 = plain single-pass inversion")
    c.add_argument("--output", required=True)
    c.set_defaults(func=_cmd_calibrate)

    t = sub.add_parser("train", help="run one training job")
    t.add_argument("--config", default=None)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--algorithm", default="QuALe@T_eff")
    t.add_argument("--output", default=None)
    t.set_defaults(func=_cmd_train)

    m = sub.add_parser("compare", help="run a multi-curve experiment")
    m.add_argument("--config", default=None)
    m.add_argument("--preset", choices=("algorithms", "gadgets"),
                   default=None)
    m.add_argument("--seed", type=int, required=True)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--output", default=None)
    m.set_defaults(func=_cmd_compare)

    r = sub.add_parser("report", help="recompute summaries, compare runs")
    r.add_argument("outdir")
    r.add_argument("--against", default=None,
                   help="second output directory for a determinism check")
    r.set_defaults(func=_cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:  # ConfigError, FormatError, CapacityError
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
