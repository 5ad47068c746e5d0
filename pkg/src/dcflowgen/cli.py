"""Command line entry point: ``dcflowgen {generate,validate,deconvolve,degcheck}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .deconvolver import AckModel, DeconvolutionConfig, deconvolve, reconvolve_check
from .degseq import erdos_gallai_check, havel_hakimi
from .dist import ks_distance, read_distribution_csv, write_distribution_csv
from .mapper import DRR_POLICIES
from .pipeline import PROFILE_FILES, PipelineError, RunConfig, run_pipeline, run_validation


def _run_args(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--racks", type=int, default=d.racks)
    p.add_argument("--hosts-per-rack", type=int, default=d.hosts_per_rack)
    p.add_argument("--duration", type=float, default=d.duration, help="seconds")
    p.add_argument("--epoch-length", type=float, default=d.epoch_length, help="seconds")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--r", type=float, default=d.r, help="payload packets per ACK packet")
    p.add_argument("--mss", type=float, default=d.mss)
    p.add_argument("--profile-dir", default=None,
                   help="directory holding the six input CSVs (default: bundled profile)")
    for name in PROFILE_FILES:
        p.add_argument(f"--{name.replace('_', '-')}", dest=f"file_{name}", default=None,
                       metavar="CSV", help=f"override the {name} input")
    p.add_argument("--no-shifts", action="store_true",
                   help="do not add 219 bytes to flow sizes and 1000 bytes to TM entries")
    p.add_argument("--mapper", choices=("drr", "random"), default=d.mapper_strategy)
    p.add_argument("--drr-policy", choices=DRR_POLICIES, default=d.drr_policy,
                   help="cursor and queue handling in the DRR mapper (see map_drr)")
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--omega", type=float, default=d.omega)
    p.add_argument("--directions", choices=("both", "one"), default=d.directions)
    p.add_argument("--output-dir", "-o", default=d.output_dir)


def _config(a: argparse.Namespace) -> RunConfig:
    files = {k: getattr(a, f"file_{k}") for k in PROFILE_FILES if getattr(a, f"file_{k}")}
    return RunConfig(racks=a.racks, hosts_per_rack=a.hosts_per_rack, duration=a.duration,
                     epoch_length=a.epoch_length, seed=a.seed, r=a.r, mss=a.mss,
                     profile_dir=a.profile_dir, files=files, apply_shifts=not a.no_shifts,
                     mapper_strategy=a.mapper, drr_policy=a.drr_policy, alpha=a.alpha, omega=a.omega,
                     directions=a.directions, output_dir=a.output_dir)


def cmd_generate(a) -> int:
    cfg = _config(a)
    t0 = time.perf_counter()
    sched = run_pipeline(cfg)
    print(f"wrote {len(sched)} flows over {cfg.epochs} epochs to "
          f"{Path(cfg.output_dir) / 'schedule.csv'} in {time.perf_counter() - t0:.1f} s")
    for e in sched.meta["per_epoch"]:
        print(f"  epoch {e['epoch']}: {e['flows']} flows, epsilon {e['epsilon']:.4f}, "
              f"attempts {e['attempts']}, topsoe {e['topsoe']:.4f}")
    return 0


def cmd_validate(a) -> int:
    if a.run_dir:
        run = Path(a.run_dir)
        cfg = RunConfig.from_dict(json.loads((run / "config.json").read_text()))
        schedule = a.schedule or run / "schedule.csv"
        out = a.report_dir or run
    else:
        cfg = _config(a)
        schedule = a.schedule or Path(cfg.output_dir) / "schedule.csv"
        out = a.report_dir or cfg.output_dir
    report = run_validation(cfg, schedule, out, plots=not a.no_plots)
    print(f"{'distribution':10s} {'KS':>7s} {'KS>thr':>7s} {'topsoe':>8s}")
    for name, comp in report.comparisons.items():
        r = report.ks_restricted.get(name)
        flag = "  (expected mismatch)" if name in report.expected_mismatch else ""
        rs = f"{r:7.4f}" if r is not None else f"{'-':>7s}"
        print(f"{name:10s} {comp.ks_sup_distance:7.4f} {rs} {comp.topsoe:8.4f}{flag}")
    print(f"report written to {Path(out) / 'report.json'}")
    return 0


def cmd_deconvolve(a) -> int:
    z = read_distribution_csv(a.input)
    if a.shift:
        z = z.shifted(a.shift)
    model = AckModel(r=a.r, mss=a.mss)
    cfg = DeconvolutionConfig(grid_size=a.grid_size, smoothing_window=a.smoothing_window)
    x = deconvolve(z, model, cfg)
    write_distribution_csv(x, a.output, f"payload distribution deconvolved from {Path(a.input).name}")
    msg = f"wrote {a.output} ({len(x.values)} points, beta={model.beta:.6f})"
    if a.check:
        msg += f"; round-trip KS {ks_distance(reconvolve_check(x, model), z):.4f}"
    print(msg)
    return 0


def cmd_degcheck(a) -> int:
    degrees = [int(x) for x in a.degrees.replace(",", " ").split()]
    ok = erdos_gallai_check(degrees)
    print(f"Erdos-Gallai: {'graphical' if ok else 'not graphical'}")
    g = havel_hakimi(degrees)
    if g is None:
        print("Havel-Hakimi: unrealizable")
        return 0 if not ok else 3
    print(f"Havel-Hakimi: {g.edge_count} edges")
    for i, j in g.edges.tolist():
        print(f"{i} {j}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcflowgen", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a payload schedule")
    _run_args(g)
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="compare a schedule against its inputs")
    _run_args(v)
    v.add_argument("--run-dir", help="directory written by generate (uses its config.json)")
    v.add_argument("--schedule", help="schedule CSV (default: <output-dir>/schedule.csv)")
    v.add_argument("--report-dir", help="where to write report.json, CSVs and figures")
    v.add_argument("--no-plots", action="store_true")
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("deconvolve", help="recover a payload TM-entry distribution")
    d.add_argument("input")
    d.add_argument("output")
    d.add_argument("--shift", type=float, default=0.0, help="bytes added to the input first")
    d.add_argument("--r", type=float, default=2.5)
    d.add_argument("--mss", type=float, default=1448.0)
    d.add_argument("--grid-size", type=int, default=DeconvolutionConfig().grid_size)
    d.add_argument("--smoothing-window", type=int, default=DeconvolutionConfig().smoothing_window)
    d.add_argument("--check", action="store_true", help="report the round-trip KS distance")
    d.set_defaults(func=cmd_deconvolve)

    c = sub.add_parser("degcheck", help="test and realize a degree sequence")
    c.add_argument("degrees", help="e.g. '3,3,2,2,2'")
    c.set_defaults(func=cmd_degcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error [stage={args.command}] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
