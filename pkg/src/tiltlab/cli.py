"""Command-line entry point: `tiltlab {analyze,sweep,atlas,duality,report}`."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .cli_reporting import apply_overrides, load_config, run_experiment, summarize_run
from .errors import ConfigError, TiltlabError

VERB_MODES = {"analyze": "single_point", "atlas": "atlas", "duality": "duality"}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (overrides sampling.master_seed)")
    common.add_argument("--tol", type=float, help="numerical tolerance (overrides tolerances.tol)")
    common.add_argument("--jobs", type=int, help="worker processes (default: TILTLAB_JOBS or 1)")
    p = argparse.ArgumentParser(prog="tiltlab", parents=[common],
                                description="Generic critical-point experiments under tilt and shift perturbations.")
    sub = p.add_subparsers(dest="command", required=True)
    for verb, help_ in (("analyze", "critical points and their properties at one tilt"),
                        ("sweep", "tilt or composite sweep over sampled parameters"),
                        ("atlas", "selection atlas of the inverse subdifferential on a grid"),
                        ("duality", "primal-dual certificates for convex composite problems")):
        sp = sub.add_parser(verb, parents=[common], help=help_)
        sp.add_argument("config", help="path to a JSON experiment config")
        sp.add_argument("--out", help="output directory (overrides output.directory)")
    rp = sub.add_parser("report", parents=[common], help="summarize a finished run directory")
    rp.add_argument("run_dir")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "report":
            text, code = summarize_run(args.run_dir)
            print(text)
            return code
        mode = VERB_MODES.get(args.command)
        cfg = load_config(args.config, mode)
        if args.command == "sweep" and cfg.mode not in ("tilt_sweep", "composite_sweep"):
            raise ConfigError(f"sweep needs mode tilt_sweep or composite_sweep, got {cfg.mode}",
                              [("/mode", "mismatch")])
        apply_overrides(cfg, args.seed, args.tol)
        if args.out:
            cfg.directory = Path(args.out)
        rec = run_experiment(cfg, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TiltlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{rec.mode}: wrote {', '.join(rec.reports)} to {cfg.directory}")
    for k in sorted(rec.summary):
        print(f"  {k}: {rec.summary[k]}")
    if rec.errors:
        print(f"  per-sample errors: {len(rec.errors)} (see run.json)")
    for v in rec.invariant_violations[:20]:
        print(f"  INVARIANT VIOLATION: {v}", file=sys.stderr)
    return rec.exit_code


if __name__ == "__main__":
    sys.exit(main())
