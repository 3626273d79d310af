"""Command line: ``ensemble-langevin {run,calibrate,instability,ratio-sweep,render}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

from .calibrate import CalibrationError, CalibratorInput, calibrate
from .config import ConfigError, load_config
from .experiments import run_experiment, run_instability, run_ratio_sweep

THREADS_ENV = "ENSEMBLE_LANGEVIN_THREADS"


def _threads(value) -> int:
    if value is None:
        value = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(value)
    except ValueError:
        raise SystemExit(f"error: invalid thread count {value!r}") from None
    if n < 1:
        raise SystemExit("error: thread count must be at least 1")
    return n


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _n_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 2 for v in vals):
        raise argparse.ArgumentTypeError("ensemble sizes must be at least 2")
    return vals


def _warn_to_stderr(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ensemble-langevin", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment JSON file")
        p.add_argument("--seed", type=_u64, help="override params.seed")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--threads", help=f"neighbour-search threads (default ${THREADS_ENV} or 1)")

    common(sub.add_parser("run", help="run a configured sampler and write CSV/JSON artifacts"))

    p = sub.add_parser("calibrate", help="suggest sampler parameters from accuracy/gradient budget")
    p.add_argument("--config", help="JSON file with calibrator inputs")
    for name in ("alpha", "kappa", "mu", "h", "epsilon", "rho", "f-star", "r2", "w1-initial"):
        p.add_argument(f"--{name}", type=float)
    for name in ("d", "n", "n-star"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--target", help="builtin target used to estimate p(r2)")
    p.add_argument("--out", help="also write calibration.json here")

    p = sub.add_parser("instability", help="second-moment probe of the unconstrained ensemble force")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", default="instability_out")
    p.add_argument("--ablate", action="store_true", help="drop the 1/p weight")

    p = sub.add_parser("ratio-sweep", help="gradient-call ratio curves for several ensemble sizes")
    common(p)
    p.add_argument("--n-list", type=_n_list, default=[2000, 6000, 10000])

    p = sub.add_parser("render", help="SVG scatter of a samples.csv checkpoint (d = 2)")
    p.add_argument("samples", help="path to samples.csv")
    p.add_argument("--checkpoint", type=int, help="iteration to draw (default: last)")
    p.add_argument("--target", help="axes preset (default: read from run_meta.json)")
    p.add_argument("--out", help="output file or directory")
    return ap


def _calibrator_input(args) -> CalibratorInput:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    for key in ("alpha", "d", "kappa", "mu", "h", "epsilon", "rho", "f_star", "r2", "n", "n_star", "target", "w1_initial"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    missing = [k for k in ("alpha", "d", "kappa", "mu", "h", "epsilon") if k not in data]
    if missing:
        raise ConfigError(f"calibrate: missing field(s) {missing}")
    try:
        return CalibratorInput(**data)
    except TypeError as exc:
        raise ConfigError(f"calibrate: {exc}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.showwarning = _warn_to_stderr
    try:
        if args.command == "run":
            cfg = load_config(args.config).with_overrides(seed=args.seed, output_dir=args.out)
            res = run_experiment(cfg, workers=_threads(args.threads))
            print(f"wrote {res.out_dir}")
        elif args.command == "calibrate":
            cal = calibrate(_calibrator_input(args))
            text = json.dumps(cal.as_dict(), indent=2, sort_keys=True) + "\n"
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                (out / "calibration.json").write_text(text)
            sys.stdout.write(text)
        elif args.command == "instability":
            est = run_instability(args.out, seed=args.seed, ablate=args.ablate)
            for v in est:
                print(format(v, ".6g"))
        elif args.command == "ratio-sweep":
            cfg = load_config(args.config).with_overrides(seed=args.seed, output_dir=args.out)
            curves = run_ratio_sweep(cfg, args.n_list, workers=_threads(args.threads))
            for n, r in curves.items():
                print(f"N={n}: R_{len(r)} = {r[-1]:.4f}")
        elif args.command == "render":
            print(render_path(args))
    except (ConfigError, CalibrationError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def render_path(args) -> str:
    from .render import render_scatter

    return str(render_scatter(args.samples, args.checkpoint, args.out, args.target))


if __name__ == "__main__":
    sys.exit(main())
