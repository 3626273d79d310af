"""Experiment runners behind the command line: a configured run with CSV
and JSON artifacts, the instability probe and the gradient-ratio sweep.

CSV files use ``.`` as decimal separator, LF line endings and a header
row. Floats are written with 17 significant digits so that identical runs
give identical bytes.
"""

from __future__ import annotations

import contextlib
import json
import os
import platform
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .diagnostics import blowup_probe, coupling_distance, moment_summary, ratio_series, sliced_w1, w1_1d
from .samplers import cenlmc_run, coupled_run, enlmc_run, lmc_run, mala_run
from .state import PreconditionWarning
from .targets import direct_samples, get_initial, get_target

__all__ = [
    "CSV_SCHEMA_VERSION",
    "RunResult",
    "run_experiment",
    "run_instability",
    "run_ratio_sweep",
    "format_float",
    "write_csv",
]

CSV_SCHEMA_VERSION = 1
DEFAULT_INITIAL = {"example1": "example1", "example2": "example2", "quadratic": "wide_normal"}


def format_float(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def _write_matrix_csv(path, header, block: np.ndarray, int_cols: int) -> None:
    # fast path for large numeric blocks; first int_cols columns are integral
    fmt = ["%d"] * int_cols + ["%.17g"] * (block.shape[1] - int_cols)
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(header) + "\n")
        if len(block):
            np.savetxt(fh, block, fmt=fmt, delimiter=",", newline="\n")


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def versions() -> dict:
    return {
        "ensemble_langevin": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


@contextlib.contextmanager
def _claim(out_dir: Path):
    """Create ``out_dir`` and hold an exclusive lock file while writing, so
    two concurrent invocations can never share an output directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(f"output directory {out_dir} is in use by another run (remove {lock} if stale)") from None
    os.close(fd)
    try:
        yield out_dir
    finally:
        lock.unlink(missing_ok=True)


@dataclass
class RunResult:
    config: ExperimentConfig
    trajectory: object
    lmc_trajectory: object
    diagnostics_header: list
    diagnostics_rows: list
    out_dir: Optional[Path]
    preconditions: list


def _simulate(cfg: ExperimentConfig, workers: int):
    target = get_target(cfg.target, cfg.dim)
    init_name = cfg.initial or DEFAULT_INITIAL[cfg.target]
    initial = get_initial(init_name, target.dim)
    p = cfg.params
    issues = []
    if cfg.sampler in ("cenlmc", "coupled"):
        issues = p.precondition_violations(target)
        for msg in issues:
            warnings.warn(msg, PreconditionWarning, stacklevel=3)
    lmc_traj = None
    if cfg.sampler == "lmc":
        traj = lmc_run(p, target, initial)
    elif cfg.sampler == "mala":
        traj = mala_run(p, target, initial)
    elif cfg.sampler == "enlmc":
        traj = enlmc_run(p, target, initial, workers=workers)
    elif cfg.sampler == "cenlmc":
        traj = cenlmc_run(p, target, initial, workers=workers)
    else:
        traj, lmc_traj = coupled_run(p, target, initial, workers=workers)
    return target, init_name, traj, lmc_traj, issues


def _diagnostics_table(cfg, target, traj, lmc_traj):
    d = target.dim
    toggles = cfg.diagnostics
    header = ["iteration", "R_m", "W1", "coupling"]
    header += [f"mean_{k + 1}" for k in range(d)]
    upper = [(a, b) for a in range(d) for b in range(a, d)]
    header += [f"cov_{a + 1}{b + 1}" if d < 10 else f"cov_{a + 1}_{b + 1}" for a, b in upper]

    its = traj.snapshot_iters
    ratio = ratio_series(traj.fallback_flags) if toggles.ratio and traj.fallback_flags.shape[0] > 1 else None
    ref = None
    if toggles.w1 and target.exact is not None:
        ref = direct_samples(target, cfg.params.seed, traj.snapshots.shape[1])
    coupling = None
    if toggles.coupling and lmc_traj is not None:
        coupling = coupling_distance(traj, lmc_traj)

    rows = []
    for k, m in enumerate(its):
        m = int(m)
        x = traj.snapshots[k]
        r = ratio[m - 1] if ratio is not None and 1 <= m <= len(ratio) else None
        w = None
        if ref is not None:
            w = w1_1d(x, ref) if d == 1 else sliced_w1(x, ref, toggles.w1_projections, seed=cfg.params.seed)
        c = coupling[k] if coupling is not None else None
        row = [m, r, w, c]
        if toggles.moments and len(x) >= 2:
            mean, cov = moment_summary(x)
            row += list(mean) + [cov[a, b] for a, b in upper]
        else:
            row += [None] * (d + len(upper))
        rows.append(row)
    return header, rows


def _samples_block(traj, checkpoints) -> np.ndarray:
    n, d = traj.snapshots.shape[1:]
    blocks = []
    for m in checkpoints:
        x = traj.at(int(m))
        blocks.append(np.column_stack([np.full(n, m), np.arange(n), x]))
    return np.vstack(blocks) if blocks else np.empty((0, d + 2))


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int = 1, write: bool = True) -> RunResult:
    """Execute ``cfg`` and, if ``write``, emit samples.csv, diagnostics.csv,
    run_meta.json and optional scatter SVGs into ``out_dir``."""
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    target, init_name, traj, lmc_traj, issues = _simulate(cfg, workers)
    header, rows = _diagnostics_table(cfg, target, traj, lmc_traj)
    checkpoints = list(cfg.checkpoints) if cfg.checkpoints is not None else [cfg.params.m_iters]
    missing = [m for m in checkpoints if m not in set(int(i) for i in traj.snapshot_iters)]
    if missing:
        raise ValueError(f"checkpoints {missing} fall between stored snapshots {list(traj.snapshot_iters)[:5]}...")
    result = RunResult(cfg, traj, lmc_traj, header, rows, out_dir if write else None, issues)
    if not write:
        return result

    d = target.dim
    sample_header = ["iteration", "particle"] + [f"x{k + 1}" for k in range(d)]
    with _claim(out_dir):
        _write_matrix_csv(out_dir / "samples.csv", sample_header, _samples_block(traj, checkpoints), 2)
        if lmc_traj is not None:
            _write_matrix_csv(out_dir / "samples_lmc.csv", sample_header, _samples_block(lmc_traj, checkpoints), 2)
        write_csv(out_dir / "diagnostics.csv", header, rows)
        scatter_files = []
        if cfg.scatter and d == 2:
            from .render import render_points

            for m in checkpoints:
                name = f"scatter_{m}.svg"
                (out_dir / name).write_text(render_points(traj.at(m), cfg.target, title=f"{cfg.sampler} m={m}"), encoding="utf-8", newline="")
                scatter_files.append(name)
        flags = traj.fallback_flags
        meta = {
            "csv_schema_version": CSV_SCHEMA_VERSION,
            "config": cfg.to_dict(),
            "resolved": {"initial": init_name, "dim": d, "checkpoints": checkpoints},
            "target": {
                "name": target.name,
                "f_star": target.f_star,
                "smoothness_l": target.smoothness_l,
                "convexity_mu": target.convexity_mu,
            },
            "versions": versions(),
            "files": {
                "samples.csv": sample_header,
                "diagnostics.csv": header,
                "scatter": scatter_files,
            },
            "precondition_warnings": issues,
            "gradient_evaluations": int(flags.sum()),
            "force_evaluations": int(flags.size),
        }
        if traj.clamped is not None:
            meta["clamped_force_components"] = int(np.sum(traj.clamped))
        if traj.accepted is not None:
            meta["acceptance_rate"] = float(np.sum(traj.accepted)) / max(flags.size, 1)
        if lmc_traj is not None:
            meta["files"]["samples_lmc.csv"] = sample_header
        _write_json(out_dir / "run_meta.json", meta)
    return result


def run_instability(out_dir, seed: int = 0, ablate: bool = False, h: float = 0.1, eta: float = 0.1,
                    counts=(10**3, 10**4, 10**5, 10**6), separation: float = 1.0) -> list:
    """Write ``instability.csv`` with one second-moment estimate per count."""
    est = blowup_probe(h=h, eta=eta, sample_counts=counts, seed=seed, separation=separation, ablate=ablate)
    out_dir = Path(out_dir)
    with _claim(out_dir):
        write_csv(out_dir / "instability.csv", ["count", "second_moment"], zip(counts, est))
        _write_json(
            out_dir / "run_meta.json",
            {
                "csv_schema_version": CSV_SCHEMA_VERSION,
                "command": "instability",
                "seed": seed,
                "ablate": ablate,
                "h": h,
                "eta": eta,
                "separation": separation,
                "counts": list(counts),
                "files": {"instability.csv": ["count", "second_moment"]},
                "versions": versions(),
            },
        )
    return est


def run_ratio_sweep(cfg: ExperimentConfig, n_list, out_dir=None, workers: int = 1, write: bool = True) -> dict:
    """``R_m`` for ``m = 1..M`` at each ensemble size in ``n_list``.

    ``R_M`` needs the force flags of update ``M``, so each run performs
    ``M + 1`` updates.
    """
    target = get_target(cfg.target, cfg.dim)
    initial = get_initial(cfg.initial or DEFAULT_INITIAL[cfg.target], target.dim)
    m_iters = cfg.params.m_iters
    curves = {}
    for n in n_list:
        p = cfg.params.replace(n=int(n), m_iters=m_iters + 1)
        traj = cenlmc_run(p, target, initial, workers=workers)
        curves[int(n)] = ratio_series(traj.reasons != 0)[:m_iters]
    if write:
        out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
        header = ["iteration"] + [f"R_N{n}" for n in curves]
        rows = [[m] + [curves[n][m - 1] for n in curves] for m in range(1, m_iters + 1)]
        with _claim(out_dir):
            write_csv(out_dir / "ratio_sweep.csv", header, rows)
            _write_json(
                out_dir / "run_meta.json",
                {
                    "csv_schema_version": CSV_SCHEMA_VERSION,
                    "command": "ratio-sweep",
                    "config": cfg.to_dict(),
                    "n_list": [int(n) for n in n_list],
                    "files": {"ratio_sweep.csv": header},
                    "versions": versions(),
                },
            )
    return curves

