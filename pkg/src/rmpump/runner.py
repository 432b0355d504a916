"""Ensemble campaigns: per-realization tasks, deterministic aggregation and file emission."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .dynamics import (evolve_single_excitation, evolve_two_excitations, pumped_charge,
                       pumped_charge_double_loop)
from .model import ChainSpec, ParamPoint, build_single_particle
from .spectral import ipr_spectrum, min_instantaneous_gap

MAX_FAILURE_FRACTION = 0.10


class RunFailure(RuntimeError):
    """Too many realizations failed for the aggregate to be meaningful."""


@dataclass(frozen=True)
class Task:
    period: Optional[float]
    value: float
    index: int


@dataclass
class Outcome:
    value: float = math.nan
    error: str = ""
    edge: bool = False


@dataclass
class PointResult:
    """Aggregate over the ensemble at one grid point."""

    sweep_value: float
    T: float
    mean: float
    stderr: float
    n: int
    values: np.ndarray
    failures: int = 0
    edge_flags: int = 0
    flags: tuple = ()


@dataclass
class SweepResult:
    config: ExperimentConfig
    points: list
    seed: int
    config_hash: str
    timings: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def quality_ok(self) -> bool:
        return not any(p.edge_flags for p in self.points)


def _point_config(cfg: ExperimentConfig, task: Task) -> ExperimentConfig:
    """Config with the sweep value (and period) written into its field."""
    c = cfg
    if task.period is not None:
        c = dataclasses.replace(c, trajectory=dataclasses.replace(c.trajectory, T=float(task.period)))
    if cfg.sweep is None:
        return c
    section, name = cfg.sweep.parameter.split(".")
    v = task.value
    v = int(v) if (section, name) == ("chain", "L") else float(v)
    return dataclasses.replace(c, **{section: dataclasses.replace(getattr(c, section), **{name: v})})


def measure(cfg: ExperimentConfig, index: int) -> Outcome:
    """Observable of realization ``index`` for a fully specified config."""
    traj, J = cfg.build_trajectory()
    chain = ChainSpec(cfg.chain.L, J, cfg.chain.boundary)
    dis = cfg.build_disorder().realize(chain, index)
    stepper = cfg.build_stepper()
    m = cfg.measure
    if m.observable == "pumped_charge":
        return Outcome(pumped_charge_double_loop(chain, traj, dis, stepper, m.method))
    if m.observable == "delta_x":
        if m.init_pair:
            r = evolve_two_excitations(chain, traj, dis, tuple(m.init_pair), m.n_cycles, stepper)
        else:
            r = evolve_single_excitation(chain, traj, dis, m.init_site, m.n_cycles, stepper)
        return Outcome(float(np.mean(r.delta_x)), edge=r.edge_contaminated)
    if m.observable == "min_gap":
        return Outcome(min_instantaneous_gap(chain, traj, dis, m.n_time).min_gap)
    p = ParamPoint(*m.point) if m.point else traj.point(0.0)
    return Outcome(float(ipr_spectrum(build_single_particle(chain, p, dis)).mean()))


def _run_task(args) -> tuple:
    cfg, task = args
    try:
        out = measure(_point_config(cfg, task), task.index)
    except Exception as e:  # recorded per realization, judged in aggregate
        out = Outcome(error=f"{type(e).__name__}: {e}")
    return task, out


def plan(cfg: ExperimentConfig) -> list[Task]:
    """Ordered task list: periods x sweep values x realizations."""
    periods = list(cfg.sweep.periods) if (cfg.sweep and cfg.sweep.periods) else [None]
    values = list(cfg.sweep.values) if cfg.sweep else [float(cfg.disorder.strength)]
    return [Task(p, float(v), i) for p in periods for v in values for i in range(cfg.ensemble.size)]


def run_sweep(cfg: ExperimentConfig, threads: int = 1,
              progress: Optional[Callable[[str], None]] = None) -> SweepResult:
    """Execute every realization and aggregate by grid point.

    Realization ``i`` of every grid point draws its disorder from
    ``substream(seed, i)``, so neighbouring grid points share the underlying
    random numbers. Results are reduced in task order, independent of the
    number of worker processes.
    """
    tasks = plan(cfg)
    t0 = time.perf_counter()
    results = {}
    jobs = [(cfg, t) for t in tasks]
    if threads <= 1:
        it = map(_run_task, jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=threads)
        it = pool.map(_run_task, jobs, chunksize=1)
    try:
        for k, (task, out) in enumerate(it, 1):
            results[task] = out
            if progress:
                progress(f"[{k}/{len(tasks)}] T={task.period} value={task.value:g} i={task.index}"
                         + (f" FAILED {out.error}" if out.error else f" -> {out.value:.6g}"))
    finally:
        if pool is not None:
            pool.shutdown()
    elapsed = time.perf_counter() - t0
    n_fail = sum(1 for o in results.values() if o.error)
    failures = [dict(T=t.period, value=t.value, index=t.index, error=o.error)
                for t, o in results.items() if o.error]
    if tasks and n_fail > MAX_FAILURE_FRACTION * len(tasks):
        raise RunFailure(f"{n_fail} of {len(tasks)} realizations failed; first: {failures[0]['error']}")
    points = []
    base_T = cfg.build_trajectory()[0].T
    seen = []
    for t in tasks:
        key = (t.period, t.value)
        if key not in seen:
            seen.append(key)
    for period, value in seen:
        outs = [results[Task(period, value, i)] for i in range(cfg.ensemble.size)]
        vals = np.array([o.value for o in outs if not o.error], dtype=float)
        n = len(vals)
        flags = []
        if n == 1:
            flags.append("single_realization")
        mean = float(vals.mean()) if n else math.nan
        se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        T = float(period) if period is not None else float(base_T)
        if cfg.sweep and cfg.sweep.parameter == "trajectory.T":
            T = float(value)
        points.append(PointResult(float(value), T, mean, se, n, vals, len(outs) - n,
                                  sum(o.edge for o in outs), tuple(flags)))
    return SweepResult(cfg, points, cfg.seed, cfg.config_hash(),
                       {"wall_seconds": round(elapsed, 3), "threads": int(threads)}, failures)


# ---------------------------------------------------------------------------
# emission

SUMMARY_COLUMNS = ("sweep_value", "mean", "stderr", "n", "L", "T", "seed")


def _header(result_hash: str, seed: int, extra: str = "") -> str:
    line = f"# config_hash={result_hash} seed={seed}"
    return line + (f" {extra}" if extra else "") + "\n"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def summary_csv(result: SweepResult) -> str:
    L = result.config.chain.L
    buf = io.StringIO()
    buf.write(_header(result.config_hash, result.seed, _plan_text(result.config)))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for p in result.points:
        Lp = int(p.sweep_value) if result.config.sweep and result.config.sweep.parameter == "chain.L" else L
        w.writerow([_fmt(p.sweep_value), _fmt(p.mean), _fmt(p.stderr), p.n, Lp, _fmt(p.T), result.seed])
    return buf.getvalue()


def raw_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    buf.write(_header(result.config_hash, result.seed))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sweep_value", "T", "realization", "value"))
    for p in result.points:
        for i, v in enumerate(p.values):
            w.writerow([_fmt(p.sweep_value), _fmt(p.T), i, _fmt(v)])
    return buf.getvalue()


def _plan_text(cfg: ExperimentConfig) -> str:
    m = cfg.measure
    sweep = f"{cfg.sweep.parameter}[{len(cfg.sweep.values)}]" if cfg.sweep else "none"
    return (f"plan: observable={m.observable} trajectory={cfg.trajectory.name or cfg.trajectory.variant} "
            f"L={cfg.chain.L} boundary={cfg.chain.boundary} disorder={cfg.disorder.kind} "
            f"sweep={sweep} n={cfg.ensemble.size}")


def manifest(result: SweepResult, files: list) -> dict:
    return {
        "name": result.config.name,
        "config_hash": result.config_hash,
        "seed": result.seed,
        "code_version": __version__,
        "config": result.config.to_dict(),
        "stepper": result.config.to_dict()["stepper"],
        "timings": result.timings,
        "failures": result.failures,
        "quality_ok": result.quality_ok,
        "flags": {f"{p.T}:{p.sweep_value}": list(p.flags) for p in result.points if p.flags},
        "edge_contaminated": {f"{p.T}:{p.sweep_value}": p.edge_flags for p in result.points if p.edge_flags},
        "files": files,
    }


def emit(result: SweepResult, out_dir, fmt: str = "csv") -> list[Path]:
    """Write ``summary`` and ``raw`` tables plus ``manifest.json`` to ``out_dir``.

    ``fmt="csv"`` writes CSV tables; ``fmt="structured"`` writes one JSON file
    with the same content. Output is byte-identical for identical results.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e.strerror}") from None
    written = []
    if fmt == "csv":
        for name, text in (("summary.csv", summary_csv(result)), ("raw.csv", raw_csv(result))):
            (out / name).write_text(text, encoding="utf-8")
            written.append(out / name)
    elif fmt == "structured":
        doc = {"config_hash": result.config_hash, "seed": result.seed,
               "points": [{"sweep_value": p.sweep_value, "T": p.T, "mean": p.mean, "stderr": p.stderr,
                           "n": p.n, "L": result.config.chain.L, "values": [float(v) for v in p.values]}
                          for p in result.points]}
        (out / "results.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(out / "results.json")
    else:
        raise ValueError("fmt must be 'csv' or 'structured'")
    man = manifest(result, [p.name for p in written])
    (out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(out / "manifest.json")
    return written


def emit_timeseries(times, populations, out_path, config_hash: str, seed: int, extra: str = "") -> Path:
    """Rows ``(t, site, population)`` with 1-based sites, for heat-map rendering."""
    buf = io.StringIO()
    buf.write(_header(config_hash, seed, extra))
    buf.write("t,site,population\n")
    L = populations.shape[1]
    for t, row in zip(times, populations):
        for j in range(L):
            buf.write(f"{float(t)!r},{j + 1},{float(row[j])!r}\n")
    p = Path(out_path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(buf.getvalue(), encoding="utf-8")
    return p


def emit_table(rows, columns, out_path, config_hash: str, seed: int, extra: str = "") -> Path:
    """Generic CSV with the hash/seed comment line."""
    buf = io.StringIO()
    buf.write(_header(config_hash, seed, extra))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) if isinstance(x, (float, int, np.floating, np.integer)) else x for x in r])
    p = Path(out_path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(buf.getvalue(), encoding="utf-8")
    return p


def progress_to_stderr(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)
