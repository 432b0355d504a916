"""Command-line entry point: ``rmpump <subcommand> --config FILE --out DIR``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_config, serialize_config
from .runner import RunFailure

EXIT_OK, EXIT_CONFIG, EXIT_QUALITY = 0, 2, 3

SUBCOMMANDS = ("pump", "sweep", "chern", "bands", "gap", "ipr", "pulse", "floquet-check")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmpump", description="Rice-Mele pumping simulations and pulse synthesis.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "pump": "single evolution; writes the population time series",
        "sweep": "disorder or period campaign over an ensemble",
        "chern": "Chern number of the trajectory",
        "bands": "Bloch bands and polarization along the trajectory",
        "gap": "minimum instantaneous gap (ensemble when a sweep is configured)",
        "ipr": "spectrum-averaged inverse participation ratio",
        "pulse": "modulation waveforms and Z-pulse amplitudes",
        "floquet-check": "lab-frame versus target-frame comparison",
    }
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", required=True, help="YAML campaign file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable), e.g. --set chain.L=100")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
        s.add_argument("--seed", type=int, default=None, help="master seed override")
        s.add_argument("--format", choices=("csv", "structured"), default="csv")
    return p


def _load(args) -> ExperimentConfig:
    over = list(args.set)
    if args.seed is not None:
        over.append(f"seed={args.seed}")
    over.append(f"out={json.dumps(str(args.out))}")
    return parse_config(args.config, over)


def _write_config(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.yaml").write_text(
        f"# config_hash={cfg.config_hash()} seed={cfg.seed}\n" + serialize_config(cfg), encoding="utf-8")


def _manifest(cfg, out: Path, files, **extra) -> None:
    from . import __version__
    doc = {"name": cfg.name, "config_hash": cfg.config_hash(), "seed": cfg.seed, "code_version": __version__,
           "config": cfg.to_dict(), "files": [Path(f).name for f in files], **extra}
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_pump(cfg: ExperimentConfig, args) -> int:
    from .dynamics import evolve_half_filling, evolve_single_excitation, evolve_two_excitations
    from .runner import emit_table, emit_timeseries
    out = Path(args.out)
    traj, J = cfg.build_trajectory()
    chain = cfg.build_chain()
    dis = cfg.build_disorder().realize(chain, 0)
    st = cfg.build_stepper()
    m = cfg.measure
    h, seed = cfg.config_hash(), cfg.seed
    if m.observable == "pumped_charge":
        r = evolve_half_filling(chain, traj, dis, st)
        f1 = emit_timeseries(r.times, r.densities, out / "timeseries.csv", h, seed)
        f2 = emit_table([(r.pumped, r.ortho_drift, r.subspace_fidelity())],
                        ("dQ_over_d", "ortho_drift", "subspace_fidelity"), out / "summary.csv", h, seed)
        _manifest(cfg, out, [f1, f2])
        print(f"dQ/d = {r.pumped:.6f}")
        return EXIT_OK
    if m.init_pair:
        r = evolve_two_excitations(chain, traj, dis, tuple(m.init_pair), m.n_cycles, st)
    else:
        r = evolve_single_excitation(chain, traj, dis, m.init_site, m.n_cycles, st)
    f1 = emit_timeseries(r.times, r.populations, out / "timeseries.csv", h, seed)
    f2 = emit_table([(c + 1, dx) for c, dx in enumerate(r.delta_x)], ("cycle", "delta_x"),
                    out / "summary.csv", h, seed, f"edge_population={r.edge_population:.3g}")
    f3 = emit_table(list(zip(r.times, r.com)), ("t", "com"), out / "com.csv", h, seed)
    _manifest(cfg, out, [f1, f2, f3], edge_contaminated=r.edge_contaminated, norm_drift=r.norm_drift)
    print("delta_x per cycle: " + " ".join(f"{x:.4f}" for x in r.delta_x))
    if r.edge_contaminated:
        _log(f"edge contamination: boundary population {r.edge_population:.3g} exceeds 0.01")
        return EXIT_QUALITY
    return EXIT_OK


def _sweep(cfg, args, observable=None) -> int:
    from .runner import emit, progress_to_stderr, run_sweep
    if observable is not None:
        cfg = dataclasses.replace(cfg, measure=dataclasses.replace(cfg.measure, observable=observable))
    res = run_sweep(cfg, threads=args.threads, progress=progress_to_stderr)
    emit(res, args.out, args.format)
    for p in res.points:
        print(f"T={p.T:g} value={p.sweep_value:g} mean={p.mean:.6g} stderr={p.stderr:.3g} n={p.n}")
    if not res.quality_ok:
        _log("edge contamination detected in at least one realization")
        return EXIT_QUALITY
    return EXIT_OK


def cmd_sweep(cfg, args) -> int:
    return _sweep(cfg, args)


def cmd_chern(cfg, args) -> int:
    from .runner import emit_table
    from .topology import chern_number
    traj, J = cfg.build_trajectory()
    m = cfg.measure
    nu = chern_number(traj, J, m.n_k, m.n_t)
    nu2 = chern_number(traj, J, 2 * m.n_k, 2 * m.n_t)
    f = emit_table([(m.n_k, m.n_t, nu), (2 * m.n_k, 2 * m.n_t, nu2)], ("n_k", "n_t", "chern"),
                   Path(args.out) / "chern.csv", cfg.config_hash(), cfg.seed)
    _manifest(cfg, Path(args.out), [f])
    print(f"chern = {nu}")
    return EXIT_OK if nu == nu2 else EXIT_QUALITY


def cmd_bands(cfg, args) -> int:
    from .model import bloch_energies
    from .runner import emit_table
    from .spectral import GapClosedError, polarization
    traj, J = cfg.build_trajectory()
    n_t, n_k = max(cfg.measure.n_t, 16), max(cfg.measure.n_k, 16)
    ts = np.linspace(0.0, traj.T, n_t + 1)
    k = np.linspace(-np.pi / 2, np.pi / 2, n_k, endpoint=False)
    rows, prow = [], []
    for t in ts:
        p = traj.point(t)
        e = bloch_energies(p, J, k)
        rows += [(t, kk, lo, hi) for kk, (lo, hi) in zip(k, e)]
        try:
            P = polarization(p, J, max(n_k, 64))
        except GapClosedError:
            P = float("nan")
        prow.append((t, p.Delta, p.delta, P))
    out = Path(args.out)
    h, s = cfg.config_hash(), cfg.seed
    f1 = emit_table(rows, ("t", "k", "E_lower", "E_upper"), out / "bands.csv", h, s)
    f2 = emit_table(prow, ("t", "Delta", "delta", "polarization"), out / "polarization.csv", h, s)
    _manifest(cfg, out, [f1, f2])
    return EXIT_OK


def cmd_gap(cfg, args) -> int:
    if cfg.sweep is not None:
        return _sweep(cfg, args, "min_gap")
    from .runner import emit_table
    from .spectral import min_instantaneous_gap
    traj, _ = cfg.build_trajectory()
    chain = cfg.build_chain()
    dis = cfg.build_disorder().realize(chain, 0)
    g = min_instantaneous_gap(chain, traj, dis, cfg.measure.n_time)
    out = Path(args.out)
    f = emit_table(list(zip(g.times, g.gaps)), ("t", "gap"), out / "gap_series.csv", cfg.config_hash(), cfg.seed,
                   f"min_gap={g.min_gap!r} t_star={g.t_star!r}")
    _manifest(cfg, out, [f], min_gap=g.min_gap, t_star=g.t_star)
    print(f"min gap = {g.min_gap:.6f} MHz at t = {g.t_star:.6f} us")
    return EXIT_OK


def cmd_ipr(cfg, args) -> int:
    if cfg.sweep is not None:
        return _sweep(cfg, args, "mean_ipr")
    from .runner import emit_table
    from .model import ParamPoint, build_single_particle
    from .spectral import ipr_spectrum
    traj, _ = cfg.build_trajectory()
    chain = cfg.build_chain()
    p = ParamPoint(*cfg.measure.point) if cfg.measure.point else traj.point(0.0)
    dis = cfg.build_disorder().realize(chain, 0)
    w, v = np.linalg.eigh(build_single_particle(chain, p, dis))
    iprs = np.sum(np.abs(v) ** 4, axis=0)
    out = Path(args.out)
    f = emit_table(list(zip(w, iprs)), ("energy", "ipr"), out / "ipr.csv", cfg.config_hash(), cfg.seed)
    _manifest(cfg, out, [f], mean_ipr=float(iprs.mean()))
    print(f"mean IPR = {iprs.mean():.6f}")
    return EXIT_OK


def _modulation(cfg):
    from .floquet import ModulationSpec, TransmonCalib
    f, c = cfg.floquet, cfg.calib
    return (ModulationSpec(f.mu, f.phi0, f.omega_bar, f.ref),
            TransmonCalib(c.E_JJ, c.E_C, c.k, c.b, c.eta))


def cmd_pulse(cfg, args) -> int:
    from .floquet import build_program, check_nyquist
    traj, _ = cfg.build_trajectory()
    chain = cfg.build_chain()
    if chain.periodic:
        raise ConfigError("pulse synthesis needs chain.boundary: open")
    spec, calib = _modulation(cfg)
    dis = cfg.build_disorder().realize(chain, 0)
    prog = build_program(chain, traj, spec, dis, cfg.floquet.g, cfg.calib.eta, cfg.floquet.sample_rate,
                         cfg.measure.n_cycles, cfg.floquet.negative)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "pulse.csv"
    prog.export(path, calib, f"config_hash={cfg.config_hash()} seed={cfg.seed}")
    ny = check_nyquist(traj, spec.mu)
    _manifest(cfg, out, [path], nyquist_pass=ny.passed, nyquist_margin=ny.margin,
              max_abs_A=float(np.max(np.abs(prog.A))))
    print(f"wrote {len(prog.times)} samples x {prog.L} qubits; Nyquist margin {ny.margin:g} MHz")
    return EXIT_OK


def cmd_floquet_check(cfg, args) -> int:
    from .floquet import compare_frames
    from .runner import emit_table
    traj, _ = cfg.build_trajectory()
    chain = cfg.build_chain()
    if chain.periodic:
        raise ConfigError("floquet-check needs chain.boundary: open")
    spec, _ = _modulation(cfg)
    dis = cfg.build_disorder().realize(chain, 0)
    r = compare_frames(chain, traj, spec, cfg.measure.init_site, dis, cfg.floquet.g, cfg.calib.eta,
                       cfg.floquet.negative, cfg.build_stepper(), cfg.measure.n_cycles)
    out = Path(args.out)
    h, s = cfg.config_hash(), cfg.seed
    f1 = emit_table(list(zip(r.lab.times, r.lab.com, r.target.com)), ("t", "com_lab", "com_target"),
                    out / "com.csv", h, s)
    f2 = _emit_population_pair(r, out, h, s)
    agree = r.com_error <= cfg.floquet.com_threshold and r.population_error <= cfg.floquet.population_threshold
    _manifest(cfg, out, [f1, f2], com_error=r.com_error, population_error=r.population_error,
              micromotion_error=r.micromotion_error, stroboscopic=r.stroboscopic,
              nyquist_pass=r.nyquist.passed, nyquist_margin=r.nyquist.margin,
              adiabatic_pass=r.adiabatic.passed, agree=agree)
    print(f"CoM error {r.com_error:.4f} sites, population error {r.population_error:.4f}, "
          f"Nyquist {'pass' if r.nyquist.passed else 'fail'} (margin {r.nyquist.margin:g} MHz)")
    if r.nyquist.passed and r.adiabatic.passed and not agree:
        return EXIT_QUALITY
    return EXIT_OK


def _emit_population_pair(r, out: Path, h, s):
    from .runner import emit_table
    rows = []
    for t, a, b in zip(r.lab.times, r.lab.populations, r.target.populations):
        for j in range(len(a)):
            rows.append((t, j + 1, a[j], b[j]))
    return emit_table(rows, ("t", "site", "population_lab", "population_target"), out / "populations.csv", h, s)


COMMANDS = {"pump": cmd_pump, "sweep": cmd_sweep, "chern": cmd_chern, "bands": cmd_bands, "gap": cmd_gap,
            "ipr": cmd_ipr, "pulse": cmd_pulse, "floquet-check": cmd_floquet_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        _write_config(cfg, Path(args.out))
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        _log(f"config error: {e}")
        return EXIT_CONFIG
    except OSError as e:
        _log(f"I/O error: {e}")
        return EXIT_CONFIG
    except RunFailure as e:
        _log(f"run failed: {e}")
        return EXIT_QUALITY


if __name__ == "__main__":
    sys.exit(main())
