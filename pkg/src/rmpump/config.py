"""Campaign configuration: YAML files with strict keys and line-numbered diagnostics."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .dynamics import StepperConfig
from .model import ChainSpec
from .schedules import DISORDER_KINDS, DisorderConfig, Trajectory, VARIANTS, named, preset_names

OBSERVABLES = ("pumped_charge", "delta_x", "min_gap", "mean_ipr")
SWEEP_PARAMETERS = ("disorder.strength", "trajectory.T", "trajectory.Delta0", "trajectory.delta0",
                    "trajectory.Delta1", "trajectory.delta_c", "chain.J", "chain.L")


class ConfigError(ValueError):
    """Invalid configuration; the message names the file, line and field."""


@dataclass(frozen=True)
class ChainConfig:
    L: int = 42
    J: Optional[float] = None
    boundary: str = "periodic"


@dataclass(frozen=True)
class TrajectoryConfig:
    name: Optional[str] = "C_on"
    variant: Optional[str] = None
    T: Optional[float] = None
    Delta0: Optional[float] = None
    delta0: Optional[float] = None
    Delta1: Optional[float] = None
    delta_c: Optional[float] = None
    tau1: Optional[float] = None
    tau2: Optional[float] = None
    orientation: Optional[int] = None
    reverse: bool = False


@dataclass(frozen=True)
class DisorderSection:
    kind: str = "clean"
    strength: float = 0.0
    alpha: float = (5 ** 0.5 - 1) / 2
    beta: Union[str, float] = "random"


@dataclass(frozen=True)
class StepperSection:
    steps_per_period: int = 512
    max_phase: float = 0.02
    method: str = "taylor"


@dataclass(frozen=True)
class EnsembleSection:
    size: int = 20


@dataclass(frozen=True)
class SweepSection:
    parameter: str = "disorder.strength"
    values: tuple = (0.0,)
    periods: tuple = ()


@dataclass(frozen=True)
class MeasureSection:
    observable: str = "pumped_charge"
    method: str = "sum"
    init_site: int = 19
    init_pair: tuple = ()
    n_cycles: int = 1
    point: tuple = ()
    n_time: int = 256
    n_k: int = 32
    n_t: int = 32


@dataclass(frozen=True)
class FloquetSection:
    mu: float = 80.0
    phi0: float = 0.0
    omega_bar: float = 4800.0
    g: float = 7.2
    ref: Optional[int] = None
    negative: str = "extended"
    sample_rate: Optional[float] = None
    com_threshold: float = 0.3
    population_threshold: float = 0.05


@dataclass(frozen=True)
class CalibSection:
    E_JJ: float = 21.9
    E_C: float = 0.208
    k: float = 1.0
    b: float = 0.0
    eta: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "campaign"
    seed: int = 0
    out: str = "out"
    chain: ChainConfig = ChainConfig()
    trajectory: TrajectoryConfig = TrajectoryConfig()
    disorder: DisorderSection = DisorderSection()
    stepper: StepperSection = StepperSection()
    ensemble: EnsembleSection = EnsembleSection()
    sweep: Optional[SweepSection] = None
    measure: MeasureSection = MeasureSection()
    floquet: FloquetSection = FloquetSection()
    calib: CalibSection = CalibSection()

    # -- builders ---------------------------------------------------------
    def build_trajectory(self) -> tuple[Trajectory, float]:
        """Trajectory and base hopping ``J`` (chain.J overrides the preset)."""
        tc = self.trajectory
        over = {k: getattr(tc, k) for k in ("Delta0", "delta0", "Delta1", "delta_c", "tau1", "tau2",
                                            "orientation") if getattr(tc, k) is not None}
        if tc.name is not None:
            if tc.variant is not None:
                over["variant"] = tc.variant
            traj, J = named(tc.name, tc.T, **over)
        else:
            kw = dict(variant=tc.variant, Delta0=over.pop("Delta0", 0.0), delta0=over.pop("delta0", 0.0),
                      T=tc.T, **over)
            traj, J = Trajectory(**kw), None
        if tc.reverse:
            traj = traj.reversed()
        J = self.chain.J if self.chain.J is not None else J
        if J is None:
            raise ConfigError("chain.J is required for a custom trajectory")
        return traj, float(J)

    def build_chain(self) -> ChainSpec:
        _, J = self.build_trajectory()
        return ChainSpec(self.chain.L, J, self.chain.boundary)

    def build_disorder(self, seed: Optional[int] = None) -> DisorderConfig:
        d = self.disorder
        return DisorderConfig(d.kind, d.strength, d.alpha, d.beta, self.seed if seed is None else seed)

    def build_stepper(self) -> StepperConfig:
        s = self.stepper
        return StepperConfig(s.steps_per_period, s.max_phase, method=s.method)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        """Digest of every run parameter; the output directory is excluded."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


# ---------------------------------------------------------------------------
# parsing

_SECTIONS = {
    "chain": ChainConfig, "trajectory": TrajectoryConfig, "disorder": DisorderSection,
    "stepper": StepperSection, "ensemble": EnsembleSection, "sweep": SweepSection,
    "measure": MeasureSection, "floquet": FloquetSection, "calib": CalibSection,
}


def _line_map(text: str) -> dict:
    """Map dotted key paths to 1-based line numbers."""
    out = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[key] = k.start_mark.line + 1
                walk(v, key)

    if root is not None:
        walk(root, "")
    return out


def _coerce(value, default, key, where):
    """Coerce a YAML scalar/list to the type of the field default."""
    def fail(msg):
        raise ConfigError(f"{where(key)}: {key}: {msg}")

    if isinstance(default, bool):
        if not isinstance(value, bool):
            fail(f"expected true/false, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            fail(f"expected a list, got {value!r}")
        return tuple(value)
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            fail(f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail(f"expected a number, got {value!r}")
        return float(value)
    return value


_OPTIONAL_INT = {"orientation", "ref"}
_OPTIONAL_STR = {"name", "variant"}


def _coerce_optional(name, value, key, where):
    if name in _OPTIONAL_STR:
        if not isinstance(value, str):
            raise ConfigError(f"{where(key)}: {key}: expected a string, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where(key)}: {key}: expected a number, got {value!r}")
    if name in _OPTIONAL_INT:
        if int(value) != value:
            raise ConfigError(f"{where(key)}: {key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _build_section(cls, raw, prefix, where):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where(prefix)}: {prefix}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(names))
    if unknown:
        k = f"{prefix}.{unknown[0]}"
        raise ConfigError(f"{where(k)}: unknown key {k!r}; allowed: {', '.join(names)}")
    kw = {}
    for name, value in raw.items():
        default = names[name].default
        key = f"{prefix}.{name}"
        if value is None:
            kw[name] = None
            continue
        if default is None:
            kw[name] = _coerce_optional(name, value, key, where)
        else:
            kw[name] = _coerce(value, default, key, where)
    return cls(**kw)


def _validate(cfg: ExperimentConfig, where) -> None:
    def fail(key, msg):
        raise ConfigError(f"{where(key)}: {key}: {msg}")

    c = cfg.chain
    if c.L < 2:
        fail("chain.L", "must be >= 2")
    if c.boundary not in ("open", "periodic"):
        fail("chain.boundary", "must be 'open' or 'periodic'")
    if c.boundary == "periodic" and c.L % 2:
        fail("chain.L", "must be even for a periodic chain")
    t = cfg.trajectory
    if t.name is not None and t.name not in preset_names():
        fail("trajectory.name", f"unknown preset {t.name!r}; known: {', '.join(preset_names())}")
    if t.name is None and t.variant is None:
        fail("trajectory.variant", "required when no preset name is given")
    if t.variant is not None and t.variant not in VARIANTS:
        fail("trajectory.variant", f"must be one of {VARIANTS}")
    if t.name is None and t.T is None:
        fail("trajectory.T", "required for a custom trajectory")
    if t.T is not None and not t.T > 0:
        fail("trajectory.T", "must be positive")
    if t.orientation is not None and t.orientation not in (1, -1):
        fail("trajectory.orientation", "must be +1 or -1")
    d = cfg.disorder
    if d.kind not in DISORDER_KINDS:
        fail("disorder.kind", f"must be one of {DISORDER_KINDS}")
    if d.strength < 0:
        fail("disorder.strength", "must be >= 0")
    if not 0 < d.alpha < 1:
        fail("disorder.alpha", "must lie in (0, 1)")
    if not (d.beta == "random" or isinstance(d.beta, (int, float))):
        fail("disorder.beta", "must be 'random' or a number")
    s = cfg.stepper
    if s.steps_per_period < 64:
        fail("stepper.steps_per_period", "must be >= 64")
    if not 0 < s.max_phase <= 0.02:
        fail("stepper.max_phase", "must lie in (0, 0.02]")
    if s.method not in ("taylor", "eigh"):
        fail("stepper.method", "must be 'taylor' or 'eigh'")
    if cfg.ensemble.size < 1:
        fail("ensemble.size", "must be >= 1")
    if cfg.sweep is not None:
        w = cfg.sweep
        if w.parameter not in SWEEP_PARAMETERS:
            fail("sweep.parameter", f"must be one of {SWEEP_PARAMETERS}")
        vals = list(w.values)
        if not vals:
            fail("sweep.values", "must be nonempty")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            fail("sweep.values", "must be numbers")
        diffs = [b - a for a, b in zip(vals, vals[1:])]
        if diffs and not (all(x > 0 for x in diffs) or all(x < 0 for x in diffs)):
            fail("sweep.values", "must be strictly monotone")
        if w.parameter == "disorder.strength" and min(vals) < 0:
            fail("sweep.values", "disorder strengths must be >= 0")
        if any((not isinstance(p, (int, float))) or p <= 0 for p in w.periods):
            fail("sweep.periods", "must be positive numbers")
    m = cfg.measure
    if m.observable not in OBSERVABLES:
        fail("measure.observable", f"must be one of {OBSERVABLES}")
    if m.method not in ("sum", "direct"):
        fail("measure.method", "must be 'sum' or 'direct'")
    if not 1 <= m.init_site <= c.L:
        fail("measure.init_site", f"must lie in 1..{c.L}")
    if m.n_cycles < 1:
        fail("measure.n_cycles", "must be >= 1")
    if m.point and len(m.point) != 2:
        fail("measure.point", "must be [Delta, delta]")
    if m.init_pair and (len(m.init_pair) != 2 or m.init_pair[0] == m.init_pair[1]):
        fail("measure.init_pair", "must be two distinct sites")
    f = cfg.floquet
    if not f.mu > 0:
        fail("floquet.mu", "must be positive")
    if f.negative not in ("refuse", "extended", "gauge"):
        fail("floquet.negative", "must be 'refuse', 'extended' or 'gauge'")
    cal = cfg.calib
    if cal.E_JJ <= 0 or cal.E_C <= 0:
        fail("calib.E_JJ", "E_JJ and E_C must be positive")
    if not 0.5 <= cal.eta <= 1.5:
        fail("calib.eta", "must lie in [0.5, 1.5]")


def config_from_dict(raw: dict, source: str = "<config>", lines: Optional[dict] = None) -> ExperimentConfig:
    """Validate a plain mapping into an :class:`ExperimentConfig`."""
    lines = lines or {}

    def where(key):
        ln = lines.get(key)
        if ln is None and "." in key:
            ln = lines.get(key.rsplit(".", 1)[0])
        if isinstance(ln, str):
            return ln
        return f"{source}:{ln}" if ln else source

    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    top = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - set(top))
    if unknown:
        raise ConfigError(f"{where(unknown[0])}: unknown key {unknown[0]!r}; allowed: {', '.join(top)}")
    kw = {}
    for name, value in raw.items():
        if name in _SECTIONS:
            kw[name] = None if (name == "sweep" and value is None) else _build_section(_SECTIONS[name], value, name, where)
        elif name in ("name", "out"):
            if not isinstance(value, str):
                raise ConfigError(f"{where(name)}: {name}: expected a string")
            kw[name] = value
        elif name == "seed":
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ConfigError(f"{where(name)}: seed: expected a non-negative integer")
            kw[name] = value
    cfg = ExperimentConfig(**kw)
    _validate(cfg, where)
    try:
        cfg.build_trajectory()
    except ValueError as e:
        raise ConfigError(f"{where('trajectory')}: trajectory: {e}") from None
    return cfg


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings (values parsed as YAML) to a raw mapping."""
    raw = json.loads(json.dumps(raw or {}))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, text = item.split("=", 1)
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"--set {key}: cannot parse value: {e}") from None
        node = raw
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = value
    return raw


def parse_config(path, overrides=()) -> ExperimentConfig:
    """Read, override and validate a YAML campaign file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ConfigError(f"{loc}: YAML syntax error: {getattr(e, 'problem', e)}") from None
    raw = apply_overrides(raw, overrides)
    lines = _line_map(text)
    for item in overrides or ():
        key = item.split("=", 1)[0].strip()
        lines[key] = f"--set {key}"
    return config_from_dict(raw, str(path), lines)


def serialize_config(cfg: ExperimentConfig) -> str:
    """YAML text that :func:`parse_config` maps back to ``cfg``."""
    d = cfg.to_dict()
    if d.get("sweep") is None:
        d.pop("sweep", None)
    return yaml.safe_dump(d, sort_keys=False)
