from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from rmpump.config import (ConfigError, ExperimentConfig, SweepSection, config_from_dict, parse_config,
                           serialize_config)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    return p


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
def test_round_trip(path, tmp_path):
    cfg = parse_config(path)
    again = parse_config(_write(tmp_path, serialize_config(cfg)))
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


@given(L=st.integers(10, 200).map(lambda x: 2 * x), seed=st.integers(0, 2 ** 31), n=st.integers(1, 100),
       vals=st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=8, unique=True))
def test_round_trip_generated(tmp_path_factory, L, seed, n, vals):
    raw = {"seed": seed, "chain": {"L": L}, "ensemble": {"size": n},
           "disorder": {"kind": "uniform-onsite"},
           "sweep": {"parameter": "disorder.strength", "values": sorted(vals)}}
    cfg = config_from_dict(raw)
    p = tmp_path_factory.mktemp("rt") / "c.yaml"
    p.write_text(serialize_config(cfg))
    assert parse_config(p) == cfg


def test_negative_strength_names_field(tmp_path):
    p = _write(tmp_path, "disorder:\n  kind: uniform-onsite\n  strength: -2\n")
    with pytest.raises(ConfigError, match=r"c\.yaml:3: disorder\.strength"):
        parse_config(p)


def test_negative_sweep_value(tmp_path):
    p = _write(tmp_path, "sweep:\n  values: [0, -1]\n")
    with pytest.raises(ConfigError, match="sweep.values"):
        parse_config(p)


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match=r":2: unknown key 'chain.Lsize'"):
        parse_config(_write(tmp_path, "chain:\n  Lsize: 4\n"))
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(_write(tmp_path, "chains: {}\n"))


def test_type_errors(tmp_path):
    with pytest.raises(ConfigError, match="chain.L"):
        parse_config(_write(tmp_path, "chain:\n  L: forty\n"))
    with pytest.raises(ConfigError, match="YAML"):
        parse_config(_write(tmp_path, "chain: [\n"))


def test_non_monotone_grid(tmp_path):
    with pytest.raises(ConfigError, match="monotone"):
        parse_config(_write(tmp_path, "sweep:\n  values: [0, 5, 3]\n"))


def test_empty_grid(tmp_path):
    with pytest.raises(ConfigError, match="nonempty"):
        parse_config(_write(tmp_path, "sweep:\n  values: []\n"))


def test_ensemble_size(tmp_path):
    with pytest.raises(ConfigError, match="ensemble.size"):
        parse_config(_write(tmp_path, "ensemble:\n  size: 0\n"))


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config("/nonexistent/c.yaml")


def test_overrides(tmp_path):
    p = _write(tmp_path, "chain:\n  L: 20\n")
    cfg = parse_config(p, ["chain.L=30", "sweep.values=[1, 2]", "seed=9"])
    assert cfg.chain.L == 30 and cfg.seed == 9
    assert cfg.sweep.values == (1, 2)
    with pytest.raises(ConfigError, match="--set chain.L"):
        parse_config(p, ["chain.L=1"])


def test_onsite_campaign_axes():
    cfg = parse_config(CONFIGS / "onsite_disorder.yaml")
    assert cfg.sweep == SweepSection("disorder.strength", (0, 2.5, 5, 7.5, 10, 15, 20, 25, 30, 36), (0.65, 8))
    assert cfg.disorder.kind == "uniform-onsite"
    assert (cfg.chain.L, cfg.chain.boundary) == (42, "periodic")
    traj, J = cfg.build_trajectory()
    assert (traj.Delta0, traj.delta0, J) == (10.0, 2.5, 2.0)
    assert cfg.measure.observable == "pumped_charge"
    assert cfg.ensemble.size == 20


def test_hash_ignores_output_directory():
    a = ExperimentConfig(out="a")
    assert a.config_hash() == ExperimentConfig(out="b").config_hash()
    assert a.config_hash() != ExperimentConfig(seed=1).config_hash()


def test_custom_trajectory(tmp_path):
    cfg = parse_config(_write(tmp_path, "trajectory:\n  name: null\n  variant: ellipse\n  T: 2\n"
                                        "  Delta0: 4\n  delta0: 1\nchain:\n  J: 1.5\n"))
    traj, J = cfg.build_trajectory()
    assert (traj.variant, traj.T, J) == ("ellipse", 2.0, 1.5)
