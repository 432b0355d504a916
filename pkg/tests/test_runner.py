import json
import math

import numpy as np
import pytest

from rmpump.config import config_from_dict
from rmpump.runner import (RunFailure, SweepResult, emit, emit_timeseries, plan, raw_csv, run_sweep,
                           summary_csv)
from rmpump.dynamics import evolve_single_excitation
from rmpump.model import ChainSpec
from rmpump.schedules import named

FAST = {"seed": 3, "chain": {"L": 20}, "trajectory": {"name": "C4"}, "disorder": {"kind": "uniform-onsite"},
        "ensemble": {"size": 3}, "sweep": {"parameter": "disorder.strength", "values": [0.0, 8.0]},
        "measure": {"observable": "mean_ipr", "point": [0.0, 2.5]}}


def _cfg(**over):
    raw = json.loads(json.dumps(FAST))
    for k, v in over.items():
        raw[k] = v
    return config_from_dict(raw)


def test_plan_order():
    tasks = plan(_cfg())
    assert [(t.value, t.index) for t in tasks] == [(0.0, 0), (0.0, 1), (0.0, 2), (8.0, 0), (8.0, 1), (8.0, 2)]


def test_statistics():
    res = run_sweep(_cfg())
    for p in res.points:
        assert p.n == 3 and len(p.values) == 3
        assert p.stderr == pytest.approx(np.std(p.values, ddof=1) / math.sqrt(3))
    assert res.points[0].stderr == pytest.approx(0.0, abs=1e-15)
    assert res.points[1].mean > res.points[0].mean


def test_single_realization_flagged():
    res = run_sweep(_cfg(ensemble={"size": 1}))
    assert all(p.stderr == 0.0 and "single_realization" in p.flags for p in res.points)


def test_deterministic_across_workers():
    cfg = _cfg(measure={"observable": "pumped_charge"}, chain={"L": 20, "boundary": "periodic"})
    a = run_sweep(cfg, threads=1)
    b = run_sweep(cfg, threads=2)
    assert summary_csv(a) == summary_csv(b)
    assert raw_csv(a) == raw_csv(b)


def test_common_random_numbers():
    res = run_sweep(_cfg(measure={"observable": "min_gap", "n_time": 64},
                         chain={"L": 20, "boundary": "periodic"}))
    assert res.points[0].values[0] != res.points[1].values[0]


def test_failures_tolerated_then_fatal(monkeypatch):
    import rmpump.runner as runner
    calls = {"n": 0}
    real = runner.measure

    def flaky(cfg, index):
        calls["n"] += 1
        if index == 0 and cfg.disorder.strength == 8.0:
            raise RuntimeError("boom")
        return real(cfg, index)

    monkeypatch.setattr(runner, "measure", flaky)
    res = run_sweep(_cfg(ensemble={"size": 10}))
    assert res.points[1].n == 9 and res.points[1].failures == 1
    assert res.failures[0]["error"] == "RuntimeError: boom"

    monkeypatch.setattr(runner, "measure", lambda cfg, index: (_ for _ in ()).throw(RuntimeError("x")))
    with pytest.raises(RunFailure):
        run_sweep(_cfg())


def test_emit_files(tmp_path):
    res = run_sweep(_cfg())
    files = emit(res, tmp_path)
    names = sorted(f.name for f in files)
    assert names == ["manifest.json", "raw.csv", "summary.csv"]
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0].startswith(f"# config_hash={res.config_hash} seed=3")
    assert summary[1] == "sweep_value,mean,stderr,n,L,T,seed"
    assert len(summary) == 4
    raw = (tmp_path / "raw.csv").read_text().splitlines()
    assert raw[0].startswith(f"# config_hash={res.config_hash}")
    assert len(raw) == 2 + 6
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config_hash"] == res.config_hash and man["seed"] == 3
    assert "code_version" in man and "wall_seconds" in man["timings"]


def test_reemission_byte_identical(tmp_path):
    res = run_sweep(_cfg())
    emit(res, tmp_path / "a")
    emit(res, tmp_path / "b")
    for name in ("summary.csv", "raw.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_structured_format(tmp_path):
    res = run_sweep(_cfg())
    emit(res, tmp_path, "structured")
    doc = json.loads((tmp_path / "results.json").read_text())
    assert [p["n"] for p in doc["points"]] == [3, 3]


def test_empty_sweep_header_only():
    res = SweepResult(_cfg(), [], 3, "abc")
    lines = summary_csv(res).splitlines()
    assert lines[0].startswith("# config_hash=abc seed=3")
    assert lines[1:] == ["sweep_value,mean,stderr,n,L,T,seed"]


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit(run_sweep(_cfg(ensemble={"size": 1})), blocker / "sub")


def test_timeseries_rows(tmp_path):
    traj, J = named("C4")
    r = evolve_single_excitation(ChainSpec(15, J, "open"), traj, None, 7, 1)
    p = emit_timeseries(r.times, r.populations, tmp_path / "ts.csv", "h", 0)
    lines = p.read_text().splitlines()
    assert lines[0] == "# config_hash=h seed=0" and lines[1] == "t,site,population"
    rows = np.loadtxt(lines[2:], delimiter=",")
    assert len(rows) == len(r.times) * 15
    grid = rows[:, 2].reshape(len(r.times), 15)
    np.testing.assert_array_equal(grid, r.populations)
    assert rows[:15, 1].tolist() == list(range(1, 16))
