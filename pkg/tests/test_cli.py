import csv
import io
import json
import warnings

import numpy as np
import pytest

from phonon_bus import __version__
from phonon_bus.cli import main
from phonon_bus.config import ExperimentConfig, point_seed
from phonon_bus.output import fmt


def run(tmp_path, scheme, config=None, *extra, name="cfg.json"):
    args = [scheme]
    if config is not None:
        path = tmp_path / name
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return main(args + list(extra))


def read(path):
    text = path.read_text()
    body = "\n".join(l for l in text.splitlines() if not l.startswith("#"))
    rows = list(csv.reader(io.StringIO(body)))
    return rows[0], rows[1:]


def test_modes_table(tmp_path):
    out = tmp_path / "o"
    assert run(tmp_path, "modes", None, "--n", "3", "--out", str(out)) == 0
    cols, rows = read(out / "modes.csv")
    ratios = [float(r[cols.index("omega_ratio")]) for r in rows]
    assert ratios == pytest.approx([1.0, 1.7321, 2.4083], abs=5e-5)
    assert {p.name for p in out.iterdir()} == {"modes.csv", "mode_vectors.csv", "positions.csv"}


def test_headers_record_provenance(tmp_path):
    out = tmp_path / "o"
    assert run(tmp_path, "spectator", {"seed": 17}, "--out", str(out)) == 0
    lines = (out / "spectator_summary.csv").read_text().splitlines()
    assert lines[0] == f"# phonon-bus {__version__}"
    assert lines[1].startswith("# config_sha256: ") and len(lines[1].split()[-1]) == 64
    assert lines[2] == "# seed: 17"
    assert any('"scheme": "spectator"' in l for l in lines if l.startswith("# config:"))


def test_float_format():
    assert fmt(0.1) == "1.0000000000000001e-01"
    assert fmt(3) == "3" and fmt(True) == "true" and fmt(None) == ""


def test_heat_without_noise_is_flat(tmp_path):
    out = tmp_path / "o"
    cfg = {"params": {"N": 2, "e_rms": 0.0, "initial": {"1": {"fock": 2}}, "n_samples": 11,
                      "duration": 200.0, "coherence_time": 10.0}}
    assert run(tmp_path, "heat", cfg, "--trials", "4", "--out", str(out)) == 0
    cols, rows = read(out / "heat_occupation.csv")
    by_mode = {}
    for r in rows:
        by_mode.setdefault(r[cols.index("mode")], []).append(float(r[cols.index("n_mean")]))
    assert by_mode["1"] == [2.0] * 11
    assert by_mode["2"] == [0.0] * 11


@pytest.mark.parametrize("cfg", [
    {"params": {"omega_x": -1.0}},
    {"params": {"N": 3, "bogus": 1}},
    {"params": {"N": 3}, "numerics": {"trials": 1}},
    {"params": {"N": 3}, "sweep": {"N": [2, 3], "mass_amu": [1, 2], "omega_x": [1, 2],
                                   "N2": [1]}},
])
def test_bad_config_exits_2_without_output(tmp_path, cfg):
    out = tmp_path / "o"
    assert run(tmp_path, "modes", cfg, "--out", str(out)) == 2
    assert not out.exists()


def test_sweep_point_validation_is_up_front(tmp_path):
    out = tmp_path / "o"
    cfg = {"sweep": {"N": [2, 0]}}
    assert run(tmp_path, "modes", cfg, "--out", str(out)) == 2
    assert not out.exists()


def test_sweep_cap(tmp_path):
    cfg = {"sweep": {"N": list(range(2, 12))}, "sweep_cap": 5}
    assert run(tmp_path, "modes", cfg, "--out", str(tmp_path / "o")) == 2


def test_physics_guard_exits_2(tmp_path):
    out = tmp_path / "o"
    assert run(tmp_path, "ms", {"params": {"delta": 2.0}}, "--out", str(out)) == 2
    assert not out.exists()


def test_truncation_leakage_exits_3(tmp_path):
    out = tmp_path / "o"
    assert run(tmp_path, "kick", {"params": {"wait": 6.283185307179586}}, "--cutoff", "4",
               "--out", str(out)) == 3
    assert not out.exists()


def test_scheme_mismatch(tmp_path):
    assert run(tmp_path, "ms", {"scheme": "kick"}, "--out", str(tmp_path / "o")) == 2


def test_one_point_sweep_matches_run(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = {"params": {"N": 4}}
    assert run(tmp_path, "modes", base, "--out", str(a)) == 0
    assert run(tmp_path, "modes", {"sweep": {"N": [4]}}, "--out", str(b), name="s.json") == 0
    cols_a, rows_a = read(a / "modes.csv")
    cols_b, rows_b = read(b / "modes.csv")
    # the sweep adds its parameter as a leading column
    assert cols_b == ["N"] + cols_a
    assert [r[1:] for r in rows_b] == rows_a


def test_grid_order_and_seeds():
    cfg = ExperimentConfig(scheme="modes", seed=5, sweep={"omega_x": [1.0, 2.0], "N": [3, 2]})
    assert cfg.grid() == [{"N": 3, "omega_x": 1.0}, {"N": 3, "omega_x": 2.0},
                          {"N": 2, "omega_x": 1.0}, {"N": 2, "omega_x": 2.0}]
    seeds = [point_seed(5, i) for i in range(4)]
    assert len(set(seeds)) == 4
    assert point_seed(5, 2) == int(np.random.SeedSequence(5, spawn_key=(2,))
                                   .generate_state(1, np.uint64)[0])


def test_ms_delta_sweep_gap_decreases(tmp_path):
    out = tmp_path / "o"
    cfg = {"params": {"sectors": [0, 1]}, "sweep": {"delta": [10.0, 20.0, 40.0]}}
    assert run(tmp_path, "ms", cfg, "--out", str(out), "--svg") == 0
    cols, rows = read(out / "ms_summary.csv")
    assert [float(r[cols.index("delta")]) for r in rows] == [10.0, 20.0, 40.0]
    gaps = [float(r[cols.index("gap")]) for r in rows]
    assert gaps[0] > gaps[1] > gaps[2]
    assert (out / "ms_gap_sweep.svg").exists()


def test_svg_output(tmp_path):
    out = tmp_path / "o"
    assert run(tmp_path, "stirap", {"params": {"sectors": [0]}}, "--out", str(out),
               "--svg") == 0
    svg = (out / "stirap_sectors.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg


HEAT = {"params": {"N": 2, "duration": 400.0, "coherence_time": 20.0, "n_samples": 21,
                   "e_rms": 0.01}}


def test_repeat_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(tmp_path, "heat", HEAT, "--trials", "16", "--seed", "9", "--out", str(a)) == 0
    assert run(tmp_path, "heat", HEAT, "--trials", "16", "--seed", "9", "--out", str(b)) == 0
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()
    c = tmp_path / "c"
    assert run(tmp_path, "heat", HEAT, "--trials", "16", "--seed", "10", "--out", str(c)) == 0
    assert read(a / "heat_rate.csv") != read(c / "heat_rate.csv")


def test_thread_env_var(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(tmp_path, "heat", HEAT, "--trials", "16", "--out", str(a)) == 0
    monkeypatch.setenv("PHONON_BUS_THREADS", "3")
    assert run(tmp_path, "heat", HEAT, "--trials", "16", "--out", str(b)) == 0
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()
