import json
import math
from pathlib import Path

import numpy as np
import pytest

from fiberlink import FreqSeries, ValidityMask, adev, histogram, mdev
from fiberlink import io as fio
from fiberlink.cli import main, parse_taus
from fiberlink.scenario import bundled_scenarios, load_budget, load_plan, load_scenario, load_selection, parse_scenario

from conftest import make_series

FIX = Path(__file__).parent / "fixtures"
NU0 = 194.4e12


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# ------------------------------------------------------------------ formats

def test_series_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = make_series(rng.normal(0, 2.3e-16, 500), rng.random(500) > 0.1, t0=57900.123456789, gate=1.0)
    fio.write_series(tmp_path / "s.tsv", s, "abc123")
    back = fio.read_series(tmp_path / "s.tsv")
    np.testing.assert_array_equal(back.valid, s.valid)
    np.testing.assert_array_equal(back.y[back.valid], s.y[s.valid])
    assert back.t0 == pytest.approx(s.t0, abs=1e-11)
    assert (back.gate, back.nu0) == (s.gate, s.nu0)


def test_series_header_and_columns(tmp_path):
    fio.write_series(tmp_path / "s.tsv", make_series([1e-16, np.nan]), "deadbeef", seed=3)
    lines = (tmp_path / "s.tsv").read_text().splitlines()
    assert lines[0].startswith("# fiberlink ")
    meta = fio.read_header(tmp_path / "s.tsv")
    assert meta["config_sha256"] == "deadbeef"
    assert meta["columns"].split() == ["mjd", "y", "valid"]
    mjd, y, valid = lines[-2].split("\t")
    assert len(mjd.split(".")[1]) >= 10
    assert len(y.split("e")[0].replace("-", "").replace(".", "")) >= 15
    assert valid == "1" and lines[-1].split("\t")[2] == "0"


def test_read_series_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("# columns: mjd\ty\tvalid\n57900.0\t1e-16\n")
    with pytest.raises(ValueError):
        fio.read_series(p)
    p.write_text("# columns: mjd\ty\tvalid\n57900.0\t1e-16\t1\n57900.5\t1e-16\t1\n57900.6\t1e-16\t1\n")
    with pytest.raises(ValueError):
        fio.read_series(p)
    p.write_text("# columns: mjd\ty\tvalid\n")
    with pytest.raises(ValueError):
        fio.read_series(p)


def test_mask_round_trip(tmp_path):
    m = ValidityMask(np.arange(50) % 4 != 0, t0=57900.0)
    fio.write_mask(tmp_path / "m.tsv", m, np.where(m.bits, 0, 2))
    back = fio.read_mask(tmp_path / "m.tsv")
    np.testing.assert_array_equal(back.bits, m.bits)
    rows = (tmp_path / "m.tsv").read_text().splitlines()
    assert rows[-2].endswith("\t0\t2")


def test_curve_file(tmp_path):
    s = make_series(np.random.default_rng(1).normal(0, 1e-15, 3000))
    a, m = adev(s), mdev(s)
    fio.write_curve(tmp_path / "c.tsv", a, m)
    data = np.loadtxt(tmp_path / "c.tsv")
    np.testing.assert_allclose(data[:, 0], a.taus)
    np.testing.assert_allclose(data[:, 1], a.values, rtol=1e-6)
    np.testing.assert_allclose(data[:, 2], m.values, rtol=1e-6)
    np.testing.assert_array_equal(data[:, 3], a.counts)


def test_histogram_file(tmp_path):
    h = histogram(make_series(np.linspace(-1, 1, 101) * 0.2 / NU0), 0.045)
    fio.write_histogram(tmp_path / "h.tsv", h)
    data = np.loadtxt(tmp_path / "h.tsv")
    assert data[:, 2].sum() == 101


def write_counter(path, mjd, ch1, ch2):
    lines = ["# dead-time-free counter export", "MJD\tch1\tch2"]
    lines += [f"{t:.10f}\t{a}\t{b}" for t, a, b in zip(mjd, ch1, ch2)]
    path.write_text("\n".join(lines) + "\n")


def test_read_counter(tmp_path):
    mjd = 57900.0 + np.arange(10) / 86400
    ch1 = [f"{1e6 + 1e-3 * i:.9f}" for i in range(10)]
    ch1[4] = "nan"
    write_counter(tmp_path / "c.txt", mjd, ch1, ["74000000.0"] * 10)
    s = fio.read_counter(tmp_path / "c.txt", "ch1", 1e6, nu0=NU0)
    assert s.gate == 1.0 and s.n == 10 and not s.valid[4]
    np.testing.assert_allclose(s.df[s.valid], 1e-3 * np.delete(np.arange(10), 4), atol=1e-9)
    with pytest.raises(ValueError):
        fio.read_counter(tmp_path / "c.txt", "ch9", 1e6)


def test_config_hash_stable():
    assert fio.config_hash({"a": 1, "b": [1, 2]}, 3) == fio.config_hash({"b": [1, 2], "a": 1}, 3)
    assert fio.config_hash({"a": 1}, 3) != fio.config_hash({"a": 1}, 4)


# ---------------------------------------------------------------- scenarios

def test_bundled_scenarios_parse():
    names = bundled_scenarios()
    assert {"short-link-5m", "hybrid-43km", "quiet", "two-branch"} <= set(names)
    for name in names:
        sc = load_scenario(name)
        assert sc.n > 0 and set(sc.specs) >= {c.name for c in sc.topology.spans}


def test_scenario_calibration_values():
    sc = load_scenario("short-link-5m")
    assert sc.n == 12 * 86400
    comp = sc.specs["interconnect"]
    assert comp.thermal.temp_amplitude == 0.8
    assert comp.thermal.length == 5.0
    assert comp.thermal.peak_y == pytest.approx(1.0673e-17, rel=1e-4)


def test_scenario_errors():
    with pytest.raises(ValueError):
        parse_scenario({"run": {}})
    with pytest.raises(ValueError):
        parse_scenario({"run": {"n": 10}, "spans": [{"name": "a", "length_km": 1.0, "noise": {"colour": 1}}]})
    with pytest.raises(ValueError):
        parse_scenario({"run": {"n": 10}, "spans": [{"name": "a", "length_km": 1.0, "noise": {"h": {"pink": 1}}}]})
    with pytest.raises(FileNotFoundError):
        load_scenario("no-such-scenario")


def test_fixture_configs_load():
    assert len(load_budget(FIX / "budget.toml").entries) == 3
    assert len(load_plan(FIX / "plan_ok.toml").stages) == 2
    assert load_selection(FIX / "selection.toml").std_window == 2750.0


# --------------------------------------------------------------------- cli

def test_parse_taus():
    np.testing.assert_array_equal(parse_taus(None, 300, 1.0), [1, 2, 5, 10, 20, 50, 100])
    np.testing.assert_array_equal(parse_taus("octave", 30, 1.0), [1, 2, 4, 8])
    np.testing.assert_array_equal(parse_taus("10, 1,100", 1000, 1.0), [1, 10, 100])


def test_cli_simulate_quiet_gives_zero_files(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--config", "quiet", "--out", tmp_path)
    assert code == 0
    for name in ("remote.tsv", "end_to_end.tsv", "monitor_interconnect.tsv"):
        s = fio.read_series(tmp_path / name)
        assert np.all(s.y == 0.0) and s.n == 3600
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 0 and len(manifest["config_sha256"]) == 16
    assert "time" not in json.dumps(manifest).lower().replace("fiberlink", "")


def test_cli_simulate_seed_override(tmp_path, capsys):
    cfg = FIX / "short-link-small.toml"
    run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "a")
    run(capsys, "simulate", "--config", cfg, "--seed", 8, "--out", tmp_path / "b")
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert (a["seed"], b["seed"]) == (7, 8)
    assert a["config_sha256"] != b["config_sha256"]
    assert (tmp_path / "a" / "end_to_end.tsv").read_bytes() != (tmp_path / "b" / "end_to_end.tsv").read_bytes()


def test_cli_simulate_documents_correction_sign(tmp_path, capsys):
    run(capsys, "simulate", "--config", FIX / "short-link-small.toml", "--out", tmp_path)
    assert "corrected = comparison - correction" in (tmp_path / "remote.tsv").read_text()


def test_cli_analyze(tmp_path, capsys):
    s = make_series(np.random.default_rng(3).normal(0, 1e-15, 20000))
    fio.write_series(tmp_path / "wfm.tsv", s)
    code, out, _ = run(capsys, "analyze", tmp_path / "wfm.tsv", "--out", tmp_path)
    assert code == 0
    assert "mean" in out and "median" in out
    curve = np.loadtxt(tmp_path / "wfm.curve.tsv")
    slope = np.polyfit(np.log(curve[:7, 0]), np.log(curve[:7, 1]), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)
    assert np.loadtxt(tmp_path / "wfm.hist.tsv")[:, 2].sum() == 20000


def test_cli_analyze_zero_series(tmp_path, capsys):
    fio.write_series(tmp_path / "z.tsv", make_series(np.zeros(100)))
    code, out, _ = run(capsys, "analyze", tmp_path / "z.tsv", "--out", tmp_path, "--taus", "1,2,10")
    assert code == 0
    curve = np.loadtxt(tmp_path / "z.curve.tsv")
    assert np.all(curve[:, 1] == 0) and curve[:, 0].tolist() == [1, 2, 10]


def test_cli_select_writes_series_and_sidecar(tmp_path, capsys):
    y = np.random.default_rng(4).normal(0, 1e-15, 20000)
    y[7000] = 5e-14
    fio.write_series(tmp_path / "d.tsv", make_series(y))
    code, out, _ = run(capsys, "select", tmp_path / "d.tsv", "--config", FIX / "selection.toml", "--out", tmp_path)
    assert code == 0 and "kept" in out
    mask = fio.read_mask(tmp_path / "d.mask.tsv")
    sel = fio.read_series(tmp_path / "d.selected.tsv")
    np.testing.assert_array_equal(mask.bits, sel.valid)
    assert not mask.bits[7000]
    reasons = np.loadtxt(tmp_path / "d.mask.tsv")[:, 2]
    assert int(reasons[7000]) & 2
    code, _, _ = run(capsys, "select", tmp_path / "d.tsv", "--simple", "--out", tmp_path / "simple")
    assert code == 0


def test_cli_uptime_files_and_fractions(tmp_path, capsys):
    for name, frac in (("a", 1.0), ("b", 0.9)):
        bits = np.arange(1000) < 1000 * frac
        fio.write_mask(tmp_path / f"{name}.tsv", ValidityMask(bits, t0=57900.0))
    code, out, _ = run(capsys, "uptime", tmp_path / "a.tsv", tmp_path / "b.tsv", "--labels", "x,y")
    assert code == 0 and "90.000 %" in out
    code, out, _ = run(capsys, "uptime", "--fractions", *[0.5] * 6)
    assert code == 0 and "1.5625 %" in out
    code, _, err = run(capsys, "uptime")
    assert code == 1 and "error" in err


def test_cli_budget(tmp_path, capsys):
    code, out, _ = run(capsys, "budget", "--config", FIX / "budget.toml", "--out", tmp_path)
    assert code == 0
    assert "2.000e-19" in out
    assert (tmp_path / "budget.txt").read_text() == out


def test_cli_plan_exit_codes(capsys, monkeypatch):
    monkeypatch.setenv("FIBERLINK_NO_COLOR", "1")
    code, out, _ = run(capsys, "plan", "--config", FIX / "plan_ok.toml")
    assert code == 0 and "1.000000" in out and "\033[" not in out
    code, out, _ = run(capsys, "plan", "--config", FIX / "plan_60mhz.toml")
    assert code == 2 and "VIOLATION" in out


def test_cli_io_errors(tmp_path, capsys):
    code, _, err = run(capsys, "analyze", tmp_path / "missing.tsv", "--out", tmp_path)
    assert code == 1 and "error" in err
    (tmp_path / "junk.tsv").write_text("not a series\n")
    code, _, _ = run(capsys, "analyze", tmp_path / "junk.tsv", "--out", tmp_path)
    assert code == 1
    (tmp_path / "bad.toml").write_text("[run\n")
    code, _, _ = run(capsys, "simulate", "--config", tmp_path / "bad.toml", "--out", tmp_path)
    assert code == 1


def test_cli_ingest_and_correct(tmp_path, capsys):
    n = 200
    mjd = 57900.0 + np.arange(n) / 86400
    rng = np.random.default_rng(5)
    mon_hz = rng.normal(0, 1e-3, n)
    comp = rng.normal(0, 1e-17, n) + 74 * mon_hz / (2 * NU0)
    write_counter(tmp_path / "counter.txt", mjd, [f"{1e6 + v:.12f}" for v in mon_hz], ["0"] * n)
    code, _, _ = run(capsys, "ingest", tmp_path / "counter.txt", "--channel", "ch1", "--nominal", 1e6,
                     "--out", tmp_path / "monitor.tsv")
    assert code == 0
    fio.write_series(tmp_path / "comparison.tsv", make_series(comp))
    code, _, _ = run(capsys, "correct", tmp_path / "comparison.tsv", tmp_path / "monitor.tsv",
                     "--out", tmp_path / "corrected.tsv")
    assert code == 0
    out = fio.read_series(tmp_path / "corrected.tsv")
    assert np.std(out.y) < 2e-17 < np.std(comp)


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "fiberlink", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("fiberlink ")
