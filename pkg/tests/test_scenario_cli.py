import csv
import io

import pytest

from atfrelay import cli
from atfrelay.channel import dbm_to_watts
from atfrelay.scenario import DESK_LEVELS, Scenario, ScenarioError, desk_scale, parse_scenario


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# --- scenario files ---------------------------------------------------------

def test_defaults_reproduce_reference_setup():
    scn = Scenario()
    cfg, b, sim = scn.system_config(), scn.battery(), scn.sim_config()
    assert cfg.source_gain == pytest.approx(1 / 37)
    assert cfg.destination_gain == pytest.approx(1 / 197)
    assert cfg.interferer_gains == pytest.approx((1 / 145, 1 / 170, 1 / 197))
    assert (cfg.nakagami_m, cfg.antennas, cfg.efficiency) == (2, 4, 0.5)
    assert cfg.noise_relay == pytest.approx(1e-11) and cfg.noise_dest == pytest.approx(1e-11)
    assert (b.capacity, b.levels) == (0.5, 90)
    assert sim.num_blocks == 10**6


def test_partial_file_keeps_defaults():
    scn = parse_scenario("system:\n  source_power_dbm: 40\nbattery:\n  levels: 30\n")
    assert scn.system_config().source_power == pytest.approx(10.0)
    assert scn.battery().levels == 30
    assert scn.get("topology", "d_sr") == 6.0
    assert scn.explicit == {"system.source_power_dbm", "battery.levels"}


def test_no_interferers_and_per_interferer_powers():
    assert parse_scenario("system:\n  interferer_power_dbm: null\n").system_config().num_interferers == 0
    cfg = parse_scenario("system:\n  interferer_power_dbm: [10, 20, 30]\n").system_config()
    assert cfg.interferer_powers == pytest.approx((0.01, 0.1, 1.0))
    with pytest.raises(ScenarioError):
        parse_scenario("system:\n  interferer_power_dbm: [10, 20]\n").system_config()


@pytest.mark.parametrize("text,line,key", [
    ("system:\n  rate: 1\n  bogus: 3\n", 3, "system.bogus"),
    ("radio:\n  x: 1\n", 1, "radio"),
    ("battery:\n  levels: 2.5\n", 2, "battery.levels"),
    ("simulation:\n  fidelity: exact\n", 2, "simulation.fidelity"),
    ("system:\n  rate: 1\n  rate: 2\n", 3, "system.rate"),
])
def test_bad_keys_report_line(text, line, key):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert err.value.line == line and err.value.key == key
    assert f"line {line}" in str(err.value)


def test_malformed_yaml():
    with pytest.raises(ScenarioError) as err:
        parse_scenario("system: [unclosed\n")
    assert err.value.line is not None


def test_sweep_grid_must_increase():
    with pytest.raises(ScenarioError):
        parse_scenario("sweep:\n  grid: [10, 5]\n").sweep_spec()


def test_desk_scale():
    assert desk_scale(Scenario()).battery().levels == DESK_LEVELS
    pinned = parse_scenario("battery:\n  levels: 7\n")
    assert desk_scale(pinned).battery().levels == 7


def test_dbm_round_trip_relative():
    for dbm in (-80.0, -3.3, 0.0, 30.0, 47.5):
        w = dbm_to_watts(dbm)
        assert dbm_to_watts(cli.validation.ch.watts_to_dbm(w)) == pytest.approx(w, rel=1e-12)


# --- commands ---------------------------------------------------------------

def test_analytic_default(capsys, tmp_path):
    code, out, err = _run(capsys, "analytic")
    assert code == 0
    row = _rows(out)[0]
    ups = float(row["analytic_throughput"])
    assert 0 <= ups <= 1.0
    assert "throughput=" in err


def test_analytic_csv_byte_stable(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _run(capsys, "analytic", "--out", str(a))[0] == 0
    assert _run(capsys, "analytic", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes().startswith(b"var,analytic_throughput,analytic_outage,sim_throughput,")


def test_analytic_dump(capsys, tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("battery:\n  levels: 3\n")
    code, _, err = _run(capsys, "analytic", "--scenario", str(path), "--dump")
    assert code == 0
    assert err.count("Z[") == 4 and "pi=" in err


def test_enormous_threshold_gives_zero_throughput(capsys, tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("system:\n  rate: 100\nbattery:\n  levels: 20\n")
    code, out, _ = _run(capsys, "analytic", "--scenario", str(path))
    assert code == 0
    assert float(_rows(out)[0]["analytic_throughput"]) == 0.0


def test_config_error_exit_code(capsys, tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("system:\n  rate: 1\n  bogus: 3\n")
    code, _, err = _run(capsys, "analytic", "--scenario", str(path))
    assert code == 2
    assert "line 3" in err and "system.bogus" in err
    assert _run(capsys, "analytic", "--scenario", str(tmp_path / "missing.yaml"))[0] == 2


def test_simulate_reproducible_and_labelled(capsys):
    runs = [_run(capsys, "simulate", "--blocks", "5000", "--seed", "12") for _ in range(2)]
    assert runs[0][1] == runs[1][1]
    assert _rows(runs[0][1])[0]["var"] == "atf:scalar:discrete:seed=12"
    _, out, _ = _run(capsys, "simulate", "--blocks", "5000", "--fidelity", "vector")
    assert _rows(out)[0]["var"].startswith("atf:vector:")
    _, out, err = _run(capsys, "simulate", "--blocks", "5000", "--baseline")
    assert _rows(out)[0]["var"].startswith("baseline:")
    assert "seed=0" in err


def test_sweep_rows_in_grid_order(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, _ = _run(capsys, "sweep", "--blocks", "20000", "--jobs", "1", "--out", str(out))
    assert code == 0
    rows = _rows(out.read_text())
    assert [float(r["var"]) for r in rows] == [10.0, 20.0, 30.0, 40.0, 50.0]
    assert all(r["error"] == "" for r in rows)
    for r in rows:
        assert abs(float(r["analytic_throughput"]) - float(r["sim_throughput"])) < 0.03
        assert int(r["mode_eh"]) + int(r["mode_idfail"]) + int(r["mode_forward"]) == 20000


def test_sweep_parallel_matches_serial(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--blocks", "5000", "--var", "interferer_power_dbm", "--grid", "10,25,40"]
    _run(capsys, *args, "--jobs", "1", "--out", str(a))
    _run(capsys, *args, "--jobs", "2", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_sweep_point_failure_recorded(capsys, tmp_path):
    path = tmp_path / "q.yaml"
    path.write_text("sweep:\n  variable: levels_q\n  grid: [0, 2.5, 5]\n")
    code, out, _ = _run(capsys, "sweep", "--scenario", str(path), "--blocks", "2000", "--jobs", "1")
    assert code == 0
    rows = _rows(out)
    assert rows[0]["error"] and rows[1]["error"]
    assert rows[2]["error"] == "" and rows[2]["analytic_throughput"] != ""


def test_point_seeds_distinct():
    seeds = {cli.point_seed(0, i) for i in range(100)}
    assert len(seeds) == 100
    assert cli.point_seed(3, 4) == cli.point_seed(3, 4)


def test_validate_reports_failures(capsys, monkeypatch):
    from atfrelay import validation
    ok = validation.CheckResult("fine", True, 0.0, 1.0)
    bad = validation.CheckResult("broken", False, 2.0, 1.0)
    monkeypatch.setattr(validation, "all_checks",
                        lambda quick=False: [("markov", lambda: ok), ("simulator", lambda: bad)])
    code, out, _ = _run(capsys, "validate", "--quick")
    assert code == 1
    assert "[PASS] fine" in out and "[FAIL] broken" in out and "simulator" in out


def test_validate_quick_runs(capsys, monkeypatch):
    from atfrelay import validation
    checks = validation.all_checks(quick=True)
    fast = [c for c in checks if c[1] in (validation.check_incomplete_gamma, validation.check_small_instances)]
    monkeypatch.setattr(validation, "all_checks", lambda quick=False: fast)
    code, out, _ = _run(capsys, "validate", "--quick")
    assert code == 0 and "all checks passed" in out
