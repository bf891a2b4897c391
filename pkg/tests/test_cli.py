from pathlib import Path

import pytest

from kgscatter import cli, fileio

SCEN = Path(__file__).resolve().parents[1] / "scenarios"
MINIMAL = str(SCEN / "minimal_free.yaml")


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = cli.main(["simulate", "--scenario", MINIMAL, "--out", str(out)])
    return code, out


def test_simulate_writes_indexed_outputs(simulated):
    code, out = simulated
    assert code == cli.EXIT_OK
    man = fileio.read_json(out / "manifest.json")
    assert man["status"] == "ok" and man["command"] == "simulate"
    for name in ("steps.csv", "steps.png", "two_detector.csv", "two_detector.png", "large_velocity.csv",
                 "monitor_A3.json", "flags.json", "final_density.png", "snapshots/u_t32.bin"):
        assert name in man["outputs"], name
        entry = man["outputs"][name]
        assert fileio.digest(out / entry["path"]) == entry["sha256"]
    assert set(man["checksums"]) == {"grid", "schedule", "initial_state"}
    flags = fileio.read_json(out / "flags.json")
    assert flags == {"large_velocity_tail_ok": True, "A3_converged": True}


def test_rerun_from_manifest_is_bit_identical(simulated, tmp_path):
    _, out = simulated
    code = cli.main(["simulate", "--scenario", str(out / "manifest.json"), "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    a = fileio.read_json(out / "manifest.json")
    b = fileio.read_json(tmp_path / "manifest.json")
    assert a["checksums"] == b["checksums"]
    assert {k: v["sha256"] for k, v in a["outputs"].items()} == {k: v["sha256"] for k, v in b["outputs"].items()}


def test_invalid_scenario_exit_code(tmp_path, capsys):
    code = cli.main(["simulate", "--scenario", MINIMAL, "--out", str(tmp_path),
                     "--override", "detectors.h2.center=0.1"])
    assert code == cli.EXIT_INVALID
    assert "detectors" in capsys.readouterr().err
    assert cli.main(["simulate", "--scenario", MINIMAL, "--jobs", "0"]) == cli.EXIT_INVALID


def test_guard_abort_exit_code(tmp_path, capsys):
    code = cli.main(["simulate", "--scenario", MINIMAL, "--out", str(tmp_path),
                     "--override", "source={variant: pair_potential, potential: {coupling: 50, width: 0.5}}",
                     "--override", "figures=false", "--override", "diagnostics=[]"])
    assert code == cli.EXIT_GUARD
    assert "boundary mass" in capsys.readouterr().err
    man = fileio.read_json(tmp_path / "manifest.json")
    assert man["status"] == "aborted"
    assert "steps.csv" in man["outputs"]


def test_nonconverged_diagnostic_exit_code(tmp_path):
    # at T = 50 the phase-space integral has not settled: its tail flag is false
    code = cli.main(["estimates", "--scenario", MINIMAL, "--out", str(tmp_path),
                     "--override", "diagnostics=[phase_space]", "--override", "figures=false"])
    assert code == cli.EXIT_NONCONV
    assert fileio.read_json(tmp_path / "flags.json") == {"phase_space_tail_ok": False}
    assert fileio.read_json(tmp_path / "manifest.json")["status"] == "not-converged"


def test_limits_needs_detectors(tmp_path):
    code = cli.main(["limits", "--scenario", MINIMAL, "--out", str(tmp_path), "--override", "detectors=null"])
    assert code == cli.EXIT_INVALID


def test_limits_on_minimal_run(tmp_path):
    code = cli.main(["limits", "--scenario", MINIMAL, "--out", str(tmp_path), "--override", "figures=false"])
    rep = fileio.read_json(tmp_path / "limits.json")
    assert rep["limit"]["oracle_residual"] is not None
    assert code == (cli.EXIT_OK if rep["limit"]["converged"] else cli.EXIT_NONCONV)
    assert (tmp_path / "F_plus.bin").exists()


def test_graf_check(tmp_path):
    code = cli.main(["graf-check", "--scenario", str(SCEN / "graf_reference.yaml"), "--out", str(tmp_path),
                     "--override", "graf.refine=false"])
    assert code == cli.EXIT_OK
    rep = fileio.read_json(tmp_path / "graf_report.json")
    assert rep["c1"] == pytest.approx(2.0, rel=1e-6)
    header, rows = fileio.read_rows(tmp_path / "graf_table.csv")
    assert header[:3] == ["y1", "y2", "R"]
    assert (tmp_path / "graf.png").exists()


def test_parser_requires_scenario():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["simulate"])
