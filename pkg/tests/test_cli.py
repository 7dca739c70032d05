import json

import pytest

from sinhrobin.cli import create_parser, main


def _data_rows(path):
    text = path.read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return lines[0].split(","), lines[1:]


def test_parser_requires_config():
    parser = create_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["theta0"])
    args = parser.parse_args(["--debug", "sweep", "--config", "run.env", "--workers", "2"])
    assert args.debug and args.command == "sweep" and args.workers == 2


def test_no_command_prints_help(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().out


def test_theta0_run_is_reproducible(write_config, tmp_path):
    config = write_config("# defaults\n")
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["theta0", "--config", config, "--out", str(first)]) == 0
    assert main(["theta0", "--config", config, "--out", str(second)]) == 0

    payload = json.loads((first / "theta0.json").read_text(encoding="utf-8"))
    assert payload["theta0"] == pytest.approx(0.3050289, abs=5e-4)
    assert payload["metadata"]["subcommand"] == "theta0"
    assert {"version", "config_hash", "seed", "c_gamma", "theta0"} <= set(payload["metadata"])
    for name in ("theta0.json", "profile_table.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    header, rows = _data_rows(first / "profile_table.csv")
    assert header == ["theta", "h", "dh", "ddh", "v"]
    assert rows


def test_invalid_spin_exits_with_configuration_status(write_config, tmp_path, capsys):
    config = write_config("SPINS=1,0\n")
    assert main(["hamiltonian-min", "--config", config, "--out", str(tmp_path / "out")]) == 2
    assert "spin must be ±1" in capsys.readouterr().out
    assert not (tmp_path / "out").exists()


def test_negative_seed_is_a_configuration_error(write_config):
    config = write_config("")
    assert main(["theta0", "--config", config, "--seed", "-1"]) == 2


def test_regime_violation_without_override(write_config, tmp_path):
    text = "SPINS=1\nSOLVE_SEED=theta0\nGRID_RADIAL=24\nGRID_ANGULAR=64\nLAMBDAS=4\nEPSILONS=0.05\n"
    config = write_config(text)
    assert main(["solve", "--config", config, "--out", str(tmp_path / "out")]) == 2


def test_small_sweep(write_config, tmp_path):
    text = (
        "DOMAIN=disk\n"
        "SPINS=1\n"
        "SOLVE_SEED=theta0\n"
        "GRID_RADIAL=24\n"
        "GRID_ANGULAR=64\n"
        "LAMBDAS=4,5\n"
        "EPSILONS=0.05,0.025\n"
        "ALLOW_OUT_OF_REGIME=true\n"
        "NEWTON_MAX_ITER=30\n"
    )
    config = write_config(text)
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", config, "--out", str(out)])

    header, rows = _data_rows(out / "sweep.csv")
    assert header[:3] == ["eps", "lambda", "converged"]
    assert len(rows) == 4
    converged = [row.split(",")[2] for row in rows]
    assert set(converged) <= {"true", "false"}
    assert code == (0 if all(flag == "true" for flag in converged) else 3)
    summary = json.loads((out / "sweep_summary.json").read_text(encoding="utf-8"))
    assert [entry["lambda"] for entry in summary["sup_growth"]] == [4.0, 5.0]
