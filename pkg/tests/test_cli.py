import json
import subprocess
import sys

import pytest

from bandlab.bandop import save
from bandlab.cli import EXIT_BUDGET, EXIT_MISMATCH, EXIT_OK, EXIT_USAGE, ExperimentConfig, ConfigError, main
from bandlab.gallery import eventually_constant, i_minus_v1


@pytest.fixture
def op_file(tmp_path):
    path = tmp_path / "op.json"
    save(i_minus_v1(), path)
    return str(path)


def test_check_gallery_case(capsys):
    assert main(["check", "--gallery", "i_minus_v1"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["schemaVersion"] == 1 and report["task"] == "ladder"
    assert report["conditions"]["vii"] == "holds" and report["conditions"]["v"] == "fails"
    assert report["conclusion"] == "not Fredholm"


def test_moduli_csv(op_file, capsys):
    assert main(["moduli", "--op", op_file, "--radii", "8,16,32,64", "--p", "2", "--format", "csv"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split(",")[3:8] == [f"sigma_{i}" for i in range(1, 6)]
    assert [line.split(",")[0] for line in lines[1:]] == ["8", "16", "32", "64"]


def test_tsemi_auto(tmp_path, capsys):
    path = tmp_path / "ec.json"
    save(eventually_constant(), path)
    assert main(["tsemi", "--op", str(path), "--m", "1", "--eps", "auto"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["l"] == 1 and report["chain_slack"] >= -1e-12


def test_json_reports_are_byte_identical(op_file, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        assert main(["sweep", "--op", op_file, "--radii", "8,16,32", "--out", str(out)]) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_undecided_sweep_exits_nonzero(capsys):
    assert main(["sweep", "--gallery", "i_minus_v1", "--tol", "0.5"]) == EXIT_MISMATCH


def test_usage_errors_carry_field_paths(tmp_path, capsys):
    assert main(["sweep", "--op", '{"diagonals": [{"offset": [0]}]}']) == EXIT_USAGE
    assert "$.op.diagonals[0]" in capsys.readouterr().err
    assert main(["moduli", "--gallery", "nope"]) == EXIT_USAGE
    assert "$.gallery[0]" in capsys.readouterr().err
    assert main(["sweep", "--gallery", "i_minus_v1", "--radii", "4,x"]) == EXIT_USAGE
    assert main(["ladder"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"task": "sweep", "gallery": "i_minus_v1", "radius": [1]}))
    assert main(["run", str(cfg)]) == EXIT_USAGE
    assert "$.radius" in capsys.readouterr().err


def test_budget_exit_code(capsys):
    assert main(["ladder", "--gallery", "e1_halfplane", "--budget", "128"]) == EXIT_BUDGET


def test_config_file_run(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    out = tmp_path / "out.json"
    cfg.write_text(json.dumps({"task": "sweep", "gallery": "symbol_2_minus_t", "radii": [8, 16, 32],
                               "out": str(out)}))
    assert main(["run", str(cfg)]) == EXIT_OK
    assert json.loads(out.read_text())["verdict"] == "Phi"


def test_config_validation():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict({"gallery": "i_minus_v1"})
    assert err.value.path == "$.task"
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict({"task": "sweep", "gallery": "i_minus_v1", "p": "1"})
    assert err.value.path == "$.p"
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict({"task": "tsemi", "gallery": "i_minus_v1", "eps": "lots"})
    assert err.value.path == "$.eps"


def test_gallery_command_and_export(tmp_path, capsys):
    code = main(["gallery", "--gallery", "flip_quasibanded", "--format", "text", "--export", str(tmp_path)])
    assert code == EXIT_OK
    assert "flip_quasibanded" in capsys.readouterr().out
    assert (tmp_path / "flip_quasibanded.json").exists()


def test_spectrum_text(capsys):
    assert main(["spectrum", "--gallery", "eventually_constant", "--format", "text"]) == EXIT_OK
    assert "adjoint check: True" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bandlab", "sweep", "--gallery", "symbol_2_minus_t",
                           "--radii", "8,16,32", "--format", "text"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("Phi:")
