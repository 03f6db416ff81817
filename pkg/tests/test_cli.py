import pytest

from conftest import config_text
from fenetherm import driver
from fenetherm.cli import main


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text(config_text(**{"run.label": "s", "init.v": "shear(1)"}))
    return path


def test_run_then_report_then_check(tmp_path, scenario, capsys):
    out = tmp_path / "out"
    assert main(["run", str(scenario), "--output-dir", str(out)]) == driver.EXIT_OK
    assert (out / "s.csv").exists() and (out / "s.final.pkin").exists()
    assert main(["report", str(out / "s.csv")]) == driver.EXIT_OK
    assert "all checks pass" in capsys.readouterr().out
    assert main(["check", str(out / "s.final.pkin")]) == driver.EXIT_OK
    assert "xi_total" in capsys.readouterr().out


def test_bad_beta_is_config_error(tmp_path, capsys):
    path = tmp_path / "b.cfg"
    path.write_text("heat.beta = 0.5\n")
    assert main(["run", str(path)]) == driver.EXIT_CONFIG
    assert "beta > 5/6" in capsys.readouterr().err


def test_missing_file_is_config_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.cfg")]) == driver.EXIT_CONFIG


def test_corrupt_checkpoint_exit(tmp_path):
    path = tmp_path / "x.pkin"
    path.write_bytes(b"NOPE" + bytes(64))
    assert main(["check", str(path)]) == driver.EXIT_CORRUPT
    assert main(["run", "--resume", str(path)]) == driver.EXIT_CORRUPT


def test_run_needs_config_or_resume():
    assert main(["run"]) == driver.EXIT_CONFIG


def test_equilibrium_command(tmp_path, scenario):
    assert main(["equilibrium", str(scenario), "--output-dir", str(tmp_path)]) == driver.EXIT_OK
    assert (tmp_path / "s.equilibrium.pkin").exists()


def test_strict_audit_exit(tmp_path, scenario):
    scenario.write_text(scenario.read_text() + "audit.energy_rel_tol = 1e-15\n")
    assert main(["run", str(scenario), "--output-dir", str(tmp_path), "--strict"]) == driver.EXIT_AUDIT
    assert main(["report", str(tmp_path / "s.csv"), "--energy-tol", "1e-15"]) == driver.EXIT_AUDIT


def test_invariant_exit(tmp_path, scenario):
    scenario.write_text(scenario.read_text() + "init.v = shear(400)\ntime.dt = 0.05\ntime.t_end = 0.5\n")
    assert main(["run", str(scenario), "--output-dir", str(tmp_path)]) == driver.EXIT_INVARIANT
    assert (tmp_path / "s.lastgood.pkin").exists()


def test_resume_extends_run(tmp_path, scenario):
    assert main(["run", str(scenario), "--output-dir", str(tmp_path)]) == 0
    assert main(["run", "--resume", str(tmp_path / "s.final.pkin"), "--t-end", "0.02",
                 "--output-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 + 2
