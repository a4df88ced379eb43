import json
import subprocess
import sys

import pytest

from eqfree.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main, resolve
from eqfree.config import ConfigError

SMALL_SIM = "[simulate]\nparticles = 500\ntotal_steps = 60\nsnapshots = 30, 60\nmesh_points = 11\n"


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_SIM)
    return path


def test_analytic_check_passes(tmp_path, capsys):
    assert main(["analytic", "--out", str(tmp_path / "a"), "--check"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 4
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert set(manifest["outputs"]) >= {"residuals.csv", "rescaled_moments.csv"}


def test_simulate_writes_outputs_and_replays_identically(tmp_path, small_config, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(small_config), "--seed", "7", "--out", str(out)]) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert {"config.ini", "manifest.json", "cdf_step60.csv", "moments.csv"} <= names
    assert main(["replay", str(out / "manifest.json"), "--out", str(tmp_path / "again")]) == EXIT_OK
    assert "identical" in capsys.readouterr().out


def test_seed_changes_outputs(tmp_path, small_config):
    for s in (1, 2):
        main(["simulate", "--config", str(small_config), "--seed", str(s), "--out", str(tmp_path / str(s))])
    a = json.loads((tmp_path / "1" / "manifest.json").read_text())["outputs"]
    b = json.loads((tmp_path / "2" / "manifest.json").read_text())["outputs"]
    assert a["moments.csv"] != b["moments.csv"]


def test_bad_config_key_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[cdr]\nbogus = 3\n")
    assert main(["cdr", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "cdr.bogus" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_preset_from_another_command_is_a_config_error():
    with pytest.raises(ConfigError, match="does not belong"):
        resolve("cpi", "set1", None, None, None, None)


def test_invalid_particle_count_exits_1(tmp_path):
    assert main(["cpi", "--particles", "0", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_numerical_failure_exits_2_and_leaves_no_partial_output(tmp_path, small_config, capsys):
    cfg = tmp_path / "blowup.ini"
    cfg.write_text(SMALL_SIM + "[sde]\nD = 1e308\n")
    out = tmp_path / "boom"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err
    assert not out.exists()


def test_show_config_prints_the_preset(capsys):
    assert main(["show-config", "--preset", "set2"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "[probe]" in text and "sigma = 5.0" in text


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "eqfree.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "replay" in res.stdout


def test_exit_codes_are_distinct():
    assert len({EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK}) == 4
