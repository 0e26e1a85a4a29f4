"""Config schema strictness plus an end-to-end CLI pass in a temp dir."""

import shutil
import subprocess
from dataclasses import replace

import numpy as np
import pytest

from sonartkbd.cli import main
from sonartkbd.config import (ConfigError, default_config, load_config,
                              save_config)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Simulated dataset + fitted model shared by the CLI tests below."""
    root = tmp_path_factory.mktemp("cli")
    cfg = replace(default_config("sim"), scenario_duration_s=8.0,
                  filter_n_persist=400, filter_n_birth=100)
    save_config(cfg, root / "config.ini")
    rc = main(["simulate", "--config", str(root / "config.ini"),
               "--seed", "11", "--out", str(root / "ds")])
    assert rc == 0
    rc = main(["fit-noise", "--data", str(root / "ds"),
               "--order", "6", "--out", str(root / "model.var")])
    assert rc == 0
    return root


def test_profiles_differ_where_documented():
    real = default_config("real")
    sim = default_config("sim")
    assert real.meta_profile == "real" and sim.meta_profile == "sim"
    assert (real.cfar_guard_cells, real.cfar_train_cells,
            real.cfar_train_rows) == (2, 16, 10)
    assert (sim.cfar_guard_cells, sim.cfar_train_cells,
            sim.cfar_train_rows) == (30, 55, 0)
    assert real.tmodel_dof == 3.0 and sim.tmodel_dof == 12.0
    assert sim.scenario_speed_mps > real.scenario_speed_mps
    # the shared physics does not move between profiles
    assert real.array_elements == sim.array_elements
    assert real.scenario_spread_exponent == sim.scenario_spread_exponent
    with pytest.raises(ConfigError):
        default_config("marine")


def test_config_round_trip_exact(tmp_path):
    cfg = replace(default_config("sim"), filter_prob_birth=3.25e-9,
                  scenario_duration_s=123.456, meta_seed=77)
    save_config(cfg, tmp_path / "c.ini")
    assert load_config(tmp_path / "c.ini") == cfg


def test_config_rejects_unknown_section(tmp_path):
    cfg = default_config("sim")
    save_config(cfg, tmp_path / "c.ini")
    text = (tmp_path / "c.ini").read_text() + "\n[sonar]\nx = 1\n"
    (tmp_path / "c.ini").write_text(text)
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(tmp_path / "c.ini")


def test_config_rejects_unknown_key(tmp_path):
    save_config(default_config("sim"), tmp_path / "c.ini")
    text = (tmp_path / "c.ini").read_text().replace(
        "[array]", "[array]\nshape = ring")
    (tmp_path / "c.ini").write_text(text)
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(tmp_path / "c.ini")


def test_config_rejects_missing_or_wrong_version(tmp_path):
    save_config(default_config("sim"), tmp_path / "c.ini")
    text = (tmp_path / "c.ini").read_text()
    (tmp_path / "c.ini").write_text(text.replace("config_version = 1",
                                                 "config_version = 99"))
    with pytest.raises(ConfigError, match="unsupported config_version"):
        load_config(tmp_path / "c.ini")
    (tmp_path / "c.ini").write_text("[meta]\nprofile = sim\n")
    with pytest.raises(ConfigError, match="config_version"):
        load_config(tmp_path / "c.ini")


def test_config_rejects_unparseable_value(tmp_path):
    save_config(default_config("sim"), tmp_path / "c.ini")
    text = (tmp_path / "c.ini").read_text().replace("elements = 8",
                                                    "elements = eight")
    (tmp_path / "c.ini").write_text(text)
    with pytest.raises(ConfigError, match="bad value"):
        load_config(tmp_path / "c.ini")


def test_simulate_layout(workdir):
    ds = workdir / "ds"
    for name in ("meta.json", "samples.f32", "truth.csv", "config.ini"):
        assert (ds / name).exists()


def test_track_output_is_deterministic(workdir):
    args = ["track", "--config", str(workdir / "config.ini"),
            "--data", str(workdir / "ds"), "--variant", "tvar",
            "--model", str(workdir / "model.var"), "--seed", "5"]
    assert main(args + ["--out", str(workdir / "a.csv")]) == 0
    assert main(args + ["--out", str(workdir / "b.csv")]) == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
    other = ["track", "--config", str(workdir / "config.ini"),
             "--data", str(workdir / "ds"), "--variant", "tvar",
             "--model", str(workdir / "model.var"), "--seed", "6",
             "--out", str(workdir / "c.csv")]
    assert main(other) == 0
    assert (workdir / "a.csv").read_bytes() != (workdir / "c.csv").read_bytes()


def test_eval_writes_metrics(workdir):
    rc = main(["eval", "--config", str(workdir / "config.ini"),
               "--truth", str(workdir / "ds"),
               "--tracks", str(workdir / "a.csv"), str(workdir / "c.csv"),
               "--out", str(workdir / "metrics.csv"),
               "--aggregate", str(workdir / "agg.csv")])
    assert rc == 0
    lines = (workdir / "metrics.csv").read_text().strip().splitlines()
    assert lines[0].startswith("track,first_confirm_batch")
    assert len(lines) == 3
    agg = np.loadtxt(workdir / "agg.csv", delimiter=",", skiprows=1)
    n_batches = int((workdir / "a.csv").read_text().count("\n")) - 1
    assert agg.shape == (n_batches, 4)


def test_btr_and_detect_smoke(workdir):
    rc = main(["btr", "--config", str(workdir / "config.ini"),
               "--data", str(workdir / "ds"), "--model",
               str(workdir / "model.var"), "--out", str(workdir / "btr.csv")])
    assert rc == 0
    rows = np.loadtxt(workdir / "btr.csv", delimiter=",", skiprows=1)
    assert rows.shape[1] == 182  # batch index + 181 bearings
    assert rows[:, 1:].max() <= 1.0 + 1e-9
    rc = main(["detect", "--config", str(workdir / "config.ini"),
               "--data", str(workdir / "ds"), "--out", str(workdir / "det.csv")])
    assert rc == 0
    assert (workdir / "det.csv").read_text().splitlines()[0] == \
        "batch_index,bearing_deg"


def test_cfar_track_needs_no_model(workdir):
    rc = main(["track", "--config", str(workdir / "config.ini"),
               "--data", str(workdir / "ds"), "--variant", "cfar",
               "--seed", "5", "--out", str(workdir / "cfar.csv")])
    assert rc == 0


def test_cli_errors_exit_nonzero(workdir, capsys):
    assert main(["track", "--config", str(workdir / "config.ini"),
                 "--data", str(workdir / "nowhere"), "--variant", "tvar",
                 "--model", str(workdir / "model.var"),
                 "--out", str(workdir / "x.csv")]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["track", "--config", str(workdir / "config.ini"),
                 "--data", str(workdir / "ds"), "--variant", "gvar",
                 "--out", str(workdir / "x.csv")]) == 1
    assert "needs --model" in capsys.readouterr().err


def test_console_script_entry_point():
    exe = shutil.which("sonartkbd")
    assert exe is not None
    out = subprocess.run([exe, "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.startswith("sonartkbd ")
