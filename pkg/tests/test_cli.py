import numpy as np
import pytest

from levipod.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from levipod.mesh import read_mesh
from levipod.mor import read_snapshots
from levipod.sim import Trajectory


@pytest.fixture
def cfg_dir(tmp_path):
    (tmp_path / "team28_full.cfg").write_text("mode = full\nmesh.density = 0.01\n")
    (tmp_path / "short.cfg").write_text("mode = full\nmesh.density = 0.01\ntime.steps = 40\n")
    (tmp_path / "rom.cfg").write_text(
        "mode = rom-deform\nmesh.density = 0.01\ntime.steps = 40\nrom.window = 0:40\nrom.eps = 1e-6\n")
    return tmp_path


def test_unknown_subcommand(capsys):
    assert main(["fly"]) == EXIT_USAGE
    assert "usage:" in capsys.readouterr().err


def test_missing_arguments(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE
    assert main(["run", "--config", "x", "--mode", "bogus"]) == EXIT_USAGE


def test_config_errors(cfg_dir, capsys):
    assert main(["run", "--config", str(cfg_dir / "missing.cfg")]) == EXIT_CONFIG
    bad = cfg_dir / "bad.cfg"
    bad.write_text("mode = full\nmech.mass = 3\n")
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err
    assert main(["run", "--config", str(cfg_dir / "short.cfg"), "--eps", "1.5"]) == EXIT_CONFIG


def test_numerical_failure(cfg_dir, capsys):
    cfg = cfg_dir / "drop.cfg"
    cfg.write_text("mode = full\nmesh.density = 0.01\nsource.amplitude = 0\ntime.steps = 300\n")
    assert main(["run", "--config", str(cfg), "--out", str(cfg_dir / "o")]) == EXIT_NUMERICAL
    assert "OutOfBounds" in capsys.readouterr().err


def test_mesh_command(cfg_dir):
    out = cfg_dir / "m"
    assert main(["mesh", "--config", str(cfg_dir / "short.cfg"), "--out", str(out)]) == EXIT_OK
    mesh = read_mesh(out / "mesh.txt")
    assert mesh.signed_areas().min() > 0


def test_run_rom_and_compare(cfg_dir, monkeypatch):
    monkeypatch.setenv("LEVIPOD_THREADS", "1")
    assert main(["run", "--config", str(cfg_dir / "rom.cfg"), "--out", str(cfg_dir / "r")]) == EXIT_OK
    traj = Trajectory.from_csv(cfg_dir / "r" / "trajectory.csv")
    assert len(traj) == 40 and traj.r.min() > 0
    out = cfg_dir / "c"
    assert main(["compare", "--config", str(cfg_dir / "short.cfg"), "--config", str(cfg_dir / "rom.cfg"),
                 "--out", str(out)]) == EXIT_OK
    rows = (out / "error_report.csv").read_text().splitlines()
    assert len(rows) == 3
    assert (out / "summary.txt").exists()


def test_full_pipeline_run_snapshots_basis(cfg_dir, capsys):
    out = cfg_dir / "full"
    assert main(["run", "--config", str(cfg_dir / "team28_full.cfg"), "--out", str(out)]) == EXIT_OK
    traj = Trajectory.from_csv(out / "trajectory.csv")
    assert len(traj) == 5000
    assert main(["snapshots", "--config", str(cfg_dir / "team28_full.cfg"), "--fields", str(out / "fields.snap"),
                 "--window", "0:800", "--out", str(out)]) == EXIT_OK
    snaps = read_snapshots(out / "snapshots.snap")
    assert snaps.S.shape[1] == 800
    capsys.readouterr()
    assert main(["basis", "--snapshots", str(out / "snapshots.snap"), "--eps", "1e-5", "--out", str(out)]) == EXIT_OK
    r = int(capsys.readouterr().out.split("r = ")[1])
    decay = np.loadtxt(out / "singular_values.csv", delimiter=",", skiprows=1)
    assert len(decay) == min(snaps.S.shape)
    assert np.sum(decay[:, 2] > 1e-5) == r
    assert read_snapshots(out / "basis.snap").S.shape == (snaps.S.shape[0], r)
    assert main(["basis", "--snapshots", str(out / "snapshots.snap"), "--out", str(out)]) == EXIT_CONFIG
