import csv
import subprocess
import sys

import pytest

from freshedge.cli import main


def _cfg(tmp_path, horizon=12):
    path = tmp_path / "small.cfg"
    path.write_text(f"num_users = 3\nnum_services = 4\nfixed_services = 0,1\nhorizon = {horizon}\n"
                    "aoi_thresholds = 5,6,7,8\n")
    return str(path)


def test_run_and_summarize(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["run", "--config", _cfg(tmp_path), "--policy", "optimal,fixed", "--seeds", "2",
                 "--sweep", "V=0.5,2", "--out", str(out)]) == 0
    files = sorted(p.name for p in out.glob("*.csv"))
    assert len(files) == 9 and "summary.csv" in files
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8 and {r["policy"] for r in rows} == {"optimal", "fixed"}
    capsys.readouterr()
    assert main(["summarize", str(out), "--out", str(tmp_path / "again.csv")]) == 0
    table = capsys.readouterr().out
    assert "optimal" in table and "fixed" in table
    # directory input is read in file-name order, the run writes in run order
    again = (tmp_path / "again.csv").read_text().splitlines()
    assert sorted(again) == sorted((out / "summary.csv").read_text().splitlines())


def test_train_then_run_with_checkpoint(tmp_path):
    cfg = _cfg(tmp_path)
    ckpt = tmp_path / "agent.ckpt"
    curve = tmp_path / "curve.csv"
    assert main(["train", "--config", cfg, "--agent", "ppo", "--rounds", "1", "--checkpoint", str(ckpt),
                 "--curve", str(curve)]) == 0
    assert ckpt.stat().st_size > 0
    assert curve.read_text().splitlines()[0] == "round,episodes,mean_reward,behaviour_reward"
    assert main(["run", "--config", cfg, "--policy", "oiodrl", "--checkpoint", str(ckpt),
                 "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "oiodrl_seed0.csv").exists()


def test_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("FRESHEDGE_HORIZON", "5")
    assert main(["run", "--config", _cfg(tmp_path), "--policy", "fixed", "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "fixed_seed0.csv").read_text().splitlines()
    assert len(lines) == 2 + 5


@pytest.mark.parametrize("argv", [["run", "--policy", "nope"], ["run", "--sweep", "Q=1"],
                                  ["run", "--config", "/nonexistent.cfg"], ["summarize", "/nonexistent.csv"]])
def test_errors_exit_with_status_2(argv, tmp_path, capsys):
    assert main(argv + (["--out", str(tmp_path)] if argv[0] == "run" else [])) == 2
    assert "freshedge: error" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "freshedge", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "summarize" in out.stdout
