import csv
import io
import subprocess
import sys

import pytest

from tightspi import formats
from tightspi.cli import main
from tightspi.environments import EnvSpec, build_env

from conftest import example_mdp


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_bounds_conversion(capsys):
    code, out = run(capsys, "bounds", "--states", "25", "--actions", "4", "--n-spibb", "100")
    assert code == 0
    assert out.out.splitlines() == ["n_spibb,n_2s,n_beta", "100,55,27"]


def test_bounds_zeta(capsys):
    code, out = run(capsys, "bounds", "--states", "100", "--actions", "4", "--zeta", "0.1")
    rows = list(csv.DictReader(io.StringIO(out.out)))
    assert code == 0 and int(rows[0]["n_beta"]) > 10**7


def test_bounds_sweep(capsys):
    code, out = run(capsys, "bounds", "--actions", "4", "--zeta", "0.1", "--sweep-states", "10:50:20")
    rows = list(csv.DictReader(io.StringIO(out.out)))
    assert [int(r["states"]) for r in rows] == [10, 30, 50]
    assert list(rows[0]) == ["states", "n_spi", "n_spibb", "n_2s", "n_beta"]


def test_bounds_usage_errors(capsys):
    with pytest.raises(SystemExit):
        main(["bounds", "--actions", "4", "--n-spibb", "10", "--sweep-states", "1:5:1"])
    with pytest.raises(SystemExit):
        main(["bounds", "--actions", "4", "--zeta", "0.1"])
    with pytest.raises(SystemExit):
        main(["bounds", "--states", "3", "--actions", "4", "--zeta", "0.1", "--sweep-states", "5:1:1"])


def test_bounds_domain_error_exit_code(capsys):
    code, out = run(capsys, "bounds", "--states", "5", "--actions", "2", "--zeta", "-1")
    assert code == 2 and "DomainError" in out.err


def test_transform_verify(capsys, tmp_path):
    path = str(tmp_path / "m.mdp")
    formats.write_mdp(path, example_mdp())
    code, out = run(capsys, "transform", "verify", "--mdp", path, "--seed-random", "3",
                    "--out", str(tmp_path / "t.mdp"))
    assert code == 0
    lines = out.out.splitlines()
    assert len(lines) == 5 and all(l.endswith("True") for l in lines[1:])
    assert formats.read_mdp(str(tmp_path / "t.mdp")).n_states == 7


def test_env_build(capsys, tmp_path):
    out_path = str(tmp_path / "g.mdp")
    code, out = run(capsys, "env", "build", "gridworld", "--out", out_path,
                    "--behavior-out", str(tmp_path / "g.pol"), "--behavior", "perturbed_optimal")
    assert code == 0
    assert open(out_path).read() == formats.dump_mdp(build_env(EnvSpec("gridworld")))
    assert formats.read_policy(str(tmp_path / "g.pol"), 25, 4).probs.max() == pytest.approx(1 - 3e-5)


def test_experiment_run_and_plot(capsys, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(
        "[experiment]\nmethods = spibb, spibb_beta, behavior, optimal\ndataset_sizes = 100 1000\n"
        "repeats = 3\nout_dir = res\n\n[env]\nname = gridworld\n\n[behavior]\nq_steps = 2000\n"
    )
    code, out = run(capsys, "experiment", "run", "--config", str(cfg))
    assert code == 0
    assert (tmp_path / "res" / "raw.csv").exists()
    code, out = run(capsys, "experiment", "plot", "--in", str(tmp_path / "res" / "summary.csv"),
                    "--out", str(tmp_path / "plots"))
    assert code == 0 and (tmp_path / "plots" / "gridworld.svg").exists()


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "tightspi.cli", "bounds", "--states", "25",
                          "--actions", "5", "--n-spibb", "60"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.splitlines()[1] == "60,34,10"
