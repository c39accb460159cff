import csv
import re
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from memfep import cli
from memfep.config import ConfigError, load_config, parse_config
from memfep.langevin import read_trajectory_csv

BASE = """
domain: {lx: 10, ly: 10}
mesh: {nx: 16, subsample: 4, penalty_alpha0: 1e4}
physics: {kappa: 1, sigma: 1, beta: 1}
particles:
  - {x: 4.0, y: 5.0, alpha: 0.0, radius: 1.0, h_coeffs: [0.0], s_coeffs: [%s]}
"""


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_parse_minimal_and_numbers(tmp_path):
    cfg = load_config(write(tmp_path, BASE % "0.3"))
    assert cfg.disc.nx == 16 and cfg.disc.alpha0 == 1e4
    assert cfg.particles[0].profile.s_coeffs == (0.3,)
    assert cfg.sampler is None and cfg.fep is None


@pytest.mark.parametrize(
    "raw, msg",
    [
        ({"domian": {}}, "unknown sections"),
        ({"mesh": {"nx": 16, "foo": 1}}, "unknown keys"),
        ({"mesh": {"nx": 16.5}}, "integer"),
        ({"physics": {"kappa": "abc"}}, "number"),
        ({"physics": {"beta": -1}}, "beta"),
        ({"fep": {"omegas": [0.1]}}, "protocol"),
        ({"fep": {"protocol": "lj-scale", "omegas": [2.0]}}, r"\[-1, 1\]"),
        ({"particles": [{"x": 1, "y": 1, "colour": 2}]}, "unknown keys"),
        ("not a mapping", "mapping"),
    ],
)
def test_parse_errors(raw, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(raw)


def test_infeasible_particles_are_config_errors():
    cfg = parse_config({"domain": {"lx": 4, "ly": 4}, "particles": [{"x": 0.5, "y": 2}]})
    with pytest.raises(ConfigError, match="infeasible"):
        cfg.configuration()


def test_solve_flat_gives_zero(tmp_path, capsys):
    cfg = write(tmp_path, BASE % "0.0")
    assert run("solve", "--config", cfg, "--out", tmp_path / "f.csv") == 0
    out = capsys.readouterr().out
    assert out.startswith("M=0.0 ")
    rows = list(csv.DictReader(open(tmp_path / "f.csv")))
    assert list(rows[0]) == ["x", "y", "u", "ux", "uy", "lap_u"]
    # points inside the particle have empty field columns
    assert max(abs(float(r["u"])) for r in rows if r["u"]) <= 1e-10


def test_solve_is_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, BASE % "0.3")
    run("solve", "--config", cfg, "--out", tmp_path / "a.csv")
    run("solve", "--config", cfg, "--out", tmp_path / "b.csv")
    a, b = capsys.readouterr().out.splitlines()
    assert a == b
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_energy_and_grad(tmp_path, capsys):
    text = BASE % "0.3" + "softwall: {eps: 1, sigma_pair: 0.2, sigma_wall: 0.2}\n"
    cfg = write(tmp_path, text)
    assert run("energy", "--config", cfg, "--out", tmp_path / "e.txt") == 0
    line = capsys.readouterr().out
    vals = dict(kv.split("=") for kv in line.split())
    assert float(vals["E"]) == pytest.approx(float(vals["M"]) + float(vals["P"]), rel=1e-15)
    assert run("grad", "--config", cfg, "--out", tmp_path / "g.csv") == 0
    rows = list(csv.DictReader(open(tmp_path / "g.csv")))
    assert [r["component"] for r in rows] == ["0", "1", "2"]
    for r in rows:
        assert float(r["grad_E"]) == pytest.approx(float(r["grad_M"]) + float(r["grad_P"]), rel=1e-14)
    assert float(rows[2]["grad_M"]) == 0.0
    fd = list(csv.DictReader(open(tmp_path / "g_fd.csv")))
    assert list(fd[0]) == ["component", "nx", "fd_step", "grad_rep", "fd_value", "rel_mismatch"]


def test_missing_config_exit_2(tmp_path, capsys):
    assert run("solve", "--config", tmp_path / "nope.yaml", "--out", tmp_path / "x") == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_solver_error_exit_3(tmp_path, monkeypatch, capsys):
    from memfep.membrane import SingularSystem

    def boom(*a, **k):
        raise SingularSystem("pivot breakdown")

    monkeypatch.setattr(cli, "solve_membrane", boom)
    assert run("solve", "--config", write(tmp_path, BASE % "0.3"), "--out", tmp_path / "x") == cli.EXIT_SOLVER
    assert "pivot breakdown" in capsys.readouterr().err


def test_stuck_exit_4(tmp_path, capsys):
    text = BASE % "0.0" + "langevin: {tau: 100, steps: 5, seed: 1, max_rejects: 3}\n"
    assert run("sample", "--config", write(tmp_path, text), "--out", tmp_path / "t.csv") == cli.EXIT_STUCK
    assert re.search(r"at step \d+ ", capsys.readouterr().err)


TOY = """
langevin: {tau: 0.01, steps: 400, seed: 3}
fep: {protocol: stiffness-scale, omegas: [0.0, -0.5, 0.5], block_size: 40}
"""


def test_sample_resume_equals_uninterrupted(tmp_path):
    cfg = write(tmp_path, TOY)
    full, part = tmp_path / "full.csv", tmp_path / "part.csv"
    assert run("sample", "--config", cfg, "--out", full, "--toy-gaussian") == 0
    assert run("sample", "--config", cfg, "--out", part, "--toy-gaussian", "--steps", 200) == 0
    assert run("sample", "--config", cfg, "--out", part, "--toy-gaussian", "--resume", tmp_path / "part.ckpt.json") == 0
    assert part.read_bytes() == full.read_bytes()


def test_sample_seed_override_and_determinism(tmp_path):
    cfg = write(tmp_path, TOY)
    run("sample", "--config", cfg, "--out", tmp_path / "a.csv", "--toy-gaussian", "--seed", 9)
    run("sample", "--config", cfg, "--out", tmp_path / "b.csv", "--toy-gaussian", "--seed", 9)
    run("sample", "--config", cfg, "--out", tmp_path / "c.csv", "--toy-gaussian")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_sample_particles_feasible(tmp_path):
    text = BASE % "0.2" + "langevin: {tau: 0.002, steps: 3, seed: 1}\n"
    out = tmp_path / "t.csv"
    assert run("sample", "--config", write(tmp_path, text), "--out", out) == 0
    cfg = load_config(tmp_path / "run.yaml").configuration()
    traj = read_trajectory_csv(out, template=cfg)
    assert len(traj) == 4
    assert all(c.is_feasible() for c in traj.configs())


def test_fed_toy(tmp_path, capsys):
    cfg = write(tmp_path, TOY.replace("steps: 400", "steps: 4000"))
    run("sample", "--config", cfg, "--out", tmp_path / "t.csv", "--toy-gaussian")
    assert run("fed", "--config", cfg, "--trajectory", tmp_path / "t.csv", "--out", tmp_path / "f.csv", "--toy-gaussian") == 0
    rows = list(csv.DictReader(open(tmp_path / "f.csv")))
    assert float(rows[0]["dF_hat"]) == 0.0
    for r in rows[1:]:
        w = float(r["omega"])
        assert abs(float(r["dF_hat"]) - 0.5 * np.log1p(w)) <= 3 * float(r["ci_half_width"]) + 0.02


def test_fed_all_degenerate_exit_5(tmp_path, capsys):
    cfg = write(tmp_path, TOY.replace("[0.0, -0.5, 0.5]", "[0.0, -0.99]"))
    traj = tmp_path / "t.csv"
    rows = ["step,q1,E0,redraws"] + [f"{k},0.0,0.0,0" for k in range(99)] + ["99,30.0,450.0,0"]
    traj.write_text("\n".join(rows) + "\n")
    code = run("fed", "--config", cfg, "--trajectory", traj, "--out", tmp_path / "f.csv", "--toy-gaussian")
    assert code == cli.EXIT_DEGENERATE


def test_fed_dimension_mismatch_exit_2(tmp_path):
    cfg = write(tmp_path, BASE % "0.3" + TOY)
    traj = tmp_path / "t.csv"
    traj.write_text("step,q1,E0,redraws\n0,0.0,0.0,0\n")
    assert run("fed", "--config", cfg, "--trajectory", traj, "--out", tmp_path / "f.csv") == cli.EXIT_CONFIG


def test_chains(tmp_path, monkeypatch):
    monkeypatch.setenv("MEMFEP_THREADS", "2")
    cfg = write(tmp_path, TOY)
    assert run("sample", "--config", cfg, "--out", tmp_path / "t.csv", "--toy-gaussian", "--chains", 2) == 0
    a = read_trajectory_csv(tmp_path / "t_chain0.csv")
    b = read_trajectory_csv(tmp_path / "t_chain1.csv")
    run("sample", "--config", cfg, "--out", tmp_path / "s.csv", "--toy-gaussian", "--seed", 4)
    np.testing.assert_array_equal(b.states, read_trajectory_csv(tmp_path / "s.csv").states)
    assert not np.array_equal(a.states, b.states)


def test_workers_cap(monkeypatch):
    monkeypatch.setenv("MEMFEP_THREADS", "3")
    assert cli._workers(8) == 3
    monkeypatch.setenv("MEMFEP_THREADS", "junk")
    assert cli._workers(1) == 1


def test_entry_point(tmp_path):
    cfg = write(tmp_path, BASE % "0.0")
    proc = subprocess.run(
        [sys.executable, "-m", "memfep.cli", "solve", "--config", str(cfg), "--out", str(tmp_path / "f.csv")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and proc.stdout.startswith("M=0.0")
