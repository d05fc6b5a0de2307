import json

import pytest

from ptlab import cli
from ptlab.errors import NumericError

SMALL_CONSENSUS = """
command = "consensus"
horizon.T = 1.0
horizon.eps = 1e-3
integration.dt = 1e-3
graph.preset = "cycle"
graph.n = 4
initial.x0 = [1.0, 0.0, -1.0, 0.5]
"""

SMALL_SCALAR = """
command = "simulate"
horizon.eps = 1e-3
integration.dt = 1e-3
controller.kind = "adaptive_tv"
controller.k = 3.0
plant.preset = "polynomial"
plant.b = 1.0
plant.b_lower = 0.5
disturbance.kinds = ["sinusoid", "square"]
disturbance.offset = 1.0
initial.x0 = [-1.0, 1.0]
"""

SMALL_MATRIX = """
command = "simulate"
horizon.eps = 1e-3
integration.dt = 1e-3
controller.kind = "nonsquare"
controller.k = 1.0
controller.theta = 0.5
plant.preset = "matrix"
plant.A = [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]
plant.M = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]
initial.x0 = [0.5, -0.5]
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_bound_command(tmp_path, capsys):
    code, out, _ = run(["bound", "--config", "fixed_time_bound", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "Fixed7 (fixed-time)" in out and "bound = 6.283185307179586" in out
    assert "oracle settle time" in out
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "bound" and man["version"]
    assert set(man["files"]) == {"bound.csv", "oracle.csv"}
    assert man["config"]["coefficients.gamma"] == 2.0


def test_validation_failure_writes_nothing(tmp_path, capsys):
    bad = write(tmp_path, SMALL_CONSENSUS.replace("graph.n = 4", "graph.n = 4\nconsensus.k = 0"))
    out_dir = tmp_path / "out"
    code, _, err = run(["consensus", "--config", bad, "--out", str(out_dir)], capsys)
    assert code == 2
    rec = json.loads(err)
    assert rec["error"] == "ValidationError" and "consensus.k" in rec["violations"][0]
    assert not out_dir.exists()


def test_late_validation_failure_writes_nothing(tmp_path, capsys):
    # x0 length is only checkable once the edge file is read
    (tmp_path / "g.edges").write_text("1 2\n2 3\n")
    cfg = write(tmp_path, 'command = "consensus"\ngraph.path = "g.edges"\n'
                          'initial.x0 = [1.0, 2.0]\n')
    code, _, err = run(["consensus", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "initial.x0" in err
    assert not (tmp_path / "o").exists()


def test_missing_file_is_io_error(tmp_path, capsys):
    code, _, err = run(["bound", "--config", str(tmp_path / "nope.toml")], capsys)
    assert code == 4 and json.loads(err)["exit_code"] == 4


def test_numeric_failure_code(tmp_path, capsys, monkeypatch):
    def boom(*a, **k):
        raise NumericError("blew up", t=0.5)
    monkeypatch.setattr(cli, "execute", boom)
    code, _, err = run(["consensus", "--config", write(tmp_path, SMALL_CONSENSUS)], capsys)
    assert code == 3 and json.loads(err)["t"] == 0.5


def test_negative_seed_rejected(capsys):
    code, _, _ = run(["bound", "--config", "fixed_time_bound", "--seed", "-1"], capsys)
    assert code == 2


def test_consensus_outputs(tmp_path, capsys):
    code, out, _ = run(["consensus", "--config", write(tmp_path, SMALL_CONSENSUS),
                        "--out", str(tmp_path / "o")], capsys)
    assert code == 0 and "bound holds: True" in out
    header = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,x1,x2,x3,x4,u1,u2,u3,u4,chi_norm,bound,bound_ok,sum_drift"


def test_containment_with_edge_file(tmp_path, capsys):
    (tmp_path / "tree.edges").write_text("1 2\n1 3\n2 4\n")
    cfg = write(tmp_path, 'command = "containment"\nhorizon.eps = 1e-3\nintegration.dt = 1e-3\n'
                          'graph.path = "tree.edges"\ninitial.x0 = [1.0, 0.0, -1.0, 2.0]\n')
    code, out, _ = run(["containment", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 0 and "bound holds: True" in out
    dec = json.loads((tmp_path / "o" / "decomposition.json").read_text())
    assert dec["order"] == [1, 2, 3, 4] and dec["c_min"] > 0


def test_simulate_scalar_and_matrix(tmp_path, capsys):
    code, out, _ = run(["simulate", "--config", write(tmp_path, SMALL_SCALAR),
                        "--out", str(tmp_path / "a")], capsys)
    assert code == 0 and "regulated=True" in out
    summary = (tmp_path / "a" / "summary.csv").read_text().splitlines()
    assert len(summary) == 5 and summary[1].split(",")[1] == "sinusoid"
    head = (tmp_path / "a" / "member_00.csv").read_text().splitlines()[0]
    assert head == "t,x,u,theta_hat,rho_hat,delta_hat,xi"
    code, out, _ = run(["simulate", "--config", write(tmp_path, SMALL_MATRIX, "m.toml"),
                        "--out", str(tmp_path / "b")], capsys)
    assert code == 0
    assert (tmp_path / "b" / "member_00.csv").read_text().splitlines()[0] == "t,x1,x2,u1,u2,u3"


def test_repeat_runs_are_identical(tmp_path, capsys):
    cfg = write(tmp_path, SMALL_SCALAR)
    for d in ("r1", "r2"):
        assert run(["simulate", "--config", cfg, "--out", str(tmp_path / d)], capsys)[0] == 0
    for f in (tmp_path / "r1").glob("*.csv"):
        assert f.read_bytes() == (tmp_path / "r2" / f.name).read_bytes()


def test_parser_requires_subcommand(capsys):
    with pytest.raises(SystemExit):
        cli.main([])
