import json

import pytest

from conftest import tiny_doc
from macrosolve.cli import main
from macrosolve.config import load_config
from macrosolve.framework import load_checkpoint, read_history_csv
from macrosolve.problems import PROBLEMS, load_problem


def write(tmp_path, doc, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", write(tmp_path, tiny_doc()), "--out-dir", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"best.ckpt", "final.ckpt", "losses.csv", "manifest.json"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["model"] == "tiny" and manifest["epochs"] == 20 and manifest["seed"] == 0
    assert set(manifest["versions"]) == {"macrosolve", "python", "torch", "numpy"}
    states, optimizer = load_checkpoint(out / "final.ckpt")
    assert set(states) == {"y"} and optimizer["step"] == 20
    header, rows = read_history_csv(out / "losses.csv")
    assert header == ["epoch", "origin", "slope", "total"]
    assert [r["epoch"] for r in rows] == list(range(20))
    assert "wrote best.ckpt" in capsys.readouterr().out


def test_run_overrides(tmp_path):
    out = tmp_path / "run"
    assert main(["run", write(tmp_path, tiny_doc()), "--out-dir", str(out), "--epochs", "3", "--seed", "5"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["epochs"] == 3 and manifest["seed"] == 5
    assert len(read_history_csv(out / "losses.csv")[1]) == 3


def test_run_losses_bitwise_reproducible(tmp_path):
    path = write(tmp_path, tiny_doc())
    for d in ("a", "b"):
        assert main(["run", path, "--out-dir", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "losses.csv").read_bytes() == (tmp_path / "b" / "losses.csv").read_bytes()


def test_missing_state_exits_1(tmp_path, capsys):
    doc = tiny_doc()
    del doc["state"]
    assert main(["run", write(tmp_path, doc), "--out-dir", str(tmp_path / "run")]) == 1
    assert "state" in capsys.readouterr().err


def test_missing_file_exits_1(tmp_path):
    assert main(["check", str(tmp_path / "nope.json")]) == 1


def test_insufficient_order_exits_2(tmp_path, capsys):
    doc = tiny_doc(
        state=[{"name": "eta", "low": 0.0, "high": 1.0}],
        learnable=[{"name": "q", "order": 1}],
        endogenous=[{"lhs": "q_etaeta", "rhs": "0"}],
        conditions=[],
    )
    assert main(["check", write(tmp_path, doc)]) == 2
    assert "q_etaeta" in capsys.readouterr().err


def test_circular_equations_exit_2(tmp_path, capsys):
    doc = tiny_doc(equations=[{"lhs": "a", "rhs": "b + 1"}, {"lhs": "b", "rhs": "a"}])
    assert main(["check", write(tmp_path, doc)]) == 2
    assert "circular" in capsys.readouterr().err


def test_check_prints_table(capsys):
    assert main(["check", "cauchy_euler"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[-1].startswith("ok: cauchy_euler:")
    assert out.splitlines()[:4] == ["x     state", "y     endogenous_variable", "y_x   derivative of y", "y_xx  derivative of y"]


def test_examples_list(capsys):
    assert main(["examples", "--list"]) == 0
    assert capsys.readouterr().out.split() == list(PROBLEMS)


@pytest.mark.parametrize("name", PROBLEMS)
def test_examples_export_reimports(tmp_path, name):
    assert main(["examples", "--export", name, str(tmp_path)]) == 0
    assert load_config(tmp_path / f"{name}.json") == load_problem(name)


def test_examples_unknown_name(tmp_path, capsys):
    assert main(["examples", "--export", "nonesuch", str(tmp_path)]) == 1
    assert "nonesuch" in capsys.readouterr().err


def test_eval_grid(tmp_path, capsys):
    config = write(tmp_path, tiny_doc())
    out = tmp_path / "run"
    assert main(["run", config, "--out-dir", str(out), "--epochs", "2"]) == 0
    capsys.readouterr()
    assert main(["eval", str(out / "final.ckpt"), config, "--grid", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split(",")[:2] == ["x", "y"]
    rows = [line.split(",") for line in lines[1:]]
    assert [float(r[0]) for r in rows] == [0.0, 0.5, 1.0]
    assert all(repr(float(v)) == repr(float("%.17g" % float(v))) for r in rows for v in r)
    target = tmp_path / "table.csv"
    assert main(["eval", str(out / "final.ckpt"), config, "--grid", "3", "--out", str(target)]) == 0
    assert target.read_text().splitlines() == lines


def test_eval_rejects_bad_grid_and_mismatched_checkpoint(tmp_path):
    config = write(tmp_path, tiny_doc())
    out = tmp_path / "run"
    assert main(["run", config, "--out-dir", str(out), "--epochs", "1"]) == 0
    assert main(["eval", str(out / "final.ckpt"), config, "--grid", "a,b"]) == 1
    other = write(tmp_path, tiny_doc(learnable=[{"name": "y", "hidden_sizes": [4]}]), "other.json")
    assert main(["eval", str(out / "final.ckpt"), other]) == 1
    (tmp_path / "junk.ckpt").write_bytes(b"not a checkpoint")
    assert main(["eval", str(tmp_path / "junk.ckpt"), config]) == 1


def test_export_normalized(capsys):
    assert main(["export", "diffusion"]) == 0
    assert json.loads(capsys.readouterr().out)["name"] == "diffusion"
