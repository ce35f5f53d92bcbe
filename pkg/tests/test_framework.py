import math

import pytest
import torch

from conftest import tiny_doc
from macrosolve.config import parse_config
from macrosolve.framework import (
    CompiledModel,
    ModelBuildError,
    StateVariableDef,
    TrainingConfig,
    build_context,
    grid_points,
    load_checkpoint,
    pretrain,
    pretrain_mse,
    read_history_csv,
    sample_batch,
    save_checkpoint,
    train,
    write_history_csv,
)
from macrosolve.framework.model import Formula, Piece, PretrainDef
from macrosolve.optimizers import OptimizerConfig
from macrosolve.problems import closed_form_networks, load_problem


def gen(seed=0):
    return torch.Generator().manual_seed(seed)


# -- sampling ---------------------------------------------------------------

def test_uniform_batch_within_bounds():
    X = sample_batch([StateVariableDef("eta", 0.01, 0.99)], 10_000, gen())
    assert X.shape == (10_000, 1)
    assert X.min() >= 0.01 and X.max() <= 0.99


def test_batches_reproducible():
    states = [StateVariableDef("x", -1, 1), StateVariableDef("t", 0, 1)]
    assert torch.equal(sample_batch(states, 50, gen()), sample_batch(states, 50, gen()))


def test_grid_sampling_ignores_batch_size():
    states = [StateVariableDef("x", 0, 1, "grid", 3), StateVariableDef("y", 0, 1, "grid", 3)]
    X = sample_batch(states, 100, gen())
    assert X.tolist() == [[a, b] for a in (0.0, 0.5, 1.0) for b in (0.0, 0.5, 1.0)]


def test_grid_points_lexicographic():
    assert grid_points([StateVariableDef("x", 0, 1)], [3]).flatten().tolist() == [0.0, 0.5, 1.0]


# -- context ----------------------------------------------------------------

def test_context_contains_derivatives():
    ctx = build_context(torch.rand(4, 1, dtype=torch.float64), ["eta"], {}, {"q": (lambda X: X[:, 0] ** 2, 2)})
    assert {"eta", "q", "q_eta", "q_etaeta"} <= set(ctx)


def test_equation_with_constant_input():
    doc = tiny_doc(
        params={"kappa": 10000.0},
        learnable=[{"name": "qa"}],
        equations=[{"lhs": "iota", "rhs": "(qa-1)/kappa"}],
        endogenous=[{"lhs": "iota", "rhs": "0"}],
        conditions=[],
    )
    compiled = CompiledModel(parse_config(doc))
    ctx = compiled.context(None, torch.rand(5, 1, dtype=torch.float64), {"qa": (lambda X: torch.ones(len(X), dtype=torch.float64), 2)})
    assert torch.equal(ctx["iota"], torch.zeros(5, dtype=torch.float64))


def test_chained_equations():
    doc = tiny_doc(equations=[{"lhs": "a", "rhs": "x + 1"}, {"lhs": "b", "rhs": "2*a"}])
    compiled = CompiledModel(parse_config(doc))
    ctx = compiled.context(compiled.init_params(gen()), torch.tensor([[1.0]], dtype=torch.float64))
    assert ctx["b"].tolist() == [4.0]


def test_context_is_lazy():
    calls = []

    def f(X):
        calls.append(1)
        return X[:, 0]

    ctx = build_context(torch.rand(3, 1, dtype=torch.float64), ["x"], {}, {"f": (f, 2)})
    assert calls == []
    ctx["f_x"], ctx["f_xx"], ctx["f"]
    assert calls == [1]


def test_condition_points_fixed_blocks():
    model = load_problem("diffusion")
    compiled = CompiledModel(model)
    boundary = next(c for c in model.conditions if c.label == "boundary")
    pts = compiled.condition_points(boundary, gen())
    assert pts.shape == (100, 2)
    assert set(pts[:50, 0].tolist()) == {-1.0} and set(pts[50:, 0].tolist()) == {1.0}
    assert pts[:, 1].min() >= 0 and pts[:, 1].max() <= 1


def test_diffusion_initial_condition_exact_solution():
    model = load_problem("diffusion")
    compiled = CompiledModel(model)
    batch, cond_points = compiled.sample(gen(), 100)
    comps = compiled.components(None, batch, cond_points, closed_form_networks(model))
    assert float(comps["initial"].detach()) <= 1e-12


def test_market_clearing_with_consistent_context():
    model = load_problem("econ_1d")
    compiled = CompiledModel(model)
    const = lambda c: (lambda X: torch.full((len(X),), c, dtype=torch.float64) + 0 * X[:, 0], 2)
    nets = {lv.name: const(1.0) for lv in model.learnables}
    nets["w_ia"] = (lambda X: 1 + X[:, 0], 2)
    nets["w_ha"] = (lambda X: (1 - X[:, 0] * (1 + X[:, 0])) / (1 - X[:, 0]), 2)
    batch = sample_batch(model.states, 100, gen())
    comps = compiled.components(None, batch, [], nets)
    assert float(comps["capital_market"].detach()) <= 1e-12


# -- training ---------------------------------------------------------------

def test_zero_epochs_returns_initial(tiny_model):
    result = train(tiny_model, TrainingConfig(epochs=0))
    assert torch.equal(result.best_params, result.initial_params)
    assert torch.equal(result.final_params, result.initial_params)
    assert result.history == [] and result.best_epoch is None


def test_training_reduces_loss_and_tracks_best(tiny_model):
    result = train(tiny_model)
    totals = [r.total for r in result.history]
    assert totals[-1] < totals[0]
    assert result.best_loss == min(totals)
    assert result.history[result.best_epoch].total == result.best_loss
    assert set(result.history[0].components) == {"origin", "slope"}


def test_best_params_are_those_evaluated_at_best_epoch(tiny_model):
    result = train(tiny_model)
    compiled = result.compiled
    g = gen(tiny_model.training.seed)
    compiled.init_params(g)
    for _ in range(result.best_epoch + 1):
        batch, pts = compiled.sample(g, tiny_model.training.batch_size)
    report, _ = compiled.loss_and_grad(result.best_params, batch, pts)
    assert report.total == result.best_loss


def test_training_bitwise_reproducible(tiny_model):
    a, b = train(tiny_model), train(tiny_model)
    assert [r.total for r in a.history] == [r.total for r in b.history]
    assert torch.equal(a.final_params, b.final_params)


def test_non_finite_loss_skips_steps():
    model = parse_config(tiny_doc(endogenous=[{"lhs": "sqrt(y - 100)", "rhs": "0", "label": "bad"}], conditions=[]))
    result = train(model, TrainingConfig(epochs=3))
    assert all(r.non_finite for r in result.history)
    assert torch.equal(result.final_params, result.initial_params)
    assert result.best_epoch is None


def test_lbfgs_training(tiny_model):
    config = TrainingConfig(epochs=5, batch_size=16, optimizer=OptimizerConfig(kind="lbfgs", learning_rate=1.0))
    result = train(tiny_model, config)
    assert result.history[-1].total < result.history[0].total


def _pretrain_target(guess, epochs, **kw):
    pieces = tuple(Piece(Formula.parse(v), w) for v, w in guess)
    return PretrainDef("y", pieces, epochs=epochs, **kw)


def test_pretrain_constant_guess(tiny_model):
    compiled = CompiledModel(tiny_model)
    theta = compiled.init_params(gen())
    target = _pretrain_target([("0.7", None)], 500, optimizer=OptimizerConfig(kind="lbfgs", learning_rate=1.0))
    fitted = pretrain(compiled, theta, target, gen())
    assert pretrain_mse(compiled, fitted, target, torch.rand(200, 1, generator=gen(1), dtype=torch.float64)) <= 1e-6


def test_pretrain_zero_epochs_is_identity(tiny_model):
    compiled = CompiledModel(tiny_model)
    theta = compiled.init_params(gen())
    assert torch.equal(pretrain(compiled, theta, _pretrain_target([("1", None)], 0), gen()), theta)


@pytest.mark.slow
def test_pretrain_piecewise_guess():
    model = load_problem("log_utility")
    compiled = CompiledModel(model)
    target = next(p for p in model.pretrain if p.variable == "psi")
    g = gen()
    fitted = pretrain(compiled, compiled.init_params(g), target, g)
    grid = grid_points(model.states, [99])
    assert pretrain_mse(compiled, fitted, target, grid) <= 1e-3


# -- validation -------------------------------------------------------------

def test_forward_reference_rejected():
    doc = tiny_doc(equations=[{"lhs": "b", "rhs": "2*a"}, {"lhs": "a", "rhs": "x"}])
    with pytest.raises(ModelBuildError, match="forward or circular"):
        CompiledModel(parse_config(doc))


def test_insufficient_derivative_order():
    doc = tiny_doc(learnable=[{"name": "y", "order": 1}], endogenous=[{"lhs": "y_xx", "rhs": "0"}])
    with pytest.raises(ModelBuildError, match="y_xx"):
        CompiledModel(parse_config(doc))


def test_unknown_name():
    with pytest.raises(ModelBuildError, match="mystery"):
        CompiledModel(parse_config(tiny_doc(endogenous=[{"lhs": "mystery", "rhs": "0"}])))


def test_duplicate_and_reserved_labels():
    doc = tiny_doc(endogenous=[{"lhs": "y", "rhs": "0", "label": "origin"}])
    with pytest.raises(ModelBuildError, match="duplicate"):
        CompiledModel(parse_config(doc))
    with pytest.raises(ModelBuildError, match="reserved"):
        CompiledModel(parse_config(tiny_doc(endogenous=[{"lhs": "y", "rhs": "0", "label": "total"}])))


def test_system_equations_stay_local():
    doc = tiny_doc(
        systems=[
            {
                "label": "sys",
                "constraints": [{"lhs": "x", "comparator": "<", "rhs": "0.5"}],
                "equations": [{"lhs": "local", "rhs": "2*y"}],
                "endogenous": [{"lhs": "local", "rhs": "0"}],
            }
        ]
    )
    compiled = CompiledModel(parse_config(doc))
    ctx = compiled.context(compiled.init_params(gen()), torch.rand(4, 1, dtype=torch.float64))
    assert "local" not in ctx
    with pytest.raises(ModelBuildError, match="local"):
        bad = tiny_doc(endogenous=[{"lhs": "local", "rhs": "0"}], systems=doc["systems"])
        CompiledModel(parse_config(bad))


# -- checkpoints and history -------------------------------------------------

def test_checkpoint_round_trip(tmp_path, tiny_model):
    result = train(tiny_model)
    path = tmp_path / "final.ckpt"
    save_checkpoint(path, result.final_states(), result.optimizer_state, {"seed": 0})
    states, optimizer = load_checkpoint(path)
    assert torch.equal(result.compiled.params_from_states(states), result.final_params)
    assert optimizer["step"] == result.optimizer_state.step


def test_history_csv(tmp_path, tiny_model):
    result = train(tiny_model)
    path = tmp_path / "losses.csv"
    write_history_csv(path, result.history, tiny_model.loss_labels)
    header, rows = read_history_csv(path)
    assert header == ["epoch", "origin", "slope", "total"]
    assert len(rows) == len(result.history)
    assert [r["total"] for r in rows] == [r.total for r in result.history]
    assert all(math.isfinite(r["total"]) for r in rows)
