import json
import math
from pathlib import Path

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from macrosolve.formula import (
    Binary,
    Constant,
    FormulaSyntaxError,
    LatexError,
    Unary,
    UnknownFunctionError,
    UnknownVariableError,
    Variable,
    evaluate,
    format_expr,
    normalize_latex,
    parse_formula,
    parse_latex,
)
from macrosolve.formula.ast import BINARY_OPS, FUNCTIONS

GOLDEN = json.loads((Path(__file__).parent / "golden" / "latex.json").read_text())


def t(*values):
    return torch.tensor(values, dtype=torch.float64)


# -- raw formulas -----------------------------------------------------------

def test_parse_division_example():
    expected = Binary("div", Binary("sub", Variable("qa"), Constant(1.0)), Variable("kappa"))
    assert parse_formula("(qa - 1)/kappa") == expected


def test_parse_single_variable():
    assert parse_formula("x") == Variable("x")


def test_arithmetic_with_function_call():
    assert float(evaluate(parse_formula("2**3 + sin(0)"), {}, 1)[0]) == 8.0


def test_precedence_and_associativity():
    assert parse_formula("a+b*c") == parse_formula("a+(b*c)")
    assert float(evaluate(parse_formula("2^3^2"), {}, 1)[0]) == 512.0
    assert float(evaluate(parse_formula("-2^2"), {}, 1)[0]) == -4.0
    assert parse_formula("2**3") == parse_formula("2^3")


def test_whitespace_insensitive():
    assert parse_formula(" a *( b+ 1 ) ") == parse_formula("a*(b+1)")


def test_scientific_literals():
    assert parse_formula("1.5e-3") == Constant(1.5e-3)
    assert parse_formula(".5") == Constant(0.5)


def test_syntax_error_reports_offset():
    with pytest.raises(FormulaSyntaxError) as err:
        parse_formula("a + * b")
    assert err.value.offset == 4


@pytest.mark.parametrize("text", ["", "   ", "(a + b", "a b", "a +", "3 $ 4"])
def test_syntax_errors(text):
    with pytest.raises(FormulaSyntaxError):
        parse_formula(text)


def test_unknown_function():
    with pytest.raises(UnknownFunctionError) as err:
        parse_formula("floor(x)")
    assert "floor" in str(err.value)


def test_evaluate_examples():
    ctx = {"qa": t(2.0), "kappa": t(10000.0)}
    assert torch.allclose(evaluate(parse_formula("(qa-1)/kappa"), ctx), t(1e-4), rtol=0, atol=1e-18)
    ctx = {"eta": t(0.0), "w_ia": t(7.0), "w_ha": t(1.0)}
    assert float(evaluate(parse_formula("eta*w_ia + (1-eta)*w_ha"), ctx)[0]) == 1.0


def test_nan_propagates_without_error():
    out = evaluate(parse_formula("sqrt(x)"), {"x": t(-1.0)})
    assert math.isnan(float(out[0]))
    assert math.isinf(float(evaluate(parse_formula("1/x"), {"x": t(0.0)})[0]))


def test_unknown_variable_names_it():
    with pytest.raises(UnknownVariableError) as err:
        evaluate(parse_formula("a + zeta_h"), {"a": t(1.0)})
    assert "zeta_h" in str(err.value)


def test_constants_broadcast_to_batch():
    out = evaluate(parse_formula("3"), {}, 4)
    assert out.shape == (4,) and torch.all(out == 3)


def test_evaluate_is_pure():
    expr = parse_formula("tanh(x)^2 + sigmoid(x) * abs(x) - exp(-x) + log(x) + cos(x)")
    ctx = {"x": torch.linspace(0.1, 2.0, 17, dtype=torch.float64)}
    a, b = evaluate(expr, ctx), evaluate(expr, ctx)
    assert torch.equal(a, b)


def test_evaluate_keeps_autodiff_lineage():
    x = t(0.3, 0.7).requires_grad_(True)
    out = evaluate(parse_formula("x^3"), {"x": x})
    (g,) = torch.autograd.grad(out.sum(), x)
    assert torch.allclose(g, 3 * x.detach() ** 2)


# -- round trip -------------------------------------------------------------

names = st.sampled_from(["x", "eta", "q_a", "sigma_qa", "k2"])
leaves = st.one_of(
    st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False).map(Constant),
    names.map(Variable),
)
trees = st.recursive(
    leaves,
    lambda kids: st.one_of(
        st.tuples(st.sampled_from(("neg",) + FUNCTIONS), kids).map(lambda a: Unary(*a)),
        st.tuples(st.sampled_from(BINARY_OPS), kids, kids).map(lambda a: Binary(*a)),
    ),
    max_leaves=12,
)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_format_then_parse_round_trips(tree):
    assert parse_formula(format_expr(tree)) == tree


# -- LaTeX ------------------------------------------------------------------

@pytest.mark.parametrize("latex", sorted(GOLDEN))
def test_latex_golden(latex):
    assert normalize_latex(latex) == GOLDEN[latex]
    assert parse_latex(latex) == parse_formula(GOLDEN[latex])


def test_latex_fraction_example():
    assert parse_latex(r"\frac{q_t^a-1}{\kappa}") == parse_formula("(q_a - 1)/(kappa)")


def test_latex_partial_derivative_example():
    assert parse_latex(r"\frac{\partial q}{\partial \eta}") == Variable("q_eta")


def test_latex_single_symbol():
    assert parse_latex(r"\eta") == Variable("eta")


def test_latex_name_map_overrides_defaults():
    tree = parse_latex(r"\frac{q_t^a-1}{\kappa}", {"q_a": "qa"})
    assert tree == parse_formula("(qa - 1)/kappa")


@pytest.mark.parametrize("latex", [r"\lfloor x \rfloor", r"\lceil x \rceil", r"\int x", r"\frac{1}{x"])
def test_latex_rejects_unsupported_input(latex):
    with pytest.raises(LatexError):
        normalize_latex(latex)


def test_latex_unbalanced_braces():
    with pytest.raises(LatexError):
        normalize_latex(r"\sqrt{x")
    with pytest.raises(LatexError):
        normalize_latex(r"x}")
