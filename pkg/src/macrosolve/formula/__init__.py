"""Formula parsing (raw strings and a LaTeX subset) and batched evaluation."""

from .ast import Binary, Constant, ExprNode, Unary, Variable, format_expr, variables
from .evaluate import UnknownVariableError, evaluate
from .latex import LatexError, normalize_latex, parse_latex
from .parser import FormulaError, FormulaSyntaxError, UnknownFunctionError, parse_formula

__all__ = [
    "Binary",
    "Constant",
    "ExprNode",
    "FormulaError",
    "FormulaSyntaxError",
    "LatexError",
    "Unary",
    "UnknownFunctionError",
    "UnknownVariableError",
    "Variable",
    "evaluate",
    "format_expr",
    "normalize_latex",
    "parse_formula",
    "parse_latex",
    "variables",
]
