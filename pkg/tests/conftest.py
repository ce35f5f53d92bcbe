import copy

import pytest

from macrosolve.config import parse_config

BASE = {
    "name": "tiny",
    "state": [{"name": "x", "low": 0.0, "high": 1.0}],
    "learnable": [{"name": "y", "hidden_sizes": [8], "order": 2}],
    "endogenous": [{"lhs": "y_x", "rhs": "1", "label": "slope"}],
    "conditions": [{"lhs": "y", "rhs": "0", "points": [[0.0]], "label": "origin"}],
    "training": {"epochs": 20, "batch_size": 16, "seed": 0, "optimizer": {"kind": "adam", "learning_rate": 0.01}},
}


def tiny_doc(**overrides):
    doc = copy.deepcopy(BASE)
    doc.update(overrides)
    return doc


@pytest.fixture
def tiny_model():
    return parse_config(tiny_doc())


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
