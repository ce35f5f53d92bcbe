import json

import pytest

from conftest import tiny_doc
from macrosolve.config import ConfigError, dump_config, export_config, load_config, parse_config
from macrosolve.problems import PROBLEMS, config_text, load_problem


@pytest.mark.parametrize("name", PROBLEMS)
def test_export_parse_round_trip(name):
    model = load_problem(name)
    again = parse_config(export_config(model))
    assert again == model
    assert export_config(again) == export_config(model)


@pytest.mark.parametrize("name", PROBLEMS)
def test_packaged_text_parses(name):
    assert parse_config(json.loads(config_text(name))) == load_problem(name)


def test_dump_load_file_round_trip(tmp_path):
    model = load_problem("econ_1d")
    path = tmp_path / "econ.json"
    path.write_text(dump_config(model))
    assert load_config(path) == model


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="hidden_layers"):
        parse_config(tiny_doc(learnable=[{"name": "y", "hidden_layers": [8]}]))


def test_missing_state_rejected():
    doc = tiny_doc()
    del doc["state"]
    with pytest.raises(ConfigError, match="state"):
        parse_config(doc)


def test_bad_comparator_rejected():
    with pytest.raises(ConfigError, match="comparator"):
        parse_config(tiny_doc(constraints=[{"lhs": "y", "comparator": "=<", "rhs": "1"}]))


def test_formula_error_names_location():
    with pytest.raises(ConfigError, match="endogenous"):
        parse_config(tiny_doc(endogenous=[{"lhs": "y_x +", "rhs": "1"}]))


def test_lhs_must_be_a_variable():
    with pytest.raises(ConfigError, match="single variable"):
        parse_config(tiny_doc(equations=[{"lhs": "a + b", "rhs": "1"}]))


def test_init_field_round_trips():
    model = parse_config(tiny_doc(learnable=[{"name": "y", "hidden_sizes": [8], "init": "fan_in"}]))
    assert model.learnables[0].spec.init == "fan_in"
    assert export_config(model)["learnable"][0]["init"] == "fan_in"
    default = parse_config(tiny_doc())
    assert default.learnables[0].spec.init == "xavier"
    assert "init" not in export_config(default)["learnable"][0]


def test_latex_entries_round_trip():
    doc = tiny_doc(equations=[{"lhs": r"\hat{a}", "rhs": r"\frac{y}{2}", "latex": True}])
    model = parse_config(doc)
    assert model.equations[0].lhs == "a_hat"
    assert parse_config(export_config(model)) == model


def test_unreadable_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(bad)
