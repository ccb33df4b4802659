import pytest

from gradnet.framework.netlist import parse, parse_file
from gradnet.framework.validation import ERROR, WARNING, errors, validate

from conftest import CORPUS

CORPUS_FILES = sorted(p.name for p in CORPUS.glob("*.json") if not p.name.endswith("_sizing.json"))


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_corpus_is_clean(corpus, name):
    assert validate(parse_file(corpus / name)) == []


@pytest.mark.parametrize("name, severity, code", [
    ("circular.json", ERROR, "CircularDefinition"),
    ("undefined_master.json", ERROR, "UndefinedMaster"),
    ("unused_node.json", WARNING, "UnusedNode"),
    ("disconnected.json", WARNING, "DisconnectedComponent"),
])
def test_each_invalid_fixture_has_exactly_one_diagnostic(fixtures, name, severity, code):
    diags = validate(parse_file(fixtures / "invalid" / name))
    assert [(d.severity, d.code) for d in diags] == [(severity, code)]


def test_cycle_names_both_modules(fixtures):
    diag = validate(parse_file(fixtures / "invalid" / "circular.json"))[0]
    assert diag.locus == "A, B"


def test_typo_in_master_name(fixtures):
    diag = validate(parse_file(fixtures / "invalid" / "undefined_master.json"))[0]
    assert "resistorr" in diag.message and diag.locus == "R1"


def test_unused_node_locus(fixtures):
    diag = validate(parse_file(fixtures / "invalid" / "unused_node.json"))[0]
    assert diag.locus == "n1"
    assert errors([diag]) == []


def _with_instance(body):
    return parse("""{
"Top":"Main",
"Main":{"ExternalNodes":[], "InputParams":[], "InternalNodes":["n"],
  "Schematic":{
    "V1":{"MasterName":"VS", "ExternalNodes":{"input":"n","output":"gnd"}, "InputParams":{"voltage":1}},
    "X":%s
  }}
}"""%body)


@pytest.mark.parametrize("body, code", [
    ('{"MasterName":"resistor", "ExternalNodes":{"left":"n","right":"m"}, "InputParams":{"resistance":1}}', "BadNodeReference"),
    ('{"MasterName":"resistor", "ExternalNodes":{"left":"n","right":"gnd"}, "InputParams":{"resistance":"Rx"}}', "BadParamReference"),
    ('{"MasterName":"resistor", "ExternalNodes":{"left":"n"}, "InputParams":{"resistance":1}}', "PortArityMismatch"),
    ('{"MasterName":"resistor", "ExternalNodes":{"left":"n","right":"gnd"}, "InputParams":{}}', "PortArityMismatch"),
])
def test_binding_errors(body, code):
    codes = [d.code for d in errors(validate(_with_instance(body)))]
    assert codes == [code]


def test_optional_params_may_be_omitted():
    doc = _with_instance('{"MasterName":"CS", "ExternalNodes":{"input":"n","output":"gnd"}, "InputParams":{"current":1}}')
    assert validate(doc) == []


def test_validation_is_deterministic(fixtures):
    doc = parse_file(fixtures / "invalid" / "disconnected.json")
    assert validate(doc) == validate(doc)
