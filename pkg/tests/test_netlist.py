import math

import pytest

from gradnet.errors import NetlistSyntaxError, SchemaError
from gradnet.framework.netlist import Literal, SymbolRef, dumps, parse, parse_file, strip_comments
from gradnet.primitives.submodel import EXPRESSION, LOOKUP_TABLE

from conftest import CORPUS

CORPUS_FILES = sorted(p.name for p in CORPUS.glob("*.json") if not p.name.endswith("_sizing.json"))

MINIMAL = """{
"Top":"Main",
"Main":{"ExternalNodes":[], "InputParams":[], "InternalNodes":[], "Schematic":{}}
}"""


def test_size_dependent_resistor_listing(corpus):
    doc = parse_file(corpus / "size_dep_resistor.json")
    module = doc.modules["SizeDepResistor"]
    assert module.external_nodes == ("l", "r")
    assert module.input_params == ("Rlength", "Rwidth")
    assert module.submodel.kind == EXPRESSION
    assert module.submodel.intrinsic_params == ("RValue",)
    assert [inst.name for inst in module.schematic] == ["instanceR"]
    inst = module.instance("instanceR")
    assert inst.master == "resistor"
    assert inst.nodes == {"left" : "l", "right" : "r"}
    assert inst.params == {"resistance" : SymbolRef("RValue")}
    assert doc.top == "Main"
    assert doc.globals == (("Rlength", 2.0), ("Rwidth", 1.0))


def test_empty_module():
    doc = parse(MINIMAL)
    assert doc.modules["Main"].schematic == ()
    assert doc.modules["Main"].submodel is None


def test_missing_external_nodes_names_the_module(corpus):
    text = (corpus / "size_dep_resistor.json").read_text()
    text = text.replace('"ExternalNodes":["l","r"],', "", 1)
    with pytest.raises(SchemaError) as info:
        parse(text)
    assert "SizeDepResistor" in str(info.value) and "ExternalNodes" in str(info.value)


def test_comments_outside_strings_only():
    text = 'a # comment "quoted"\n"b # kept" # gone\n"c \\" # still kept"'
    assert strip_comments(text) == 'a \n"b # kept" \n"c \\" # still kept"'


def test_syntax_error_reports_position():
    with pytest.raises(NetlistSyntaxError) as info:
        parse('{\n"Top":"Main",\n"Main": {,}\n}')
    assert info.value.line == 3


def test_numbers_in_string_form_and_overflow():
    text = MINIMAL.replace('"Schematic":{}', '"Schematic":{"R":{"MasterName":"resistor",'
        ' "ExternalNodes":{"left":"gnd","right":"gnd"}, "InputParams":{"resistance":"1e3"}},'
        ' "Rinf":{"MasterName":"resistor", "ExternalNodes":{"left":"gnd","right":"gnd"},'
        ' "InputParams":{"resistance":1e1000}}}')
    module = parse(text).modules["Main"]
    assert module.instance("R").params["resistance"] == Literal(1000.0)
    assert math.isinf(module.instance("Rinf").params["resistance"].value)


def test_code_listings_keep_the_model_loader(corpus):
    doc = parse_file(corpus / "nmos_cs.json")
    nmos = doc.modules["NMOSTYPE"]
    assert nmos.submodel.kind == LOOKUP_TABLE
    assert nmos.submodel.analyses == ("DC", "TRAN")
    assert "NMOSTYPE" in nmos.submodel.loader
    assert nmos.submodel.intrinsic_params == ("ID", "GDS", "CDD", "CSS", "CGG", "CGS", "CGD", "GM", "GMB")
    infr = doc.modules["MosSmallSignalTemplate"].instance("infr")
    assert math.isinf(infr.params["resistance"].value)


@pytest.mark.parametrize("bad, message", [
    ('"Top":"Nope",', "Top"),
    ('"Top":"Main", "Globals":{"gnd":1},', "gnd"),
    ('"Top":"Main", "Globals":{"a":"x"},', "number"),
    ('"Top":"Main", "resistor":{"ExternalNodes":[], "InputParams":[], "InternalNodes":[], "Schematic":{}},', "shadows"),
])
def test_schema_errors(bad, message):
    text = MINIMAL.replace('"Top":"Main",', bad)
    with pytest.raises(SchemaError) as info:
        parse(text)
    assert message in str(info.value)


def test_duplicate_keys_are_rejected():
    with pytest.raises(SchemaError):
        parse(MINIMAL.replace('"InputParams":[],', '"InputParams":[], "InputParams":[],'))


def test_submodel_needs_one_form():
    text = MINIMAL.replace('"Schematic":{}', '"SubModel":{"Expr":"[1,]", "Table":"t.json", "IntrinsicParams":["p"]}, "Schematic":{}')
    with pytest.raises(SchemaError):
        parse(text)


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_print_parse_round_trip(corpus, name):
    doc = parse_file(corpus / name)
    again = parse(dumps(doc))
    assert again == doc
    assert dumps(again) == dumps(doc)
