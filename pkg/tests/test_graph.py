import numpy as np
import pytest

from gradnet.errors import GraphError
from gradnet.framework import graph
from gradnet.framework.compiledcircuit import CompiledCircuit
from gradnet.framework.graph import SOLVE_ONLY
from gradnet.framework.netlist import parse
from gradnet.framework.subcircuitinstance import walk_params
from gradnet.primitives.element import AC, DC, GND, TRAN
from gradnet.primitives.submodel import SubModelEval

from conftest import CORPUS

CORPUS_FILES = sorted(p.name for p in CORPUS.glob("*.json") if not p.name.endswith("_sizing.json"))
TABLE_NETLISTS = {"nmos_cs.json", "ota5t.json"}


def _rtol(name):
    return 1e-4 if name in TABLE_NETLISTS else 1e-6


def _point(circuit, seed = 0):
    rng = np.random.default_rng(seed)
    return circuit.initial_guess() + rng.uniform(0.1, 0.6, circuit.N)


def _close(analytic, numeric, rtol = 1e-5):
    scale = max(np.abs(numeric).max(), 1e-30)
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=rtol*scale)


def _interior_globals(circuit):
    """Globals with every device length moved off the lower edge of the table's L axis"""
    gv = circuit.globals.copy()
    for k, name in enumerate(circuit.global_names):
        if name == "MosL" or (name.startswith("L") and name[1:].isdigit()):
            gv[k] += 0.3
    return gv


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_signal_jacobian(load, central_difference, name):
    circuit = load(name)
    x = _point(circuit)
    result = circuit.eval(x, TRAN)
    _close(result.dF_dx.toarray(), central_difference(lambda v: circuit.eval(v, TRAN).F, x), _rtol(name))
    _close(result.dQ_dx.toarray(), central_difference(lambda v: circuit.eval(v, TRAN).Q, x), _rtol(name))


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_global_jacobian(load, central_difference, name):
    circuit = load(name)
    x = _point(circuit, 1)
    g0 = _interior_globals(circuit)
    result = circuit.eval(x, TRAN, g0)
    _close(result.dF_dgv.toarray(), central_difference(lambda gv: circuit.eval(x, TRAN, gv).F, g0), _rtol(name))
    _close(result.dQ_dgv.toarray(), central_difference(lambda gv: circuit.eval(x, TRAN, gv).Q, g0), _rtol(name))


def test_charge_depends_on_capacitance_global(load):
    circuit = load("nested_three_level.json")
    x = _point(circuit)
    dQ = circuit.eval(x, TRAN).dQ_dgv.toarray()
    column = dQ[:, circuit.global_index("Cp")]
    for path in ("X1.P1.m", "X1.P2.m"):
        assert column[circuit.index(path)] == pytest.approx(-x[circuit.index(path)])
    assert not dQ[:, circuit.global_index("Vin")].any()


@pytest.mark.parametrize("name", ["nested_three_level.json", "nmos_cs.json"])
def test_small_signal_depends_on_bias(load, central_difference, name):
    circuit = load(name)
    bias = _point(circuit, 2)
    rng = np.random.default_rng(5)
    x = rng.normal(size=circuit.N) + 1j*rng.normal(size=circuit.N)
    result = circuit.eval(x, AC, x_bias = bias)
    _close(result.dF_dxb.toarray(), central_difference(lambda b: circuit.eval(x, AC, x_bias = b).F, bias))
    #the small-signal part stays linear in x
    _close(result.dF_dx.toarray(), central_difference(lambda v: circuit.eval(v, AC, x_bias = bias).F, x.real))


def test_input_param_gradient_of_an_inner_instance(load, central_difference):
    circuit = load("nested_three_level.json")
    chain = circuit.top.subckts[0]
    assert chain.rule.name == "Chain"
    en = [circuit.index("in"), GND]
    x = _point(circuit)
    gv = circuit.globals

    result = graph.eval(x, chain, en, [2.0], TRAN, gv)
    _close(result.dF_dip.toarray(), central_difference(lambda ip: graph.eval(x, chain, en, ip, TRAN, gv).F, [2.0]))
    _close(result.dQ_dip.toarray(), central_difference(lambda ip: graph.eval(x, chain, en, ip, TRAN, gv).Q, [2.0]))


def test_top_gradient_matches_global_route(load):
    """Scale reaches the chain both as a global and as the chain's input param"""
    circuit = load("nested_three_level.json")
    chain = circuit.top.subckts[0]
    x = _point(circuit)
    en = [circuit.index("in"), GND]
    inner = graph.eval(x, chain, en, [circuit.globals[circuit.global_index("Scale")]], DC, circuit.globals)
    top = circuit.eval(x, DC)
    np.testing.assert_allclose(inner.dF_dip.toarray()[:, 0],
        top.dF_dgv.toarray()[:, circuit.global_index("Scale")], rtol=1e-12)


def test_solve_only_skips_parameter_gradients(load):
    circuit = load("nonlinear_divider.json")
    result = circuit.eval(circuit.initial_guess(), DC, flags = SOLVE_ONLY)
    assert result.dF_dx is not None
    assert result.dF_dgv is None and result.dF_dip is None


def test_errors_carry_the_instance_path(load):
    circuit = load("nested_three_level.json")
    with pytest.raises(GraphError) as info:
        circuit.eval(np.zeros(circuit.N), DC, circuit.gv({"Scale" : 0.0}))
    assert info.value.path == "X1.P1.first.R"
    assert info.value.error_name == "ElementError"


def test_skipping_parameter_gradients_keeps_the_solve_terms(load):
    circuit = load("nested_three_level.json")
    chain = circuit.top.subckts[0]
    x = _point(circuit)
    en = [circuit.index("in"), GND]
    full = graph.eval(x, chain, en, [2.0], TRAN, circuit.globals)
    lean = graph.eval(x, chain, en, [2.0], TRAN, circuit.globals, flags = SOLVE_ONLY)
    assert lean.dF_dip is None and lean.dQ_dip is None
    np.testing.assert_array_equal(lean.F, full.F)
    np.testing.assert_array_equal(lean.Q, full.Q)
    np.testing.assert_allclose(lean.dF_dx.toarray(), full.dF_dx.toarray(), rtol=0, atol=0)
    np.testing.assert_allclose(lean.dQ_dx.toarray(), full.dQ_dx.toarray(), rtol=0, atol=0)


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_input_param_jacobian_of_every_instance(load, central_difference, name):
    circuit = load(name)
    x = _point(circuit, 3)
    g0 = _interior_globals(circuit)
    checked = 0
    for inst, nodes, ip_exprs, _ in walk_params(circuit.rules, circuit.doc.top):
        if inst.path == "" or not inst.rule.input_params:
            continue
        en = nodes[:inst.rule.n_ext]
        ip = np.array([p.evaluate(x, g0)[0] for p in ip_exprs])
        result = graph.eval(x, inst, en, ip, TRAN, g0)
        _close(result.dF_dip.toarray(), central_difference(lambda v: graph.eval(x, inst, en, v, TRAN, g0).F, ip), _rtol(name))
        _close(result.dQ_dip.toarray(), central_difference(lambda v: graph.eval(x, inst, en, v, TRAN, g0).Q, ip), _rtol(name))
        checked += 1
    if not checked:
        pytest.skip("%s has no parameterized instances"%name)


TWO_MODULES = """{
"Top":"Main",
"Globals":{"Vin":1.5},
"ModA":{"ExternalNodes":["p"], "InputParams":[], "InternalNodes":["m"],
  "SubModel":{"Expr":"[100*(1 + 0.1*(p - m)^2),]", "IntrinsicParams":["RA"]},
  "Schematic":{
    "R1":{"MasterName":"resistor", "ExternalNodes":{"left":"p","right":"m"}, "InputParams":{"resistance":"RA"}},
    "R2":{"MasterName":"resistor", "ExternalNodes":{"left":"m","right":"gnd"}, "InputParams":{"resistance":100}}
  }},
"ModB":{"ExternalNodes":["p"], "InputParams":[], "InternalNodes":["m"],
  "SubModel":{"Expr":"[200*(1 + 0.05*p^2),]", "IntrinsicParams":["RB"]},
  "Schematic":{
    "R1":{"MasterName":"resistor", "ExternalNodes":{"left":"p","right":"m"}, "InputParams":{"resistance":"RB"}},
    "R2":{"MasterName":"resistor", "ExternalNodes":{"left":"m","right":"gnd"}, "InputParams":{"resistance":100}}
  }},
"Main":{"ExternalNodes":[], "InputParams":[], "InternalNodes":["in"],
  "Schematic":{
    "V1":{"MasterName":"VS", "ExternalNodes":{"input":"in","output":"gnd"}, "InputParams":{"voltage":"Vin"}},
    "XA":{"MasterName":"ModA", "ExternalNodes":{"p":"in"}, "InputParams":{}},
    "XB":{"MasterName":"ModB", "ExternalNodes":{"p":"in"}, "InputParams":{}}
  }}
}"""


def test_submodel_jacobian_only_reaches_its_own_rows(monkeypatch):
    circuit = CompiledCircuit(parse(TWO_MODULES))
    x = _point(circuit, 4)
    before = circuit.eval(x, DC).dF_dx.toarray()

    sm = circuit.rules["ModA"].submodel
    original = sm.eval
    def flat(signals, ip):
        ev = original(signals, ip)
        return SubModelEval(ev.intrp, np.zeros_like(ev.J_s), np.zeros_like(ev.J_ip))
    monkeypatch.setattr(sm, "eval", flat)
    after = circuit.eval(x, DC).dF_dx.toarray()

    changed = set(np.flatnonzero(np.abs(after - before).max(axis=1) > 0))
    assert changed and changed <= {circuit.index("in"), circuit.index("XA.m")}
    for name in ("XB.m", "V1.i"):
        np.testing.assert_array_equal(after[circuit.index(name)], before[circuit.index(name)])
