import json

import numpy as np
import pytest

from gradnet.analysis.dcanalysis import solve_dc
from gradnet.analysis.newton import NewtonConfig
from gradnet.errors import CornerTableMissing, SolveFailedAtIterate, SpecError
from gradnet.primitives.submodel import SimInfo
from gradnet.sizing.auglag import EVAL_FAILURE, INFEASIBLE, OPTIMAL, AugLagOptions, optimize
from gradnet.sizing.nlpcallbacks import NLPCallbacks, make_callbacks
from gradnet.sizing.sizingproblem import SATURATION_ROWS, SaturationCheck, TYPICAL, build_problem

from conftest import CORPUS, TEST_CORNERS

TIGHT = NewtonConfig(abstol = 1e-13, reltol = 1e-12)
OTA_POINT = np.array([2.3, 12.0, 2.1, 22.0, 1.7, 11.0])


def _spec(tmp_path, base, **changes):
    """A copy of a corpus sizing spec with some entries replaced, pointing at the corpus netlist"""
    with open(CORPUS / base, "r") as f:
        spec = json.load(f)
    spec["Netlist"] = str(CORPUS / spec["Netlist"])
    spec.update(changes)
    for key, value in changes.items():
        if value is None:
            del spec[key]
    path = tmp_path / base
    with open(path, "w") as f:
        json.dump(spec, f)
    return path


def _corners(corners):
    return [{"corner" : c, "temperature" : t} for c, t in corners]


@pytest.fixture
def ota(tmp_path, table_dir):
    path = _spec(tmp_path, "ota5t_sizing.json", Corners = _corners(TEST_CORNERS))
    return build_problem(None, path, SimInfo(table_dir = str(table_dir)))


@pytest.fixture
def cs(table_dir):
    return build_problem(None, CORPUS / "cs_stage_sizing.json", SimInfo(table_dir = str(table_dir)))


def test_ota_problem_layout(ota):
    assert ota.n_vars == 6
    assert ota.var_names == ["L1=L2", "W1=W2", "L3=L4", "W3=W4", "L5", "W5"]
    np.testing.assert_array_equal(ota.tie.sum(axis=0), [2, 2, 2, 2, 1, 1])
    np.testing.assert_array_equal(ota.tie.sum(axis=1), np.ones(10))

    labels = ota.constraint_labels()
    assert len(labels) == 2*5*4 + 2
    assert labels[0] == "tt/27 M1 vgs"
    assert labels[-2:] == ["swing down out", "swing up out"]

    lower, upper = ota.bounds()
    np.testing.assert_array_equal(lower, [1, 2, 1, 2, 1, 2])
    np.testing.assert_array_equal(upper, [5, 50, 5, 50, 5, 50])
    np.testing.assert_array_equal(ota.initial(), [1, 10, 1, 20, 1, 10])


def test_tied_members_stay_equal(ota):
    gv = ota.expand(OTA_POINT)
    circuit = ota.typical
    for a, b in (("L1", "L2"), ("W3", "W4")):
        assert gv[circuit.global_index(a)] == gv[circuit.global_index(b)]
    values = ota.design_values(OTA_POINT)
    assert values["W4"] == 22.0 and values["L5"] == 1.7
    #reduce sums the columns of tied members
    jac = np.zeros((1, len(gv)))
    jac[0, circuit.global_index("W1")] = 1.0
    jac[0, circuit.global_index("W2")] = 2.0
    np.testing.assert_array_equal(ota.reduce(jac), [[0, 3.0, 0, 0, 0, 0]])


def test_swing_cases(ota):
    circuit = ota.typical
    down = ota.swing_globals(ota.expand(OTA_POINT), "down")
    up = ota.swing_globals(ota.expand(OTA_POINT), "up")
    assert down[circuit.global_index("Vp")] == pytest.approx(2.3)
    assert down[circuit.global_index("Vm")] == pytest.approx(2.7)
    assert up[circuit.global_index("Vp")] == pytest.approx(2.7)


def test_typical_corner_is_always_compiled(tmp_path, table_dir):
    path = _spec(tmp_path, "ota5t_sizing.json", Corners = _corners([("ss", 125.0)]))
    problem = build_problem(None, path, SimInfo(table_dir = str(table_dir)))
    assert TYPICAL in problem.circuits
    assert len(problem.constraint_labels()) == 5*4 + 2


@pytest.mark.parametrize("changes", [
    {"DesignVars" : [{"name" : "Wx", "init" : 1, "lower" : 0, "upper" : 2}]},
    {"DesignVars" : [{"name" : "MosW", "init" : 1, "lower" : 3, "upper" : 2}]},
    {"DesignVars" : [{"name" : "MosW", "init" : 4}]},
    {"TieGroups" : [["MosW", "RL"]]},
    {"TieGroups" : [["MosW", "MosL"], ["MosL", "MosW"]]},
    {"Saturation" : [{"instance" : "M9", "polarity" : "nmos"}]},
    {"Saturation" : [{"instance" : "M1", "polarity" : "npn"}]},
    {"Saturation" : [{"instance" : "RL", "polarity" : "nmos"}]},
    {"Gain" : {"node" : "nowhere", "target_db" : 20}},
    {"XBounds" : {"nodes" : ["out"], "lower" : 0}},
])
def test_spec_errors(tmp_path, table_dir, changes):
    path = _spec(tmp_path, "cs_stage_sizing.json", **changes)
    with pytest.raises(SpecError):
        build_problem(None, path, SimInfo(table_dir = str(table_dir)))


def test_unreadable_spec(tmp_path, table_dir):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(SpecError):
        build_problem(None, path, SimInfo(table_dir = str(table_dir)))


def test_missing_corner_table(tmp_path, table_dir):
    path = _spec(tmp_path, "cs_stage_sizing.json", Corners = _corners([("ff", -40.0)]))
    with pytest.raises(CornerTableMissing):
        build_problem(None, path, SimInfo(table_dir = str(table_dir)))


def test_saturation_check_rows(cs, central_difference):
    circuit = cs.typical
    gv = cs.expand([7.0, 2.3])
    check = SaturationCheck(circuit, "M1", "nmos")
    x = solve_dc(circuit, gv = gv)

    values, dx, dgv = check.rows(x, gv)
    assert values[0] == pytest.approx(1.2)
    assert values[1] == pytest.approx(x[circuit.index("out")])
    assert values[2] == 0.0
    assert 0 < values[3] < values[0]
    np.testing.assert_allclose(dx, central_difference(lambda v: check.rows(v, gv)[0], x), rtol=1e-5, atol=1e-9)
    np.testing.assert_allclose(dgv, central_difference(lambda p: check.rows(x, p)[0], gv), rtol=1e-5, atol=1e-9)


def test_objective_gradient(cs, central_difference):
    cs.gain.target_db = 60.0
    callbacks = NLPCallbacks(cs, TIGHT)
    z = np.array([7.0, 2.3])
    assert callbacks.eval_objective(z) > 0
    numeric = central_difference(callbacks.eval_objective, z)
    np.testing.assert_allclose(callbacks.eval_objective_grad(z), numeric, rtol=1e-4)


def test_constraint_jacobian(ota, central_difference):
    callbacks = NLPCallbacks(ota, TIGHT)
    J = callbacks.eval_constraint_jacobian(OTA_POINT).toarray()
    assert J.shape == (callbacks.m, callbacks.n)
    numeric = central_difference(callbacks.eval_constraints, OTA_POINT)
    np.testing.assert_allclose(J, numeric, rtol=1e-4, atol=1e-6*np.abs(numeric).max())


def test_evaluations_are_cached(cs):
    callbacks = NLPCallbacks(cs)
    z = np.array([7.0, 2.3])
    callbacks.eval_objective(z)
    callbacks.eval_constraints(z)
    callbacks.eval_objective_grad(z)
    callbacks.eval_constraint_jacobian(z)
    assert callbacks.evaluations == 1


def test_corners_run_in_parallel_with_the_same_result(ota):
    serial = NLPCallbacks(ota, threads = 1).eval_constraints(OTA_POINT)
    parallel = NLPCallbacks(ota, threads = 4).eval_constraints(OTA_POINT)
    np.testing.assert_allclose(serial, parallel, rtol=1e-10)


def test_common_source_stage_reaches_its_gain(cs):
    result = optimize(make_callbacks(cs), AugLagOptions(tol = 1e-6))
    assert result.status == OPTIMAL
    assert result.objective <= 1e-8
    c = NLPCallbacks(cs).eval_constraints(result.z)
    assert c.min() >= -1e-6
    assert set(result.p_opt) == {"MosW", "MosL"}
    assert 2 <= result.p_opt["MosW"] <= 50 and 1 <= result.p_opt["MosL"] <= 5
    assert set(result.history[0]) == {"iteration", "objective", "violation", "merit_start", "merit", "penalty", "kkt", "step"}
    for entry in result.history:
        assert entry["merit"] <= entry["merit_start"] + 1e-12


def test_infeasible_problem(fixtures):
    problem = build_problem(None, fixtures / "infeasible_divider_sizing.json")
    assert problem.n_vars == 1
    result = optimize(NLPCallbacks(problem), AugLagOptions(max_outer = 30))
    assert result.status == INFEASIBLE
    assert result.constraint_violation == pytest.approx(0.5, rel=1e-6)
    assert result.history[-1]["penalty"] >= 1e9


def test_evaluation_failure_is_reported(fixtures, monkeypatch):
    problem = build_problem(None, fixtures / "infeasible_divider_sizing.json")
    callbacks = NLPCallbacks(problem)

    def fail(z):
        raise SolveFailedAtIterate("DC solve failed")
    monkeypatch.setattr(callbacks, "_evaluate", fail)
    result = optimize(callbacks)
    assert result.status == EVAL_FAILURE
    assert result.iterations == 0
    assert np.isnan(result.objective)


def test_history_plot(cs):
    matplotlib = pytest.importorskip("matplotlib")
    matplotlib.use("Agg")
    result = optimize(NLPCallbacks(cs), AugLagOptions(max_outer = 2))
    assert result.plot_history().get_xlabel() == "outer iteration"


@pytest.mark.slow
def test_five_transistor_ota_over_all_corners(tmp_path, all_corner_tables):
    problem = build_problem(None, CORPUS / "ota5t_sizing.json", SimInfo(table_dir = str(all_corner_tables)))
    assert len(problem.corners) == 9
    result = optimize(NLPCallbacks(problem), AugLagOptions(tol = 1e-6))
    assert result.status == OPTIMAL
    assert result.constraint_violation <= 1e-6
    assert result.p_opt["L1"] == result.p_opt["L2"]
    assert result.p_opt["W3"] == result.p_opt["W4"]
    assert result.objective <= 1e-8
    callbacks = NLPCallbacks(problem)
    c = callbacks.eval_constraints(result.z)
    saturation = [k for k, label in enumerate(problem.constraint_labels()) if " M" in label]
    assert len(saturation) == 9*5*len(SATURATION_ROWS)
    assert c[saturation].min() >= -1e-6

    #corner order does not change the optimum
    with open(CORPUS / "ota5t_sizing.json", "r") as f:
        corners = json.load(f)["Corners"]
    path = _spec(tmp_path, "ota5t_sizing.json", Corners = corners[::-1])
    permuted = build_problem(None, path, SimInfo(table_dir = str(all_corner_tables)))
    again = optimize(NLPCallbacks(permuted), AugLagOptions(tol = 1e-6))
    assert again.status == OPTIMAL
    for name, value in result.p_opt.items():
        assert again.p_opt[name] == pytest.approx(value, rel=1e-6, abs=1e-6)


def test_start_at_a_kkt_point(tmp_path, table_dir):
    #no saturation rows and a gain target far below the stage's gain: nothing is active at the start
    path = _spec(tmp_path, "cs_stage_sizing.json", Saturation = None, Gain = {"node" : "out", "target_db" : -40, "freq_hz" : 1})
    problem = build_problem(None, path, SimInfo(table_dir = str(table_dir)))
    callbacks = make_callbacks(problem)
    z0 = problem.initial()
    assert callbacks.eval_objective(z0) == 0.0
    assert callbacks.eval_constraints(z0).min() > 0

    result = optimize(callbacks)
    assert result.status == OPTIMAL
    assert result.iterations <= 2
    np.testing.assert_allclose(result.z, z0, rtol=1e-8)
    assert result.p_opt == pytest.approx({"MosW" : 4.0, "MosL" : 1.0})
