import numpy as np
import pytest

from gradnet.errors import EvalDomainError, ExprParseError, UnboundVariable
from gradnet.primitives.expression import ExpressionProgram, parse_expression, parse_program


def evaluate(source, inputs, values):
    return ExpressionProgram.from_source(source, inputs).evaluate(values)


def test_size_dependent_resistance():
    vals, jac = evaluate("[1e2*Rlength/Rwidth,]", ["Rlength", "Rwidth"], [2.0, 1.0])
    assert vals[0] == pytest.approx(200.0)
    np.testing.assert_allclose(jac[0], [100.0, -200.0])


def test_trailing_comma_is_optional():
    assert len(parse_program("[a, b]")) == 2
    assert len(parse_program("[a, b,]")) == 2


def test_precedence():
    vals, _ = evaluate("[2^3^2, -x^2, 1+2*3, (1+2)*3,]", ["x"], [3.0])
    np.testing.assert_allclose(vals, [512.0, -9.0, 7.0, 9.0])


def test_functions_match_numpy():
    vals, _ = evaluate("[exp(x), log(x), sqrt(x), tanh(x), abs(-x), min(x, 1), max(x, 1), pow(x, 3)]", ["x"], [0.5])
    expected = [np.exp(0.5), np.log(0.5), np.sqrt(0.5), np.tanh(0.5), 0.5, 0.5, 1.0, 0.125]
    np.testing.assert_allclose(vals, expected, rtol=1e-14)


def test_jacobian_matches_central_differences(central_difference):
    source = "[a*exp(-b)/(1 + c^2), sqrt(a*b) + tanh(c - a), a^b]"
    program = ExpressionProgram.from_source(source, ["a", "b", "c"])
    p = np.array([1.3, 0.7, -0.4])
    _, jac = program.evaluate(p)
    fd = central_difference(lambda q: program.evaluate(q)[0], p)
    np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-9)


def test_unused_inputs_get_zero_gradient():
    _, jac = evaluate("[2*a,]", ["a", "b"], [1.0, 5.0])
    np.testing.assert_array_equal(jac, [[2.0, 0.0]])


@pytest.mark.parametrize("source", ["[1+,]", "[a b]", "1+2", "[foo(1)]", "[min(1)]", "[(1]"])
def test_malformed_programs(source):
    with pytest.raises(ExprParseError):
        parse_program(source)


def test_unbound_variable():
    with pytest.raises(UnboundVariable) as info:
        ExpressionProgram.from_source("[x + y,]", ["x"])
    assert info.value.name == "y"


@pytest.mark.parametrize("source, value", [("[log(x),]", -1.0), ("[sqrt(x),]", -1.0), ("[1/x,]", 0.0),
    ("[x^0.5,]", -2.0), ("[sqrt(x),]", 0.0)])
def test_domain_errors(source, value):
    with pytest.raises(EvalDomainError):
        evaluate(source, ["x"], [value])


def test_render_substitutes_names():
    program = ExpressionProgram.from_source("[R0*(1 + alpha*(l - r)^2),]", ["l", "r", "R0", "alpha"])
    text = program.render({"l" : "x[mid]", "r" : "gnd"})[0]
    assert "x[mid]" in text and "gnd" in text and "alpha" in text


def test_axis_binding_expression():
    node = parse_expression("gate-source")
    assert node.variables() == {"gate", "source"}
