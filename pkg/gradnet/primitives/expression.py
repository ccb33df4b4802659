"""The submodel expression language: a small arithmetic grammar evaluated with forward-mode
dual numbers, so every evaluation returns values together with their exact Jacobian.

Grammar:

    program  := '[' expr (',' expr)* ','? ']'
    expr     := term (('+' | '-') term)*
    term     := unary (('*' | '/') unary)*
    unary    := ('-' | '+') unary | power
    power    := primary ('^' unary)?
    primary  := number | identifier | identifier '(' expr (',' expr)* ')' | '(' expr ')'

Functions: exp, log, sqrt, tanh, abs, min, max, pow.
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple
from typing_extensions import Self
import math
import re

import numpy as np

from gradnet.errors import ExprParseError, UnboundVariable, EvalDomainError


class Dual:
    """A value together with its gradient with respect to all program inputs"""

    __slots__ = ("val", "grad")

    def __init__(self, val : float, grad : np.ndarray):
        self.val = val
        self.grad = grad

    @classmethod
    def constant(cls, val, n) -> Self:
        return cls(float(val), np.zeros(n))

    @classmethod
    def variable(cls, val, k, n) -> Self:
        grad = np.zeros(n)
        grad[k] = 1.0
        return cls(float(val), grad)

    def _lift(self, other):
        if isinstance(other, Dual):
            return other
        return Dual(float(other), np.zeros_like(self.grad))

    def __add__(self, other):
        other = self._lift(other)
        return Dual(self.val + other.val, self.grad + other.grad)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return Dual(self.val - other.val, self.grad - other.grad)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return Dual(-self.val, -self.grad)

    def __mul__(self, other):
        other = self._lift(other)
        return Dual(self.val*other.val, self.val*other.grad + other.val*self.grad)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        if other.val == 0.0:
            raise EvalDomainError("Division by zero")
        val = self.val/other.val
        return Dual(val, (self.grad - val*other.grad)/other.val)

    def __rtruediv__(self, other):
        return self._lift(other)/self

    def __pow__(self, other):
        other = self._lift(other)
        if not other.grad.any():
            #constant exponent, defined for negative bases when the exponent is integral
            b = other.val
            if self.val < 0 and not float(b).is_integer():
                raise EvalDomainError("Negative base %g with non-integer exponent %g"%(self.val, b))
            if self.val == 0 and b < 1 and b != 0:
                raise EvalDomainError("Zero base with exponent %g"%b)
            if b == 0:
                return Dual(1.0, np.zeros_like(self.grad))
            return Dual(self.val**b, b*self.val**(b-1)*self.grad)
        if self.val <= 0:
            raise EvalDomainError("Non-positive base %g with variable exponent"%self.val)
        val = self.val**other.val
        return Dual(val, val*(other.grad*math.log(self.val) + other.val*self.grad/self.val))

    def __rpow__(self, other):
        return self._lift(other)**self

    def __repr__(self):
        return "Dual(%r, %r)"%(self.val, self.grad)


def _exp(a):
    try:
        val = math.exp(a.val)
    except OverflowError:
        raise EvalDomainError("exp overflow at %g"%a.val)
    return Dual(val, val*a.grad)

def _log(a):
    if a.val <= 0:
        raise EvalDomainError("log of non-positive value %g"%a.val)
    return Dual(math.log(a.val), a.grad/a.val)

def _sqrt(a):
    if a.val < 0:
        raise EvalDomainError("sqrt of negative value %g"%a.val)
    if a.val == 0:
        if a.grad.any():
            raise EvalDomainError("sqrt is not differentiable at 0")
        return Dual(0.0, a.grad.copy())
    val = math.sqrt(a.val)
    return Dual(val, a.grad/(2*val))

def _tanh(a):
    val = math.tanh(a.val)
    return Dual(val, (1 - val*val)*a.grad)

def _abs(a):
    #subgradient at the kink is 0
    return Dual(abs(a.val), np.sign(a.val)*a.grad)

def _min(*args):
    return min(args, key = lambda d: d.val) #ties resolve to the first argument

def _max(*args):
    return max(args, key = lambda d: d.val)

def _pow(a, b):
    return a**b

#name: (minimum arity, maximum arity, implementation)
FUNCTIONS = {
    "exp" : (1, 1, _exp),
    "log" : (1, 1, _log),
    "sqrt" : (1, 1, _sqrt),
    "tanh" : (1, 1, _tanh),
    "abs" : (1, 1, _abs),
    "min" : (2, None, _min),
    "max" : (2, None, _max),
    "pow" : (2, 2, _pow),
}


#syntax tree

@dataclass(frozen=True)
class Num:
    value : float

    def evaluate(self, env):
        return env["__zero__"] + self.value

    def variables(self):
        return set()

    def render(self, subst):
        return repr(self.value)


@dataclass(frozen=True)
class Var:
    name : str

    def evaluate(self, env):
        return env[self.name]

    def variables(self):
        return {self.name}

    def render(self, subst):
        return subst.get(self.name, self.name)


@dataclass(frozen=True)
class Neg:
    operand : object

    def evaluate(self, env):
        return -self.operand.evaluate(env)

    def variables(self):
        return self.operand.variables()

    def render(self, subst):
        return "-(%s)"%self.operand.render(subst)


@dataclass(frozen=True)
class BinOp:
    op : str
    left : object
    right : object

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        return a ** b

    def variables(self):
        return self.left.variables() | self.right.variables()

    def render(self, subst):
        return "(%s%s%s)"%(self.left.render(subst), self.op, self.right.render(subst))


@dataclass(frozen=True)
class Call:
    name : str
    args : tuple

    def evaluate(self, env):
        return FUNCTIONS[self.name][2](*[arg.evaluate(env) for arg in self.args])

    def variables(self):
        names = set()
        for arg in self.args:
            names |= arg.variables()
        return names

    def render(self, subst):
        return "%s(%s)"%(self.name, ",".join(arg.render(subst) for arg in self.args))


#tokenizer and recursive descent parser

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<op>[-+*/^(),\[\]])
""", re.VERBOSE)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            raise ExprParseError("Unexpected character %r"%text[pos], pos)
        kind = match.lastgroup
        if kind != "ws":
            tokens.append((kind, match.group(), pos))
        pos = match.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:

    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.next()
        if text != value or kind == "end":
            raise ExprParseError("Expected %r but found %r"%(value, text or "end of input"), pos)

    def program(self):
        self.expect("[")
        items = [self.expr()]
        while self.peek()[1] == ",":
            self.next()
            if self.peek()[1] == "]": #trailing comma
                break
            items.append(self.expr())
        self.expect("]")
        self.end()
        return items

    def single(self):
        node = self.expr()
        self.end()
        return node

    def end(self):
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprParseError("Unexpected %r"%text, pos)

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.next()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.next()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.next()
            return Neg(self.unary())
        if self.peek()[1] == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self):
        node = self.primary()
        if self.peek()[1] == "^":
            self.next()
            node = BinOp("^", node, self.unary()) #right associative
        return node

    def primary(self):
        kind, text, pos = self.next()
        if kind == "number":
            return Num(float(text))
        if kind == "ident":
            if self.peek()[1] == "(":
                self.next()
                if text not in FUNCTIONS:
                    raise ExprParseError("Unknown function %s"%text, pos)
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.next()
                    args.append(self.expr())
                self.expect(")")
                low, high, _ = FUNCTIONS[text]
                if len(args) < low or (high is not None and len(args) > high):
                    raise ExprParseError("Wrong number of arguments to %s"%text, pos)
                return Call(text, tuple(args))
            return Var(text)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprParseError("Unexpected %r"%(text or "end of input"), pos)


def parse_program(text : str) -> List:
    """Parse a bracketed list of expressions, e.g. "[1e2*Rlength/Rwidth,]"."""
    return _Parser(text).program()


def parse_expression(text : str):
    """Parse a single expression without brackets (used for table axis bindings)"""
    return _Parser(text).single()


class ExpressionProgram:
    """A list of expressions whose free variables are resolved against an ordered input list.
    Evaluation returns the values and the dense Jacobian with respect to every input."""

    def __init__(self, items : Sequence, inputs : Sequence[str]):
        self.items = list(items)
        self.inputs = list(inputs)

        known = set(self.inputs)
        for item in self.items:
            for name in sorted(item.variables()):
                if name not in known:
                    raise UnboundVariable(name)

    @classmethod
    def from_source(cls, text : str, inputs : Sequence[str]) -> Self:
        return cls(parse_program(text), inputs)

    def variables(self):
        names = set()
        for item in self.items:
            names |= item.variables()
        return names

    def evaluate(self, values : Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        n = len(self.inputs)
        env : Dict[str, Dual] = {name : Dual.variable(v, k, n) for k, (name, v) in enumerate(zip(self.inputs, values))}
        env["__zero__"] = Dual.constant(0.0, n)

        vals = np.empty(len(self.items))
        jac = np.empty((len(self.items), n))
        for i, item in enumerate(self.items):
            result = item.evaluate(env)
            vals[i] = result.val
            jac[i] = result.grad

        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(jac))):
            raise EvalDomainError("Expression produced a non-finite value")
        return vals, jac

    def render(self, subst : Dict[str, str]) -> List[str]:
        return [item.render(subst) for item in self.items]
