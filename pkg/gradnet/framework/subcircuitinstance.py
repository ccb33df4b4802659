from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Tuple
import logging

import numpy as np

from gradnet.errors import CompileError, TopHasExternalNodes
from gradnet.framework.computerule import CompiledRule
from gradnet.primitives.element import AC, GND, gather

logger = logging.getLogger("gradnet")


@dataclass
class SubcircuitInstance:
    """Private data of one instance: its rule, the global indices of its internal nodes and
    its child instances in rule order"""

    rule : CompiledRule
    internal_nodes : np.ndarray
    subckts : List["SubcircuitInstance"] = field(default_factory=list)
    path : str = ""

    def walk(self, en = ()):
        """Yield (instance, node frame) pairs depth first"""
        nodes = np.concatenate([np.asarray(en, dtype=int), self.internal_nodes, [GND]]).astype(int)
        yield self, nodes
        for info, child in zip(self.rule.subckts_info, self.subckts):
            yield from child.walk(nodes[info.nodes])


def _prefix(path, name):
    return name if not path else path + "." + name


def instantiate(rules : Dict[str, CompiledRule], top : str, offset : int = 0) -> Tuple[SubcircuitInstance, int]:
    """Recursively instantiate the hierarchy under top, numbering internal nodes depth first
    in schematic order starting at offset.

    Returns:
        (SubcircuitInstance, int): the top instance and the number of unknowns
    """

    rule = rules[top]
    if rule.n_ext:
        raise TopHasExternalNodes("Top module %s declares external nodes %s"%(top, ", ".join(rule.external_nodes)))
    if rule.input_params:
        raise CompileError("Top module %s declares input params"%top)

    counter = [offset]

    def build(rule, path):
        internal = np.arange(counter[0], counter[0] + rule.n_int, dtype=int)
        counter[0] += rule.n_int
        children = [build(info.rule, _prefix(path, info.name)) for info in rule.subckts_info]
        return SubcircuitInstance(rule, internal, children, path)

    inst = build(rule, "")
    n = counter[0] - offset
    logger.info("Instantiated %s with %d unknowns"%(top, n))
    return inst, n


def signal_names(top : SubcircuitInstance) -> List[str]:
    """Hierarchical name of every unknown, indexed by global signal index"""
    names = {}
    for inst, nodes in top.walk():
        rule = inst.rule
        for k, name in enumerate(rule.internal_nodes):
            names[int(nodes[rule.n_ext + k])] = _prefix(inst.path, name)
    return [names[k] for k in sorted(names)]


def dump_indexes(top : SubcircuitInstance) -> str:
    """One line per instance path with its node frame and param frame"""
    lines = []
    for inst, nodes in top.walk():
        rule = inst.rule
        frame = ["%s=%d"%(name, idx) for name, idx in zip(rule.node_names, nodes)]
        lines.append("%s (%s) nodes=[%s] params=[%s]"%(inst.path or "<top>", rule.name, ", ".join(frame), ", ".join(rule.param_labels())))
    return "\n".join(lines)


#parameter expression trees for flattened elements

class ParamExpr(ABC):

    @abstractmethod
    def evaluate(self, x, gv, x_bias = None, analysis = None):
        """(value, d value/dx, d value/dbias, d value/dgv) with dense gradients"""

    @abstractmethod
    def render(self) -> str:
        """Printable form over global names and hierarchical signal names"""


@dataclass
class Const(ParamExpr):
    value : float

    def evaluate(self, x, gv, x_bias = None, analysis = None):
        return self.value, np.zeros(len(x)), np.zeros(len(x)), np.zeros(len(gv))

    def render(self):
        return repr(self.value)


@dataclass
class GlobalRef(ParamExpr):
    index : int
    name : str

    def evaluate(self, x, gv, x_bias = None, analysis = None):
        dgv = np.zeros(len(gv))
        dgv[self.index] = 1
        return gv[self.index], np.zeros(len(x)), np.zeros(len(x)), dgv

    def render(self):
        return self.name


@dataclass
class IntrinsicRef(ParamExpr):
    """Intrinsic param k of a submodel evaluated at fixed global nodes with composed input params"""

    rule : CompiledRule
    k : int
    nodes : np.ndarray
    ip : List[ParamExpr]
    node_labels : List[str]

    def evaluate(self, x, gv, x_bias = None, analysis = None):
        sm = self.rule.submodel
        use_bias = x_bias is not None and (analysis == AC or not sm.active(analysis))
        source = x_bias if use_bias else x

        parts = [p.evaluate(x, gv, x_bias, analysis) for p in self.ip]
        ip = np.array([part[0] for part in parts], dtype=float)
        ev = sm.eval(gather(source, self.nodes), ip)

        ds = np.zeros(len(x))
        mask = self.nodes != GND
        np.add.at(ds, self.nodes[mask], ev.J_s[self.k][mask])
        dx = np.zeros(len(x))
        db = np.zeros(len(x))
        if use_bias:
            db += ds
        else:
            dx += ds
        dgv = np.zeros(len(gv))
        for m, (_, pdx, pdb, pdgv) in enumerate(parts):
            dx += ev.J_ip[self.k, m]*pdx
            db += ev.J_ip[self.k, m]*pdb
            dgv += ev.J_ip[self.k, m]*pdgv
        return ev.intrp[self.k], dx, db, dgv

    def render(self):
        subst = dict(zip(self.rule.node_names, self.node_labels))
        subst.update({name : "(%s)"%p.render() for name, p in zip(self.rule.input_params, self.ip)})
        return self.rule.submodel.describe(subst)[self.k]


@dataclass
class FlatElement:
    path : str
    kind : object
    nodes : np.ndarray
    params : List[ParamExpr]
    galv : bool = False

    def describe(self):
        return "%s %s nodes=%s %s"%(self.path, self.kind.name, list(self.nodes),
            " ".join("%s=%s"%(name, p.render()) for name, p in zip(self.kind.param_names(), self.params)))


def walk_params(rules : Dict[str, CompiledRule], top : str):
    """Yield (instance, node frame, input param expressions, param frame expressions) for every
    instance of the hierarchy, depth first. The expressions are composed through every submodel
    on the path, so they are functions of x and the globals only."""

    inst, _ = instantiate(rules, top)
    names = signal_names(inst)
    label = lambda idx: "gnd" if idx == GND else "x[%s]"%names[idx]

    def visit(inst, en, ip):
        rule = inst.rule
        nodes = np.concatenate([np.asarray(en, dtype=int), inst.internal_nodes, [GND]]).astype(int)
        frame = list(ip)
        frame += [IntrinsicRef(rule, k, nodes, ip, [label(n) for n in nodes]) for k in range(len(rule.intrinsic_params))]
        frame += [GlobalRef(int(k), name) for name, k in zip(rule.global_names, rule.global_var_indices)]
        frame += [Const(float(c)) for c in rule.constants]
        yield inst, nodes, ip, frame
        for info, child in zip(rule.subckts_info, inst.subckts):
            yield from visit(child, nodes[info.nodes].astype(int), [frame[s] for s in info.params])

    yield from visit(inst, [], [])


def locate(rules : Dict[str, CompiledRule], top : str, path : str):
    """(instance, node frame, input param expressions) of the instance at a hierarchical path"""
    for inst, nodes, ip, _ in walk_params(rules, top):
        if inst.path == path:
            return inst, nodes, ip
    raise CompileError("No instance %s under %s"%(path, top))


def flatten(rules : Dict[str, CompiledRule], top : str) -> List[FlatElement]:
    """The basic elements of the whole hierarchy with global node indices and a parameter
    expression tree per element parameter"""

    flat = []
    for inst, nodes, _, frame in walk_params(rules, top):
        for info in inst.rule.basic_element_info:
            flat.append(FlatElement(_prefix(inst.path, info.name), info.kind, nodes[info.nodes].astype(int),
                [frame[s] for s in info.params], info.galv))
    return flat


def evaluate_flat(flat : List[FlatElement], x, gv, analysis, x_bias = None):
    """Dense Q, F and Jacobians of a flat element list, the chain rule applied per element.

    Returns:
        dict with Q, F, dQ_dx, dF_dx, dQ_dxb, dF_dxb, dQ_dgv, dF_dgv
    """

    n = len(x)
    g = len(gv)
    dtype = np.result_type(x, float)
    out = {"Q" : np.zeros(n, dtype), "F" : np.zeros(n, dtype)}
    for name in ("dQ_dx", "dF_dx", "dQ_dxb", "dF_dxb"):
        out[name] = np.zeros((n, n), dtype)
    out["dQ_dgv"] = np.zeros((n, g), dtype)
    out["dF_dgv"] = np.zeros((n, g), dtype)

    for element in flat:
        parts = [p.evaluate(x, gv, x_bias, analysis) for p in element.params]
        p = np.array([part[0] for part in parts], dtype=float)
        local = element.kind.local(analysis, gather(x, element.nodes), p, element.galv)

        keep = element.nodes != GND
        rows = element.nodes[keep]
        #ports may share a node, so scatter with add.at
        np.add.at(out["Q"], rows, local.Q[keep])
        np.add.at(out["F"], rows, local.F[keep])
        np.add.at(out["dQ_dx"], np.ix_(rows, rows), local.dQ_dx[np.ix_(keep, keep)])
        np.add.at(out["dF_dx"], np.ix_(rows, rows), local.dF_dx[np.ix_(keep, keep)])
        for j, (_, pdx, pdb, pdgv) in enumerate(parts):
            for which, d in (("Q", local.dQ_dp), ("F", local.dF_dp)):
                col = d[keep, j]
                np.add.at(out["d%s_dx"%which], rows, np.outer(col, pdx))
                np.add.at(out["d%s_dxb"%which], rows, np.outer(col, pdb))
                np.add.at(out["d%s_dgv"%which], rows, np.outer(col, pdgv))
    return out
