"""Compilation of module definitions into shared computation rules.

Each rule fixes two local frames for its module:

    node frame:  [external nodes, declared internal nodes, GALV nodes, gnd]
    param frame: [ip, intrp, gv, c]

Instances and elements inside the module refer to nodes and params only through slots in
these frames, so one rule serves every instance of the module.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional
import logging

import numpy as np

from gradnet.errors import CompileError, ElementUnknownPort, ParamResolutionError, UnsupportedGalv
from gradnet.framework.netlist import NetlistDocument, Literal, RESERVED_NODE
from gradnet.framework.validation import GALV_SUFFIX
from gradnet.primitives import submodel as submodels
from gradnet.primitives.element import CATALOG, Element
from gradnet.primitives.submodel import SimInfo, SubModel

logger = logging.getLogger("gradnet")

#param slot kinds
IP = "ip"
INTRP = "intrp"
GV = "gv"
CONST = "c"


@dataclass
class ChildInfo:
    name : str
    rule : "CompiledRule"
    nodes : np.ndarray #node frame slots bound to the child's external nodes
    params : np.ndarray #param frame slots bound to the child's input params


@dataclass
class ElementInfo:
    name : str
    kind : Element
    nodes : np.ndarray
    params : np.ndarray
    galv : bool = False


@dataclass
class CompiledRule:
    name : str
    external_nodes : List[str]
    internal_nodes : List[str] #declared internal nodes followed by GALV nodes
    input_params : List[str]
    intrinsic_params : List[str]
    global_names : List[str]
    global_var_indices : np.ndarray
    constants : np.ndarray
    submodel : Optional[SubModel] = None
    subckts_info : List[ChildInfo] = field(default_factory=list)
    basic_element_info : List[ElementInfo] = field(default_factory=list)

    @property
    def node_names(self) -> List[str]:
        return self.external_nodes + self.internal_nodes + [RESERVED_NODE]

    @property
    def n_ext(self):
        return len(self.external_nodes)

    @property
    def n_int(self):
        return len(self.internal_nodes)

    @property
    def gnd_slot(self):
        return self.n_ext + self.n_int

    def offsets(self):
        """Start of the ip, intrp, gv and c blocks in the param frame, and the frame length"""
        a = len(self.input_params)
        b = a + len(self.intrinsic_params)
        c = b + len(self.global_names)
        return 0, a, b, c, c + len(self.constants)

    def slot_kind(self, slot : int):
        """(kind, position within the block) of a param frame slot"""
        _, a, b, c, _ = self.offsets()
        if slot < a:
            return IP, slot
        if slot < b:
            return INTRP, slot - a
        if slot < c:
            return GV, slot - b
        return CONST, slot - c

    def param_labels(self) -> List[str]:
        labels = ["ip:" + name for name in self.input_params]
        labels += ["intrp:" + name for name in self.intrinsic_params]
        labels += ["gv:%s(%d)"%(name, k) for name, k in zip(self.global_names, self.global_var_indices)]
        labels += ["c:%r"%value for value in self.constants]
        return labels


class _RuleBuilder:
    """Resolves one module's instance statements into frame slots"""

    def __init__(self, module, doc, rules, kinds):
        self.module = module
        self.doc = doc
        self.rules = rules
        self.kinds = kinds
        self.globals = {name : k for k, (name, _) in enumerate(doc.globals)}

        galv = []
        for inst in module.schematic:
            kind = self.kinds.get(inst.master)
            if kind is None:
                continue
            if inst.galv and not kind.supports_galv:
                raise UnsupportedGalv("%s: element %s does not support a GALV node"%(module.name, inst.name))
            if kind.needs_galv or inst.galv:
                galv.append(inst.name + GALV_SUFFIX)

        self.external = list(module.external_nodes)
        self.internal = list(module.internal_nodes) + galv
        frame = self.external + self.internal + [RESERVED_NODE]
        self.node_slot = {name : k for k, name in enumerate(frame)}

        self.intrinsic = list(module.submodel.intrinsic_params) if module.submodel else []
        self.gv_names = []
        self.constants = []
        self.refs = [] #deferred (kind, position) pairs, mapped to slots once all blocks are sized

    def node(self, inst, port, name):
        if name not in self.node_slot:
            raise ElementUnknownPort("%s: instance %s binds port %s to unknown node %s"%(self.module.name, inst.name, port, name))
        return self.node_slot[name]

    def param(self, inst, formal, value):
        if isinstance(value, Literal):
            self.constants.append(value.value)
            return (CONST, len(self.constants)-1)
        name = value.name
        if name in self.module.input_params:
            return (IP, self.module.input_params.index(name))
        if name in self.intrinsic:
            return (INTRP, self.intrinsic.index(name))
        if name in self.globals:
            if name not in self.gv_names:
                self.gv_names.append(name)
            return (GV, self.gv_names.index(name))
        raise ParamResolutionError("%s: instance %s param %s refers to unknown symbol %s"%(self.module.name, inst.name, formal, name))

    def bind(self, inst, ports, formals, defaults):
        extra = set(inst.nodes) - set(ports)
        if extra:
            raise ElementUnknownPort("%s: instance %s of %s has no port %s"%(self.module.name, inst.name, inst.master, ", ".join(sorted(extra))))
        missing = [port for port in ports if port not in inst.nodes]
        if missing:
            raise ElementUnknownPort("%s: instance %s leaves port %s unbound"%(self.module.name, inst.name, ", ".join(missing)))
        unknown = set(inst.params) - set(formals)
        if unknown:
            raise ParamResolutionError("%s: instance %s of %s has no param %s"%(self.module.name, inst.name, inst.master, ", ".join(sorted(unknown))))

        nodes = [self.node(inst, port, inst.nodes[port]) for port in ports]
        params = []
        for formal in formals:
            if formal in inst.params:
                params.append(self.param(inst, formal, inst.params[formal]))
            elif formal in defaults:
                params.append(self.param(inst, formal, Literal(defaults[formal])))
            else:
                raise ParamResolutionError("%s: instance %s leaves param %s unbound"%(self.module.name, inst.name, formal))
        return nodes, params

    def build(self, siminfo) -> CompiledRule:
        children = []
        elements = []
        for inst in self.module.schematic:
            kind = self.kinds.get(inst.master)
            if kind is not None:
                nodes, params = self.bind(inst, kind.ports, kind.param_names(), kind.defaults())
                galv = kind.needs_galv or inst.galv
                if galv:
                    nodes.append(self.node_slot[inst.name + GALV_SUFFIX])
                elements.append((inst.name, kind, nodes, params, galv))
            elif inst.master in self.rules:
                child = self.rules[inst.master]
                nodes, params = self.bind(inst, child.external_nodes, child.input_params, {})
                children.append((inst.name, child, nodes, params))
            else:
                raise CompileError("%s: undefined master %s"%(self.module.name, inst.master))

        offset = {IP : 0, INTRP : len(self.module.input_params)}
        offset[GV] = offset[INTRP] + len(self.intrinsic)
        offset[CONST] = offset[GV] + len(self.gv_names)
        slots = lambda refs: np.array([offset[kind] + k for kind, k in refs], dtype=int)

        sm = None
        if self.module.submodel is not None:
            sm = submodels.compile(self.module.submodel, self.external + self.internal + [RESERVED_NODE],
                list(self.module.input_params), siminfo)

        return CompiledRule(
            name = self.module.name,
            external_nodes = self.external,
            internal_nodes = self.internal,
            input_params = list(self.module.input_params),
            intrinsic_params = self.intrinsic,
            global_names = self.gv_names,
            global_var_indices = np.array([self.globals[name] for name in self.gv_names], dtype=int),
            constants = np.array(self.constants, dtype=float),
            submodel = sm,
            subckts_info = [ChildInfo(name, rule, np.array(nodes, dtype=int), slots(params))
                for name, rule, nodes, params in children],
            basic_element_info = [ElementInfo(name, kind, np.array(nodes, dtype=int), slots(params), galv)
                for name, kind, nodes, params, galv in elements]
        )


def _dependency_order(doc):
    order = []
    state = {}

    def visit(name, trail):
        if state.get(name) == "done":
            return
        if state.get(name) == "open":
            raise CompileError("Circular definition through %s"%" -> ".join(trail + [name]))
        state[name] = "open"
        for inst in doc.modules[name].schematic:
            if inst.master in doc.modules:
                visit(inst.master, trail + [name])
        state[name] = "done"
        order.append(name)

    for name in doc.modules:
        visit(name, [])
    return order


def compile_rules(doc : NetlistDocument, catalog = None, siminfo : SimInfo = None) -> Dict[str, CompiledRule]:
    """Compile one rule per module, children before parents.

    Args:
        doc (NetlistDocument): a document without validation errors
        catalog (list[Element]): basic elements, the built-in catalog by default
        siminfo (SimInfo): context for loading lookup tables
    """

    kinds = dict(CATALOG)
    if catalog is not None:
        kinds = {kind.name : kind for kind in catalog}
        unknown = set(kinds) ^ set(CATALOG)
        if unknown:
            raise CompileError("Element catalog differs from the built-in one: %s"%", ".join(sorted(unknown)))

    rules = {}
    for name in _dependency_order(doc):
        rules[name] = _RuleBuilder(doc.modules[name], doc, rules, kinds).build(siminfo or SimInfo())
    logger.info("Compiled %d computation rules"%len(rules))
    return rules
