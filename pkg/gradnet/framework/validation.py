from dataclasses import dataclass
from typing import List
import logging

from gradnet.errors import SubModelError
from gradnet.framework.netlist import NetlistDocument, SymbolRef, RESERVED_NODE
from gradnet.primitives.element import CATALOG

logger = logging.getLogger("gradnet")

ERROR = "Error"
WARNING = "Warning"

GALV_SUFFIX = ".i"


@dataclass(frozen=True)
class Diagnostic:
    severity : str
    code : str
    module : str
    locus : str
    message : str

    def __str__(self):
        return "%s %s [%s: %s] %s"%(self.severity, self.code, self.module, self.locus, self.message)


def galv_names(module) -> List[str]:
    """Names of the branch-current nodes the module's instances add"""
    names = []
    for inst in module.schematic:
        kind = CATALOG.get(inst.master)
        if kind is not None and (kind.needs_galv or inst.galv):
            names.append(inst.name + GALV_SUFFIX)
    return names


def _cycles(doc):
    """Strongly connected components of the master reference graph that contain a cycle"""

    edges = {name : [inst.master for inst in module.schematic if inst.master in doc.modules]
        for name, module in doc.modules.items()}
    index = {}
    low = {}
    stack = []
    on_stack = set()
    found = []
    counter = [0]

    def connect(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        for w in edges[v]:
            if w not in index:
                connect(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            component = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                component.append(w)
                if w == v:
                    break
            if len(component) > 1 or v in edges[v]:
                found.append(component)

    for v in doc.modules:
        if v not in index:
            connect(v)

    order = list(doc.modules)
    return [sorted(component, key = order.index) for component in found]


class _Components:
    """union-find over node names"""

    def __init__(self):
        self.parent = {}

    def find(self, a):
        self.parent.setdefault(a, a)
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)

    def groups(self):
        out = {}
        for a in self.parent:
            out.setdefault(self.find(a), []).append(a)
        return list(out.values())


def _master_ports(doc, master):
    if master in CATALOG:
        kind = CATALOG[master]
        return list(kind.ports), list(kind.params), list(kind.optional)
    module = doc.modules[master]
    return list(module.external_nodes), list(module.input_params), []


def _check_module(doc, module, diags):
    galv = galv_names(module)
    nodes = set(module.external_nodes) | set(module.internal_nodes) | set(galv) | {RESERVED_NODE}
    symbols = set(module.input_params) | set(doc.global_names())
    if module.submodel is not None:
        symbols |= set(module.submodel.intrinsic_params)

    def report(severity, code, locus, message):
        diags.append(Diagnostic(severity, code, module.name, locus, message))

    for inst in module.schematic:
        if inst.master not in CATALOG and inst.master not in doc.modules:
            report(ERROR, "UndefinedMaster", inst.name, "Undefined master %s"%inst.master)
        else:
            ports, required, optional = _master_ports(doc, inst.master)
            if set(inst.nodes) != set(ports):
                report(ERROR, "PortArityMismatch", inst.name, "Ports %s do not match %s ports %s"%(
                    sorted(inst.nodes), inst.master, ports))
            bound = set(inst.params)
            if not set(required) <= bound or not bound <= set(required) | set(optional):
                report(ERROR, "PortArityMismatch", inst.name, "Params %s do not match %s params %s"%(
                    sorted(inst.params), inst.master, required + optional))

        for port, node in inst.nodes.items():
            if node not in nodes:
                report(ERROR, "BadNodeReference", inst.name, "Port %s is bound to undeclared node %s"%(port, node))
        for formal, value in inst.params.items():
            if isinstance(value, SymbolRef) and value.name not in symbols:
                report(ERROR, "BadParamReference", inst.name, "Param %s refers to unknown symbol %s"%(formal, value.name))

    #warnings
    touched = set()
    for inst in module.schematic:
        touched |= set(inst.nodes.values())
    if module.submodel is not None:
        try:
            touched |= module.submodel.referenced_names()
        except SubModelError:
            pass #reported when the submodel is compiled
    for node in list(module.external_nodes) + list(module.internal_nodes):
        if node not in touched:
            report(WARNING, "UnusedNode", node, "Node %s is not connected to any instance"%node)

    components = _Components()
    for inst in module.schematic:
        members = [node for node in inst.nodes.values() if node in nodes]
        if inst.name + GALV_SUFFIX in galv:
            members.append(inst.name + GALV_SUFFIX)
        for node in members:
            components.find(node)
        for a, b in zip(members, members[1:]):
            components.union(a, b)
    groups = components.groups()
    if len(groups) >= 2:
        described = "; ".join("{%s}"%", ".join(sorted(group)) for group in sorted(groups, key = lambda g: sorted(g)))
        report(WARNING, "DisconnectedComponent", module.name, "Schematic splits into %d components: %s"%(len(groups), described))


def validate(doc : NetlistDocument) -> List[Diagnostic]:
    """Static checks over a parsed document. Returns every diagnostic, errors and warnings,
    in a deterministic order: cycles first, then per module in document order."""

    diags = []
    for component in _cycles(doc):
        diags.append(Diagnostic(ERROR, "CircularDefinition", component[0], ", ".join(component),
            "Circular definition among {%s}"%", ".join(component)))

    for module in doc.modules.values():
        _check_module(doc, module, diags)

    for diag in diags:
        logger.debug(str(diag))
    return diags


def errors(diags : List[Diagnostic]) -> List[Diagnostic]:
    return [d for d in diags if d.severity == ERROR]
