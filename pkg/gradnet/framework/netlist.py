"""The JSON netlist dialect: parsing, schema checks and printing.

A netlist is a JSON object (with '#' line comments allowed outside strings) holding:

    "Top": name of the top-level module
    "Globals": optional {name: value} global variables
    "NodeSet": optional {node: volts} initial guesses for Newton
    <module name>: one module definition per remaining key
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union
import json
import logging
import re

from gradnet.errors import NetlistSyntaxError, SchemaError
from gradnet.primitives.element import CATALOG, ANALYSES
from gradnet.primitives.submodel import EXPRESSION, LOOKUP_TABLE

logger = logging.getLogger("gradnet")

RESERVED_NODE = "gnd"
TOP_KEYS = ("Top", "Globals", "NodeSet")

_NUMBER = re.compile(r"^\s*[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\s*$")
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


@dataclass(frozen=True)
class Literal:
    value : float


@dataclass(frozen=True)
class SymbolRef:
    name : str


ParamValue = Union[Literal, SymbolRef]


@dataclass(frozen=True)
class SubModelSpec:
    kind : str
    intrinsic_params : Tuple[str, ...]
    analyses : Optional[Tuple[str, ...]] = None
    body : Optional[str] = None #expression source, or table file name
    bindings : Dict[str, str] = field(default_factory=dict) #table axis -> expression
    loader : Optional[str] = None #ModelLoader string

    def referenced_names(self):
        """Signal and param names the submodel reads, when known before loading tables"""
        from gradnet.primitives.expression import parse_program, parse_expression
        names = set()
        if self.kind == EXPRESSION:
            for item in parse_program(self.body):
                names |= item.variables()
        for text in self.bindings.values():
            names |= parse_expression(text).variables()
        return names


@dataclass(frozen=True)
class InstanceStatement:
    name : str
    master : str
    nodes : Dict[str, str]
    params : Dict[str, ParamValue]
    galv : bool = False


@dataclass(frozen=True)
class ModuleDefinition:
    name : str
    external_nodes : Tuple[str, ...]
    internal_nodes : Tuple[str, ...]
    input_params : Tuple[str, ...]
    submodel : Optional[SubModelSpec]
    schematic : Tuple[InstanceStatement, ...]

    def instance(self, name):
        for inst in self.schematic:
            if inst.name == name:
                return inst
        raise KeyError(name)


@dataclass(frozen=True)
class NetlistDocument:
    modules : Dict[str, ModuleDefinition]
    top : str
    globals : Tuple[Tuple[str, float], ...] = ()
    nodeset : Tuple[Tuple[str, float], ...] = ()
    path : Optional[str] = field(default=None, compare=False)

    def global_names(self):
        return [name for name, _ in self.globals]


def strip_comments(text : str) -> str:
    """Remove '#' comments running to end of line, except inside string literals. Newlines are
    kept so that error positions still refer to the original text."""

    out = []
    in_string = False
    escaped = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_string:
            out.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
            out.append(ch)
        elif ch == "#":
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def _pairs_hook(pairs):
    obj = {}
    for key, value in pairs:
        if key in obj:
            raise SchemaError("Duplicate key %s"%key)
        obj[key] = value
    return obj


def _require(obj, key, kind, where):
    if key not in obj:
        raise SchemaError("%s is missing required field %s"%(where, key))
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaError("%s field %s has the wrong type"%(where, key))
    return value


def _name_list(obj, key, where):
    names = _require(obj, key, list, where)
    for name in names:
        if not isinstance(name, str) or not _IDENT.match(name):
            raise SchemaError("%s field %s holds an invalid name %r"%(where, key, name))
    if len(set(names)) != len(names):
        raise SchemaError("%s field %s has duplicate names"%(where, key))
    return tuple(names)


def _number(value, where):
    if isinstance(value, bool):
        raise SchemaError("%s: expected a number, got %r"%(where, value))
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str) and _NUMBER.match(value):
        return float(value)
    raise SchemaError("%s: expected a number, got %r"%(where, value))


def _param_value(value, where) -> ParamValue:
    if isinstance(value, bool):
        raise SchemaError("%s: invalid parameter value %r"%(where, value))
    if isinstance(value, (int, float)):
        return Literal(float(value))
    if isinstance(value, str):
        if _NUMBER.match(value):
            return Literal(float(value))
        if _IDENT.match(value.strip()):
            return SymbolRef(value.strip())
    raise SchemaError("%s: invalid parameter value %r"%(where, value))


def _parse_submodel(obj, where) -> SubModelSpec:
    where = where + " SubModel"
    if not isinstance(obj, dict):
        raise SchemaError("%s must be an object"%where)
    intrinsic = _name_list(obj, "IntrinsicParams", where)
    if not intrinsic:
        raise SchemaError("%s declares no IntrinsicParams"%where)

    analyses = None
    if "Analysis" in obj:
        analyses = _require(obj, "Analysis", list, where)
        for name in analyses:
            if name not in ANALYSES:
                raise SchemaError("%s has unknown analysis %r"%(where, name))
        analyses = tuple(analyses)

    forms = [key for key in ("Expr", "Table", "ModelLoader") if key in obj]
    if len(forms) != 1:
        raise SchemaError("%s needs exactly one of Expr, Table, ModelLoader"%where)

    if forms[0] == "Expr":
        return SubModelSpec(EXPRESSION, intrinsic, analyses, _require(obj, "Expr", str, where))
    if forms[0] == "ModelLoader":
        return SubModelSpec(LOOKUP_TABLE, intrinsic, analyses, loader = _require(obj, "ModelLoader", str, where))

    table = obj["Table"]
    if isinstance(table, str):
        return SubModelSpec(LOOKUP_TABLE, intrinsic, analyses, table)
    if isinstance(table, dict):
        file = _require(table, "File", str, where + " Table")
        axes = table.get("Axes", {})
        if not isinstance(axes, dict) or not all(isinstance(v, str) for v in axes.values()):
            raise SchemaError("%s Table Axes must map axis names to expressions"%where)
        return SubModelSpec(LOOKUP_TABLE, intrinsic, analyses, file, dict(axes))
    raise SchemaError("%s field Table has the wrong type"%where)


def _parse_instance(name, obj, where) -> InstanceStatement:
    where = "%s instance %s"%(where, name)
    if not isinstance(obj, dict):
        raise SchemaError("%s must be an object"%where)
    master = _require(obj, "MasterName", str, where)
    nodes = _require(obj, "ExternalNodes", dict, where)
    for port, node in nodes.items():
        if not isinstance(node, str):
            raise SchemaError("%s binds port %s to a non-name"%(where, port))
    params = obj.get("InputParams", {})
    if not isinstance(params, dict):
        raise SchemaError("%s field InputParams has the wrong type"%where)
    galv = obj.get("Galv", False)
    if not isinstance(galv, bool):
        raise SchemaError("%s field Galv must be true or false"%where)
    bound = {formal : _param_value(value, "%s param %s"%(where, formal)) for formal, value in params.items()}
    return InstanceStatement(name, master, dict(nodes), bound, galv)


def _parse_module(name, obj) -> ModuleDefinition:
    where = "Module %s"%name
    if not isinstance(obj, dict):
        raise SchemaError("%s must be an object"%where)
    if name in CATALOG:
        raise SchemaError("%s shadows a basic element"%where)

    external = _name_list(obj, "ExternalNodes", where)
    internal = _name_list(obj, "InternalNodes", where)
    params = _name_list(obj, "InputParams", where)
    schematic = _require(obj, "Schematic", dict, where)

    if RESERVED_NODE in external or RESERVED_NODE in internal:
        raise SchemaError("%s declares the reserved node %s"%(where, RESERVED_NODE))
    declared = list(external) + list(internal) + list(params)
    if len(set(declared)) != len(declared):
        raise SchemaError("%s has overlapping node and parameter names"%where)

    submodel = None
    if "SubModel" in obj:
        submodel = _parse_submodel(obj["SubModel"], where)
        clash = set(submodel.intrinsic_params) & set(declared)
        if clash:
            raise SchemaError("%s intrinsic params clash with %s"%(where, ", ".join(sorted(clash))))

    instances = tuple(_parse_instance(inst, body, where) for inst, body in schematic.items())
    return ModuleDefinition(name, external, internal, params, submodel, instances)


def parse(source_text : str, path = None) -> NetlistDocument:
    """Parse netlist text into a NetlistDocument.

    Raises:
        NetlistSyntaxError: malformed JSON once comments are removed
        SchemaError: a required field is missing or has the wrong type
    """

    try:
        obj = json.loads(strip_comments(source_text), strict = False, object_pairs_hook = _pairs_hook)
    except json.JSONDecodeError as e:
        raise NetlistSyntaxError(e.msg, e.lineno, e.colno)
    if not isinstance(obj, dict):
        raise SchemaError("A netlist must be a JSON object")

    top = _require(obj, "Top", str, "Netlist")

    globals_obj = obj.get("Globals", {})
    if not isinstance(globals_obj, dict):
        raise SchemaError("Netlist field Globals has the wrong type")
    gv = []
    for name, value in globals_obj.items():
        if name == RESERVED_NODE or not _IDENT.match(name):
            raise SchemaError("Invalid global variable name %r"%name)
        gv.append((name, _number(value, "Global %s"%name)))

    nodeset_obj = obj.get("NodeSet", {})
    if not isinstance(nodeset_obj, dict):
        raise SchemaError("Netlist field NodeSet has the wrong type")
    nodeset = tuple((name, _number(value, "NodeSet %s"%name)) for name, value in nodeset_obj.items())

    modules = {name : _parse_module(name, body) for name, body in obj.items() if name not in TOP_KEYS}
    if top not in modules:
        raise SchemaError("Top module %s is not defined"%top)

    logger.info("Parsed netlist with %d modules, top %s"%(len(modules), top))
    return NetlistDocument(modules, top, tuple(gv), nodeset, str(path) if path is not None else None)


def parse_file(path) -> NetlistDocument:
    with open(path, "r", encoding="utf-8") as f:
        return parse(f.read(), path)


def _param_json(value):
    return value.value if isinstance(value, Literal) else value.name


def _submodel_json(spec : SubModelSpec):
    obj = {}
    if spec.analyses is not None:
        obj["Analysis"] = list(spec.analyses)
    if spec.loader is not None:
        obj["ModelLoader"] = spec.loader
    elif spec.kind == EXPRESSION:
        obj["Expr"] = spec.body
    elif spec.bindings:
        obj["Table"] = {"File" : spec.body, "Axes" : dict(spec.bindings)}
    else:
        obj["Table"] = spec.body
    obj["IntrinsicParams"] = list(spec.intrinsic_params)
    return obj


def _module_json(module : ModuleDefinition):
    obj = {
        "ExternalNodes" : list(module.external_nodes),
        "InputParams" : list(module.input_params),
        "InternalNodes" : list(module.internal_nodes),
    }
    if module.submodel is not None:
        obj["SubModel"] = _submodel_json(module.submodel)
    schematic = {}
    for inst in module.schematic:
        body = {
            "MasterName" : inst.master,
            "ExternalNodes" : dict(inst.nodes),
            "InputParams" : {formal : _param_json(value) for formal, value in inst.params.items()}
        }
        if inst.galv:
            body["Galv"] = True
        schematic[inst.name] = body
    obj["Schematic"] = schematic
    return obj


def dumps(doc : NetlistDocument) -> str:
    """Print a document as canonical JSON (no comments). Parsing the output gives back an
    equal document."""

    obj = {"Top" : doc.top}
    if doc.globals:
        obj["Globals"] = dict(doc.globals)
    if doc.nodeset:
        obj["NodeSet"] = dict(doc.nodeset)
    for name, module in doc.modules.items():
        obj[name] = _module_json(module)
    return json.dumps(obj, indent=2)
