from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence
import logging
import os
import re

import numpy as np

from gradnet.errors import SchemaError, SubModelError, ExprParseError
from gradnet.primitives.expression import ExpressionProgram, parse_expression, parse_program
from gradnet.primitives.interptable import InterpTable, load_table

logger = logging.getLogger("gradnet")

EXPRESSION = "Expression"
LOOKUP_TABLE = "LookupTable"

TABLE_DIR_ENV = "GRADNET_TABLE_DIR"


@dataclass(frozen=True)
class SimInfo:
    """Simulation context handed to submodel loaders at compile time"""

    corner : str = "tt"
    temperature : float = 27.0
    table_dir : Optional[str] = None

    def table_path(self, name : str) -> Path:
        path = Path(name)
        if path.is_absolute():
            return path
        base = self.table_dir or os.environ.get(TABLE_DIR_ENV) or "."
        return Path(base) / path

    def with_corner(self, corner, temperature):
        return SimInfo(corner, float(temperature), self.table_dir)


@dataclass
class SubModelEval:
    intrp : np.ndarray
    J_s : np.ndarray
    J_ip : np.ndarray


class SubModel(ABC):
    """The behavioral side of a module: a differentiable map from the module's node signals and
    input parameters to its intrinsic parameters"""

    def __init__(self, intrinsic_params : Sequence[str], signal_names : Sequence[str], ip_names : Sequence[str], analyses = None):
        if not intrinsic_params:
            raise SchemaError("SubModel needs at least one intrinsic parameter")
        self.intrinsic_params = list(intrinsic_params)
        self.signal_names = list(signal_names)
        self.ip_names = list(ip_names)
        self.analyses = frozenset(analyses) if analyses else None

    @property
    def n_intrinsic(self):
        return len(self.intrinsic_params)

    @property
    def arity_signals(self):
        return len(self.signal_names)

    @property
    def arity_ip(self):
        return len(self.ip_names)

    def active(self, analysis : str) -> bool:
        """Whether the submodel is evaluated at the current signals under this analysis. When it
        is not, the caller evaluates it at the bias point instead."""
        return self.analyses is None or analysis in self.analyses

    def _split(self, vals, jac):
        ns = self.arity_signals
        return SubModelEval(vals, jac[:, :ns], jac[:, ns:])

    @abstractmethod
    def eval(self, signals : np.ndarray, ip : np.ndarray) -> SubModelEval:
        """Intrinsic parameters and their Jacobians with respect to signals and input params"""

    @abstractmethod
    def describe(self, subst : Dict[str, str]):
        """Printable form of each intrinsic parameter with the inputs renamed through subst"""


class ExpressionSubModel(SubModel):

    def __init__(self, source : str, intrinsic_params, signal_names, ip_names, analyses = None):
        super().__init__(intrinsic_params, signal_names, ip_names, analyses)
        self.source = source
        self.program = ExpressionProgram(parse_program(source), self.signal_names + self.ip_names)
        if len(self.program.items) != self.n_intrinsic:
            raise ExprParseError("Expression list has %d entries but %d intrinsic parameters are declared"%(
                len(self.program.items), self.n_intrinsic))

    def eval(self, signals, ip):
        vals, jac = self.program.evaluate(np.concatenate([signals, ip]))
        return self._split(vals, jac)

    def describe(self, subst):
        return self.program.render(subst)


class LookupTableSubModel(SubModel):
    """Intrinsic parameters read from table slabs. Each table axis is bound to an expression of
    the module's signals and input parameters, so Jacobians chain through the bindings."""

    def __init__(self, table : InterpTable, bindings : Dict[str, str], intrinsic_params, signal_names, ip_names, analyses = None):
        super().__init__(intrinsic_params, signal_names, ip_names, analyses)
        self.table = table

        merged = dict(table.bindings)
        merged.update(bindings or {})
        missing = [axis for axis in table.axis_names if axis not in merged]
        if missing:
            raise SchemaError("No binding for table axes %s"%", ".join(missing))
        self.bindings = {axis : merged[axis] for axis in table.axis_names}
        self.axis_program = ExpressionProgram([parse_expression(self.bindings[axis]) for axis in table.axis_names],
            self.signal_names + self.ip_names)
        self.slab_indices = [table.slab_index(name) for name in self.intrinsic_params]

    def _lookup(self, signals, ip, slabs):
        coords, dcoords = self.axis_program.evaluate(np.concatenate([signals, ip]))
        vals, grad = self.table.interpolate(coords, slabs)
        return self._split(vals, grad @ dcoords)

    def eval(self, signals, ip):
        return self._lookup(signals, ip, self.slab_indices)

    def eval_slab(self, name : str, signals, ip) -> SubModelEval:
        """Evaluate any slab of the table, including slabs not declared as intrinsic params"""
        return self._lookup(signals, ip, [self.table.slab_index(name)])

    def describe(self, subst):
        args = ",".join(self.axis_program.render(subst))
        return ["%s.%s(%s)"%(self.table.device, name, args) for name in self.intrinsic_params]


#ModelLoader strings look like: SimInfo->lut.MosLookup("NMOSTYPE", /path/to/data; SimInfo=SimInfo)
_LOADER_CALL = re.compile(r'^\s*\w+\s*->\s*([A-Za-z_][\w.]*)\s*\(\s*"([^"]*)"', re.DOTALL)


def _mos_lookup(device, siminfo):
    return load_table(siminfo.table_path(device + ".json"), siminfo.corner, siminfo.temperature)

LOADERS = {
    "lut.MosLookup" : _mos_lookup,
}


def resolve_loader(text : str, siminfo : SimInfo) -> InterpTable:
    match = _LOADER_CALL.match(text)
    if match is None:
        raise SchemaError("Cannot read ModelLoader %r"%text)
    name, device = match.groups()
    if name not in LOADERS:
        raise SchemaError("Unknown model loader %s"%name)
    return LOADERS[name](device, siminfo)


def compile(spec, signal_names : Sequence[str], ip_names : Sequence[str], siminfo : SimInfo = None) -> SubModel:
    """Compile a parsed SubModel field against the owning module's node and input param names.

    Args:
        spec (SubModelSpec): the parsed netlist field
        signal_names (list[str]): module node names in node frame order
        ip_names (list[str]): module input parameter names
        siminfo (SimInfo): corner, temperature and table search path for table loading
    """

    siminfo = siminfo or SimInfo()
    if spec.kind == EXPRESSION:
        return ExpressionSubModel(spec.body, spec.intrinsic_params, signal_names, ip_names, spec.analyses)

    if spec.kind == LOOKUP_TABLE:
        if spec.loader is not None:
            table = resolve_loader(spec.loader, siminfo)
        else:
            table = load_table(siminfo.table_path(spec.body), siminfo.corner, siminfo.temperature)
        return LookupTableSubModel(table, spec.bindings, spec.intrinsic_params, signal_names, ip_names, spec.analyses)

    raise SubModelError("Unknown SubModel kind %s"%spec.kind)
