from pathlib import Path
from typing import Dict
import logging
import os

import numpy as np

from gradnet.errors import CompileError, SchemaError
from gradnet.framework import graph
from gradnet.framework.computerule import compile_rules
from gradnet.framework.netlist import NetlistDocument, parse_file
from gradnet.framework.subcircuitinstance import instantiate, signal_names, dump_indexes, flatten, locate
from gradnet.framework.validation import validate, errors
from gradnet.primitives.element import DC, catalog
from gradnet.primitives.submodel import SimInfo, TABLE_DIR_ENV

logger = logging.getLogger("gradnet")


class CompiledCircuit:
    """A netlist compiled for one simulation context: rules, the instantiated top module,
    the unknowns' names and the global variable values"""

    def __init__(self, doc : NetlistDocument, siminfo : SimInfo = None):
        self.doc = doc
        if siminfo is None:
            siminfo = SimInfo()
        if siminfo.table_dir is None and not os.environ.get(TABLE_DIR_ENV) and doc.path is not None:
            siminfo = SimInfo(siminfo.corner, siminfo.temperature, str(Path(doc.path).parent))
        self.siminfo = siminfo

        problems = errors(validate(doc))
        if problems:
            raise CompileError("Netlist has %d errors, first: %s"%(len(problems), problems[0]))

        self.rules = compile_rules(doc, catalog(), siminfo)
        self.top, self.N = instantiate(self.rules, doc.top)
        self.names = signal_names(self.top)
        self._index = {name : k for k, name in enumerate(self.names)}
        self.global_names = doc.global_names()
        self.globals = np.array([value for _, value in doc.globals], dtype=float)
        logger.info("Compiled %s (%s, %g C): %d unknowns, %d globals"%(doc.top, siminfo.corner, siminfo.temperature,
            self.N, len(self.global_names)))

    @classmethod
    def from_file(cls, path, siminfo : SimInfo = None):
        return cls(parse_file(path), siminfo)

    def at_corner(self, corner : str, temperature : float):
        """The same netlist compiled against the tables of another corner"""
        return CompiledCircuit(self.doc, self.siminfo.with_corner(corner, temperature))

    def index(self, name : str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError("No unknown named %s"%name)

    def global_index(self, name : str) -> int:
        try:
            return self.global_names.index(name)
        except ValueError:
            raise SchemaError("No global variable named %s"%name)

    def gv(self, overrides : Dict[str, float] = None) -> np.ndarray:
        """Global values with some replaced by name"""
        values = self.globals.copy()
        for name, value in (overrides or {}).items():
            values[self.global_index(name)] = value
        return values

    def initial_guess(self) -> np.ndarray:
        """Zeros, or NodeSet hints where given"""
        x = np.zeros(self.N)
        for name, value in self.doc.nodeset:
            x[self.index(name)] = value
        return x

    def eval(self, x, analysis = DC, gv = None, x_bias = None, flags = None) -> graph.EvalResult:
        gv = self.globals if gv is None else gv
        return graph.eval_top(x, self.top, analysis, gv, x_bias, flags)

    def flatten(self):
        return flatten(self.rules, self.doc.top)

    def locate(self, path : str):
        """(instance, node frame, input param expressions) of an instance by hierarchical path"""
        return locate(self.rules, self.doc.top, path)

    def dump_indexes(self) -> str:
        return dump_indexes(self.top)

    def solution_dict(self, x) -> Dict[str, float]:
        return {name : x[k] for k, name in enumerate(self.names)}
