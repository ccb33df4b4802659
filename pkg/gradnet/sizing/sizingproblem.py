"""Construction of the device sizing problem from a netlist and a sizing spec file.

The spec file is JSON:

    {"Netlist": "ota5t.json",
     "DesignVars": [{"name": "W12", "init": 10, "lower": 2, "upper": 50}, ...],
     "TieGroups": [["W1", "W2"], ...],
     "Corners": [{"corner": "tt", "temperature": 27}, ...],
     "Saturation": [{"instance": "M1", "polarity": "nmos"}, ...],
     "Swing": {"node": "out", "plus": "Vp", "minus": "Vm", "down": 0.3, "up": 4.35, "sum": 5},
     "Gain": {"node": "out", "target_db": 100, "freq_hz": 1},
     "Delta": 0.2,
     "XBounds": {"nodes": ["out"], "lower": 0, "upper": 5}}

Design variables are global variables of the netlist. Members of a tie group share one
optimization variable, which keeps them exactly equal.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence
import json
import logging

import numpy as np

from gradnet.errors import CompileError, CornerTableMissing, GradnetError, SpecError, TableNotFound
from gradnet.framework.compiledcircuit import CompiledCircuit
from gradnet.framework.netlist import parse_file
from gradnet.primitives.element import GND, gather
from gradnet.primitives.submodel import LookupTableSubModel, SimInfo

logger = logging.getLogger("gradnet")

NMOS = "nmos"
PMOS = "pmos"
VTH_SLAB = "VTH"
MOS_PORTS = ("gate", "source", "drain", "bulk")
SATURATION_ROWS = ("vgs", "vds", "vsb", "vov")


@dataclass(frozen=True)
class PVTCorner:
    corner : str = "tt"
    temperature : float = 27.0

    def __str__(self):
        return "%s/%g"%(self.corner, self.temperature)


TYPICAL = PVTCorner()


@dataclass
class DesignVar:
    name : str
    init : float
    lower : float
    upper : float


@dataclass
class SwingSpec:
    """Two DC solves at the typical corner with the input pair moved apart by delta while
    their sum stays fixed. Lowering `plus` must bring node under `down`, raising it must bring
    node over `up`."""

    node : str
    plus : str
    minus : str
    down : float
    up : float
    sum : float = 5.0


@dataclass
class GainSpec:
    node : str
    target_db : float
    freq_hz : float = 0.0

    @property
    def omega(self):
        return 2*np.pi*self.freq_hz


@dataclass
class XBoundSpec:
    nodes : List[str]
    lower : float
    upper : float


class SaturationCheck:
    """Saturation rows of one MOS instance in one compiled corner:
    V_gs, V_ds, V_sb and V_gs - V_th, all in source-referenced magnitudes for PMOS."""

    def __init__(self, circuit : CompiledCircuit, instance : str, polarity : str):
        if polarity not in (NMOS, PMOS):
            raise SpecError("Polarity of %s must be nmos or pmos, got %s"%(instance, polarity))
        try:
            inst, frame, ip = circuit.locate(instance)
        except CompileError:
            raise SpecError("No device instance %s"%instance)

        rule = inst.rule
        if not isinstance(rule.submodel, LookupTableSubModel) or VTH_SLAB not in rule.submodel.table.slabs:
            raise SpecError("Instance %s has no lookup table with a %s slab"%(instance, VTH_SLAB))
        missing = [port for port in MOS_PORTS if port not in rule.external_nodes]
        if missing:
            raise SpecError("Instance %s has no port %s"%(instance, ", ".join(missing)))

        self.instance = instance
        self.polarity = polarity
        self.submodel = rule.submodel
        self.frame = frame
        self.ip = ip
        self.ports = {port : int(frame[rule.node_names.index(port)]) for port in MOS_PORTS}

    def _unit(self, n, plus, minus, sign):
        row = np.zeros(n)
        if self.ports[plus] != GND:
            row[self.ports[plus]] += sign
        if self.ports[minus] != GND:
            row[self.ports[minus]] -= sign
        return row

    def rows(self, x : np.ndarray, gv : np.ndarray):
        """Row values with their partial derivatives with respect to x and the globals

        Returns:
            (ndarray, ndarray, ndarray): values (4,), d/dx (4, N), d/dgv (4, G)
        """

        n, g = len(x), len(gv)
        sign = 1.0 if self.polarity == NMOS else -1.0
        dx = np.array([self._unit(n, "gate", "source", sign), self._unit(n, "drain", "source", sign),
            self._unit(n, "source", "bulk", sign)])
        values = dx @ x

        parts = [p.evaluate(x, gv) for p in self.ip]
        ipv = np.array([part[0] for part in parts], dtype=float)
        ev = self.submodel.eval_slab(VTH_SLAB, gather(x, self.frame), ipv)
        dvth_dx = np.zeros(n)
        dvth_dgv = np.zeros(g)
        mask = self.frame != GND
        np.add.at(dvth_dx, self.frame[mask], ev.J_s[0][mask])
        for m, (_, pdx, _, pdgv) in enumerate(parts):
            dvth_dx += ev.J_ip[0, m]*pdx
            dvth_dgv += ev.J_ip[0, m]*pdgv

        values = np.append(values, values[0] - ev.intrp[0])
        dx = np.vstack([dx, dx[0] - dvth_dx])
        dgv = np.vstack([np.zeros((3, g)), -dvth_dgv])
        return values, dx, dgv


@dataclass
class SizingProblem:
    """Design variables, tie groups and constraint generators of one sizing task, with the
    netlist compiled once per corner"""

    netlist_path : str
    design_vars : List[DesignVar]
    tie_groups : List[List[str]]
    corners : List[PVTCorner]
    circuits : Dict[PVTCorner, CompiledCircuit]
    saturation : List[Dict[str, str]] = field(default_factory=list)
    checks : Dict[PVTCorner, List[SaturationCheck]] = field(default_factory=dict)
    swing : Optional[SwingSpec] = None
    gain : Optional[GainSpec] = None
    delta : float = 0.2
    x_bounds : Optional[XBoundSpec] = None

    def __post_init__(self):
        names = [v.name for v in self.design_vars]
        grouped = {}
        for k, group in enumerate(self.tie_groups):
            for name in group:
                grouped[name] = k

        #one optimization variable per tie group or untied design variable, in first-use order
        self.members = []
        seen = set()
        for j, name in enumerate(names):
            if name in grouped:
                k = grouped[name]
                if k in seen:
                    continue
                seen.add(k)
                self.members.append([names.index(m) for m in self.tie_groups[k]])
            else:
                self.members.append([j])

        self.var_names = ["=".join(names[j] for j in group) for group in self.members]
        self.tie = np.zeros((len(names), len(self.members)))
        for col, group in enumerate(self.members):
            self.tie[group, col] = 1
        self.design_indices = np.array([self.typical.global_index(name) for name in names], dtype=int)

    @property
    def typical(self) -> CompiledCircuit:
        return self.circuits[TYPICAL]

    @property
    def n_vars(self):
        return len(self.members)

    def bounds(self):
        lower = np.array([max(self.design_vars[j].lower for j in group) for group in self.members])
        upper = np.array([min(self.design_vars[j].upper for j in group) for group in self.members])
        return lower, upper

    def initial(self) -> np.ndarray:
        lower, upper = self.bounds()
        z = np.array([np.mean([self.design_vars[j].init for j in group]) for group in self.members])
        return np.clip(z, lower, upper)

    def expand(self, z : Sequence[float]) -> np.ndarray:
        """Global variable vector with the design globals set from the optimization variables"""
        gv = self.typical.globals.copy()
        gv[self.design_indices] = self.tie @ np.asarray(z, dtype=float)
        return gv

    def reduce(self, jac_gv : np.ndarray) -> np.ndarray:
        """Chain a Jacobian with respect to all globals down to the optimization variables"""
        return jac_gv[..., self.design_indices] @ self.tie

    def design_values(self, z) -> Dict[str, float]:
        values = self.tie @ np.asarray(z, dtype=float)
        return {v.name : float(values[j]) for j, v in enumerate(self.design_vars)}

    def swing_globals(self, gv : np.ndarray, case : str) -> np.ndarray:
        """Globals of the swing case "down" (plus lowered) or "up" (plus raised)"""
        circuit = self.typical
        gv = gv.copy()
        mid = self.swing.sum/2
        shift = -self.delta if case == "down" else self.delta
        gv[circuit.global_index(self.swing.plus)] = mid + shift
        gv[circuit.global_index(self.swing.minus)] = mid - shift
        return gv

    def constraint_labels(self) -> List[str]:
        labels = []
        for corner in self.corners:
            for check in self.checks[corner]:
                labels += ["%s %s %s"%(corner, check.instance, row) for row in SATURATION_ROWS]
            if self.x_bounds is not None:
                for node in self.x_bounds.nodes:
                    labels += ["%s %s lower"%(corner, node), "%s %s upper"%(corner, node)]
        if self.swing is not None:
            labels += ["swing down %s"%self.swing.node, "swing up %s"%self.swing.node]
        return labels


def _require(obj, key, where):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise SpecError("%s is missing %s"%(where, key))


def _compile(doc, corner : PVTCorner, table_dir) -> CompiledCircuit:
    try:
        return CompiledCircuit(doc, SimInfo(corner.corner, corner.temperature, table_dir))
    except TableNotFound as e:
        raise CornerTableMissing("No device table for corner %s: %s"%(corner, e)) from e


def build_problem(netlist, spec_file, siminfo : SimInfo = None) -> SizingProblem:
    """Read a sizing spec file and compile its netlist at every corner.

    Args:
        netlist (str): netlist path, or None to use the spec file's Netlist entry
            (relative to the spec file)
        spec_file (str): sizing spec file path
        siminfo (SimInfo): only its table_dir is used

    Raises:
        SpecError: malformed spec or references to unknown globals, nodes or devices
        CornerTableMissing: a corner has no device table
    """

    try:
        with open(spec_file, "r", encoding="utf-8") as f:
            spec = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise SpecError("Cannot read sizing spec %s: %s"%(spec_file, e))
    if not isinstance(spec, dict):
        raise SpecError("Sizing spec must be a JSON object")

    if netlist is None:
        netlist = Path(spec_file).parent / _require(spec, "Netlist", "Sizing spec")
    doc = parse_file(netlist)
    table_dir = siminfo.table_dir if siminfo is not None else None

    design_vars = []
    for entry in _require(spec, "DesignVars", "Sizing spec"):
        var = DesignVar(str(_require(entry, "name", "DesignVars entry")), float(_require(entry, "init", "DesignVars entry")),
            float(_require(entry, "lower", "DesignVars entry")), float(_require(entry, "upper", "DesignVars entry")))
        if var.name not in doc.global_names():
            raise SpecError("Design variable %s is not a global variable of %s"%(var.name, doc.top))
        if var.lower > var.upper:
            raise SpecError("Design variable %s has lower bound above upper bound"%var.name)
        design_vars.append(var)
    names = [v.name for v in design_vars]
    if len(set(names)) != len(names):
        raise SpecError("Design variables are listed twice")

    tie_groups = [list(group) for group in spec.get("TieGroups", [])]
    tied = [name for group in tie_groups for name in group]
    if len(set(tied)) != len(tied):
        raise SpecError("Tie groups overlap")
    for name in tied:
        if name not in names:
            raise SpecError("Tied name %s is not a design variable"%name)
    for group in tie_groups:
        if max(design_vars[names.index(n)].lower for n in group) > min(design_vars[names.index(n)].upper for n in group):
            raise SpecError("Tie group %s has disjoint bounds"%", ".join(group))

    corners = [PVTCorner(str(_require(c, "corner", "Corners entry")), float(_require(c, "temperature", "Corners entry")))
        for c in spec.get("Corners", [])]
    if not corners:
        corners = [TYPICAL]

    circuits = {}
    for corner in corners + [TYPICAL]:
        if corner not in circuits:
            circuits[corner] = _compile(doc, corner, table_dir)
    typical = circuits[TYPICAL]

    saturation = list(spec.get("Saturation", []))
    checks = {corner : [SaturationCheck(circuits[corner], str(_require(s, "instance", "Saturation entry")),
        str(_require(s, "polarity", "Saturation entry")).lower()) for s in saturation] for corner in corners}

    def check_node(name):
        try:
            typical.index(name)
        except GradnetError:
            raise SpecError("No node %s in %s"%(name, doc.top))
        return name

    def check_global(name):
        if name not in typical.global_names:
            raise SpecError("No global variable %s in %s"%(name, doc.top))
        return name

    swing = None
    if "Swing" in spec:
        s = spec["Swing"]
        swing = SwingSpec(check_node(_require(s, "node", "Swing")), check_global(_require(s, "plus", "Swing")),
            check_global(_require(s, "minus", "Swing")), float(_require(s, "down", "Swing")),
            float(_require(s, "up", "Swing")), float(s.get("sum", 5.0)))

    gain = None
    if "Gain" in spec:
        g = spec["Gain"]
        gain = GainSpec(check_node(_require(g, "node", "Gain")), float(_require(g, "target_db", "Gain")), float(g.get("freq_hz", 0.0)))

    x_bounds = None
    if "XBounds" in spec:
        b = spec["XBounds"]
        x_bounds = XBoundSpec([check_node(n) for n in _require(b, "nodes", "XBounds")],
            float(_require(b, "lower", "XBounds")), float(_require(b, "upper", "XBounds")))

    problem = SizingProblem(str(netlist), design_vars, tie_groups, corners, circuits, saturation, checks, swing, gain,
        float(spec.get("Delta", 0.2)), x_bounds)
    logger.info("Sizing problem on %s: %d variables, %d corners, %d constraints"%(doc.top, problem.n_vars,
        len(corners), len(problem.constraint_labels())))
    return problem
