"""Basic elements and their stamps.

F accumulates the current flowing INTO each node from the element, Q the matching charge
(or flux on a branch row), so the circuit equations read dQ/dt + F = 0. A branch current
unknown (GALV node) always flows from the element's first terminal through the element to
its second terminal.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from gradnet.errors import ArityError, ElementError, UnsupportedAnalysis

DC = "DC"
TRAN = "TRAN"
AC = "AC"
ANALYSES = (DC, TRAN, AC)

GND = -1 #datum marker, never an unknown


@dataclass
class LocalStamp:
    """Dense stamp over the element's own nodes and params"""
    Q : np.ndarray
    F : np.ndarray
    dQ_dx : np.ndarray
    dF_dx : np.ndarray
    dQ_dp : np.ndarray
    dF_dp : np.ndarray

    @classmethod
    def zeros(cls, k, n, dtype = float):
        return cls(*[np.zeros(shape, dtype=dtype) for shape in (k, k, (k, k), (k, k), (k, n), (k, n))])


class Element(ABC):
    """A basic element kind. Concrete kinds set the port and parameter lists and implement the
    stamp for every analysis."""

    name : str = None
    ports : Tuple[str, ...] = ()
    params : Tuple[str, ...] = ()
    optional : Dict[str, float] = {}
    needs_galv = False
    supports_galv = False

    def param_names(self) -> List[str]:
        return list(self.params) + list(self.optional)

    def defaults(self) -> Dict[str, float]:
        return dict(self.optional)

    def n_nodes(self, galv : bool) -> int:
        return len(self.ports) + (1 if galv else 0)

    def local(self, analysis : str, x : np.ndarray, p : np.ndarray, galv : bool = False) -> LocalStamp:
        if analysis not in ANALYSES:
            raise UnsupportedAnalysis("Unknown analysis %s"%analysis)
        if self.needs_galv and not galv:
            raise UnsupportedAnalysis("%s requires a GALV node"%self.name)
        if len(x) != self.n_nodes(galv):
            raise ArityError("%s expects %d nodes, got %d"%(self.name, self.n_nodes(galv), len(x)))
        if len(p) != len(self.param_names()):
            raise ArityError("%s expects %d params, got %d"%(self.name, len(self.param_names()), len(p)))
        stamp = LocalStamp.zeros(len(x), len(p), np.result_type(x, p))
        self._stamp(stamp, analysis, x, p, galv)
        return stamp

    @abstractmethod
    def _stamp(self, s : LocalStamp, analysis, x, p, galv):
        """Fill the zero-initialized stamp s in place"""

    def __repr__(self):
        return "Element(%s)"%self.name


class Resistor(Element):
    name = "resistor"
    ports = ("left", "right")
    params = ("resistance",)
    supports_galv = True

    def _stamp(self, s, analysis, x, p, galv):
        R = p[0]
        if galv:
            xi = x[2]
            s.F[:] = [-xi, xi, x[1]-x[0]+R*xi]
            s.dF_dx[0, 2], s.dF_dx[1, 2] = -1, 1
            s.dF_dx[2] = [-1, 1, R]
            s.dF_dp[2, 0] = xi
            return

        if R == 0:
            raise ElementError("Zero resistance needs a GALV node")
        v = x[0]-x[1]
        g = 1/R #infinite resistance gives g=0, the element only keeps nodes connected
        s.F[:] = [-v*g, v*g]
        s.dF_dx[:] = [[-g, g], [g, -g]]
        s.dF_dp[:, 0] = [v*g*g, -v*g*g]


class Capacitor(Element):
    name = "capacitor"
    ports = ("input", "output")
    params = ("capacitance",)
    supports_galv = True

    def _stamp(self, s, analysis, x, p, galv):
        C = p[0]
        v = x[0]-x[1]
        if galv:
            #branch row: d(-C v)/dt + i = 0
            xi = x[2]
            s.F[:] = [-xi, xi, xi]
            s.dF_dx[:, 2] = [-1, 1, 1]
            s.Q[2] = -C*v
            s.dQ_dx[2, :2] = [-C, C]
            s.dQ_dp[2, 0] = -v
            return

        s.Q[:] = [-C*v, C*v]
        s.dQ_dx[:] = [[-C, C], [C, -C]]
        s.dQ_dp[:, 0] = [-v, v]


class Inductor(Element):
    name = "inductor"
    ports = ("input", "output")
    params = ("inductance",)
    needs_galv = True
    supports_galv = True

    def _stamp(self, s, analysis, x, p, galv):
        L = p[0]
        xi = x[2]
        s.F[:] = [-xi, xi, x[1]-x[0]]
        s.dF_dx[0, 2], s.dF_dx[1, 2] = -1, 1
        s.dF_dx[2, :2] = [-1, 1]
        s.Q[2] = L*xi
        s.dQ_dx[2, 2] = L
        s.dQ_dp[2, 0] = xi


class CurrentSource(Element):
    name = "CS"
    ports = ("input", "output")
    params = ("current",)
    optional = {"ac" : 0.0}
    supports_galv = True

    def _stamp(self, s, analysis, x, p, galv):
        k = 1 if analysis == AC else 0
        I = p[k]
        if galv:
            xi = x[2]
            s.F[:] = [-xi, xi, xi+I]
            s.dF_dx[:, 2] = [-1, 1, 1]
            s.dF_dp[2, k] = 1
            return
        s.F[:] = [I, -I]
        s.dF_dp[:, k] = [1, -1]


class VoltageSource(Element):
    """voltage = V(input) - V(output)"""

    name = "VS"
    ports = ("input", "output")
    params = ("voltage",)
    optional = {"ac" : 0.0}
    needs_galv = True
    supports_galv = True

    def _stamp(self, s, analysis, x, p, galv):
        k = 1 if analysis == AC else 0
        xi = x[2]
        s.F[:] = [-xi, xi, x[1]-x[0]+p[k]]
        s.dF_dx[0, 2], s.dF_dx[1, 2] = -1, 1
        s.dF_dx[2, :2] = [-1, 1]
        s.dF_dp[2, k] = 1


class VCCS(Element):
    name = "VCCS"
    ports = ("left", "right", "input", "output")
    params = ("MF",)

    def _active(self, analysis):
        return True

    def _stamp(self, s, analysis, x, p, galv):
        if not self._active(analysis):
            return
        MF = p[0]
        v = x[0]-x[1]
        s.F[2], s.F[3] = -MF*v, MF*v
        s.dF_dx[2, :2] = [-MF, MF]
        s.dF_dx[3, :2] = [MF, -MF]
        s.dF_dp[2:, 0] = [-v, v]


class ACVCCS(VCCS):
    """Small-signal transconductance, stamped only in AC"""

    name = "ACVCCS"

    def _active(self, analysis):
        return analysis == AC


class CCCS(Element):
    name = "CCCS"
    ports = ("iorigin", "input", "output")
    params = ("MF",)

    def _stamp(self, s, analysis, x, p, galv):
        MF = p[0]
        s.F[1], s.F[2] = -MF*x[0], MF*x[0]
        s.dF_dx[1, 0], s.dF_dx[2, 0] = -MF, MF
        s.dF_dp[1:, 0] = [-x[0], x[0]]


class VCVS(Element):
    """V(input) - V(output) = MF*(V(left) - V(right))"""

    name = "VCVS"
    ports = ("left", "right", "input", "output")
    params = ("MF",)
    needs_galv = True
    supports_galv = True

    def _stamp(self, s, analysis, x, p, galv):
        MF = p[0]
        xi = x[4]
        s.F[2], s.F[3] = -xi, xi
        s.F[4] = x[3]-x[2]+MF*(x[0]-x[1])
        s.dF_dx[2, 4], s.dF_dx[3, 4] = -1, 1
        s.dF_dx[4, :4] = [MF, -MF, -1, 1]
        s.dF_dp[4, 0] = x[0]-x[1]


class CCVS(Element):
    """V(input) - V(output) = MF*I(iorigin)"""

    name = "CCVS"
    ports = ("iorigin", "input", "output")
    params = ("MF",)
    needs_galv = True
    supports_galv = True

    def _stamp(self, s, analysis, x, p, galv):
        MF = p[0]
        xi = x[3]
        s.F[1], s.F[2] = -xi, xi
        s.F[3] = x[2]-x[1]+MF*x[0]
        s.dF_dx[1, 3], s.dF_dx[2, 3] = -1, 1
        s.dF_dx[3, :3] = [MF, -1, 1]
        s.dF_dp[3, 0] = x[0]


class ICS(Element):
    """Current source with separate large-signal (dc) and small-signal (ac) values"""

    name = "ICS"
    ports = ("input", "output")
    params = ("dc", "ac")

    def _stamp(self, s, analysis, x, p, galv):
        k = 1 if analysis == AC else 0
        s.F[:] = [p[k], -p[k]]
        s.dF_dp[:, k] = [1, -1]


CATALOG = {kind.name : kind for kind in (
    Resistor(), Capacitor(), Inductor(), CurrentSource(), VoltageSource(),
    VCCS(), CCCS(), VCVS(), CCVS(), ICS(), ACVCCS())}


def catalog() -> List[Element]:
    return list(CATALOG.values())


def get_element(name : str) -> Element:
    return CATALOG[name]


def gather(x : np.ndarray, nodes : Sequence[int]) -> np.ndarray:
    """x[nodes] with the datum marker read as 0"""
    nodes = np.asarray(nodes, dtype=int)
    out = np.zeros(len(nodes), dtype=np.result_type(x, float))
    mask = nodes != GND
    out[mask] = x[nodes[mask]]
    return out


def stamp(kind, analysis : str, nodes : Sequence[int], params : Sequence[float], x : np.ndarray, galv : bool = False):
    """Stamp one element at global node indices. Returns a SparseContribution whose param
    columns are the element's own param positions."""

    from gradnet.framework.sparsecontribution import SparseContribution

    if isinstance(kind, str):
        kind = CATALOG[kind]
    galv = galv or kind.needs_galv
    params = list(params)
    if len(params) == len(kind.params):
        params += list(kind.optional.values())
    if len(nodes) != kind.n_nodes(galv):
        raise ArityError("%s expects %d nodes, got %d"%(kind.name, kind.n_nodes(galv), len(nodes)))

    local = kind.local(analysis, gather(x, nodes), np.asarray(params, dtype=float), galv)
    contribution = SparseContribution()
    contribution.add_local(nodes, local, range(len(params)))
    return contribution
