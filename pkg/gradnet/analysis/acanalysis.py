from dataclasses import dataclass
from typing import Sequence
import logging

import numpy as np
from scipy import sparse

from gradnet.analysis.newton import factorize, lu_solve
from gradnet.analysis.results import ACSweep
from gradnet.framework.compiledcircuit import CompiledCircuit
from gradnet.primitives.element import AC

logger = logging.getLogger("gradnet")


@dataclass
class ACSystem:
    """(i w dQ/dx + dF/dx) eps_x = b_rhs at a DC bias point"""

    A : sparse.csc_matrix
    b_rhs : np.ndarray
    omega : float
    eps_x : np.ndarray
    x_dc : np.ndarray
    lu : object = None


@dataclass
class ACLinearization:
    """The frequency independent pieces of the AC system. Every element is linear in the
    small signal, so one AC-build evaluation at zero signal gives all of them."""

    dQ_dx : sparse.csr_matrix
    dF_dx : sparse.csr_matrix
    Q0 : np.ndarray
    F0 : np.ndarray

    def matrix(self, omega):
        return sparse.csc_matrix(1j*omega*self.dQ_dx + self.dF_dx)

    def rhs(self, omega):
        return -(1j*omega*self.Q0 + self.F0)


def linearize(circuit : CompiledCircuit, x_dc : np.ndarray, gv = None) -> ACLinearization:
    zero = np.zeros(circuit.N, dtype=complex)
    res = circuit.eval(zero, AC, gv, x_bias = x_dc)
    return ACLinearization(res.dQ_dx, res.dF_dx, res.Q, res.F)


def solve_ac(circuit : CompiledCircuit, x_dc : np.ndarray, omega : float, gv = None, lin : ACLinearization = None) -> ACSystem:
    """Solve the small-signal system at angular frequency omega around x_dc"""

    lin = lin or linearize(circuit, x_dc, gv)
    A = lin.matrix(omega)
    b = lin.rhs(omega)
    lu = factorize(A, circuit.names)
    eps = lu_solve(lu, b)
    return ACSystem(A, b, omega, eps, np.asarray(x_dc, dtype=float), lu)


def frequency_grid(fstart : float, fstop : float, points_per_decade : int) -> np.ndarray:
    """Logarithmic grid including both ends"""
    decades = np.log10(fstop/fstart)
    n = max(int(np.ceil(decades*points_per_decade - 1e-9)), 1) + 1
    return np.logspace(np.log10(fstart), np.log10(fstop), n)


def ac_sweep(circuit : CompiledCircuit, x_dc : np.ndarray, freqs : Sequence[float], gv = None) -> ACSweep:
    lin = linearize(circuit, x_dc, gv)
    freqs = np.asarray(freqs, dtype=float)
    solutions = np.empty((len(freqs), circuit.N), dtype=complex)
    logger.info("AC sweep of %s over %d points"%(circuit.doc.top, len(freqs)))
    for k, f in enumerate(freqs):
        solutions[k] = solve_ac(circuit, x_dc, 2*np.pi*f, gv, lin).eps_x
    return ACSweep(freqs, solutions, list(circuit.names))
