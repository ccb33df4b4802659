import logging

import numpy as np

from gradnet.analysis.newton import Newton, NewtonConfig, NewtonResult
from gradnet.framework.compiledcircuit import CompiledCircuit
from gradnet.framework.graph import SOLVE_ONLY
from gradnet.primitives.element import DC

logger = logging.getLogger("gradnet")


def operating_point(circuit : CompiledCircuit, cfg : NewtonConfig = None, gv = None, x0 = None) -> NewtonResult:
    """Newton solve of F(x) = 0 under DC, with iteration statistics"""

    cfg = cfg or NewtonConfig()
    if x0 is None:
        x0 = cfg.initial_x if cfg.initial_x is not None else circuit.initial_guess()

    def residual(x):
        res = circuit.eval(x, DC, gv, flags = SOLVE_ONLY)
        return res.F, res.dF_dx

    logger.info("DC analysis of %s"%circuit.doc.top)
    return Newton(residual, cfg, circuit.names).solve(x0)


def solve_dc(circuit : CompiledCircuit, cfg : NewtonConfig = None, gv = None, x0 = None) -> np.ndarray:
    """The DC solution vector, indexed like circuit.names"""
    return operating_point(circuit, cfg, gv, x0).x
