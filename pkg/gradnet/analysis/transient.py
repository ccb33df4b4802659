from dataclasses import dataclass
from typing import Optional
import logging

import numpy as np

from gradnet.analysis.dcanalysis import solve_dc
from gradnet.analysis.newton import Newton, NewtonConfig
from gradnet.analysis.results import Trajectory
from gradnet.errors import NoConvergence, SingularJacobian, SolverError
from gradnet.framework.compiledcircuit import CompiledCircuit
from gradnet.framework.graph import SOLVE_ONLY
from gradnet.primitives.element import TRAN

logger = logging.getLogger("gradnet")

BACKWARD_EULER = 1.0
TRAPEZOIDAL = 0.5


@dataclass
class TransientStepContext:
    """Integrator state. Each step solves Q(x)/(beta dt) + F(x) + b = 0 where the history b
    is built from the previous charge and charge derivative."""

    dt : float
    beta : float = BACKWARD_EULER
    history : Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise SolverError("Time step must be positive")
        if self.beta not in (BACKWARD_EULER, TRAPEZOIDAL):
            raise SolverError("beta must be 1 (backward Euler) or 0.5 (trapezoidal)")

    def update_history(self, Q_n, qdot_n):
        self.history = -Q_n/(self.beta*self.dt) - ((1-self.beta)/self.beta)*qdot_n
        return self.history

    def qdot(self, Q_next, Q_n, qdot_n):
        return (Q_next - Q_n)/(self.beta*self.dt) - ((1-self.beta)/self.beta)*qdot_n


def solve_tran(circuit : CompiledCircuit, t_end : float, ctx : TransientStepContext, cfg : NewtonConfig = None,
        gv = None, x0 = None) -> Trajectory:
    """Fixed-step integration from x0 (by default the DC solution) up to t_end. Submodels
    not active in TRAN read x0 instead of the current state.

    Raises:
        NoConvergence, SingularJacobian: a step failed, annotated with its time
    """

    cfg = cfg or NewtonConfig()
    if x0 is None:
        x0 = solve_dc(circuit, cfg, gv)
    x = np.array(x0, dtype=float)
    #submodels inactive in TRAN stay at their values at the starting point
    bias = x.copy()

    start = circuit.eval(x, TRAN, gv, bias, SOLVE_ONLY)
    Q_n = start.Q
    dynamic = (abs(start.dQ_dx).sum(axis=1).A.ravel() > 0) | (Q_n != 0)
    qdot_n = np.where(dynamic, -start.F, 0.0)

    steps = int(round(t_end/ctx.dt))
    times = [0.0]
    states = [x.copy()]
    scale = 1/(ctx.beta*ctx.dt)
    logger.info("Transient analysis of %s: %d steps of %g s, beta %g"%(circuit.doc.top, steps, ctx.dt, ctx.beta))

    for n in range(1, steps+1):
        t = n*ctx.dt
        b = ctx.update_history(Q_n, qdot_n)

        def residual(x):
            res = circuit.eval(x, TRAN, gv, bias, SOLVE_ONLY)
            return scale*res.Q + res.F + b, scale*res.dQ_dx + res.dF_dx

        try:
            x = Newton(residual, cfg, circuit.names).solve(x).x
        except NoConvergence as e:
            raise NoConvergence(e.message, e.iterations, e.residual, t) from e
        except SingularJacobian as e:
            e.message = "%s at t=%g"%(e.message, t)
            e.args = (e.message,)
            raise

        Q_next = circuit.eval(x, TRAN, gv, bias, SOLVE_ONLY).Q
        qdot_n = ctx.qdot(Q_next, Q_n, qdot_n)
        Q_n = Q_next
        times.append(t)
        states.append(x.copy())

    return Trajectory(np.array(times), np.array(states).reshape(len(times), circuit.N), list(circuit.names))
