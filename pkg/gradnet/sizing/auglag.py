"""Augmented Lagrangian solver for min f(z) s.t. c(z) >= 0, lower <= z <= upper.

Inequalities enter through the Powell-Hestenes-Rockafellar term

    L(z; lam, rho) = f(z) + 1/(2 rho) * sum(max(0, lam - rho*c(z))^2 - lam^2)

which is minimized over the box with L-BFGS-B in variables scaled to [0, 1]. After each inner
solve the multipliers are updated to max(0, lam - rho*c) and the penalty grows when the
violation did not drop by a factor of four.
"""

from dataclasses import dataclass, field
from typing import Dict, List
import logging

import numpy as np
from scipy.optimize import minimize

from gradnet.errors import SolveFailedAtIterate
from gradnet.sizing.nlpcallbacks import NLPCallbacks

logger = logging.getLogger("gradnet")

OPTIMAL = "Optimal"
MAX_ITER = "MaxIter"
INFEASIBLE = "Infeasible"
EVAL_FAILURE = "EvalFailure"


@dataclass
class AugLagOptions:
    tol : float = 1e-6
    max_outer : int = 50
    penalty0 : float = 10.0
    penalty_growth : float = 10.0
    penalty_max : float = 1e10
    inner_maxiter : int = 200
    max_rejections : int = 4 #shrinks of the step box after failed evaluations


@dataclass
class SizingResult:
    p_opt : Dict[str, float]
    z : np.ndarray
    status : str
    iterations : int
    constraint_violation : float
    objective : float
    multipliers : np.ndarray = None
    history : List[dict] = field(default_factory=list)

    def plot_history(self, ax = None):
        """Objective, violation and penalty against the outer iteration"""
        from matplotlib import pyplot as plt

        if ax is None:
            _, ax = plt.subplots()
        it = [h["iteration"] for h in self.history]
        floor = lambda values: [max(v, 1e-16) for v in values]
        ax.semilogy(it, floor([h["objective"] for h in self.history]), "o-", label = "objective")
        ax.semilogy(it, floor([h["violation"] for h in self.history]), "s-", label = "violation")
        ax.semilogy(it, [h["penalty"] for h in self.history], "--", label = "penalty")
        ax.set_xlabel("outer iteration")
        ax.legend()
        return ax


class _Rejected(Exception):
    pass


def _violation(c):
    return float(max(0.0, -c.min())) if len(c) else 0.0


def optimize(callbacks : NLPCallbacks, opts : AugLagOptions = None, z0 = None) -> SizingResult:
    """Run the augmented Lagrangian loop from z0 (the problem's initial point by default).
    Numerical trouble is reported through the result status, never raised."""

    opts = opts or AugLagOptions()
    lower, upper = (np.asarray(b, dtype=float) for b in callbacks.bounds)
    span = np.where(upper > lower, upper - lower, 1.0)
    fixed = upper <= lower

    z0 = callbacks.problem.initial() if z0 is None else np.asarray(z0, dtype=float)
    u = np.where(fixed, 0.0, (np.clip(z0, lower, upper) - lower)/span)
    unscale = lambda u: np.where(fixed, lower, lower + span*u)

    def result(status, u, lam, k, history):
        z = unscale(u)
        try:
            f, c = callbacks.eval_objective(z), callbacks.eval_constraints(z)
        except SolveFailedAtIterate:
            f, c = np.nan, np.full(callbacks.m, np.nan)
        logger.info("Sizing finished: %s after %d iterations"%(status, k))
        return SizingResult(callbacks.problem.design_values(z), z, status, k, _violation(c), float(f), lam, history)

    try:
        callbacks.eval_objective(unscale(u))
    except SolveFailedAtIterate as e:
        logger.warning("Initial point cannot be evaluated: %s"%e)
        return result(EVAL_FAILURE, u, np.zeros(callbacks.m), 0, [])

    lam = np.zeros(callbacks.m)
    rho = opts.penalty0
    viol_prev = _violation(callbacks.eval_constraints(unscale(u)))
    history = []

    def merit(u, lam, rho):
        z = unscale(u)
        try:
            f = callbacks.eval_objective(z)
            df = callbacks.eval_objective_grad(z)
            c = callbacks.eval_constraints(z)
            J = callbacks.eval_constraint_jacobian(z)
        except SolveFailedAtIterate as e:
            raise _Rejected(str(e))
        shifted = np.maximum(0.0, lam - rho*c)
        value = f + (shifted @ shifted - lam @ lam)/(2*rho)
        grad = (df - J.T @ shifted)*span
        return value, np.where(fixed, 0.0, grad)

    for k in range(1, opts.max_outer+1):
        try:
            start = merit(u, lam, rho)[0]
        except _Rejected:
            return result(EVAL_FAILURE, u, lam, k-1, history)
        box = [(0.0, 0.0) if fx else (0.0, 1.0) for fx in fixed]
        radius = 1.0
        for _ in range(opts.max_rejections+1):
            try:
                inner = minimize(merit, u, args = (lam, rho), jac = True, method = "L-BFGS-B", bounds = box,
                    options = {"maxiter" : opts.inner_maxiter, "gtol" : 0.1*opts.tol, "ftol" : 1e-15})
                break
            except _Rejected as e:
                radius /= 4
                box = [(0.0, 0.0) if fx else (max(0.0, ui-radius), min(1.0, ui+radius)) for ui, fx in zip(u, fixed)]
                logger.warning("Evaluation failed inside the inner solve (%s), step box shrunk to %g"%(e, radius))
        else:
            return result(EVAL_FAILURE, u, lam, k, history)

        if not inner.success:
            logger.warning("Inner solve stopped early: %s"%inner.message)

        u_new = np.clip(inner.x, 0.0, 1.0)
        z = unscale(u_new)
        try:
            f, df = callbacks.eval_objective(z), callbacks.eval_objective_grad(z)
            c, J = callbacks.eval_constraints(z), callbacks.eval_constraint_jacobian(z)
        except SolveFailedAtIterate:
            return result(EVAL_FAILURE, u, lam, k, history)
        viol = _violation(c)
        lam = np.maximum(0.0, lam - rho*c)

        #projected gradient of the Lagrangian with the updated multipliers
        g = np.where(fixed, 0.0, (df - J.T @ lam)*span)
        g = np.where((u_new <= 0) & (g > 0), 0.0, g)
        g = np.where((u_new >= 1) & (g < 0), 0.0, g)
        kkt = float(np.abs(g).max()) if len(g) else 0.0

        step = float(np.abs(u_new - u).max()) if len(u) else 0.0
        history.append({"iteration" : k, "objective" : float(f), "violation" : viol, "merit_start" : float(start),
            "merit" : float(inner.fun), "penalty" : rho, "kkt" : kkt, "step" : step})
        logger.info("Sizing iteration %d: objective %.6g, violation %.3g, penalty %.3g, kkt %.3g"%(k, f, viol, rho, kkt))
        u = u_new

        if viol <= opts.tol and (kkt <= opts.tol or (step == 0 and inner.success)):
            return result(OPTIMAL, u, lam, k, history)
        if viol > opts.tol:
            if rho >= opts.penalty_max:
                return result(INFEASIBLE, u, lam, k, history)
            if viol > 0.25*viol_prev:
                rho = min(rho*opts.penalty_growth, opts.penalty_max)
        viol_prev = viol

    return result(MAX_ITER, u, lam, opts.max_outer, history)
