from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Tuple
import logging

import numpy as np
from scipy import sparse

from gradnet.analysis.dcanalysis import solve_dc
from gradnet.analysis.newton import NewtonConfig
from gradnet.analysis.sensitivity import GainShortfallLoss, dc_sensitivity, solve_dcac
from gradnet.errors import GradnetError, SolveFailedAtIterate
from gradnet.sizing.sizingproblem import PVTCorner, SizingProblem, TYPICAL

logger = logging.getLogger("gradnet")


@dataclass
class _Point:
    objective : float
    objective_grad : np.ndarray
    constraints : np.ndarray
    jacobian : sparse.csr_matrix


class NLPCallbacks:
    """Objective, constraints (all of the form c(z) >= 0) and their exact derivatives at the
    optimization variables z of a sizing problem.

    One evaluation solves the DC system at every corner, warm started from the previous
    evaluation, plus the two swing cases and the typical AC system. Derivatives come from
    adjoint solves. The last evaluation is cached, so asking for the value and then the
    gradient at the same z costs one pipeline run.
    """

    def __init__(self, problem : SizingProblem, cfg : NewtonConfig = None, threads : int = None):
        self.problem = problem
        self.cfg = cfg or NewtonConfig()
        self.threads = threads
        self.labels = problem.constraint_labels()
        self.evaluations = 0
        self._warm : Dict[Tuple, np.ndarray] = {}
        self._last = None

    @property
    def n(self):
        return self.problem.n_vars

    @property
    def m(self):
        return len(self.labels)

    @property
    def bounds(self):
        return self.problem.bounds()

    def eval_objective(self, z) -> float:
        return self._evaluate(z).objective

    def eval_objective_grad(self, z) -> np.ndarray:
        return self._evaluate(z).objective_grad

    def eval_constraints(self, z) -> np.ndarray:
        return self._evaluate(z).constraints

    def eval_constraint_jacobian(self, z) -> sparse.csr_matrix:
        return self._evaluate(z).jacobian

    def _solve(self, key, circuit, gv):
        """DC solution from the previous solution of the same case, falling back to the
        netlist's initial guess"""
        warm = self._warm.get(key)
        try:
            x = solve_dc(circuit, self.cfg, gv, x0 = warm)
        except GradnetError as e:
            if warm is None:
                raise SolveFailedAtIterate("DC solve of %s failed: %s"%(key[0], e)) from e
            logger.debug("Warm start of %s failed, retrying from the initial guess"%(key[0],))
            try:
                x = solve_dc(circuit, self.cfg, gv)
            except GradnetError as e:
                raise SolveFailedAtIterate("DC solve of %s failed: %s"%(key[0], e)) from e
        self._warm[key] = x
        return x

    def _with_sensitivity(self, circuit, x, gv, values, dx, dgv):
        """Rows and their total derivative with respect to the globals"""
        if not len(values):
            return values, np.zeros((0, len(gv))), x
        total = dgv + np.atleast_2d(dc_sensitivity(circuit, x, dx.T, gv = gv).T)
        return values, total, x

    def _corner_rows(self, corner : PVTCorner, gv):
        problem = self.problem
        circuit = problem.circuits[corner]
        x = self._solve((str(corner),), circuit, gv)

        values, dxs, dgvs = [], [], []
        for check in problem.checks[corner]:
            v, dx, dgv = check.rows(x, gv)
            values.append(v)
            dxs.append(dx)
            dgvs.append(dgv)
        if problem.x_bounds is not None:
            for name in problem.x_bounds.nodes:
                k = circuit.index(name)
                unit = np.zeros(circuit.N)
                unit[k] = 1
                values.append([x[k] - problem.x_bounds.lower, problem.x_bounds.upper - x[k]])
                dxs.append([unit, -unit])
                dgvs.append(np.zeros((2, len(gv))))
        if not values:
            return np.zeros(0), np.zeros((0, len(gv))), x
        return self._with_sensitivity(circuit, x, gv, np.concatenate(values), np.vstack(dxs), np.vstack(dgvs))

    def _swing_rows(self, gv):
        problem = self.problem
        circuit = problem.typical
        k = circuit.index(problem.swing.node)
        values, grads = [], []
        for case, sign, limit in (("down", -1.0, problem.swing.down), ("up", 1.0, problem.swing.up)):
            gv_case = problem.swing_globals(gv, case)
            x = self._solve(("swing " + case,), circuit, gv_case)
            loss = np.zeros(circuit.N)
            loss[k] = sign
            values.append(sign*(x[k] - limit))
            #the swing globals are pinned in this case, so their columns do not reach the design variables
            grads.append(dc_sensitivity(circuit, x, loss, gv = gv_case))
        return np.array(values), np.array(grads)

    def _evaluate(self, z) -> _Point:
        z = np.asarray(z, dtype=float)
        key = z.tobytes()
        if self._last is not None and self._last[0] == key:
            return self._last[1]

        problem = self.problem
        gv = problem.expand(z)
        self.evaluations += 1

        with ThreadPoolExecutor(max_workers = self.threads) as pool:
            results = list(pool.map(lambda corner: self._corner_rows(corner, gv), problem.corners))
        solutions = {corner : r[2] for corner, r in zip(problem.corners, results)}

        values = [r[0] for r in results]
        jacs = [r[1] for r in results]
        if problem.swing is not None:
            v, j = self._swing_rows(gv)
            values.append(v)
            jacs.append(j)
        G = len(gv)
        c = np.concatenate(values) if values else np.zeros(0)
        jac = problem.reduce(np.vstack(jacs)) if jacs else np.zeros((0, problem.n_vars))

        objective, grad = 0.0, np.zeros(problem.n_vars)
        if problem.gain is not None:
            circuit = problem.typical
            x_dc = solutions.get(TYPICAL)
            if x_dc is None:
                x_dc = self._solve((str(TYPICAL),), circuit, gv)
            loss = GainShortfallLoss(circuit.index(problem.gain.node), problem.gain.target_db)
            try:
                result = solve_dcac(circuit, problem.gain.omega, loss, gv, self.cfg, x_dc)
            except GradnetError as e:
                raise SolveFailedAtIterate("AC solve failed: %s"%e) from e
            objective, grad = result.loss, problem.reduce(result.grad.reshape(1, G))[0]

        point = _Point(float(objective), grad, c, sparse.csr_matrix(jac.reshape(len(c), problem.n_vars)))
        self._last = (key, point)
        logger.debug("Evaluation %d: objective %.6g, min constraint %s"%(self.evaluations, point.objective,
            "%.6g"%c.min() if len(c) else "-"))
        return point


def make_callbacks(problem : SizingProblem, cfg : NewtonConfig = None, threads : int = None) -> NLPCallbacks:
    """Callbacks for an optimizer over a built sizing problem.

    Args:
        problem (SizingProblem): result of build_problem
        cfg (NewtonConfig): DC solver settings for every corner solve
        threads (int): worker threads for the corner solves, the executor default when None
    """
    return NLPCallbacks(problem, cfg, threads)
