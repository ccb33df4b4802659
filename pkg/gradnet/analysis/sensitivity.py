"""Adjoint sensitivities.

DC: for a converged F(x, p) = 0 and a loss l(x), dl/dp = -(dF/dp)^T lambda with
(dF/dx)^T lambda = dl/dx, one transposed solve for any number of parameters.

Linear solves: for A(theta) v = b(theta) and a real loss l(v), solve A^H w = dl/dv once and
dl/dtheta = Re(w^H (db/dtheta - dA/dtheta v)). For complex v, dl/dv is the Wirtinger form
dl/dRe(v) + i dl/dIm(v).
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union
import logging

import numpy as np
from scipy import sparse

from gradnet.analysis.acanalysis import solve_ac
from gradnet.analysis.dcanalysis import solve_dc
from gradnet.analysis.newton import NewtonConfig, factorize, lu_solve
from gradnet.errors import CompileError, SchemaError, SingularMatrix
from gradnet.framework import graph
from gradnet.framework.compiledcircuit import CompiledCircuit
from gradnet.framework.graph import GradientFlags
from gradnet.primitives.element import AC, DC

logger = logging.getLogger("gradnet")

LN10 = np.log(10)

#a global name or an (instance path, input param name) pair
Target = Union[str, Tuple[str, str]]


def dc_sensitivity(circuit : CompiledCircuit, x : np.ndarray, loss_grad, targets : Sequence[Target] = None, gv = None) -> np.ndarray:
    """Gradient of a loss of the DC solution with respect to global variables or to the input
    params of a hierarchical instance.

    Args:
        circuit (CompiledCircuit): the circuit
        x (ndarray): a converged DC solution
        loss_grad (ndarray): dl/dx, shape (N,) or (N, m) for m losses at once
        targets (list): global names, or (instance path, input param name) pairs; all globals
            by default. An instance target treats the input param as a free value shifting
            only that instance, with the expression its caller binds held fixed.
        gv (ndarray): global values x was solved with

    Returns:
        ndarray: shape (len(targets),) or (len(targets), m)
    """

    gv = circuit.globals if gv is None else np.asarray(gv, dtype=float)
    res = circuit.eval(x, DC, gv, flags = GradientFlags(wrt_x = True, wrt_gv = True, wrt_ip = False))
    lam = lu_solve(factorize(res.dF_dx, circuit.names), np.asarray(loss_grad, dtype=float), trans = "T")
    if targets is None:
        targets = circuit.global_names

    dF_dgv = res.dF_dgv.tocsc()
    cols = []
    for target in targets:
        if isinstance(target, str):
            cols.append(dF_dgv[:, circuit.global_index(target)])
        else:
            cols.append(instance_param_column(circuit, x, gv, *target))
    dF_dp = sparse.hstack(cols, format="csr") if cols else sparse.csr_matrix((circuit.N, 0))
    return -(dF_dp.T @ lam)


def instance_param_column(circuit : CompiledCircuit, x : np.ndarray, gv, path : str, name : str) -> sparse.csc_matrix:
    """dF/dip of one input param of the instance at path, as an (N, 1) column"""
    try:
        inst, nodes, ip_exprs = circuit.locate(path)
    except CompileError:
        raise SchemaError("No instance %s"%path)
    if name not in inst.rule.input_params:
        raise SchemaError("Instance %s has no input param %s"%(path, name))

    ip = [p.evaluate(x, gv)[0] for p in ip_exprs]
    res = graph.eval(x, inst, nodes[:inst.rule.n_ext], ip, DC, gv, flags = GradientFlags(wrt_x = False, wrt_gv = False, wrt_ip = True))
    return res.dF_dip.tocsc()[:, inst.rule.input_params.index(name)]


def linear_solution_backprop(A, b_rhs, v, dldv, dA_dx : Union[List, Callable] = None, db_dx = None, lu = None) -> np.ndarray:
    """Gradient of a real loss of the solution v of A v = b with respect to parameters x that
    A and b depend on.

    Args:
        A (sparse matrix): system matrix, real or complex
        b_rhs (ndarray): right-hand side (unused when lu is given, kept for the call shape)
        v (ndarray): the solution
        dldv (ndarray): loss gradient with respect to v (Wirtinger form when complex)
        dA_dx: either a list of K matrices dA/dx_k, or a callable mapping v to the N x K
            matrix whose column k is dA/dx_k v
        db_dx: N x K matrix of db/dx_k, or None when b does not depend on x
        lu: an existing factorization of A

    Returns:
        ndarray: dl/dx, length K, real
    """

    if lu is None:
        lu = factorize(A, error = SingularMatrix)
    w = lu_solve(lu, np.asarray(dldv, dtype=np.result_type(dldv, A.dtype)), trans = "H")

    if dA_dx is None:
        action = None
    elif callable(dA_dx):
        action = dA_dx(v)
    else:
        action = np.column_stack([np.asarray(M @ v).ravel() for M in dA_dx]) if len(dA_dx) else None

    if db_dx is None and action is None:
        return np.zeros(0)
    if db_dx is None:
        total = -action
    elif action is None:
        total = db_dx
    else:
        total = db_dx - action
    return np.real(np.asarray(total.T @ np.conj(w)).ravel())


class Loss(ABC):
    """A real loss of one solution vector, with its gradient in Wirtinger form"""

    @abstractmethod
    def value(self, v : np.ndarray) -> float:
        pass

    @abstractmethod
    def grad(self, v : np.ndarray) -> np.ndarray:
        pass


class NodeValueLoss(Loss):
    """l = x[k], for DC sensitivities"""

    def __init__(self, index : int):
        self.index = index

    def value(self, v):
        return float(np.real(v[self.index]))

    def grad(self, v):
        g = np.zeros(len(v))
        g[self.index] = 1
        return g


class NodeGainLoss(Loss):
    """l = 20 log10 |v[k]|"""

    def __init__(self, index : int):
        self.index = index

    def value(self, v):
        return 20*np.log10(abs(v[self.index]))

    def grad(self, v):
        g = np.zeros(len(v), dtype=complex)
        vk = v[self.index]
        g[self.index] = 20/LN10*vk/abs(vk)**2
        return g


class GainShortfallLoss(Loss):
    """l = max(target_db/20 - log10 |v[k]|, 0)^2, zero once the gain reaches the target"""

    def __init__(self, index : int, target_db : float):
        self.index = index
        self.target_db = target_db

    def shortfall(self, v):
        return max(self.target_db/20 - np.log10(abs(v[self.index])), 0.0)

    def value(self, v):
        return self.shortfall(v)**2

    def grad(self, v):
        g = np.zeros(len(v), dtype=complex)
        vk = v[self.index]
        #d|v|/dv in Wirtinger form is v/|v|
        dl_dmag = -2*self.shortfall(v)/(abs(vk)*LN10)
        g[self.index] = dl_dmag*vk/abs(vk)
        return g


@dataclass
class DCACResult:
    x_dc : np.ndarray
    eps_x : np.ndarray
    loss : float
    grad : np.ndarray #with respect to every global variable


def solve_dcac(circuit : CompiledCircuit, omega : float, loss : Loss, gv = None, cfg : NewtonConfig = None,
        x_dc : np.ndarray = None) -> DCACResult:
    """DC solve, AC solve at omega, and the gradient of a loss of the AC solution with respect
    to all globals, including the part that acts through the DC bias point.

    The AC residual R(v) = i w Q(v) + F(v) of an AC-build evaluation at signal v is affine in v,
    with A v - b = R(v). Its parameter and bias Jacobians give dA/dtheta v - db/dtheta without
    second derivatives of Q or F.
    """

    gv = circuit.globals if gv is None else np.asarray(gv, dtype=float)
    if x_dc is None:
        x_dc = solve_dc(circuit, cfg, gv)
    system = solve_ac(circuit, x_dc, omega, gv)
    v = system.eps_x

    def jacobians(signal):
        res = circuit.eval(signal, AC, gv, x_bias = x_dc, flags = GradientFlags(wrt_x = True, wrt_gv = True, wrt_ip = False))
        return sparse.hstack([1j*omega*res.dQ_dgv + res.dF_dgv, 1j*omega*res.dQ_dxb + res.dF_dxb]).tocsr()

    at_zero = jacobians(np.zeros(circuit.N, dtype=complex))
    grad = linear_solution_backprop(system.A, system.b_rhs, v, loss.grad(v),
        dA_dx = lambda v: jacobians(v) - at_zero, db_dx = -at_zero, lu = system.lu)

    n_gv = len(gv)
    direct, through_bias = grad[:n_gv], grad[n_gv:]
    total = direct + dc_sensitivity(circuit, x_dc, through_bias, gv = gv) if circuit.N else direct
    value = loss.value(v)
    logger.info("DCAC loss %.6g at omega %g"%(value, omega))
    return DCACResult(x_dc, v, value, total)
