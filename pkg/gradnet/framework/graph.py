"""Graph executor. Each subcircuit instance is a compute unit: the forward pass evaluates its
submodel, calls its children and stamps its elements; the backward pass maps the children's
input-param gradients back through the instance's param frame [ip, intrp, gv, c]:

    c      dropped
    ip     routed to the caller as this instance's input-param gradient
    gv     routed to the global-variable gradient
    intrp  expanded through the submodel Jacobians,
           d/dx[nodes] += g (x) J_s[l, :],  d/dip += g (x) J_ip[l, :]
"""

from dataclasses import dataclass
from typing import Optional, Sequence
import logging

import numpy as np
from scipy import sparse

from gradnet.errors import GradnetError, GraphError
from gradnet.framework.sparsecontribution import SparseContribution
from gradnet.framework.subcircuitinstance import SubcircuitInstance
from gradnet.primitives.element import AC, GND, gather

logger = logging.getLogger("gradnet")


@dataclass(frozen=True)
class GradientFlags:
    """Which gradients eval materializes. Signal Jacobians are always accumulated."""
    wrt_x : bool = True
    wrt_gv : bool = True
    wrt_ip : bool = True

SOLVE_ONLY = GradientFlags(wrt_x=True, wrt_gv=False, wrt_ip=False)


@dataclass
class EvalResult:
    Q : np.ndarray
    F : np.ndarray
    dQ_dx : Optional[sparse.csr_matrix] = None
    dF_dx : Optional[sparse.csr_matrix] = None
    dQ_dxb : Optional[sparse.csr_matrix] = None
    dF_dxb : Optional[sparse.csr_matrix] = None
    dQ_dgv : Optional[sparse.csr_matrix] = None
    dF_dgv : Optional[sparse.csr_matrix] = None
    dQ_dip : Optional[sparse.csr_matrix] = None
    dF_dip : Optional[sparse.csr_matrix] = None


def _join(parts):
    if not parts:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0)
    return tuple(np.concatenate(arrays) for arrays in zip(*parts))


class _Executor:

    def __init__(self, x, x_bias, analysis, gv, flags):
        self.x = x
        self.x_bias = x_bias
        self.analysis = analysis
        self.gv = np.asarray(gv, dtype=float)
        self.flags = flags
        self.acc = SparseContribution()

    def call(self, inst : SubcircuitInstance, en, ip, keep_ip = True):
        """Evaluate one instance. Remainders, signal and global gradients go straight into the
        shared accumulator; the gradients with respect to ip are returned as triplets, empty
        when keep_ip is False."""

        rule = inst.rule
        nodes = np.concatenate([np.asarray(en, dtype=int), inst.internal_nodes, [GND]]).astype(int)
        _, a, b, c, _ = rule.offsets()

        ev = None
        use_bias = False
        if rule.submodel is not None:
            sm = rule.submodel
            use_bias = self.x_bias is not None and (self.analysis == AC or not sm.active(self.analysis))
            signals = gather(self.x_bias if use_bias else self.x, nodes)
            try:
                ev = sm.eval(signals, ip)
            except GradnetError as e:
                raise GraphError(inst.path or "<top>", e) from e
            intrp = ev.intrp
        else:
            intrp = np.zeros(0)

        params = np.concatenate([ip, intrp, self.gv[rule.global_var_indices], rule.constants])

        #gradients over the param frame, collected from children and elements
        frame_q, frame_f = [], []
        for info, child in zip(rule.subckts_info, inst.subckts):
            (qr, qc, qv), (fr, fc, fv) = self.call(child, nodes[info.nodes], params[info.params])
            frame_q.append((qr, info.params[qc], qv))
            frame_f.append((fr, info.params[fc], fv))

        for info in rule.basic_element_info:
            enodes = nodes[info.nodes]
            try:
                local = info.kind.local(self.analysis, gather(self.x, enodes), params[info.params], info.galv)
            except GradnetError as e:
                path = info.name if not inst.path else inst.path + "." + info.name
                raise GraphError(path, e) from e
            self.acc.add_local(enodes, local)

            keep = enodes != GND
            r, col = np.meshgrid(enodes[keep], info.params, indexing="ij")
            frame_q.append((r.ravel(), col.ravel(), local.dQ_dp[keep].ravel()))
            frame_f.append((r.ravel(), col.ravel(), local.dF_dp[keep].ravel()))

        return (self._backprop(rule, nodes, ev, use_bias, _join(frame_q), "Q", a, b, c, keep_ip),
                self._backprop(rule, nodes, ev, use_bias, _join(frame_f), "F", a, b, c, keep_ip))

    def _backprop(self, rule, nodes, ev, use_bias, triplets, which, a, b, c, keep_ip):
        rows, cols, vals = triplets
        out = []

        mask = cols < a
        if keep_ip:
            out.append((rows[mask], cols[mask], vals[mask]))

        mask = (cols >= a) & (cols < b)
        if ev is not None and mask.any():
            g_rows, g_l, g_vals = rows[mask], cols[mask] - a, vals[mask]

            #signal part
            J_s = ev.J_s[g_l] #one row of J_s per gradient entry
            keep = nodes != GND
            if keep.any():
                r = np.repeat(g_rows, keep.sum())
                col = np.tile(nodes[keep], len(g_rows))
                v = (g_vals[:, None]*J_s[:, keep]).ravel()
                self.acc.add_matrix("d%s_dxb"%which if use_bias else "d%s_dx"%which, r, col, v)

            #input param part
            n_ip = ev.J_ip.shape[1]
            if keep_ip and n_ip:
                r = np.repeat(g_rows, n_ip)
                col = np.tile(np.arange(n_ip), len(g_rows))
                v = (g_vals[:, None]*ev.J_ip[g_l]).ravel()
                out.append((r, col, v))

        mask = (cols >= b) & (cols < c)
        if self.flags.wrt_gv and mask.any():
            self.acc.add_matrix("d%s_dgv"%which, rows[mask], rule.global_var_indices[cols[mask] - b], vals[mask])

        return _join(out)


def eval(x : np.ndarray, ckt : SubcircuitInstance, en : Sequence[int], ip : Sequence[float], analysis : str,
        gv : Sequence[float] = (), x_bias : np.ndarray = None, flags : GradientFlags = None) -> EvalResult:
    """Evaluate remainders and Jacobians of an instance called with external nodes en and input
    params ip.

    Args:
        x (ndarray): signal vector, complex in AC builds
        ckt (SubcircuitInstance): the instance to evaluate
        en (list[int]): global indices of the instance's external nodes
        ip (list[float]): values of the instance's input params
        analysis (str): DC, TRAN or AC
        gv (list[float]): values of all global variables
        x_bias (ndarray): bias point read by submodels in AC and by submodels inactive under
            the analysis. Without it, submodels read x.
        flags (GradientFlags): gradients to materialize
    """

    flags = flags or GradientFlags()
    x = np.asarray(x)
    n = len(x)
    ip = np.asarray(ip, dtype=float)
    executor = _Executor(x, None if x_bias is None else np.asarray(x_bias, dtype=float), analysis, gv, flags)
    ip_q, ip_f = executor.call(ckt, en, ip, keep_ip = flags.wrt_ip)

    acc = executor.acc
    result = EvalResult(acc.vector("Q", n), acc.vector("F", n))
    if flags.wrt_x:
        result.dQ_dx = acc.matrix("dQ_dx", (n, n))
        result.dF_dx = acc.matrix("dF_dx", (n, n))
        result.dQ_dxb = acc.matrix("dQ_dxb", (n, n))
        result.dF_dxb = acc.matrix("dF_dxb", (n, n))
    if flags.wrt_gv:
        result.dQ_dgv = acc.matrix("dQ_dgv", (n, len(executor.gv)))
        result.dF_dgv = acc.matrix("dF_dgv", (n, len(executor.gv)))
    if flags.wrt_ip:
        dtype = np.result_type(ip_q[2], ip_f[2], float)
        result.dQ_dip = sparse.coo_matrix((ip_q[2].astype(dtype), (ip_q[0], ip_q[1])), shape=(n, len(ip))).tocsr()
        result.dF_dip = sparse.coo_matrix((ip_f[2].astype(dtype), (ip_f[0], ip_f[1])), shape=(n, len(ip))).tocsr()
    return result


def eval_top(x : np.ndarray, top : SubcircuitInstance, analysis : str, gv : Sequence[float] = (),
        x_bias : np.ndarray = None, flags : GradientFlags = None) -> EvalResult:
    """eval of the closed top-level circuit. dQ_dgv and dF_dgv are the gradients with respect
    to the netlist's Globals."""
    return eval(x, top, [], [], analysis, gv, x_bias, flags)
