from typing import Sequence

import numpy as np
from scipy import sparse

from gradnet.primitives.element import GND


class SparseContribution:
    """Coordinate-triplet accumulator for remainders and their Jacobians. Duplicate entries are
    kept until a vector or matrix is materialized, where they are summed."""

    VECTORS = ("Q", "F")
    MATRICES = ("dQ_dx", "dF_dx", "dQ_dxb", "dF_dxb", "dQ_dgv", "dF_dgv", "dQ_dp", "dF_dp")

    def __init__(self):
        self._vectors = {name : ([], []) for name in self.VECTORS}
        self._matrices = {name : ([], [], []) for name in self.MATRICES}

    def add_vector(self, name, idx, vals):
        idx_list, val_list = self._vectors[name]
        idx_list.append(np.asarray(idx, dtype=int))
        val_list.append(np.asarray(vals))

    def add_matrix(self, name, rows, cols, vals):
        row_list, col_list, val_list = self._matrices[name]
        row_list.append(np.asarray(rows, dtype=int))
        col_list.append(np.asarray(cols, dtype=int))
        val_list.append(np.asarray(vals))

    def add_local(self, nodes : Sequence[int], local, param_cols : Sequence[int] = None):
        """Scatter a dense element stamp. Rows and signal columns at the datum are dropped.
        Param gradients are only scattered when param_cols is given."""

        nodes = np.asarray(nodes, dtype=int)
        keep = nodes != GND
        rows = nodes[keep]
        self.add_vector("Q", rows, local.Q[keep])
        self.add_vector("F", rows, local.F[keep])

        sub_q = local.dQ_dx[np.ix_(keep, keep)]
        sub_f = local.dF_dx[np.ix_(keep, keep)]
        r, c = np.meshgrid(rows, rows, indexing="ij")
        self.add_matrix("dQ_dx", r.ravel(), c.ravel(), sub_q.ravel())
        self.add_matrix("dF_dx", r.ravel(), c.ravel(), sub_f.ravel())

        if param_cols is None:
            return
        r, c = np.meshgrid(rows, np.asarray(param_cols, dtype=int), indexing="ij")
        self.add_matrix("dQ_dp", r.ravel(), c.ravel(), local.dQ_dp[keep].ravel())
        self.add_matrix("dF_dp", r.ravel(), c.ravel(), local.dF_dp[keep].ravel())

    def entries(self, name):
        """All triplets of a matrix (or index/value pairs of a vector) concatenated"""
        if name in self._vectors:
            idx, vals = self._vectors[name]
            if not idx:
                return np.zeros(0, dtype=int), np.zeros(0)
            return np.concatenate(idx), np.concatenate(vals)

        rows, cols, vals = self._matrices[name]
        if not rows:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0)
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def vector(self, name, n : int) -> np.ndarray:
        idx, vals = self.entries(name)
        out = np.zeros(n, dtype=np.result_type(vals, float))
        np.add.at(out, idx, vals)
        return out

    def matrix(self, name, shape) -> sparse.csr_matrix:
        rows, cols, vals = self.entries(name)
        dtype = np.result_type(vals, float)
        return sparse.coo_matrix((vals.astype(dtype), (rows, cols)), shape=shape).tocsr()
