from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple
import logging

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import splu

from gradnet.errors import GradnetError, NoConvergence, SingularJacobian, SolverError

logger = logging.getLogger("gradnet")


@dataclass
class NewtonConfig:
    abstol : float = 1e-9
    reltol : float = 1e-6
    max_iter : int = 50
    min_step : float = 2.0**-20
    initial_x : Optional[np.ndarray] = None

    def __post_init__(self):
        if self.abstol <= 0 or self.reltol <= 0:
            raise SolverError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise SolverError("Newton needs at least one iteration")


@dataclass
class NewtonResult:
    x : np.ndarray
    iterations : int
    residual : float
    history : List[float] = None #residual norm after each accepted step


def _singular_row(A):
    """Index of the first row or column that makes A singular, found on the dense matrix"""
    A = A.toarray() if sparse.issparse(A) else np.asarray(A)
    zero_rows = np.flatnonzero(~A.any(axis=1))
    if len(zero_rows):
        return int(zero_rows[0])
    zero_cols = np.flatnonzero(~A.any(axis=0))
    if len(zero_cols):
        return int(zero_cols[0])
    _, _, U = scipy.linalg.lu(A)
    diag = np.abs(np.diag(U))
    return int(np.argmin(diag))


def factorize(A, names : List[str] = None, error = SingularJacobian):
    """Sparse LU with partial pivoting. A singular matrix raises error, naming the unknown at
    the offending pivot when names are given."""

    A = sparse.csc_matrix(A)
    if A.shape[0] == 0:
        return None
    if not np.all(np.isfinite(A.data)):
        raise error("Matrix has non-finite entries")
    try:
        lu = splu(A)
        if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
            raise RuntimeError("zero pivot")
    except RuntimeError:
        row = _singular_row(A)
        if error is SingularJacobian:
            raise SingularJacobian("Singular Jacobian", row, names[row] if names else str(row))
        raise error("Singular matrix at row %d"%row)
    return lu


def lu_solve(lu, rhs, trans = "N"):
    if lu is None:
        return np.zeros_like(rhs)
    return lu.solve(rhs, trans = trans)


class Newton:
    """Damped Newton-Raphson on residual(x) -> (r, J). Each step solves J dx = -r by sparse
    LU and halves the step until the residual infinity norm does not grow."""

    def __init__(self, residual : Callable[[np.ndarray], Tuple[np.ndarray, sparse.spmatrix]],
            cfg : NewtonConfig = None, names : List[str] = None):
        self.residual = residual
        self.cfg = cfg or NewtonConfig()
        self.names = names

    def _try(self, x):
        try:
            r, J = self.residual(x)
        except GradnetError as e:
            logger.debug("Residual evaluation failed: %s"%e)
            return None
        if not np.all(np.isfinite(r)):
            return None
        return r, J

    def solve(self, x0 : np.ndarray) -> NewtonResult:
        cfg = self.cfg
        x = np.array(x0, dtype=float)
        r, J = self.residual(x)
        norm = np.max(np.abs(r)) if len(r) else 0.0
        history = [norm]
        step = np.inf

        for k in range(cfg.max_iter):
            scale = np.max(np.abs(x)) if len(x) else 0.0
            if norm <= cfg.abstol and step <= cfg.reltol*scale + cfg.abstol:
                break

            dx = lu_solve(factorize(J, self.names), -r)
            proposed = np.max(np.abs(dx)) if len(dx) else 0.0
            if norm <= cfg.abstol and proposed <= cfg.reltol*scale + cfg.abstol:
                break

            s = 1.0
            while True:
                trial = self._try(x + s*dx)
                if trial is not None:
                    r_new, J_new = trial
                    norm_new = np.max(np.abs(r_new)) if len(r_new) else 0.0
                    if norm_new <= norm:
                        break
                s /= 2
                if s < cfg.min_step:
                    break
                logger.debug("Newton step halved to %g"%s)

            if s < cfg.min_step:
                #the residual is within abstol and no step lowers it further
                if norm <= cfg.abstol:
                    break
                logger.warning("Newton line search reached the minimum step at iteration %d"%k)
                raise NoConvergence("Line search failed to reduce the residual", k, norm)

            x = x + s*dx
            r, J, norm = r_new, J_new, norm_new
            step = s*proposed
            history.append(norm)
            logger.debug("Newton iteration %d: residual %.3g, step scale %g"%(k, norm, s))
        else:
            scale = np.max(np.abs(x)) if len(x) else 0.0
            if not (norm <= cfg.abstol and step <= cfg.reltol*scale + cfg.abstol):
                raise NoConvergence("Newton did not converge in %d iterations"%cfg.max_iter, cfg.max_iter, norm)

        logger.info("Newton converged in %d iterations, residual %.3g"%(len(history)-1, norm))
        return NewtonResult(x, len(history)-1, norm, history)
