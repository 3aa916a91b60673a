"""Linear solvers for the assembled SPD systems.

A hand-rolled preconditioned conjugate gradient is the workhorse; small
systems fall through to a dense Cholesky solve. Both operate on the
reduced (Dirichlet-eliminated) matrices, which are SPD once at least one
face DoF is pinned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from .assembly import GlobalSystem, static_condensation

__all__ = [
    "SolverError",
    "NotSPDError",
    "SolveReport",
    "solve_cg",
    "solve_direct",
    "solve_system",
]

DIRECT_THRESHOLD = 2000


class SolverError(Exception):
    pass


class NotSPDError(SolverError):
    pass


@dataclass
class SolveReport:
    method: str
    n: int
    iterations: int
    residual: float
    converged: bool
    condensed: bool = False
    residual_history: np.ndarray = field(default=None, repr=False)


def solve_cg(A, b, tol: float = 1e-10, maxiter: int | None = None,
             precond: str = "jacobi", x0=None) -> tuple:
    """Preconditioned CG for SPD A; returns (x, SolveReport).

    Convergence is ||r||_2 <= tol * ||b||_2. A nonpositive curvature
    p^T A p flags a non-SPD matrix. Raises SolverError if the iteration
    budget (10 sqrt(n) + 1000 by default) runs out.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if n == 0:
        return np.zeros(0), SolveReport("cg", 0, 0, 0.0, True)
    if maxiter is None:
        maxiter = int(10 * np.sqrt(n)) + 1000

    if precond == "jacobi":
        d = A.diagonal() if sp.issparse(A) else np.diag(A).copy()
        if np.any(d <= 0):
            raise NotSPDError("nonpositive diagonal entry")
        apply_m = lambda r: r / d
    elif precond in (None, "none"):
        apply_m = lambda r: r
    else:
        raise SolverError(f"unknown preconditioner {precond!r}")

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    r = b - A @ x
    z = apply_m(r)
    p = z.copy()
    rz = float(r @ z)
    bnorm = float(np.linalg.norm(b))
    target = tol * (bnorm if bnorm > 0 else 1.0)
    history = [float(np.linalg.norm(r))]

    if history[0] <= target:
        return x, SolveReport("cg", n, 0, history[0], True,
                              residual_history=np.asarray(history))

    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise NotSPDError(f"nonpositive curvature at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        history.append(rnorm)
        if rnorm <= target:
            return x, SolveReport("cg", n, it, rnorm, True,
                                  residual_history=np.asarray(history))
        z = apply_m(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p

    raise SolverError(
        f"cg failed to converge in {maxiter} iterations "
        f"(residual {history[-1]:.3e}, target {target:.3e})")


def solve_direct(A, b) -> tuple:
    """Dense Cholesky solve; SolverError if the matrix is not SPD."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if n == 0:
        return np.zeros(0), SolveReport("direct", 0, 0, 0.0, True)
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    try:
        factor = cho_factor(Ad)
    except np.linalg.LinAlgError as exc:
        raise SolverError("matrix is singular or not SPD") from exc
    x = cho_solve(factor, b)
    res = float(np.linalg.norm(b - Ad @ x))
    return x, SolveReport("direct", n, 0, res, True)


def solve_system(system: GlobalSystem, method: str = "auto",
                 condense: bool = True, tol: float = 1e-10,
                 maxiter: int | None = None, precond: str = "jacobi",
                 direct_threshold: int = DIRECT_THRESHOLD) -> tuple:
    """Solve an assembled system; returns (full DoF vector, SolveReport).

    With condense=True (default) the face-only Schur system is solved
    and interior DoFs are recovered exactly cell by cell. method "auto"
    uses the dense path up to direct_threshold unknowns, CG above.
    """
    if condense:
        cond = static_condensation(system)
        A, b = cond.S, cond.b
    else:
        cond = None
        A, b = system.A, system.b

    n = A.shape[0]
    if method == "auto":
        method = "direct" if n <= direct_threshold else "cg"
    if method == "direct":
        x, report = solve_direct(A, b)
    elif method == "cg":
        x, report = solve_cg(A, b, tol=tol, maxiter=maxiter, precond=precond)
    else:
        raise SolverError(f"unknown method {method!r}")

    full = cond.recover(x) if cond is not None else system.expand(x)
    report.condensed = condense
    return full, report
