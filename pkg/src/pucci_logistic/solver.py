"""Dirichlet solves Fh(u) + c u = g on a masked grid.

Two paths: Howard policy iteration with sparse direct solves (default when the
problem is proper, c <= 0) and damped pseudo-time stepping, which also serves
the c > 0 probes used around the principal eigenvalue.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .operators import DiscreteOperator

log = logging.getLogger(__name__)

TOL_RES = 1e-9
TOL_CMP = 1e-8
BLOWUP_THRESHOLD = 1e8


class Status(str, Enum):
    CONVERGED = "CONVERGED"
    MAX_ITER = "MAX_ITER"
    DIVERGED = "DIVERGED"


@dataclass
class DirichletProblem:
    """Fh(u) + c u = g; boundary data live in the operator.

    ``c`` may be a scalar or a per-node array.
    """

    operator: DiscreteOperator
    c: float | np.ndarray = 0.0
    g: float | np.ndarray = 0.0

    def __post_init__(self):
        n = self.operator.n
        self.c = np.broadcast_to(np.asarray(self.c, dtype=float), (n,)).copy()
        self.g = np.broadcast_to(np.asarray(self.g, dtype=float), (n,)).copy()
        if not (np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.c))):
            raise SolverError("BAD_PROBLEM", "rhs and shift must be finite")

    @property
    def proper(self):
        return bool(np.all(self.c <= 0))

    def residual(self, u):
        return self.operator.apply(u) + self.c * u - self.g

    def scale(self):
        """Magnitude used to make residual tolerances relative: rhs and the
        boundary data weighted by the diagonal bound."""
        bv = getattr(self.operator, "_bvals", None)
        data = float(np.abs(bv).max()) * self.operator.diag_bound() if bv is not None and bv.size else 0.0
        return max(1.0, float(np.abs(self.g).max()), data)


@dataclass
class SolveReport:
    u: np.ndarray
    status: Status
    iterations: int
    residual_history: list = field(default_factory=list)
    runtime: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status is Status.CONVERGED

    @property
    def residual(self):
        return self.residual_history[-1] if self.residual_history else float("nan")


def _sup(x):
    return float(np.abs(x).max()) if np.size(x) else 0.0


def _direct(L, b, c, g):
    A = (L + sp.diags(c)).tocsc()
    return spla.spsolve(A, g - b)


def solve_dirichlet(
    p: DirichletProblem,
    tol_res=TOL_RES,
    max_iter=None,
    u0=None,
    method="auto",
    blowup_threshold=BLOWUP_THRESHOLD,
    trace=None,
    require_proper=True,
) -> SolveReport:
    """Solve Fh(u) + c u = g.

    ``method`` is "policy", "fixed_point" or "auto" (policy iteration when
    c <= 0).  ``trace`` may be a callable receiving (iteration, residual).
    The residual is measured in sup norm relative to max(1, sup|g|).
    ``require_proper=False`` lets policy iteration run with some c > 0; the
    caller then vouches that every policy matrix stays nonsingular.
    """
    if method == "auto":
        method = "policy" if p.proper else "fixed_point"
    if method == "policy":
        if require_proper and not p.proper:
            raise SolverError("NOT_PROPER", "policy iteration needs c <= 0")
        return _policy_iteration(p, tol_res, max_iter or 200, u0, blowup_threshold, trace)
    if method == "fixed_point":
        return _fixed_point(p, tol_res, max_iter or 200_000, u0, blowup_threshold, trace)
    raise SolverError("BAD_METHOD", method)


def _policy_iteration(p, tol_res, max_iter, u0, blowup_threshold, trace):
    t0 = time.perf_counter()
    op = p.operator
    u = np.zeros(op.n) if u0 is None else np.array(u0, dtype=float)
    scale = p.scale()
    history = []
    policy = op.policy(u)
    status = Status.MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        L, b = op.assemble(policy)
        u = _direct(L, b, p.c, p.g)
        if not np.all(np.isfinite(u)) or _sup(u) > blowup_threshold:
            status = Status.DIVERGED
            history.append(float("inf"))
            break
        res = _sup(p.residual(u)) / scale
        history.append(res)
        if trace:
            trace(it, res)
        new_policy = op.policy(u, previous=policy)
        if np.array_equal(new_policy, policy) or res <= tol_res:
            status = Status.CONVERGED if res <= max(tol_res, 1e-12) else Status.MAX_ITER
            if status is Status.MAX_ITER:
                # stable policy but residual above tolerance: one refinement sweep
                u = u - _direct(L, np.zeros_like(b), p.c, p.residual(u))
                res = _sup(p.residual(u)) / scale
                history.append(res)
                status = Status.CONVERGED if res <= tol_res else Status.MAX_ITER
            break
        policy = new_policy
    return SolveReport(u, status, it, history, time.perf_counter() - t0, {"method": "policy"})


def _fixed_point(p, tol_res, max_iter, u0, blowup_threshold, trace):
    """u <- u + tau (Fh(u) + c u - g); tau from the stencil-weight CFL bound."""
    t0 = time.perf_counter()
    op = p.operator
    u = np.zeros(op.n) if u0 is None else np.array(u0, dtype=float)
    tau = 1.0 / (op.diag_bound() + max(0.0, float(np.max(-p.c))))
    scale = p.scale()
    history = []
    status = Status.MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        r = p.residual(u)
        u = u + tau * r
        res = _sup(r) / scale
        history.append(res)
        if trace and it % 100 == 0:
            trace(it, res)
        if not np.all(np.isfinite(u)) or _sup(u) > blowup_threshold:
            status = Status.DIVERGED
            break
        if res <= tol_res:
            status = Status.CONVERGED
            break
    return SolveReport(u, status, it, history, time.perf_counter() - t0, {"method": "fixed_point", "tau": tau})


def solve_linear_extension(operator: DiscreteOperator, boundary, tol_res=TOL_RES) -> np.ndarray:
    """psi with Fh(psi) = 0 inside and psi = boundary data on the boundary."""
    op = operator.with_boundary(boundary)
    # the maximum principle bounds psi by the data, so only data-relative growth is divergence
    threshold = max(BLOWUP_THRESHOLD, 10 * float(np.abs(op._bvals).max()) if op._bvals.size else 0.0)
    rep = solve_dirichlet(DirichletProblem(op, 0.0, 0.0), tol_res, blowup_threshold=threshold)
    if not rep.converged:
        raise SolverError(rep.status.value, "linear extension did not converge")
    return rep.u


@dataclass
class ComparisonResult:
    ok: bool
    violations: np.ndarray
    max_violation: float

    def __bool__(self):
        return self.ok


def check_discrete_comparison(u_sub, u_super, mask=None, other_mask=None, tol_cmp=TOL_CMP) -> ComparisonResult:
    """u_super >= u_sub - tol_cmp node-wise; masks, when given, must agree."""
    if mask is not None and other_mask is not None and not mask.same_nodes(other_mask):
        raise SolverError("MASK_MISMATCH", "fields live on different masks")
    u_sub = np.asarray(u_sub, dtype=float)
    u_super = np.asarray(u_super, dtype=float)
    if u_sub.shape != u_super.shape:
        raise SolverError("MASK_MISMATCH", f"shapes {u_sub.shape} and {u_super.shape}")
    gap = u_sub - u_super
    bad = np.flatnonzero(gap > tol_cmp)
    return ComparisonResult(bad.size == 0, bad, float(gap.max()) if gap.size else 0.0)
