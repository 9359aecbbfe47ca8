"""Principal eigenvalue of a 1-homogeneous discrete operator by inverse power
iteration, bracketed by Collatz-Wielandt ratios."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import EigenError
from .geometry import DomainSpec, Grid2D, build_mask, is_nested
from .operators import DiscreteOperator, OperatorSpec, discretize
from .solver import DirichletProblem, solve_dirichlet

log = logging.getLogger(__name__)

TOL_BRACKET = 1e-4
RATIO_FLOOR = 1e-12


@dataclass
class EigenResult:
    lambda_lo: float
    lambda_hi: float
    phi: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def lambda_est(self):
        return 0.5 * (self.lambda_lo + self.lambda_hi)

    @property
    def width(self):
        return self.lambda_hi - self.lambda_lo

    def contains(self, value, slack=0.0):
        return self.lambda_lo - slack <= value <= self.lambda_hi + slack


def principal_eigen(operator: DiscreteOperator, tol_bracket=TOL_BRACKET, max_iter=500, psi0=None) -> EigenResult:
    """Iterate Fh(psi_{k+1}) = -psi_k with zero boundary data.

    The ratio psi_k / psi_{k+1} over nodes where psi_{k+1} is not negligible
    brackets the eigenvalue; the iterate is renormalized to sup 1.
    """
    t0 = time.perf_counter()
    op = operator.with_boundary(0.0)
    mask = op.mask
    # several stencil-connected pieces make the principal eigenpair ill-posed
    ncomp, _ = connected_components(abs(sum(op._D)), directed=False)
    if ncomp > 1:
        raise EigenError("NEGATIVE_ITERATE", f"mask splits into {ncomp} stencil-connected pieces")
    if psi0 is None:
        # distance to the boundary: positive inside, deterministic
        psi = np.maximum(-mask.domain.sd(mask.xy[:, 0], mask.xy[:, 1]), 0.0) if mask.parent is None else np.ones(mask.n)
        psi = np.where(psi > 0, psi, mask.grid.h)
    else:
        psi = np.array(psi0, dtype=float)
    psi = psi / psi.max()
    history = []
    lo = hi = np.nan
    u_prev = None
    for it in range(1, max_iter + 1):
        rep = solve_dirichlet(DirichletProblem(op, 0.0, -psi), u0=u_prev)
        nxt = rep.u
        if not rep.converged:
            raise EigenError("NOT_CONVERGED", f"inner solve {rep.status.value} at iteration {it}")
        if np.any(nxt <= 0):
            raise EigenError("NEGATIVE_ITERATE", "iterate lost positivity; mask disconnected or operator invalid")
        use = nxt > RATIO_FLOOR * nxt.max()
        ratio = psi[use] / nxt[use]
        lo, hi = float(ratio.min()), float(ratio.max())
        history.append((lo, hi))
        log.debug("eigen step %d: bracket [%.12g, %.12g]", it, lo, hi)
        scale = nxt.max()
        u_prev = nxt / scale
        psi = u_prev
        if (hi - lo) / (0.5 * (hi + lo)) < tol_bracket:
            break
    else:
        raise EigenError("NOT_CONVERGED", f"bracket stalled at [{lo}, {hi}]", lambda_lo=lo, lambda_hi=hi)
    est = 0.5 * (lo + hi)
    residual = float(np.abs(op.apply(psi) + est * psi).max())
    return EigenResult(lo, hi, psi, it, residual, history, time.perf_counter() - t0)


def eigen_on_domain(spec: OperatorSpec, grid: Grid2D, dom: DomainSpec, **kw) -> EigenResult:
    mask = build_mask(grid, dom)
    return principal_eigen(discretize(spec, grid, mask), **kw)


@dataclass
class MonotonicityCheck:
    ok: bool
    small: EigenResult
    big: EigenResult

    @property
    def gap(self):
        return self.small.lambda_est - self.big.lambda_est

    def __bool__(self):
        return self.ok


def eigen_monotonicity_check(spec: OperatorSpec, grid: Grid2D, dom_small: DomainSpec, dom_big: DomainSpec, **kw) -> MonotonicityCheck:
    """lambda(dom_small) >= lambda(dom_big) up to the bracket widths."""
    if not is_nested(dom_small, dom_big, grid):
        raise EigenError("NOT_NESTED", "the smaller domain is not contained in the larger one")
    small = eigen_on_domain(spec, grid, dom_small, **kw)
    big = eigen_on_domain(spec, grid, dom_big, **kw)
    slack = small.width + big.width
    return MonotonicityCheck(small.lambda_hi >= big.lambda_lo - slack, small, big)
