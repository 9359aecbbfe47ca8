"""Positive solutions of Fh(u) + mu u = k u^p with zero outer data.

Barriers (a scaled eigenfunction below; a constant or a patched eigenfunction
above), the shifted monotone iteration between them, the annulus problem with
data on the oasis boundary, and classification of mu against the existence
window.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigen import EigenResult, principal_eigen
from .errors import LogisticError, PucciLogisticError
from .geometry import (
    LATTICE_DIRECTIONS,
    Difference,
    DomainSpec,
    Grid2D,
    build_mask,
    is_nested,
)
from .operators import DiscreteOperator, OperatorSpec, discretize
from .solver import (
    BLOWUP_THRESHOLD,
    TOL_CMP,
    DirichletProblem,
    SolveReport,
    Status,
    solve_dirichlet,
    solve_linear_extension,
)

log = logging.getLogger(__name__)

MU0_INFLATION = 1.01
MIN_OASIS_GAP_CELLS = 4

# one record per monotone iteration run in this process: steps, worst rise
# above the previous iterate, worst dip below w-, and the tolerance used
ordering_log: list = []


class KKind(str, Enum):
    K1 = "K1"
    K2 = "K2"


@dataclass(frozen=True)
class ReactionSpec:
    """mu, exponent p and the coefficient k.

    K1: k0 <= k <= k1 (``k_field`` or the constant k1).  K2: k vanishes on
    the closed oasis and ramps linearly to k1 over ``ramp`` (default 4h).
    """

    mu: float
    p: float = 2.0
    k_kind: KKind = KKind.K1
    k0: float = 1.0
    k1: float = 1.0
    oasis: DomainSpec | None = None
    ramp: float | None = None
    k_field: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "k_kind", KKind(self.k_kind))
        if not self.p > 1:
            raise LogisticError("BAD_REACTION", "exponent p must exceed 1")
        if self.k1 <= 0:
            raise LogisticError("BAD_REACTION", "k1 must be positive")
        if self.k_kind is KKind.K1 and not 0 < self.k0 <= self.k1:
            raise LogisticError("BAD_REACTION", "K1 needs 0 < k0 <= k1")
        if self.k_kind is KKind.K2 and self.oasis is None:
            raise LogisticError("BAD_REACTION", "K2 needs an oasis domain")

    def with_mu(self, mu):
        return dataclasses.replace(self, mu=float(mu))

    def ramp_width(self, h):
        return 4 * h if self.ramp is None else self.ramp

    def k_at(self, x, y, h):
        if self.k_kind is KKind.K1:
            if self.k_field is None:
                return np.full(np.shape(x), float(self.k1))
            return np.asarray(self.k_field(x, y), dtype=float) * np.ones(np.shape(x))
        d0 = np.maximum(self.oasis.sd(x, y), 0.0)
        return self.k1 * np.minimum(1.0, d0 / self.ramp_width(h))


@dataclass
class BarrierSet:
    w_minus: np.ndarray
    w_plus: np.ndarray
    alpha: float
    C: float
    method: str = "K1"
    omega1: DomainSpec | None = None
    omega2: DomainSpec | None = None
    phi2: np.ndarray | None = None
    delta: float | None = None
    alpha_cubic: float | None = None
    super_residual: float = float("nan")
    sub_residual: float = float("nan")
    info: dict = field(default_factory=dict)


class LogisticModel:
    """Grid, domain, discrete operator and k for one configuration.

    Eigen results are computed lazily and cached; the model is read-only
    afterwards and may be shared across solves.
    """

    def __init__(self, grid: Grid2D, domain: DomainSpec, op_spec: OperatorSpec, reaction: ReactionSpec, tol_bracket=1e-8):
        self.grid = grid
        self.domain = domain
        self.op_spec = op_spec
        self.reaction = reaction
        self.tol_bracket = tol_bracket
        self.mask = build_mask(grid, domain)
        self.op = discretize(op_spec, grid, self.mask)
        self.k = reaction.k_at(self.mask.xy[:, 0], self.mask.xy[:, 1], grid.h)
        if reaction.k_kind is KKind.K1 and (self.k.min() < reaction.k0 - 1e-14 or self.k.max() > reaction.k1 + 1e-14):
            raise LogisticError("BAD_REACTION", "k leaves [k0, k1] at some node")
        if reaction.k_kind is KKind.K2:
            if not is_nested(reaction.oasis, domain, grid):
                raise LogisticError("BAD_REACTION", "the oasis must lie inside the domain")
            if self.oasis_gap < MIN_OASIS_GAP_CELLS * grid.h:
                raise LogisticError("UNRESOLVED_OASIS", f"oasis gap {self.oasis_gap:.4g} below {MIN_OASIS_GAP_CELLS}h")

    @property
    def h(self):
        return self.grid.h

    @property
    def p(self):
        return self.reaction.p

    @cached_property
    def boundary_distance(self):
        """Distance to the outer boundary at the unknowns."""
        return np.maximum(-self.domain.sd(self.mask.xy[:, 0], self.mask.xy[:, 1]), 0.0)

    @cached_property
    def oasis_sd(self):
        return self.reaction.oasis.sd(self.mask.xy[:, 0], self.mask.xy[:, 1])

    @cached_property
    def oasis_nodes(self):
        """Unknowns of the closed oasis, where k vanishes."""
        return self.oasis_sd <= 0

    @cached_property
    def oasis_gap(self):
        """Distance between the oasis and the outer boundary, node-sampled."""
        outside = self.oasis_sd >= 0
        return float(np.min(self.boundary_distance[outside] + self.oasis_sd[outside]))

    @cached_property
    def arm_reach(self):
        return self.h * max(math.hypot(*LATTICE_DIRECTIONS[j]) for j in self.op.dirs)

    @cached_property
    def eigen_omega(self) -> EigenResult:
        return principal_eigen(self.op, tol_bracket=self.tol_bracket)

    @cached_property
    def oasis_op(self) -> DiscreteOperator:
        return discretize(self.op_spec, self.grid, self.mask.restrict(self.oasis_nodes))

    @cached_property
    def eigen_oasis(self) -> EigenResult:
        """Principal eigenvalue of the zero set of k with the domain's stencils.

        This node set, not the continuous oasis, sets the top of the discrete
        existence window.
        """
        return principal_eigen(self.oasis_op, tol_bracket=self.tol_bracket)

    def residual(self, u, mu, k=None, op=None, p=None):
        """Fh(u) + mu u - k u^p."""
        op = self.op if op is None else op
        k = self.k if k is None else k
        p = self.p if p is None else p
        return op.apply(u) + mu * u - k * np.maximum(u, 0.0) ** p

    def tol_barrier(self, C):
        return 5 * self.h * (1 + C) ** self.p

    def tol_res_nl(self, sup_u):
        return max(1e-7, 5 * self.h**2) * (1 + sup_u) ** self.p


# -- barriers -----------------------------------------------------------------

def build_subsolution(model: LogisticModel, mu, eig: EigenResult | None = None, max_halvings=30):
    """alpha * phi_Omega with alpha from the conservative end of the bracket."""
    eig = model.eigen_omega if eig is None else eig
    if mu <= eig.lambda_hi:
        raise LogisticError("NO_SUBSOLUTION", f"mu = {mu} is not above the eigen bracket [{eig.lambda_lo}, {eig.lambda_hi}]")
    p = model.p
    alpha = ((mu - eig.lambda_hi) / model.reaction.k1) ** (1.0 / (p - 1))
    for _ in range(max_halvings + 1):
        w = alpha * eig.phi
        worst = float(np.min(model.residual(w, mu)))
        if worst >= -model.tol_barrier(alpha):
            return w, alpha, worst
        alpha *= 0.5
    raise LogisticError("NO_SUBSOLUTION", "discrete subsolution check failed after halving")


def build_supersolution_K1(model: LogisticModel, mu):
    """Constant (mu / k0)^(1/(p-1)); annihilated by Fh, so the check is exact."""
    r = model.reaction
    if r.k_kind is not KKind.K1:
        raise LogisticError("BAD_REACTION", "constant supersolution needs K1")
    if mu <= 0:
        raise LogisticError("NO_SUPERSOLUTION", "K1 constant supersolution needs mu > 0")
    C = (mu / r.k0) ** (1.0 / (r.p - 1))
    return np.full(model.mask.n, C), C


def _lemma_supersolution(model: LogisticModel, mu, retries=6, doublings=10, strict=True):
    """Patched eigenfunction barrier on intermediate domains Omega1 < Omega2.

    w+ = C outside Omega1, min(phi2~, C + a d^3) in the collar of width delta
    inside Omega1, phi2~ deeper, with phi2~ = C phi2 / min_{Omega1} phi2.
    """
    r = model.reaction
    oasis = r.oasis
    gap = model.oasis_gap
    sd0 = model.oasis_sd
    for attempt in range(retries + 1):
        s1 = 0.4 * gap / 2**attempt
        s2 = 0.8 * gap / 2**attempt
        nodes2 = sd0 < s2
        op2 = discretize(model.op_spec, model.grid, model.mask.restrict(nodes2))
        eig2 = principal_eigen(op2, tol_bracket=model.tol_bracket)
        if mu < eig2.lambda_lo:
            break
    else:
        raise LogisticError("NO_SUPERSOLUTION", f"no Omega2 certifies mu < lambda(Omega2) after {retries} shrinks")
    phi2 = np.zeros(model.mask.n)
    phi2[nodes2] = eig2.phi
    in1 = sd0 < s1
    d1 = s1 - sd0  # distance to the boundary of Omega1, inside Omega1
    delta = 0.5 * s1
    collar1 = in1 & (d1 < delta)
    min_phi = float(phi2[in1].min())
    if min_phi <= 0:
        raise LogisticError("NO_SUPERSOLUTION", "phi(Omega2) vanishes on Omega1")
    level = in1 & (np.abs(d1 - delta) <= 0.5 * model.h)
    if not level.any():
        level = in1 & (d1 <= delta + model.h)
    ratio = float(phi2[level].max()) / min_phi if level.any() else float(phi2[in1].max()) / min_phi
    ramp = r.ramp_width(model.h)
    k_collar = float(model.k[collar1].min()) if collar1.any() else r.k1 * min(1.0, (s1 - delta) / ramp)
    k_out = float(model.k[~in1].min())
    N, Lam = 2, model.op_spec.Lam
    bound_collar = (6 * Lam * N / delta**2 * (ratio - 1) + ratio * mu) / k_collar
    bound_out = mu / k_out
    C = max(bound_collar, bound_out, 0.0) ** (1.0 / (r.p - 1))
    info = {"s1": s1, "s2": s2, "lambda_omega2": eig2.lambda_lo, "ratio": ratio, "k_collar": k_collar,
            "k_outside": k_out, "C_collar": bound_collar ** (1 / (r.p - 1)), "C_outside": bound_out ** (1 / (r.p - 1))}
    for doubling in range(doublings + 1):
        alpha_cubic = (ratio - 1) * C / delta**3
        phi_t = C * phi2 / min_phi
        psi = C + alpha_cubic * np.maximum(d1, 0.0) ** 3
        w = np.where(~in1, C, np.where(collar1, np.minimum(phi_t, psi), phi_t))
        res = float(np.max(model.residual(w, mu)))
        # strict: exact discrete supersolution, which the ordering of the iteration needs
        if res <= model.tol_barrier(C) and (not strict or res <= 1e-9 * max(1.0, C) ** r.p):
            info["doublings"] = doubling
            return BarrierSet(None, w, float("nan"), C, "lemma", oasis.inflated(s1), oasis.inflated(s2),
                              phi2, delta, alpha_cubic, super_residual=res, info=info)
        C *= 2
    raise LogisticError("NO_SUPERSOLUTION", "discrete supersolution check failed after doubling C", residual=res)


def _oasis_supersolution(model: LogisticModel, mu, doublings=40):
    """C off the zero set of k; on it, the solution of Fh w + mu w = 0 with data C.

    For mu below the oasis eigenvalue w >= C on the zero set by the maximum
    principle.  Off it, w is linear in C while k C^p is not, so doubling C
    eventually absorbs the stencil contribution next to the zero set.
    """
    r = model.reaction
    off = ~model.oasis_nodes
    C = max(MU0_INFLATION * mu / float(model.k[off].min()), 1e-300) ** (1.0 / (r.p - 1))
    C = max(C, 1.0)
    # c = mu > 0 is fine here: mu is below the oasis eigenvalue, so every policy
    # matrix stays a nonsingular M-matrix
    unit = _positive_shift_solve(model.oasis_op.with_boundary({-1: 1.0, 0: 0.0}), mu)
    for doubling in range(doublings + 1):
        w = np.full(model.mask.n, C)
        w[model.oasis_nodes] = C * unit
        res = float(np.max(model.residual(w, mu)))
        if res <= 1e-9 * max(1.0, C) ** r.p:
            return BarrierSet(None, w, float("nan"), C, "oasis", super_residual=res, info={"doublings": doubling})
        C *= 2
    raise LogisticError("NO_SUPERSOLUTION", "oasis barrier check failed after doubling C", residual=res)


def _positive_shift_solve(op, c, max_iter=100):
    """Fh(w) + c w = 0 by policy iteration for 0 < c below the eigenvalue."""
    w = np.zeros(op.n)
    policy = op.policy(w)
    for _ in range(max_iter):
        L, b = op.assemble(policy)
        w = spla.spsolve((L + c * sp.identity(op.n)).tocsc(), -b)
        new = op.policy(w, previous=policy)
        if np.array_equal(new, policy):
            return w
        policy = new
    raise LogisticError("NO_SUPERSOLUTION", "oasis barrier solve did not settle")


def build_supersolution_K2(model: LogisticModel, mu, method="auto") -> BarrierSet:
    """Supersolution under K2; ``method`` is "lemma", "oasis" or "auto"
    (lemma first, oasis barrier when the lemma cannot be certified)."""
    r = model.reaction
    if r.k_kind is not KKind.K2:
        raise LogisticError("BAD_REACTION", "K2 supersolution needs K2")
    eig0 = model.eigen_oasis
    if mu >= eig0.lambda_lo:
        raise LogisticError("NO_SUPERSOLUTION", f"mu = {mu} is not below the oasis bracket [{eig0.lambda_lo}, {eig0.lambda_hi}]")
    if method in ("lemma", "auto"):
        try:
            return _lemma_supersolution(model, mu)
        except LogisticError as exc:
            if method == "lemma":
                raise
            log.info("lemma barrier unavailable at mu=%g (%s); using the oasis barrier", mu, exc)
    return _oasis_supersolution(model, mu)


def build_barriers(model: LogisticModel, mu, k2_method="auto") -> BarrierSet:
    if model.reaction.k_kind is KKind.K1:
        w_plus, C = build_supersolution_K1(model, mu)
        bs = BarrierSet(None, w_plus, float("nan"), C, "K1", super_residual=float(np.max(model.residual(w_plus, mu))))
    else:
        bs = build_supersolution_K2(model, mu, k2_method)
    w_minus, alpha, sub_res = build_subsolution(model, mu)
    if np.any(w_minus > bs.w_plus):
        # alpha may always be taken below min w+ (w+ >= C >= alpha after this)
        alpha = min(alpha, float(bs.w_plus.min()))
        w_minus = alpha * model.eigen_omega.phi
    bs.w_minus, bs.alpha, bs.sub_residual = w_minus, alpha, sub_res
    return bs


# -- monotone iteration -------------------------------------------------------

def monotone_iteration(op, k, mu, p, w_plus, w_minus=None, shift="adaptive", k1=None, tol_fix=None,
                       max_iter=2000, tol_cmp=TOL_CMP, trace=None) -> SolveReport:
    """u_{n+1} from Fh(u_{n+1}) + (mu - mu0) u_{n+1} = k u_n^p - mu0 u_n, u_0 = w+.

    ``shift="constant"`` uses mu0 = 1.01 max(mu, p k1 C1^(p-1)), C1 = sup w+.
    ``shift="adaptive"`` uses the node-wise mu0 = 1.01 p k u_n^(p-1): t -> k t^p - mu0 t
    stays decreasing on [0, u_n] at every node, which is all the ordering
    argument needs, and the step becomes a damped Newton step.  Where k
    vanishes the shifted operator carries c = mu > 0; the ordering asserts
    guard that case.
    """
    t0 = time.perf_counter()
    w_plus = np.asarray(w_plus, dtype=float)
    w_minus = np.zeros_like(w_plus) if w_minus is None else np.asarray(w_minus, dtype=float)
    C1 = float(w_plus.max())
    scale = max(1.0, C1)
    tol_fix = 1e-10 * (1 + C1) if tol_fix is None else tol_fix
    tol = tol_cmp * scale
    if np.any(w_minus > w_plus + tol):
        raise LogisticError("ORDERING_VIOLATION", "w- exceeds w+")
    k1 = float(np.max(k)) if k1 is None else k1
    u = w_plus.copy()
    history, excess_up, excess_low = [], 0.0, 0.0
    status = Status.MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        if shift == "constant":
            mu0 = np.full_like(u, MU0_INFLATION * max(mu, p * k1 * C1 ** (p - 1)))
        else:
            mu0 = MU0_INFLATION * p * k * np.maximum(u, 0.0) ** (p - 1)
        rhs = k * np.maximum(u, 0.0) ** p - mu0 * u
        rep = solve_dirichlet(DirichletProblem(op, mu - mu0, rhs), u0=u, method="policy",
                              blowup_threshold=max(BLOWUP_THRESHOLD, 10 * C1), require_proper=shift == "constant")
        if rep.status is not Status.CONVERGED:
            status = rep.status
            break
        v = rep.u
        up = float(np.max(v - u))
        low = float(np.max(w_minus - v))
        excess_up, excess_low = max(excess_up, up), max(excess_low, low)
        if up > tol or low > tol:
            ordering_log.append({"steps": it, "rise": excess_up, "dip": excess_low, "tol": tol})
            raise LogisticError("ORDERING_VIOLATION", f"step {it}: rise {up:.3g}, dip below w- {low:.3g} (tol {tol:.3g})",
                                step=it, rise=up, dip=low)
        diff = float(np.max(np.abs(v - u)))
        history.append(diff)
        log.debug("monotone step %d: sup|u_new - u| = %.3e", it, diff)
        if trace:
            trace(it, diff)
        u = v
        if diff < tol_fix:
            status = Status.CONVERGED
            break
    ordering_log.append({"steps": it, "rise": excess_up, "dip": excess_low, "tol": tol})
    res_nl = float(np.max(np.abs(op.apply(u) + mu * u - k * np.maximum(u, 0.0) ** p)))
    info = {"shift": shift, "residual_nl": res_nl, "rise_max": excess_up, "dip_max": excess_low, "C1": C1}
    return SolveReport(u, status, it, history, time.perf_counter() - t0, info)


def monotone_solve(model: LogisticModel, mu, barriers: BarrierSet, shift="adaptive", **kw) -> SolveReport:
    rep = monotone_iteration(model.op, model.k, mu, model.p, barriers.w_plus, barriers.w_minus, shift=shift,
                             k1=model.reaction.k1, **kw)
    sup_u = float(rep.u.max()) if rep.u.size else 0.0
    rep.info["tol_res_nl"] = model.tol_res_nl(sup_u)
    if rep.converged and rep.info["residual_nl"] > rep.info["tol_res_nl"]:
        rep.status = Status.MAX_ITER
    return rep


def solve_logistic(model: LogisticModel, mu, shift="adaptive", k2_method="auto", **kw) -> SolveReport:
    """Barriers plus monotone iteration; the constructive existence pipeline."""
    bs = build_barriers(model, mu, k2_method)
    rep = monotone_solve(model, mu, bs, shift=shift, **kw)
    rep.info["barriers"] = bs
    if rep.converged:
        rep.info["C_boundary_fit"] = boundary_constant(model, rep.u)
    return rep


def boundary_constant(model: LogisticModel, u, psi=None, width=None):
    """Fitted C in u <= psi + C d over the outer collar {d < width}."""
    d = model.boundary_distance
    width = 0.1 * max(float(d.max()), model.h) if width is None else width
    sel = (d < width) & (d > 0)
    psi = 0.0 if psi is None else psi
    excess = (u - psi)[sel] if np.ndim(psi) else u[sel] - psi
    return float(np.max(excess / d[sel]))


# -- annulus problem ----------------------------------------------------------

@dataclass
class AnnulusSolution:
    report: SolveReport
    model: LogisticModel
    mask: object
    op: DiscreteOperator
    k: np.ndarray
    u_by_delta: dict
    psi: np.ndarray
    C_boundary_fit: float
    outer_distance: np.ndarray

    @property
    def u(self):
        return self.report.u


def annulus_setup(model: LogisticModel, inner=None):
    """Mask, operator and k on Omega minus the oasis (or minus ``inner``)."""
    inner = model.reaction.oasis if inner is None else inner
    cache = model.__dict__.setdefault("_annulus_cache", {})
    if inner not in cache:
        dom = Difference(model.domain, inner)
        mask = build_mask(model.grid, dom)
        op = discretize(model.op_spec, model.grid, mask)
        k = model.reaction.k_at(mask.xy[:, 0], mask.xy[:, 1], model.h)
        cache[inner] = (dom, mask, op, k)
    return cache[inner]


def _restrict_to(model_mask, sub_mask, values):
    full = model_mask.to_grid(values)
    return sub_mask.from_grid(full)


def annulus_supersolution(model, mask_a, op_a, k_a, mu, delta, phi_max, cache=None, doublings=40):
    """M w with w the K1 solution on Omega at mu* > max(mu, lambda(Omega)).

    On Omega, k is floored by its minimum over the annulus so that K1 holds;
    on the annulus the floor is inactive and M w is a supersolution once
    M >= 1 and M w covers the inner data.
    """
    eig = model.eigen_omega
    mu_star = 1.1 * max(mu, eig.lambda_hi)
    k_floor = float(k_a.min())
    key = (round(mu_star, 12), delta)
    if cache is not None and key in cache:
        w_full = cache[key]
    else:
        k_hat = np.maximum(model.k, k_floor) + delta
        k1 = float(k_hat.max())
        C = (mu_star / float(k_hat.min())) ** (1.0 / (model.p - 1))
        alpha = ((mu_star - eig.lambda_hi) / k1) ** (1.0 / (model.p - 1))
        alpha = min(alpha, C)
        rep = monotone_iteration(model.op, k_hat, mu_star, model.p, np.full(model.mask.n, C), alpha * eig.phi, k1=k1)
        if not rep.converged:
            raise LogisticError("NO_SUPERSOLUTION", f"auxiliary K1 solve {rep.status.value}")
        w_full = rep.u
        if cache is not None:
            cache[key] = w_full
    w = _restrict_to(model.mask, mask_a, w_full)
    cut_inner = (op_a.mask.comp == 1) & (op_a.mask.nbr == -1)
    touching = cut_inner.any(axis=(0, 1))
    M = max(1.0, phi_max / float(w[touching].min())) if touching.any() and phi_max > 0 else 1.0
    for _ in range(doublings + 1):
        wp = M * w
        res = op_a.apply(wp) + mu * wp - (k_a + delta) * wp**model.p
        if float(res.max()) <= 1e-9 * max(1.0, float(np.abs((k_a + delta) * wp**model.p).max())):
            return wp, M
        M *= 2
    raise LogisticError("NO_SUPERSOLUTION", "annulus supersolution check failed")


def solve_annulus(model: LogisticModel, mu, phi_inner=1.0, delta_seq=(1e-1, 1e-2, 1e-3, 0.0), inner=None,
                  shift="adaptive", collar_width=None, cache=None, tol_cmp=TOL_CMP, barriers=None) -> AnnulusSolution:
    """Fh(u) + mu u = (k + delta) u^p on Omega minus the oasis, u = 0 outside and
    u = phi_inner on the oasis boundary, for each delta in ``delta_seq``.

    ``barriers`` = (w_plus, w_minus) on the annulus mask replaces the
    constructed pair; only valid with a single delta.
    """
    dom, mask_a, op_a, k_a = annulus_setup(model, inner)
    if callable(phi_inner):
        data = {0: 0.0, 1: phi_inner}
        phi_vals = np.asarray(phi_inner(mask_a.cut_xy[..., 0], mask_a.cut_xy[..., 1]))
        phi_max = float(np.max(np.where(mask_a.comp == 1, phi_vals, 0.0)))
        if np.any(phi_vals[mask_a.comp == 1] < 0):
            raise LogisticError("BAD_DATA", "inner data must be nonnegative")
    else:
        if phi_inner < 0:
            raise LogisticError("BAD_DATA", "inner data must be nonnegative")
        data = {0: 0.0, 1: float(phi_inner)}
        phi_max = float(phi_inner)
    op_a = op_a.with_boundary(data)
    u_by_delta = {}
    prev = None
    rep = None
    if barriers is not None and len(delta_seq) != 1:
        raise LogisticError("BAD_DATA", "explicit barriers need a single delta")
    for delta in delta_seq:
        if barriers is None:
            w_plus, M = annulus_supersolution(model, mask_a, op_a, k_a, mu, delta, phi_max, cache=cache)
            w_minus = None
        else:
            (w_plus, w_minus), M = barriers, float("nan")
            res = op_a.apply(w_plus) + mu * w_plus - (k_a + delta) * np.maximum(w_plus, 0) ** model.p
            if float(res.max()) > 1e-9 * max(1.0, float(np.abs((k_a + delta) * w_plus**model.p).max())):
                raise LogisticError("NO_SUPERSOLUTION", "supplied annulus supersolution fails the check")
        rep = monotone_iteration(op_a, k_a + delta, mu, model.p, w_plus, w_minus, shift=shift)
        if not rep.converged:
            raise LogisticError(rep.status.value, f"annulus solve at delta={delta} did not converge")
        rep.info["M"] = M
        if prev is not None:
            drop = float(np.max(prev - rep.u))
            if drop > tol_cmp * max(1.0, float(rep.u.max())):
                raise LogisticError("ORDERING_VIOLATION", f"u_delta not monotone in delta (drop {drop:.3g})")
        prev = rep.u
        u_by_delta[delta] = rep.u
    psi = solve_linear_extension(op_a, data)
    d_out = np.maximum(-model.domain.sd(mask_a.xy[:, 0], mask_a.xy[:, 1]), 0.0)
    if collar_width is None:
        # half the separation between the inner and outer boundaries
        sd_in = dom.inner.sd(mask_a.xy[:, 0], mask_a.xy[:, 1])
        collar_width = 0.5 * float(np.min(d_out + sd_in))
    width = collar_width
    sel = (d_out < width) & (d_out > 0)
    C_fit = float(np.max((rep.u - psi)[sel] / d_out[sel])) if sel.any() else float("nan")
    rep.info["C_boundary_fit"] = C_fit
    return AnnulusSolution(rep, model, mask_a, op_a, k_a, u_by_delta, psi, C_fit, d_out)


# -- classification -----------------------------------------------------------

class MuClass(str, Enum):
    NO_SOLUTION_LOW = "NO_SOLUTION_LOW"
    EXISTS = "EXISTS"
    NO_SOLUTION_HIGH = "NO_SOLUTION_HIGH"
    UNRESOLVED = "UNRESOLVED"


@dataclass
class Classification:
    mu: float
    label: MuClass
    pipeline: str = "not run"
    agrees: bool | None = None
    report: SolveReport | None = None
    detail: str = ""


def classify_mu(model: LogisticModel, mu, run_pipeline=True, probe_amplitude=1e3) -> Classification:
    """Place mu against the eigen brackets and, optionally, cross-check by
    running the pipeline (which must succeed exactly on EXISTS)."""
    eig = model.eigen_omega
    k2 = model.reaction.k_kind is KKind.K2
    eig0 = model.eigen_oasis if k2 else None
    if mu < eig.lambda_lo:
        label = MuClass.NO_SOLUTION_LOW
    elif mu <= eig.lambda_hi:
        label = MuClass.UNRESOLVED
    elif k2 and mu > eig0.lambda_hi:
        label = MuClass.NO_SOLUTION_HIGH
    elif k2 and mu >= eig0.lambda_lo:
        label = MuClass.UNRESOLVED
    else:
        label = MuClass.EXISTS
    out = Classification(float(mu), label)
    if not run_pipeline or label is MuClass.UNRESOLVED:
        return out
    if label is MuClass.EXISTS:
        try:
            rep = solve_logistic(model, mu)
        except PucciLogisticError as exc:
            out.pipeline, out.agrees, out.detail = exc.code, False, str(exc)
            return out
        positive = rep.converged and bool(np.all(rep.u > 0))
        out.pipeline = "CONVERGED" if positive else rep.status.value
        out.agrees, out.report = positive, rep
        return out
    if label is MuClass.NO_SOLUTION_LOW:
        try:
            build_subsolution(model, mu)
            out.pipeline, out.agrees = "SUBSOLUTION_BUILT", False
            return out
        except LogisticError as exc:
            out.detail = exc.code
        # from the supersolution the iteration must collapse to zero
        if k2:
            w_plus = build_supersolution_K2(model, mu).w_plus
        elif mu > 0:
            w_plus = build_supersolution_K1(model, mu)[0]
        else:
            w_plus = np.ones(model.mask.n)
        rep = monotone_iteration(model.op, model.k, mu, model.p, w_plus, None, tol_fix=1e-12, max_iter=5000)
        out.report = rep
        collapsed = rep.converged and float(rep.u.max()) < 1e-6
        out.pipeline = "DEGENERATES_TO_ZERO" if collapsed else rep.status.value
        out.agrees = collapsed
        return out
    # NO_SOLUTION_HIGH
    try:
        build_supersolution_K2(model, mu)
        out.pipeline, out.agrees = "SUPERSOLUTION_BUILT", False
        return out
    except LogisticError as exc:
        out.detail = exc.code
    probe = probe_oasis_divergence(model, mu, probe_amplitude)
    out.report = probe
    out.pipeline = f"NO_SUPERSOLUTION+{probe.status.value}"
    out.agrees = probe.status is Status.DIVERGED
    return out


def probe_oasis_divergence(model: LogisticModel, mu, amplitude=1e3, max_iter=5000) -> SolveReport:
    """Unshifted fixed point Fh(v_{n+1}) = -mu v_n on the zero set of k
    (where k u^p vanishes), started from large constant data."""
    t0 = time.perf_counter()
    op = model.oasis_op.with_boundary(0.0)
    v = np.full(op.n, float(amplitude))
    history = []
    status = Status.MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        rep = solve_dirichlet(DirichletProblem(op, 0.0, -mu * v), u0=v)
        v = rep.u
        sup = float(np.abs(v).max())
        history.append(sup)
        if rep.status is Status.DIVERGED or sup > BLOWUP_THRESHOLD:
            status = Status.DIVERGED
            break
        if sup < 1e-6:
            status = Status.CONVERGED
            break
    return SolveReport(v, status, it, history, time.perf_counter() - t0, {"mu": mu})
