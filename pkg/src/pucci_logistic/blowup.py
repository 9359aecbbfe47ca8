"""Large solutions on the domain minus the oasis, and the two asymptotic
regimes of the existence window."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowupError
from .logistic import KKind, LogisticModel, solve_annulus, solve_logistic
from .solver import TOL_CMP


@dataclass
class BlowupResult:
    minimal_candidate: np.ndarray | None
    maximal_candidate: np.ndarray | None
    data_sequence: list
    domain_sequence: list
    saturation: float
    probe: np.ndarray
    mask: object
    history: list = field(default_factory=list)
    saturated: bool = True
    rows: list = field(default_factory=list)

    def probe_values(self, which="minimal"):
        u = self.minimal_candidate if which == "minimal" else self.maximal_candidate
        return u[self.probe]


def _require_k2(model):
    if model.reaction.k_kind is not KKind.K2:
        raise BlowupError("BAD_REACTION", "large solutions need an oasis (K2)")


def probe_set(model: LogisticModel, mask, d_probe):
    """Annulus unknowns at distance >= d_probe from the oasis."""
    return model.reaction.oasis.sd(mask.xy[:, 0], mask.xy[:, 1]) >= d_probe


def saturation(u_next, u_prev, probe):
    if not probe.any():
        raise BlowupError("EMPTY_PROBE", "no node in the probe set")
    return float(np.max(np.abs(u_next[probe] - u_prev[probe]) / (1 + u_prev[probe])))


def default_scale(model, mu):
    """sup of the window solution at mu, or 1 outside the window."""
    try:
        rep = solve_logistic(model, mu)
        return float(rep.u.max()) if rep.converged else 1.0
    except Exception:
        return 1.0


def minimal_blowup(model: LogisticModel, mu, n_seq=None, d_probe=None, sat_tol=1e-2, scale=None,
                   delta_seq=(0.0,), tol_cmp=TOL_CMP, cache=None) -> BlowupResult:
    """Annulus solutions with inner data n along an increasing sequence."""
    _require_k2(model)
    if n_seq is None:
        scale = default_scale(model, mu) if scale is None else scale
        n_seq = [2.0**j * scale for j in range(13)]
    n_seq = [float(n) for n in n_seq]
    if any(b <= a for a, b in zip(n_seq, n_seq[1:])) or n_seq[0] < 0:
        raise BlowupError("BAD_SEQUENCE", "n_seq must be nonnegative and increasing")
    d_probe = 0.1 * model.oasis_gap if d_probe is None else d_probe
    cache = {} if cache is None else cache
    prev, mask, history, rows = None, None, [], []
    sat = float("nan")
    for i, n in enumerate(n_seq):
        # (n / n_prev) u_prev is a supersolution for data n (p > 1) and u_prev a
        # subsolution, so each member starts from its predecessor
        warm = None if prev is None or n_seq[i - 1] <= 0 or len(delta_seq) != 1 else ((n / n_seq[i - 1]) * prev, prev)
        sol = solve_annulus(model, mu, phi_inner=n, delta_seq=delta_seq, cache=cache, barriers=warm)
        u, mask = sol.u, sol.mask
        probe = probe_set(model, mask, d_probe)
        if prev is not None:
            drop = float(np.max(prev - u))
            if drop > tol_cmp * max(1.0, float(u.max())):
                raise BlowupError("ORDERING_VIOLATION", f"u_n not nondecreasing at n={n} (drop {drop:.3g})")
            sat = saturation(u, prev, probe)
        history.append(sat)
        rows.append(("minimal", n, float(u[probe].max()), sat))
        prev = u
    res = BlowupResult(prev, None, n_seq, [], sat, probe, mask, history, rows=rows)
    res.saturated = bool(sat < sat_tol)
    return res


def maximal_blowup(model: LogisticModel, mu, inflation_seq=None, n_big=None, d_probe=None, minimal=None,
                   delta_seq=(0.0,), tol_cmp=TOL_CMP, cache=None) -> BlowupResult:
    """Annulus solutions outside shrinking inflations of the oasis.

    Values live on the full annulus mask: nodes between the oasis and an
    inflated oasis read +inf, standing in for the unbounded data there.
    """
    _require_k2(model)
    h = model.h
    inflation_seq = [8 * h, 4 * h, 2 * h] if inflation_seq is None else [float(s) for s in inflation_seq]
    if any(b >= a for a, b in zip(inflation_seq, inflation_seq[1:])):
        raise BlowupError("BAD_SEQUENCE", "inflations must decrease")
    if any(0 < s < 2 * h - 1e-12 or s < 0 for s in inflation_seq):
        raise BlowupError("NESTED_DOMAIN_UNRESOLVED", "inflation below 2h")
    if n_big is None:
        if minimal is None:
            raise BlowupError("BAD_SEQUENCE", "n_big or a minimal result is required")
        n_big = minimal.data_sequence[-1]
    d_probe = 0.1 * model.oasis_gap if d_probe is None else d_probe
    oasis = model.reaction.oasis
    cache = {} if cache is None else cache
    ref_mask = minimal.mask if minimal is not None else None
    prev, history, rows, fields = None, [], [], []
    for s in inflation_seq:
        inner = oasis.inflated(s) if s > 0 else oasis
        sol = solve_annulus(model, mu, phi_inner=n_big, delta_seq=delta_seq, inner=inner, cache=cache)
        if ref_mask is None:
            ref_mask = solve_annulus(model, mu, phi_inner=n_big, delta_seq=delta_seq, cache=cache).mask
        full = ref_mask.from_grid(sol.mask.to_grid(sol.u, fill=np.inf))
        fields.append(full)
        if prev is not None:
            both = np.isfinite(prev) & np.isfinite(full)
            if np.any(np.isinf(full) & np.isfinite(prev)):
                raise BlowupError("ORDERING_VIOLATION", "inflated oasis does not shrink")
            rise = float(np.max(full[both] - prev[both])) if both.any() else 0.0
            if rise > tol_cmp * max(1.0, float(full[np.isfinite(full)].max())):
                raise BlowupError("ORDERING_VIOLATION", f"v_s not nonincreasing at s={s} (rise {rise:.3g})")
        probe = probe_set(model, ref_mask, max(d_probe, inflation_seq[0] + 1e-12))
        rows.append(("maximal", s, float(full[probe].max()), float("nan")))
        prev = full
    probe = probe_set(model, ref_mask, max(d_probe, inflation_seq[0] + 1e-12))
    res = BlowupResult(minimal.minimal_candidate if minimal is not None else None, prev, [n_big], inflation_seq,
                       float("nan"), probe, ref_mask, rows=rows)
    res.history = fields
    if minimal is not None:
        gap = float(np.max(minimal.minimal_candidate[probe] - prev[probe]))
        res.saturation = minimal.saturation
        if gap > tol_cmp * max(1.0, float(prev[probe].max())):
            raise BlowupError("ORDERING_VIOLATION", f"minimal exceeds maximal on the probe set by {gap:.3g}")
    return res


def blowup_pair(model, mu, n_seq=None, inflation_seq=None, d_probe=None, sat_tol=1e-2, scale=None):
    cache = {}
    mn = minimal_blowup(model, mu, n_seq, d_probe, sat_tol, scale, cache=cache)
    mx = maximal_blowup(model, mu, inflation_seq, d_probe=d_probe, minimal=mn, cache=cache)
    return mn, mx


# -- asymptotics --------------------------------------------------------------

def asymptotics_low(model: LogisticModel, eps_seq=(0.5, 0.25, 0.125, 0.0625), relative=True, check=True):
    """Rows (eps, sup u, sup |u/sup u - phi|) at mu = lambda_hi + eps."""
    eig = model.eigen_omega
    rows = []
    for e in eps_seq:
        eps = e * eig.lambda_est if relative else e
        rep = solve_logistic(model, eig.lambda_hi + eps)
        if not rep.converged:
            raise BlowupError(rep.status.value, f"solve at eps={eps} did not converge")
        sup = float(rep.u.max())
        rows.append((eps, sup, float(np.max(np.abs(rep.u / sup - eig.phi)))))
    if check:
        sups = [r[1] for r in rows]
        if any(b >= a for a, b in zip(sups, sups[1:])):
            raise BlowupError("NOT_MONOTONE", "sup u does not decrease with eps")
    return rows


def asymptotics_high(model: LogisticModel, eps_seq=(0.2, 0.1, 0.05, 0.025), relative=True, minimal=None,
                     d_probe=None, check=True):
    """Rows (eps, inf over the oasis of u, oasis-normalized distance to the
    oasis eigenfunction, probe distance to the minimal large solution) at
    mu = lambda_lo(oasis) - eps.

    No window solution exists at the top of the window, so the data scale of
    the reference large solution is the largest sup u over the table.
    """
    _require_k2(model)
    eig0 = model.eigen_oasis
    mu_top = eig0.lambda_lo
    z = model.oasis_nodes
    sols = []
    for e in eps_seq:
        eps = e * eig0.lambda_est if relative else e
        if eps <= eig0.width:
            raise BlowupError("UNRESOLVED", f"eps={eps} within the oasis bracket width")
        rep = solve_logistic(model, mu_top - eps)
        if not rep.converged:
            raise BlowupError(rep.status.value, f"solve at eps={eps} did not converge")
        sols.append((eps, rep.u))
    if minimal is None:
        scale = max(float(u.max()) for _, u in sols)
        minimal = minimal_blowup(model, mu_top, d_probe=d_probe, scale=scale)
    ann, probe, U = minimal.mask, minimal.probe, minimal.minimal_candidate
    rows = []
    for eps, u in sols:
        uz = u[z]
        dist = float(np.max(np.abs(uz / uz.max() - eig0.phi)))
        on_ann = ann.from_grid(model.mask.to_grid(u))
        probe_dist = float(np.max(np.abs(on_ann[probe] - U[probe]) / (1 + U[probe])))
        rows.append((eps, float(uz.min()), dist, probe_dist))
    if check:
        infs = [r[1] for r in rows]
        if any(b <= a for a, b in zip(infs, infs[1:])):
            raise BlowupError("NOT_MONOTONE", "inf over the oasis does not grow as eps shrinks")
    return rows
