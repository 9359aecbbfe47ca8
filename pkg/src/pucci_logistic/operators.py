"""Pointwise Pucci/Bellman operators on 2x2 symmetric matrices and their
monotone wide-stencil discretization.

Every discrete operator here is a max (or min) over a finite family of linear
stencils built from directional second differences, each with nonnegative
direction weights.  That structure makes the scheme degenerate elliptic and
lets the solver run Howard policy iteration on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import OperatorError
from .geometry import LATTICE_DIRECTIONS, DomainMask, direction_index


class Kind(str, Enum):
    LAPLACIAN = "laplacian"
    PUCCI_PLUS = "pucci_plus"
    PUCCI_MINUS = "pucci_minus"
    BELLMAN_SUP = "bellman_sup"


@dataclass(frozen=True)
class SymMat2:
    a11: float
    a12: float
    a22: float

    @classmethod
    def from_array(cls, m):
        m = np.asarray(m, dtype=float)
        return cls(m[0, 0], 0.5 * (m[0, 1] + m[1, 0]), m[1, 1])

    @classmethod
    def rotated_diag(cls, e1, e2, angle):
        c, s = math.cos(angle), math.sin(angle)
        return cls(e1 * c * c + e2 * s * s, (e1 - e2) * c * s, e1 * s * s + e2 * c * c)

    def to_array(self):
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    @property
    def trace(self):
        return self.a11 + self.a22

    @property
    def det(self):
        return self.a11 * self.a22 - self.a12 * self.a12

    @property
    def eigvals(self):
        """(e1, e2) with e1 <= e2, closed form."""
        half_tr = 0.5 * (self.a11 + self.a22)
        rad = math.hypot(0.5 * (self.a11 - self.a22), self.a12)
        return half_tr - rad, half_tr + rad

    def __add__(self, other):
        return SymMat2(self.a11 + other.a11, self.a12 + other.a12, self.a22 + other.a22)

    def __sub__(self, other):
        return SymMat2(self.a11 - other.a11, self.a12 - other.a12, self.a22 - other.a22)

    def __mul__(self, t):
        return SymMat2(t * self.a11, t * self.a12, t * self.a22)

    __rmul__ = __mul__

    def __neg__(self):
        return SymMat2(-self.a11, -self.a12, -self.a22)


def _pucci_eigs(e, lo, hi):
    e = np.asarray(e, dtype=float)
    return hi * np.maximum(e, 0.0) + lo * np.minimum(e, 0.0)


def pucci_plus(M: SymMat2, lam, Lam):
    """Lam * (sum of positive eigenvalues) + lam * (sum of negative ones)."""
    return float(np.sum(_pucci_eigs(M.eigvals, lam, Lam)))


def pucci_minus(M: SymMat2, lam, Lam):
    return float(np.sum(_pucci_eigs(M.eigvals, Lam, lam)))


# A control maps node coordinates (x, y) to the entries (a11, a12, a22) of a
# coefficient matrix A(x); the operator is sup over controls of tr(A(x) M).
Control = Callable[[np.ndarray, np.ndarray], tuple]


def constant_control(a11, a12, a22) -> Control:
    def control(x, y):
        ones = np.ones(np.shape(x))
        return a11 * ones, a12 * ones, a22 * ones

    return control


def rotating_anisotropy(lam, Lam, center=(0.5, 0.5), turns=1.0) -> Control:
    """A(x) = R(t) diag(Lam, lam) R(t)^T with t the polar angle about ``center``
    scaled by ``turns``; smooth away from the center, continuous everywhere
    once lam == Lam is approached, and within [lam, Lam] by construction."""

    def control(x, y):
        t = turns * np.arctan2(np.asarray(y) - center[1], np.asarray(x) - center[0])
        c, s = np.cos(t), np.sin(t)
        return Lam * c * c + lam * s * s, (Lam - lam) * c * s, Lam * s * s + lam * c * c

    return control


@dataclass(frozen=True)
class OperatorSpec:
    kind: Kind = Kind.LAPLACIAN
    lam: float = 1.0
    Lam: float = 1.0
    directions: int = 16
    controls: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.LAPLACIAN and (self.lam != 1.0 or self.Lam != 1.0):
            raise OperatorError("BAD_SPEC", "the Laplacian has lambda = Lambda = 1")
        if not 0 < self.lam <= self.Lam:
            raise OperatorError("BAD_SPEC", f"need 0 < lambda <= Lambda, got {self.lam}, {self.Lam}")
        if self.directions < 4 or self.directions % 2:
            raise OperatorError("BAD_SPEC", "directions must be an even integer >= 4")
        if self.kind is Kind.BELLMAN_SUP and not self.controls:
            raise OperatorError("BAD_SPEC", "BELLMAN_SUP needs at least one control")

    @property
    def x_independent(self):
        return self.kind is not Kind.BELLMAN_SUP

    def check_controls(self, x, y, tol=1e-12):
        """Raise ELLIPTICITY_VIOLATION if some A(x) leaves [lam, Lam] at the sample points."""
        for c, control in enumerate(self.controls):
            a11, a12, a22 = (np.asarray(v, dtype=float) for v in control(x, y))
            half_tr = 0.5 * (a11 + a22)
            rad = np.hypot(0.5 * (a11 - a22), a12)
            if np.any(half_tr - rad < self.lam - tol) or np.any(half_tr + rad > self.Lam + tol):
                raise OperatorError("ELLIPTICITY_VIOLATION", f"control {c} leaves [{self.lam}, {self.Lam}]")


def bellman_eval(op: OperatorSpec, x, M: SymMat2):
    """sup over controls of tr(A(x) M) at a single point x = (x, y)."""
    xs, ys = np.atleast_1d(x[0]), np.atleast_1d(x[1])
    op.check_controls(xs, ys)
    best = -np.inf
    for control in op.controls:
        a11, a12, a22 = (float(np.asarray(v).ravel()[0]) for v in control(xs, ys))
        best = max(best, a11 * M.a11 + 2 * a12 * M.a12 + a22 * M.a22)
    return best


x_dependent_eval = bellman_eval


def evaluate(op: OperatorSpec, M: SymMat2, x=(0.0, 0.0)):
    """Exact pointwise F(x, M)."""
    if op.kind is Kind.LAPLACIAN:
        return M.trace
    if op.kind is Kind.PUCCI_PLUS:
        return pucci_plus(M, op.lam, op.Lam)
    if op.kind is Kind.PUCCI_MINUS:
        return pucci_minus(M, op.lam, op.Lam)
    return bellman_eval(op, x, M)


def direction_pairs(K):
    """Orthogonal lattice pairs approximating the angles k*pi/K, k < K/2.

    Each angle snaps to the nearest lattice direction of radius <= 3 (shorter
    vector on ties); its partner is the exact 90-degree rotation.
    """
    vecs = LATTICE_DIRECTIONS
    angles = np.arctan2(vecs[:, 1], vecs[:, 0])
    lengths = np.hypot(vecs[:, 0], vecs[:, 1])
    pairs = []
    for k in range(K // 2):
        target = k * math.pi / K
        dev = np.abs((angles - target + math.pi / 2) % math.pi - math.pi / 2)
        order = np.lexsort((lengths, np.round(dev, 12)))
        v = vecs[order[0]]
        pair = (direction_index(v), direction_index((-v[1], v[0])))
        if pair not in pairs:
            pairs.append(pair)
    return pairs


def selling_decomposition(a11, a12, a22, max_iter=64):
    """Write A = sum_k rho_k e_k e_k^T with rho_k >= 0 and integer e_k.

    Returns three (rho, (ex, ey)) pairs, from an obtuse superbase found by
    Selling's reduction.
    """
    A = np.array([[a11, a12], [a12, a22]], dtype=float)
    b = [np.array([1, 0]), np.array([0, 1]), np.array([-1, -1])]
    for _ in range(max_iter):
        for i, j in ((0, 1), (0, 2), (1, 2)):
            if b[i] @ A @ b[j] > 1e-14 * (abs(a11) + abs(a22)):
                k = 3 - i - j
                b[i], b[k] = -b[i], b[i] - b[j]
                break
        else:
            break
    else:
        raise OperatorError("BAD_STENCIL", "Selling reduction did not terminate")
    out = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        k = 3 - i - j
        rho = -float(b[i] @ A @ b[j])
        e = (int(-b[k][1]), int(b[k][0]))
        out.append((max(rho, 0.0), e))
    return out


BoundaryData = "float | dict | Callable"


def boundary_values(mask: DomainMask, data, dirs=None):
    """Values of the Dirichlet data at every cut point, shape (ndir, 2, n).

    ``data`` is a constant, a dict {component: constant or f(x, y)} (missing
    components read 0), or a callable f(x, y, component).
    """
    dirs = range(mask.nbr.shape[0]) if dirs is None else dirs
    xy = mask.cut_xy[list(dirs)]
    comp = mask.comp[list(dirs)]
    x, y = xy[..., 0], xy[..., 1]
    if callable(data):
        vals = np.asarray(data(x, y, comp), dtype=float) * np.ones(x.shape)
    elif isinstance(data, dict):
        vals = np.zeros(x.shape)
        for c, v in data.items():
            sel = comp == c
            vals[sel] = (np.asarray(v(x[sel], y[sel]), dtype=float) if callable(v) else float(v))
    else:
        vals = np.full(x.shape, float(data))
    return vals


class DiscreteOperator:
    """Fh(u) = sense-extremum over controls c of sum_j w[c, j] * D_j u.

    D_j is the (Shortley-Weller) second difference along unit lattice direction
    j, with Dirichlet data at cut points.  Immutable once built;
    ``with_boundary`` shares the stencil matrices.
    """

    def __init__(self, spec: OperatorSpec, mask: DomainMask, boundary=0.0):
        self.spec = spec
        self.mask = mask
        self.h = mask.grid.h
        self.sense, self.dirs, weights = self._controls(spec, mask)
        self.weights = weights  # (nctrl, ndir) or (nctrl, ndir, n)
        if np.any(mask.nbr[self.dirs] == -2):
            raise OperatorError("BAD_STENCIL", "a stencil arm leaves the grid bounding box inside the domain")
        self._build_stencils()
        self.boundary = boundary
        self._set_boundary(boundary)

    # -- construction -----------------------------------------------------
    @staticmethod
    def _controls(spec, mask):
        ax = [direction_index((1, 0)), direction_index((0, 1))]
        if spec.kind is Kind.LAPLACIAN or (spec.kind in (Kind.PUCCI_PLUS, Kind.PUCCI_MINUS) and spec.lam == spec.Lam):
            # lam == Lam collapses Pucci to Lam * trace; every pair is consistent
            # with the trace, so the axis pair alone is used
            return 1, ax, np.array([[spec.Lam, spec.Lam]])
        if spec.kind in (Kind.PUCCI_PLUS, Kind.PUCCI_MINUS):
            pairs = direction_pairs(spec.directions)
            dirs = sorted({j for p in pairs for j in p})
            pos = {j: k for k, j in enumerate(dirs)}
            rows = []
            for j1, j2 in pairs:
                for a1 in (spec.lam, spec.Lam):
                    for a2 in (spec.lam, spec.Lam):
                        w = np.zeros(len(dirs))
                        w[pos[j1]] = a1
                        w[pos[j2]] = a2
                        rows.append(w)
            sense = 1 if spec.kind is Kind.PUCCI_PLUS else -1
            return sense, dirs, np.array(rows)
        # BELLMAN_SUP: node-wise Selling decomposition of each control
        x, y = mask.xy[:, 0], mask.xy[:, 1]
        spec.check_controls(x, y)
        per_control = []
        used = set()
        for control in spec.controls:
            a11, a12, a22 = (np.asarray(v, dtype=float) * np.ones(mask.n) for v in control(x, y))
            entries = []
            for n in range(mask.n):
                for rho, e in selling_decomposition(a11[n], a12[n], a22[n]):
                    if rho > 0:
                        j = direction_index(e)
                        used.add(j)
                        entries.append((n, j, rho * (e[0] ** 2 + e[1] ** 2)))
            per_control.append(entries)
        dirs = sorted(used) if used else ax
        pos = {j: k for k, j in enumerate(dirs)}
        W = np.zeros((len(spec.controls), len(dirs), mask.n))
        for c, entries in enumerate(per_control):
            for n, j, w in entries:
                W[c, pos[j], n] += w
        return 1, dirs, W

    def _build_stencils(self):
        m = self.mask
        n = m.n
        rows, cols, vals, dir_of = [], [], [], []
        self._cut_coef = np.zeros((len(self.dirs), 2, n))
        self._center = np.zeros((len(self.dirs), n))
        node = np.arange(n)
        for k, j in enumerate(self.dirs):
            L = self.h * math.hypot(*LATTICE_DIRECTIONS[j])
            ap = m.theta[j, 0] * L
            am = m.theta[j, 1] * L
            cp = 2.0 / (ap * (ap + am))
            cm = 2.0 / (am * (ap + am))
            self._center[k] = cp + cm
            for side, c in ((0, cp), (1, cm)):
                nb = m.nbr[j, side]
                full = nb >= 0
                rows.append(node[full])
                cols.append(nb[full])
                vals.append(c[full])
                dir_of.append(np.full(full.sum(), k))
                self._cut_coef[k, side] = np.where(full, 0.0, c)
            rows.append(node)
            cols.append(node)
            vals.append(-(cp + cm))
            dir_of.append(np.full(n, k))
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)
        self._vals = np.concatenate(vals)
        self._dir_of = np.concatenate(dir_of)
        self._D = [
            sp.csr_matrix((self._vals[self._dir_of == k], (self._rows[self._dir_of == k], self._cols[self._dir_of == k])), shape=(n, n))
            for k in range(len(self.dirs))
        ]

    def _set_boundary(self, data):
        bv = boundary_values(self.mask, data, self.dirs)
        if not np.all(np.isfinite(bv[self._cut_coef > 0])):
            raise OperatorError("BAD_BOUNDARY", "boundary data must be finite")
        self._bvals = bv
        self._b = np.einsum("ksn,ksn->kn", self._cut_coef, np.where(self._cut_coef > 0, bv, 0.0))

    def with_boundary(self, data):
        new = object.__new__(DiscreteOperator)
        new.__dict__.update(self.__dict__)
        new.boundary = data
        new._set_boundary(data)
        return new

    # -- evaluation -------------------------------------------------------
    @property
    def n(self):
        return self.mask.n

    @property
    def ncontrols(self):
        return self.weights.shape[0]

    def second_differences(self, u):
        u = np.asarray(u, dtype=float)
        return np.stack([D @ u for D in self._D]) + self._b

    def control_values(self, u):
        d2 = self.second_differences(u)
        if self.weights.ndim == 2:
            return self.weights @ d2
        return np.einsum("cjn,jn->cn", self.weights, d2)

    def apply(self, u):
        V = self.control_values(u)
        return V.max(axis=0) if self.sense > 0 else V.min(axis=0)

    __call__ = apply

    def apply_function(self, f):
        """Fh of a smooth function f(x, y) sampled at nodes, with f as boundary data."""
        op = self.with_boundary(lambda x, y, comp: f(x, y))
        return op.apply(self.mask.evaluate(f))

    def policy(self, u, previous=None, rtol=1e-13):
        """Index of the extremal control at each node; ties keep ``previous``."""
        V = self.control_values(u)
        pick = V.argmax(axis=0) if self.sense > 0 else V.argmin(axis=0)
        if previous is not None:
            best = V[pick, np.arange(self.n)]
            prev = V[previous, np.arange(self.n)]
            scale = rtol * (1.0 + np.abs(V).max(axis=0))
            keep = np.abs(prev - best) <= scale
            pick = np.where(keep, previous, pick)
        return pick

    def node_weights(self, policy):
        if self.weights.ndim == 2:
            return self.weights[policy].T  # (ndir, n)
        return self.weights[policy, :, np.arange(self.n)].T

    def assemble(self, policy):
        """Linear stencil (sparse L, vector b) with Fh(u) = L u + b under ``policy``."""
        W = self.node_weights(policy)
        data = W[self._dir_of, self._rows] * self._vals
        L = sp.csr_matrix((data, (self._rows, self._cols)), shape=(self.n, self.n))
        b = np.einsum("kn,kn->n", W, self._b)
        return L, b

    def diag_bound(self):
        """Largest center weight over nodes and controls (the CFL scale)."""
        if self.weights.ndim == 2:
            return float((self.weights @ self._center).max())
        return float(np.einsum("cjn,jn->cn", self.weights, self._center).max())

    def is_linear(self):
        return self.ncontrols == 1


def discretize(op: OperatorSpec, grid, mask: DomainMask, boundary=0.0) -> DiscreteOperator:
    if mask.grid != grid:
        raise OperatorError("MASK_MISMATCH", "mask was built on another grid")
    return DiscreteOperator(op, mask, boundary)
