"""Uniform grids, signed-distance domains and masks with cut-cell stencil arms."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import gcd

import numpy as np
from scipy import ndimage

from .errors import GeometryError

EXTERIOR, INTERIOR, NEAR_BOUNDARY = 0, 1, 2

# Primitive lattice directions with max(|a|, |b|) <= 3, one per line through the
# origin, ordered by angle in [0, pi).
LATTICE_DIRECTIONS = np.array(
    [
        (1, 0), (3, 1), (2, 1), (3, 2), (1, 1), (2, 3), (1, 2), (1, 3),
        (0, 1), (-1, 3), (-1, 2), (-2, 3), (-1, 1), (-3, 2), (-2, 1), (-3, 1),
    ],
    dtype=np.int64,
)
MAX_ARM_RADIUS = 3

# Cut-point component label for arms that end on an excluded node of a
# restricted mask rather than on the continuous boundary.
RESTRICTED_COMPONENT = -1


def direction_index(v):
    """Index into LATTICE_DIRECTIONS of the line spanned by integer vector ``v``."""
    a, b = int(v[0]), int(v[1])
    g = gcd(abs(a), abs(b))
    if g == 0:
        raise GeometryError("BAD_STENCIL", "zero direction vector")
    a, b = a // g, b // g
    if b < 0 or (b == 0 and a < 0):
        a, b = -a, -b
    hits = np.flatnonzero((LATTICE_DIRECTIONS[:, 0] == a) & (LATTICE_DIRECTIONS[:, 1] == b))
    if hits.size == 0:
        raise GeometryError("BAD_STENCIL", f"direction ({a}, {b}) exceeds stencil radius {MAX_ARM_RADIUS}")
    return int(hits[0])


@dataclass(frozen=True)
class Grid2D:
    """Square-cell node lattice: node (i, j) sits at origin + (i*h, j*h)."""

    nx: int
    ny: int
    h: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise GeometryError("BAD_GRID", f"need at least 8 nodes per axis, got {self.nx}x{self.ny}")
        if not self.h > 0:
            raise GeometryError("BAD_GRID", "spacing must be positive")

    @classmethod
    def box(cls, n, lo=(0.0, 0.0), hi=(1.0, 1.0)):
        """n nodes along x spanning [lo, hi]; ny follows from square cells."""
        h = (hi[0] - lo[0]) / (n - 1)
        ny = int(round((hi[1] - lo[1]) / h)) + 1
        if abs((ny - 1) * h - (hi[1] - lo[1])) > 1e-9 * max(1.0, hi[1] - lo[1]):
            raise GeometryError("BAD_GRID", "extent_y is not a multiple of h")
        return cls(n, ny, h, (float(lo[0]), float(lo[1])))

    @classmethod
    def unit_square(cls, n):
        return cls.box(n)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @cached_property
    def x(self):
        return self.origin[0] + self.h * np.arange(self.nx)

    @cached_property
    def y(self):
        return self.origin[1] + self.h * np.arange(self.ny)

    @cached_property
    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def scaled(self, t):
        return Grid2D(self.nx, self.ny, self.h * t, (self.origin[0] * t, self.origin[1] * t))


class DomainSpec:
    """A planar domain described by its signed distance (negative inside)."""

    def sd(self, x, y):
        raise NotImplementedError

    def component(self, x, y):
        """Boundary component label of points on the boundary (0 = outer)."""
        return np.zeros(np.shape(x), dtype=np.int64)

    def scaled(self, t):
        raise NotImplementedError

    def inflated(self, s):
        return Offset(self, s)

    def __sub__(self, other):
        return Difference(self, other)


@dataclass(frozen=True)
class Rect(DomainSpec):
    cx: float
    cy: float
    hx: float
    hy: float

    @classmethod
    def from_corners(cls, x0, y0, x1, y1):
        return cls((x0 + x1) / 2, (y0 + y1) / 2, abs(x1 - x0) / 2, abs(y1 - y0) / 2)

    def sd(self, x, y):
        qx = np.abs(np.asarray(x, dtype=float) - self.cx) - self.hx
        qy = np.abs(np.asarray(y, dtype=float) - self.cy) - self.hy
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        return outside + np.minimum(np.maximum(qx, qy), 0.0)

    def scaled(self, t):
        return Rect(self.cx * t, self.cy * t, self.hx * t, self.hy * t)

    @property
    def inradius(self):
        return min(self.hx, self.hy)


@dataclass(frozen=True)
class Disk(DomainSpec):
    cx: float
    cy: float
    r: float

    def sd(self, x, y):
        return np.hypot(np.asarray(x, dtype=float) - self.cx, np.asarray(y, dtype=float) - self.cy) - self.r

    def scaled(self, t):
        return Disk(self.cx * t, self.cy * t, self.r * t)

    @property
    def inradius(self):
        return self.r


@dataclass(frozen=True)
class Difference(DomainSpec):
    outer: DomainSpec
    inner: DomainSpec

    def sd(self, x, y):
        return np.maximum(self.outer.sd(x, y), -self.inner.sd(x, y))

    def component(self, x, y):
        so = self.outer.sd(x, y)
        si = -self.inner.sd(x, y)
        return np.where(so >= si, self.outer.component(x, y), 1 + self.inner.component(x, y))

    def scaled(self, t):
        return Difference(self.outer.scaled(t), self.inner.scaled(t))


@dataclass(frozen=True)
class Offset(DomainSpec):
    """``base`` inflated by ``s`` (deflated when s < 0); exact for disks."""

    base: DomainSpec
    s: float

    def sd(self, x, y):
        return self.base.sd(x, y) - self.s

    def component(self, x, y):
        return self.base.component(x, y)

    def scaled(self, t):
        return Offset(self.base.scaled(t), self.s * t)


def sd_gap(outer: DomainSpec, inner: DomainSpec, grid: Grid2D):
    """Smallest value of -sd_outer over grid nodes inside ``inner``.

    This is the node-sampled separation between ``inner`` and the boundary of
    ``outer``; it is negative when ``inner`` sticks out.
    """
    X, Y = grid.mesh
    si = inner.sd(X, Y)
    inside = si <= 0
    if not inside.any():
        raise GeometryError("UNRESOLVED_DOMAIN", "inner domain contains no grid node")
    return float(np.min(-outer.sd(X, Y)[inside]))


def is_nested(small: DomainSpec, big: DomainSpec, grid: Grid2D, tol=1e-12):
    """True when every grid node inside ``small`` is also inside ``big``."""
    X, Y = grid.mesh
    return bool(np.all(big.sd(X, Y)[small.sd(X, Y) < 0] < tol))


@dataclass(eq=False)
class DomainMask:
    """Node classification plus, for each unknown node, its 16 stencil lines.

    Arrays indexed ``[direction, side, node]`` with side 0 along +v and side 1
    along -v.  ``nbr`` holds the neighbour's unknown index, -1 for an arm cut by
    the boundary and -2 for an arm leaving the grid while still inside.
    ``theta`` is the fraction of the arm inside the domain and ``cut_xy`` the
    boundary point where the arm ends.
    """

    grid: Grid2D
    domain: DomainSpec | None
    index: np.ndarray  # (nx, ny) unknown index or -1
    ij: np.ndarray  # (n, 2)
    nbr: np.ndarray
    theta: np.ndarray
    cut_xy: np.ndarray  # (16, 2, n, 2)
    comp: np.ndarray
    kind: np.ndarray  # (n,) INTERIOR or NEAR_BOUNDARY
    parent: "DomainMask | None" = field(default=None, repr=False)

    @property
    def n(self):
        return self.ij.shape[0]

    @cached_property
    def xy(self):
        g = self.grid
        return np.column_stack([g.origin[0] + g.h * self.ij[:, 0], g.origin[1] + g.h * self.ij[:, 1]])

    @cached_property
    def classification(self):
        out = np.full(self.grid.shape, EXTERIOR, dtype=np.int8)
        out[self.ij[:, 0], self.ij[:, 1]] = self.kind
        return out

    @property
    def inside(self):
        return self.index >= 0

    def to_grid(self, values, fill=np.nan):
        out = np.full(self.grid.shape, fill, dtype=float)
        out[self.ij[:, 0], self.ij[:, 1]] = values
        return out

    def from_grid(self, array):
        return np.asarray(array)[self.ij[:, 0], self.ij[:, 1]]

    def evaluate(self, fn):
        """Sample a function f(x, y) at the unknown nodes."""
        return np.asarray(fn(self.xy[:, 0], self.xy[:, 1]), dtype=float) * np.ones(self.n)

    def same_nodes(self, other):
        return self.grid == other.grid and np.array_equal(self.index, other.index)

    def restrict(self, keep):
        """Sub-mask on the unknowns flagged by ``keep``.

        Arms that reached a dropped node end there (theta = 1) with a cut
        labelled RESTRICTED_COMPONENT, so zero boundary data amounts to
        extending fields by zero outside the kept set.
        """
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != (self.n,):
            raise GeometryError("MASK_MISMATCH", "keep flags must cover the unknowns")
        if not keep.any():
            raise GeometryError("UNRESOLVED_DOMAIN", "restriction keeps no node")
        new_of_old = np.full(self.n, -1, dtype=np.int64)
        new_of_old[keep] = np.arange(int(keep.sum()))
        nbr = self.nbr[:, :, keep].copy()
        theta = self.theta[:, :, keep].copy()
        cut_xy = self.cut_xy[:, :, keep].copy()
        comp = self.comp[:, :, keep].copy()
        full = nbr >= 0
        mapped = np.where(full, new_of_old[np.where(full, nbr, 0)], nbr)
        dropped = full & (mapped < 0)
        xy = self.xy
        cut_xy[dropped] = xy[nbr[dropped]]
        comp[dropped] = RESTRICTED_COMPONENT
        theta[dropped] = 1.0
        mapped[dropped] = -1
        ij = self.ij[keep]
        index = np.full(self.grid.shape, -1, dtype=np.int64)
        index[ij[:, 0], ij[:, 1]] = np.arange(ij.shape[0])
        kind = np.where((mapped >= 0).all(axis=(0, 1)), INTERIOR, NEAR_BOUNDARY).astype(np.int8)
        return DomainMask(self.grid, self.domain, index, ij, mapped, theta, cut_xy, comp, kind, parent=self)


def _find_cuts(domain, px, py, dx, dy, sd_tol, samples):
    """First boundary crossing along p + t*d, t in (0, 1]; returns t (1 if none) and a hit flag."""
    t = np.linspace(0.0, 1.0, samples)
    vals = domain.sd(px[:, None] + t[None, :] * dx[:, None], py[:, None] + t[None, :] * dy[:, None])
    hit = vals[:, 1:] >= -sd_tol
    any_hit = hit.any(axis=1)
    k = np.argmax(hit, axis=1) + 1
    lo = t[k - 1].copy()
    hi = t[k].copy()
    # sub-tolerance endpoints count as boundary points; bisect on sd = 0 otherwise
    rows = np.flatnonzero(any_hit)
    a, b = lo[rows], hi[rows]
    x0, y0, ddx, ddy = px[rows], py[rows], dx[rows], dy[rows]
    for _ in range(52):
        mid = 0.5 * (a + b)
        inside = domain.sd(x0 + mid * ddx, y0 + mid * ddy) < 0
        a = np.where(inside, mid, a)
        b = np.where(inside, b, mid)
    tcut = np.ones_like(px)
    tcut[rows] = 0.5 * (a + b)
    return tcut, any_hit


def build_mask(grid: Grid2D, dom: DomainSpec) -> DomainMask:
    """Classify grid nodes against ``dom`` and measure all 16 stencil lines."""
    X, Y = grid.mesh
    sd = dom.sd(X, Y)
    sd_tol = 1e-6 * grid.h
    inside = sd < -sd_tol
    if not inside.any():
        raise GeometryError("UNRESOLVED_DOMAIN", "no interior node")
    labels, ncomp = ndimage.label(inside)
    core = ndimage.binary_erosion(inside, structure=np.ones((3, 3), dtype=bool))
    for c in range(1, ncomp + 1):
        if not core[labels == c].any():
            raise GeometryError("UNRESOLVED_DOMAIN", "a component is thinner than 3h at this resolution")

    ij = np.argwhere(inside)
    n = ij.shape[0]
    index = np.full(grid.shape, -1, dtype=np.int64)
    index[ij[:, 0], ij[:, 1]] = np.arange(n)
    px = grid.origin[0] + grid.h * ij[:, 0]
    py = grid.origin[1] + grid.h * ij[:, 1]

    ndir = len(LATTICE_DIRECTIONS)
    nbr = np.empty((ndir, 2, n), dtype=np.int64)
    theta = np.ones((ndir, 2, n))
    cut_xy = np.zeros((ndir, 2, n, 2))
    comp = np.zeros((ndir, 2, n), dtype=np.int64)
    for j, (a, b) in enumerate(LATTICE_DIRECTIONS):
        samples = 4 * max(abs(a), abs(b)) + 1
        for side, sign in enumerate((1, -1)):
            qi = ij[:, 0] + sign * a
            qj = ij[:, 1] + sign * b
            dx = np.full(n, sign * a * grid.h)
            dy = np.full(n, sign * b * grid.h)
            tcut, hit = _find_cuts(dom, px, py, dx, dy, sd_tol, samples)
            in_grid = (qi >= 0) & (qi < grid.nx) & (qj >= 0) & (qj < grid.ny)
            q_idx = np.where(in_grid, index[np.clip(qi, 0, grid.nx - 1), np.clip(qj, 0, grid.ny - 1)], -1)
            full = (~hit) & (q_idx >= 0)
            cut = hit
            nb = np.where(full, q_idx, np.where(cut, -1, -2))
            nbr[j, side] = nb
            theta[j, side] = np.where(cut, tcut, 1.0)
            cx = px + theta[j, side] * dx
            cy = py + theta[j, side] * dy
            cut_xy[j, side, :, 0] = cx
            cut_xy[j, side, :, 1] = cy
            comp[j, side] = np.where(cut, dom.component(cx, cy), 0)
    kind = np.where((nbr >= 0).all(axis=(0, 1)), INTERIOR, NEAR_BOUNDARY).astype(np.int8)
    return DomainMask(grid, dom, index, ij, nbr, theta, cut_xy, comp, kind)


@dataclass(eq=False)
class DistanceField:
    """Distance to the boundary at the unknown nodes of a mask."""

    mask: DomainMask
    values: np.ndarray

    def collar(self, delta):
        """Indices of unknown nodes with d < delta."""
        if not delta > self.mask.grid.h:
            raise GeometryError("EMPTY_COLLAR", f"collar width {delta} must exceed h = {self.mask.grid.h}")
        nodes = np.flatnonzero(self.values < delta)
        if nodes.size == 0:
            raise GeometryError("EMPTY_COLLAR", f"no node within {delta} of the boundary")
        return nodes


def distance_field(grid: Grid2D, dom: DomainSpec, mask: DomainMask | None = None) -> DistanceField:
    mask = build_mask(grid, dom) if mask is None else mask
    d = -dom.sd(mask.xy[:, 0], mask.xy[:, 1])
    return DistanceField(mask, np.maximum(d, 0.0))


def collar(dist: DistanceField, delta):
    return dist.collar(delta)
