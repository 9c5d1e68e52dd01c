"""Axis-aligned box regions, lattice discretizations, and cone geometry.

A region is a finite union of half-open boxes ``[lo, hi)`` kept in a
disjoint normal form, so its Lebesgue measure is an exact finite sum of box
volumes and scalings, translations, unions and intersections stay exact.
Lattice discretizations (integer sites within distance ``rho`` of a region)
and the finite cone covers used by on-line nearest-neighbour constructions
live here as well.
"""

import itertools
import json
import math

import numpy as np

__all__ = [
    "Region",
    "LatticeSet",
    "Cone",
    "cone_cover",
]


def _as_points(arr, dim, name):
    a = np.asarray(arr, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.shape[-1] != dim:
        raise ValueError(f"{name}: expected dimension {dim}, got {a.shape[-1]}")
    return a


def _boxes_disjoint(lo, hi):
    """True if no two half-open boxes overlap."""
    n = lo.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if np.all(np.maximum(lo[i], lo[j]) < np.minimum(hi[i], hi[j])):
                return False
    return True


def _normalize_boxes(lo, hi):
    """Rewrite an arbitrary finite box union as disjoint boxes.

    Uses the grid induced by all box endpoints: each grid cell is either
    contained in some input box or disjoint from all of them, so membership
    tests are exact comparisons with no arithmetic.  Adjacent cells are
    merged along the last axis to keep the representation small.
    """
    dim = lo.shape[1]
    cuts = [np.unique(np.concatenate([lo[:, i], hi[:, i]])) for i in range(dim)]
    cells = []
    for idx in itertools.product(*(range(len(c) - 1) for c in cuts)):
        clo = tuple(cuts[i][idx[i]] for i in range(dim))
        chi = tuple(cuts[i][idx[i] + 1] for i in range(dim))
        for b in range(lo.shape[0]):
            if all(lo[b, i] <= clo[i] and chi[i] <= hi[b, i] for i in range(dim)):
                cells.append((clo, chi))
                break
    if not cells:
        return np.empty((0, dim)), np.empty((0, dim))
    # merge runs along the last axis
    cells.sort(key=lambda c: (c[0][:-1], c[1][:-1], c[0][-1]))
    merged = []
    for clo, chi in cells:
        if merged:
            plo, phi = merged[-1]
            if plo[:-1] == clo[:-1] and phi[:-1] == chi[:-1] and phi[-1] == clo[-1]:
                merged[-1] = (plo, phi[:-1] + (chi[-1],))
                continue
        merged.append((clo, chi))
    mlo = np.array([c[0] for c in merged], dtype=float)
    mhi = np.array([c[1] for c in merged], dtype=float)
    return mlo, mhi


class Region:
    """Finite union of half-open axis-aligned boxes in R^d."""

    __slots__ = ("dim", "lo", "hi")

    def __init__(self, dim, boxes=(), _trusted=False):
        if dim < 1:
            raise ValueError("dimension must be a positive integer")
        self.dim = int(dim)
        boxes = list(boxes)
        if boxes:
            lo = np.array([b[0] for b in boxes], dtype=float)
            hi = np.array([b[1] for b in boxes], dtype=float)
            if lo.shape[1] != self.dim or hi.shape[1] != self.dim:
                raise ValueError("box dimensions do not match region dimension")
            if not np.all(lo < hi):
                raise ValueError("degenerate box: need lo[i] < hi[i] on every axis")
            if not _trusted and not _boxes_disjoint(lo, hi):
                lo, hi = _normalize_boxes(lo, hi)
        else:
            lo = np.empty((0, self.dim))
            hi = np.empty((0, self.dim))
        lo.flags.writeable = False
        hi.flags.writeable = False
        self.lo = lo
        self.hi = hi

    # -- constructors ------------------------------------------------------

    @classmethod
    def box(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        return cls(lo.size, [(lo, hi)], _trusted=True)

    @classmethod
    def unit_cube(cls, dim):
        return cls.box(np.zeros(dim), np.ones(dim))

    @classmethod
    def centered_cube(cls, half_width, dim):
        """The cube [-w, w)^d."""
        if half_width <= 0:
            raise ValueError("half_width must be positive")
        w = float(half_width)
        return cls.box(np.full(dim, -w), np.full(dim, w))

    @classmethod
    def empty(cls, dim):
        return cls(dim)

    # -- basic queries -----------------------------------------------------

    @property
    def boxes(self):
        return [(tuple(l), tuple(h)) for l, h in zip(self.lo, self.hi)]

    @property
    def n_boxes(self):
        return self.lo.shape[0]

    def measure(self):
        """Exact Lebesgue measure (sum of disjoint box volumes)."""
        if self.n_boxes == 0:
            return 0.0
        return float(np.sum(np.prod(self.hi - self.lo, axis=1)))

    def bounds(self):
        """Bounding box (lo, hi) of the whole region; None when empty."""
        if self.n_boxes == 0:
            return None
        return self.lo.min(axis=0), self.hi.max(axis=0)

    def contains_points(self, points):
        """Boolean array: which points lie in the region (half-open test)."""
        pts = _as_points(points, self.dim, "points")
        inside = np.zeros(pts.shape[0], dtype=bool)
        for l, h in zip(self.lo, self.hi):
            inside |= np.all(pts >= l, axis=1) & np.all(pts < h, axis=1)
        return inside

    def contains(self, point):
        return bool(self.contains_points(np.asarray(point, dtype=float))[0])

    # -- set algebra -------------------------------------------------------

    def scale(self, t):
        """The scaled region t*A; measure scales by t^d."""
        if t <= 0:
            raise ValueError("scale factor must be positive")
        return Region(self.dim, zip(self.lo * t, self.hi * t), _trusted=True)

    def translate(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise ValueError("translation vector has wrong dimension")
        return Region(self.dim, zip(self.lo + y, self.hi + y), _trusted=True)

    def intersect(self, other):
        if not isinstance(other, Region) or other.dim != self.dim:
            raise ValueError("intersect requires a region of the same dimension")
        boxes = []
        for al, ah in zip(self.lo, self.hi):
            lo = np.maximum(al, other.lo)
            hi = np.minimum(ah, other.hi)
            keep = np.all(lo < hi, axis=1)
            boxes.extend(zip(lo[keep], hi[keep]))
        # pairwise intersections of two disjoint families are disjoint
        return Region(self.dim, boxes, _trusted=True)

    def union(self, other):
        if not isinstance(other, Region) or other.dim != self.dim:
            raise ValueError("union requires a region of the same dimension")
        return Region(self.dim, list(zip(self.lo, self.hi)) + list(zip(other.lo, other.hi)))

    def is_subset_of(self, other, tol=1e-9):
        """Measure test for A ⊆ B (exact up to float summation)."""
        m = self.measure()
        return abs(self.intersect(other).measure() - m) <= tol * max(1.0, m)

    # -- discretization ----------------------------------------------------

    def discretize(self, rho=None):
        """Integer sites z with dist(z, closure(region)) <= rho.

        rho must be at least sqrt(d), the smallest value for which every
        eps-cube (eps <= 1) around a site stays inside the ball B_rho(site).
        """
        root_d = math.sqrt(self.dim)
        if rho is None:
            rho = root_d
        if rho < root_d:
            raise ValueError(f"rho must be >= sqrt(d) = {root_d}")
        if self.n_boxes == 0:
            return LatticeSet(self.dim, frozenset())
        lo, hi = self.bounds()
        axes = [
            np.arange(math.ceil(lo[i] - rho), math.floor(hi[i] + rho) + 1)
            for i in range(self.dim)
        ]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        dist2 = np.full(grid.shape[0], np.inf)
        for bl, bh in zip(self.lo, self.hi):
            dx = np.maximum(np.maximum(bl - grid, grid - bh), 0.0)
            dist2 = np.minimum(dist2, np.sum(dx * dx, axis=1))
        keep = grid[dist2 <= rho * rho]
        return LatticeSet(self.dim, frozenset(map(tuple, keep.astype(int).tolist())))

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        return {"dim": self.dim, "boxes": [[list(l), list(h)] for l, h in self.boxes]}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(d["dim"], [(b[0], b[1]) for b in d["boxes"]])

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    def __eq__(self, other):
        # representation equality on the disjoint normal form
        if not isinstance(other, Region) or other.dim != self.dim:
            return NotImplemented
        a = sorted(map(tuple, np.concatenate([self.lo, self.hi], axis=1).tolist()))
        b = sorted(map(tuple, np.concatenate([other.lo, other.hi], axis=1).tolist()))
        return a == b

    def __hash__(self):
        return hash((self.dim, tuple(sorted(self.boxes))))

    def __repr__(self):
        return f"Region(dim={self.dim}, n_boxes={self.n_boxes}, measure={self.measure():.6g})"


class LatticeSet:
    """Finite set of integer lattice sites."""

    __slots__ = ("dim", "sites")

    def __init__(self, dim, sites):
        self.dim = int(dim)
        sites = frozenset(tuple(int(c) for c in s) for s in sites)
        for s in sites:
            if len(s) != self.dim:
                raise ValueError("site dimension mismatch")
        self.sites = sites

    def as_array(self):
        """Sites as a sorted (n, d) integer array (canonical order)."""
        if not self.sites:
            return np.empty((0, self.dim), dtype=int)
        return np.array(sorted(self.sites), dtype=int)

    def issubset(self, other):
        return self.sites <= other.sites

    def __len__(self):
        return len(self.sites)

    def __contains__(self, site):
        return tuple(int(c) for c in site) in self.sites

    def __iter__(self):
        return iter(sorted(self.sites))

    def __eq__(self, other):
        return isinstance(other, LatticeSet) and self.dim == other.dim and self.sites == other.sites

    def __hash__(self):
        return hash((self.dim, self.sites))

    def __repr__(self):
        return f"LatticeSet(dim={self.dim}, n_sites={len(self.sites)})"


class Cone:
    """Open cone: points p with angle(axis, p - apex) < half_angle."""

    __slots__ = ("apex", "axis", "half_angle")

    def __init__(self, apex, axis, half_angle):
        apex = np.asarray(apex, dtype=float)
        axis = np.asarray(axis, dtype=float)
        if apex.shape != axis.shape or apex.ndim != 1:
            raise ValueError("apex and axis must be vectors of equal dimension")
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError("axis must be a unit vector (|axis| = 1 within 1e-12)")
        if not (0.0 < half_angle < math.pi / 2):
            raise ValueError("half_angle must lie in (0, pi/2)")
        apex.flags.writeable = False
        axis.flags.writeable = False
        self.apex = apex
        self.axis = axis
        self.half_angle = float(half_angle)

    @property
    def dim(self):
        return self.apex.size

    def contains(self, p):
        """Strict membership test; the apex itself is rejected as input."""
        p = np.asarray(p, dtype=float)
        v = p - self.apex
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            raise ValueError("cone membership is undefined at the apex")
        return float(np.dot(self.axis, v)) / nv > math.cos(self.half_angle)

    def contains_points(self, points):
        """Vectorized strict membership; rows equal to the apex give False."""
        pts = _as_points(points, self.dim, "points")
        v = pts - self.apex
        nv = np.linalg.norm(v, axis=1)
        ok = nv > 0
        out = np.zeros(pts.shape[0], dtype=bool)
        out[ok] = (v[ok] @ self.axis) / nv[ok] > math.cos(self.half_angle)
        return out

    def __repr__(self):
        return f"Cone(dim={self.dim}, half_angle={self.half_angle:.6g})"


_SUPPORTED_COVER_ANGLES = (math.pi / 12, math.pi / 6)


def _verify_cover(axes, half_angle, dim, n=100_000, seed=20240817):
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    best = (dirs @ np.asarray(axes).T).max(axis=1)
    return bool(np.all(best > math.cos(half_angle)))


def cone_cover(dim, half_angle):
    """Finite family of open cones at the origin whose union covers R^d \\ {0}.

    Supports half angles pi/12 and pi/6.  Covering is certified by rejection
    sampling of 1e5 random directions (almost-sure coverage; the boundary
    rays between adjacent cones form a null set).
    """
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    if not any(abs(half_angle - a) <= 1e-12 for a in _SUPPORTED_COVER_ANGLES):
        raise ValueError("unsupported half_angle: only pi/12 and pi/6 are provided")
    origin = np.zeros(dim)
    if dim == 1:
        axes = [np.array([1.0]), np.array([-1.0])]
    elif dim == 2:
        m = int(round(math.pi / half_angle))  # 12 for pi/12, 6 for pi/6
        ang = 2 * math.pi * np.arange(m) / m
        axes = [np.array([math.cos(a), math.sin(a)]) for a in ang]
    else:
        axes = _greedy_cover_axes(dim, half_angle)
    if not _verify_cover(axes, half_angle, dim):
        raise RuntimeError("cone cover failed rejection-sampling verification")
    return [Cone(origin, ax, half_angle) for ax in axes]


def _greedy_cover_axes(dim, half_angle, n_candidates=200_000, seed=987654321):
    """Greedy angular cover: pick axes until every sampled direction lies
    within 0.7*half_angle of one, leaving margin for unsampled directions."""
    rng = np.random.default_rng(seed)
    cand = rng.standard_normal((n_candidates, dim))
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    thresh = math.cos(0.7 * half_angle)
    covered = np.zeros(n_candidates, dtype=bool)
    axes = []
    while not covered.all():
        i = int(np.argmin(covered))
        ax = cand[i]
        axes.append(ax)
        covered |= cand @ ax > thresh
    return axes
