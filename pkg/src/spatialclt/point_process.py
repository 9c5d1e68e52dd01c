"""Reproducible point process sampling on box-union regions.

Homogeneous Poisson and binomial (fixed-count uniform) samples, uniform
[0,1] marks, and the coupled prefix-stable stream that ties a Poisson
sample to the nested family of fixed-count samples.  Everything is a pure
function of (seed, parameters): the same seed gives bit-identical output.
"""

import csv
import json

import numpy as np

from ._util import derive_seed
from .geometry import Region

__all__ = [
    "PointConfiguration",
    "MarkedConfiguration",
    "CoupledStream",
    "sample_poisson",
    "sample_binomial",
    "sample_uniform_points",
    "attach_marks",
    "coupled_stream",
    "derive_seed",
]


class PointConfiguration:
    """Finite point set in R^d with sampling provenance."""

    __slots__ = ("dim", "points", "region", "provenance")

    def __init__(self, dim, points, region=None, provenance=None):
        self.dim = int(dim)
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        pts = np.ascontiguousarray(pts)
        pts.flags.writeable = False
        self.points = pts
        self.region = region
        self.provenance = dict(provenance or {})

    def __len__(self):
        return self.points.shape[0]

    def restrict(self, region):
        """Sub-configuration of points inside `region`."""
        keep = region.contains_points(self.points) if len(self) else np.zeros(0, bool)
        return PointConfiguration(self.dim, self.points[keep], region=region,
                                  provenance=self.provenance)

    def with_point(self, x):
        """New configuration with `x` appended (existing indices unchanged)."""
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        if len(self) and np.any(np.all(self.points == x, axis=1)):
            raise ValueError("point already present in configuration")
        pts = np.concatenate([self.points, x]) if len(self) else x
        return PointConfiguration(self.dim, pts, region=self.region,
                                  provenance=self.provenance)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow([f"x{i + 1}" for i in range(self.dim)])
            for p in self.points:
                w.writerow([f"{c:.17g}" for c in p])

    def to_json(self):
        return json.dumps({"dim": self.dim, "points": self.points.tolist()})

    @classmethod
    def from_json(cls, s):
        d = json.loads(s)
        return cls(d["dim"], d["points"])

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, n={len(self)})"


class MarkedConfiguration(PointConfiguration):
    """Point configuration whose points carry pairwise-distinct marks in [0,1]."""

    __slots__ = ("marks",)

    def __init__(self, dim, points, marks, region=None, provenance=None):
        super().__init__(dim, points, region=region, provenance=provenance)
        marks = np.asarray(marks, dtype=float).reshape(-1)
        if marks.size != len(self):
            raise ValueError("need exactly one mark per point")
        if marks.size and (np.unique(marks).size != marks.size):
            raise ValueError("marks must be pairwise distinct")
        if marks.size and (marks.min() < 0.0 or marks.max() > 1.0):
            raise ValueError("marks must lie in [0,1]")
        marks = np.ascontiguousarray(marks)
        marks.flags.writeable = False
        self.marks = marks

    def restrict(self, region):
        keep = region.contains_points(self.points) if len(self) else np.zeros(0, bool)
        return MarkedConfiguration(self.dim, self.points[keep], self.marks[keep],
                                   region=region, provenance=self.provenance)

    def with_point(self, x, mark=None):
        if mark is None:
            raise ValueError("a marked configuration requires a mark for the new point")
        if len(self) and mark in set(self.marks.tolist()):
            raise ValueError("new mark collides with an existing mark")
        base = super().with_point(x)
        marks = np.concatenate([self.marks, [float(mark)]]) if len(self) else np.array([float(mark)])
        return MarkedConfiguration(self.dim, base.points, marks, region=self.region,
                                   provenance=self.provenance)

    def scaled(self, a):
        """Points scaled by a > 0; marks unchanged."""
        if a <= 0:
            raise ValueError("scale factor must be positive")
        return MarkedConfiguration(self.dim, self.points * a, self.marks,
                                   provenance=self.provenance)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow([f"x{i + 1}" for i in range(self.dim)] + ["mark"])
            for p, m in zip(self.points, self.marks):
                w.writerow([f"{c:.17g}" for c in p] + [f"{m:.17g}"])

    def to_json(self):
        return json.dumps({"dim": self.dim, "points": self.points.tolist(),
                           "marks": self.marks.tolist()})

    @classmethod
    def from_json(cls, s):
        d = json.loads(s)
        return cls(d["dim"], d["points"], d["marks"])


def _uniform_on_region(rng, region, m):
    """Exactly m i.i.d. uniform points: volume-weighted box choice, then a
    uniform draw inside the chosen box (exact, no rejection)."""
    if m == 0:
        return np.empty((0, region.dim))
    vols = np.prod(region.hi - region.lo, axis=1)
    total = vols.sum()
    if total <= 0:
        raise ValueError("cannot sample from a region of measure zero")
    which = rng.choice(region.n_boxes, size=m, p=vols / total)
    u = rng.random((m, region.dim))
    return region.lo[which] + u * (region.hi[which] - region.lo[which])


def sample_uniform_points(m, region, seed):
    """m i.i.d. uniform points on the region as a raw array."""
    rng = np.random.default_rng(seed)
    return _uniform_on_region(rng, region, int(m))


def sample_poisson(lam, region, seed):
    """Homogeneous Poisson sample of intensity lam on the region."""
    if lam <= 0:
        raise ValueError("intensity must be positive")
    mu = lam * region.measure()
    if mu <= 0:
        raise ValueError("region must have positive measure")
    rng = np.random.default_rng(seed)
    n = int(rng.poisson(mu))
    pts = _uniform_on_region(rng, region, n)
    return PointConfiguration(region.dim, pts, region=region,
                              provenance={"kind": "poisson", "lambda": lam, "seed": repr(seed)})


def sample_binomial(m, region, seed):
    """Exactly m i.i.d. uniform points on the region."""
    if m < 0:
        raise ValueError("count must be nonnegative")
    if m > 0 and region.measure() <= 0:
        raise ValueError("region must have positive measure")
    rng = np.random.default_rng(seed)
    pts = _uniform_on_region(rng, region, int(m)) if m > 0 else np.empty((0, region.dim))
    return PointConfiguration(region.dim, pts, region=region,
                              provenance={"kind": "binomial", "m": int(m), "seed": repr(seed)})


def _distinct_uniform_marks(rng, n):
    marks = rng.random(n)
    # exact collisions have probability ~0; resample offenders if they occur
    while np.unique(marks).size != n:
        _, first = np.unique(marks, return_index=True)
        dup = np.setdiff1d(np.arange(n), first)
        marks[dup] = rng.random(dup.size)
    return marks


def attach_marks(config, seed):
    """Attach i.i.d. uniform [0,1] marks, pairwise distinct."""
    rng = np.random.default_rng(seed)
    marks = _distinct_uniform_marks(rng, len(config))
    return MarkedConfiguration(config.dim, config.points, marks,
                               region=config.region, provenance=config.provenance)


class CoupledStream:
    """Prefix-stable uniform point stream with an independent Poisson count.

    points(m) always returns the same first m points regardless of how many
    are ultimately drawn; poisson_count() is drawn from a separate stream, so
    taking the first N points yields a Poisson sample of the given intensity.
    """

    def __init__(self, lam, region, seed):
        if lam <= 0:
            raise ValueError("intensity must be positive")
        if region.measure() <= 0:
            raise ValueError("region must have positive measure")
        self.lam = float(lam)
        self.region = region
        self.seed = seed
        self._point_rng = np.random.default_rng(derive_seed_like(seed, 0))
        self._count_rng = np.random.default_rng(derive_seed_like(seed, 1))
        self._points = np.empty((0, region.dim))
        self._count = None

    @property
    def mean_count(self):
        return self.lam * self.region.measure()

    def points(self, m):
        """First m points of the stream (prefix-stable)."""
        m = int(m)
        while self._points.shape[0] < m:
            extra = max(m - self._points.shape[0], 16)
            new = _uniform_on_region(self._point_rng, self.region, extra)
            self._points = np.concatenate([self._points, new])
        return self._points[:m].copy()

    def poisson_count(self):
        """Poisson(lam * |region|) count, independent of the points."""
        if self._count is None:
            self._count = int(self._count_rng.poisson(self.mean_count))
        return self._count

    def binomial_configuration(self, m):
        return PointConfiguration(self.region.dim, self.points(m), region=self.region,
                                  provenance={"kind": "coupled-binomial", "m": m})

    def poisson_configuration(self):
        n = self.poisson_count()
        return PointConfiguration(self.region.dim, self.points(n), region=self.region,
                                  provenance={"kind": "coupled-poisson"})


def derive_seed_like(seed, index):
    """Sub-seed for a component stream; accepts ints or SeedSequences."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (index,))
    return np.random.SeedSequence(seed, spawn_key=(index,))


def coupled_stream(lam, region, seed):
    return CoupledStream(lam, region, seed)
