"""Functional families over geometric graphs and regions.

Four families: phi-weighted edge lengths (half weight for edges straddling
the region boundary), bounded vertex-landscape sums over rooted local
neighbourhoods, component counts, and the plain point count used to
calibrate every estimator.  Also: add-one costs at the origin, the MST
edge-length empirical process counts, and scale-homogeneity residuals.
"""

import json
from dataclasses import dataclass

import numpy as np

from .graphs import (
    build_knng,
    build_mst,
    build_online_nng,
    build_sig,
    rooted_neighborhood,
)
from .point_process import MarkedConfiguration, PointConfiguration

__all__ = [
    "EdgeWeight",
    "VertexStatistic",
    "GraphBuilderSpec",
    "FunctionalSpec",
    "weighted_edge_length",
    "vertex_landscape_sum",
    "component_count",
    "point_count",
    "add_one_cost",
    "edge_length_counts",
    "homogeneity_check",
]


@dataclass(frozen=True)
class EdgeWeight:
    """Named weight function phi on edge lengths (JSON-serializable).

    kinds: "power" (r**param), "indicator" (1 if r < param, strict),
    "constant" (param).
    """

    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "indicator", "constant"):
            raise ValueError(f"unknown edge weight kind {self.kind!r}")

    def __call__(self, r):
        if self.kind == "power":
            return float(r) ** self.param
        if self.kind == "indicator":
            return 1.0 if r < self.param else 0.0
        return float(self.param)

    @property
    def homogeneity_order(self):
        """Order gamma with h(aX, aA) = a^gamma h(X, A); None if not scale-free."""
        if self.kind == "power":
            return self.param
        if self.kind == "constant":
            return 0.0
        return None  # indicator thresholds are not scale invariant

    def to_dict(self):
        return {"kind": self.kind, "param": self.param}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d.get("param", 1.0))


@dataclass(frozen=True)
class VertexStatistic:
    """Bounded function psi of the canonical rooted kappa-neighbourhood.

    kinds: "constant" (value param), "root_degree_eq" (indicator of root
    degree == param), "root_degree" (root degree itself; `bound` must then
    be the builder's degree bound), "size_le" (indicator of neighbourhood
    size <= param).
    """

    kind: str
    param: float = 1.0
    bound: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "root_degree_eq", "root_degree", "size_le"):
            raise ValueError(f"unknown vertex statistic kind {self.kind!r}")
        if self.declared_bound() is None:
            raise ValueError("vertex statistic needs an explicit bound")

    def declared_bound(self):
        if self.bound is not None:
            return self.bound
        if self.kind == "constant":
            return abs(self.param)
        if self.kind in ("root_degree_eq", "size_le"):
            return 1.0
        return None  # root_degree requires a caller-declared bound

    def __call__(self, rooted):
        if self.kind == "constant":
            return float(self.param)
        if self.kind == "root_degree_eq":
            return 1.0 if rooted.root_degree == int(self.param) else 0.0
        if self.kind == "root_degree":
            return float(rooted.root_degree)
        return 1.0 if rooted.n <= int(self.param) else 0.0

    def to_dict(self):
        return {"kind": self.kind, "param": self.param, "bound": self.bound}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d.get("param", 1.0), d.get("bound"))


_BUILDERS = {
    "mst": build_mst,
    "knng": build_knng,
    "sig": build_sig,
    "online_nng": build_online_nng,
}


@dataclass(frozen=True)
class GraphBuilderSpec:
    """Named graph builder; callable on a configuration."""

    kind: str
    k: int | None = None

    def __post_init__(self):
        if self.kind not in _BUILDERS:
            raise ValueError(f"unknown graph builder {self.kind!r}")
        if self.kind == "knng" and (self.k is None or self.k < 1):
            raise ValueError("knng builder needs k >= 1")

    @property
    def needs_marks(self):
        return self.kind == "online_nng"

    def __call__(self, config):
        if self.kind == "knng":
            return build_knng(config, self.k)
        return _BUILDERS[self.kind](config)

    def to_dict(self):
        return {"kind": self.kind, "k": self.k}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d.get("k"))


def weighted_edge_length(g, config, region, phi):
    """Sum of phi(|e|) over edges, half-weighted per endpoint in the region.

    An edge with both endpoints in the region contributes phi(|e|), one
    endpoint phi(|e|)/2, none 0.
    """
    if g.n_edges == 0:
        return 0.0
    inside = region.contains_points(config.points)
    total = 0.0
    for (u, v), length in g.edge_lengths().items():
        w = (1 if inside[u] else 0) + (1 if inside[v] else 0)
        if w:
            total += 0.5 * w * phi(length)
    return total


def vertex_landscape_sum(g, config, region, psi, kappa):
    """Sum of psi over rooted kappa-neighbourhoods of vertices in the region."""
    inside = region.contains_points(config.points)
    total = 0.0
    for v in range(g.n):
        if inside[v]:
            total += psi(rooted_neighborhood(g, v, kappa))
    return float(total)


def component_count(g, config, region):
    """Number of connected components with at least one vertex in the region.

    Components straddling the boundary count fully.
    """
    if g.n == 0:
        return 0
    labels = g.component_labels()
    inside = region.contains_points(config.points)
    return len({labels[v] for v in range(g.n) if inside[v]})


def point_count(config, region):
    """Number of configuration points in the region."""
    if len(config) == 0:
        return 0
    return int(np.count_nonzero(region.contains_points(config.points)))


def edge_length_counts(g, s_values):
    """N_s = number of edges with length strictly less than s, per s."""
    s = np.asarray(s_values, dtype=float)
    if np.any(np.diff(s) < 0):
        raise ValueError("s_values must be sorted ascending")
    lengths = np.array([g.length(u, v) for u, v in g.edge_list])
    return [int(np.count_nonzero(lengths < si)) for si in s]


@dataclass(frozen=True)
class FunctionalSpec:
    """A named functional family bound to a graph builder and parameters.

    families: "weighted_edge_length" (needs builder + phi),
    "vertex_landscape" (needs builder + psi + kappa),
    "component_count" (needs builder), "point_count" (no builder).
    """

    family: str
    builder: GraphBuilderSpec | None = None
    phi: EdgeWeight | None = None
    psi: VertexStatistic | None = None
    kappa: int | None = None
    gamma: float | None = None  # declared homogeneity order, if any

    def __post_init__(self):
        if self.family not in (
            "weighted_edge_length", "vertex_landscape", "component_count", "point_count",
        ):
            raise ValueError(f"unknown functional family {self.family!r}")
        if self.family == "point_count":
            return
        if self.builder is None:
            raise ValueError(f"{self.family} requires a graph builder")
        if self.family == "weighted_edge_length" and self.phi is None:
            raise ValueError("weighted_edge_length requires phi")
        if self.family == "vertex_landscape" and (self.psi is None or not self.kappa):
            raise ValueError("vertex_landscape requires psi and kappa >= 1")

    @property
    def needs_marks(self):
        return self.builder is not None and self.builder.needs_marks

    def homogeneity_order(self):
        if self.gamma is not None:
            return self.gamma
        if self.family == "weighted_edge_length":
            return self.phi.homogeneity_order
        return 0.0  # counts and bounded landscape sums are scale invariant

    def evaluate_graph(self, g, config, region):
        if self.family == "weighted_edge_length":
            return weighted_edge_length(g, config, region, self.phi)
        if self.family == "vertex_landscape":
            return vertex_landscape_sum(g, config, region, self.psi, self.kappa)
        if self.family == "component_count":
            return float(component_count(g, config, region))
        raise ValueError("point_count has no graph form")

    def evaluate(self, config, region, graph=None):
        """Value of the functional h(config, region)."""
        if self.family == "point_count":
            return float(point_count(config, region))
        g = graph if graph is not None else self.builder(config)
        return float(self.evaluate_graph(g, config, region))

    def to_dict(self):
        return {
            "family": self.family,
            "builder": self.builder.to_dict() if self.builder else None,
            "phi": self.phi.to_dict() if self.phi else None,
            "psi": self.psi.to_dict() if self.psi else None,
            "kappa": self.kappa,
            "gamma": self.gamma,
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["family"],
            GraphBuilderSpec.from_dict(d["builder"]) if d.get("builder") else None,
            EdgeWeight.from_dict(d["phi"]) if d.get("phi") else None,
            VertexStatistic.from_dict(d["psi"]) if d.get("psi") else None,
            d.get("kappa"),
            d.get("gamma"),
        )

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def add_one_cost(spec, config, region, origin=None, origin_mark=None):
    """h(config + origin, region) - h(config, region).

    The origin defaults to 0; for builders that read marks, a mark for the
    inserted origin must be supplied (drawn independently by the caller).
    """
    dim = config.dim
    origin = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)
    if len(config) and np.any(np.all(config.points == origin, axis=1)):
        raise ValueError("origin already present in configuration")
    if spec.family == "point_count":
        return 1.0 if region.contains(origin) else 0.0
    if isinstance(config, MarkedConfiguration):
        if origin_mark is None:
            raise ValueError("marked configuration: origin needs an independent mark")
        bigger = config.with_point(origin, mark=origin_mark)
    else:
        if spec.needs_marks:
            raise ValueError("builder needs marks but configuration is unmarked")
        bigger = config.with_point(origin)
    return spec.evaluate(bigger, region) - spec.evaluate(config, region)


def _scaled_config(config, a):
    if isinstance(config, MarkedConfiguration):
        return config.scaled(a)
    return PointConfiguration(config.dim, config.points * a)


def homogeneity_check(spec, config, region, scale_a, gamma):
    """Residual |h(aX, aA) - a^gamma h(X, A)| of the scaling identity."""
    if scale_a <= 0:
        raise ValueError("scale factor must be positive")
    lhs = spec.evaluate(_scaled_config(config, scale_a), region.scale(scale_a))
    rhs = scale_a ** gamma * spec.evaluate(config, region)
    return abs(lhs - rhs)


def polynomial_bound_constant(spec):
    """A constant beta with |h| <= beta * (diam + card)^beta for the family.

    Used only as a recorded sanity envelope: counts are bounded by card,
    phi-weighted sums by card * max(1, phi(diam)), landscape sums by
    card * bound(psi).
    """
    if spec.family == "point_count" or spec.family == "component_count":
        return 2.0
    if spec.family == "vertex_landscape":
        return max(2.0, spec.psi.declared_bound() + 1.0)
    phi = spec.phi
    if phi.kind == "power":
        return max(2.0, abs(phi.param) + 2.0)
    return max(2.0, abs(phi.param) + 1.0)
