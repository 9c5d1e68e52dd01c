"""Bernoulli site percolation on discretized windows.

Sites of a lattice window are occupied independently with probability p;
the occupied graph joins sites at unit Euclidean distance.  Cluster
analysis runs union-find over that adjacency.  The random measures count
components touching a subregion, vertices of the largest components in a
subregion, or psi-weighted cluster sums, and `resample_increment` measures
the effect of independently redrawing one site's occupancy.
"""

import json
from dataclasses import dataclass

import numpy as np

from ._util import UnionFind
from .geometry import LatticeSet, Region

__all__ = [
    "LatticeConfig",
    "ClusterAnalysis",
    "ClusterWeight",
    "LatticeFunctional",
    "sample_lattice",
    "site_uniforms",
    "cluster_analysis",
    "cluster_count_measure",
    "largest_component_measure",
    "cluster_weighted_measure",
    "resample_increment",
]


@dataclass(frozen=True)
class LatticeConfig:
    """Occupancy sample on a lattice window.

    `region`, when present, is the unscaled base region B0 whose
    discretization produced the window; the scaled-region measures need it.
    """

    window: LatticeSet
    occupied: frozenset
    p: float
    seed: object = None
    region: Region | None = None

    def __post_init__(self):
        if not self.occupied <= self.window.sites:
            raise ValueError("occupied sites must lie in the window")

    @property
    def dim(self):
        return self.window.dim

    def occupied_array(self):
        if not self.occupied:
            return np.empty((0, self.dim), dtype=int)
        return np.array(sorted(self.occupied), dtype=int)

    def with_occupied(self, occ):
        return LatticeConfig(self.window, frozenset(occ), self.p, self.seed, self.region)

    def to_json(self):
        """Run-length-encoded occupancy over the window's canonical order."""
        sites = self.window.as_array()
        bits = np.array([tuple(s) in self.occupied for s in sites], dtype=bool)
        runs = []
        i = 0
        n = bits.size
        while i < n:
            j = i
            while j < n and bits[j] == bits[i]:
                j += 1
            runs.append([int(bits[i]), j - i])
            i = j
        return json.dumps({
            "dim": self.dim,
            "p": self.p,
            "sites": sites.tolist(),
            "occupancy_rle": runs,
        })

    @classmethod
    def from_json(cls, s):
        d = json.loads(s)
        sites = [tuple(z) for z in d["sites"]]
        bits = []
        for bit, count in d["occupancy_rle"]:
            bits.extend([bool(bit)] * count)
        occ = frozenset(z for z, b in zip(sites, bits) if b)
        return cls(LatticeSet(d["dim"], sites), occ, d["p"])


@dataclass(frozen=True)
class ClusterAnalysis:
    """Components of the occupied graph under unit-distance adjacency."""

    labels: dict  # site -> component id (occupied sites only)
    sizes: tuple  # size per component id
    largest: frozenset  # ids of all components attaining the maximum size

    @property
    def n_components(self):
        return len(self.sizes)

    def component_sites(self):
        out = [[] for _ in self.sizes]
        for site, cid in self.labels.items():
            out[cid].append(site)
        return [frozenset(c) for c in out]


def site_uniforms(window, seed):
    """One uniform per window site, in canonical site order.

    Exposed so occupancy can be coupled monotonically across p values:
    occupied(p) = sites with uniform < p.
    """
    sites = window.as_array()
    rng = np.random.default_rng(seed)
    return sites, rng.random(sites.shape[0])


def sample_lattice(p, window, seed, region=None):
    """Independent Bernoulli(p) occupancy of every window site."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("occupation probability must lie in [0, 1]")
    sites, u = site_uniforms(window, seed)
    occ = frozenset(map(tuple, sites[u < p].tolist()))
    return LatticeConfig(window, occ, float(p), seed=repr(seed), region=region)


def _labels_from_sites(sites):
    """Union-find labels for an (n, d) integer site array; unit adjacency."""
    n = sites.shape[0]
    if n == 0:
        return {}, ()
    dim = sites.shape[1]
    mins = sites.min(axis=0)
    shifted = sites - mins
    dims = shifted.max(axis=0) + 2  # pad so +1 neighbours never wrap
    strides = np.ones(dim, dtype=np.int64)
    for i in range(dim - 2, -1, -1):
        strides[i] = strides[i + 1] * dims[i + 1]
    keys = shifted @ strides
    order = np.argsort(keys)
    skeys = keys[order]
    uf = UnionFind(n)
    for axis in range(dim):
        nb = keys + strides[axis]
        pos = np.searchsorted(skeys, nb)
        ok = (pos < n)
        hit = np.zeros(n, dtype=bool)
        hit[ok] = skeys[pos[ok]] == nb[ok]
        for i in np.nonzero(hit)[0]:
            uf.union(int(i), int(order[pos[i]]))
    labels = uf.labels()
    sizes = [0] * uf.n_components
    for lab in labels:
        sizes[lab] += 1
    site_labels = {tuple(s): labels[i] for i, s in enumerate(sites.tolist())}
    return site_labels, tuple(sizes)


def cluster_analysis(cfg):
    """Union-find clustering of all occupied sites of the config."""
    labels, sizes = _labels_from_sites(cfg.occupied_array())
    if not sizes:
        return ClusterAnalysis({}, (), frozenset())
    mx = max(sizes)
    largest = frozenset(i for i, s in enumerate(sizes) if s == mx)
    return ClusterAnalysis(labels, sizes, largest)


def _scaled_regions(cfg, t, a):
    if cfg.region is None:
        raise ValueError("config lacks its base region; cannot form scaled windows")
    if not a.is_subset_of(cfg.region):
        raise ValueError("region outside the base region")
    return cfg.region.scale(t), a.scale(t)


def _occupied_in(cfg, region):
    occ = cfg.occupied_array()
    if occ.shape[0] == 0:
        return occ
    keep = region.contains_points(occ.astype(float))
    return occ[keep]


def cluster_count_measure(cfg, t, a):
    """Components of the occupied graph inside t*B0 touching t*a."""
    tb0, ta = _scaled_regions(cfg, t, a)
    occ = _occupied_in(cfg, tb0)
    labels, sizes = _labels_from_sites(occ)
    if not sizes:
        return 0
    in_a = ta.contains_points(occ.astype(float))
    return len({labels[tuple(s)] for s, hit in zip(occ.tolist(), in_a) if hit})


def largest_component_measure(cfg, t, a):
    """Vertices of t*a lying in the union of all largest components."""
    tb0, ta = _scaled_regions(cfg, t, a)
    occ = _occupied_in(cfg, tb0)
    labels, sizes = _labels_from_sites(occ)
    if not sizes:
        return 0
    mx = max(sizes)
    largest = {i for i, s in enumerate(sizes) if s == mx}
    in_a = ta.contains_points(occ.astype(float))
    return sum(
        1 for s, hit in zip(occ.tolist(), in_a)
        if hit and labels[tuple(s)] in largest
    )


@dataclass(frozen=True)
class ClusterWeight:
    """Translation-invariant cluster weight with a declared large-size limit.

    kinds: "constant" (param), "min_size" (min(card, param), limit param),
    "size_eq" (indicator card == param, limit 0).
    """

    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "min_size", "size_eq"):
            raise ValueError(f"unknown cluster weight kind {self.kind!r}")

    @property
    def limit(self):
        if self.kind == "constant":
            return float(self.param)
        if self.kind == "min_size":
            return float(self.param)
        return 0.0

    def __call__(self, component_sites):
        card = len(component_sites)
        if self.kind == "constant":
            return float(self.param)
        if self.kind == "min_size":
            return float(min(card, self.param))
        return 1.0 if card == int(self.param) else 0.0


def cluster_weighted_measure(cfg, t, a, psi_cluster):
    """Sum of psi over components of the occupied graph in t*B0 touching t*a."""
    if not hasattr(psi_cluster, "limit"):
        raise ValueError("cluster weight must declare its large-size limit")
    tb0, ta = _scaled_regions(cfg, t, a)
    occ = _occupied_in(cfg, tb0)
    labels, sizes = _labels_from_sites(occ)
    if not sizes:
        return 0.0
    in_a = ta.contains_points(occ.astype(float))
    touching = {labels[tuple(s)] for s, hit in zip(occ.tolist(), in_a) if hit}
    comp_sites = [[] for _ in sizes]
    for s in occ.tolist():
        comp_sites[labels[tuple(s)]].append(tuple(s))
    return float(sum(psi_cluster(frozenset(comp_sites[c])) for c in touching))


def resample_increment(cfg, site, functional, t, a, seed):
    """Measure value now minus its value after resampling one site.

    The site's occupancy is independently redrawn as Bernoulli(p); when the
    redraw equals the current state the increment is 0 without recomputation.
    """
    site = tuple(int(c) for c in site)
    if site not in cfg.window:
        raise ValueError("site outside the window")
    rng = np.random.default_rng(seed)
    new_state = bool(rng.random() < cfg.p)
    cur_state = site in cfg.occupied
    if new_state == cur_state:
        return 0.0
    occ2 = set(cfg.occupied)
    if new_state:
        occ2.add(site)
    else:
        occ2.discard(site)
    before = functional(cfg, t, a)
    after = functional(cfg.with_occupied(occ2), t, a)
    return float(before) - float(after)


# -- whole-window statistics used by the covariance estimators -------------


@dataclass(frozen=True)
class LatticeFunctional:
    """Named lattice measure for harness/covariance use.

    kinds: "cluster_count", "largest_component", "cluster_weighted" (psi).
    """

    kind: str
    psi: ClusterWeight | None = None

    def __post_init__(self):
        if self.kind not in ("cluster_count", "largest_component", "cluster_weighted"):
            raise ValueError(f"unknown lattice functional {self.kind!r}")
        if self.kind == "cluster_weighted" and self.psi is None:
            raise ValueError("cluster_weighted needs a cluster weight")

    def measure(self, cfg, t, a):
        if self.kind == "cluster_count":
            return float(cluster_count_measure(cfg, t, a))
        if self.kind == "largest_component":
            return float(largest_component_measure(cfg, t, a))
        return cluster_weighted_measure(cfg, t, a, self.psi)

    def window_value(self, occupied_sites):
        """H(X, W) with the region equal to the whole window."""
        occ = np.asarray(occupied_sites, dtype=int)
        if occ.size == 0:
            return 0.0
        labels, sizes = _labels_from_sites(occ.reshape(-1, occ.shape[-1]))
        if not sizes:
            return 0.0
        if self.kind == "cluster_count":
            return float(len(sizes))
        if self.kind == "largest_component":
            mx = max(sizes)
            return float(sum(s for s in sizes if s == mx))
        comp_sites = [[] for _ in sizes]
        for s, c in labels.items():
            comp_sites[c].append(s)
        return float(sum(self.psi(frozenset(c)) for c in comp_sites))

    def to_dict(self):
        return {"kind": self.kind,
                "psi": {"kind": self.psi.kind, "param": self.psi.param} if self.psi else None}

    @classmethod
    def from_dict(cls, d):
        psi = d.get("psi")
        return cls(d["kind"], ClusterWeight(psi["kind"], psi["param"]) if psi else None)
