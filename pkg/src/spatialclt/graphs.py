"""Stabilizing geometric graphs: MST, k-NNG, sphere-of-influence, on-line NNG.

Builders are pure functions of a point configuration.  Ties in inter-point
distances are broken lexicographically on coordinates so every builder is
deterministic.  Insertion deltas (edge sets gained/lost when one point is
added) are computed by rebuild-and-diff, and rooted graph neighbourhoods are
reduced to a canonical form so isomorphic local pictures hash equal.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ._util import UnionFind
from .point_process import MarkedConfiguration, PointConfiguration

__all__ = [
    "Graph",
    "EdgeDelta",
    "RootedGraph",
    "build_mst",
    "build_knng",
    "build_sig",
    "build_online_nng",
    "edge_delta",
    "rooted_neighborhood",
]


class Graph:
    """Undirected graph on configuration indices with cached edge lengths."""

    __slots__ = ("n", "_edges", "_lengths", "_adj", "_labels")

    def __init__(self, n, edges, lengths):
        self.n = int(n)
        norm = []
        seen = set()
        lens = {}
        for (u, v), length in zip(edges, lengths):
            u, v = int(u), int(v)
            if u == v:
                raise ValueError("self-loops are not allowed")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError("edge endpoint out of range")
            e = (u, v) if u < v else (v, u)
            if e in seen:
                raise ValueError("duplicate edge")
            seen.add(e)
            norm.append(e)
            lens[e] = float(length)
        self._edges = tuple(sorted(norm))
        self._lengths = lens
        self._adj = None
        self._labels = None

    @classmethod
    def from_points(cls, points, pairs):
        points = np.asarray(points, dtype=float)
        pairs = [(int(u), int(v)) for u, v in pairs]
        lengths = [float(np.linalg.norm(points[u] - points[v])) for u, v in pairs]
        return cls(points.shape[0], pairs, lengths)

    @property
    def edges(self):
        return frozenset(self._edges)

    @property
    def edge_list(self):
        return self._edges

    @property
    def n_edges(self):
        return len(self._edges)

    def length(self, u, v):
        e = (u, v) if u < v else (v, u)
        return self._lengths[e]

    def edge_lengths(self):
        return {e: self._lengths[e] for e in self._edges}

    def adjacency(self):
        if self._adj is None:
            adj = [[] for _ in range(self.n)]
            for u, v in self._edges:
                adj[u].append(v)
                adj[v].append(u)
            self._adj = [tuple(a) for a in adj]
        return self._adj

    def degree(self, v):
        return len(self.adjacency()[v])

    def max_degree(self):
        return max((len(a) for a in self.adjacency()), default=0)

    def total_length(self):
        return float(sum(self._lengths.values()))

    def component_labels(self):
        """Compact component id per vertex (isolated vertices included)."""
        if self._labels is None:
            uf = UnionFind(self.n)
            for u, v in self._edges:
                uf.union(u, v)
            self._labels = uf.labels()
        return self._labels

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["u", "v", "length"])
            for u, v in self._edges:
                w.writerow([u, v, f"{self._lengths[(u, v)]:.17g}"])

    def to_json(self):
        return json.dumps({
            "n": self.n,
            "edges": [[u, v, self._lengths[(u, v)]] for u, v in self._edges],
        })

    @classmethod
    def from_json(cls, s):
        d = json.loads(s)
        return cls(d["n"], [(u, v) for u, v, _ in d["edges"]],
                   [length for _, _, length in d["edges"]])

    def __repr__(self):
        return f"Graph(n={self.n}, n_edges={self.n_edges})"


@dataclass(frozen=True)
class EdgeDelta:
    """Edges gained/lost when one point is inserted into a configuration."""

    added: frozenset
    removed: frozenset
    lengths: dict = field(compare=False)

    def __post_init__(self):
        if self.added & self.removed:
            raise ValueError("added and removed edge sets must be disjoint")

    def added_lengths(self):
        return [self.lengths[e] for e in self.added]

    def removed_lengths(self):
        return [self.lengths[e] for e in self.removed]


def _lex_order(points):
    """Permutation sorting points lexicographically by coordinates."""
    return np.lexsort(points.T[::-1])


def build_mst(config):
    """Minimal spanning tree (Kruskal; coordinate-lexicographic tie-break).

    For a configuration with distinct inter-point distances this is the
    unique tree of minimal total edge length; exact ties are resolved by
    comparing edges lexicographically on their endpoint coordinates.
    """
    pts = config.points
    n = pts.shape[0]
    if n <= 1:
        return Graph(n, [], [])
    order = _lex_order(pts)
    q = pts[order]
    dvec = pdist(q)
    # decode condensed index k -> (i, j), i < j, in row-major order; a stable
    # sort on distances then yields the lexicographic edge tie-break
    counts = np.arange(n - 1, 0, -1)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    ks = np.argsort(dvec, kind="stable")
    rows = np.searchsorted(offsets, ks, side="right") - 1
    cols = ks - offsets[rows] + rows + 1
    uf = UnionFind(n)
    pairs = []
    lengths = []
    for k, i, j in zip(ks, rows, cols):
        if uf.union(int(i), int(j)):
            pairs.append((int(order[i]), int(order[j])))
            lengths.append(float(dvec[k]))
            if len(pairs) == n - 1:
                break
    return Graph(n, pairs, lengths)


def _sq_distance_matrix(pts):
    d = squareform(pdist(pts)) if pts.shape[0] > 1 else np.zeros((pts.shape[0],) * 2)
    return d


def _k_smallest_indices(row, kk):
    """First kk indices of a stable (value, index) sort, without a full sort.

    Candidates are every entry not exceeding the kk-th smallest value, so
    boundary ties are resolved exactly as a stable full sort would.
    """
    kth = np.partition(row, kk - 1)[kk - 1]
    cand = np.nonzero(row <= kth)[0]
    order = np.lexsort((cand, row[cand]))
    return cand[order[:kk]]


def build_knng(config, k):
    """Undirected k-nearest-neighbour graph (lexicographic tie-break).

    Edge {x, y} is present iff y is among the k nearest points to x, or
    vice versa.  When there are at most k other points, every pair is joined.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    pts = config.points
    n = pts.shape[0]
    if n <= 1:
        return Graph(n, [], [])
    order = _lex_order(pts)
    q = pts[order]
    dmat = _sq_distance_matrix(q)
    np.fill_diagonal(dmat, np.inf)
    kk = min(k, n - 1)
    pairs = set()
    if kk == 1:
        # argmin returns the first (smallest-index) minimizer: the same
        # lexicographic tie-break as the general path
        nearest = np.argmin(dmat, axis=1)
        for i in range(n):
            j = int(nearest[i])
            pairs.add((i, j) if i < j else (j, i))
    else:
        for i in range(n):
            for j in _k_smallest_indices(dmat[i], kk):
                pairs.add((i, int(j)) if i < j else (int(j), i))
    lengths = [float(dmat[u, v]) for u, v in pairs]
    mapped = [(int(order[u]), int(order[v])) for u, v in pairs]
    return Graph(n, mapped, lengths)


def build_sig(config):
    """Sphere-of-influence graph: join x, y iff |x-y| <= R_x + R_y where R_x
    is the distance from x to its nearest neighbour (closed balls)."""
    pts = config.points
    n = pts.shape[0]
    if n < 2:
        raise ValueError("sphere-of-influence graph needs at least 2 points")
    dmat = _sq_distance_matrix(pts)
    np.fill_diagonal(dmat, np.inf)
    radii = dmat.min(axis=1)
    np.fill_diagonal(dmat, 0.0)
    pairs = []
    lengths = []
    for i in range(n):
        for j in range(i + 1, n):
            if dmat[i, j] <= radii[i] + radii[j]:
                pairs.append((i, j))
                lengths.append(float(dmat[i, j]))
    return Graph(n, pairs, lengths)


def build_online_nng(config):
    """On-line nearest-neighbour graph on a marked configuration.

    Points arrive in increasing mark order; each arrival is joined to its
    nearest predecessor (lexicographic tie-break on coordinates).  The
    result is a tree on n vertices with n - 1 edges.
    """
    if not isinstance(config, MarkedConfiguration):
        raise ValueError("on-line NNG requires a marked configuration")
    pts = config.points
    marks = config.marks
    n = pts.shape[0]
    if np.unique(marks).size != n:
        raise ValueError("marks must be pairwise distinct")
    if n <= 1:
        return Graph(n, [], [])
    arrival = np.argsort(marks)
    pairs = []
    lengths = []
    for i in range(1, n):
        cur = int(arrival[i])
        prev = arrival[:i]
        diffs = pts[prev] - pts[cur]
        d2 = np.einsum("ij,ij->i", diffs, diffs)
        best = d2.min()
        cand = prev[d2 == best]
        if cand.size > 1:
            cand = cand[_lex_order(pts[cand])]
        j = int(cand[0])
        pairs.append((cur, j))
        lengths.append(float(np.sqrt(best)))
    return Graph(n, pairs, lengths)


def edge_delta(builder, config, x, mark=None):
    """Edges added/removed when point x (with optional mark) is inserted.

    Both graphs are rebuilt and diffed; the inserted point gets index
    len(config), so existing indices are directly comparable.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if len(config) and np.any(np.all(config.points == x, axis=1)):
        raise ValueError("inserted point duplicates an existing point")
    if isinstance(config, MarkedConfiguration):
        bigger = config.with_point(x, mark=mark)
    else:
        if mark is not None:
            raise ValueError("mark given for an unmarked configuration")
        bigger = config.with_point(x)
    g0 = builder(config)
    g1 = builder(bigger)
    added = g1.edges - g0.edges
    removed = g0.edges - g1.edges
    lengths = {}
    for e in added:
        lengths[e] = g1.length(*e)
    for e in removed:
        lengths[e] = g0.length(*e)
    return EdgeDelta(frozenset(added), frozenset(removed), lengths)


# -- rooted neighbourhoods and canonical forms -----------------------------


@dataclass(frozen=True)
class RootedGraph:
    """Connected rooted graph in canonical form (root is always label 0).

    Two rooted graphs are isomorphic (as rooted graphs) iff their canonical
    forms compare equal, so instances can be used directly as dict keys.
    """

    n: int
    edges: tuple

    @property
    def root_degree(self):
        return sum(1 for u, v in self.edges if u == 0 or v == 0)

    def __repr__(self):
        return f"RootedGraph(n={self.n}, edges={self.edges})"


def _refine_colors(n, adj, colors):
    while True:
        sig = [(colors[v], tuple(sorted(colors[u] for u in adj[v]))) for v in range(n)]
        ranks = {s: r for r, s in enumerate(sorted(set(sig)))}
        new = [ranks[s] for s in sig]
        if new == colors:
            return colors
        colors = new


def _certificate(n, adj, colors):
    """Edge tuple under the ordering induced by colors (must be discrete)."""
    pos = [0] * n
    for rank, v in enumerate(sorted(range(n), key=lambda v: colors[v])):
        pos[v] = rank
    edges = sorted(
        tuple(sorted((pos[u], pos[v])))
        for u in range(n) for v in adj[u] if u < v
    )
    return tuple(edges)


def _canonical_search(n, adj, colors):
    colors = _refine_colors(n, adj, colors)
    counts = {}
    for c in colors:
        counts[c] = counts.get(c, 0) + 1
    target = None
    for c in sorted(counts):
        if counts[c] > 1:
            target = c
            break
    if target is None:
        return _certificate(n, adj, colors)
    best = None
    shift = max(colors) + 1
    for v in range(n):
        if colors[v] != target:
            continue
        branched = list(colors)
        branched[v] = shift  # individualize v, then refine again
        cert = _canonical_search(n, adj, branched)
        if best is None or cert < best:
            best = cert
    return best


def canonical_rooted(n, edges, root):
    """Canonical form of a connected rooted graph on vertices 0..n-1."""
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    colors = [1] * n
    colors[root] = 0  # the root's class sorts first and stays first
    cert = _canonical_search(n, adj, colors)
    return RootedGraph(n, cert)


def rooted_neighborhood(g, x, kappa):
    """Induced subgraph on vertices within graph distance kappa of x,
    rooted at x, in canonical form."""
    if not (0 <= x < g.n):
        raise ValueError("root vertex not in graph")
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    adj = g.adjacency()
    dist = {x: 0}
    frontier = [x]
    for depth in range(1, kappa + 1):
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = depth
                    nxt.append(v)
        frontier = nxt
    verts = sorted(dist)
    index = {v: i for i, v in enumerate(verts)}
    sub_edges = [
        (index[u], index[v])
        for u, v in g.edge_list
        if u in dist and v in dist
    ]
    return canonical_rooted(len(verts), sub_edges, index[x])
