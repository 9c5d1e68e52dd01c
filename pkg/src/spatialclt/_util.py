"""Small shared helpers: union-find and seed derivation."""

import numpy as np


class UnionFind:
    """Array union-find with path halving and union by size."""

    __slots__ = ("parent", "size", "n_components")

    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n
        self.n_components = n

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.n_components -= 1
        return True

    def labels(self):
        """Compact component label per element (0..k-1, in root order)."""
        roots = [self.find(i) for i in range(len(self.parent))]
        ids = {}
        out = []
        for r in roots:
            if r not in ids:
                ids[r] = len(ids)
            out.append(ids[r])
        return out


def derive_seed(master, *indices):
    """Counter-based seed derivation: independent reproducible streams."""
    return np.random.SeedSequence(master, spawn_key=tuple(int(i) for i in indices))


def fmt17(x):
    """Format a number with 17 significant digits (round-trip safe)."""
    return f"{float(x):.17g}"
