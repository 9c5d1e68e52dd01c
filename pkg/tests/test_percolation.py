import numpy as np
import pytest

from spatialclt.geometry import LatticeSet, Region
from spatialclt.percolation import (
    ClusterWeight,
    LatticeConfig,
    LatticeFunctional,
    cluster_analysis,
    cluster_count_measure,
    cluster_weighted_measure,
    largest_component_measure,
    resample_increment,
    sample_lattice,
    site_uniforms,
)

B0 = Region.unit_cube(2)


def _grid_window(n):
    return LatticeSet(2, [(i, j) for i in range(n) for j in range(n)])


def test_sample_extremes():
    win = _grid_window(3)
    full = sample_lattice(1.0, win, 0)
    assert full.occupied == win.sites
    none = sample_lattice(0.0, win, 0)
    assert none.occupied == frozenset()
    with pytest.raises(ValueError):
        sample_lattice(1.5, win, 0)


def test_occupation_fraction():
    win = _grid_window(13)
    n_sites = len(win)
    n_seeds = 10_000
    p = 0.4
    total = sum(len(sample_lattice(p, win, s).occupied) for s in range(n_seeds))
    frac = total / (n_sites * n_seeds)
    se = np.sqrt(p * (1 - p) / (n_sites * n_seeds))
    assert abs(frac - p) <= 3 * se


def test_cluster_analysis_full_grid():
    cfg = sample_lattice(1.0, _grid_window(3), 0)
    an = cluster_analysis(cfg)
    assert an.n_components == 1
    assert an.sizes == (9,)


def test_cluster_analysis_two_corners():
    win = _grid_window(3)
    cfg = LatticeConfig(win, frozenset({(0, 0), (2, 2)}), 0.5)
    an = cluster_analysis(cfg)
    assert an.n_components == 2
    assert an.largest == frozenset({0, 1})  # tie: both are largest


def _bfs_components(occupied, dim):
    comps = []
    seen = set()
    occ = set(occupied)
    for site in sorted(occ):
        if site in seen:
            continue
        comp = set()
        stack = [site]
        seen.add(site)
        while stack:
            z = stack.pop()
            comp.add(z)
            for axis in range(dim):
                for step in (-1, 1):
                    nb = tuple(c + (step if i == axis else 0)
                               for i, c in enumerate(z))
                    if nb in occ and nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
        comps.append(frozenset(comp))
    return comps


def test_cluster_analysis_bfs_oracle():
    rng = np.random.default_rng(1)
    for trial in range(100):
        n = int(rng.integers(2, 9))
        cfg = sample_lattice(rng.uniform(0.2, 0.9), _grid_window(n),
                             int(rng.integers(1e9)))
        an = cluster_analysis(cfg)
        expected = _bfs_components(cfg.occupied, 2)
        got = set(an.component_sites())
        assert got == set(expected)
        assert an.n_components == len(expected)


def test_cluster_count_measure_examples():
    t = 5.0
    window = B0.scale(t).discretize()
    cfg = sample_lattice(0.6, window, 3, region=B0)
    total = cluster_count_measure(cfg, t, B0)
    occ_in = [z for z in cfg.occupied if B0.scale(t).contains_points(
        np.array([z], dtype=float))[0]]
    assert total == len(_bfs_components(occ_in, 2))
    # region that no occupied site hits
    empty_cfg = cfg.with_occupied(frozenset())
    assert cluster_count_measure(empty_cfg, t, B0) == 0


def test_cluster_count_measure_bfs_oracle():
    rng = np.random.default_rng(4)
    t = 6.0
    window = B0.scale(t).discretize()
    a = Region.box([0.0, 0.0], [0.5, 1.0])
    for _ in range(100):
        cfg = sample_lattice(rng.uniform(0.2, 0.9), window,
                             int(rng.integers(1e9)), region=B0)
        tb0 = B0.scale(t)
        ta = a.scale(t)
        occ_in = [z for z in cfg.occupied
                  if tb0.contains_points(np.array([z], dtype=float))[0]]
        comps = _bfs_components(occ_in, 2)
        expected = sum(
            1 for comp in comps
            if any(ta.contains_points(np.array([z], dtype=float))[0] for z in comp))
        assert cluster_count_measure(cfg, t, a) == expected


def test_region_outside_base_rejected():
    t = 4.0
    cfg = sample_lattice(0.5, B0.scale(t).discretize(), 0, region=B0)
    outside = Region.box([0.5, 0.0], [1.5, 1.0])
    with pytest.raises(ValueError):
        cluster_count_measure(cfg, t, outside)


def test_largest_component_measure():
    t = 3.0
    window = B0.scale(t).discretize()
    # one horizontal strip of 3 occupied + an isolated site
    occ = frozenset({(0, 0), (1, 0), (2, 0), (0, 2)})
    cfg = LatticeConfig(window, occ, 0.5, region=B0)
    assert largest_component_measure(cfg, t, B0) == 3
    empty = cfg.with_occupied(frozenset())
    assert largest_component_measure(empty, t, B0) == 0


def test_largest_component_tie_union():
    t = 5.0
    window = B0.scale(t).discretize()
    left = {(0, 0), (0, 1)}
    right = {(4, 3), (4, 4)}
    cfg = LatticeConfig(window, frozenset(left | right), 0.5, region=B0)
    # region covering only the left pair: counts that component fully
    a = Region.box([0.0, 0.0], [0.3, 0.5])
    assert largest_component_measure(cfg, t, a) == 2
    assert largest_component_measure(cfg, t, B0) == 4  # union of tied largest


def test_cluster_weighted_measure():
    t = 3.0
    window = B0.scale(t).discretize()
    cfg = sample_lattice(1.0, window, 0, region=B0)  # 3x3 fully occupied
    assert cluster_weighted_measure(cfg, t, B0, ClusterWeight("min_size", 5)) == 5.0
    assert cluster_weighted_measure(cfg, t, B0, ClusterWeight("constant", 1.0)) == \
        cluster_count_measure(cfg, t, B0)
    with pytest.raises(ValueError):
        cluster_weighted_measure(cfg, t, B0, lambda c: 1.0)  # no declared limit


def test_cluster_weighted_oracle():
    rng = np.random.default_rng(7)
    t = 5.0
    window = B0.scale(t).discretize()
    psi = ClusterWeight("min_size", 3)
    for _ in range(50):
        cfg = sample_lattice(rng.uniform(0.3, 0.8), window,
                             int(rng.integers(1e9)), region=B0)
        tb0 = B0.scale(t)
        occ_in = [z for z in cfg.occupied
                  if tb0.contains_points(np.array([z], dtype=float))[0]]
        comps = _bfs_components(occ_in, 2)
        expected = sum(min(len(c), 3) for c in comps)  # a = B0 touches all comps
        assert cluster_weighted_measure(cfg, t, B0, psi) == expected


def test_resample_increment_unchanged_state():
    t = 4.0
    cfg = sample_lattice(1.0, B0.scale(t).discretize(), 0, region=B0)
    # p = 1: resample always yields occupied, identical state
    fn = LatticeFunctional("cluster_count")
    assert resample_increment(cfg, (1, 1), fn.measure, t, B0, 99) == 0.0


def test_resample_increment_isolated_site():
    t = 5.0
    window = B0.scale(t).discretize()
    occ = frozenset({(2, 2)})  # an isolated occupied interior site
    cfg = LatticeConfig(window, occ, 0.0, region=B0)  # p=0: redraw -> vacant
    fn = LatticeFunctional("cluster_count")
    inc = resample_increment(cfg, (2, 2), fn.measure, t, B0, 1)
    assert inc == 1.0  # one component before, zero after


def test_resample_increment_site_validation():
    t = 3.0
    cfg = sample_lattice(0.5, B0.scale(t).discretize(), 0, region=B0)
    with pytest.raises(ValueError):
        resample_increment(cfg, (99, 99), LatticeFunctional("cluster_count").measure,
                           t, B0, 0)


def test_increment_bound_quick():
    rng = np.random.default_rng(8)
    t = 8.0
    window = B0.scale(t).discretize()
    fn = LatticeFunctional("cluster_count")
    for trial in range(500):
        cfg = sample_lattice(0.5, window, int(rng.integers(1e9)), region=B0)
        inc = resample_increment(cfg, (4, 4), fn.measure, t, B0,
                                 int(rng.integers(1e9)))
        assert abs(inc) <= 3.0  # 2d - 1 in dimension 2


def test_monotone_coupling():
    win = _grid_window(10)
    sites, u = site_uniforms(win, 42)
    occ_sets = []
    for p in (0.2, 0.5, 0.8):
        occ = frozenset(map(tuple, sites[u < p].tolist()))
        occ_sets.append(occ)
    assert occ_sets[0] <= occ_sets[1] <= occ_sets[2]


def test_lattice_config_validation():
    win = _grid_window(2)
    with pytest.raises(ValueError):
        LatticeConfig(win, frozenset({(9, 9)}), 0.5)


def test_rle_json_roundtrip():
    cfg = sample_lattice(0.5, _grid_window(6), 5)
    back = LatticeConfig.from_json(cfg.to_json())
    assert back.occupied == cfg.occupied
    assert back.window == cfg.window


def test_lattice_functional_window_value():
    fn = LatticeFunctional("cluster_count")
    occ = np.array([[0, 0], [0, 1], [5, 5]])
    assert fn.window_value(occ) == 2.0
    big = LatticeFunctional("largest_component")
    assert big.window_value(occ) == 2.0
    weighted = LatticeFunctional("cluster_weighted", ClusterWeight("min_size", 1))
    assert weighted.window_value(occ) == 2.0
    assert fn.window_value(np.empty((0, 2), dtype=int)) == 0.0
