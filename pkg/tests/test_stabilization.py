import math

import numpy as np
import pytest

from spatialclt.functionals import (
    EdgeWeight,
    FunctionalSpec,
    GraphBuilderSpec,
    VertexStatistic,
)
from spatialclt.geometry import Region
from spatialclt.graphs import Graph
from spatialclt.point_process import (
    MarkedConfiguration,
    PointConfiguration,
    attach_marks,
    sample_poisson,
)
from spatialclt.stabilization import (
    WindowSchedule,
    estimate_delta_infinity,
    estimate_sigma_continuum,
    estimate_sigma_lattice,
    estimate_tau,
    online_nng_radius,
    probe_stability,
)
from spatialclt.percolation import LatticeFunctional

POINT_COUNT = FunctionalSpec("point_count")
MST_LEN = FunctionalSpec("weighted_edge_length", GraphBuilderSpec("mst"),
                         EdgeWeight("power", 1.0))
ZERO = FunctionalSpec("vertex_landscape", GraphBuilderSpec("mst"),
                      psi=VertexStatistic("constant", 0.0), kappa=1)
B0 = Region.unit_cube(2)


def _edgeless_builder(config):
    return Graph(len(config), [], [])


def test_window_schedule_validation():
    with pytest.raises(ValueError):
        WindowSchedule(0.0)
    with pytest.raises(ValueError):
        WindowSchedule(1.0, factor=1.0)
    with pytest.raises(ValueError):
        WindowSchedule(4.0, max_radius=2.0)
    assert WindowSchedule(2.0, 2.0, 16.0).windows() == [2.0, 4.0, 8.0, 16.0]


# -- on-line NNG radius -------------------------------------------------------


def _config_with_axis_points(r, origin_mark, point_mark):
    """A lower-marked point at distance r on every pi/6 cone axis."""
    angles = [2 * math.pi * j / 6 for j in range(6)]
    pts = [[r * math.cos(a), r * math.sin(a)] for a in angles]
    marks = np.linspace(point_mark, point_mark + 0.01, 6)
    pts.append([0.0, 0.0])
    marks = np.append(marks, origin_mark)
    return MarkedConfiguration(2, pts, marks)


def test_radius_exact_construction():
    cfg = _config_with_axis_points(1.5, origin_mark=0.9, point_mark=0.1)
    res = online_nng_radius(cfg, Region.centered_cube(10.0, 2))
    assert res.exact
    assert res.radius == pytest.approx(3.0, abs=1e-12)


def test_radius_fallback_lowest_mark():
    cfg = _config_with_axis_points(1.5, origin_mark=0.01, point_mark=0.5)
    w = 4.0
    res = online_nng_radius(cfg, Region.centered_cube(w, 2))
    assert not res.exact
    # farthest window point in any cone is the cube corner at distance w*sqrt(2)
    assert res.radius == pytest.approx(2 * w * math.sqrt(2), rel=2e-2)


def test_radius_requires_origin_and_marks():
    with pytest.raises(ValueError):
        online_nng_radius(
            MarkedConfiguration(2, [[1.0, 1.0]], [0.5]), Region.centered_cube(2.0, 2))
    with pytest.raises(ValueError):
        online_nng_radius(PointConfiguration(2, [[0.0, 0.0]]),
                          Region.centered_cube(2.0, 2))


def test_radius_probes_pass_on_random_configs():
    builder = GraphBuilderSpec("online_nng")
    window = Region.centered_cube(8.0, 2)
    checked = 0
    seed = 0
    while checked < 10:
        cfg = attach_marks(sample_poisson(1.0, window, seed), seed + 1)
        cfg = cfg.with_point(np.zeros(2), mark=float(
            np.random.default_rng(seed + 2).random()))
        seed += 3
        res = online_nng_radius(cfg, window)
        if not res.exact:
            continue
        probe = probe_stability(builder, cfg, res.radius, 25, seed, window=window)
        assert probe.passed
        checked += 1


# -- probe falsifier ----------------------------------------------------------


def test_probe_vacuous_when_radius_covers_window():
    cfg = MarkedConfiguration(2, [[0.0, 0.0]], [0.5])
    window = Region.centered_cube(1.0, 2)
    res = probe_stability(GraphBuilderSpec("online_nng"), cfg, 10.0, 50, 0,
                          window=window)
    assert res.passed


def test_probe_detects_mst_instability():
    # origin plus a far point; R = 1 is clearly not a stabilization radius
    cfg = PointConfiguration(2, [[0.0, 0.0], [10.0, 0.0]])
    from spatialclt.graphs import build_mst
    res = probe_stability(build_mst, cfg, 1.0, 20, 3,
                          window=Region.centered_cube(12.0, 2))
    assert not res.passed
    assert res.counterexample is not None
    assert np.all(np.linalg.norm(res.counterexample, axis=1) > 1.0)


def test_probe_point_count_analog_any_radius():
    cfg = PointConfiguration(2, [[0.0, 0.0], [5.0, 5.0]])
    res = probe_stability(_edgeless_builder, cfg, 0.5, 30, 4,
                          window=Region.centered_cube(8.0, 2))
    assert res.passed


def test_probe_radius_validation():
    cfg = PointConfiguration(2, [[0.0, 0.0]])
    with pytest.raises(ValueError):
        probe_stability(_edgeless_builder, cfg, 0.0, 5, 0,
                        window=Region.centered_cube(2.0, 2))


# -- stabilizing limit estimates ------------------------------------------------


def test_delta_infinity_point_count_exact():
    sched = WindowSchedule(2.0, 2.0, 8.0, 1e-9)
    est = estimate_delta_infinity(POINT_COUNT, 1.0, sched, 40, 7)
    assert est.mean == 1.0
    assert est.variance == 0.0
    assert est.converged_fraction == 1.0


def test_delta_infinity_constant_functional():
    sched = WindowSchedule(2.0, 2.0, 8.0, 1e-9)
    est = estimate_delta_infinity(ZERO, 1.0, sched, 30, 8)
    assert est.mean == 0.0
    assert est.variance == 0.0


def test_delta_infinity_mst_two_seeds_agree():
    sched = WindowSchedule(2.0, 2.0, 16.0, 1e-9)
    a = estimate_delta_infinity(MST_LEN, 1.0, sched, 120, 100)
    b = estimate_delta_infinity(MST_LEN, 1.0, sched, 120, 200)
    assert a.converged_fraction > 0.9
    se = math.sqrt(a.stderr ** 2 + b.stderr ** 2)
    assert abs(a.mean - b.mean) <= 3 * se


def test_delta_infinity_monotone_in_max_radius():
    # growing the schedule extends the same realization: converged samples
    # keep their stabilized values
    small = WindowSchedule(2.0, 2.0, 8.0, 1e-9)
    big = WindowSchedule(2.0, 2.0, 16.0, 1e-9)
    a = estimate_delta_infinity(MST_LEN, 1.0, small, 60, 11)
    b = estimate_delta_infinity(MST_LEN, 1.0, big, 60, 11)
    for va, vb, ca in zip(a.values, b.values, a.converged_mask):
        if ca:
            assert vb == pytest.approx(va, abs=1e-9)


def test_delta_infinity_marked_functional_runs():
    sched = WindowSchedule(2.0, 2.0, 4.0, 1e-9)
    spec = FunctionalSpec("weighted_edge_length", GraphBuilderSpec("online_nng"),
                          EdgeWeight("constant", 1.0))
    est = estimate_delta_infinity(spec, 1.0, sched, 20, 13)
    assert np.isfinite(est.mean)


# -- covariance ingredients ------------------------------------------------------


def test_sigma_continuum_point_count_exact():
    sched = WindowSchedule(2.0, 2.0, 4.0, 0.05)
    ing = estimate_sigma_continuum([POINT_COUNT], 1.0, sched, 40, 4, 21)
    assert ing.sigma_hat[0, 0] == 1.0
    assert ing.sigma_se[0, 0] == 0.0
    assert ing.mean_delta[0] == 1.0


def test_sigma_continuum_constant_zero():
    sched = WindowSchedule(2.0, 2.0, 4.0, 0.05)
    ing = estimate_sigma_continuum([ZERO], 1.0, sched, 20, 4, 22)
    assert ing.sigma_hat[0, 0] == 0.0


def test_sigma_continuum_cross_term_with_constant():
    sched = WindowSchedule(2.0, 2.0, 4.0, 0.05)
    ing = estimate_sigma_continuum([POINT_COUNT, ZERO], 1.0, sched, 20, 4, 23)
    assert ing.sigma_hat[0, 1] == 0.0
    assert ing.sigma_hat[1, 0] == 0.0
    assert np.allclose(ing.sigma_hat, ing.sigma_hat.T)


def test_sigma_continuum_validation():
    sched = WindowSchedule(2.0, 2.0, 4.0, 0.05)
    with pytest.raises(ValueError):
        estimate_sigma_continuum([POINT_COUNT], 1.0, sched, 10, 1, 0)
    with pytest.raises(ValueError):
        estimate_sigma_continuum([POINT_COUNT], 1.0, sched, 1, 4, 0)


def test_sigma_lattice_degenerate_p():
    sched = WindowSchedule(2.0, 2.0, 4.0, 0.05)
    fn = LatticeFunctional("cluster_count")
    for p in (0.0, 1.0):
        ing = estimate_sigma_lattice([fn], p, sched, 10, 4, 31)
        assert ing.sigma_hat[0, 0] == 0.0
        assert ing.mean_delta[0] == 0.0


def test_sigma_lattice_two_seeds_agree():
    sched = WindowSchedule(3.0, 2.0, 6.0, 0.05)
    fn = LatticeFunctional("cluster_count")
    a = estimate_sigma_lattice([fn], 0.3, sched, 150, 8, 41)
    b = estimate_sigma_lattice([fn], 0.3, sched, 150, 8, 42)
    se = math.sqrt(a.sigma_se[0, 0] ** 2 + b.sigma_se[0, 0] ** 2)
    assert abs(a.sigma_hat[0, 0] - b.sigma_hat[0, 0]) <= 3 * se
    assert a.sigma_hat[0, 0] > 0


def test_sigma_symmetry_and_unclamped_diagonal():
    sched = WindowSchedule(2.0, 2.0, 4.0, 0.05)
    knn_count = FunctionalSpec("component_count", GraphBuilderSpec("knng", k=1))
    ing = estimate_sigma_continuum([knn_count, POINT_COUNT], 1.0, sched, 60, 4, 51)
    assert np.allclose(ing.sigma_hat, ing.sigma_hat.T, atol=0)
    assert "unclamped" in ing.note


# -- tau ---------------------------------------------------------------------------


def test_tau_point_count_binomial_identity():
    a = Region.box([0.0, 0.0], [0.5, 1.0])
    tau = estimate_tau(np.array([[1.0]]), np.array([1.0]), [a], B0)
    q = 0.5
    assert tau.matrix[0, 0] == pytest.approx(q * (1 - q), abs=1e-15)


def test_tau_disjoint_point_counts():
    a1 = Region.box([0.0, 0.0], [0.5, 1.0])
    a2 = Region.box([0.5, 0.0], [1.0, 1.0])
    tau = estimate_tau(np.ones((2, 2)), np.ones(2), [a1, a2], B0)
    assert tau.matrix[0, 1] == pytest.approx(-0.25, abs=1e-15)


def test_tau_constant_functional_zero():
    a = Region.box([0.0, 0.0], [0.5, 1.0])
    tau = estimate_tau(np.zeros((1, 1)), np.zeros(1), [a], B0)
    assert tau.matrix[0, 0] == 0.0


def test_tau_shape_validation():
    with pytest.raises(ValueError):
        estimate_tau(np.ones((2, 2)), np.ones(2), [B0], B0)


def test_tau_se_propagation():
    a = Region.box([0.0, 0.0], [0.5, 1.0])
    tau = estimate_tau(np.array([[1.0]]), np.array([1.0]), [a], B0,
                       sigma_se=np.array([[0.1]]), mean_delta_se=np.array([0.05]))
    # d tau / d sigma = |A|/|B0| = 0.5 ; d tau / d m = -2 m |A|^2/|B0|^2 = -0.5
    expected = math.sqrt((0.5 * 0.1) ** 2 + 2 * (0.25 * 1.0 * 0.05) ** 2)
    assert tau.se[0, 0] == pytest.approx(expected, rel=1e-12)
