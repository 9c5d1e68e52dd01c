import numpy as np
import pytest
from scipy import stats

from spatialclt.geometry import Region
from spatialclt.point_process import (
    CoupledStream,
    MarkedConfiguration,
    attach_marks,
    coupled_stream,
    sample_binomial,
    sample_poisson,
)


def test_poisson_rejects_empty_region():
    with pytest.raises(ValueError):
        sample_poisson(1.0, Region.empty(2), 0)
    with pytest.raises(ValueError):
        sample_poisson(0.0, Region.unit_cube(2), 0)


def test_poisson_determinism():
    r = Region.box([0, 0], [5, 5])
    a = sample_poisson(2.0, r, 123)
    b = sample_poisson(2.0, r, 123)
    assert np.array_equal(a.points, b.points)
    c = sample_poisson(2.0, r, 124)
    assert not np.array_equal(a.points, c.points)


def test_poisson_containment():
    r = Region(2, [([0.0, 0.0], [1.0, 1.0]), ([3.0, 0.0], [4.0, 2.0])])
    cfg = sample_poisson(5.0, r, 42)
    assert r.contains_points(cfg.points).all()


def test_poisson_mean_count():
    # lam * |r| = 100; mean over seeds within 3 standard errors
    r = Region.box([0, 0], [10, 10])
    n_seeds = 10_000
    counts = np.fromiter(
        (len(sample_poisson(1.0, r, s)) for s in range(n_seeds)), dtype=float)
    se = np.sqrt(100.0 / n_seeds)
    assert abs(counts.mean() - 100.0) <= 3 * se


def test_binomial_counts():
    r = Region.unit_cube(2)
    assert len(sample_binomial(0, r, 0)) == 0
    cfg = sample_binomial(5, r, 0)
    assert len(cfg) == 5
    assert r.contains_points(cfg.points).all()
    with pytest.raises(ValueError):
        sample_binomial(3, Region.empty(2), 0)


def test_binomial_uniform_moments():
    # multi-box region: coordinate means match the centroid
    r = Region(2, [([0.0, 0.0], [1.0, 1.0]), ([2.0, 0.0], [3.0, 1.0])])
    m = 10_000
    cfg = sample_binomial(m, r, 7)
    # centroid of the two unit boxes: x = 1.5, y = 0.5
    se_x = cfg.points[:, 0].std(ddof=1) / np.sqrt(m)
    se_y = cfg.points[:, 1].std(ddof=1) / np.sqrt(m)
    assert abs(cfg.points[:, 0].mean() - 1.5) <= 3 * se_x
    assert abs(cfg.points[:, 1].mean() - 0.5) <= 3 * se_y


def test_attach_marks_basic():
    r = Region.unit_cube(2)
    empty = sample_binomial(0, r, 0)
    assert len(attach_marks(empty, 1).marks) == 0
    cfg = attach_marks(sample_binomial(500, r, 2), 3)
    assert len(np.unique(cfg.marks)) == 500
    assert cfg.marks.min() >= 0.0 and cfg.marks.max() <= 1.0


def test_marks_uniformity_chisquare():
    marks = attach_marks(sample_binomial(10_000, Region.unit_cube(2), 4), 5).marks
    hist, _ = np.histogram(marks, bins=20, range=(0, 1))
    _, p = stats.chisquare(hist)
    assert p > 0.01


def test_marked_configuration_validation():
    with pytest.raises(ValueError):
        MarkedConfiguration(1, [[0.0], [1.0]], [0.5, 0.5])  # duplicate marks
    with pytest.raises(ValueError):
        MarkedConfiguration(1, [[0.0]], [1.5])  # outside [0,1]
    with pytest.raises(ValueError):
        MarkedConfiguration(1, [[0.0], [1.0]], [0.5])  # wrong count


def test_coupled_prefix_property():
    cs = coupled_stream(1.0, Region.box([0, 0], [4, 4]), 11)
    first3 = cs.points(3)
    first10 = cs.points(10)
    assert np.array_equal(first3, first10[:3])
    # a fresh stream with the same seed agrees
    cs2 = coupled_stream(1.0, Region.box([0, 0], [4, 4]), 11)
    assert np.array_equal(cs2.points(10), first10)


def test_coupled_count_independent_of_points():
    region = Region.box([0, 0], [2, 2])
    n = 10_000
    counts = np.empty(n)
    coords = np.empty(n)
    for s in range(n):
        cs = CoupledStream(1.0, region, s)
        coords[s] = cs.points(1)[0, 0]
        counts[s] = cs.poisson_count()
    corr = np.corrcoef(counts, coords)[0, 1]
    assert abs(corr) <= 3.0 / np.sqrt(n)


def _poisson_gof_pvalue(counts, mu, n):
    """Chi-square goodness of fit to Poisson(mu), merging small cells."""
    kmax = int(counts.max())
    observed = np.bincount(counts, minlength=kmax + 1).astype(float)
    expected = stats.poisson.pmf(np.arange(kmax + 1), mu) * n
    expected[-1] = n - expected[:-1].sum()  # fold the tail into the last cell
    obs_m, exp_m = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        obs_m[-1] += acc_o
        exp_m[-1] += acc_e
    _, p = stats.chisquare(obs_m, exp_m, ddof=0)
    return p


def test_coupled_poissonization_chisquare():
    region = Region.box([0, 0], [2, 2])  # mu = 4
    n = 10_000
    counts = np.fromiter(
        (CoupledStream(1.0, region, s).poisson_count() for s in range(n)), dtype=int)
    assert _poisson_gof_pvalue(counts, 4.0, n) > 0.01


def test_poisson_thinning_subbox():
    # counts in a sub-box of a Poisson sample are Poisson(lam |A|)
    region = Region.box([0, 0], [2, 2])
    sub = Region.box([0, 0], [1.0, 1.0])
    n = 10_000
    counts = np.empty(n, dtype=int)
    for s in range(n):
        cfg = sample_poisson(1.0, region, s)
        counts[s] = int(sub.contains_points(cfg.points).sum()) if len(cfg) else 0
    assert _poisson_gof_pvalue(counts, 1.0, n) > 0.01


def test_restrict_and_with_point():
    cfg = sample_binomial(50, Region.box([0, 0], [2, 2]), 9)
    sub = Region.unit_cube(2)
    r = cfg.restrict(sub)
    assert sub.contains_points(r.points).all()
    grown = cfg.with_point([5.0, 5.0])
    assert len(grown) == 51
    with pytest.raises(ValueError):
        grown.with_point(grown.points[0])


def test_marked_restrict_keeps_alignment():
    cfg = attach_marks(sample_binomial(100, Region.box([0, 0], [2, 2]), 1), 2)
    sub = Region.unit_cube(2)
    r = cfg.restrict(sub)
    keep = sub.contains_points(cfg.points)
    assert np.array_equal(r.marks, cfg.marks[keep])


def test_csv_and_json_roundtrip(tmp_path):
    cfg = attach_marks(sample_binomial(10, Region.unit_cube(2), 3), 4)
    p = tmp_path / "pts.csv"
    cfg.to_csv(p)
    lines = p.read_text().strip().splitlines()
    assert len(lines) == 11 and lines[0] == "x1,x2,mark"
    back = MarkedConfiguration.from_json(cfg.to_json())
    assert np.array_equal(back.points, cfg.points)
    assert np.array_equal(back.marks, cfg.marks)
