"""Stabilization radii, falsification probes, and covariance ingredients.

The on-line NNG admits an exact-by-construction radius from a pi/6 cone
cover: twice the farthest of the per-cone distances to the nearest
lower-marked point.  `probe_stability` attacks any claimed radius with
random external configurations; it can certify failure, never compliance.
Nested Monte Carlo estimators recover the limiting add-one cost, the
half-space-conditioned covariance ingredients for continuum and lattice
functionals, and the de-Poissonized covariance matrix tau.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .functionals import add_one_cost
from .geometry import Region, cone_cover
from .point_process import (
    MarkedConfiguration,
    PointConfiguration,
    sample_poisson,
    attach_marks,
)

__all__ = [
    "WindowSchedule",
    "CovarianceIngredients",
    "RadiusResult",
    "ProbeResult",
    "online_nng_radius",
    "probe_stability",
    "doubling_radius_search",
    "estimate_delta_infinity",
    "estimate_sigma_continuum",
    "estimate_sigma_lattice",
    "estimate_tau",
]


@dataclass(frozen=True)
class WindowSchedule:
    """Geometric window growth with a convergence tolerance."""

    w0: float
    factor: float = 2.0
    max_radius: float = 16.0
    tol: float = 1e-9

    def __post_init__(self):
        if self.w0 <= 0:
            raise ValueError("initial radius must be positive")
        if self.factor <= 1:
            raise ValueError("growth factor must exceed 1")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_radius < self.w0:
            raise ValueError("max radius must be at least the initial radius")

    def windows(self):
        out = [self.w0]
        while out[-1] * self.factor <= self.max_radius * (1 + 1e-12):
            out.append(out[-1] * self.factor)
        return out

    def close(self, a, b):
        return abs(a - b) <= self.tol * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class RadiusResult:
    radius: float
    exact: bool  # False when any cone fell back to the window boundary
    cone_radii: tuple


@dataclass(frozen=True)
class ProbeResult:
    passed: bool
    n_probes: int
    counterexample: object = None  # offending external points, if any


def _find_origin(config):
    origin = np.zeros(config.dim)
    hits = np.nonzero(np.all(config.points == origin, axis=1))[0]
    if hits.size == 0:
        raise ValueError("configuration does not contain the origin")
    return int(hits[0])


def _ray_exit_distance(region, direction):
    """Largest t with t*direction inside the closure of some region box."""
    best = 0.0
    for lo, hi in zip(region.lo, region.hi):
        t_in, t_out = 0.0, np.inf
        ok = True
        for l, h, u in zip(lo, hi, direction):
            if abs(u) < 1e-300:
                if not (l <= 0.0 <= h):
                    ok = False
                    break
                continue
            a, b = l / u, h / u
            if a > b:
                a, b = b, a
            t_in = max(t_in, a)
            t_out = min(t_out, b)
        if ok and t_in <= t_out and t_out > best:
            best = t_out
    return best


def _cone_directions(cone, n_ring=64, n_random=192, seed=1234):
    """Deterministic direction sample inside an origin cone (axis included)."""
    d = cone.dim
    axis = cone.axis
    dirs = [axis]
    rng = np.random.default_rng(seed)
    thetas = np.linspace(0.0, cone.half_angle * (1 - 1e-9), n_ring, endpoint=True)[1:]
    for theta in thetas:
        w = rng.standard_normal(d)
        w -= (w @ axis) * axis
        nw = np.linalg.norm(w)
        if nw == 0:
            continue
        dirs.append(math.cos(theta) * axis + math.sin(theta) * (w / nw))
    for _ in range(n_random):
        w = rng.standard_normal(d)
        w -= (w @ axis) * axis
        nw = np.linalg.norm(w)
        if nw == 0:
            continue
        theta = rng.random() * cone.half_angle * (1 - 1e-9)
        dirs.append(math.cos(theta) * axis + math.sin(theta) * (w / nw))
    return np.array(dirs)


def _cone_window_reach(cone, window):
    """Approximate sup of |y| over the window intersected with the cone,
    via exact ray exits along a deterministic direction grid."""
    dirs = _cone_directions(cone)
    return float(max(_ray_exit_distance(window, u) for u in dirs))


def online_nng_radius(config, window=None):
    """Stabilization radius of the on-line NNG at the origin.

    For each cone of the pi/6 cover, take the distance to the nearest
    point with a mark lower than the origin's; the radius is twice the
    largest of these.  A cone with no lower-marked point in the window
    falls back to (roughly) the farthest window point in that cone and the
    result is flagged as a finite-window fallback.
    """
    if not isinstance(config, MarkedConfiguration):
        raise ValueError("on-line NNG radius needs a marked configuration")
    window = window if window is not None else config.region
    if window is None:
        raise ValueError("no window region available")
    oi = _find_origin(config)
    t0 = config.marks[oi]
    pts = np.delete(config.points, oi, axis=0)
    marks = np.delete(config.marks, oi)
    cones = cone_cover(config.dim, math.pi / 6)
    radii = []
    exact = True
    for cone in cones:
        if pts.shape[0]:
            in_cone = cone.contains_points(pts)
            lower = in_cone & (marks < t0)
        else:
            lower = np.zeros(0, dtype=bool)
        if np.any(lower):
            radii.append(float(np.min(np.linalg.norm(pts[lower], axis=1))))
        else:
            radii.append(_cone_window_reach(cone, window))
            exact = False
    return RadiusResult(2.0 * max(radii), exact, tuple(radii))


def _origin_delta_keys(builder, points, marks, origin_index):
    """E+/E- of the origin as coordinate-keyed edge sets (comparable across
    configurations with different indexings)."""
    if marks is None:
        cfg = PointConfiguration(points.shape[1], points)
        cfg_minus = PointConfiguration(
            points.shape[1], np.delete(points, origin_index, axis=0))
    else:
        cfg = MarkedConfiguration(points.shape[1], points, marks)
        cfg_minus = MarkedConfiguration(
            points.shape[1],
            np.delete(points, origin_index, axis=0),
            np.delete(marks, origin_index))
    g = builder(cfg)
    g_minus = builder(cfg_minus)

    def keys(graph, pts):
        return frozenset(
            tuple(sorted((tuple(pts[u]), tuple(pts[v]))))
            for u, v in graph.edge_list
        )

    e_full = keys(g, cfg.points)
    e_minus = keys(g_minus, cfg_minus.points)
    return e_full - e_minus, e_minus - e_full


def probe_stability(builder, config, radius, n_probes, seed, window=None,
                    max_probe_points=20):
    """Falsify a claimed stabilization radius with random external sets.

    Random finite configurations are planted in window \\ B_R(0); the
    origin's added/removed edge sets must match their values for the empty
    external set.  Returns the first violating external set, if any.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    window = window if window is not None else config.region
    if window is None:
        raise ValueError("no window region available")
    oi = _find_origin(config)
    marked = isinstance(config, MarkedConfiguration)
    dist = np.linalg.norm(config.points, axis=1)
    keep = dist <= radius
    keep[oi] = True
    base_pts = config.points[keep]
    base_marks = config.marks[keep] if marked else None
    base_oi = int(np.nonzero(np.all(base_pts == 0.0, axis=1))[0][0])
    baseline = _origin_delta_keys(builder, base_pts, base_marks, base_oi)

    rng = np.random.default_rng(seed)
    lo, hi = window.bounds()
    corners = np.stack(np.meshgrid(*zip(lo, hi), indexing="ij"), -1).reshape(-1, window.dim)
    if np.max(np.linalg.norm(corners, axis=1)) <= radius:
        return ProbeResult(True, int(n_probes))  # nothing lies beyond the ball

    vols = np.prod(window.hi - window.lo, axis=1)
    box_p = vols / vols.sum()
    existing = {tuple(p) for p in base_pts.tolist()}
    used_marks = set(base_marks.tolist()) if marked else set()
    for _ in range(int(n_probes)):
        m = int(rng.integers(0, max_probe_points + 1))
        probe = []
        attempts = 0
        while len(probe) < m and attempts < 10_000:
            box = int(rng.choice(window.n_boxes, p=box_p))
            cand = window.lo[box] + rng.random(window.dim) * (window.hi[box] - window.lo[box])
            attempts += 1
            if np.linalg.norm(cand) > radius and tuple(cand) not in existing:
                probe.append(cand)
        if not probe:
            continue
        probe = np.array(probe)
        pts = np.concatenate([base_pts, probe])
        if marked:
            new_marks = rng.random(len(probe))
            while set(new_marks.tolist()) & used_marks or np.unique(new_marks).size != len(probe):
                new_marks = rng.random(len(probe))
            marks = np.concatenate([base_marks, new_marks])
        else:
            marks = None
        result = _origin_delta_keys(builder, pts, marks, base_oi)
        if result != baseline:
            return ProbeResult(False, int(n_probes), counterexample=probe)
    return ProbeResult(True, int(n_probes))


def doubling_radius_search(builder, config, seed, window=None, r0=1.0,
                           n_probes=50, max_radius=None):
    """Heuristic radius: double R until the probe falsifier finds nothing.

    Unlike the on-line NNG construction this certifies nothing; the result
    is only a radius that survived `n_probes` random attacks.
    """
    window = window if window is not None else config.region
    lo, hi = window.bounds()
    cap = max_radius or float(np.max(np.linalg.norm(
        np.stack(np.meshgrid(*zip(lo, hi), indexing="ij"), -1).reshape(-1, window.dim),
        axis=1)))
    r = float(r0)
    trial = 0
    while r <= cap * (1 + 1e-12):
        res = probe_stability(builder, config, r, n_probes,
                              _sub_seed(seed, trial), window=window)
        if res.passed:
            return r, True
        r *= 2.0
        trial += 1
    return r, False


# -- stabilizing limits and covariance ingredients --------------------------


def _sub_seed(seed, *key):
    """Deterministic sub-stream seed from an int or SeedSequence."""
    key = tuple(int(k) for k in key)
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + key)
    return np.random.SeedSequence(seed, spawn_key=key)


@dataclass(frozen=True)
class DeltaEstimate:
    mean: float
    variance: float
    converged_fraction: float
    n_samples: int
    values: tuple = field(repr=False, default=())
    converged_mask: tuple = field(repr=False, default=())

    @property
    def stderr(self):
        if self.n_samples < 2:
            return float("inf")
        return math.sqrt(self.variance / self.n_samples)


def _annulus_boxes(w_in, w_out, dim):
    """Disjoint slab decomposition of the cube annulus cube(w_out) \\ cube(w_in)."""
    boxes = []
    for i in range(dim):
        lo_outer, hi_outer = [-w_out] * i, [w_out] * i
        lo_inner, hi_inner = [-w_in] * (dim - 1 - i), [w_in] * (dim - 1 - i)
        for lo_i, hi_i in ((-w_out, -w_in), (w_in, w_out)):
            boxes.append((lo_outer + [lo_i] + lo_inner,
                          hi_outer + [hi_i] + hi_inner))
    return boxes


def estimate_delta_infinity(spec, lam, schedule, n_samples, seed, dim=2):
    """Stabilizing limit of the add-one cost over growing cube windows.

    Per sample, the Poisson realization is drawn shell by shell, so growing
    the schedule's maximum radius extends the same realization instead of
    redrawing it; a sample stabilizes when two consecutive window
    evaluations agree within the schedule tolerance.
    """
    if lam <= 0:
        raise ValueError("intensity must be positive")
    values = np.empty(n_samples)
    converged = np.zeros(n_samples, dtype=bool)
    windows = schedule.windows()
    for s in range(int(n_samples)):
        rng = np.random.default_rng(_sub_seed(seed, s, 10_000))
        origin_mark = float(rng.random())
        pts = np.empty((0, dim))
        marks = np.empty(0)
        prev_w = None
        prev = None
        val = None
        for j, w in enumerate(windows):
            shell_region = (Region.centered_cube(w, dim) if prev_w is None
                            else Region(dim, _annulus_boxes(prev_w, w, dim),
                                        _trusted=True))
            shell = sample_poisson(lam, shell_region, _sub_seed(seed, s, j))
            if spec.needs_marks:
                shell = attach_marks(shell, _sub_seed(seed, s, j, 1))
                marks = np.concatenate([marks, shell.marks])
            pts = np.concatenate([pts, shell.points])
            prev_w = w
            sub = Region.centered_cube(w, dim)
            if spec.needs_marks:
                config = MarkedConfiguration(dim, pts, marks)
            else:
                config = PointConfiguration(dim, pts)
            val = add_one_cost(spec, config, sub,
                               origin_mark=origin_mark if spec.needs_marks else None)
            if prev is not None and schedule.close(val, prev):
                converged[s] = True
                break
            prev = val
        values[s] = val
    mean = float(values.mean()) if n_samples else 0.0
    var = float(values.var(ddof=1)) if n_samples > 1 else 0.0
    return DeltaEstimate(mean, var, float(converged.mean()) if n_samples else 0.0,
                         int(n_samples), tuple(values.tolist()),
                         tuple(bool(c) for c in converged))


@dataclass(frozen=True)
class CovarianceIngredients:
    """Half-space covariance matrix estimate and limiting add-one cost means."""

    sigma_hat: np.ndarray
    sigma_se: np.ndarray
    mean_delta: np.ndarray
    mean_delta_se: np.ndarray
    windows_used: tuple
    converged: bool
    window_trace: tuple  # sigma estimates per window, flattened lists
    outer_n: int
    inner_m: int
    note: str = ""

    def to_json(self):
        return json.dumps({
            "sigma_hat": np.asarray(self.sigma_hat).tolist(),
            "sigma_se": np.asarray(self.sigma_se).tolist(),
            "mean_delta": np.asarray(self.mean_delta).tolist(),
            "mean_delta_se": np.asarray(self.mean_delta_se).tolist(),
            "windows_used": list(self.windows_used),
            "converged": self.converged,
            "window_trace": [np.asarray(m).tolist() for m in self.window_trace],
            "outer_n": self.outer_n,
            "inner_m": self.inner_m,
            "note": self.note,
        })


_SPLIT_NOTE = ("split-sample product estimator: inner replicates are halved and "
               "the two half-means multiplied, so conditional-mean products are "
               "unbiased; diagonal entries may go slightly negative within noise "
               "and are reported unclamped")


def _product_matrix(inner_values):
    """Symmetrized split-sample product estimate from an (m, k) array."""
    m = inner_values.shape[0]
    half = m // 2
    m1 = inner_values[:half].mean(axis=0)
    m2 = inner_values[half:].mean(axis=0)
    return 0.5 * (np.outer(m1, m2) + np.outer(m2, m1))


def _sigma_from_products(prods):
    """Mean and outer-sample standard error of stacked (n, k, k) products."""
    est = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(prods.shape[0])
    return est, se


def estimate_sigma_continuum(specs, lam, schedule, outer_n, inner_m, seed, dim=2):
    """Half-space covariance ingredients for continuum functionals.

    Outer samples fix the Poisson configuration on the negative-x1 half of
    a cube window; inner samples refill the nonnegative-x1 half and redraw
    the origin's mark, giving conditional means of the add-one cost at the
    origin.  Windows grow per the schedule (nested restriction of one
    realization) until the matrix estimate stops moving.
    """
    if inner_m < 2:
        raise ValueError("split-sample estimator needs inner_m >= 2")
    if outer_n < 2:
        raise ValueError("need outer_n >= 2")
    k = len(specs)
    needs_marks = any(sp.needs_marks for sp in specs)
    windows = schedule.windows()
    wmax = windows[-1]

    def outer_seed(o, which):
        return _sub_seed(seed, o, which)

    prev = None
    trace = []
    used = []
    converged = False
    final_prods = None
    final_inner_means = None
    for wi, w in enumerate(windows):
        prods = np.empty((outer_n, k, k))
        inner_means = np.empty((outer_n, k))
        for o in range(int(outer_n)):
            minus_region = Region.box([-wmax] + [-wmax] * (dim - 1),
                                      [0.0] + [wmax] * (dim - 1))
            plus_region = Region.box([0.0] + [-wmax] * (dim - 1),
                                     [wmax] + [wmax] * (dim - 1))
            minus = sample_poisson(lam, minus_region, outer_seed(o, 0))
            inner_vals = np.empty((inner_m, k))
            for i in range(int(inner_m)):
                iss = outer_seed(o, 1 + i)
                plus = sample_poisson(lam, plus_region, iss)
                rng = np.random.default_rng(_sub_seed(seed, o, 10_000 + i))
                pts = np.concatenate([minus.points, plus.points])
                sub = Region.centered_cube(w, dim)
                inside = sub.contains_points(pts)
                pts_w = pts[inside]
                if needs_marks:
                    cfg = attach_marks(PointConfiguration(dim, pts), rng).restrict(sub)
                else:
                    cfg = PointConfiguration(dim, pts_w)
                origin_mark = float(rng.random()) if needs_marks else None
                for f, sp in enumerate(specs):
                    inner_vals[i, f] = add_one_cost(
                        sp, cfg, sub,
                        origin_mark=origin_mark if sp.needs_marks else None)
            prods[o] = _product_matrix(inner_vals)
            inner_means[o] = inner_vals.mean(axis=0)
        est, _ = _sigma_from_products(prods)
        trace.append(est)
        used.append(w)
        final_prods = prods
        final_inner_means = inner_means
        if prev is not None and np.max(np.abs(est - prev)) <= schedule.tol * max(
                1.0, float(np.max(np.abs(est)))):
            converged = True
            break
        prev = est
    sigma, sigma_se = _sigma_from_products(final_prods)
    mean_delta = final_inner_means.mean(axis=0)
    mean_se = final_inner_means.std(axis=0, ddof=1) / math.sqrt(outer_n)
    return CovarianceIngredients(sigma, sigma_se, mean_delta, mean_se,
                                 tuple(used), converged,
                                 tuple(trace), int(outer_n), int(inner_m),
                                 note=_SPLIT_NOTE)


def _lattice_cube_sites(w, dim):
    axes = [np.arange(-w, w + 1)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dim)


def _lex_leq_origin(sites):
    """Boolean mask of sites z with z <= 0 in lexicographic order."""
    n, dim = sites.shape
    out = np.zeros(n, dtype=bool)
    decided = np.zeros(n, dtype=bool)
    for i in range(dim):
        col = sites[:, i]
        out[~decided & (col < 0)] = True
        decided |= col != 0
    out[~decided] = True  # the origin itself
    return out


def estimate_sigma_lattice(functionals, p, schedule, outer_n, inner_m, seed, dim=2):
    """Half-lattice covariance ingredients for lattice functionals.

    Outer samples fix occupancies on the lexicographic past (z <= 0) of a
    cube window; inner samples redraw the future and the origin's
    replacement value, and the increment of the whole-window statistic
    under the origin swap is inner-averaged.
    """
    if inner_m < 2:
        raise ValueError("split-sample estimator needs inner_m >= 2")
    if not (0.0 <= p <= 1.0):
        raise ValueError("occupation probability must lie in [0, 1]")
    k = len(functionals)
    windows = [int(round(w)) for w in schedule.windows()]
    wmax = windows[-1]
    sites_max = _lattice_cube_sites(wmax, dim)
    past_mask_max = _lex_leq_origin(sites_max)
    origin_row = int(np.nonzero(np.all(sites_max == 0, axis=1))[0][0])

    prev = None
    trace = []
    used = []
    converged = False
    final_prods = None
    final_inner_means = None
    for w in windows:
        in_w = np.all(np.abs(sites_max) <= w, axis=1)
        prods = np.empty((outer_n, k, k))
        inner_means = np.empty((outer_n, k))
        for o in range(int(outer_n)):
            rng_past = np.random.default_rng(_sub_seed(seed, o, 0))
            u_past = rng_past.random(sites_max.shape[0])  # only past entries used
            inner_vals = np.empty((inner_m, k))
            for i in range(int(inner_m)):
                rng_fut = np.random.default_rng(_sub_seed(seed, o, 1 + i))
                u_fut = rng_fut.random(sites_max.shape[0])
                star = bool(rng_fut.random() < p)
                occ = np.where(past_mask_max, u_past < p, u_fut < p)
                occ_swapped = occ.copy()
                occ_swapped[origin_row] = star
                if np.array_equal(occ, occ_swapped):
                    inner_vals[i] = 0.0
                    continue
                sel = occ & in_w
                sel_swapped = occ_swapped & in_w
                for f, fn in enumerate(functionals):
                    inner_vals[i, f] = (fn.window_value(sites_max[sel])
                                        - fn.window_value(sites_max[sel_swapped]))
            prods[o] = _product_matrix(inner_vals)
            inner_means[o] = inner_vals.mean(axis=0)
        est, _ = _sigma_from_products(prods)
        trace.append(est)
        used.append(w)
        final_prods = prods
        final_inner_means = inner_means
        if prev is not None and np.max(np.abs(est - prev)) <= schedule.tol * max(
                1.0, float(np.max(np.abs(est)))):
            converged = True
            break
        prev = est
    sigma, sigma_se = _sigma_from_products(final_prods)
    mean_delta = final_inner_means.mean(axis=0)
    mean_se = final_inner_means.std(axis=0, ddof=1) / math.sqrt(outer_n)
    return CovarianceIngredients(sigma, sigma_se, mean_delta, mean_se,
                                 tuple(used), converged, tuple(trace),
                                 int(outer_n), int(inner_m), note=_SPLIT_NOTE)


@dataclass(frozen=True)
class TauEstimate:
    matrix: np.ndarray
    se: np.ndarray

    def to_json(self):
        return json.dumps({"matrix": np.asarray(self.matrix).tolist(),
                           "se": np.asarray(self.se).tolist()})


def estimate_tau(sigma_hat, mean_delta, regions, b0, sigma_se=None, mean_delta_se=None):
    """De-Poissonized covariance matrix from half-space ingredients.

    tau_ij = sigma_ij |A_i ∩ A_j| / |B0| - (|A_i||A_j| / |B0|^2) E[d_i] E[d_j],
    with first-order (delta method) standard errors when ingredient errors
    are supplied.
    """
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    mean_delta = np.asarray(mean_delta, dtype=float)
    k = len(regions)
    if sigma_hat.shape != (k, k) or mean_delta.shape != (k,):
        raise ValueError("ingredient shapes do not match the number of regions")
    vol0 = b0.measure()
    vols = np.array([a.measure() for a in regions])
    inter = np.array([[regions[i].intersect(regions[j]).measure() for j in range(k)]
                      for i in range(k)])
    tau = sigma_hat * inter / vol0 - np.outer(vols, vols) / vol0 ** 2 * np.outer(
        mean_delta, mean_delta)
    if sigma_se is None:
        se = np.zeros_like(tau)
    else:
        sigma_se = np.asarray(sigma_se, dtype=float)
        mean_delta_se = np.asarray(mean_delta_se, dtype=float)
        var = (inter / vol0) ** 2 * sigma_se ** 2
        coeff = np.outer(vols, vols) / vol0 ** 2
        var = var + coeff ** 2 * (
            np.outer(mean_delta_se ** 2, mean_delta ** 2)
            + np.outer(mean_delta ** 2, mean_delta_se ** 2))
        se = np.sqrt(var)
    return TauEstimate(tau, se)
