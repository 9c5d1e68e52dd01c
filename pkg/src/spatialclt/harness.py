"""Experiment orchestration: replicates, covariance scaling, normality tests.

An experiment draws N independent realizations of a spatial process (Poisson,
binomial, fixed-count, or lattice mode), evaluates every functional of the
battery on the *same* realization per replicate, and normalizes the sample
covariance by the appropriate power of the scale.  Diagnostics check the
white-noise structure (covariances proportional to region intersections),
multivariate normality via random one-dimensional projections with a
parametric-bootstrap Kolmogorov-Smirnov test, scaling stabilization across
window sizes, and consistency with the de-Poissonized covariance matrix.
The whole pipeline is a pure function of the experiment config, including
its master seed, so reruns and parallel runs are bit-identical.
"""

import concurrent.futures
import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _norm

from ._util import fmt17
from .functionals import FunctionalSpec
from .geometry import Region
from .percolation import LatticeFunctional, sample_lattice
from .point_process import (
    attach_marks,
    sample_binomial,
    sample_poisson,
)
from .stabilization import estimate_tau

__all__ = [
    "ExperimentConfig",
    "SampleMatrix",
    "CovarianceEstimate",
    "ProportionalityReport",
    "NormalityReport",
    "ScalingReport",
    "CltReport",
    "run_replicates",
    "estimate_covariance",
    "white_noise_check",
    "test_normality",
    "scaling_diagnostic",
    "depoisson_experiment",
    "fixed_n_experiment",
    "empirical_process_experiment",
    "emit_report",
]

MODES = ("poisson", "binomial", "fixed_n", "lattice")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment; the pipeline is a pure function
    of this object (master seed included)."""

    mode: str
    b0: Region
    regions: tuple
    functionals: tuple
    scales: tuple  # window scales t (poisson/lattice) or sample sizes n
    replicates: int
    seed: int
    lam: float = 1.0
    p: float = 0.5
    alpha: float = 0.01
    n_projections: int = 16
    gamma: float | None = None  # homogeneity order, fixed_n mode
    rho: float | None = None  # lattice discretization radius, default sqrt(d)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.replicates < 2:
            raise ValueError("need at least 2 replicates")
        if not self.scales:
            raise ValueError("need at least one scale")
        for a in self.regions:
            if not a.is_subset_of(self.b0):
                raise ValueError("every test region must be a subset of the base region")
        if self.mode == "lattice":
            for f in self.functionals:
                if not isinstance(f, LatticeFunctional):
                    raise ValueError("lattice mode requires lattice functionals")
        else:
            for f in self.functionals:
                if not isinstance(f, FunctionalSpec):
                    raise ValueError("point process modes require FunctionalSpec functionals")
        if self.mode == "poisson" and self.lam <= 0:
            raise ValueError("poisson mode needs a positive intensity")

    @property
    def k(self):
        return len(self.functionals)

    def t_of_n(self, n):
        """Window scale for a binomial sample: lam * t^d |B0| = n exactly."""
        return (n / (self.lam * self.b0.measure())) ** (1.0 / self.b0.dim)

    def to_dict(self):
        return {
            "mode": self.mode,
            "b0": self.b0.to_dict(),
            "regions": [a.to_dict() for a in self.regions],
            "functionals": [f.to_dict() for f in self.functionals],
            "scales": list(self.scales),
            "replicates": self.replicates,
            "seed": self.seed,
            "lambda": self.lam,
            "p": self.p,
            "alpha": self.alpha,
            "n_projections": self.n_projections,
            "gamma": self.gamma,
            "rho": self.rho,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        mode = d["mode"]
        if mode == "lattice":
            fns = tuple(LatticeFunctional.from_dict(f) for f in d["functionals"])
        else:
            fns = tuple(FunctionalSpec.from_dict(f) for f in d["functionals"])
        return cls(
            mode=mode,
            b0=Region.from_dict(d["b0"]),
            regions=tuple(Region.from_dict(a) for a in d["regions"]),
            functionals=fns,
            scales=tuple(d["scales"]),
            replicates=int(d["replicates"]),
            seed=int(d["seed"]),
            lam=float(d.get("lambda", 1.0)),
            p=float(d.get("p", 0.5)),
            alpha=float(d.get("alpha", 0.01)),
            n_projections=int(d.get("n_projections", 16)),
            gamma=d.get("gamma"),
            rho=d.get("rho"),
        )

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class SampleMatrix:
    """N x k matrix of functional values plus replication metadata."""

    values: np.ndarray
    mode: str
    scale: float
    seeds: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("values must be an (N, k) matrix")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample matrix contains non-finite entries")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def k(self):
        return self.values.shape[1]


def _replicate_values(cfg, scale, r):
    """Evaluate all functionals on one fresh realization (same realization
    for every functional: joint distributions matter)."""
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(int(round(scale * 2 ** 20)), r))
    if cfg.mode == "lattice":
        window = cfg.b0.scale(scale).discretize(cfg.rho)
        lat = sample_lattice(cfg.p, window, ss, region=cfg.b0)
        return [f.measure(lat, scale, a) for f, a in zip(cfg.functionals, cfg.regions)]
    if cfg.mode == "poisson":
        t = scale
        region_t = cfg.b0.scale(t)
        config = sample_poisson(cfg.lam, region_t, ss)
    elif cfg.mode == "binomial":
        n = int(round(scale))
        t = cfg.t_of_n(n)
        region_t = cfg.b0.scale(t)
        config = sample_binomial(n, region_t, ss)
    else:  # fixed_n
        n = int(round(scale))
        t = 1.0
        config = sample_binomial(n, cfg.b0, ss)
    if any(f.needs_marks for f in cfg.functionals):
        config = attach_marks(
            config, np.random.SeedSequence(cfg.seed,
                                           spawn_key=(int(round(scale * 2 ** 20)), r, 1)))
    graphs = {}
    out = []
    for f, a in zip(cfg.functionals, cfg.regions):
        key = f.builder.to_json() if getattr(f, "builder", None) is not None else None
        if key is not None and key not in graphs:
            graphs[key] = f.builder(config)
        out.append(f.evaluate(config, a.scale(t), graph=graphs.get(key)))
    return out


_worker_cfg_cache = {}


def _worker(args):
    cfg_json, scale, r = args
    cfg = _worker_cfg_cache.get(cfg_json)
    if cfg is None:
        cfg = ExperimentConfig.from_json(cfg_json)
        _worker_cfg_cache.clear()
        _worker_cfg_cache[cfg_json] = cfg
    return r, _replicate_values(cfg, scale, r)


def run_replicates(cfg, scale_index=0, n_jobs=1):
    """Sample the N x k matrix of functional values at one scale.

    Replicates are independent streams keyed by (master seed, scale, index);
    parallel execution merges by index and is bit-identical to serial.
    """
    scale = cfg.scales[scale_index]
    n = cfg.replicates
    values = np.empty((n, cfg.k))
    if n_jobs <= 1:
        for r in range(n):
            values[r] = _replicate_values(cfg, scale, r)
    else:
        cfg_json = cfg.to_json()
        args = [(cfg_json, scale, r) for r in range(n)]
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_jobs) as ex:
            for r, row in ex.map(_worker, args, chunksize=max(1, n // (4 * n_jobs))):
                values[r] = row
    return SampleMatrix(values, cfg.mode, float(scale))


@dataclass(frozen=True)
class CovarianceEstimate:
    """Normalized sample covariance with jackknife standard errors."""

    matrix: np.ndarray
    se: np.ndarray
    scale: float
    normalization: float
    n: int

    def to_dict(self):
        return {"matrix": np.asarray(self.matrix).tolist(),
                "se": np.asarray(self.se).tolist(),
                "scale": self.scale, "normalization": self.normalization, "n": self.n}


def _leave_one_out_covs(values):
    """All N leave-one-out covariance matrices, (N, k, k), via sum updates."""
    n, k = values.shape
    s1 = values.sum(axis=0)
    s2 = np.einsum("ni,nj->ij", values, values)
    m = n - 1
    mean_r = (s1[None, :] - values) / m  # (N, k)
    s2_r = s2[None, :, :] - np.einsum("ni,nj->nij", values, values)
    cov_r = (s2_r - m * np.einsum("ni,nj->nij", mean_r, mean_r)) / (m - 1)
    return cov_r


def jackknife_se(values, stat):
    """Jackknife standard error of stat(values) over replicate rows."""
    n = values.shape[0]
    reps = np.array([stat(np.delete(values, r, axis=0)) for r in range(n)])
    mean = reps.mean(axis=0)
    return np.sqrt((n - 1) / n * np.sum((reps - mean) ** 2, axis=0))


def estimate_covariance(m, scale=None, normalization=None):
    """Sample covariance of the rows divided by the mode's normalization
    (t^d for poisson/lattice windows, n for binomial/fixed counts)."""
    if m.n < 2:
        raise ValueError("need at least 2 replicates for a covariance")
    values = m.values
    if normalization is None:
        raise ValueError("normalization (t^d or n) must be supplied")
    cov = np.cov(values, rowvar=False, ddof=1).reshape(m.k, m.k) / normalization
    cov_r = _leave_one_out_covs(values) / normalization
    n = m.n
    mean_r = cov_r.mean(axis=0)
    se = np.sqrt((n - 1) / n * np.sum((cov_r - mean_r) ** 2, axis=0))
    return CovarianceEstimate(cov, se, float(scale if scale is not None else m.scale),
                              float(normalization), n)


@dataclass(frozen=True)
class ProportionalityReport:
    """White-noise proportionality: covariances against intersection measures."""

    reference: int
    ratios: np.ndarray  # observed c_ij / c_ll
    expected: np.ndarray  # |A_i ∩ A_j| / |A_l|
    ratio_se: np.ndarray
    z_scores: np.ndarray  # (ratios - expected) / se; for disjoint pairs, c_ij / se
    disjoint: np.ndarray  # bool mask of pairs with |A_i ∩ A_j| = 0
    passed: bool

    def to_dict(self):
        return {"reference": self.reference,
                "ratios": self.ratios.tolist(),
                "expected": self.expected.tolist(),
                "ratio_se": self.ratio_se.tolist(),
                "z_scores": self.z_scores.tolist(),
                "disjoint": self.disjoint.tolist(),
                "passed": self.passed}


def white_noise_check(cov, m, regions, reference=0, z_max=3.0):
    """Compare covariance ratios with region-intersection measure ratios.

    For pairs with |A_i ∩ A_j| > 0 the ratio c_ij / c_ll must match
    |A_i ∩ A_j| / |A_l| within z_max jackknifed standard errors; disjoint
    pairs must have c_ij within z_max standard errors of zero.
    """
    k = len(regions)
    if k < 2:
        raise ValueError("need at least two regions")
    inter = np.array([[regions[i].intersect(regions[j]).measure() for j in range(k)]
                      for i in range(k)])
    ref_vol = inter[reference, reference]
    if cov.matrix[reference, reference] <= 0:
        raise ValueError("degenerate reference variance")
    values = m.values
    norm_c = cov.normalization

    ratios = cov.matrix / cov.matrix[reference, reference]
    expected = inter / ref_vol
    disjoint = inter == 0.0

    cov_r = _leave_one_out_covs(values) / norm_c
    n = values.shape[0]
    ratio_r = cov_r / cov_r[:, reference, reference][:, None, None]
    mean_ratio = ratio_r.mean(axis=0)
    ratio_se = np.sqrt((n - 1) / n * np.sum((ratio_r - mean_ratio) ** 2, axis=0))

    z = np.zeros((k, k))
    ok = True
    for i in range(k):
        for j in range(k):
            if disjoint[i, j]:
                se = cov.se[i, j]
                z[i, j] = cov.matrix[i, j] / se if se > 0 else 0.0
            else:
                se = ratio_se[i, j]
                z[i, j] = (ratios[i, j] - expected[i, j]) / se if se > 0 else 0.0
            if abs(z[i, j]) > z_max:
                ok = False
    return ProportionalityReport(reference, ratios, expected, ratio_se, z,
                                 disjoint, ok)


@dataclass(frozen=True)
class NormalityReport:
    """Random-projection KS normality test with bootstrap p-values."""

    p_values: tuple
    statistics: tuple
    skipped: tuple  # indices of degenerate (zero-variance) projections
    alpha: float
    n_projections: int
    bonferroni_pass: bool
    n_pass: int

    def to_dict(self):
        return {"p_values": list(self.p_values), "statistics": list(self.statistics),
                "skipped": list(self.skipped), "alpha": self.alpha,
                "n_projections": self.n_projections,
                "bonferroni_pass": self.bonferroni_pass, "n_pass": self.n_pass}


def _lilliefors_stat(rows):
    """KS distance to the standard normal after per-row standardization.

    rows: (B, N). Returns (B,) statistics."""
    b, n = rows.shape
    mu = rows.mean(axis=1, keepdims=True)
    sd = rows.std(axis=1, ddof=1, keepdims=True)
    z = np.sort((rows - mu) / sd, axis=1)
    cdf = _norm.cdf(z)
    grid_hi = np.arange(1, n + 1) / n
    grid_lo = np.arange(0, n) / n
    d_plus = np.max(grid_hi[None, :] - cdf, axis=1)
    d_minus = np.max(cdf - grid_lo[None, :], axis=1)
    return np.maximum(d_plus, d_minus)


def ks_normality_pvalue(sample, n_bootstrap=999, seed=0):
    """Parametric-bootstrap p-value of the estimated-parameter KS test."""
    sample = np.asarray(sample, dtype=float)
    d_obs = float(_lilliefors_stat(sample[None, :])[0])
    rng = np.random.default_rng(seed)
    boot = rng.standard_normal((n_bootstrap, sample.size))
    d_boot = _lilliefors_stat(boot)
    p = (1.0 + np.count_nonzero(d_boot >= d_obs)) / (n_bootstrap + 1.0)
    return float(p), d_obs


def test_normality(m, n_projections=16, seed=0, alpha=0.01, n_bootstrap=999):
    """Cramér-Wold style normality check on random unit projections.

    Each projection of the centred rows is standardized and tested against
    the standard normal with a parametric-bootstrap KS test; results are
    combined by Bonferroni."""
    if m.n < 100:
        raise ValueError("need at least 100 replicates for the normality test")
    rng = np.random.default_rng(seed)
    values = m.values - m.values.mean(axis=0)
    p_values = []
    stats = []
    skipped = []
    for j in range(int(n_projections)):
        b = rng.standard_normal(m.k)
        b /= np.linalg.norm(b)
        proj = values @ b
        if proj.std(ddof=1) == 0.0:
            skipped.append(j)
            continue
        p, d = ks_normality_pvalue(proj, n_bootstrap=n_bootstrap,
                                   seed=np.random.SeedSequence(seed, spawn_key=(j,)))
        p_values.append(p)
        stats.append(d)
    tested = len(p_values)
    if tested == 0:
        return NormalityReport((), (), tuple(skipped), alpha, int(n_projections),
                               True, 0)
    bonferroni = min(p_values) >= alpha / tested
    n_pass = sum(1 for p in p_values if p >= alpha)
    return NormalityReport(tuple(p_values), tuple(stats), tuple(skipped), alpha,
                           int(n_projections), bool(bonferroni), n_pass)


@dataclass(frozen=True)
class ScalingReport:
    """Normalized covariance sequence across scales with a verdict."""

    scales: tuple
    estimates: tuple  # k x k matrices
    ses: tuple
    stabilized: bool

    def to_dict(self):
        return {"scales": list(self.scales),
                "estimates": [np.asarray(e).tolist() for e in self.estimates],
                "ses": [np.asarray(s).tolist() for s in self.ses],
                "stabilized": self.stabilized}


def _normalization_for(cfg, scale):
    if cfg.mode in ("poisson", "lattice"):
        return float(scale) ** cfg.b0.dim
    if cfg.mode == "binomial":
        return float(scale)
    # fixed_n: n^{1 - 2 gamma / d} multiplies Cov, i.e. divide by its inverse
    gamma = cfg.gamma if cfg.gamma is not None else 0.0
    n = float(scale)
    return n ** (1.0 - 2.0 * gamma / cfg.b0.dim)


def scaling_diagnostic(cfg, n_jobs=1):
    """Estimate the normalized covariance at every scale; the sequence is
    declared stabilized when the last two agree within 3 combined SEs."""
    if len(cfg.scales) < 2:
        raise ValueError("need at least two scales")
    ests = []
    ses = []
    for si in range(len(cfg.scales)):
        m = run_replicates(cfg, si, n_jobs=n_jobs)
        ce = estimate_covariance(m, scale=cfg.scales[si],
                                 normalization=_normalization_for(cfg, cfg.scales[si]))
        ests.append(ce.matrix)
        ses.append(ce.se)
    diff = np.abs(ests[-1] - ests[-2])
    tol = 3.0 * np.sqrt(ses[-1] ** 2 + ses[-2] ** 2)
    return ScalingReport(tuple(cfg.scales), tuple(ests), tuple(ses),
                         bool(np.all(diff <= tol)))


@dataclass(frozen=True)
class CltReport:
    """Everything one experiment produced, JSON-serializable."""

    config: dict
    covariances: tuple  # CovarianceEstimate dicts per scale
    normality: dict | None = None
    proportionality: dict | None = None
    scaling: dict | None = None
    tau_comparison: dict | None = None
    samples: np.ndarray | None = field(default=None, compare=False)
    passed: bool = True

    def to_dict(self):
        return {
            "config": self.config,
            "covariances": list(self.covariances),
            "normality": self.normality,
            "proportionality": self.proportionality,
            "scaling": self.scaling,
            "tau_comparison": self.tau_comparison,
            "passed": self.passed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def clt_experiment(cfg, n_jobs=1, normality=True, proportionality=None):
    """Replicates + covariance (+ optional normality / white-noise checks)
    at the last configured scale."""
    si = len(cfg.scales) - 1
    m = run_replicates(cfg, si, n_jobs=n_jobs)
    ce = estimate_covariance(m, scale=cfg.scales[si],
                             normalization=_normalization_for(cfg, cfg.scales[si]))
    normality_rep = None
    if normality:
        normality_rep = test_normality(m, cfg.n_projections, cfg.seed, cfg.alpha)
    prop_rep = None
    if proportionality is None:
        proportionality = cfg.k >= 2
    if proportionality:
        prop = white_noise_check(ce, m, cfg.regions)
        prop_rep = prop.to_dict()
    passed = (normality_rep is None or normality_rep.bonferroni_pass) and (
        prop_rep is None or prop_rep["passed"])
    return CltReport(cfg.to_dict(), (ce.to_dict(),),
                     normality=normality_rep.to_dict() if normality_rep else None,
                     proportionality=prop_rep,
                     samples=m.values, passed=bool(passed)), m, ce


def _tau_from_ingredients(ingredients, regions, b0):
    return estimate_tau(ingredients.sigma_hat, ingredients.mean_delta, regions, b0,
                        sigma_se=ingredients.sigma_se,
                        mean_delta_se=ingredients.mean_delta_se)


def depoisson_experiment(cfg, ingredients=None, n_jobs=1):
    """Binomial-mode covariances compared against the tau matrix.

    `ingredients` are half-space covariance ingredients for cfg.functionals
    at intensity cfg.lam (from the stabilization estimators); when omitted,
    only the measured covariances and normality results are reported.
    """
    if cfg.mode != "binomial":
        raise ValueError("depoisson_experiment requires binomial mode")
    covs = []
    last = None
    for si, n in enumerate(cfg.scales):
        m = run_replicates(cfg, si, n_jobs=n_jobs)
        ce = estimate_covariance(m, scale=n, normalization=float(n))
        covs.append(ce.to_dict())
        last = (m, ce)
    m, ce = last
    normality_rep = test_normality(m, cfg.n_projections, cfg.seed, cfg.alpha) \
        if m.n >= 100 else None
    tau_cmp = None
    passed = normality_rep.bonferroni_pass if normality_rep else True
    if ingredients is not None:
        tau = _tau_from_ingredients(ingredients, cfg.regions, cfg.b0)
        diff = np.abs(ce.matrix - tau.matrix)
        tol = 3.0 * np.sqrt(ce.se ** 2 + tau.se ** 2)
        tau_ok = bool(np.all(diff <= tol))
        tau_cmp = {"tau": tau.matrix.tolist(), "tau_se": tau.se.tolist(),
                   "measured": ce.matrix.tolist(), "measured_se": ce.se.tolist(),
                   "within_3se": tau_ok}
        passed = passed and tau_ok
    return CltReport(cfg.to_dict(), tuple(covs),
                     normality=normality_rep.to_dict() if normality_rep else None,
                     tau_comparison=tau_cmp, samples=m.values, passed=bool(passed))


def fixed_n_experiment(cfg, ingredients=None, n_jobs=1, check_homogeneity=True):
    """Fixed-count mode: rescale by n^(2 gamma / d - 1) and compare with tau
    at the reference intensity 1/|B0|.

    Refuses to run when a pre-check finds the declared homogeneity order is
    violated beyond 1e-9 on random configurations.
    """
    if cfg.mode != "fixed_n":
        raise ValueError("fixed_n_experiment requires fixed_n mode")
    gamma = cfg.gamma if cfg.gamma is not None else 0.0
    if check_homogeneity:
        from .functionals import homogeneity_check
        rng_seed = np.random.SeedSequence(cfg.seed, spawn_key=(999_999,))
        probe = sample_binomial(24, cfg.b0, rng_seed)
        if any(f.needs_marks for f in cfg.functionals):
            probe = attach_marks(probe, np.random.SeedSequence(cfg.seed, spawn_key=(999_998,)))
        for f, a in zip(cfg.functionals, cfg.regions):
            g = f.gamma if f.gamma is not None else f.homogeneity_order()
            if g is None or abs(g - gamma) > 0:
                raise ValueError(
                    f"functional {f.family} does not declare homogeneity order {gamma}")
            for scale_a in (0.5, 2.0):
                res = homogeneity_check(f, probe, a, scale_a, gamma)
                if res > 1e-9:
                    raise ValueError(
                        f"homogeneity violated: residual {res:.3e} at a={scale_a}")
    covs = []
    last = None
    for si, n in enumerate(cfg.scales):
        m = run_replicates(cfg, si, n_jobs=n_jobs)
        ce = estimate_covariance(m, scale=n, normalization=_normalization_for(cfg, n))
        covs.append(ce.to_dict())
        last = (m, ce)
    m, ce = last
    normality_rep = test_normality(m, cfg.n_projections, cfg.seed, cfg.alpha) \
        if m.n >= 100 else None
    tau_cmp = None
    passed = normality_rep.bonferroni_pass if normality_rep else True
    if ingredients is not None:
        tau = _tau_from_ingredients(ingredients, cfg.regions, cfg.b0)
        diff = np.abs(ce.matrix - tau.matrix)
        tol = 3.0 * np.sqrt(ce.se ** 2 + tau.se ** 2)
        tau_ok = bool(np.all(diff <= tol))
        tau_cmp = {"tau": tau.matrix.tolist(), "tau_se": tau.se.tolist(),
                   "measured": ce.matrix.tolist(), "measured_se": ce.se.tolist(),
                   "within_3se": tau_ok}
        passed = passed and tau_ok
    return CltReport(cfg.to_dict(), tuple(covs),
                     normality=normality_rep.to_dict() if normality_rep else None,
                     tau_comparison=tau_cmp, samples=m.values, passed=bool(passed))


@dataclass(frozen=True)
class EmpiricalProcessReport:
    """Covariance-function estimate of the edge-length empirical process."""

    s_values: tuple
    matrix: np.ndarray
    se: np.ndarray
    min_eigenvalue: float
    min_eigenvalue_se: float
    symmetric: bool
    psd_within_noise: bool

    def to_dict(self):
        return {"s_values": list(self.s_values),
                "matrix": np.asarray(self.matrix).tolist(),
                "se": np.asarray(self.se).tolist(),
                "min_eigenvalue": self.min_eigenvalue,
                "min_eigenvalue_se": self.min_eigenvalue_se,
                "symmetric": self.symmetric,
                "psd_within_noise": self.psd_within_noise}


def empirical_process_experiment(cfg, s_values, n_jobs=1):
    """Covariance function of edge-length threshold counts over an s-grid.

    Each threshold s becomes the edge-weight functional with the strict
    indicator phi(r) = 1{r < s} on the configured builder (MST by default)
    over the full base region; the multivariate pipeline then estimates the
    covariance function on the grid and checks that it is symmetric and has
    no eigenvalue below -3 SE of zero.
    """
    from .functionals import EdgeWeight, GraphBuilderSpec
    s_values = tuple(float(s) for s in s_values)
    if any(s2 <= s1 for s1, s2 in zip(s_values, s_values[1:])):
        raise ValueError("s_values must be strictly increasing")
    builder = None
    for f in cfg.functionals:
        if getattr(f, "builder", None) is not None:
            builder = f.builder
            break
    if builder is None:
        builder = GraphBuilderSpec("mst")
    fns = tuple(
        FunctionalSpec("weighted_edge_length", builder, EdgeWeight("indicator", s))
        for s in s_values
    )
    sub = ExperimentConfig(
        mode=cfg.mode, b0=cfg.b0,
        regions=tuple(cfg.b0 for _ in s_values),
        functionals=fns, scales=cfg.scales, replicates=cfg.replicates,
        seed=cfg.seed, lam=cfg.lam, alpha=cfg.alpha,
        n_projections=cfg.n_projections)
    si = len(sub.scales) - 1
    m = run_replicates(sub, si, n_jobs=n_jobs)
    norm_c = _normalization_for(sub, sub.scales[si])
    ce = estimate_covariance(m, scale=sub.scales[si], normalization=norm_c)
    sym = bool(np.allclose(ce.matrix, ce.matrix.T, atol=0))
    min_eig = float(np.linalg.eigvalsh(ce.matrix).min())
    cov_r = _leave_one_out_covs(m.values) / norm_c
    eigs_r = np.array([np.linalg.eigvalsh(c).min() for c in cov_r])
    n = m.n
    se_eig = math.sqrt((n - 1) / n * np.sum((eigs_r - eigs_r.mean()) ** 2))
    psd_ok = min_eig >= -3.0 * se_eig
    return EmpiricalProcessReport(s_values, ce.matrix, ce.se, min_eig, se_eig,
                                  sym, bool(psd_ok))


# -- report emission ---------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt17(c) if isinstance(c, float) else c for c in row])


def emit_report(report, out_dir):
    """Write report JSON, covariance/sample CSVs, plot-data CSVs, and an SVG.

    Returns the list of files written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path(name):
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    d = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    with open(path("report.json"), "w") as f:
        json.dump(d, f, indent=2)

    covs = d.get("covariances") or []
    if covs:
        k = len(covs[-1]["matrix"])
        rows = []
        for c in covs:
            for i in range(k):
                for j in range(k):
                    rows.append([c["scale"], i, j, float(c["matrix"][i][j]),
                                 float(c["se"][i][j])])
        _write_csv(path("covariance.csv"), ["scale", "i", "j", "value", "se"], rows)

    samples = getattr(report, "samples", None)
    if samples is not None:
        samples = np.asarray(samples)
        _write_csv(path("samples.csv"),
                   [f"h{j + 1}" for j in range(samples.shape[1])],
                   [[float(x) for x in row] for row in samples])
        col = samples[:, 0]
        std = col.std(ddof=1)
        z = (col - col.mean()) / (std if std > 0 else 1.0)
        hist, edges = np.histogram(z, bins=30)
        _write_csv(path("histogram.csv"), ["bin_lo", "bin_hi", "count"],
                   [[float(edges[i]), float(edges[i + 1]), int(hist[i])]
                    for i in range(hist.size)])
        zs = np.sort(z)
        qn = _norm.ppf((np.arange(1, zs.size + 1) - 0.5) / zs.size)
        _write_csv(path("qq.csv"), ["theoretical", "observed"],
                   [[float(a), float(b)] for a, b in zip(qn, zs)])
        _plot_svg(path("report.svg"), z, zs, qn, d)
    scaling = d.get("scaling")
    if scaling:
        rows = []
        for s, e in zip(scaling["scales"], scaling["estimates"]):
            rows.append([float(s), float(e[0][0])])
        _write_csv(path("scaling.csv"), ["scale", "c11"], rows)
    return written


def _plot_svg(fname, z, zs, qn, report_dict):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    axes[0].hist(z, bins=30, density=True, alpha=0.7)
    grid = np.linspace(-4, 4, 200)
    axes[0].plot(grid, _norm.pdf(grid), "k--", lw=1)
    axes[0].set_title("standardized sample vs N(0,1)")
    axes[1].plot(qn, zs, ".", ms=2)
    lim = [min(qn.min(), zs.min()), max(qn.max(), zs.max())]
    axes[1].plot(lim, lim, "k--", lw=1)
    axes[1].set_title("normal Q-Q")
    fig.tight_layout()
    fig.savefig(fname, format="svg")
    plt.close(fig)
