"""Command line interface.

Subcommands mirror the library surface: sampling, graph building,
functional evaluation, percolation statistics, stabilization radii and
covariance ingredients, and the CLT experiment pipelines.  All numeric
output is printed with 17 significant digits.

Exit codes: 0 all checks passed, 1 a statistical criterion failed,
2 invalid configuration, 3 runtime error.
"""

import argparse
import json
import math
import sys

import numpy as np

from ._util import fmt17
from .functionals import FunctionalSpec
from .geometry import Region
from .harness import (
    ExperimentConfig,
    clt_experiment,
    depoisson_experiment,
    emit_report,
    empirical_process_experiment,
    fixed_n_experiment,
    run_replicates,
    scaling_diagnostic,
)
from .percolation import (
    LatticeFunctional,
    cluster_analysis,
    sample_lattice,
)
from .point_process import attach_marks, sample_binomial, sample_poisson
from .stabilization import (
    WindowSchedule,
    estimate_delta_infinity,
    estimate_sigma_continuum,
    estimate_sigma_lattice,
    online_nng_radius,
    probe_stability,
)

EXIT_PASS = 0
EXIT_CRITERION = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load_config(path):
    with open(path) as f:
        return json.load(f)


def _region(d):
    return Region.from_dict(d)


def _out_path(args, name):
    import os
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _print_matrix(label, mat):
    mat = np.asarray(mat)
    print(label)
    for row in np.atleast_2d(mat):
        print("  " + " ".join(fmt17(x) for x in row))


def cmd_sample(args):
    cfg = _load_config(args.config)
    region = _region(cfg["region"])
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if cfg.get("kind", "poisson") == "poisson":
        config = sample_poisson(cfg["lambda"], region, seed)
    else:
        config = sample_binomial(cfg["m"], region, seed)
    if cfg.get("marks"):
        config = attach_marks(config, np.random.SeedSequence(seed, spawn_key=(1,)))
    config.to_csv(_out_path(args, "points.csv"))
    print(f"sampled {len(config)} points -> {_out_path(args, 'points.csv')}")
    return EXIT_PASS


def cmd_graph(args):
    cfg = _load_config(args.config)
    region = _region(cfg["region"])
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    spec = FunctionalSpec.from_dict(cfg["functional"]) if "functional" in cfg else None
    builder = spec.builder if spec else None
    if builder is None:
        from .functionals import GraphBuilderSpec
        builder = GraphBuilderSpec.from_dict(cfg["builder"])
    config = sample_poisson(cfg.get("lambda", 1.0), region, seed)
    if builder.needs_marks:
        config = attach_marks(config, np.random.SeedSequence(seed, spawn_key=(1,)))
    g = builder(config)
    g.to_csv(_out_path(args, "edges.csv"))
    print(f"built {builder.kind} graph: {g.n} vertices, {g.n_edges} edges, "
          f"total length {fmt17(g.total_length())}")
    return EXIT_PASS


def cmd_functional(args):
    cfg = _load_config(args.config)
    region = _region(cfg["region"])
    window = _region(cfg.get("window", cfg["region"]))
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    spec = FunctionalSpec.from_dict(cfg["functional"])
    config = sample_poisson(cfg.get("lambda", 1.0), window, seed)
    if spec.needs_marks:
        config = attach_marks(config, np.random.SeedSequence(seed, spawn_key=(1,)))
    value = spec.evaluate(config, region)
    print(fmt17(value))
    return EXIT_PASS


def cmd_percolation(args):
    cfg = _load_config(args.config)
    b0 = _region(cfg["b0"])
    t = cfg.get("t", 1.0)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    window = b0.scale(t).discretize(cfg.get("rho"))
    lat = sample_lattice(cfg["p"], window, seed, region=b0)
    analysis = cluster_analysis(lat)
    print(f"window sites {len(window)}, occupied {len(lat.occupied)}, "
          f"components {analysis.n_components}")
    if analysis.sizes:
        print(f"largest component size {max(analysis.sizes)}")
    if "functional" in cfg and "region" in cfg:
        fn = LatticeFunctional.from_dict(cfg["functional"])
        val = fn.measure(lat, t, _region(cfg["region"]))
        print(fmt17(val))
    return EXIT_PASS


def cmd_stab_radius(args):
    cfg = _load_config(args.config)
    window = _region(cfg["window"])
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    config = sample_poisson(cfg.get("lambda", 1.0), window, seed)
    config = attach_marks(config, np.random.SeedSequence(seed, spawn_key=(1,)))
    if not config.region.contains(np.zeros(config.dim)):
        print("window must contain the origin", file=sys.stderr)
        return EXIT_CONFIG
    mark = cfg.get("origin_mark", 0.5)
    config = config.with_point(np.zeros(config.dim), mark=mark)
    res = online_nng_radius(config, window)
    print(f"radius {fmt17(res.radius)} exact {res.exact}")
    if cfg.get("probes"):
        from .functionals import GraphBuilderSpec
        probe = probe_stability(GraphBuilderSpec("online_nng"), config, res.radius,
                                cfg["probes"], seed, window=window)
        print(f"probes passed: {probe.passed}")
        return EXIT_PASS if probe.passed else EXIT_CRITERION
    return EXIT_PASS


def _schedule(cfg):
    s = cfg.get("schedule", {})
    return WindowSchedule(s.get("w0", 2.0), s.get("factor", 2.0),
                          s.get("max_radius", 8.0), s.get("tol", 0.05))


def cmd_delta_inf(args):
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    spec = FunctionalSpec.from_dict(cfg["functional"])
    est = estimate_delta_infinity(spec, cfg.get("lambda", 1.0), _schedule(cfg),
                                  cfg.get("n_samples", 200), seed,
                                  dim=cfg.get("dim", 2))
    print(f"mean {fmt17(est.mean)} variance {fmt17(est.variance)} "
          f"converged {fmt17(est.converged_fraction)}")
    return EXIT_PASS


def cmd_sigma(args):
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    schedule = _schedule(cfg)
    if cfg.get("kind", "continuum") == "continuum":
        specs = [FunctionalSpec.from_dict(f) for f in cfg["functionals"]]
        ing = estimate_sigma_continuum(specs, cfg.get("lambda", 1.0), schedule,
                                       cfg.get("outer_n", 400), cfg.get("inner_m", 8),
                                       seed, dim=cfg.get("dim", 2))
    else:
        fns = [LatticeFunctional.from_dict(f) for f in cfg["functionals"]]
        ing = estimate_sigma_lattice(fns, cfg["p"], schedule,
                                     cfg.get("outer_n", 400), cfg.get("inner_m", 8),
                                     seed, dim=cfg.get("dim", 2))
    _print_matrix("sigma_hat", ing.sigma_hat)
    _print_matrix("sigma_se", ing.sigma_se)
    _print_matrix("mean_delta", ing.mean_delta)
    with open(_out_path(args, "sigma.json"), "w") as f:
        f.write(ing.to_json())
    return EXIT_PASS


def _experiment_config(cfg, args):
    if args.seed is not None:
        cfg = dict(cfg)
        cfg["seed"] = args.seed
    return ExperimentConfig.from_dict(cfg)


def cmd_clt(args):
    ecfg = _experiment_config(_load_config(args.config), args)
    report, m, ce = clt_experiment(ecfg, n_jobs=args.threads)
    _print_matrix("normalized covariance", ce.matrix)
    emit_report(report, args.out)
    print(f"passed: {report.passed}")
    return EXIT_PASS if report.passed else EXIT_CRITERION


def cmd_depoisson(args):
    ecfg = _experiment_config(_load_config(args.config), args)
    report = depoisson_experiment(ecfg, n_jobs=args.threads)
    emit_report(report, args.out)
    print(f"passed: {report.passed}")
    return EXIT_PASS if report.passed else EXIT_CRITERION


def cmd_fixed_n(args):
    ecfg = _experiment_config(_load_config(args.config), args)
    report = fixed_n_experiment(ecfg, n_jobs=args.threads)
    emit_report(report, args.out)
    print(f"passed: {report.passed}")
    return EXIT_PASS if report.passed else EXIT_CRITERION


def cmd_empirical(args):
    cfg = _load_config(args.config)
    s_values = cfg.pop("s_values")
    ecfg = _experiment_config(cfg, args)
    rep = empirical_process_experiment(ecfg, s_values, n_jobs=args.threads)
    _print_matrix("covariance function", rep.matrix)
    print(f"min eigenvalue {fmt17(rep.min_eigenvalue)} "
          f"(se {fmt17(rep.min_eigenvalue_se)})")
    ok = rep.symmetric and rep.psd_within_noise
    print(f"passed: {ok}")
    return EXIT_PASS if ok else EXIT_CRITERION


def cmd_scaling(args):
    ecfg = _experiment_config(_load_config(args.config), args)
    rep = scaling_diagnostic(ecfg, n_jobs=args.threads)
    for s, e in zip(rep.scales, rep.estimates):
        _print_matrix(f"scale {fmt17(s)}", e)
    print(f"stabilized: {rep.stabilized}")
    return EXIT_PASS if rep.stabilized else EXIT_CRITERION


def cmd_report(args):
    with open(args.config) as f:
        d = json.load(f)

    class _Shim:
        def __init__(self, d):
            self._d = d
            self.samples = None

        def to_dict(self):
            return self._d

    emit_report(_Shim(d), args.out)
    print(f"report files written to {args.out}")
    return EXIT_PASS


_COMMANDS = {
    "sample": cmd_sample,
    "graph": cmd_graph,
    "functional": cmd_functional,
    "percolation": cmd_percolation,
    "stab-radius": cmd_stab_radius,
    "delta-inf": cmd_delta_inf,
    "sigma": cmd_sigma,
    "clt": cmd_clt,
    "depoisson": cmd_depoisson,
    "fixed-n": cmd_fixed_n,
    "empirical": cmd_empirical,
    "scaling": cmd_scaling,
    "report": cmd_report,
}


def build_parser():
    p = argparse.ArgumentParser(prog="spatialclt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="master seed override")
        sp.add_argument("--threads", type=int, default=1, help="worker processes")
        sp.add_argument("--out", default="out", help="output directory")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - surfaced with context for the shell
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
