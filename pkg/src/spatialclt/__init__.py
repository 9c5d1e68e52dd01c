"""Simulation and statistical verification of white-noise central limit
behaviour for stabilizing spatial functionals.

Subpackages by concern: `geometry` (box regions, lattice discretization,
cones), `point_process` (Poisson/binomial/marked sampling), `graphs`
(MST, k-NNG, sphere-of-influence, on-line NNG), `functionals` (weighted
edge lengths, vertex landscape sums, component and point counts),
`percolation` (site percolation measures), `stabilization` (radii, probes,
covariance ingredients), `harness` (experiments, tests, reports).
"""

from .geometry import Cone, LatticeSet, Region, cone_cover
from .point_process import (
    CoupledStream,
    MarkedConfiguration,
    PointConfiguration,
    attach_marks,
    coupled_stream,
    sample_binomial,
    sample_poisson,
)
from .graphs import (
    EdgeDelta,
    Graph,
    RootedGraph,
    build_knng,
    build_mst,
    build_online_nng,
    build_sig,
    edge_delta,
    rooted_neighborhood,
)
from .functionals import (
    EdgeWeight,
    FunctionalSpec,
    GraphBuilderSpec,
    VertexStatistic,
    add_one_cost,
    component_count,
    edge_length_counts,
    homogeneity_check,
    point_count,
    vertex_landscape_sum,
    weighted_edge_length,
)
from .percolation import (
    ClusterAnalysis,
    ClusterWeight,
    LatticeConfig,
    LatticeFunctional,
    cluster_analysis,
    cluster_count_measure,
    cluster_weighted_measure,
    largest_component_measure,
    resample_increment,
    sample_lattice,
)
from .stabilization import (
    CovarianceIngredients,
    WindowSchedule,
    doubling_radius_search,
    estimate_delta_infinity,
    estimate_sigma_continuum,
    estimate_sigma_lattice,
    estimate_tau,
    online_nng_radius,
    probe_stability,
)
from .harness import (
    CltReport,
    ExperimentConfig,
    SampleMatrix,
    depoisson_experiment,
    emit_report,
    empirical_process_experiment,
    estimate_covariance,
    fixed_n_experiment,
    run_replicates,
    scaling_diagnostic,
    test_normality,
    white_noise_check,
)

__version__ = "0.1.0"
