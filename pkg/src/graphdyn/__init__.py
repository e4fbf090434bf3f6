"""Step-kernel graph dynamics: densities, metrics, chains, diffusions, flows."""

__version__ = "0.1.0"

from .stepkernel import (
    SimpleGraph,
    StepKernel,
    cut_metric_upper,
    cut_norm,
    cycle_graph,
    delta2_upper,
    edge_graph,
    hom_density,
    hom_density_pinned,
    kernel_from_values,
    l2_distance,
    l2_norm,
    load_kernel_csv,
    load_kernel_text,
    minimize_over_permutations,
    path_graph,
    save_kernel_csv,
    save_kernel_pgm,
    save_kernel_text,
    triangle_graph,
)
from .mvg import (
    DiscreteMeasure,
    MvgDiff,
    MvgKernel,
    PLFunction,
    TestNet,
    build_net,
    d2_distance,
    decorated_density,
    delta_black,
    delta2_mvg_upper,
    gamma_kernel,
    gen_cut_norm,
    load_mvg_text,
    mvg_diff,
    sample_mvg,
    sample_weighted_graph,
    save_mvg_text,
    save_net_text,
    wass_cut,
    wasserstein1,
    wasserstein2,
)
from .hamiltonian import Hamiltonian, named_term_graph, triangle_edge_hamiltonian
from .metropolis import (
    ChainConfig,
    ChainState,
    empirical_drift,
    empirical_qv,
    esbm_sample,
    metropolis_step,
    run_chain,
)
from .sde import (
    SdeConfig,
    SdeState,
    drift_b,
    em_step,
    explicit_drift_formula,
    gaussian_tail,
    limit_drift,
    run_sde,
    skorokhod_1d,
)
from .flow import FlowState, active_mask, flow_step, measure_rates, run_flow

__all__ = [
    "ChainConfig",
    "ChainState",
    "DiscreteMeasure",
    "FlowState",
    "Hamiltonian",
    "MvgDiff",
    "MvgKernel",
    "PLFunction",
    "SdeConfig",
    "SdeState",
    "SimpleGraph",
    "StepKernel",
    "TestNet",
    "active_mask",
    "build_net",
    "cut_metric_upper",
    "cut_norm",
    "cycle_graph",
    "d2_distance",
    "decorated_density",
    "delta2_mvg_upper",
    "delta2_upper",
    "delta_black",
    "drift_b",
    "edge_graph",
    "em_step",
    "empirical_drift",
    "empirical_qv",
    "esbm_sample",
    "explicit_drift_formula",
    "flow_step",
    "gamma_kernel",
    "gaussian_tail",
    "gen_cut_norm",
    "hom_density",
    "hom_density_pinned",
    "kernel_from_values",
    "l2_distance",
    "l2_norm",
    "limit_drift",
    "load_kernel_csv",
    "load_kernel_text",
    "load_mvg_text",
    "measure_rates",
    "metropolis_step",
    "minimize_over_permutations",
    "mvg_diff",
    "named_term_graph",
    "path_graph",
    "run_chain",
    "run_flow",
    "run_sde",
    "sample_mvg",
    "sample_weighted_graph",
    "save_kernel_csv",
    "save_kernel_pgm",
    "save_kernel_text",
    "save_mvg_text",
    "save_net_text",
    "skorokhod_1d",
    "triangle_edge_hamiltonian",
    "triangle_graph",
    "wass_cut",
    "wasserstein1",
    "wasserstein2",
]
