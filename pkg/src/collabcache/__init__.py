"""Collaborative content caching across edge stations: instances, online and offline schemes, workloads."""

from .adversary import build_tree_instance, gen_adversary_stream, h_for_n, offline_upper_bound, phase_sizes
from .demand import DemandMatrix, load_demands, save_demands
from .errors import *  # noqa: F401,F403
from .harness import (
    ExperimentConfig,
    adversary_sweep,
    competitive_ratio_report,
    cost_savings_cdf,
    run_experiment,
    run_single,
)
from .instance import (
    INFINITE,
    Instance,
    Topology,
    all_pairs_ua,
    build_topology,
    instance_from_topology,
    load_instance,
    save_instance,
    topology_from_positions,
    validate_instance,
)
from .offline import (
    OfflinePlan,
    internet_only_cost,
    offline_collaborative_exact,
    offline_noncollaborative,
    reassign,
    set_cover_exact,
    set_cover_to_instance,
    verify_plan,
)
from .online import ContentCacheState, CostLedger, DecisionKind, init_state, process_request, run_stream
from .workload import (
    RequestStream,
    demands_to_stream,
    gen_demands,
    load_stream,
    perturb_uniform,
    save_stream,
    shuffle_ranks,
    zipf_popularity,
)

__version__ = "0.1.0"
