"""parasim: simulate and search parallelization strategies for DNN training.

Given an operator graph and a device topology, parasim enumerates how each
operation may be split across its parallelizable tensor dimensions, expands
a chosen strategy into a device-level task graph (compute, transfers, and
gradient synchronization), simulates that task graph either from scratch or
incrementally after a single-op change, and drives a simulated-annealing
style search over strategies using the incremental simulator.
"""

from .cost import (
    AnalyticCostModel,
    CostKey,
    CostProfile,
    ProfileFormatError,
    comm_time,
    cost_digest,
    cost_key_for,
    dumps_profile,
    load_profile,
    loads_profile,
    merge_profiles,
    save_profile,
    task_exe_time,
)
from .formats import (
    FORMAT_VERSION,
    FormatError,
    graph_from_json,
    graph_to_json,
    load_graph,
    load_report,
    load_strategy,
    load_topology,
    report_from_json,
    report_to_json,
    save_graph,
    save_report,
    save_strategy,
    save_topology,
    strategy_from_json,
    strategy_to_json,
    topology_from_json,
    topology_to_json,
)
from .graph import (
    DIM_NAMES,
    Connection,
    Device,
    DeviceTopology,
    Operation,
    OperatorGraph,
    OperatorKind,
    TensorEdge,
    TensorShape,
    ValidationReport,
    conv_out_size,
    expected_output_shape,
    pad_before,
    parallelizable_dims,
    shape,
    validate_graph,
    validate_topology,
)
from .models import (
    MODEL_GENERATORS,
    TOPOLOGY_GENERATORS,
    alexnet_like,
    lenet_like,
    multi_node_topology,
    nmt_like,
    rnn3,
    rnn3_model_parallel_strategy,
    rnnlm_like,
    rnntc_like,
    single_node_topology,
)
from .partition import (
    ParallelizationConfig,
    ParallelizationStrategy,
    TensorRegion,
    config_issues,
    data_parallel_strategy,
    divisors,
    enumerate_configs,
    input_regions,
    output_region,
    random_strategy,
    region,
    region_volume_bytes,
    strategy_issues,
)
from .search import (
    ChainSummary,
    ExhaustiveResult,
    SearchError,
    SearchParams,
    SearchReport,
    SearchSpaceTooLarge,
    accept,
    accept_probability,
    exhaustive_optimal,
    local_optimality_check,
    mcmc_search,
    propose,
)
from .simulate import (
    SimulationError,
    SimulationResult,
    chrome_trace,
    delta_simulate,
    full_simulate,
    oracle_simulate,
    write_chrome_trace,
    write_timeline_csv,
)
from .taskgraph import (
    MODE_FORWARD,
    MODE_FULL,
    NoRouteError,
    Task,
    TaskGraph,
    TimelineEntry,
    build_task_graph,
    export_dot,
    structure_table,
    timeline_table,
    update_task_graph,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # graph
    "DIM_NAMES", "TensorShape", "shape", "OperatorKind", "Operation", "TensorEdge",
    "OperatorGraph", "Device", "Connection", "DeviceTopology", "ValidationReport",
    "parallelizable_dims", "expected_output_shape", "conv_out_size", "pad_before",
    "validate_graph", "validate_topology",
    # model and topology generators
    "MODEL_GENERATORS", "TOPOLOGY_GENERATORS", "rnn3", "lenet_like", "alexnet_like",
    "rnnlm_like", "rnntc_like", "nmt_like", "rnn3_model_parallel_strategy",
    "single_node_topology", "multi_node_topology",
    # partitioning
    "ParallelizationConfig", "ParallelizationStrategy", "TensorRegion", "region",
    "region_volume_bytes", "divisors", "output_region", "input_regions",
    "enumerate_configs", "data_parallel_strategy", "random_strategy",
    "config_issues", "strategy_issues",
    # cost
    "CostKey", "CostProfile", "AnalyticCostModel", "ProfileFormatError",
    "cost_digest", "cost_key_for", "task_exe_time", "comm_time",
    "load_profile", "loads_profile", "save_profile", "dumps_profile", "merge_profiles",
    # task graph
    "MODE_FORWARD", "MODE_FULL", "Task", "TimelineEntry", "TaskGraph", "NoRouteError",
    "build_task_graph", "update_task_graph", "timeline_table", "structure_table",
    "export_dot",
    # simulation
    "SimulationError", "SimulationResult", "full_simulate", "delta_simulate",
    "oracle_simulate", "chrome_trace", "write_chrome_trace", "write_timeline_csv",
    # search
    "SearchParams", "SearchReport", "ChainSummary", "SearchError",
    "SearchSpaceTooLarge", "ExhaustiveResult", "accept_probability", "accept",
    "propose", "mcmc_search", "exhaustive_optimal", "local_optimality_check",
    # formats
    "FORMAT_VERSION", "FormatError",
    "graph_to_json", "graph_from_json", "save_graph", "load_graph",
    "topology_to_json", "topology_from_json", "save_topology", "load_topology",
    "strategy_to_json", "strategy_from_json", "save_strategy", "load_strategy",
    "report_to_json", "report_from_json", "save_report", "load_report",
]
