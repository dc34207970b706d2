"""Network simulator: topology, SINR, distributed scheduling and TDMA benchmarks."""

from rfdsa.dsa.channel import SinrConfig, evaluate_slot, outnet_blocked, sinr_db
from rfdsa.dsa.classifiers import (
    CLASSIFIER_KINDS, ChannelStatus, Observation, make_classifier, observe, sense_channel,
)
from rfdsa.dsa.protocol import Request, Response, make_request, make_response, resolve_transmission, run_protocol
from rfdsa.dsa.sim import (
    Metrics, Options, ScenarioConfig, SuperframeConfig, apply_overrides, benchmark_scheme_1,
    benchmark_scheme_2, make_scenario, run_simulation, write_metrics_csv,
)
from rfdsa.dsa.topology import (
    InfeasiblePlacement, Topology, TopologyConfig, build_interference_graph, dump_topology_csv,
    generate_topology, greedy_coloring, max_degree,
)

__all__ = [
    "SinrConfig", "evaluate_slot", "outnet_blocked", "sinr_db",
    "CLASSIFIER_KINDS", "ChannelStatus", "Observation", "make_classifier", "observe", "sense_channel",
    "Request", "Response", "make_request", "make_response", "resolve_transmission", "run_protocol",
    "Metrics", "Options", "ScenarioConfig", "SuperframeConfig", "apply_overrides", "benchmark_scheme_1",
    "benchmark_scheme_2", "make_scenario", "run_simulation", "write_metrics_csv",
    "InfeasiblePlacement", "Topology", "TopologyConfig", "build_interference_graph", "dump_topology_csv",
    "generate_topology", "greedy_coloring", "max_degree",
]
