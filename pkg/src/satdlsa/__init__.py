"""Degree-limited utility-optimal scheduling for multihop satellite networks."""

from .analysis import TheoryReport, compute_B, diagnose_sweep
from .channel import ChannelSpec, ChannelState, check_rate_properties, rate, sample_state
from .configfile import bundled_config_path, dumps_config, load_config, loads_config
from .dlsa import (compute_weights, optimal_link_power, route_commodities, select_links_exact,
                   select_links_greedy, solve_admission)
from .engine import QueueState, RunMetrics, Simulator, SlotDecision, run, step
from .model import ConfigError, Graph, NetworkConfig, build_graph, paper_config, validate_config

__version__ = "0.1.0"
