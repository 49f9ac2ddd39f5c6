"""Packet-level simulation of IPv6 QoS queuing disciplines over a bottleneck link."""

from .engine import RandomStream, Simulator
from .model import ConfigError, Packet, TrafficClass, TrafficKind
from .pwfq import PrioritizedWfqRR, PwfqConfig
from .scenarios import ScenarioConfig, build_scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Packet", "PrioritizedWfqRR", "PwfqConfig", "RandomStream",
    "ScenarioConfig", "Simulator", "TrafficClass", "TrafficKind",
    "build_scenario", "run_scenario", "__version__",
]
