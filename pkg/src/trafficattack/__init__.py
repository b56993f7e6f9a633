"""Traffic disruption by disinformation: road graphs, ride synthesis, a
cellular-automaton traffic model, attack planning and disruption reports."""

from .network import RoadNetwork, build_network
from .rides import Ride
from .sim import HAVE_COMPILED, SimParams, TrafficLog, run

__all__ = ["RoadNetwork", "build_network", "Ride", "SimParams", "TrafficLog", "run", "HAVE_COMPILED"]
__version__ = "0.1.0"
