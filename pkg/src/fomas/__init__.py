"""Robust decentralized consensus control of fractional-order multi-agent systems."""

from .errors import (ConnectivityError, DimensionError, FomasError, HomotopyStalled,
                     NotDecentralizedError, NumericalError)
from .graph import AgentGraph, cycle_graph, is_connected, laplacian, reduced_laplacian
from .model import (AgentDynamics, ClosedLoopSystem, ControllerBlock, DecentralizedController,
                    FomasProblem, closed_loop, full_loop_matrix)
from .simulation import SimulationConfig, Trajectory, agent_metrics, consensus_error, metrics, simulate
from .stability import lemma1_lmi, spectral_stable
from .synthesis import HomotopyConfig, SynthesisResult, synthesize, verify
from .uncertainty import UncertaintyModel, UncertaintyRealization

__version__ = "0.1.0"

__all__ = [
    "AgentDynamics", "AgentGraph", "ClosedLoopSystem", "ConnectivityError", "ControllerBlock",
    "DecentralizedController", "DimensionError", "FomasError", "FomasProblem", "HomotopyConfig",
    "HomotopyStalled", "NotDecentralizedError", "NumericalError", "SimulationConfig", "SynthesisResult",
    "Trajectory", "UncertaintyModel", "UncertaintyRealization", "agent_metrics", "closed_loop",
    "consensus_error", "cycle_graph", "full_loop_matrix", "is_connected", "laplacian", "lemma1_lmi",
    "metrics", "reduced_laplacian", "simulate", "spectral_stable", "synthesize", "verify",
]
