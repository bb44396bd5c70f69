"""Pump scheduling and demand-response energy harvesting for pressurised water networks.

Submodules: ``network`` (graph model and topology checks), ``hydraulics``
(slot physics, checker, energy audit), ``relax`` (program builders),
``conic`` (SOCP interior-point solver and branch-and-bound), ``recon``
(exact reconstruction and pump speeds), ``contract`` (two-step online loop)
and ``cli``.
"""

from .errors import (
    ConfigurationError,
    HydroHarvestError,
    InfeasibleError,
    MalformedInputError,
    NumericalError,
    TopologyError,
)
from .network import Network, build_active_subgraph, check_theorem1, load_network

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ConfigurationError",
    "HydroHarvestError",
    "InfeasibleError",
    "MalformedInputError",
    "NumericalError",
    "TopologyError",
    "Network",
    "build_active_subgraph",
    "check_theorem1",
    "load_network",
]
