"""Radner equilibrium with transaction costs and TWAP trading targets."""

from .equilibrium import EquilibriumSolution, MarketSpec, solve
from .errors import ConsistencyError, DomainError, RadnerError, SpecError, UnsupportedOperation
from .ranking import AgentSpec, RankOrdering, build_ordering, fast_rank
from .trajectory import ConstantKappa, TabulatedGamma, TabulatedKappa, TrajectoryModel, Twap, constant_twap

__all__ = [
    "AgentSpec",
    "ConsistencyError",
    "ConstantKappa",
    "DomainError",
    "EquilibriumSolution",
    "MarketSpec",
    "RadnerError",
    "RankOrdering",
    "SpecError",
    "TabulatedGamma",
    "TabulatedKappa",
    "TrajectoryModel",
    "Twap",
    "UnsupportedOperation",
    "build_ordering",
    "constant_twap",
    "fast_rank",
    "solve",
]

__version__ = "0.1.0"
