"""Potential-game link pruning and deployment for UAV relay networks."""

from .ag_epg import Association, solve_p2
from .channel import RadioParams
from .epg_core import GameConfig, SystemParams
from .l3_epg import solve_p1
from .metrics import EnergyParams, LatencyParams
from .scenario import GroundUser, Obstacle, UavState, Vec3, WorldState
from .topology import LinkTopology

__all__ = [
    "Association",
    "EnergyParams",
    "GameConfig",
    "GroundUser",
    "LatencyParams",
    "LinkTopology",
    "Obstacle",
    "RadioParams",
    "SystemParams",
    "UavState",
    "Vec3",
    "WorldState",
    "solve_p1",
    "solve_p2",
]
