"""Energy and latency accounting (rotary-wing flight model plus radio energy)."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import LIGHT_SPEED, directed_a2a


@dataclass(frozen=True)
class EnergyParams:
    # rotary-wing constants are conventional values, not measured ones
    circuit_power_w: float = 0.1
    profile_drag: float = 0.012
    air_density: float = 1.225
    rotor_area: float = 0.503
    tip_speed: float = 120.0
    induced_correction: float = 0.1
    weight_n: float = 20.0
    fuselage_drag: float = 0.6
    gravity: float = 9.8

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"EnergyParams.{name} must be positive, got {value}")

    @property
    def mass(self) -> float:
        return self.weight_n / self.gravity


@dataclass(frozen=True)
class LatencyParams:
    packet_bits: float = 1.0e6
    light_speed: float = LIGHT_SPEED

    def __post_init__(self):
        if self.packet_bits <= 0:
            raise ValueError("packet_bits must be positive")


def comm_energy(p_tx, params: EnergyParams, dt: float):
    return (p_tx + params.circuit_power_w) * dt


def blade_power(params: EnergyParams) -> float:
    return params.profile_drag / 8 * params.air_density * params.rotor_area * params.tip_speed**3


def induced_power(params: EnergyParams) -> float:
    return (1 + params.induced_correction) * params.weight_n**1.5 / math.sqrt(
        2 * params.air_density * params.rotor_area
    )


def flight_power(speed, params: EnergyParams):
    return blade_power(params) + induced_power(params) + 0.5 * params.fuselage_drag * np.asarray(speed) ** 3


def flight_energy(v_now, v_next, params: EnergyParams, dt: float):
    """Flight energy over one slot; deceleration is not recovered (total clamped at 0)."""
    accel = 0.5 * (np.asarray(v_next) ** 2 - np.asarray(v_now) ** 2) * params.mass
    return np.maximum(flight_power(v_now, params) * dt + accel, 0.0)


def link_latency(rate: float, d: float, params: LatencyParams) -> float:
    if rate <= 0:
        return math.inf
    return params.packet_bits / rate + d / params.light_speed


def latency_matrix(rate, dist, params: LatencyParams) -> np.ndarray:
    with np.errstate(divide="ignore"):
        trans = np.where(rate > 0, params.packet_bits / np.where(rate > 0, rate, 1.0), np.inf)
    return trans + dist / params.light_speed


def per_uav_latency(adj, assoc, env, params: LatencyParams) -> np.ndarray:
    """Per-UAV share of the network latency sum; A2A links go to the lower-index end."""
    d_links = directed_a2a(adj).astype(bool)
    lat_aa = np.where(d_links, latency_matrix(env.rate_a2a, env.dist_a2a, params), 0.0)
    served = np.asarray(assoc).astype(bool)
    lat_ag = np.where(served, latency_matrix(env.rate_a2g, env.dist_a2g, params), 0.0)
    return lat_aa.sum(axis=1) + lat_ag.sum(axis=1)


def per_uav_energy(power, speed, next_speed, params: EnergyParams, dt: float) -> np.ndarray:
    return comm_energy(np.asarray(power), params, dt) + flight_energy(speed, next_speed, params, dt)


def network_totals(world, topo, assoc, env, eparams: EnergyParams, lparams: LatencyParams, next_speeds=None):
    """Return (E_total, latency_total, [(E_i, latency_i), ...]).

    Speeds come from the UAV velocities; ``next_speeds`` defaults to the current ones
    (steady flight, no kinetic-energy change).
    """
    speed = np.linalg.norm(world.uav_velocities(), axis=1)
    nxt = speed if next_speeds is None else np.asarray(next_speeds, dtype=float)
    e = per_uav_energy(world.uav_powers(), speed, nxt, eparams, world.slot_length)
    lat = per_uav_latency(topo.adj, assoc.matrix, env, lparams)
    return float(e.sum()), float(lat.sum()), list(zip(e.tolist(), lat.tolist()))


def consume_energy(world, energies):
    """Debit per-UAV energy from the batteries; returns (world, violated_ids)."""
    uavs, violated = [], []
    for u, e in zip(world.uavs, energies):
        if e > u.residual_energy:
            violated.append(u.id)
        uavs.append(replace(u, residual_energy=max(u.residual_energy - float(e), 0.0)))
    return replace(world, uavs=tuple(uavs)), violated
