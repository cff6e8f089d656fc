"""Air-to-air / air-to-ground propagation, SINR and Shannon rates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import obstacle_bounds, segments_blocked

LIGHT_SPEED = 3.0e8
BOLTZMANN = 1.380649e-23


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RadioParams:
    carrier_hz: float = 2.4e9
    bandwidth_hz: float = 2.0e6
    noise_density_dbm_hz: float | None = -174.0
    temperature_k: float | None = None
    tx_gain_dbi: float = 3.0
    rx_gain_dbi: float = 3.0
    xi_los_db: float = 1.0
    xi_nlos_db: float = 20.0
    env_a: float = 9.6
    env_b: float = 0.28
    path_loss_exponent: float = 2.0
    fading_mode: str = "expected"

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ConfigError("bandwidth_hz must be positive")
        if self.xi_nlos_db < self.xi_los_db:
            raise ConfigError("xi_nlos_db must be >= xi_los_db")
        if self.env_a <= 0 or self.env_b <= 0:
            raise ConfigError("env_a and env_b must be positive")
        if self.fading_mode not in ("expected", "seeded-stochastic"):
            raise ConfigError(f"unknown fading_mode {self.fading_mode!r}")

    @property
    def antenna_gain(self) -> float:
        return 10 ** ((self.tx_gain_dbi + self.rx_gain_dbi) / 10)


@dataclass(frozen=True)
class RadioEnvironment:
    gain_a2a: np.ndarray
    gain_a2g: np.ndarray
    sinr_a2a: np.ndarray
    sinr_a2g: np.ndarray
    rate_a2a: np.ndarray
    rate_a2g: np.ndarray
    # interference-plus-noise seen by the receiver of each directed link
    interf_a2a: np.ndarray
    interf_a2g: np.ndarray
    dist_a2a: np.ndarray
    dist_a2g: np.ndarray
    los_a2a: np.ndarray
    p_los_a2g: np.ndarray


def fspl_db(d, params: RadioParams):
    """Free-space-form loss, generalised to exponent n0 (n0 = 2 is plain free space)."""
    return 10 * params.path_loss_exponent * np.log10(
        4 * math.pi * params.carrier_hz * np.asarray(d, dtype=float) / LIGHT_SPEED
    )


def path_loss_a2a(d: float, los: int, params: RadioParams) -> float:
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    xi = params.xi_los_db if los else params.xi_nlos_db
    return float(fspl_db(d, params)) + xi


def los_probability(theta, params: RadioParams):
    a, b = params.env_a, params.env_b
    return 1.0 / (1.0 + a * np.exp(-b * (np.asarray(theta, dtype=float) - a)))


def path_loss_a2g(d: float, p_los: float, params: RadioParams, rng: np.random.Generator | None = None) -> float:
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    if not 0.0 <= p_los <= 1.0:
        raise ValueError(f"p_los must lie in [0, 1], got {p_los}")
    base = float(fspl_db(d, params))
    if params.fading_mode == "expected":
        return base + p_los * params.xi_los_db + (1 - p_los) * params.xi_nlos_db
    if rng is None:
        raise ConfigError("seeded-stochastic fading requires an rng")
    return base + (params.xi_los_db if rng.random() < p_los else params.xi_nlos_db)


def noise_power(params: RadioParams) -> float:
    if params.noise_density_dbm_hz is not None and params.temperature_k is not None:
        raise ConfigError("configure noise either by density or by temperature, not both")
    if params.temperature_k is not None:
        return BOLTZMANN * params.temperature_k * params.bandwidth_hz
    if params.noise_density_dbm_hz is None:
        raise ConfigError("no noise configuration given")
    return 10 ** ((params.noise_density_dbm_hz - 30) / 10) * params.bandwidth_hz


def shannon_rate(sinr, bandwidth_hz: float):
    return bandwidth_hz * np.log2(1.0 + sinr)


def pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(-1))


def a2a_los_matrix(pos: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    n = len(pos)
    if lo.shape[0] == 0:
        los = np.ones((n, n), dtype=bool)
    else:
        iu = np.triu_indices(n, 1)
        blocked = segments_blocked(pos[iu[0]], pos[iu[1]], lo, hi)
        los = np.ones((n, n), dtype=bool)
        los[iu] = ~blocked
        los[(iu[1], iu[0])] = ~blocked
    np.fill_diagonal(los, False)
    return los


def a2g_los_probability(pos, users, lo, hi, params: RadioParams) -> np.ndarray:
    """Elevation-angle LoS probability, forced to 0 when a building cuts the ray."""
    dx = pos[:, None, 0] - users[None, :, 0]
    dy = pos[:, None, 1] - users[None, :, 1]
    horiz = np.hypot(dx, dy)
    with np.errstate(divide="ignore"):
        theta = np.degrees(np.arctan2(pos[:, None, 2], horiz))
    p = los_probability(theta, params)
    if lo.shape[0]:
        n, m = horiz.shape
        a = np.broadcast_to(pos[:, None, :], (n, m, 3))
        b = np.broadcast_to(users[None, :, :], (n, m, 3))
        p = np.where(segments_blocked(a, b, lo, hi), 0.0, p)
    return p


def environment_from_arrays(
    pos: np.ndarray,
    power: np.ndarray,
    users: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    params: RadioParams,
    rng: np.random.Generator | None = None,
    noise: float | None = None,
) -> RadioEnvironment:
    """Full-interference radio environment: every UAV transmits in the slot."""
    n = len(pos)
    g_ant = params.antenna_gain
    sigma2 = noise_power(params) if noise is None else noise

    d_aa = pairwise_distance(pos, pos)
    los = a2a_los_matrix(pos, lo, hi)
    safe = np.where(d_aa > 0, d_aa, 1.0)
    pl_aa = fspl_db(safe, params) + np.where(los, params.xi_los_db, params.xi_nlos_db)
    h_aa = g_ant * 10 ** (-pl_aa / 10)
    np.fill_diagonal(h_aa, 0.0)

    d_ag = pairwise_distance(pos, users)
    p_los = a2g_los_probability(pos, users, lo, hi, params)
    if params.fading_mode == "expected":
        excess = p_los * params.xi_los_db + (1 - p_los) * params.xi_nlos_db
        h_ag = g_ant * 10 ** (-(fspl_db(d_ag, params) + excess) / 10)
    else:
        if rng is None:
            raise ConfigError("seeded-stochastic fading requires an rng")
        # LoS branch: unit fading; NLoS branch: Rayleigh power gain ~ Exp(1)
        iu = np.triu_indices(n, 1)
        fade = np.ones((n, n))
        ray = rng.exponential(1.0, size=len(iu[0]))
        fade[iu] = np.where(los[iu], 1.0, ray)
        fade[(iu[1], iu[0])] = fade[iu]
        h_aa = h_aa * fade
        is_los = rng.random(d_ag.shape) < p_los
        excess = np.where(is_los, params.xi_los_db, params.xi_nlos_db)
        fade_ag = np.where(is_los, 1.0, rng.exponential(1.0, size=d_ag.shape))
        h_ag = g_ant * 10 ** (-(fspl_db(d_ag, params) + excess) / 10) * fade_ag

    rx_aa = power[:, None] * h_aa
    # receiver j, transmitter i: all other transmitters k != i, j interfere
    interf_aa = rx_aa.sum(axis=0)[None, :] - rx_aa + sigma2
    np.fill_diagonal(interf_aa, 0.0)
    sinr_aa = np.divide(rx_aa, interf_aa, out=np.zeros_like(rx_aa), where=interf_aa > 0)

    rx_ag = power[:, None] * h_ag
    interf_ag = rx_ag.sum(axis=0)[None, :] - rx_ag + sigma2
    sinr_ag = rx_ag / interf_ag

    b = params.bandwidth_hz
    return RadioEnvironment(
        gain_a2a=h_aa,
        gain_a2g=h_ag,
        sinr_a2a=sinr_aa,
        sinr_a2g=sinr_ag,
        rate_a2a=shannon_rate(sinr_aa, b),
        rate_a2g=shannon_rate(sinr_ag, b),
        interf_a2a=interf_aa,
        interf_a2g=interf_ag,
        dist_a2a=d_aa,
        dist_a2g=d_ag,
        los_a2a=los,
        p_los_a2g=p_los,
    )


def build_environment(world, topo, assoc, params: RadioParams, rng=None) -> RadioEnvironment:
    """Radio environment for a world snapshot.

    ``topo`` and ``assoc`` only fix the expected dimensions: interference comes from every
    UAV regardless of which links or users it serves.
    """
    n, m = world.n_uavs, world.n_users
    if topo is not None and topo.n != n:
        raise ValueError(f"topology has {topo.n} nodes, world has {n} UAVs")
    if assoc is not None and np.shape(assoc.matrix) != (n, m):
        raise ValueError(f"association shape {np.shape(assoc.matrix)} != {(n, m)}")
    lo, hi = obstacle_bounds(world.obstacles)
    return environment_from_arrays(
        world.uav_positions(), world.uav_powers(), world.user_positions(), lo, hi, params, rng
    )


def directed_a2a(adj: np.ndarray) -> np.ndarray:
    """Active links oriented lower index -> higher index (the transmitter convention)."""
    return np.triu(adj, 1)


def throughput(world, topo, assoc, env: RadioEnvironment):
    """Return (th_a2a, th_a2g, th_total, per_uav)."""
    per_uav = per_uav_throughput(topo.adj, assoc.matrix, env.rate_a2a, env.rate_a2g)
    a2a = float((directed_a2a(topo.adj) * env.rate_a2a).sum())
    a2g = float((assoc.matrix * env.rate_a2g).sum())
    return a2a, a2g, a2a + a2g, per_uav.tolist()


def per_uav_throughput(adj, assoc, rate_a2a, rate_a2g) -> np.ndarray:
    return (directed_a2a(adj) * rate_a2a).sum(axis=1) + (assoc * rate_a2g).sum(axis=1)
