"""Exact-potential-game machinery shared by the link game and the deployment game.

Two utility/potential pairings are supported:

``literal``
    utilities exactly as designed (degree + interference + radio energy for the link game,
    weighted throughput/energy/latency for the deployment game) and the potential is the
    plain sum of utilities.  Unilateral deviations then move utility and potential in the
    same direction but not by the same amount; the audit measures how closely.

``aligned``
    link game: pairwise link costs are counted once in the potential;
    deployment game: a player's utility is its marginal contribution to the summed
    potential against a frozen reference strategy of its own.  Both make
    delta-utility == delta-potential an identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .channel import RadioEnvironment, RadioParams, environment_from_arrays, noise_power, per_uav_throughput
from .metrics import EnergyParams, LatencyParams, comm_energy, per_uav_energy, per_uav_latency
from .scenario import obstacle_bounds
from .topology import LinkTopology, is_connected, spectral_report

CONVENTIONS = ("literal", "aligned")


@dataclass(frozen=True)
class GameConfig:
    # link game: per link, per watt of interference-plus-noise, per joule
    eta: tuple[float, float, float] = (1.0, 1.0e9, 1.0e-2)
    # deployment game: per bit/s, per joule, per second
    psi: tuple[float, float, float] = (1.0e-6, 1.0e-3, 1.0)
    objective_weights: tuple[float, float, float] = (1.0e-6, 1.0e-3, 1.0)
    convention: str = "literal"
    temperature: float = 1.0
    grad_step_pos: float = 10.0
    grad_step_power: float = 0.1
    fd_epsilon: float = 0.1
    fd_epsilon_power: float = 1.0e-3
    inner_iters: int = 20
    explore_eps0: float = 0.2
    explore_decay: float = 0.99
    explore_radius: float = 100.0
    max_rounds: int = 100
    deploy_max_rounds: int = 30
    stall_window: int = 5
    stall_tol: float = 1.0e-6
    drop_nlos_links: bool = False
    allow_readd: bool = False

    def __post_init__(self):
        for name in ("eta", "psi", "objective_weights"):
            vals = getattr(self, name)
            if len(vals) != 3 or any(not math.isfinite(v) or v < 0 for v in vals):
                raise ValueError(f"GameConfig.{name} must be three finite non-negative weights, got {vals}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        for name in ("grad_step_pos", "grad_step_power", "fd_epsilon", "fd_epsilon_power"):
            if getattr(self, name) <= 0:
                raise ValueError(f"GameConfig.{name} must be positive")
        if not 0 <= self.explore_eps0 <= 1 or not 0 < self.explore_decay <= 1:
            raise ValueError("exploration schedule must satisfy 0<=eps0<=1, 0<decay<=1")
        if self.max_rounds < 0 or self.deploy_max_rounds < 0 or self.stall_window < 1:
            raise ValueError("round limits must be non-negative and stall_window >= 1")

    def exploration_rate(self, round_index: int) -> float:
        return self.explore_eps0 * self.explore_decay**round_index


@dataclass(frozen=True)
class SystemParams:
    radio: RadioParams = field(default_factory=RadioParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    latency: LatencyParams = field(default_factory=LatencyParams)


@dataclass(frozen=True)
class DeviationAudit:
    round: int
    player: int
    delta_utility: float
    delta_potential: float
    residual: float
    potential: float = math.nan
    link_count: int = 0
    moved: bool = True


@dataclass
class ConvergenceTrace:
    potential: list[float] = field(default_factory=list)
    utilities: list[list[float]] = field(default_factory=list)
    link_count: list[int] = field(default_factory=list)
    audits: list[DeviationAudit] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)
    initial_potential: float = math.nan
    rounds: int = 0
    converged: bool = False
    notes: list[str] = field(default_factory=list)

    def move_samples(self, player: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        rows = [a for a in self.audits if a.moved and a.player >= 0 and (player is None or a.player == player)]
        du = np.array([a.delta_utility for a in rows], dtype=float)
        dp = np.array([a.delta_potential for a in rows], dtype=float)
        return du, dp

    def correlation(self, player: int | None = None) -> float:
        return pearson(*self.move_samples(player))

    def r2(self, player: int | None = None) -> float:
        c = self.correlation(player)
        return c * c if math.isfinite(c) else math.nan

    def per_player_correlation(self, n_players: int) -> list[float]:
        return [self.correlation(i) for i in range(n_players)]

    def max_residual_ratio(self) -> float:
        """max |du - dphi| / max(1, |dphi|) over the recorded moves."""
        vals = [a.residual / max(1.0, abs(a.delta_potential)) for a in self.audits if a.player >= 0]
        return max(vals, default=0.0)


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 2:
        return math.nan
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        return math.nan
    return float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))


# ---------------------------------------------------------------------------
# link game


def link_pair_burden(env: RadioEnvironment) -> np.ndarray:
    """Interference-plus-noise carried by an undirected link: mean over its two directions."""
    return 0.5 * (env.interf_a2a + env.interf_a2a.T)


def link_utilities(adj, burden, e_comm, cfg: GameConfig) -> np.ndarray:
    a = np.asarray(adj, dtype=float)
    e1, e2, e3 = cfg.eta
    return -(e1 * a.sum(axis=1) + e2 * (a * burden).sum(axis=1) + e3 * np.asarray(e_comm))


def link_potential_from(adj, burden, e_comm, cfg: GameConfig, convention: str | None = None) -> float:
    convention = convention or cfg.convention
    if convention == "literal":
        return float(link_utilities(adj, burden, e_comm, cfg).sum())
    a = np.asarray(adj, dtype=float)
    e1, e2, e3 = cfg.eta
    pair = 0.5 * (e1 * a.sum() + e2 * (a * burden).sum())
    return float(-(pair + e3 * np.sum(e_comm)))


def _comm_energy_vec(world, energy: EnergyParams):
    return comm_energy(world.uav_powers(), energy, world.slot_length)


def utility_link(i, world, topo: LinkTopology, env: RadioEnvironment, cfg: GameConfig, energy: EnergyParams | None = None) -> float:
    energy = energy or EnergyParams()
    u = link_utilities(topo.adj, link_pair_burden(env), _comm_energy_vec(world, energy), cfg)
    return float(u[i])


def potential_link(world, topo, env, cfg: GameConfig, energy: EnergyParams | None = None, convention: str | None = None) -> float:
    energy = energy or EnergyParams()
    return link_potential_from(topo.adj, link_pair_burden(env), _comm_energy_vec(world, energy), cfg, convention)


# ---------------------------------------------------------------------------
# deployment game


def deploy_utilities_from(th, e, lat, cfg: GameConfig) -> np.ndarray:
    p1, p2, p3 = cfg.psi
    lat = np.asarray(lat, dtype=float)
    # a zero weight must not turn an infinite latency into nan
    lat_term = p3 * lat if p3 else np.zeros_like(lat)
    return p1 * np.asarray(th) - p2 * np.asarray(e) - lat_term


def deploy_terms(world, topo, assoc, env, params: SystemParams):
    th = per_uav_throughput(topo.adj, assoc.matrix, env.rate_a2a, env.rate_a2g)
    speed = np.linalg.norm(world.uav_velocities(), axis=1)
    e = per_uav_energy(world.uav_powers(), speed, speed, params.energy, world.slot_length)
    lat = per_uav_latency(topo.adj, assoc.matrix, env, params.latency)
    return th, e, lat


def utility_deploy(i, world, topo, assoc, env, cfg: GameConfig, params: SystemParams | None = None) -> float:
    """Literal deployment utility of UAV ``i``: weighted throughput minus energy and latency."""
    params = params or SystemParams()
    return float(deploy_utilities_from(*deploy_terms(world, topo, assoc, env, params), cfg)[i])


def potential_deploy(world, topo, assoc, env, cfg: GameConfig, params: SystemParams | None = None) -> float:
    params = params or SystemParams()
    return float(deploy_utilities_from(*deploy_terms(world, topo, assoc, env, params), cfg).sum())


@dataclass(frozen=True)
class ConstraintReport:
    coverage: list[int]  # GUs with no serving UAV (24a)
    range: list[tuple[int, int]]  # served (uav, gu) pairs beyond the radius (24b)
    power: list[int]  # UAVs outside the power bounds (24c)
    region: list[int]  # UAVs outside the flight box (24d)
    connectivity: bool  # True when the A2A graph is disconnected (24e)
    lambda2: float
    energy: list[int]  # UAVs whose slot energy exceeds their battery (24f)

    @property
    def feasible(self) -> bool:
        return not (self.coverage or self.range or self.power or self.region or self.connectivity or self.energy)

    def as_dict(self) -> dict:
        return {
            "coverage": self.coverage,
            "range": [list(p) for p in self.range],
            "power": self.power,
            "region": self.region,
            "connectivity": self.connectivity,
            "lambda2": self.lambda2,
            "energy": self.energy,
            "feasible": self.feasible,
        }


def check_constraints(world, topo, assoc, env, energies) -> ConstraintReport:
    c = np.asarray(assoc.matrix)
    uncovered = np.flatnonzero(c.sum(axis=0) < 1).tolist()
    far = np.argwhere((c == 1) & (env.dist_a2g > world.comm_radius + 1e-9))
    pmin, pmax = world.power_bounds
    bad_power = [u.id for u in world.uavs if not pmin - 1e-12 <= u.tx_power <= pmax + 1e-12]
    bad_region = [u.id for u in world.uavs if not world.contains(u.position)]
    rep = spectral_report(topo)
    depleted = [u.id for u, e in zip(world.uavs, energies) if e > u.residual_energy]
    return ConstraintReport(
        coverage=uncovered,
        range=[(int(i), int(m)) for i, m in far],
        power=bad_power,
        region=bad_region,
        connectivity=not rep.connected,
        lambda2=rep.lambda2,
        energy=depleted,
    )


def global_objective(world, topo, assoc, env, cfg: GameConfig, params: SystemParams | None = None):
    """links - U*Th_total + mu*E_total + tau*T_total, plus the constraint report."""
    params = params or SystemParams()
    th, e, lat = deploy_terms(world, topo, assoc, env, params)
    ups, mu, tau = cfg.objective_weights
    value = topo.link_count - ups * th.sum() + mu * e.sum() + tau * lat.sum()
    return float(value), check_constraints(world, topo, assoc, env, e)


# ---------------------------------------------------------------------------
# game objects working on compact states


@dataclass(frozen=True, eq=False)
class LinkState:
    topo: LinkTopology


class LinkGame:
    """Link-pruning game on frozen UAV positions (the channel does not change during it)."""

    def __init__(self, world, cfg: GameConfig, params: SystemParams | None = None, env: RadioEnvironment | None = None):
        self.world = world
        self.cfg = cfg
        self.params = params or SystemParams()
        if env is None:
            lo, hi = obstacle_bounds(world.obstacles)
            env = environment_from_arrays(
                world.uav_positions(), world.uav_powers(), world.user_positions(), lo, hi, self.params.radio
            )
        self.env = env
        self.burden = link_pair_burden(env)
        self.e_comm = _comm_energy_vec(world, self.params.energy)
        self.in_range = env.dist_a2a <= world.comm_radius
        self.n_players = world.n_uavs

    def utilities(self, state: LinkState) -> np.ndarray:
        return link_utilities(state.topo.adj, self.burden, self.e_comm, self.cfg)

    def utility(self, state: LinkState, i: int) -> float:
        return float(self.utilities(state)[i])

    def potential(self, state: LinkState, convention: str | None = None) -> float:
        return link_potential_from(state.topo.adj, self.burden, self.e_comm, self.cfg, convention)

    def movers(self, before: LinkState, after: LinkState) -> set[int]:
        """Players whose strategy may have produced the diff: every changed link's endpoints."""
        i, j = np.nonzero(np.triu(before.topo.adj != after.topo.adj, 1))
        return {int(x) for x in i} | {int(x) for x in j}

    def is_unilateral(self, before, after, player) -> bool:
        i, j = np.nonzero(np.triu(before.topo.adj != after.topo.adj, 1))
        return all(player in (a, b) for a, b in zip(i.tolist(), j.tolist()))


@dataclass(frozen=True, eq=False)
class DeployState:
    pos: np.ndarray
    power: np.ndarray
    assoc: np.ndarray

    def with_player(self, i: int, pos_i, power_i) -> "DeployState":
        pos = self.pos.copy()
        pos[i] = pos_i
        power = self.power.copy()
        power[i] = power_i
        return DeployState(pos, power, self.assoc)

    def with_assoc(self, assoc) -> "DeployState":
        return DeployState(self.pos, self.power, np.asarray(assoc, dtype=np.int8))


@dataclass
class DeployEval:
    env: RadioEnvironment
    th: np.ndarray
    energy: np.ndarray
    latency: np.ndarray
    utilities: np.ndarray

    @property
    def potential(self) -> float:
        return float(self.utilities.sum())


class DeployGame:
    """Continuous deployment game on a fixed A2A topology.

    UAV velocity is the relocation velocity from the anchor (start-of-slot) position,
    ``(q - anchor) / slot_length``, so moving costs flight energy.
    """

    def __init__(self, world, topo: LinkTopology, cfg: GameConfig, params: SystemParams | None = None,
                 anchor: np.ndarray | None = None, reference: "DeployState | None" = None):
        self.world = world
        self.topo = topo
        self.adj = topo.adj
        self.cfg = cfg
        self.params = params or SystemParams()
        self.users = world.user_positions()
        self.lo_obs, self.hi_obs = obstacle_bounds(world.obstacles)
        self.noise = noise_power(self.params.radio)
        self.dt = world.slot_length
        self.anchor = world.uav_positions() if anchor is None else np.asarray(anchor, dtype=float)
        self.box_lo = world.box_lo()
        self.box_hi = world.box_hi()
        self.pmin, self.pmax = world.power_bounds
        self.n_players = world.n_uavs
        self.reference = reference
        self.evaluations = 0

    def initial_state(self, assoc) -> DeployState:
        return DeployState(self.world.uav_positions(), self.world.uav_powers(), np.asarray(assoc, dtype=np.int8))

    def evaluate(self, state: DeployState) -> DeployEval:
        self.evaluations += 1
        env = environment_from_arrays(state.pos, state.power, self.users, self.lo_obs, self.hi_obs,
                                      self.params.radio, noise=self.noise)
        th = per_uav_throughput(self.adj, state.assoc, env.rate_a2a, env.rate_a2g)
        speed = np.linalg.norm(state.pos - self.anchor, axis=1) / self.dt
        e = per_uav_energy(state.power, speed, speed, self.params.energy, self.dt)
        lat = per_uav_latency(self.adj, state.assoc, env, self.params.latency)
        return DeployEval(env, th, e, lat, deploy_utilities_from(th, e, lat, self.cfg))

    def potential(self, state: DeployState) -> float:
        return self.evaluate(state).potential

    def literal_utility(self, state: DeployState, i: int) -> float:
        return float(self.evaluate(state).utilities[i])

    def aligned_utility(self, state: DeployState, i: int) -> float:
        ref = self.reference
        if ref is None:
            raise ValueError("aligned utilities need a reference strategy profile")
        base = state.with_player(i, ref.pos[i], ref.power[i])
        return self.potential(state) - self.potential(base)

    def utility(self, state: DeployState, i: int, convention: str | None = None) -> float:
        convention = convention or self.cfg.convention
        if convention == "literal":
            return self.literal_utility(state, i)
        return self.aligned_utility(state, i)

    def project(self, pos, power):
        return np.clip(pos, self.box_lo, self.box_hi), float(np.clip(power, self.pmin, self.pmax))

    def movers(self, before: DeployState, after: DeployState) -> set[int]:
        moved = np.flatnonzero(
            np.any(before.pos != after.pos, axis=1) | (before.power != after.power)
            | np.any(before.assoc != after.assoc, axis=1)
        )
        return set(moved.tolist())

    def is_unilateral(self, before, after, player) -> bool:
        return self.movers(before, after) <= {player}

    def to_world(self, state: DeployState):
        vel = (state.pos - self.anchor) / self.dt
        return self.world.with_uav_arrays(state.pos, state.power, vel)


class NonUnilateralMove(ValueError):
    pass


def audit_deviation(game, before, after, player: int, round: int = 0, convention: str | None = None,
                    potentials: tuple[float, float] | None = None) -> DeviationAudit:
    """Compare the mover's utility change with the potential change.

    Under the literal convention the potential is the sum of literal utilities; under the
    aligned convention the link game counts pair terms once and the deployment game uses
    the marginal-contribution utility.
    """
    if not game.is_unilateral(before, after, player):
        raise NonUnilateralMove(f"strategies of players {sorted(game.movers(before, after))} changed; expected only {player}")
    convention = convention or game.cfg.convention
    if isinstance(game, LinkGame):
        du = game.utility(after, player) - game.utility(before, player)
        p0, p1 = game.potential(before, convention), game.potential(after, convention)
        links = after.topo.link_count
    else:
        if potentials is None:
            p0, p1 = game.potential(before), game.potential(after)
        else:
            p0, p1 = potentials
        if convention == "literal":
            du = game.literal_utility(after, player) - game.literal_utility(before, player)
        else:
            du = game.aligned_utility(after, player) - game.aligned_utility(before, player)
        links = game.topo.link_count
    dphi = p1 - p0
    moved = bool(game.movers(before, after))
    return DeviationAudit(round, player, float(du), float(dphi), float(abs(du - dphi)), float(p1), int(links), moved)


# ---------------------------------------------------------------------------
# the round loop


class Stepper(Protocol):
    n_players: int

    def step_round(self, round_index: int, rng: np.random.Generator) -> list[DeviationAudit]: ...

    def progress(self) -> float: ...

    def observe(self) -> tuple[float, list[float], int]: ...


class SequentialStepper:
    """Round-robin revision: players move one at a time in index order."""

    n_players: int = 0

    def step_player(self, player: int, round_index: int, rng: np.random.Generator) -> list[DeviationAudit]:
        raise NotImplementedError

    def step_round(self, round_index: int, rng: np.random.Generator) -> list[DeviationAudit]:
        out: list[DeviationAudit] = []
        for i in range(self.n_players):
            out.extend(self.step_player(i, round_index, rng))
        return out


def run_game(stepper, cfg: GameConfig, seed: int, max_rounds: int | None = None, snapshot=None) -> ConvergenceTrace:
    """Drive ``stepper`` until its progress metric stalls for ``stall_window`` rounds.

    ``snapshot`` is an optional callable whose return value is stored after each round.
    """
    rng = np.random.default_rng(seed)
    limit = cfg.max_rounds if max_rounds is None else max_rounds
    trace = ConvergenceTrace()
    trace.initial_potential = stepper.observe()[0]
    prev = stepper.progress()
    still = 0
    for r in range(limit):
        trace.audits.extend(stepper.step_round(r, rng))
        pot, utils, links = stepper.observe()
        trace.potential.append(pot)
        trace.utilities.append(list(utils))
        trace.link_count.append(links)
        if snapshot is not None:
            trace.snapshots.append(snapshot())
        trace.rounds = r + 1
        cur = stepper.progress()
        if abs(cur - prev) <= cfg.stall_tol * max(1.0, abs(prev)):
            still += 1
        else:
            still = 0
        prev = cur
        if still >= cfg.stall_window:
            trace.converged = True
            break
    return trace


def check_connected_audit(topo: LinkTopology) -> bool:
    return is_connected(topo)
