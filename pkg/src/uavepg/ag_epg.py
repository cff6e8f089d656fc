"""Approximate-gradient deployment game: UAV positions, powers and user association."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import pairwise_distance
from .epg_core import (
    DeployEval,
    DeployGame,
    DeployState,
    DeviationAudit,
    GameConfig,
    SequentialStepper,
    SystemParams,
    run_game,
)
from .scenario import Vec3


class InfeasibleCoverageError(ValueError):
    def __init__(self, users):
        self.users = list(users)
        super().__init__(f"ground users {self.users} have no UAV within the communication radius")


@dataclass(frozen=True, eq=False)
class Association:
    matrix: np.ndarray

    def __post_init__(self):
        c = np.array(self.matrix, dtype=np.int8)
        if c.ndim != 2 or np.any((c != 0) & (c != 1)):
            raise ValueError("association must be a 0/1 matrix")
        c.setflags(write=False)
        object.__setattr__(self, "matrix", c)

    def served(self, i: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.matrix[i]).tolist())

    def violations(self, dist_a2g: np.ndarray, radius: float) -> dict:
        c = self.matrix
        return {
            "uncovered": np.flatnonzero(c.sum(axis=0) < 1).tolist(),
            "out_of_range": [tuple(map(int, p)) for p in np.argwhere((c == 1) & (dist_a2g > radius))],
        }

    def is_valid(self, dist_a2g, radius) -> bool:
        v = self.violations(dist_a2g, radius)
        return not v["uncovered"] and not v["out_of_range"]

    def __eq__(self, other):
        return isinstance(other, Association) and np.array_equal(self.matrix, other.matrix)

    __hash__ = None


@dataclass(frozen=True)
class DeployStrategy:
    position: Vec3
    power: float
    served: frozenset[int]


def greedy_association(rate_a2g: np.ndarray, dist_a2g: np.ndarray, radius: float) -> np.ndarray:
    """Each GU picks the in-range UAV with the highest rate; ties go to the lowest index."""
    ok = dist_a2g <= radius
    bad = np.flatnonzero(~ok.any(axis=0))
    if bad.size:
        raise InfeasibleCoverageError(bad.tolist())
    score = np.where(ok, rate_a2g, -np.inf)
    best = score.argmax(axis=0)  # argmax returns the first maximum
    c = np.zeros(rate_a2g.shape, dtype=np.int8)
    c[best, np.arange(rate_a2g.shape[1])] = 1
    return c


def reassign_users(world, assoc, env, cfg=None) -> Association:
    return Association(greedy_association(env.rate_a2g, env.dist_a2g, world.comm_radius))


# ---------------------------------------------------------------------------
# finite differences and the inner ascent loop


def fd_gradient(f, x: np.ndarray, eps: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Central differences with probes clamped to [lo, hi] (one-sided at a bound).

    ``f`` may be vector-valued; the result then has one row per coordinate.
    """
    rows = []
    for k in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[k] = min(x[k] + eps[k], hi[k])
        xm[k] = max(x[k] - eps[k], lo[k])
        span = xp[k] - xm[k]
        if span <= 0:
            rows.append(None)
            continue
        rows.append((np.asarray(f(xp), dtype=float) - np.asarray(f(xm), dtype=float)) / span)
    shape = next((np.shape(r) for r in rows if r is not None), ())
    return np.array([np.zeros(shape) if r is None else r for r in rows])


def common_ascent(g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """Min-norm point of the segment [g1, g2].

    It has a positive inner product with both gradients unless they point in exactly
    opposite directions, so a small step along it raises both objectives.
    """
    diff = g1 - g2
    den = float(diff @ diff)
    if den == 0:
        return g1.copy()
    a = float(np.clip((g2 - g1) @ g2 / den, 0.0, 1.0))
    return a * g1 + (1 - a) * g2


def _free_direction(g, x, lo, hi):
    # drop components that push against an active bound
    d = g.copy()
    d[(x >= hi) & (d > 0)] = 0.0
    d[(x <= lo) & (d < 0)] = 0.0
    return d


def gradient_ascent(f, x0, f0, scale, eps, lo, hi, iters=20, adaptive=True, min_gain=1e-9, guard=None):
    """Projected ascent along the scaled gradient; only improving steps are taken.

    ``scale`` holds the nominal step per coordinate (metres for position, watts for power),
    so a unit step moves every coordinate by at most its nominal size.  With ``adaptive``
    the step multiplier doubles after a success and halves after a failure; otherwise a
    failed step ends the loop.  ``guard(x)``, called right after ``f(x)``, can veto a step
    that improves ``f``.

    A two-valued ``f`` is ascended jointly: the step follows ``common_ascent`` of the two
    gradients and is taken only if neither value drops.  Returns (x, f(x), accepted steps).
    """
    x = np.array(x0, dtype=float)
    fx = np.asarray(f0, dtype=float)
    joint = fx.ndim == 1
    alpha, taken, g = 1.0, 0, None
    for _ in range(iters):
        if g is None:
            g = fd_gradient(f, x, eps, lo, hi)
        if joint:
            g1 = _free_direction(g[:, 0] * scale, x, lo, hi)
            g2 = _free_direction(g[:, 1] * scale, x, lo, hi)
            d = common_ascent(g1, g2)
        else:
            d = _free_direction(g * scale, x, lo, hi)
        n = np.linalg.norm(d)
        if n == 0 or not np.isfinite(n):
            break
        cand = np.clip(x + alpha * scale * d / n, lo, hi)
        if np.array_equal(cand, x):
            break
        fc = np.asarray(f(cand), dtype=float)
        gains = np.atleast_1d(fc - fx)
        improved = bool(np.all(gains >= 0) and np.any(gains > 0))
        if improved and (guard is None or guard(cand)):
            x, fx, g = cand, fc, None
            taken += 1
            if gains.max() < min_gain:
                break
            if adaptive:
                alpha = min(2 * alpha, 8.0)
        else:
            if not adaptive:
                break
            alpha /= 2
            if alpha < 1 / 64:
                break
    return x, (fx if joint else float(fx)), taken


class PlayerView:
    """Objective of one UAV as a function of its own (x, y, z, p).

    ``objective`` is ``potential`` (the summed potential), ``utility`` (the UAV's own
    utility), ``guarded`` (own utility, with steps that lower the potential vetoed) or
    ``joint`` (the pair (own utility, potential), both of which must not drop).
    A move that takes a served user out of range scores -inf.
    """

    def __init__(self, game: DeployGame, state: DeployState, i: int, objective: str = "potential"):
        if objective not in ("potential", "utility", "guarded", "joint"):
            raise ValueError(f"unknown objective {objective!r}")
        self.game, self.state, self.i = game, state, i
        self.objective = objective
        self.served = np.flatnonzero(state.assoc[i])
        self.radius = game.world.comm_radius
        self.lo = np.append(game.box_lo, game.pmin)
        self.hi = np.append(game.box_hi, game.pmax)
        self.scale = np.array([game.cfg.grad_step_pos] * 3 + [game.cfg.grad_step_power])
        self.eps = np.array([game.cfg.fd_epsilon] * 3 + [game.cfg.fd_epsilon_power])
        self.last: DeployEval | None = None
        self.phi_floor = -math.inf

    def x0(self) -> np.ndarray:
        return np.append(self.state.pos[self.i], self.state.power[self.i])

    def state_at(self, x) -> DeployState:
        return self.state.with_player(self.i, x[:3], x[3])

    def in_range(self, x) -> bool:
        if not self.served.size:
            return True
        d = np.linalg.norm(self.game.users[self.served] - x[:3], axis=1)
        return bool(np.all(d <= self.radius))

    def score(self, ev: DeployEval):
        if self.objective == "potential":
            return ev.potential
        if self.objective == "joint":
            return np.array([ev.utilities[self.i], ev.potential])
        return float(ev.utilities[self.i])

    def __call__(self, x):
        if not self.in_range(x):
            self.last = None
            return np.array([-math.inf, -math.inf]) if self.objective == "joint" else -math.inf
        self.last = self.game.evaluate(self.state_at(x))
        return self.score(self.last)

    def guard(self, x) -> bool:
        """Potential check on the point evaluated last; raises the floor when it passes."""
        if self.objective != "guarded":
            return True
        if self.last is None or self.last.potential < self.phi_floor:
            return False
        self.phi_floor = self.last.potential
        return True


def best_response_step(game: DeployGame, state: DeployState, i: int, rng: np.random.Generator,
                       round_index: int, explore: bool = True, adaptive: bool = True,
                       objective: str = "joint", current: DeployEval | None = None):
    """One revision of UAV ``i``; returns (new state, its evaluation or None, how)."""
    view = PlayerView(game, state, i, objective)
    x0 = view.x0()
    ev0 = current if current is not None else game.evaluate(state)
    f0 = view.score(ev0)
    view.phi_floor = ev0.potential
    cfg = game.cfg
    if explore and rng.random() < cfg.exploration_rate(round_index):
        r = cfg.explore_radius
        prop = np.append(x0[:3] + rng.uniform(-r, r, size=3), rng.uniform(game.pmin, game.pmax))
        prop = np.clip(prop, view.lo, view.hi)
        fp = np.atleast_1d(view(prop) - np.asarray(f0))
        if np.all(fp >= 0) and np.any(fp > 0) and view.guard(prop):
            return view.state_at(prop), view.last, "explore"
        return state, None, "none"
    x, _, taken = gradient_ascent(view, x0, f0, view.scale, view.eps, view.lo, view.hi,
                                  iters=cfg.inner_iters, adaptive=adaptive, guard=view.guard)
    if taken == 0:
        return state, None, "none"
    return view.state_at(x), None, "gradient"


# ---------------------------------------------------------------------------
# domain-level wrappers


def _game_for(world, topo, cfg, params, reference_assoc=None):
    anchor = world.uav_positions() - world.uav_velocities() * world.slot_length
    return DeployGame(world, topo, cfg or GameConfig(), params, anchor=anchor)


def approx_gradient(i, world, topo, assoc, env=None, cfg: GameConfig | None = None,
                    params: SystemParams | None = None, objective: str = "utility"):
    """Central-difference gradient of UAV ``i``'s utility (or of the potential).

    Returns (d/d(x, y, z) as a Vec3, d/dp).  ``env`` is accepted for interface symmetry;
    every probe rebuilds the radio environment.
    """
    game = _game_for(world, topo, cfg, params)
    state = game.initial_state(assoc.matrix)
    view = PlayerView(game, state, i, "potential" if objective == "potential" else "utility")
    g = fd_gradient(view, view.x0(), view.eps, view.lo, view.hi)
    return Vec3(*map(float, g[:3])), float(g[3])


def best_response_continuous(i, world, topo, assoc, cfg: GameConfig | None = None, rng=None,
                             round_index: int = 0, params: SystemParams | None = None,
                             objective: str | None = None) -> DeployStrategy:
    cfg = cfg or GameConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    game = _game_for(world, topo, cfg, params)
    state = game.initial_state(assoc.matrix)
    new, _, _ = best_response_step(game, state, i, rng, round_index, objective=objective or objective_for(cfg))
    return DeployStrategy(Vec3(*map(float, new.pos[i])), float(new.power[i]), Association(new.assoc).served(i))


# ---------------------------------------------------------------------------
# the round loop


def objective_for(cfg: GameConfig) -> str:
    """What a revising UAV ascends under each utility convention.

    literal: its own utility, never at the expense of the potential;
    aligned: its marginal contribution, whose gradient is the potential's.
    """
    return "joint" if cfg.convention == "literal" else "potential"


class DeployStepper(SequentialStepper):
    """Sequential revisions on the potential, each followed by a user re-association pass.

    ``explore`` and ``adaptive`` switch between the approximate-gradient game (both on) and
    plain best-response dynamics (both off).
    """

    def __init__(self, game: DeployGame, state: DeployState, explore: bool = True, adaptive: bool = True,
                 objective: str | None = None):
        self.game = game
        self.objective = objective or objective_for(game.cfg)
        self.state = state
        self.current = game.evaluate(state)
        self.n_players = game.n_players
        self.explore = explore
        self.adaptive = adaptive
        self.reassignments = 0

    def _audit(self, before: DeployState, ev0: DeployEval, after: DeployState, ev1: DeployEval, i, r):
        dphi = ev1.potential - ev0.potential
        if self.game.cfg.convention == "aligned":
            du = self.game.aligned_utility(after, i) - self.game.aligned_utility(before, i)
        else:
            du = float(ev1.utilities[i] - ev0.utilities[i])
        return DeviationAudit(r, i, float(du), float(dphi), float(abs(du - dphi)), ev1.potential, self.game.topo.link_count)

    def step_player(self, player, round_index, rng):
        out = []
        before, ev0 = self.state, self.current
        new, ev1, how = best_response_step(self.game, before, player, rng, round_index, explore=self.explore,
                                           adaptive=self.adaptive, objective=self.objective, current=ev0)
        if how != "none":
            ev1 = ev1 if ev1 is not None else self.game.evaluate(new)
            out.append(self._audit(before, ev0, new, ev1, player, round_index))
            self.state, self.current = new, ev1
        out.extend(self.reassign(round_index))
        return out

    def reassign(self, round_index):
        ev = self.current
        c = greedy_association(ev.env.rate_a2g, ev.env.dist_a2g, self.game.world.comm_radius)
        if np.array_equal(c, self.state.assoc):
            return []
        cand = self.state.with_assoc(c)
        ev1 = self.game.evaluate(cand)
        valid = Association(self.state.assoc).is_valid(ev.env.dist_a2g, self.game.world.comm_radius)
        if ev1.potential < ev.potential and valid:
            return []
        dphi = ev1.potential - ev.potential
        self.state, self.current = cand, ev1
        self.reassignments += 1
        return [DeviationAudit(round_index, -1, math.nan, dphi, math.nan, ev1.potential, self.game.topo.link_count)]

    def progress(self) -> float:
        return self.current.potential

    def observe(self):
        return self.current.potential, self.current.utilities.tolist(), self.game.topo.link_count


@dataclass
class DeployResult:
    world: object
    assoc: Association
    trace: object
    state: DeployState
    evaluation: DeployEval
    game: DeployGame


def initial_association(game: DeployGame, state: DeployState) -> np.ndarray:
    ev = game.evaluate(state)
    return greedy_association(ev.env.rate_a2g, ev.env.dist_a2g, game.world.comm_radius)


def run_deploy(world, topo, cfg: GameConfig, seed: int, params=None, assoc=None,
               explore=True, adaptive=True, objective: str | None = None) -> DeployResult:
    game = DeployGame(world, topo, cfg, params)
    state = game.initial_state(np.zeros((world.n_uavs, world.n_users), dtype=np.int8))
    state = state.with_assoc(initial_association(game, state) if assoc is None else assoc.matrix)
    game.reference = state
    stepper = DeployStepper(game, state, explore=explore, adaptive=adaptive, objective=objective)
    trace = run_game(stepper, cfg, seed, max_rounds=cfg.deploy_max_rounds)
    final = stepper.state
    return DeployResult(game.to_world(final), Association(final.assoc), trace, final, stepper.current, game)


def solve_p2(world, topo, cfg: GameConfig | None = None, seed: int = 0, params: SystemParams | None = None,
             assoc: Association | None = None):
    """Approximate-gradient game on the pruned topology; returns (world, association, trace)."""
    res = run_deploy(world, topo, cfg or GameConfig(), seed, params, assoc)
    return res.world, res.assoc, res.trace


def distances_to_users(world) -> np.ndarray:
    return pairwise_distance(world.uav_positions(), world.user_positions())
