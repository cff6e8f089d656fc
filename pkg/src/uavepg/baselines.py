"""Comparison algorithms over the same deployment search space and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ag_epg import (
    Association,
    DeployResult,
    DeployStepper,
    InfeasibleCoverageError,
    PlayerView,
    gradient_ascent,
    greedy_association,
    initial_association,
)
from .epg_core import ConvergenceTrace, DeployGame, DeployState, GameConfig, SystemParams, run_game

KINDS = ("brd_epg", "brd_ncg", "etg", "ga")


@dataclass(frozen=True)
class BaselineConfig:
    kind: str = "brd_epg"
    # genetic algorithm
    ga_population: int = 30
    ga_generations: int = 200
    ga_crossover: float = 0.9
    ga_mutation: float = 0.1
    ga_sigma_pos: float = 50.0
    ga_sigma_power: float = 0.2
    # evolutionary game on a lattice
    etg_grid: int = 5
    etg_grid_z: int = 3
    etg_power_levels: int = 4
    etg_radius: float = 200.0
    etg_step: float = 0.5
    etg_rounds: int = 10
    # best-response step (metres); None falls back to GameConfig.grad_step_pos
    brd_step: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        for name in ("ga_crossover", "ga_mutation"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.ga_population < 2:
            raise ValueError("ga_population must be >= 2")
        if min(self.etg_grid, self.etg_grid_z, self.etg_power_levels) < 1:
            raise ValueError("lattice sizes must be >= 1")
        if self.etg_grid * self.etg_grid * self.etg_grid_z * self.etg_power_levels < 2:
            raise ValueError("the strategy lattice needs at least 2 points")
        if self.etg_step <= 0 or self.ga_generations < 0 or self.etg_rounds < 0:
            raise ValueError("etg_step must be positive and round counts non-negative")


def _setup(world, topo, cfg, params, assoc=None):
    game = DeployGame(world, topo, cfg, params)
    state = game.initial_state(np.zeros((world.n_uavs, world.n_users), dtype=np.int8))
    c = initial_association(game, state) if assoc is None else np.asarray(assoc.matrix)
    state = state.with_assoc(c)
    game.reference = state
    return game, state


def _result(game, state, trace) -> DeployResult:
    ev = game.evaluate(state)
    return DeployResult(game.to_world(state), Association(state.assoc), trace, state, ev, game)


def _with_step(cfg: GameConfig, bcfg: BaselineConfig | None) -> GameConfig:
    from dataclasses import replace

    if bcfg is None or bcfg.brd_step is None:
        return cfg
    return replace(cfg, grad_step_pos=bcfg.brd_step)


# ---------------------------------------------------------------------------
# best-response dynamics


def run_brd_epg(world, topo, cfg: GameConfig | None = None, seed: int = 0, params: SystemParams | None = None,
                bcfg: BaselineConfig | None = None, assoc=None) -> DeployResult:
    """The deployment-game loop with plain fixed-size gradient steps and no exploration.

    A step that would lower the ascended objective (or the potential) is not taken.
    """
    cfg = _with_step(cfg or GameConfig(), bcfg)
    game, state = _setup(world, topo, cfg, params, assoc)
    stepper = DeployStepper(game, state, explore=False, adaptive=False)
    trace = run_game(stepper, cfg, seed, max_rounds=cfg.deploy_max_rounds)
    return _result(game, stepper.state, trace)


class SimultaneousStepper:
    """Every UAV best-responds on its own utility to the same snapshot; moves apply together."""

    def __init__(self, game: DeployGame, state: DeployState):
        self.game = game
        self.state = state
        self.current = game.evaluate(state)
        self.n_players = game.n_players

    def step_round(self, round_index, rng):
        snap = self.state
        pos, power = snap.pos.copy(), snap.power.copy()
        cur = self.current
        for i in range(self.n_players):
            view = PlayerView(self.game, snap, i, "utility")
            x0 = view.x0()
            x, _, _ = gradient_ascent(view, x0, float(cur.utilities[i]), view.scale, view.eps, view.lo, view.hi,
                                      iters=self.game.cfg.inner_iters, adaptive=False)
            pos[i], power[i] = x[:3], x[3]
        moved = DeployState(pos, power, snap.assoc)
        ev = self.game.evaluate(moved)
        try:
            c = greedy_association(ev.env.rate_a2g, ev.env.dist_a2g, self.game.world.comm_radius)
        except InfeasibleCoverageError:
            c = moved.assoc
        if not np.array_equal(c, moved.assoc):
            moved = moved.with_assoc(c)
            ev = self.game.evaluate(moved)
        self.state, self.current = moved, ev
        return []

    def progress(self):
        return self.current.potential

    def observe(self):
        return self.current.potential, self.current.utilities.tolist(), self.game.topo.link_count


def run_brd_ncg(world, topo, cfg: GameConfig | None = None, seed: int = 0, params: SystemParams | None = None,
                bcfg: BaselineConfig | None = None, assoc=None) -> DeployResult:
    """Selfish simultaneous best responses; the potential is recorded but never consulted."""
    cfg = _with_step(cfg or GameConfig(), bcfg)
    game, state = _setup(world, topo, cfg, params, assoc)
    stepper = SimultaneousStepper(game, state)
    trace = run_game(stepper, cfg, seed, max_rounds=cfg.deploy_max_rounds)
    return _result(game, stepper.state, trace)


# ---------------------------------------------------------------------------
# evolutionary game


def replicator_step(shares, fitness, step: float) -> np.ndarray:
    """x_s <- x_s + step * x_s * (f_s - fbar), then renormalised onto the simplex."""
    x = np.asarray(shares, dtype=float)
    f = np.asarray(fitness, dtype=float)
    fbar = float(x @ f)
    x = np.maximum(x + step * x * (f - fbar), 0.0)
    total = x.sum()
    if total <= 0:
        raise ValueError("replicator update emptied the population")
    return x / total


def strategy_lattice(center, game: DeployGame, bcfg: BaselineConfig) -> np.ndarray:
    """Rows of (x, y, z, p): a square xy grid around ``center``, altitudes across the band."""
    r = bcfg.etg_radius
    g = bcfg.etg_grid
    offs = np.linspace(-r, r, g) if g > 1 else np.zeros(1)
    zs = np.linspace(game.box_lo[2], game.box_hi[2], bcfg.etg_grid_z) if bcfg.etg_grid_z > 1 else np.array([center[2]])
    ps = np.linspace(game.pmin, game.pmax, bcfg.etg_power_levels) if bcfg.etg_power_levels > 1 else np.array([game.pmax])
    xs = np.clip(center[0] + offs, game.box_lo[0], game.box_hi[0])
    ys = np.clip(center[1] + offs, game.box_lo[1], game.box_hi[1])
    grid = np.array(np.meshgrid(xs, ys, zs, ps, indexing="ij")).reshape(4, -1).T
    return grid


def run_etg(world, topo, cfg: GameConfig | None = None, seed: int = 0, params: SystemParams | None = None,
            bcfg: BaselineConfig | None = None, assoc=None) -> DeployResult:
    """Per-UAV replicator dynamics over a finite lattice of (position, power) strategies.

    Fitness of a lattice point is the UAV's own utility against the others' current
    decoded (highest-share) strategies, rescaled to unit range before the replicator step.
    """
    cfg = cfg or GameConfig()
    bcfg = bcfg or BaselineConfig(kind="etg")
    game, state = _setup(world, topo, cfg, params, assoc)
    n = game.n_players
    # the incumbent strategy comes first so that ties in the shares keep it
    lattices = [np.vstack([np.append(state.pos[i], state.power[i]), strategy_lattice(state.pos[i], game, bcfg)])
                for i in range(n)]
    shares = [np.full(len(L), 1.0 / len(L)) for L in lattices]
    trace = ConvergenceTrace()
    ev = game.evaluate(state)
    trace.initial_potential = ev.potential
    decoded = state
    for r in range(bcfg.etg_rounds):
        for i in range(n):
            view = PlayerView(game, decoded, i, "utility")
            fit = np.array([view(x) for x in lattices[i]])
            fit = np.where(np.isfinite(fit), fit, np.nan)
            lo = np.nanmin(fit)
            fit = np.nan_to_num(fit, nan=lo)
            span = fit.max() - lo
            norm = (fit - lo) / span if span > 0 else np.zeros_like(fit)
            shares[i] = replicator_step(shares[i], norm, bcfg.etg_step)
        pos = np.array([lattices[i][int(np.argmax(shares[i]))][:3] for i in range(n)])
        power = np.array([lattices[i][int(np.argmax(shares[i]))][3] for i in range(n)])
        decoded = DeployState(pos, power, decoded.assoc)
        ev = game.evaluate(decoded)
        c = _repair_or_keep(ev, decoded.assoc, game)
        if not np.array_equal(c, decoded.assoc):
            decoded = decoded.with_assoc(c)
            ev = game.evaluate(decoded)
        trace.potential.append(ev.potential)
        trace.utilities.append(ev.utilities.tolist())
        trace.link_count.append(topo.link_count)
        trace.rounds = r + 1
    trace.notes.append("shares: " + ",".join(f"{s.max():.6f}" for s in shares))
    return _result(game, decoded, trace)


def _repair_or_keep(ev, assoc, game):
    try:
        return greedy_association(ev.env.rate_a2g, ev.env.dist_a2g, game.world.comm_radius)
    except InfeasibleCoverageError:
        return assoc


# ---------------------------------------------------------------------------
# genetic algorithm


def _repair_genes(genes_assoc, pos, users, radius):
    """Move each user whose gene points at an out-of-range UAV to the nearest UAV."""
    d = np.linalg.norm(pos[:, None, :] - users[None, :, :], axis=2)
    m = np.arange(users.shape[0])
    bad = d[genes_assoc, m] > radius
    out = genes_assoc.copy()
    out[bad] = d[:, bad].argmin(axis=0)
    return out


def run_ga(world, topo, cfg: GameConfig | None = None, seed: int = 0, params: SystemParams | None = None,
           bcfg: BaselineConfig | None = None, assoc=None) -> DeployResult:
    """Generational GA on (positions, powers, association) with the potential as fitness."""
    cfg = cfg or GameConfig()
    bcfg = bcfg or BaselineConfig(kind="ga")
    game, state = _setup(world, topo, cfg, params, assoc)
    rng = np.random.default_rng(seed)
    n, m = world.n_uavs, world.n_users
    lo = np.concatenate([np.tile(game.box_lo, n), np.full(n, game.pmin)])
    hi = np.concatenate([np.tile(game.box_hi, n), np.full(n, game.pmax)])
    sigma = np.concatenate([np.full(3 * n, bcfg.ga_sigma_pos), np.full(n, bcfg.ga_sigma_power)])

    def decode(cont, genes):
        pos = cont[: 3 * n].reshape(n, 3)
        genes = _repair_genes(genes, pos, game.users, world.comm_radius)
        c = np.zeros((n, m), dtype=np.int8)
        c[genes, np.arange(m)] = 1
        return DeployState(pos.copy(), cont[3 * n:].copy(), c), genes

    def fitness(cont, genes):
        st, genes = decode(cont, genes)
        return game.evaluate(st).potential, genes

    base_cont = np.concatenate([state.pos.ravel(), state.power])
    base_genes = state.assoc.argmax(axis=0)
    pop_c = [base_cont.copy()]
    pop_g = [base_genes.copy()]
    for _ in range(bcfg.ga_population - 1):
        pop_c.append(np.clip(base_cont + rng.normal(0, sigma), lo, hi))
        pop_g.append(rng.integers(0, n, size=m) if rng.random() < 0.5 else base_genes.copy())
    fit = []
    for k in range(len(pop_c)):
        f, pop_g[k] = fitness(pop_c[k], pop_g[k])
        fit.append(f)
    fit = np.array(fit)

    trace = ConvergenceTrace()
    trace.initial_potential = float(fit[0])

    def tournament():
        a, b = rng.integers(0, len(pop_c), size=2)
        return a if fit[a] >= fit[b] else b

    for gen in range(bcfg.ga_generations):
        elite = int(np.argmax(fit))
        new_c, new_g = [pop_c[elite].copy()], [pop_g[elite].copy()]
        while len(new_c) < bcfg.ga_population:
            pa, pb = tournament(), tournament()
            ca, ga_ = pop_c[pa].copy(), pop_g[pa].copy()
            if rng.random() < bcfg.ga_crossover:
                mask = rng.random(ca.size) < 0.5
                ca[mask] = pop_c[pb][mask]
                gmask = rng.random(m) < 0.5
                ga_[gmask] = pop_g[pb][gmask]
            mut = rng.random(ca.size) < bcfg.ga_mutation
            ca = np.clip(ca + np.where(mut, rng.normal(0, sigma), 0.0), lo, hi)
            gmut = rng.random(m) < bcfg.ga_mutation
            ga_ = np.where(gmut, rng.integers(0, n, size=m), ga_)
            new_c.append(ca)
            new_g.append(ga_)
        pop_c, pop_g = new_c, new_g
        fit = np.empty(len(pop_c))
        for k in range(len(pop_c)):
            fit[k], pop_g[k] = fitness(pop_c[k], pop_g[k])
        best = int(np.argmax(fit))
        st, _ = decode(pop_c[best], pop_g[best])
        trace.potential.append(float(fit[best]))
        trace.utilities.append(game.evaluate(st).utilities.tolist())
        trace.link_count.append(topo.link_count)
        trace.rounds = gen + 1
    best = int(np.argmax(fit))
    st, _ = decode(pop_c[best], pop_g[best])
    return _result(game, st, trace)


RUNNERS = {"brd_epg": run_brd_epg, "brd_ncg": run_brd_ncg, "etg": run_etg, "ga": run_ga}


def run_baseline(kind: str, world, topo, cfg=None, seed=0, params=None, bcfg=None, assoc=None) -> DeployResult:
    if kind not in RUNNERS:
        raise ValueError(f"unknown baseline {kind!r}")
    return RUNNERS[kind](world, topo, cfg, seed, params, bcfg, assoc)
