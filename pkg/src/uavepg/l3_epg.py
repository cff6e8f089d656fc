"""Log-linear-learning link pruning on frozen UAV positions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .epg_core import (
    DeviationAudit,
    GameConfig,
    LinkGame,
    LinkState,
    SequentialStepper,
    SystemParams,
    run_game,
)
from .topology import LinkTopology, guarded_remove, is_connected


@dataclass(frozen=True)
class LinkMove:
    j: int | None  # None is the no-op
    action: str = "noop"  # noop | drop | add


@dataclass(frozen=True)
class LinkStrategy:
    uav: int
    candidate_moves: tuple[LinkMove, ...]


NOOP = LinkMove(None, "noop")


def candidate_set(i, world, topo: LinkTopology, los=None, drop_nlos: bool = False,
                  allow_readd: bool = False, in_range=None) -> list[LinkMove]:
    """No-op plus one drop per eligible active link of ``i``.

    By default only LoS links may be dropped; ``drop_nlos`` makes every active link eligible.
    ``allow_readd`` adds one add-move per inactive in-range pair.
    """
    if los is None:
        from .channel import a2a_los_matrix
        from .scenario import obstacle_bounds

        lo, hi = obstacle_bounds(world.obstacles)
        los = a2a_los_matrix(world.uav_positions(), lo, hi)
    moves = [NOOP]
    for j in np.flatnonzero(topo.adj[i]).tolist():
        if drop_nlos or los[i, j]:
            moves.append(LinkMove(int(j), "drop"))
    if allow_readd:
        ok = np.ones(topo.n, dtype=bool) if in_range is None else in_range[i]
        for j in range(topo.n):
            if j != i and not topo.adj[i, j] and ok[j]:
                moves.append(LinkMove(j, "add"))
    return moves


def move_probabilities(utilities, temperature: float) -> np.ndarray:
    u = np.asarray(utilities, dtype=float)
    if u.size == 0:
        raise ValueError("need at least one candidate utility")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = (u - u.max()) / temperature
    w = np.exp(z)
    return w / w.sum()


def apply_move(topo: LinkTopology, i: int, move: LinkMove) -> tuple[LinkTopology, bool]:
    if move.action == "drop":
        return guarded_remove(topo, i, move.j)
    if move.action == "add":
        return topo.with_link(i, move.j, 1), True
    return topo, False


def _outcome(topo: LinkTopology, i: int, move: LinkMove) -> LinkTopology:
    if move.action == "drop":
        return topo.with_link(i, move.j, 0)
    if move.action == "add":
        return topo.with_link(i, move.j, 1)
    return topo


def l3_step(game: LinkGame, topo: LinkTopology, i: int, rng: np.random.Generator,
            cfg: GameConfig | None = None) -> tuple[LinkTopology, LinkMove, bool]:
    """One log-linear revision by UAV ``i``.

    Candidate utilities are evaluated on the hypothetical outcome of each move; a sampled
    drop that would disconnect the graph is rejected and leaves the topology unchanged.
    Returns (topology, sampled move, accepted).
    """
    cfg = cfg or game.cfg
    moves = candidate_set(i, game.world, topo, game.env.los_a2a, cfg.drop_nlos_links,
                          cfg.allow_readd, game.in_range)
    utils = [game.utility(LinkState(_outcome(topo, i, m)), i) for m in moves]
    probs = move_probabilities(utils, cfg.temperature)
    k = int(rng.choice(len(moves), p=probs))
    new_topo, accepted = apply_move(topo, i, moves[k])
    return new_topo, moves[k], accepted


class L3Stepper(SequentialStepper):
    def __init__(self, game: LinkGame, topo: LinkTopology, snapshots: bool = False):
        self.game = game
        self.topo = topo
        self.n_players = game.n_players
        self.snapshots = snapshots
        self.connectivity_checks = 0

    def step_player(self, player, round_index, rng):
        before = LinkState(self.topo)
        topo, move, accepted = l3_step(self.game, self.topo, player, rng)
        if not accepted:
            return []
        self.connectivity_checks += 1
        if not is_connected(topo):  # guarded_remove makes this unreachable
            raise AssertionError("accepted topology is disconnected")
        after = LinkState(topo)
        self.topo = topo
        g = self.game
        du = g.utility(after, player) - g.utility(before, player)
        dphi = g.potential(after) - g.potential(before)
        return [DeviationAudit(round_index, player, du, dphi, abs(du - dphi), g.potential(after), topo.link_count)]

    def progress(self) -> float:
        return float(self.topo.link_count)

    def observe(self):
        st = LinkState(self.topo)
        return self.game.potential(st), self.game.utilities(st).tolist(), self.topo.link_count


def prune_out_of_range(topo: LinkTopology, in_range: np.ndarray) -> tuple[LinkTopology, list[str]]:
    """Remove links longer than the communication radius, keeping the graph connected."""
    notes = []
    for i, j in topo.edges():
        if not in_range[i, j]:
            topo, ok = guarded_remove(topo, i, j)
            if not ok:
                notes.append(f"link ({i},{j}) exceeds comm_radius but is needed for connectivity")
            else:
                notes.append(f"link ({i},{j}) beyond comm_radius pruned")
    return topo, notes


def solve_p1(world, cfg: GameConfig | None = None, seed: int = 0, params: SystemParams | None = None,
             snapshots: bool = False, initial: LinkTopology | None = None):
    """Prune a fully connected A2A graph; returns (topology, trace)."""
    cfg = cfg or GameConfig()
    game = LinkGame(world, cfg, params)
    topo = initial if initial is not None else LinkTopology.complete(world.n_uavs)
    topo, notes = prune_out_of_range(topo, game.in_range)
    stepper = L3Stepper(game, topo, snapshots)
    trace = run_game(stepper, cfg, seed, snapshot=(lambda: stepper.topo.adj.copy()) if snapshots else None)
    trace.notes.extend(notes)
    return stepper.topo, trace
