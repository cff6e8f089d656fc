"""World geometry: UAVs, ground users, obstacles, mobility and initial placement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np


class Vec3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class UavState:
    id: int
    position: Vec3
    velocity: Vec3 = Vec3(0.0, 0.0, 0.0)
    tx_power: float = 2.0
    residual_energy: float = 5.0e5


@dataclass(frozen=True)
class GroundUser:
    id: int
    position: Vec3

    def __post_init__(self):
        if self.position.z != 0:
            raise ValueError(f"ground user {self.id} must have z == 0, got {self.position.z}")


@dataclass(frozen=True)
class Obstacle:
    """Axis-aligned building standing on the ground plane."""

    center_x: float
    center_y: float
    width: float
    depth: float
    height: float

    def __post_init__(self):
        if min(self.width, self.depth, self.height) <= 0:
            raise ValueError("obstacle width, depth and height must be positive")

    @property
    def lo(self) -> np.ndarray:
        return np.array([self.center_x - self.width / 2, self.center_y - self.depth / 2, 0.0])

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.center_x + self.width / 2, self.center_y + self.depth / 2, self.height])


@dataclass(frozen=True)
class UserMove:
    """Scripted ground-user relocation applied when the world reaches ``slot``."""

    slot: int
    user: int
    x: float
    y: float


@dataclass(frozen=True)
class WorldState:
    slot: int
    uavs: tuple[UavState, ...]
    users: tuple[GroundUser, ...]
    obstacles: tuple[Obstacle, ...] = ()
    area: tuple[float, float] = (10_000.0, 10_000.0)
    altitude_band: tuple[float, float] = (100.0, 300.0)
    slot_length: float = 1.0
    power_bounds: tuple[float, float] = (0.5, 2.0)
    comm_radius: float = 4000.0
    user_script: tuple[UserMove, ...] = field(default=())

    def __post_init__(self):
        if len(self.uavs) < 2:
            raise ValueError("a UAV network needs at least 2 UAVs")
        if len(self.users) < 1:
            raise ValueError("at least one ground user is required")
        zmin, zmax = self.altitude_band
        if zmin > zmax:
            raise ValueError(f"altitude band inverted: {self.altitude_band}")
        for u in self.uavs:
            if not self.contains(u.position):
                raise ValueError(f"UAV {u.id} at {tuple(u.position)} lies outside the flight region")

    @property
    def n_uavs(self) -> int:
        return len(self.uavs)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def contains(self, p: Vec3, tol: float = 1e-9) -> bool:
        zmin, zmax = self.altitude_band
        return (
            -tol <= p.x <= self.area[0] + tol
            and -tol <= p.y <= self.area[1] + tol
            and zmin - tol <= p.z <= zmax + tol
        )

    def uav_positions(self) -> np.ndarray:
        return np.array([u.position for u in self.uavs], dtype=float)

    def uav_velocities(self) -> np.ndarray:
        return np.array([u.velocity for u in self.uavs], dtype=float)

    def uav_powers(self) -> np.ndarray:
        return np.array([u.tx_power for u in self.uavs], dtype=float)

    def user_positions(self) -> np.ndarray:
        return np.array([g.position for g in self.users], dtype=float)

    def box_lo(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.altitude_band[0]])

    def box_hi(self) -> np.ndarray:
        return np.array([self.area[0], self.area[1], self.altitude_band[1]])

    def with_uav_arrays(self, positions, powers=None, velocities=None) -> "WorldState":
        """Return a copy with UAV positions (and optionally powers/velocities) replaced."""
        uavs = []
        for k, u in enumerate(self.uavs):
            kw = {"position": Vec3(*map(float, positions[k]))}
            if powers is not None:
                kw["tx_power"] = float(powers[k])
            if velocities is not None:
                kw["velocity"] = Vec3(*map(float, velocities[k]))
            uavs.append(replace(u, **kw))
        return replace(self, uavs=tuple(uavs))


def distance(a: Vec3, b: Vec3) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def obstacle_bounds(obstacles: Sequence[Obstacle]) -> tuple[np.ndarray, np.ndarray]:
    if not obstacles:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.array([o.lo for o in obstacles]), np.array([o.hi for o in obstacles])


def segments_blocked(a: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Slab test of segments ``a[k] -> b[k]`` against all boxes.

    ``a`` and ``b`` have shape (..., 3); ``lo``/``hi`` have shape (K, 3).  Returns a boolean
    array of shape ``a.shape[:-1]`` that is True when the open segment passes through the
    interior of at least one box.
    """
    shape = a.shape[:-1]
    if lo.shape[0] == 0:
        return np.zeros(shape, dtype=bool)
    a = a.reshape(-1, 1, 3)
    d = b.reshape(-1, 1, 3) - a
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo[None] - a) * inv
        t2 = (hi[None] - a) * inv
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    # axis-parallel segments: inside the slab means unbounded, outside means empty
    parallel = d == 0
    inside = (a > lo[None]) & (a < hi[None])
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)
    t_enter = np.maximum(tmin.max(axis=-1), 0.0)
    t_exit = np.minimum(tmax.min(axis=-1), 1.0)
    hit = (t_enter < t_exit).any(axis=-1)
    return hit.reshape(shape)


def los_between(a: Vec3, b: Vec3, obstacles: Sequence[Obstacle]) -> int:
    lo, hi = obstacle_bounds(obstacles)
    blocked = segments_blocked(np.asarray(a, float)[None], np.asarray(b, float)[None], lo, hi)
    return 0 if blocked[0] else 1


def elevation_angle(uav: Vec3, gu: Vec3) -> float:
    horiz = math.hypot(uav[0] - gu[0], uav[1] - gu[1])
    if horiz == 0:
        return 90.0
    return math.degrees(math.atan(uav[2] / horiz))


def step_mobility(world: WorldState, accelerations: Sequence[Sequence[float]]) -> WorldState:
    """Advance one slot: v <- v + a*dt, then q <- q + v*dt, clamped to the flight box.

    Velocity-first ordering; swapping the two updates is the only change needed for the
    explicit-Euler variant.
    """
    if len(accelerations) != world.n_uavs:
        raise ValueError(f"expected {world.n_uavs} accelerations, got {len(accelerations)}")
    dt = world.slot_length
    acc = np.asarray(accelerations, dtype=float).reshape(world.n_uavs, 3)
    vel = world.uav_velocities() + acc * dt
    pos = world.uav_positions() + vel * dt
    lo, hi = world.box_lo(), world.box_hi()
    clamped = (pos < lo) | (pos > hi)
    pos = np.clip(pos, lo, hi)
    vel = np.where(clamped, 0.0, vel)
    moved = world.with_uav_arrays(pos, velocities=vel)
    return apply_user_script(replace(moved, slot=world.slot + 1))


def apply_user_script(world: WorldState) -> WorldState:
    """Relocate ground users whose scripted jump is due at the current slot."""
    due = [m for m in world.user_script if m.slot == world.slot]
    if not due:
        return world
    users = list(world.users)
    for m in due:
        users[m.user] = GroundUser(m.user, Vec3(float(m.x), float(m.y), 0.0))
    return replace(world, users=tuple(users))


class DuplicateCentroidError(ValueError):
    pass


def kmeans_init(
    users: Sequence[GroundUser],
    n_uavs: int,
    seed: int,
    altitude: float = 200.0,
    max_iter: int = 100,
    cost_log: list | None = None,
) -> list[Vec3]:
    """Lloyd's k-means on the horizontal user coordinates.

    Centroids start at ``n_uavs`` distinct user positions drawn with ``seed``.  When
    ``cost_log`` is given, the sum of squared distances after every assignment step is
    appended to it.
    """
    if n_uavs < 1:
        raise ValueError("n_uavs must be >= 1")
    pts = np.array([[g.position.x, g.position.y] for g in users], dtype=float)
    distinct = np.unique(pts, axis=0)
    if len(distinct) < n_uavs:
        raise DuplicateCentroidError(
            f"{len(distinct)} distinct user positions cannot seed {n_uavs} centroids"
        )
    rng = np.random.default_rng(seed)
    centers = distinct[rng.choice(len(distinct), size=n_uavs, replace=False)].copy()
    labels = None
    for _ in range(max_iter):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        new_labels = d2.argmin(axis=1)
        if cost_log is not None:
            cost_log.append(float(d2[np.arange(len(pts)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(n_uavs):
            members = pts[labels == k]
            # an emptied cluster keeps its previous centre
            if len(members):
                centers[k] = members.mean(axis=0)
    return [Vec3(float(c[0]), float(c[1]), float(altitude)) for c in centers]


def initial_uav_positions(
    users: Sequence[GroundUser],
    n_uavs: int,
    seed: int,
    altitude: float,
    area: tuple[float, float],
    relay_radius: float = 500.0,
) -> list[Vec3]:
    """K-means placement, with surplus UAVs (more UAVs than distinct users) set on a relay ring."""
    pts = np.unique(np.array([[g.position.x, g.position.y] for g in users]), axis=0)
    k = min(n_uavs, len(pts))
    placed = kmeans_init(users, k, seed, altitude)
    extra = n_uavs - k
    if extra:
        cx, cy = pts.mean(axis=0)
        for e in range(extra):
            ang = 2 * math.pi * e / extra
            x = float(np.clip(cx + relay_radius * math.cos(ang), 0, area[0]))
            y = float(np.clip(cy + relay_radius * math.sin(ang), 0, area[1]))
            placed.append(Vec3(x, y, float(altitude)))
    return placed


def random_users(n: int, area: tuple[float, float], rng: np.random.Generator) -> tuple[GroundUser, ...]:
    xy = rng.uniform([0, 0], area, size=(n, 2))
    return tuple(GroundUser(m, Vec3(float(x), float(y), 0.0)) for m, (x, y) in enumerate(xy))
