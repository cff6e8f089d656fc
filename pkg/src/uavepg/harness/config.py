"""Scenario files: JSON schema, defaults, validation and the resolved echo-back."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..channel import RadioParams
from ..epg_core import GameConfig, SystemParams
from ..metrics import EnergyParams, LatencyParams
from ..scenario import (
    GroundUser,
    Obstacle,
    UavState,
    UserMove,
    Vec3,
    WorldState,
    initial_uav_positions,
    random_users,
)


class ConfigError(ValueError):
    pass


_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_triple = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 3, "maxItems": 3}
_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


SCHEMA = _obj(
    {
        "name": {"type": "string"},
        "area": _pair,
        "slot_length": _pos,
        "uavs": _obj(
            {
                "count": {"type": "integer", "minimum": 2},
                "altitude_band": _pair,
                "power_bounds": _pair,
                "comm_radius": _pos,
                "initial_power": {"type": ["number", "null"]},
                "initial_altitude": {"type": ["number", "null"]},
                "residual_energy": _pos,
                "energy": _obj({f.name: _pos for f in fields(EnergyParams)}),
            }
        ),
        "users": _obj(
            {
                "count": {"type": ["integer", "null"], "minimum": 1},
                "positions": {"type": ["array", "null"], "items": _pair, "minItems": 1},
                "layout_seed": {"type": ["integer", "null"]},
                "script": {
                    "type": "array",
                    "items": _obj({"slot": {"type": "integer"}, "user": {"type": "integer", "minimum": 0},
                                   "x": _num, "y": _num}, ["slot", "user", "x", "y"]),
                },
            }
        ),
        "obstacles": {
            "type": "array",
            "items": _obj({"center": _pair, "size": _pair, "height": _pos}, ["center", "size", "height"]),
        },
        "radio": _obj(
            {
                "carrier_hz": _pos,
                "bandwidth_hz": _pos,
                "noise_density_dbm_hz": {"type": ["number", "null"]},
                "temperature_k": {"type": ["number", "null"]},
                "tx_gain_dbi": _num,
                "rx_gain_dbi": _num,
                "xi_los_db": _num,
                "xi_nlos_db": _num,
                "env_a": _pos,
                "env_b": _pos,
                "path_loss_exponent": _pos,
                "fading_mode": {"enum": ["expected", "seeded-stochastic"]},
            }
        ),
        "latency": _obj({"packet_bits": _pos}),
        "weights": _obj(
            {
                "eta": _triple,
                "psi": _triple,
                "objective": _triple,
                "emphasis": {"enum": ["throughput", "energy", "latency", "balanced"]},
            }
        ),
        "game": _obj(
            {
                "temperature": _pos,
                "convention": {"enum": ["literal", "aligned"]},
                "drop_nlos_links": {"type": "boolean"},
                "allow_readd": {"type": "boolean"},
                "steps": _obj({"position": _pos, "power": _pos, "fd_position": _pos, "fd_power": _pos,
                               "inner_iters": {"type": "integer", "minimum": 1}}),
                "exploration": _obj({"eps0": {"type": "number", "minimum": 0, "maximum": 1},
                                     "decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                                     "radius": _pos}),
                "rounds": _obj({"p1": {"type": "integer", "minimum": 0}, "p2": {"type": "integer", "minimum": 0},
                                "stall_window": {"type": "integer", "minimum": 1},
                                "stall_tol": {"type": "number", "minimum": 0}}),
            }
        ),
        "baselines": _obj(
            {
                "ga_population": {"type": "integer", "minimum": 2},
                "ga_generations": {"type": "integer", "minimum": 0},
                "ga_crossover": {"type": "number", "minimum": 0, "maximum": 1},
                "ga_mutation": {"type": "number", "minimum": 0, "maximum": 1},
                "ga_sigma_pos": _pos,
                "ga_sigma_power": _pos,
                "etg_grid": {"type": "integer", "minimum": 1},
                "etg_grid_z": {"type": "integer", "minimum": 1},
                "etg_power_levels": {"type": "integer", "minimum": 1},
                "etg_radius": _pos,
                "etg_step": _pos,
                "etg_rounds": {"type": "integer", "minimum": 0},
                "brd_step": {"type": ["number", "null"], "exclusiveMinimum": 0},
            }
        ),
    }
)


def _defaults() -> dict:
    g = GameConfig()
    return {
        "name": "default",
        "area": [10_000.0, 10_000.0],
        "slot_length": 10.0,
        "uavs": {
            "count": 10,
            "altitude_band": [100.0, 300.0],
            "power_bounds": [0.5, 2.0],
            "comm_radius": 4000.0,
            "initial_power": None,
            "initial_altitude": None,
            "residual_energy": 5.0e5,
            "energy": asdict(EnergyParams()),
        },
        "users": {"count": 20, "positions": None, "layout_seed": None, "script": []},
        "obstacles": [],
        "radio": asdict(RadioParams()),
        "latency": {"packet_bits": LatencyParams().packet_bits},
        "weights": {"eta": list(g.eta), "psi": list(g.psi), "objective": list(g.objective_weights),
                    "emphasis": "balanced"},
        "game": {
            "temperature": g.temperature,
            "convention": g.convention,
            "drop_nlos_links": g.drop_nlos_links,
            "allow_readd": g.allow_readd,
            "steps": {"position": g.grad_step_pos, "power": g.grad_step_power, "fd_position": g.fd_epsilon,
                      "fd_power": g.fd_epsilon_power, "inner_iters": g.inner_iters},
            "exploration": {"eps0": g.explore_eps0, "decay": g.explore_decay, "radius": g.explore_radius},
            "rounds": {"p1": g.max_rounds, "p2": g.deploy_max_rounds, "stall_window": g.stall_window,
                       "stall_tol": g.stall_tol},
        },
        "baselines": {
            "ga_population": 30, "ga_generations": 200, "ga_crossover": 0.9, "ga_mutation": 0.1,
            "ga_sigma_pos": 50.0, "ga_sigma_power": 0.2, "etg_grid": 5, "etg_grid_z": 3,
            "etg_power_levels": 4, "etg_radius": 200.0, "etg_step": 0.5, "etg_rounds": 10, "brd_step": None,
        },
    }


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class Scenario:
    """A validated scenario; ``resolved`` is the full document with every default filled in."""

    resolved: dict
    obstacles: tuple[Obstacle, ...]
    radio: RadioParams
    energy: EnergyParams
    latency: LatencyParams
    game: GameConfig

    @property
    def name(self) -> str:
        return self.resolved["name"]

    @property
    def n_uavs(self) -> int:
        return self.resolved["uavs"]["count"]

    @property
    def params(self) -> SystemParams:
        return SystemParams(self.radio, self.energy, self.latency)

    def baseline_kwargs(self) -> dict:
        return dict(self.resolved["baselines"])

    def users_for(self, seed: int) -> tuple[GroundUser, ...]:
        u = self.resolved["users"]
        if u["positions"] is not None:
            return tuple(GroundUser(m, Vec3(float(x), float(y), 0.0)) for m, (x, y) in enumerate(u["positions"]))
        layout = u["layout_seed"] if u["layout_seed"] is not None else seed
        return random_users(u["count"], tuple(self.resolved["area"]), np.random.default_rng(layout))

    def world_for(self, seed: int, n_uavs: int | None = None) -> WorldState:
        d = self.resolved
        n = n_uavs or d["uavs"]["count"]
        users = self.users_for(seed)
        band = tuple(d["uavs"]["altitude_band"])
        alt = d["uavs"]["initial_altitude"]
        alt = 0.5 * (band[0] + band[1]) if alt is None else alt
        pw = d["uavs"]["initial_power"]
        pw = d["uavs"]["power_bounds"][1] if pw is None else pw
        pos = initial_uav_positions(users, n, seed, alt, tuple(d["area"]))
        uavs = tuple(UavState(i, p, tx_power=float(pw), residual_energy=float(d["uavs"]["residual_energy"]))
                     for i, p in enumerate(pos))
        script = tuple(UserMove(**m) for m in d["users"]["script"])
        return WorldState(0, uavs, users, self.obstacles, tuple(d["area"]), band, float(d["slot_length"]),
                          tuple(d["uavs"]["power_bounds"]), float(d["uavs"]["comm_radius"]), script)

    def echo(self) -> str:
        return json.dumps(self.resolved, sort_keys=True, indent=2)


def _check(cond: bool, field: str, msg: str):
    if not cond:
        raise ConfigError(f"{field}: {msg}")


def resolve_scenario(doc: dict) -> Scenario:
    """Validate a scenario document and fill in defaults."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    d = _merge(_defaults(), doc)
    u = d["uavs"]
    zlo, zhi = u["altitude_band"]
    _check(zlo <= zhi, "uavs.altitude_band", f"z_min {zlo} exceeds z_max {zhi}")
    _check(zlo >= 0, "uavs.altitude_band", "altitudes must be non-negative")
    plo, phi = u["power_bounds"]
    _check(0 < plo <= phi, "uavs.power_bounds", f"need 0 < p_min <= p_max, got {plo}, {phi}")
    _check(all(a > 0 for a in d["area"]), "area", "side lengths must be positive")
    if u["initial_power"] is None:
        u["initial_power"] = float(phi)
    _check(plo <= u["initial_power"] <= phi, "uavs.initial_power", "must lie within power_bounds")
    if u["initial_altitude"] is None:
        u["initial_altitude"] = 0.5 * (zlo + zhi)
    _check(zlo <= u["initial_altitude"] <= zhi, "uavs.initial_altitude", "must lie within altitude_band")
    users = d["users"]
    if users["positions"] is not None:
        users["count"] = len(users["positions"])
        for k, (x, y) in enumerate(users["positions"]):
            _check(0 <= x <= d["area"][0] and 0 <= y <= d["area"][1], f"users.positions.{k}", "outside the area")
    _check(users["count"] is not None, "users", "give either count or positions")
    for k, m in enumerate(users["script"]):
        _check(m["user"] < users["count"], f"users.script.{k}.user", "no such user")
    _check(d["radio"]["xi_nlos_db"] >= d["radio"]["xi_los_db"], "radio.xi_nlos_db", "must be >= xi_los_db")
    _check((d["radio"]["noise_density_dbm_hz"] is None) != (d["radio"]["temperature_k"] is None),
           "radio.noise_density_dbm_hz", "set exactly one of noise_density_dbm_hz and temperature_k")
    obstacles = []
    for k, o in enumerate(d["obstacles"]):
        _check(min(o["size"]) > 0, f"obstacles.{k}.size", "must be positive")
        obstacles.append(Obstacle(o["center"][0], o["center"][1], o["size"][0], o["size"][1], o["height"]))
    g, w = d["game"], d["weights"]
    try:
        game = GameConfig(
            eta=tuple(w["eta"]), psi=tuple(w["psi"]), objective_weights=tuple(w["objective"]),
            convention=g["convention"], temperature=g["temperature"],
            grad_step_pos=g["steps"]["position"], grad_step_power=g["steps"]["power"],
            fd_epsilon=g["steps"]["fd_position"], fd_epsilon_power=g["steps"]["fd_power"],
            inner_iters=g["steps"]["inner_iters"], explore_eps0=g["exploration"]["eps0"],
            explore_decay=g["exploration"]["decay"], explore_radius=g["exploration"]["radius"],
            max_rounds=g["rounds"]["p1"], deploy_max_rounds=g["rounds"]["p2"],
            stall_window=g["rounds"]["stall_window"], stall_tol=g["rounds"]["stall_tol"],
            drop_nlos_links=g["drop_nlos_links"], allow_readd=g["allow_readd"],
        )
        radio = RadioParams(**d["radio"])
        energy = EnergyParams(**u["energy"])
        latency = LatencyParams(packet_bits=d["latency"]["packet_bits"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return Scenario(d, tuple(obstacles), radio, energy, latency, game)


def load_scenario_doc(path) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"scenario file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return resolve_scenario(doc)


def load_scenario(path, seed: int = 0):
    """Return (WorldState, RadioParams, EnergyParams, LatencyParams, GameConfig)."""
    sc = load_scenario_doc(path)
    return sc.world_for(seed), sc.radio, sc.energy, sc.latency, sc.game


def bundled_scenario_path(name: str = "default_scenario.json") -> Path:
    return Path(str(resources.files("uavepg") / "data" / name))
