"""P1 -> P2 pipeline runs, N sweeps and paired algorithm comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from ..ag_epg import InfeasibleCoverageError, run_deploy
from ..baselines import BaselineConfig, run_baseline
from ..channel import build_environment
from ..epg_core import GameConfig, check_constraints, global_objective
from ..l3_epg import solve_p1
from ..rag_weights import (
    HashedBowEmbedder,
    ScenarioDigest,
    apply_proposal,
    build_index,
    bundled_corpus,
    generate_weights,
    retrieve_topk,
)
from .config import Scenario, load_scenario_doc
from .export import dumps, export_traces, rows_csv, write_atomic

ALGORITHMS = ("l3_ag", "brd_epg", "brd_ncg", "etg", "ga")
METRIC_COLUMNS = [
    "algorithm", "n_uavs", "seed", "objective", "th_total", "e_total", "t_total", "link_count",
    "rounds_p1", "rounds_p2", "correlation_p1", "r2_p1", "correlation_p2", "r2_p2", "feasible",
]


class PipelineError(RuntimeError):
    pass


@dataclass
class ExperimentSpec:
    scenario: str | Path | Scenario
    algorithm: str = "l3_ag"
    seeds: list[int] = field(default_factory=lambda: [0])
    sweep: list[int] | None = None
    out_dir: str | Path | None = None
    weights: str = "config"
    snapshots: bool = False
    algorithms: list[str] | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.sweep is not None and any(n < 2 for n in self.sweep):
            raise ValueError("sweep values must be >= 2")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        for a in self.algorithms or []:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        if self.weights not in ("config", "rag"):
            raise ValueError("weights must be 'config' or 'rag'")

    def load(self) -> Scenario:
        return self.scenario if isinstance(self.scenario, Scenario) else load_scenario_doc(self.scenario)


@dataclass
class RunOutcome:
    algorithm: str
    seed: int
    n_uavs: int
    p1_trace: object
    result: object
    metrics: dict


@dataclass
class RunReport:
    rows: list[dict]
    aggregates: list[dict]
    config: dict
    weights: dict | None = None

    def to_dict(self) -> dict:
        return {"rows": self.rows, "aggregates": self.aggregates, "weights": self.weights}


def resolve_weights(sc: Scenario, source: str) -> tuple[GameConfig, dict | None]:
    if source == "config":
        return sc.game, None
    d = sc.resolved
    area = d["area"][0] * d["area"][1]
    digest = ScenarioDigest(
        n_uavs=sc.n_uavs,
        n_users=sc.resolved["users"]["count"],
        area=tuple(d["area"]),
        obstacle_density=len(d["obstacles"]) / area * 1e6,
        interference_level="high" if sc.n_uavs >= 8 else "moderate",
        optimization_emphasis=d["weights"]["emphasis"],
    )
    emb = HashedBowEmbedder()
    index = build_index(bundled_corpus(), 4, emb)
    hits = retrieve_topk(index, digest.query(), 3, emb)
    proposal = generate_weights(digest, hits)
    info = {
        "eta": list(proposal.eta), "psi": list(proposal.psi),
        "objective_weights": list(proposal.objective_weights),
        "rationale": proposal.rationale, "source_chunk_ids": list(proposal.source_chunk_ids),
        "query": digest.query(),
    }
    return apply_proposal(sc.game, proposal), info


def solve_topology(sc: Scenario, cfg: GameConfig, seed: int, n: int, snapshots: bool = False):
    world = sc.world_for(seed, n)
    topo, trace = solve_p1(world, cfg, seed, sc.params, snapshots=snapshots)
    return world, topo, trace


def run_algorithm(sc: Scenario, algorithm: str, cfg: GameConfig, seed: int, world, topo):
    if algorithm == "l3_ag":
        return run_deploy(world, topo, cfg, seed, sc.params)
    bcfg = BaselineConfig(kind=algorithm, **sc.baseline_kwargs())
    return run_baseline(algorithm, world, topo, cfg, seed, sc.params, bcfg)


def measure(result, cfg: GameConfig, sc: Scenario) -> dict:
    world = result.world
    topo = result.game.topo
    env = build_environment(world, topo, result.assoc, sc.radio)
    obj, report = global_objective(world, topo, result.assoc, env, cfg, sc.params)
    ev = result.evaluation
    return {
        "objective": obj,
        "th_total": float(ev.th.sum()),
        "e_total": float(ev.energy.sum()),
        "t_total": float(ev.latency.sum()),
        "link_count": topo.link_count,
        "feasible": bool(report.feasible),
        "constraints": report.as_dict(),
    }


def run_once(sc: Scenario, algorithm: str, cfg: GameConfig, seed: int, n: int, snapshots=False,
             p1_cache: dict | None = None) -> RunOutcome:
    try:
        key = (seed, n)
        if p1_cache is not None and key in p1_cache:
            world, topo, p1 = p1_cache[key]
        else:
            world, topo, p1 = solve_topology(sc, cfg, seed, n, snapshots)
            if p1_cache is not None:
                p1_cache[key] = (world, topo, p1)
        result = run_algorithm(sc, algorithm, cfg, seed, world, topo)
    except InfeasibleCoverageError as exc:
        raise PipelineError(f"seed {seed}, N={n}: {exc}") from exc
    m = measure(result, cfg, sc)
    m.update(
        algorithm=algorithm, n_uavs=n, seed=seed, rounds_p1=p1.rounds, rounds_p2=result.trace.rounds,
        correlation_p1=p1.correlation(), r2_p1=p1.r2(),
        correlation_p2=result.trace.correlation(), r2_p2=result.trace.r2(),
    )
    return RunOutcome(algorithm, seed, n, p1, result, m)


def aggregate(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["n_uavs"]), []).append(r)
    out = []
    for (algo, n), rs in sorted(groups.items(), key=lambda kv: (kv[0][1], ALGORITHMS.index(kv[0][0]))):
        agg = {"algorithm": algo, "n_uavs": n, "seeds": len(rs)}
        for key in ("objective", "th_total", "e_total", "t_total", "link_count"):
            vals = np.array([r[key] for r in rs], dtype=float)
            agg[f"{key}_mean"] = float(vals.mean())
            agg[f"{key}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(agg)
    return out


def _n_values(spec: ExperimentSpec, sc: Scenario) -> list[int]:
    return list(spec.sweep) if spec.sweep else [sc.n_uavs]


def run_pipeline(spec: ExperimentSpec) -> RunReport:
    """Run one algorithm over all seeds (and sweep points); write per-run files and a report."""
    sc = spec.load()
    cfg, weights = resolve_weights(sc, spec.weights)
    rows = []
    for n in _n_values(spec, sc):
        for seed in spec.seeds:
            run = run_once(sc, spec.algorithm, cfg, seed, n, spec.snapshots)
            if spec.out_dir is not None:
                export_traces(run, Path(spec.out_dir) / spec.algorithm / f"N{n}" / f"seed{seed}")
            rows.append(_row(run.metrics))
    report = RunReport(rows, aggregate(rows), sc.resolved, weights)
    if spec.out_dir is not None:
        _write_report(report, Path(spec.out_dir), "report")
    return report


def _row(m: dict) -> dict:
    return {k: m[k] for k in METRIC_COLUMNS} | {"violations": m["constraints"]}


def _write_report(report: RunReport, out: Path, stem: str):
    write_atomic(out / f"{stem}.json", dumps(report.to_dict()))
    write_atomic(out / f"{stem}.csv", rows_csv(report.rows, METRIC_COLUMNS))
    write_atomic(out / "config_echo.json", dumps({"scenario": report.config, "weights": report.weights}))


def sign_test(a: list[float], b: list[float]) -> tuple[int, int, float]:
    """One-sided sign test that a > b on paired samples; ties are dropped."""
    wins = sum(x > y for x, y in zip(a, b))
    losses = sum(x < y for x, y in zip(a, b))
    if wins + losses == 0:
        return 0, 0, 1.0
    return wins, losses, float(binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)


def compare_algorithms(spec: ExperimentSpec, progress=None) -> tuple[list[dict], RunReport]:
    """Paired comparison: every algorithm sees the same worlds, seeds and pruned topologies."""
    sc = spec.load()
    cfg, weights = resolve_weights(sc, spec.weights)
    algos = spec.algorithms or list(ALGORITHMS)
    rows = []
    for n in _n_values(spec, sc):
        cache: dict = {}
        for seed in spec.seeds:
            for algo in algos:
                run = run_once(sc, algo, cfg, seed, n, spec.snapshots, cache)
                if progress:
                    progress(run)
                rows.append(_row(run.metrics))
    report = RunReport(rows, aggregate(rows), sc.resolved, weights)
    table = comparison_table(rows, algos)
    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        _write_report(report, out, "compare_runs")
        write_atomic(out / "comparison.csv", rows_csv(table, COMPARISON_COLUMNS))
    return table, report


COMPARISON_COLUMNS = [
    "n_uavs", "algorithm", "seeds", "th_mean", "e_mean", "t_mean", "objective_mean",
    "th_std", "e_std", "t_std", "th_wins_ref", "th_losses_ref", "th_sign_p",
]


def comparison_table(rows: list[dict], algos: list[str], reference: str = "l3_ag") -> list[dict]:
    table = []
    for n in sorted({r["n_uavs"] for r in rows}):
        at_n = [r for r in rows if r["n_uavs"] == n]
        ref = sorted((r for r in at_n if r["algorithm"] == reference), key=lambda r: r["seed"])
        for algo in algos:
            rs = sorted((r for r in at_n if r["algorithm"] == algo), key=lambda r: r["seed"])
            th = [r["th_total"] for r in rs]
            e = [r["e_total"] for r in rs]
            t = [r["t_total"] for r in rs]
            row = {
                "n_uavs": n, "algorithm": algo, "seeds": len(rs),
                "th_mean": float(np.mean(th)), "e_mean": float(np.mean(e)), "t_mean": float(np.mean(t)),
                "objective_mean": float(np.mean([r["objective"] for r in rs])),
                "th_std": float(np.std(th)), "e_std": float(np.std(e)), "t_std": float(np.std(t)),
                "th_wins_ref": math.nan, "th_losses_ref": math.nan, "th_sign_p": math.nan,
            }
            if ref and algo != reference:
                w, lo, p = sign_test([r["th_total"] for r in ref], th)
                row.update(th_wins_ref=w, th_losses_ref=lo, th_sign_p=p)
            table.append(row)
    return table


def check_run_constraints(run: RunOutcome, sc: Scenario):
    world = run.result.world
    env = build_environment(world, run.result.game.topo, run.result.assoc, sc.radio)
    return check_constraints(world, run.result.game.topo, run.result.assoc, env, run.result.evaluation.energy)
