"""Result files: convergence CSV, adjacency snapshots, deployment and summary JSON."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

CONVERGENCE_HEADER = ["round", "player", "delta_utility", "delta_potential", "potential", "link_count"]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def jsonable(obj):
    """Plain-JSON view: numpy to lists, NaN/inf to null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_atomic(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def convergence_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERGENCE_HEADER)
    for a in trace.audits:
        w.writerow([a.round, a.player, fmt(a.delta_utility), fmt(a.delta_potential), fmt(a.potential), a.link_count])
    return buf.getvalue()


def rows_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else fmt(r[c]) if r[c] is not None else "" for c in columns])
    return buf.getvalue()


def trace_summary(trace, n_players: int) -> dict:
    return {
        "rounds_to_converge": trace.rounds,
        "converged": trace.converged,
        "correlation": trace.correlation(),
        "r2": trace.r2(),
        "correlation_per_uav": trace.per_player_correlation(n_players),
        "max_residual_ratio": trace.max_residual_ratio(),
        "initial_potential": trace.initial_potential,
        "final_potential": trace.potential[-1] if trace.potential else trace.initial_potential,
        "moves": int(sum(1 for a in trace.audits if a.player >= 0)),
        "notes": list(trace.notes),
    }


def deployment_doc(result, metrics: dict) -> dict:
    st = result.state
    return {
        "uavs": [
            {"id": i, "position": st.pos[i].tolist(), "power": float(st.power[i]),
             "served": np.flatnonzero(st.assoc[i]).tolist()}
            for i in range(len(st.power))
        ],
        "association": st.assoc.tolist(),
        "adjacency": result.game.topo.adj.tolist(),
        "totals": {k: metrics[k] for k in ("th_total", "e_total", "t_total", "objective", "link_count")},
    }


def export_traces(run, out_dir) -> list[Path]:
    """Write one run's files; returns the written paths."""
    out = Path(out_dir)
    paths = [
        write_atomic(out / "convergence_p1.csv", convergence_csv(run.p1_trace)),
        write_atomic(out / "convergence_p2.csv", convergence_csv(run.result.trace)),
        write_atomic(out / "deployment.json", dumps(deployment_doc(run.result, run.metrics))),
    ]
    if run.p1_trace.snapshots:
        snaps = [{"round": k + 1, "adjacency": s.tolist()} for k, s in enumerate(run.p1_trace.snapshots)]
        paths.append(write_atomic(out / "snapshots.json", dumps(snaps)))
    summary = {
        "metrics": run.metrics,
        "p1": trace_summary(run.p1_trace, run.n_uavs),
        "p2": trace_summary(run.result.trace, run.n_uavs),
    }
    paths.append(write_atomic(out / "summary.json", dumps(summary)))
    return paths
