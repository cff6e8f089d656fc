"""Command line: ``uavepg run|compare|rag ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..rag_weights import (
    HashedBowEmbedder,
    KnowledgeIndex,
    build_index,
    bundled_corpus,
    bundled_queries,
    load_corpus_dir,
    precision_sweep,
    retrieve_topk,
    sweep_csv,
)
from .config import ConfigError, bundled_scenario_path
from .export import write_atomic
from .pipeline import ALGORITHMS, ExperimentSpec, PipelineError, compare_algorithms, run_pipeline


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavepg", description="UAV topology and deployment games")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", default=str(bundled_scenario_path()), help="scenario JSON file")
        sp.add_argument("--seeds", type=_ints, default=[0], help="comma-separated seeds")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--sweep-n", type=_ints, default=None, help="comma-separated UAV counts")
        sp.add_argument("--weights", choices=["config", "rag"], default="config")
        sp.add_argument("--snapshots", action="store_true", help="store per-round adjacency snapshots")

    run = sub.add_parser("run", help="run one algorithm after link pruning")
    common(run)
    run.add_argument("--algo", choices=ALGORITHMS, default="l3_ag")

    cmp_ = sub.add_parser("compare", help="paired comparison of all algorithms")
    common(cmp_)
    cmp_.add_argument("--algos", default=",".join(ALGORITHMS), help="comma-separated algorithm names")

    rag = sub.add_parser("rag", help="knowledge index tools")
    rsub = rag.add_subparsers(dest="rag_command", required=True)
    idx = rsub.add_parser("index", help="chunk and embed a corpus directory")
    idx.add_argument("--corpus", default=None, help="directory of .txt files (default: bundled corpus)")
    idx.add_argument("--block-size", type=int, default=4)
    idx.add_argument("--out", required=True)
    q = rsub.add_parser("query", help="top-k retrieval against a saved index")
    q.add_argument("--index", required=True)
    q.add_argument("--query", required=True)
    q.add_argument("--k", type=int, default=3)
    sw = rsub.add_parser("sweep", help="precision@k over block sizes")
    sw.add_argument("--corpus", default=None)
    sw.add_argument("--queries", default=None, help="JSON list of {query, relevant}")
    sw.add_argument("--block-sizes", type=_ints, default=[1, 2, 4, 8])
    sw.add_argument("--ks", type=_ints, default=[1, 3, 5])
    sw.add_argument("--out", required=True)
    return p


def _corpus(path):
    return bundled_corpus() if path is None else load_corpus_dir(path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            spec = ExperimentSpec(args.scenario, args.algo, args.seeds, args.sweep_n, args.out, args.weights,
                                  args.snapshots)
            report = run_pipeline(spec)
            for a in report.aggregates:
                print(f"{a['algorithm']} N={a['n_uavs']}: Th={a['th_total_mean']:.4g} bit/s "
                      f"E={a['e_total_mean']:.6g} J T={a['t_total_mean']:.4g} s links={a['link_count_mean']:.3g}")
        elif args.command == "compare":
            spec = ExperimentSpec(args.scenario, "l3_ag", args.seeds, args.sweep_n, args.out, args.weights,
                                  args.snapshots, algorithms=[a for a in args.algos.split(",") if a])
            table, _ = compare_algorithms(spec)
            for r in table:
                print(f"N={r['n_uavs']} {r['algorithm']:8s} Th={r['th_mean']:.4g} E={r['e_mean']:.6g} "
                      f"T={r['t_mean']:.4g}")
        elif args.rag_command == "index":
            index = build_index(_corpus(args.corpus), args.block_size, HashedBowEmbedder())
            write_atomic(args.out, index.to_json())
            print(f"{len(index.chunks)} chunks -> {args.out}")
        elif args.rag_command == "query":
            index = KnowledgeIndex.load(args.index)
            for chunk, score in retrieve_topk(index, args.query, args.k, HashedBowEmbedder(index.dimension)):
                print(f"{score:.4f}  {chunk.id}  {chunk.text[:80]}")
        elif args.rag_command == "sweep":
            queries = bundled_queries() if args.queries is None else json.loads(Path(args.queries).read_text())
            rows = precision_sweep(_corpus(args.corpus), queries, args.block_sizes, args.ks, HashedBowEmbedder())
            write_atomic(args.out, sweep_csv(rows))
            print(sweep_csv(rows), end="")
    except (ConfigError, PipelineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
