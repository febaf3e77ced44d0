"""Command-line front door: files in, files out, exit codes for scripts.

Exit status is 0 on success, 1 on any validation problem (bad flags, bad
files, bad parameter ranges), and 2 when a constraint contradiction is
detected. All outputs are written atomically.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import fileio
from .clustering import DbscanParams, dbscan, finch, select_view, to_distance
from .errors import ActiveReidError, ContradictionError
from .evaluation import RetrievalProblem, evaluate_problem
from .geometry import build_similarity
from .model import ConstraintStore, RunConfig
from .pipeline import (
    BatchDrawer,
    SyntheticSpec,
    generate_synthetic,
    initial_state,
    prepare_cycle,
    run_loop,
)

CONFIG_FLAGS = {
    "epsilon": float,
    "k_max": int,
    "s_min": float,
    "budget_fraction_per_cycle": float,
    "num_cycles": int,
    "dbscan_eps": float,
    "dbscan_min_samples": int,
    "knn_k": int,
    "finch_level": int,
    "sim_mode": str,
    "us_region_weighting": str,
    "us_pair_weighting": str,
    "sampling_strategy": str,
    "linkage": str,
    "base_view": str,
    "refresh_mode": str,
    "refresh_path": str,
    "refresh_timeout_s": float,
    "materialize_threshold": int,
    "threads": int,
}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this tool reserves 2 for contradictions."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file with RunConfig keys")
    parser.add_argument("--seed", type=int, help="seed for all randomness")
    parser.add_argument("--beta", type=float, nargs=3, metavar=("B1", "B2", "B3"))
    for name, typ in CONFIG_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, dest=name)


def _build_config(args) -> RunConfig:
    config = RunConfig()
    seeded = args.seed is not None
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            payload = json.load(fh)
        seeded = seeded or "rng_seed" in payload
        config = RunConfig.from_dict(payload)
    overrides = {name: getattr(args, name) for name in CONFIG_FLAGS if getattr(args, name) is not None}
    if args.beta is not None:
        overrides["beta"] = tuple(args.beta)
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if not seeded:
        drawn = int(np.random.SeedSequence().entropy % (2**63))
        print(f"seed: {drawn}", file=sys.stderr)
        overrides["rng_seed"] = drawn
    if overrides:
        config = config.updated(**overrides)
    return config.validate()


def _load_embeddings(path, manifest):
    return fileio.read_embeddings(path, manifest if manifest else path + ".json")


def cmd_synth(args) -> int:
    seed = args.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**63))
        print(f"seed: {seed}", file=sys.stderr)
    spec = SyntheticSpec(
        num_identities=args.num_identities,
        samples_per_identity=args.samples_per_identity,
        dim=args.dim,
        within_spread=args.within_spread,
        between_spread=args.between_spread,
        rng_seed=seed,
    )
    emb = generate_synthetic(spec)
    manifest = args.manifest or args.out + ".json"
    fileio.write_embeddings(args.out, manifest, emb)
    print(f"wrote {emb.n} x {emb.dim} embeddings to {args.out}")
    return 0


def cmd_cluster(args) -> int:
    config = _build_config(args)
    emb = _load_embeddings(args.embeddings, args.manifest)
    if args.method == "dbscan":
        sim = build_similarity(emb, config.sim_mode, config.knn_k, config.materialize_threshold)
        part = dbscan(to_distance(sim), DbscanParams(config.dbscan_eps, config.dbscan_min_samples))
    else:
        part = select_view(finch(emb), config.finch_level)
    fileio.write_partition(args.out, part, emb.ids)
    print(f"{part.num_clusters} clusters -> {args.out}")
    return 0


def cmd_sample(args) -> int:
    config = _build_config(args)
    emb = _load_embeddings(args.embeddings, args.manifest)
    state = initial_state(emb)
    if args.constraints:
        state.store = fileio.load_store(args.constraints, emb.ids)
    plan = prepare_cycle(state, config)
    drawer = BatchDrawer(plan.entries, plan.probs, plan.rng)
    rows = []
    while len(rows) < plan.budget:
        item = drawer.draw(state.store)
        if item is None:
            break
        pair, origin, prob = item
        rows.append(
            {
                "a": emb.ids[pair.a],
                "b": emb.ids[pair.b],
                "origin": origin,
                "probability": prob,
                "cycle": args.cycle,
            }
        )
    fileio.write_jsonl(args.out, rows)
    if args.pool_audit:
        from .ambiguity import pool_records

        fileio.write_jsonl(args.pool_audit, pool_records(plan.pool_os + plan.pool_us, emb.ids))
    print(f"{len(rows)} queries (budget {plan.budget}) -> {args.out}")
    return 0


def cmd_refine(args) -> int:
    from .refinement import refine

    config = _build_config(args)
    emb = _load_embeddings(args.embeddings, args.manifest)
    part = fileio.read_partition(args.partition, emb.ids)
    store = fileio.load_store(args.constraints, emb.ids)
    refined = refine(part, store, emb, config.linkage)
    fileio.write_partition(args.out, refined, emb.ids)
    print(f"{part.num_clusters} -> {refined.num_clusters} clusters, all constraints satisfied")
    return 0


def cmd_evaluate(args) -> int:
    gallery = _load_embeddings(args.gallery, args.gallery_manifest)
    query = _load_embeddings(args.query, args.query_manifest)
    report = evaluate_problem(RetrievalProblem(gallery, query))
    fileio.atomic_write_text(args.out, report.to_json() + "\n")
    print(f"map={report.map:.4f} minp={report.minp:.4f} -> {args.out}")
    return 0


def cmd_loop(args) -> int:
    config = _build_config(args)
    emb = _load_embeddings(args.embeddings, args.manifest)
    state = run_loop(emb, config, run_dir=args.run_dir)
    used = state.budget_used_pairs
    allotted = state.budget_allotted_pairs
    line = f"{config.num_cycles} cycles, budget used {used}/{allotted}"
    if state.history and "ari" in state.history[-1]:
        line += f", final ari {state.history[-1]['ari']:.4f}"
    print(line + f" -> {args.run_dir}")
    return 0


def cmd_serve(args) -> int:
    from .service import AnnotationSession, serve

    config = _build_config(args)
    emb = _load_embeddings(args.embeddings, args.manifest)
    session = AnnotationSession(emb, config, run_dir=args.run_dir)
    print(f"serving on http://{args.host}:{args.port}/ (run dir: {args.run_dir})")
    serve(session, args.host, args.port, static_dir=args.ui_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="activereid", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic identity-blob embeddings")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.add_argument("--num-identities", type=int, required=True)
    p.add_argument("--samples-per-identity", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--within-spread", type=float, required=True)
    p.add_argument("--between-spread", type=float, required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cluster", help="cluster embeddings with dbscan or finch")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--manifest")
    p.add_argument("--method", choices=("dbscan", "finch"), required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sample", help="mine ambiguity pools and draw a query batch")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--manifest")
    p.add_argument("--constraints", help="existing constraints JSONL to respect")
    p.add_argument("--out", required=True)
    p.add_argument("--pool-audit", help="write the candidate pools as JSONL")
    p.add_argument("--cycle", type=int, default=0)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("refine", help="refine a partition against constraints")
    p.add_argument("--partition", required=True)
    p.add_argument("--constraints", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="retrieval metrics for a gallery/query split")
    p.add_argument("--gallery", required=True)
    p.add_argument("--gallery-manifest")
    p.add_argument("--query", required=True)
    p.add_argument("--query-manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("loop", help="run the full active-learning loop")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--manifest")
    p.add_argument("--run-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("serve", help="serve the human annotation API and UI")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--manifest")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--ui-dir", help="directory with the built UI bundle")
    _add_config_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ContradictionError as exc:
        print(f"contradiction: {exc}", file=sys.stderr)
        return 2
    except (ActiveReidError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
