"""Command-line harness: experiment runs, counting verification, Monte
Carlo bound experiments, graph generation, and checkpoint evaluation.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import counting
from .config import ConfigError, ExperimentConfig, write_manifest
from .dag import EnumerationCapError, ProblemInstance
from .graphs import generate_ba, generate_er, write_edge_list
from .metrics import (
    MAX_EXACT_CARDINALITY,
    MAX_EXACT_TERMINALS,
    FcsConfig,
    MetricsRecord,
    exact_tv,
    fcs,
)
from .policy import SetPolicy
from .rewards import CoverageReward, RewardOracle
from .training import TrainConfig, train

CSV_HEADER = "step,phase,queries_used,loss,fcs,exact_tv,top_k_avg,num_bounds,coverage"


def _fmt(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(value)


def _record_row(r: MetricsRecord) -> str:
    return (
        f"{r.step},{r.phase},{r.queries_used},{_fmt(r.loss)},{_fmt(r.fcs)},"
        f"{_fmt(r.exact_tv)},{_fmt(r.top_k_avg)},{r.num_bounds},{r.coverage}"
    )


def _train_one(args: tuple) -> str:
    config, variant, seed, out_dir = args
    graph = config.build_graph(seed)
    instance = ProblemInstance(graph.num_vertices, config.cardinality)
    reward = CoverageReward(graph)
    train_config = TrainConfig(
        variant=variant,
        query_budget=config.query_budget,
        batch_size=config.batch_size,
        lr_policy=config.lr_policy,
        lr_log_z=config.lr_log_z,
        epsilon=config.epsilon,
        mix_buffer_fraction=config.mix_buffer_fraction,
        offline_steps=config.offline_steps,
        total_steps=config.total_steps,
        seed=seed,
        embedding_dim=config.embedding_dim,
        hidden_dim=config.hidden_dim,
        optimizer=config.optimizer,
        epsilon_reward=config.epsilon_reward,
        metrics_interval=config.metrics_interval,
        top_k=config.top_k,
    )
    run = train(train_config, instance, RewardOracle(reward, config.query_budget))
    name = f"{variant}-seed{seed}"
    csv_path = Path(out_dir) / f"{name}.csv"
    with csv_path.open("w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for record in run.records:
            fh.write(_record_row(record) + "\n")
    run.policy.save(Path(out_dir) / f"{name}.npz")
    return csv_path.name


def cmd_train(args: argparse.Namespace) -> int:
    overrides = {
        "train.query_budget": None if args.query_budget is None else str(args.query_budget),
        "train.epsilon": None if args.epsilon is None else repr(args.epsilon),
        "train.variants": args.variant,
        "run.seeds": None if args.seed is None else str(args.seed),
        "run.out": args.out,
    }
    try:
        config = ExperimentConfig.from_file(args.config, overrides)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (config, variant, seed, str(out_dir))
        for variant in config.variants
        for seed in config.seeds
    ]
    workers = int(os.environ.get("SUBO_THREADS", "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            run_files = list(pool.map(_train_one, jobs))
    else:
        run_files = [_train_one(job) for job in jobs]
    manifest = write_manifest(config, out_dir, run_files)
    print(f"wrote {len(run_files)} runs and {manifest}")
    return 0


VERIFY_HEADER = (
    "N,C,lambda_closed,lambda_oracle,alpha_closed,alpha_oracle,beta_closed,"
    "beta_oracle,phi_closed,phi_oracle,phi_alternate,edges_closed,edges_oracle,status"
)


def cmd_verify_counts(args: argparse.Namespace) -> int:
    mismatches = []
    print(VERIFY_HEADER)
    for n in range(2, args.n_max + 1):
        for c in range(1, min(args.c_max, n // 2) + 1):
            closed = counting.closed_form_stats(n, c)
            oracle = counting.oracle_pairing_stats(n, c, cap=args.cap)
            ok = (
                closed.lam == oracle.lam
                and closed.alpha == oracle.alpha
                and closed.beta == oracle.beta
                and closed.phi == oracle.phi
                and closed.edge_count == oracle.edge_count
            )
            status = "OK" if ok else "MISMATCH"
            if not ok:
                mismatches.append((n, c))
            print(
                f"{n},{c},{closed.lam},{oracle.lam},{closed.alpha},{oracle.alpha},"
                f"{closed.beta},{oracle.beta},{closed.phi},{oracle.phi},"
                f"{counting.phi_count_alternate(n, c)},{closed.edge_count},"
                f"{oracle.edge_count},{status}"
            )
    if mismatches:
        print(f"MISMATCH at {mismatches}", file=sys.stderr)
        return 1
    return 0


MC_HEADER = (
    "m,expected_Q,mc_Q,mc_Q_se,janson_lower,mc_p_positive,coverage_lower,"
    "mc_coverage,mc_coverage_se,ratio"
)


def cmd_mc(args: argparse.Namespace) -> int:
    m_list = [int(m) for m in args.m.split(",")]
    rows = [MC_HEADER]
    for m in m_list:
        expected = counting.expected_distinct_bounds(args.n, args.c, m)
        janson = counting.janson_lower_bound(args.n, args.c, m)
        cover_lower = counting.expected_coverage_lower(args.n, args.c, m)
        ratio = 0.0 if m == 0 else cover_lower / (m * args.c)
        if args.repetitions > 0:
            mc = counting.mc_bound_experiment(
                args.n, args.c, m, args.repetitions, args.seed, cap=args.cap
            )
            row = (
                f"{m},{expected!r},{mc.mean_bounds!r},{mc.se_bounds!r},{janson!r},"
                f"{mc.p_positive!r},{cover_lower!r},{mc.mean_coverage!r},"
                f"{mc.se_coverage!r},{ratio!r}"
            )
        else:
            row = f"{m},{expected!r},,,{janson!r},,{cover_lower!r},,,{ratio!r}"
        rows.append(row)
    text = "\n".join(rows)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_gen_graph(args: argparse.Namespace) -> int:
    if args.kind == "er":
        graph = generate_er(args.n, args.edge_prob, args.seed)
    else:
        graph = generate_ba(args.n, args.attach_count, args.seed)
    write_edge_list(graph, args.out)
    print(f"wrote {graph.num_vertices} vertices, {graph.num_edges} edges to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        config = ExperimentConfig.from_file(args.config)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    policy = SetPolicy.load(args.checkpoint)
    graph = config.build_graph(args.seed)
    if graph.num_vertices != policy.num_elements:
        print(
            f"error: checkpoint has {policy.num_elements} elements but the task "
            f"graph has {graph.num_vertices}",
            file=sys.stderr,
        )
        return 2
    instance = ProblemInstance(graph.num_vertices, config.cardinality)
    reward = CoverageReward(graph)
    fcs_value = fcs(policy, instance, reward, FcsConfig(), args.seed)
    print(f"fcs={fcs_value!r}")
    if (
        math.comb(instance.num_elements, instance.cardinality) <= MAX_EXACT_TERMINALS
        and instance.cardinality <= MAX_EXACT_CARDINALITY
    ):
        print(f"exact_tv={exact_tv(policy, instance, reward)!r}")
    else:
        print("exact_tv=")
    print(f"log_z={policy.log_z!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowbound",
        description="Train and verify coverage-task set samplers with bound-augmented signals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the configured experiments")
    p_train.add_argument("--config", required=True, help="flat key=value config file")
    p_train.add_argument("--seed", type=int, default=None, help="restrict to one seed")
    p_train.add_argument("--out", default=None, help="output directory override")
    p_train.add_argument("--query-budget", type=int, default=None)
    p_train.add_argument("--variant", default=None, help="restrict to one variant")
    p_train.add_argument("--epsilon", type=float, default=None)
    p_train.set_defaults(func=cmd_train)

    p_verify = sub.add_parser("verify-counts", help="closed forms vs exhaustive oracle")
    p_verify.add_argument("--n-max", type=int, default=8)
    p_verify.add_argument("--c-max", type=int, default=4)
    p_verify.add_argument("--cap", type=int, default=counting.ORACLE_TRAJECTORY_CAP)
    p_verify.set_defaults(func=cmd_verify_counts)

    p_mc = sub.add_parser("mc", help="Monte Carlo bound-emergence experiment")
    p_mc.add_argument("--n", type=int, required=True)
    p_mc.add_argument("--c", type=int, required=True)
    p_mc.add_argument("--m", required=True, help="comma-separated trajectory counts")
    p_mc.add_argument("--repetitions", type=int, default=2000, help="0 skips the MC columns")
    p_mc.add_argument("--seed", type=int, default=0)
    p_mc.add_argument("--cap", type=int, default=counting.ORACLE_TRAJECTORY_CAP)
    p_mc.add_argument("--out", default=None, help="also write the CSV here")
    p_mc.set_defaults(func=cmd_mc)

    p_gen = sub.add_parser("gen-graph", help="write a random graph as an edge list")
    p_gen.add_argument("--kind", choices=("er", "ba"), required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--edge-prob", type=float, default=0.005)
    p_gen.add_argument("--attach-count", type=int, default=3)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen_graph)

    p_eval = sub.add_parser("eval", help="recompute metrics from a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--seed", type=int, default=0, help="seed of the run being evaluated")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, EnumerationCapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
