"""``pipesearch`` command line: ``bench`` and ``solve``.

Exit codes: 0 success, 1 configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from .bench import BenchmarkConfig, emit, playout_speedup, run_matrix, search_overhead
from .mcts import best_child
from .problem import HornerProblem, parse_problem
from .sched import SCHEDULERS, PipelineConfig, available_cores

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _sched_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    cores = available_cores()
    p = _Parser(prog="pipesearch", description="Pipelined parallel MCTS search and benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bench", help="run a scheduler x threads x tokens matrix")
    b.add_argument("--problem", required=True, help="horner:<path> or synthetic:b=..,d=..,seed=..")
    b.add_argument("--scheduler", type=_sched_list, default=["seq"], help="seq,treepar,pipeline")
    b.add_argument("--tokens", type=_int_list, default=[2 * cores])
    b.add_argument("--threads", type=_int_list, default=[cores])
    b.add_argument("--playouts", type=int, default=1024)
    b.add_argument("--cp", type=float, default=0.1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--repeats", type=int, default=10)
    b.add_argument("--out", default=None, help="output file; omitted means stdout")
    b.add_argument("--format", choices=("csv", "json"), default="csv")
    b.add_argument("--linear-pipeline", action="store_true", help="make every pipeline stage serial")
    b.add_argument("--target-ops", type=int, default=None, help="first-hit mode for horner problems")
    b.add_argument("--first-hit", action="store_true", help="first-hit mode; synthetic target is the optimum")
    b.add_argument("--no-warmup", action="store_true")
    b.add_argument("--fixed-seed", action="store_true", help="use --seed unchanged for every repeat")

    s = sub.add_parser("solve", help="run one configuration and report the result")
    s.add_argument("--problem", required=True)
    s.add_argument("--scheduler", choices=sorted(SCHEDULERS), default="pipeline")
    s.add_argument("--tokens", type=int, default=2 * cores)
    s.add_argument("--threads", type=int, default=cores)
    s.add_argument("--playouts", type=int, default=1024)
    s.add_argument("--cp", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--linear-pipeline", action="store_true")
    s.add_argument("--dump", action="store_true", help="print the full tree dump")
    return p


def _bench(args) -> int:
    try:
        config = BenchmarkConfig(
            problem=args.problem,
            schedulers=args.scheduler,
            tokens=args.tokens,
            threads=args.threads,
            budget=args.playouts,
            cp=args.cp,
            repeats=args.repeats,
            seed=args.seed,
            linear_pipeline=args.linear_pipeline,
            target_ops=args.target_ops,
            first_hit=args.first_hit or args.target_ops is not None,
            warmup=not args.no_warmup,
            vary_seed=not args.fixed_seed,
            out=args.out,
            format=args.format,
        )
        problem = parse_problem(config.problem)
    except OSError as exc:
        print(f"pipesearch: cannot read problem: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"pipesearch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    config.problem_obj = problem

    try:
        records = run_matrix(config)
    except ValueError as exc:
        print(f"pipesearch: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.out:
        try:
            emit(records, args.out, args.format)
        except OSError as exc:
            print(f"pipesearch: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        emit(records, sys.stdout, args.format)

    if "seq" in config.schedulers:
        print("# playout speedup", file=sys.stderr)
        for row in playout_speedup(records):
            print(
                f"#  {row.scheduler:8s} threads={row.worker_threads:<3d} tokens={row.token_limit:<4d} "
                f"speedup={row.speedup:6.2f} +/- {row.stddev:.2f}",
                file=sys.stderr,
            )
        if config.first_hit:
            print("# search overhead", file=sys.stderr)
            try:
                rows = search_overhead(records)
            except ValueError as exc:
                print(f"#  {exc}", file=sys.stderr)
                rows = []
            for row in rows:
                shown = "censored" if row.overhead is None else f"{row.overhead:6.3f}"
                print(
                    f"#  {row.scheduler:8s} threads={row.worker_threads:<3d} tokens={row.token_limit:<4d} "
                    f"overhead={shown} censored={row.censored}/{row.runs}",
                    file=sys.stderr,
                )
    return EXIT_OK


def _solve(args) -> int:
    try:
        problem = parse_problem(args.problem)
        config = PipelineConfig(
            budget=args.playouts,
            cp=args.cp,
            seed=args.seed,
            worker_threads=args.threads,
            token_limit=args.tokens,
            linear=args.linear_pipeline,
        )
    except OSError as exc:
        print(f"pipesearch: cannot read problem: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"pipesearch: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    t0 = time.perf_counter()
    result = SCHEDULERS[args.scheduler](problem.root_state(), config)
    wall = time.perf_counter() - t0
    root = result.tree.root

    print(f"scheduler   {args.scheduler} (threads={args.threads}, tokens={args.tokens})")
    print(f"playouts    {result.playouts} in {wall:.3f}s")
    print(f"best move   {result.best_move}")
    print(f"best reward {result.best_reward:.6f}")
    print(f"best path   {' '.join(map(str, result.best_history))}")
    if isinstance(problem, HornerProblem):
        names = problem.polynomial.names
        print(f"best order  {' '.join(names[v] for v in result.best_history)}")
        print(f"best ops    {problem.ops(result.best_history)} (identity order: {problem.baseline_ops})")
    print(f"tree        {len(result.tree)} nodes, root n={root.n.load()}")
    for child in root.children:
        n = child.n.load()
        if n:
            mark = "*" if child is best_child(root) else " "
            print(f"  {mark} move {child.move}: n={n} mean={child.w.load() / n / (1 << 16):.4f}")
    if args.dump:
        sys.stdout.write(result.dump())
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "bench":
        return _bench(args)
    return _solve(args)


if __name__ == "__main__":
    sys.exit(main())
