"""Benchmark matrix runner and the two parallel-MCTS metrics.

Playout speedup is mean sequential wall time over mean parallel wall time
at a fixed playout budget.  Search overhead is the ratio of playouts a
parallel run needs to first reach a target, over what the sequential run
needs, minus one.
"""

from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from .mcts import SearchResult
from .problem import HornerProblem, SyntheticProblem, mix64, parse_problem
from .sched import SCHEDULERS, PipelineConfig

__all__ = [
    "RunRecord",
    "BenchmarkConfig",
    "SpeedupRow",
    "OverheadRow",
    "MissingBaselineError",
    "cells",
    "run_matrix",
    "playout_speedup",
    "search_overhead",
    "emit",
    "read_records",
]

log = logging.getLogger(__name__)


@dataclass
class RunRecord:
    scheduler: str
    worker_threads: int
    token_limit: int
    budget: int
    wall_time: float
    best_move: str
    best_ops: int | None
    seed: int
    repeat_index: int
    problem: str = ""
    playouts: int = 0
    playouts_to_target: int | None = None
    best_reward: float = 0.0

    def __post_init__(self):
        if self.wall_time <= 0:
            raise ValueError("wall_time must be positive")


_INT_FIELDS = {"worker_threads", "token_limit", "budget", "seed", "repeat_index", "playouts"}
_OPT_INT_FIELDS = {"best_ops", "playouts_to_target"}
_FLOAT_FIELDS = {"wall_time", "best_reward"}
FIELD_NAMES = tuple(f.name for f in fields(RunRecord))


@dataclass
class BenchmarkConfig:
    problem: str
    schedulers: Sequence[str] = ("seq",)
    tokens: Sequence[int] = (1,)
    threads: Sequence[int] = (1,)
    budget: int = 1024
    cp: float = 0.1
    repeats: int = 10
    seed: int = 0
    linear_pipeline: bool = False
    target_ops: int | None = None
    first_hit: bool = False
    warmup: bool = True
    vary_seed: bool = True  # False: every repeat reuses ``seed`` as is
    out: str | None = None
    format: str = "csv"
    # an already-built problem object; overrides parsing ``problem``
    problem_obj: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        bad = [s for s in self.schedulers if s not in SCHEDULERS]
        if bad:
            raise ValueError(f"unknown scheduler(s) {bad}; choose from {sorted(SCHEDULERS)}")
        if self.format not in ("csv", "json"):
            raise ValueError(f"unknown format {self.format!r}")
        if any(t < 1 for t in self.tokens) or any(t < 1 for t in self.threads):
            raise ValueError("token and thread counts must be at least 1")


class MissingBaselineError(ValueError):
    pass


def cells(config: BenchmarkConfig) -> list[tuple[str, int, int]]:
    """(scheduler, worker_threads, token_limit) combinations to run.

    The sequential scheduler has a single cell.  Tree parallelization runs
    one cell per thread count, recorded with ``token_limit`` equal to the
    thread count since each thread carries one path.  The pipeline runs the
    threads x tokens cross product.
    """
    out = []
    for sched in config.schedulers:
        if sched == "seq":
            out.append((sched, 1, 1))
        elif sched == "treepar":
            out.extend((sched, th, th) for th in config.threads)
        else:
            out.extend((sched, th, tok) for th in config.threads for tok in config.tokens)
    return out


def repeat_seed(seed: int, repeat: int) -> int:
    """Search seed of one repeat; shared by every cell so baselines line up."""
    return mix64((seed << 20) ^ repeat) & 0x7FFFFFFF


def _target_reward(problem, config: BenchmarkConfig) -> float | None:
    if config.target_ops is not None:
        if not isinstance(problem, HornerProblem):
            raise ValueError("--target-ops only applies to horner problems")
        return problem.reward(config.target_ops)
    if config.first_hit:
        if isinstance(problem, SyntheticProblem):
            return problem.optimum()[1]
        raise ValueError("first-hit mode on a horner problem needs a target op count")
    return None


def _record(
    sched: str,
    threads: int,
    tokens: int,
    config: BenchmarkConfig,
    problem,
    result: SearchResult,
    wall: float,
    seed: int,
    repeat: int,
) -> RunRecord:
    best_ops = None
    if isinstance(problem, HornerProblem) and result.best_history:
        best_ops = problem.ops(result.best_history)
    return RunRecord(
        scheduler=sched,
        worker_threads=threads,
        token_limit=tokens,
        budget=config.budget,
        wall_time=wall,
        best_move="" if result.best_move is None else str(result.best_move),
        best_ops=best_ops,
        seed=seed,
        repeat_index=repeat,
        problem=config.problem,
        playouts=result.playouts,
        playouts_to_target=result.playouts_to_target,
        best_reward=result.best_reward,
    )


def run_matrix(config: BenchmarkConfig, progress=None) -> list[RunRecord]:
    """Run every cell ``repeats`` times, one cell at a time."""
    problem = config.problem_obj if config.problem_obj is not None else parse_problem(config.problem)
    target = _target_reward(problem, config)
    root = problem.root_state()
    records = []
    for sched, threads, tokens in cells(config):
        run = SCHEDULERS[sched]

        def make(seed: int) -> PipelineConfig:
            return PipelineConfig(
                budget=config.budget,
                cp=config.cp,
                seed=seed,
                worker_threads=threads,
                token_limit=tokens,
                linear=config.linear_pipeline,
                target_reward=target,
            )

        if config.warmup:
            run(root, make(repeat_seed(config.seed, -1)))
        for rep in range(config.repeats):
            seed = repeat_seed(config.seed, rep) if config.vary_seed else config.seed
            pc = make(seed)
            t0 = time.perf_counter()
            result = run(root, pc)
            wall = time.perf_counter() - t0
            rec = _record(sched, threads, tokens, config, problem, result, wall, seed, rep)
            records.append(rec)
            log.debug("%s", rec)
            if progress is not None:
                progress(rec)
    return records


# --------------------------------------------------------------------------
# metrics

@dataclass
class SpeedupRow:
    scheduler: str
    worker_threads: int
    token_limit: int
    speedup: float
    stddev: float
    sequential_time: float
    parallel_time: float
    repeats: int


@dataclass
class OverheadRow:
    scheduler: str
    worker_threads: int
    token_limit: int
    overhead: float | None
    sequential_playouts: float
    parallel_playouts: float | None
    censored: int
    runs: int


def _groups(records: Iterable[RunRecord]) -> dict[tuple, list[RunRecord]]:
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        key = (r.problem, r.budget, r.scheduler, r.worker_threads, r.token_limit)
        groups.setdefault(key, []).append(r)
    return groups


def _baseline(groups, problem: str, budget: int, baseline: str) -> list[RunRecord]:
    for (prob, bud, sched, _, _), recs in groups.items():
        if prob == problem and bud == budget and sched == baseline:
            return recs
    raise MissingBaselineError(f"no {baseline!r} records for problem {problem!r}, budget {budget}")


def playout_speedup(records: Sequence[RunRecord], baseline: str = "seq") -> list[SpeedupRow]:
    """Mean baseline wall time over mean wall time, for every configuration.

    ``stddev`` is the sample standard deviation of the per-repeat ratios
    (baseline mean over that repeat's time); zero with a single repeat.
    """
    groups = _groups(records)
    rows = []
    for (prob, bud, sched, th, tok), recs in groups.items():
        base = _baseline(groups, prob, bud, baseline)
        t_seq = statistics.fmean(r.wall_time for r in base)
        t_par = statistics.fmean(r.wall_time for r in recs)
        ratios = [t_seq / r.wall_time for r in recs]
        sd = statistics.stdev(ratios) if len(ratios) > 1 else 0.0
        rows.append(SpeedupRow(sched, th, tok, t_seq / t_par, sd, t_seq, t_par, len(recs)))
    if not rows:
        raise MissingBaselineError("no records")
    return rows


def search_overhead(records: Sequence[RunRecord], baseline: str = "seq") -> list[OverheadRow]:
    """Playouts-to-target of each configuration relative to the baseline, minus one.

    Runs that never reached the target are censored and left out of the
    means.  A configuration whose runs are all censored reports ``None``.
    """
    groups = _groups(records)
    rows = []
    for (prob, bud, sched, th, tok), recs in groups.items():
        base = [r.playouts_to_target for r in _baseline(groups, prob, bud, baseline)]
        base = [p for p in base if p is not None]
        if not base:
            raise MissingBaselineError("every baseline run is censored")
        hits = [r.playouts_to_target for r in recs if r.playouts_to_target is not None]
        seq_mean = statistics.fmean(base)
        if hits:
            par_mean = statistics.fmean(hits)
            overhead = par_mean / seq_mean - 1
        else:
            par_mean, overhead = None, None
        rows.append(OverheadRow(sched, th, tok, overhead, seq_mean, par_mean, len(recs) - len(hits), len(recs)))
    if all(r.overhead is None for r in rows):
        raise ValueError("all runs censored")
    return rows


# --------------------------------------------------------------------------
# serialization

def _to_row(r: RunRecord) -> dict[str, str]:
    row = {}
    for name, value in asdict(r).items():
        if value is None:
            row[name] = ""
        elif isinstance(value, float):
            row[name] = repr(value)
        else:
            row[name] = str(value)
    return row


def _from_row(row: dict[str, str]) -> RunRecord:
    kw = {}
    for name in FIELD_NAMES:
        raw = row[name]
        if name in _INT_FIELDS:
            kw[name] = int(raw)
        elif name in _OPT_INT_FIELDS:
            kw[name] = int(raw) if raw != "" else None
        elif name in _FLOAT_FIELDS:
            kw[name] = float(raw)
        else:
            kw[name] = raw
    return RunRecord(**kw)


def _write(records: Sequence[RunRecord], fh, format: str) -> None:
    if format == "csv":
        writer = csv.DictWriter(fh, fieldnames=FIELD_NAMES, lineterminator="\n")
        writer.writeheader()
        for r in records:
            writer.writerow(_to_row(r))
    elif format == "json":
        fh.write(json.dumps([asdict(r) for r in records], indent=1) + "\n")
    else:
        raise ValueError(f"unknown format {format!r}")


def emit(records: Sequence[RunRecord], out, format: str = "csv"):
    """Write records as CSV (header = field names) or as a JSON array.

    ``out`` is a path or an open text stream.
    """
    if format not in ("csv", "json"):
        raise ValueError(f"unknown format {format!r}")
    if hasattr(out, "write"):
        _write(records, out, format)
        return out
    path = Path(out)
    with path.open("w", newline="", encoding="utf-8") as fh:
        _write(records, fh, format)
    return path


def read_records(path: str | Path, format: str | None = None) -> list[RunRecord]:
    path = Path(path)
    if format is None:
        format = "json" if path.suffix == ".json" else "csv"
    if format == "csv":
        with path.open(newline="", encoding="utf-8") as fh:
            return [_from_row(row) for row in csv.DictReader(fh)]
    return [RunRecord(**obj) for obj in json.loads(path.read_text(encoding="utf-8"))]
