"""Execution backends for the MCTS stage functions.

``run_sequential``
    One token, one thread.
``run_tree_parallel``
    Worker threads each run whole iterations against the shared tree.
``run_pipeline``
    A five-stage pipeline Select -> Expand -> RandomSimulation ->
    Evaluation -> Backup.  Select and Backup are serial in-order stages;
    the middle three are parallel.  At most ``token_limit`` tokens are in
    flight, recycled through a circular pool.

The pipeline uses bind-to-item scheduling: a worker that issues a token
carries it through consecutive stages.  At a serial stage whose turn has
not come the worker parks the token at the stage gate and goes looking for
other work; whoever releases the gate later hands the parked token to the
ready queue.
"""

from __future__ import annotations

import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .atomics import AtomicInt
from .mcts import (
    BestTracker,
    SearchBudget,
    SearchResult,
    Token,
    backup,
    evaluation,
    expand,
    finish,
    random_simulation,
    select,
    uct_search,
)
from .problem import SearchState
from .tree import Tree

__all__ = [
    "SELECT",
    "EXPAND",
    "RANDOM_SIMULATION",
    "EVALUATION",
    "BACKUP",
    "STAGE_NAMES",
    "SERIAL_IN_ORDER",
    "PARALLEL",
    "PipelineStalled",
    "PipelineConfig",
    "TokenPool",
    "Pipeline",
    "available_cores",
    "run_sequential",
    "run_tree_parallel",
    "run_pipeline",
    "SCHEDULERS",
]

SELECT, EXPAND, RANDOM_SIMULATION, EVALUATION, BACKUP = range(5)
STAGE_NAMES = ("select", "expand", "random_simulation", "evaluation", "backup")
SERIAL_IN_ORDER = "serial_in_order"
PARALLEL = "parallel"


class PipelineStalled(RuntimeError):
    """Drain timed out; some stage never finished."""


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


@dataclass
class PipelineConfig:
    budget: SearchBudget | int
    cp: float = 0.1
    seed: int = 0
    worker_threads: int = field(default_factory=available_cores)
    token_limit: int = field(default_factory=lambda: 2 * available_cores())
    linear: bool = False  # every stage serial in-order
    target_reward: float | None = None  # stop once a playout reaches this reward
    drain_timeout: float | None = None

    def __post_init__(self):
        if isinstance(self.budget, int):
            self.budget = SearchBudget(self.budget)
        if self.token_limit < 1:
            raise ValueError("token_limit must be at least 1")
        if self.worker_threads < 1:
            raise ValueError("worker_threads must be at least 1")


class Probe(Protocol):
    def enter(self, stage: int, token: Token) -> None: ...

    def exit(self, stage: int, token: Token) -> None: ...


class TokenPool:
    """Fixed ring of tokens; slot ``k % size`` serves the k-th issued path."""

    def __init__(self, size: int):
        self.slots = [Token(i) for i in range(size)]
        self.cursor = 0

    def next(self) -> Token:
        t = self.slots[self.cursor]
        self.cursor = (self.cursor + 1) % len(self.slots)
        return t

    def __len__(self) -> int:
        return len(self.slots)


class _Gate:
    __slots__ = ("next", "busy", "parked")

    def __init__(self):
        self.next = 0
        self.busy = False
        self.parked: dict[int, Token] = {}


class Pipeline:
    """One pipelined search.  ``start`` launches the workers, ``drain`` waits for them."""

    def __init__(self, root_state: SearchState, config: PipelineConfig, probe: Probe | None = None):
        if root_state.is_terminal():
            raise ValueError("root state is terminal; nothing to search")
        self.root_state = root_state
        self.config = config
        self.probe = probe
        self.tree = Tree()
        self.tracker = BestTracker(config.target_reward)
        self.pool = TokenPool(config.token_limit)
        middle = SERIAL_IN_ORDER if config.linear else PARALLEL
        self.kinds = (SERIAL_IN_ORDER, middle, middle, middle, SERIAL_IN_ORDER)
        self._stages: tuple[Callable[[Token], object], ...] = (
            lambda t: select(t, config.cp),
            expand,
            random_simulation,
            evaluation,
            self._backup,
        )
        self._cv = threading.Condition()
        self._gates = {s: _Gate() for s in range(1, 5) if self.kinds[s] == SERIAL_IN_ORDER}
        self._ready: deque[tuple[int, Token]] = deque()
        self._issued = 0
        self._completed = 0
        self._select_busy = False
        self._stopped = False
        self._error: BaseException | None = None
        self._workers: list[threading.Thread] = []
        self._drained = False

    @property
    def issued(self) -> int:
        return self._issued

    @property
    def completed(self) -> int:
        return self._completed

    def in_flight(self) -> int:
        with self._cv:
            return self._issued - self._completed

    # -- control -----------------------------------------------------------

    def start(self) -> "Pipeline":
        if self._workers:
            raise RuntimeError("pipeline already started")
        for i in range(self.config.worker_threads):
            th = threading.Thread(target=self._worker, name=f"pipeline-{i}", daemon=True)
            self._workers.append(th)
            th.start()
        return self

    def stop(self) -> None:
        """Select issues no further tokens; tokens already in flight still finish."""
        with self._cv:
            self._stopped = True
            self._cv.notify_all()

    def drain(self, timeout: float | None = None) -> None:
        """Wait until every in-flight token has been backed up and workers exit."""
        if self._drained:
            return
        if timeout is None:
            timeout = self.config.drain_timeout
        deadline = None if timeout is None else time.monotonic() + timeout
        for th in self._workers:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            th.join(remaining)
            if th.is_alive():
                raise PipelineStalled(
                    f"pipeline did not drain within {timeout}s "
                    f"({self._issued - self._completed} tokens in flight)"
                )
        self._drained = True
        if self._error is not None:
            raise self._error

    def run(self) -> SearchResult:
        self.start()
        self.drain()
        return self.result()

    def result(self) -> SearchResult:
        return finish(self.tree, self.tracker)

    # -- workers -----------------------------------------------------------

    def _backup(self, t: Token) -> None:
        backup(t)
        if self.tracker.record(t):
            self._stopped = True

    def _can_issue(self) -> bool:
        return (
            not self._stopped
            and not self._select_busy
            and self._issued < self.config.budget.max_playouts
            and self._issued - self._completed < len(self.pool)
        )

    def _finished(self) -> bool:
        no_more = self._stopped or self._issued >= self.config.budget.max_playouts
        return no_more and self._issued == self._completed

    def _worker(self) -> None:
        cv = self._cv
        while True:
            with cv:
                while True:
                    if self._error is not None:
                        return
                    if self._ready:
                        stage, t = self._ready.popleft()
                        break
                    if self._can_issue():
                        self._select_busy = True
                        t = self.pool.next()
                        t.reset(self.tree.root, self.root_state, self._issued, self.config.seed)
                        self._issued += 1
                        stage = SELECT
                        break
                    if self._finished():
                        cv.notify_all()
                        return
                    cv.wait()
            try:
                self._carry(stage, t)
            except BaseException as exc:
                with cv:
                    if self._error is None:
                        self._error = exc
                    self._stopped = True
                    cv.notify_all()
                return

    def _carry(self, stage: int, t: Token) -> None:
        """Run ``t`` from ``stage`` onward until it finishes or parks at a gate."""
        kinds = self.kinds
        probe = self.probe
        cv = self._cv
        while True:
            if probe is not None:
                probe.enter(stage, t)
            self._stages[stage](t)
            if probe is not None:
                probe.exit(stage, t)
            with cv:
                if stage == SELECT:
                    self._select_busy = False
                    cv.notify()
                elif kinds[stage] == SERIAL_IN_ORDER:
                    gate = self._gates[stage]
                    gate.next += 1
                    gate.busy = False
                    waiting = gate.parked.pop(gate.next, None)
                    if waiting is not None:
                        gate.busy = True
                        self._ready.append((stage, waiting))
                        cv.notify()
                if stage == BACKUP:
                    self._completed += 1
                    cv.notify_all()
                    return
                stage += 1
                if kinds[stage] == SERIAL_IN_ORDER:
                    gate = self._gates[stage]
                    if gate.busy or gate.next != t.ordinal:
                        gate.parked[t.ordinal] = t
                        return
                    gate.busy = True


# --------------------------------------------------------------------------

def run_sequential(root_state: SearchState, config: PipelineConfig) -> SearchResult:
    return uct_search(
        root_state, config.budget, config.cp, config.seed, target_reward=config.target_reward
    )


def run_tree_parallel(root_state: SearchState, config: PipelineConfig) -> SearchResult:
    """``worker_threads`` threads each loop over full iterations on one shared tree."""
    if root_state.is_terminal():
        raise ValueError("root state is terminal; nothing to search")
    tree = Tree()
    tracker = BestTracker(config.target_reward)
    claimed = AtomicInt(0)
    stop = threading.Event()
    errors: list[BaseException] = []
    budget = config.budget.max_playouts
    cp, seed = config.cp, config.seed

    def work(tid: int) -> None:
        t = Token(tid)
        try:
            while not stop.is_set():
                ordinal = claimed.fetch_add(1)
                if ordinal >= budget:
                    return
                t.reset(tree.root, root_state, ordinal, seed)
                select(t, cp)
                expand(t)
                evaluation(random_simulation(t))
                backup(t)
                if tracker.record(t):
                    stop.set()
        except BaseException as exc:
            errors.append(exc)
            stop.set()

    threads = [
        threading.Thread(target=work, args=(i,), name=f"treepar-{i}", daemon=True)
        for i in range(config.worker_threads)
    ]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    return finish(tree, tracker)


def run_pipeline(
    root_state: SearchState, config: PipelineConfig, probe: Probe | None = None
) -> SearchResult:
    return Pipeline(root_state, config, probe).run()


SCHEDULERS: dict[str, Callable[[SearchState, PipelineConfig], SearchResult]] = {
    "seq": run_sequential,
    "treepar": run_tree_parallel,
    "pipeline": run_pipeline,
}
