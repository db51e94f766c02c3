import threading
import time

import pytest

from pipesearch.mcts import uct_search
from pipesearch.problem import SyntheticProblem
from pipesearch.sched import (
    BACKUP,
    EVALUATION,
    SELECT,
    Pipeline,
    PipelineConfig,
    PipelineStalled,
    run_pipeline,
    run_sequential,
    run_tree_parallel,
)


class Recorder:
    """Probe that checks stage exclusivity and the in-flight bound."""

    def __init__(self, pipeline_ref=None, serial=(SELECT, BACKUP)):
        self.lock = threading.Lock()
        self.active = {s: 0 for s in range(5)}
        self.peak = {s: 0 for s in range(5)}
        self.serial = serial
        self.order = {s: [] for s in range(5)}
        self.violations = []
        self.pipeline = pipeline_ref
        self.max_in_flight = 0

    def enter(self, stage, t):
        with self.lock:
            self.active[stage] += 1
            self.peak[stage] = max(self.peak[stage], self.active[stage])
            if stage in self.serial and self.active[stage] > 1:
                self.violations.append((stage, t.ordinal))
            self.order[stage].append(t.ordinal)
            if self.pipeline is not None:
                p = self.pipeline
                self.max_in_flight = max(self.max_in_flight, p.issued - p.completed)
        time.sleep(0)  # invite a switch while inside the stage

    def exit(self, stage, t):
        with self.lock:
            self.active[stage] -= 1


@pytest.fixture
def problem():
    return SyntheticProblem(3, 5, seed=4)


def test_sequential_delegates(problem):
    config = PipelineConfig(budget=200, cp=0.5, seed=3, worker_threads=1, token_limit=1)
    a = run_sequential(problem.root_state(), config)
    b = uct_search(problem.root_state(), 200, 0.5, 3)
    assert a.dump() == b.dump()


def test_tree_parallel_conservation(problem, fast_switching):
    config = PipelineConfig(budget=10000, cp=0.5, seed=1, worker_threads=8, token_limit=8)
    result = run_tree_parallel(problem.root_state(), config)
    assert result.tree.root.n.load() == 10000
    assert result.playouts == 10000


@pytest.mark.parametrize("workers", [1, 4])
def test_single_token_pipeline_matches_sequential(problem, workers):
    config = PipelineConfig(budget=300, cp=0.5, seed=9, worker_threads=workers, token_limit=1)
    piped = run_pipeline(problem.root_state(), config)
    serial = uct_search(problem.root_state(), 300, 0.5, 9)
    assert piped.dump() == serial.dump()


@pytest.mark.parametrize("workers,tokens", [(1, 4), (4, 4), (8, 16), (3, 2)])
def test_pipeline_conservation(problem, workers, tokens, fast_switching):
    config = PipelineConfig(budget=2000, cp=0.5, seed=2, worker_threads=workers, token_limit=tokens)
    result = run_pipeline(problem.root_state(), config)
    assert result.tree.root.n.load() == 2000
    assert result.playouts == 2000


def test_serial_stages_exclusive_and_in_order(problem, fast_switching):
    config = PipelineConfig(budget=600, cp=0.5, seed=2, worker_threads=6, token_limit=5)
    pipe = Pipeline(problem.root_state(), config)
    rec = Recorder(pipe)
    pipe.probe = rec
    pipe.run()
    assert rec.violations == []
    assert rec.peak[SELECT] == 1 and rec.peak[BACKUP] == 1
    assert rec.order[SELECT] == list(range(600))
    assert rec.order[BACKUP] == list(range(600))
    assert rec.max_in_flight <= 5


def test_parallel_stages_overlap(problem):
    # a slow evaluator must see several tokens at once
    slow = SyntheticProblem(3, 5, seed=4, work_ms=2.0, work="sleep")
    config = PipelineConfig(budget=64, cp=0.5, seed=2, worker_threads=4, token_limit=4)
    rec = Recorder()
    run_pipeline(slow.root_state(), config, probe=rec)
    assert rec.peak[EVALUATION] > 1
    assert rec.peak[EVALUATION] <= 4


def test_linear_pipeline_serializes_everything(problem, fast_switching):
    config = PipelineConfig(budget=400, cp=0.5, seed=2, worker_threads=6, token_limit=6, linear=True)
    rec = Recorder(serial=range(5))
    result = run_pipeline(problem.root_state(), config, probe=rec)
    assert rec.violations == []
    assert all(rec.order[s] == list(range(400)) for s in range(5))
    assert result.tree.root.n.load() == 400


@pytest.mark.parametrize("budget", [1, 2, 7, 33])
def test_budget_is_exact(problem, budget):
    config = PipelineConfig(budget=budget, cp=0.5, seed=0, worker_threads=4, token_limit=8)
    pipe = Pipeline(problem.root_state(), config)
    result = pipe.run()
    assert pipe.issued == pipe.completed == budget
    assert result.tree.root.n.load() == budget


class Gatekeeper:
    """Holds every token inside Evaluation until released."""

    def __init__(self):
        self.release = threading.Event()
        self.arrived = threading.Semaphore(0)

    def enter(self, stage, t):
        if stage == EVALUATION:
            self.arrived.release()
            self.release.wait()

    def exit(self, stage, t):
        pass


def test_drain_finishes_in_flight_tokens(problem):
    config = PipelineConfig(budget=10000, cp=0.5, seed=0, worker_threads=8, token_limit=8)
    gate = Gatekeeper()
    pipe = Pipeline(problem.root_state(), config, probe=gate)
    pipe.start()
    for _ in range(8):
        assert gate.arrived.acquire(timeout=10)
    assert pipe.issued == 8 and pipe.completed == 0
    pipe.stop()
    gate.release.set()
    pipe.drain(timeout=30)
    assert pipe.issued == pipe.completed == 8
    assert pipe.result().tree.root.n.load() == 8
    pipe.drain()  # second drain is a no-op


def test_stop_before_any_issue(problem):
    config = PipelineConfig(budget=100, cp=0.5, seed=0, worker_threads=2, token_limit=2)
    pipe = Pipeline(problem.root_state(), config)
    pipe.stop()
    pipe.start()
    pipe.drain(timeout=10)
    assert pipe.issued == 0
    assert pipe.result().best_move is None


def test_drain_timeout_raises(problem):
    config = PipelineConfig(budget=10, cp=0.5, seed=0, worker_threads=1, token_limit=1)
    gate = Gatekeeper()
    pipe = Pipeline(problem.root_state(), config, probe=gate)
    pipe.start()
    assert gate.arrived.acquire(timeout=10)
    with pytest.raises(PipelineStalled):
        pipe.drain(timeout=0.1)
    pipe.stop()
    gate.release.set()
    pipe.drain(timeout=10)
    assert pipe.completed == 1


def test_worker_error_propagates(problem):
    class Boom:
        def enter(self, stage, t):
            if stage == EVALUATION and t.ordinal == 5:
                raise RuntimeError("boom")

        def exit(self, stage, t):
            pass

    config = PipelineConfig(budget=100, cp=0.5, seed=0, worker_threads=3, token_limit=3)
    with pytest.raises(RuntimeError, match="boom"):
        run_pipeline(problem.root_state(), config, probe=Boom())


def test_target_stops_pipeline_early(problem):
    small = SyntheticProblem(2, 3, seed=3)
    _, best = small.optimum()
    config = PipelineConfig(
        budget=5000, cp=0.5, seed=0, worker_threads=4, token_limit=4, target_reward=best
    )
    result = run_pipeline(small.root_state(), config)
    assert result.playouts_to_target is not None
    assert result.playouts < 5000
    assert result.tree.root.n.load() == result.playouts


@pytest.mark.parametrize("field,value", [("token_limit", 0), ("worker_threads", 0), ("budget", 0)])
def test_config_validation(field, value):
    kwargs = dict(budget=10, worker_threads=1, token_limit=1)
    kwargs[field] = value
    with pytest.raises(ValueError):
        PipelineConfig(**kwargs)
