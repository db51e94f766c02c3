"""Search problems consumed by the MCTS stages.

A problem hands out an immutable root :class:`SearchState`; ``set_move``
returns a new state, so a state can be shared between threads and every
"copy" evolves independently.

Two problems are provided:

* :class:`HornerProblem` - choose a variable order for Horner's rule on a
  polynomial; a complete order is scored by its operation count after
  Horner transformation and CSE.
* :class:`SyntheticProblem` - a b-ary tree of depth d whose leaves carry
  hashed payoffs; small instances can be enumerated exhaustively and so
  serve as an exact optimality oracle.
"""

from __future__ import annotations

import hashlib
import time
from abc import ABC, abstractmethod
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import Hashable, Sequence

from .poly import Polynomial, optimized_cost, parse_polynomial

__all__ = [
    "IllegalMoveError",
    "NotTerminalError",
    "SearchState",
    "HornerProblem",
    "HornerState",
    "SyntheticProblem",
    "SyntheticState",
    "parse_problem",
    "mix64",
]

MASK64 = (1 << 64) - 1


class IllegalMoveError(ValueError):
    pass


class NotTerminalError(RuntimeError):
    pass


class SearchState(ABC):
    """Position in a search problem, identified by its move history."""

    __slots__ = ()

    @property
    @abstractmethod
    def history(self) -> tuple: ...

    @abstractmethod
    def untried_moves(self) -> list: ...

    @abstractmethod
    def set_move(self, move: Hashable) -> "SearchState": ...

    @abstractmethod
    def is_terminal(self) -> bool: ...

    @abstractmethod
    def evaluate(self) -> float: ...

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self


# --------------------------------------------------------------------------
# Horner variable ordering

class HornerProblem:
    """Find a variable order for which Horner + CSE gives few operations.

    The reward of a complete order is ``baseline_ops / ops`` where
    ``baseline_ops`` is the cost of the identity order, so the identity
    order scores 1.0 and cheaper orders score above 1.
    """

    def __init__(self, polynomial: Polynomial, baseline_ops: int | None = None):
        self.polynomial = polynomial
        if baseline_ops is None:
            baseline_ops = optimized_cost(polynomial, range(polynomial.nvars))
        self.baseline_ops = baseline_ops

    @classmethod
    def from_file(cls, path: str | Path) -> "HornerProblem":
        text = Path(path).read_text(encoding="utf-8")
        return cls(parse_polynomial(text))

    def root_state(self) -> "HornerState":
        return HornerState(self, ())

    def ops(self, order: Sequence[int]) -> int:
        return optimized_cost(self.polynomial, order)

    def reward(self, ops: int) -> float:
        # Not clamped at 1: orders that beat the identity order must stay
        # distinguishable, otherwise every improvement scores the same.
        return self.baseline_ops / max(ops, 1)

    def __repr__(self) -> str:
        return f"HornerProblem(nvars={self.polynomial.nvars}, baseline_ops={self.baseline_ops})"


class HornerState(SearchState):
    __slots__ = ("problem", "chosen")

    def __init__(self, problem: HornerProblem, chosen: tuple[int, ...] = ()):
        self.problem = problem
        self.chosen = chosen

    @property
    def history(self) -> tuple[int, ...]:
        return self.chosen

    def untried_moves(self) -> list[int]:
        taken = set(self.chosen)
        return [v for v in range(self.problem.polynomial.nvars) if v not in taken]

    def set_move(self, move: int) -> "HornerState":
        nvars = self.problem.polynomial.nvars
        if not 0 <= move < nvars:
            raise IllegalMoveError(f"variable {move} out of range 0..{nvars - 1}")
        if move in self.chosen:
            raise IllegalMoveError(f"variable {move} already chosen")
        return HornerState(self.problem, self.chosen + (move,))

    def is_terminal(self) -> bool:
        return len(self.chosen) == self.problem.polynomial.nvars

    def ops(self) -> int:
        if not self.is_terminal():
            raise NotTerminalError("operation count needs a complete variable order")
        return self.problem.ops(self.chosen)

    def evaluate(self) -> float:
        return self.problem.reward(self.ops())

    def __eq__(self, other):
        return (
            isinstance(other, HornerState)
            and other.problem is self.problem
            and other.chosen == self.chosen
        )

    def __hash__(self):
        return hash(self.chosen)

    def __repr__(self) -> str:
        return f"HornerState(chosen={list(self.chosen)})"


# --------------------------------------------------------------------------
# synthetic oracle

def mix64(x: int) -> int:
    """splitmix64 finalizer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


@lru_cache(maxsize=None)
def _hash_bytes_per_ms() -> float:
    buf = bytes(1 << 20)
    hashlib.sha256(buf).digest()
    t0 = time.perf_counter()
    rounds = 8
    for _ in range(rounds):
        hashlib.sha256(buf).digest()
    elapsed = time.perf_counter() - t0
    return rounds * len(buf) / (elapsed * 1000.0)


class SyntheticProblem:
    """Depth-``d`` tree with branching ``b``; leaf payoffs hashed from ``seed``.

    ``work_ms`` adds artificial cost to every evaluation.  ``work="cpu"``
    hashes a fixed, once-calibrated number of bytes (hashlib releases the
    GIL, so the work can overlap on several cores); ``work="sleep"`` models
    a latency-bound evaluator.
    """

    def __init__(self, b: int, d: int, seed: int = 0, work_ms: float = 0.0, work: str = "cpu"):
        if b < 1 or d < 1:
            raise ValueError("branching and depth must be at least 1")
        if work not in ("cpu", "sleep"):
            raise ValueError(f"unknown work kind {work!r}")
        self.b = b
        self.d = d
        self.seed = seed
        self.work_ms = work_ms
        self.work = work
        self._exponent = 2 * b**d
        self._work_buf = b""
        if work_ms > 0 and work == "cpu":
            self._work_buf = bytes(max(1, int(_hash_bytes_per_ms() * work_ms)))

    def root_state(self) -> "SyntheticState":
        return SyntheticState(self, ())

    def payoff(self, path: Sequence[int]) -> float:
        """Hash of (seed, path) mapped to [0, 1].

        The uniform hash value u is raised to the power 2 * b**d, twice the
        number of leaves.  The map is monotone, so the argmax is unchanged,
        but the best few leaves end up spread over [0, 1] instead of crowding
        within about 1/b**d of 1, and the rest sit near 0.  That gives the
        best leaf enough weight in a subtree mean for visit counts to find it.
        """
        h = mix64(self.seed & MASK64)
        for m in path:
            h = mix64(h ^ (m + 1))
        return (h / 2.0**64) ** self._exponent

    def burn(self) -> None:
        if self.work_ms <= 0:
            return
        if self.work == "sleep":
            time.sleep(self.work_ms / 1000.0)
        else:
            hashlib.sha256(self._work_buf).digest()

    def leaves(self):
        """Every terminal path with its payoff."""
        for path in product(range(self.b), repeat=self.d):
            yield path, self.payoff(path)

    def optimum(self) -> tuple[tuple[int, ...], float]:
        """Best leaf by exhaustive enumeration; ties for the maximum raise."""
        best_path, best, runner_up = None, -1.0, -1.0
        for path, value in self.leaves():
            if value > best:
                best_path, best, runner_up = path, value, best
            elif value > runner_up:
                runner_up = value
        if runner_up == best:
            raise ValueError(f"seed {self.seed} has a tie for the best payoff")
        return best_path, best

    def __repr__(self) -> str:
        return f"SyntheticProblem(b={self.b}, d={self.d}, seed={self.seed})"


class SyntheticState(SearchState):
    __slots__ = ("problem", "path")

    def __init__(self, problem: SyntheticProblem, path: tuple[int, ...] = ()):
        self.problem = problem
        self.path = path

    @property
    def history(self) -> tuple[int, ...]:
        return self.path

    def untried_moves(self) -> list[int]:
        if len(self.path) >= self.problem.d:
            return []
        return list(range(self.problem.b))

    def set_move(self, move: int) -> "SyntheticState":
        if len(self.path) >= self.problem.d:
            raise IllegalMoveError("state is terminal")
        if not 0 <= move < self.problem.b:
            raise IllegalMoveError(f"branch {move} out of range 0..{self.problem.b - 1}")
        return SyntheticState(self.problem, self.path + (move,))

    def is_terminal(self) -> bool:
        return len(self.path) == self.problem.d

    def evaluate(self) -> float:
        if not self.is_terminal():
            raise NotTerminalError("payoffs exist only at depth d")
        self.problem.burn()
        return self.problem.payoff(self.path)

    def __eq__(self, other):
        return (
            isinstance(other, SyntheticState)
            and other.problem is self.problem
            and other.path == self.path
        )

    def __hash__(self):
        return hash(self.path)

    def __repr__(self) -> str:
        return f"SyntheticState(path={list(self.path)})"


# --------------------------------------------------------------------------

def parse_problem(spec: str):
    """Build a problem from ``horner:<path>`` or ``synthetic:b=..,d=..,seed=..``.

    The synthetic form also accepts ``work_ms=<float>`` and ``work=cpu|sleep``.
    """
    kind, sep, rest = spec.partition(":")
    if not sep:
        raise ValueError(f"problem spec {spec!r} lacks a 'kind:' prefix")
    if kind == "horner":
        if not rest:
            raise ValueError("horner problem needs a file path")
        return HornerProblem.from_file(rest)
    if kind == "synthetic":
        params = {}
        for item in filter(None, rest.split(",")):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValueError(f"malformed synthetic parameter {item!r}")
            params[key.strip()] = value.strip()
        unknown = set(params) - {"b", "d", "seed", "work_ms", "work"}
        if unknown:
            raise ValueError(f"unknown synthetic parameters: {sorted(unknown)}")
        if "b" not in params or "d" not in params:
            raise ValueError("synthetic problem needs b and d")
        try:
            return SyntheticProblem(
                b=int(params["b"]),
                d=int(params["d"]),
                seed=int(params.get("seed", 0)),
                work_ms=float(params.get("work_ms", 0.0)),
                work=params.get("work", "cpu"),
            )
        except ValueError as exc:
            raise ValueError(f"bad synthetic problem spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown problem kind {kind!r}")
