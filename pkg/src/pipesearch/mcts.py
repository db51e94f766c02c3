"""MCTS stage functions operating on tokens, plus the serial driver.

The five stages are ``select``, ``expand``, ``random_simulation``,
``evaluation`` and ``backup``.  A serial playout is simply
``random_simulation`` followed by ``evaluation``.  The stages only touch
shared data through the atomic node operations in :mod:`pipesearch.tree`,
so the same functions serve the sequential loop, tree parallelization and
the pipeline scheduler.
"""

from __future__ import annotations

import math
import random
import threading
from dataclasses import dataclass, field
from typing import Hashable

from .problem import SearchState, mix64
from .tree import Node, Tree, uct_value

__all__ = [
    "SearchBudget",
    "Token",
    "SearchResult",
    "BestTracker",
    "playout_seed",
    "select",
    "expand",
    "random_simulation",
    "evaluation",
    "playout",
    "backup",
    "best_child",
    "uct_search",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SearchBudget:
    max_playouts: int

    def __post_init__(self):
        if self.max_playouts < 1:
            raise ValueError("budget must allow at least one playout")


def playout_seed(root_seed: int, token_id: int, ordinal: int) -> int:
    """Seed of the generator used by one token for one playout."""
    h = mix64(root_seed & _MASK64)
    h = mix64(h ^ (token_id & _MASK64))
    return mix64(h ^ (ordinal & _MASK64))


class Token:
    """A path being worked on: current node, state, and reward."""

    __slots__ = ("id", "v", "s", "delta", "ordinal", "rng")

    def __init__(self, id: int, v: Node | None = None, s: SearchState | None = None):
        self.id = id
        self.v = v
        self.s = s
        self.delta = 0.0
        self.ordinal = -1
        self.rng: random.Random | None = None

    def reset(self, root: Node, root_state: SearchState, ordinal: int, root_seed: int) -> "Token":
        """Point the token back at the root for the playout numbered ``ordinal``."""
        self.v = root
        self.s = root_state
        self.delta = 0.0
        self.ordinal = ordinal
        self.rng = random.Random(playout_seed(root_seed, self.id, ordinal))
        return self

    def __repr__(self) -> str:
        return f"Token(id={self.id}, ordinal={self.ordinal}, v={self.v!r}, delta={self.delta})"


def select(t: Token, cp: float) -> Token:
    v = t.v
    s = t.s
    while v.is_fully_expanded():
        best = None
        best_value = -math.inf
        for child in v.children:
            value = uct_value(child, cp)
            if value > best_value:
                best, best_value = child, value
        v = best
        s = s.set_move(v.move)
    t.v = v
    t.s = s
    return t


def expand(t: Token) -> Token:
    if t.s.is_terminal():
        return t
    moves = t.s.untried_moves()
    t.rng.shuffle(moves)
    t.v.init(moves)
    child = t.v.add_child()
    if child is not t.v:
        t.v = child
        t.s = t.s.set_move(child.move)
    return t


def random_simulation(t: Token) -> Token:
    s = t.s
    rng = t.rng
    while not s.is_terminal():
        moves = s.untried_moves()
        s = s.set_move(moves[rng.randrange(len(moves))])
    t.s = s
    return t


def evaluation(t: Token) -> Token:
    t.delta = t.s.evaluate()
    return t


def playout(t: Token) -> Token:
    return evaluation(random_simulation(t))


def backup(t: Token) -> None:
    v = t.v
    delta = t.delta
    while v is not None:
        v.update(delta)
        v = v.parent
    t.v = None


def best_child(root: Node) -> Node | None:
    """Most visited child of ``root``; ties go to the lowest move label."""
    best = None
    best_key = None
    for child in root.children:
        n = child.n.load()
        if n == 0:
            continue
        key = (-n, child.move)
        if best_key is None or key < best_key:
            best, best_key = child, key
    return best


class BestTracker:
    """Best terminal history seen so far, and when a target was first reached."""

    def __init__(self, target_reward: float | None = None):
        self._lock = threading.Lock()
        self.target_reward = target_reward
        self.best_reward = -math.inf
        self.best_history: tuple = ()
        self.completed = 0
        self.playouts_to_target: int | None = None

    def record(self, t: Token) -> bool:
        """Count one completed playout; True once the target has been reached."""
        with self._lock:
            self.completed += 1
            if t.delta > self.best_reward:
                self.best_reward = t.delta
                self.best_history = t.s.history
            if (
                self.target_reward is not None
                and self.playouts_to_target is None
                and t.delta >= self.target_reward
            ):
                self.playouts_to_target = self.completed
            return self.playouts_to_target is not None

    @property
    def hit(self) -> bool:
        return self.playouts_to_target is not None


@dataclass
class SearchResult:
    best_move: Hashable
    tree: Tree = field(repr=False)
    playouts: int
    best_reward: float
    best_history: tuple
    playouts_to_target: int | None = None

    def dump(self) -> str:
        return self.tree.dump()


def finish(tree: Tree, tracker: BestTracker) -> SearchResult:
    child = best_child(tree.root)
    return SearchResult(
        best_move=None if child is None else child.move,
        tree=tree,
        playouts=tracker.completed,
        best_reward=tracker.best_reward,
        best_history=tracker.best_history,
        playouts_to_target=tracker.playouts_to_target,
    )


def uct_search(
    root_state: SearchState,
    budget: SearchBudget | int,
    cp: float,
    seed: int,
    target_reward: float | None = None,
) -> SearchResult:
    """Serial MCTS with a single token, ``budget`` playouts.

    With ``target_reward`` set the loop also stops after the first playout
    whose reward reaches it.
    """
    if isinstance(budget, int):
        budget = SearchBudget(budget)
    if root_state.is_terminal():
        raise ValueError("root state is terminal; nothing to search")
    tree = Tree()
    tracker = BestTracker(target_reward)
    t = Token(0)
    for ordinal in range(budget.max_playouts):
        t.reset(tree.root, root_state, ordinal, seed)
        select(t, cp)
        expand(t)
        playout(t)
        backup(t)
        if tracker.record(t):
            break
    return finish(tree, tracker)
