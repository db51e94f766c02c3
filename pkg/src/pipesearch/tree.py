"""Shared search tree without node locks.

Three races have to be handled when many threads work on one tree:

* shared expansion: two threads initialise the children of the same node.
  ``isparent`` is an exchange latch, so exactly one thread builds the
  children array; it then publishes ``isexpandable``.  ``untriedmoves``
  doubles as a countdown that hands each child out exactly once.
* shared backup: ``w`` and ``n`` are atomic counters, no update is lost.
* backup racing with selection: ``w``, ``n`` and the parent's ``n`` are
  read through sequentially consistent loads.

Rewards are stored fixed point (``SCALE`` units per 1.0) so ``w`` stays an
integer counter.
"""

from __future__ import annotations

import math
from typing import Any, Hashable, Sequence

from .atomics import AtomicBool, AtomicInt

__all__ = ["SCALE", "Node", "Tree", "uct_value", "dump_tree"]

SCALE = 1 << 16


class Node:
    __slots__ = (
        "move",
        "w",
        "n",
        "isparent",
        "untriedmoves",
        "isexpandable",
        "isfullyexpanded",
        "parent",
        "children",
        "depth",
        "tree",
    )

    def __init__(self, tree: "Tree", move: Hashable = None, parent: "Node | None" = None):
        self.move = move
        self.w = AtomicInt(0)
        self.n = AtomicInt(0)
        self.isparent = AtomicBool(False)
        self.untriedmoves = AtomicInt(-1)
        self.isexpandable = AtomicBool(False)
        self.isfullyexpanded = AtomicBool(False)
        self.parent = parent
        self.children: tuple[Node, ...] = ()
        self.depth = 0 if parent is None else parent.depth + 1
        self.tree = tree

    def init(self, moves: Sequence[Hashable]) -> None:
        """Create the children for ``moves``; only the first caller does anything."""
        if not moves:
            raise ValueError("init needs at least one move")
        if self.isparent.exchange(True):
            return
        self.children = self.tree._allocate_children(self, moves)
        self.untriedmoves.store(len(moves))
        # publish only after children and the count are in place
        self.isexpandable.store(True)

    def add_child(self) -> "Node":
        """Hand out the next unexpanded child, or ``self`` when none is available.

        Children are handed out from the end of the array towards index 0;
        handing out index 0 marks the node fully expanded.
        """
        if not self.isexpandable.load():
            return self
        index = self.untriedmoves.fetch_sub(1) - 1
        if index == 0:
            self.isfullyexpanded.store(True)
        if index < 0:
            return self
        return self.children[index]

    def is_fully_expanded(self) -> bool:
        return self.isfullyexpanded.load()

    def uct(self, cp: float) -> float:
        return uct_value(self, cp)

    def update(self, delta: float) -> None:
        self.w.fetch_add(round(delta * SCALE))
        self.n.fetch_add(1)

    def __repr__(self) -> str:
        return f"Node(move={self.move!r}, n={self.n.load()}, w={self.w.load()})"


def uct_value(node: Node, cp: float) -> float:
    """Mean reward plus ``cp`` times the exploration radius.

    Unvisited nodes score ``+inf`` so they are tried first.
    """
    w = node.w.load()
    n = node.n.load()
    parent_n = node.parent.n.load()
    if n == 0:
        return math.inf
    log_n = math.log(parent_n) if parent_n > 0 else 0.0
    return (w / n) / SCALE + cp * math.sqrt(log_n / n)


class Tree:
    """Append-only arena owning every node of one search.

    Nodes are never freed while a search runs; drop the tree only after
    all search threads have finished.
    """

    def __init__(self, root_move: Hashable = None):
        self.nodes: list[Node] = []
        self.allocations = AtomicInt(0)
        self.root = Node(self, root_move)
        self.nodes.append(self.root)

    def _allocate_children(self, parent: Node, moves: Sequence[Hashable]) -> tuple[Node, ...]:
        self.allocations.fetch_add(1)
        children = tuple(Node(self, m, parent) for m in moves)
        self.nodes.extend(children)
        return children

    def __len__(self) -> int:
        return len(self.nodes)

    def dump(self) -> str:
        return dump_tree(self.root)


def _fmt_move(move: Any) -> str:
    return "root" if move is None else str(move)


def dump_tree(root: Node) -> str:
    """Depth-first text dump, one ``<indent><move> n=.. w=.. fe=..`` line per node.

    Children appear in array order and ``w`` is printed in fixed-point
    units, so two dumps compare equal exactly when the trees do.
    """
    lines: list[str] = []
    stack = [root]
    while stack:
        node = stack.pop()
        lines.append(
            f"{'  ' * node.depth}{_fmt_move(node.move)} n={node.n.load()} "
            f"w={node.w.load()} fe={int(node.is_fully_expanded())}"
        )
        stack.extend(reversed(node.children))
    return "\n".join(lines) + "\n"
