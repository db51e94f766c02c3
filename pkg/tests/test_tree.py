import math
import threading

import pytest

from pipesearch.tree import SCALE, Node, Tree, dump_tree, uct_value


def run_threads(n, target):
    barrier = threading.Barrier(n)
    results = [None] * n

    def body(i):
        barrier.wait()
        results[i] = target(i)

    threads = [threading.Thread(target=body, args=(i,)) for i in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return results


def test_fresh_node_state():
    node = Tree().root
    assert node.n.load() == 0 and node.w.load() == 0
    assert node.untriedmoves.load() == -1
    assert not node.isparent.load()
    assert not node.isexpandable.load()
    assert not node.is_fully_expanded()
    assert node.add_child() is node  # nothing to hand out yet


def test_init_serial():
    tree = Tree()
    tree.root.init([5, 6, 7])
    assert len(tree.root.children) == 3
    assert [c.move for c in tree.root.children] == [5, 6, 7]
    assert tree.root.untriedmoves.load() == 3
    assert tree.root.isexpandable.load()
    assert all(c.parent is tree.root and c.depth == 1 for c in tree.root.children)


def test_second_init_is_noop():
    tree = Tree()
    tree.root.init([0, 1, 2])
    first = tree.root.children
    tree.root.init([9])
    assert tree.root.children is first
    assert tree.allocations.load() == 1


def test_init_needs_moves():
    with pytest.raises(ValueError):
        Tree().root.init([])


def test_add_child_serial_trace():
    tree = Tree()
    root = tree.root
    root.init(["a", "b", "c"])
    kids = root.children
    assert root.add_child() is kids[2]
    assert not root.is_fully_expanded()
    assert root.add_child() is kids[1]
    assert not root.is_fully_expanded()
    assert root.add_child() is kids[0]
    assert root.is_fully_expanded()
    assert root.add_child() is root
    assert root.is_fully_expanded()


def test_terminal_leaf_never_fully_expanded():
    tree = Tree()
    tree.root.init([0])
    leaf = tree.root.add_child()
    for _ in range(5):
        leaf.update(1.0)
        assert leaf.add_child() is leaf
    assert not leaf.is_fully_expanded()


class CountingTree(Tree):
    def __init__(self):
        self.arrays = []
        super().__init__()

    def _allocate_children(self, parent, moves):
        children = super()._allocate_children(parent, moves)
        self.arrays.append(children)
        return children


def test_concurrent_init_single_winner(fast_switching):
    for _ in range(50):
        tree = CountingTree()
        root = tree.root
        seen = run_threads(16, lambda i: (root.init(list(range(8))), root.children)[1])
        assert len(tree.arrays) == 1
        assert tree.allocations.load() == 1
        # every thread that saw children saw the one array
        assert {id(c) for c in seen if c} <= {id(tree.arrays[0])}


def test_concurrent_add_child_unique(fast_switching):
    n = 16
    for _ in range(50):
        tree = Tree()
        tree.root.init(list(range(n)))
        got = run_threads(n, lambda i: tree.root.add_child())
        assert sorted(c.move for c in got) == list(range(n))
        assert tree.root.is_fully_expanded()


def test_publication_safety(fast_switching):
    # readers racing init never see the flag before the children exist
    for _ in range(30):
        tree = Tree()
        root = tree.root

        def body(i):
            if i == 0:
                root.init(list(range(32)))
                return []
            out = []
            for _ in range(200):
                c = root.add_child()
                if c is not root:
                    assert c in root.children
                    out.append(c)
            return out

        results = run_threads(8, body)
        handed = [c for r in results for c in r]
        assert len(handed) == len(set(map(id, handed)))
        assert len(handed) <= 32


def test_uct_pure_exploitation():
    tree = Tree()
    tree.root.init([0])
    child = tree.root.add_child()
    child.w.store(10 * SCALE)
    child.n.store(5)
    tree.root.n.store(5)
    assert uct_value(child, 0.0) == 2.0


def test_uct_unvisited_is_infinite():
    tree = Tree()
    tree.root.init([0])
    child = tree.root.add_child()
    assert uct_value(child, 1.0) == math.inf


def test_uct_formula():
    tree = Tree()
    tree.root.init([0])
    child = tree.root.add_child()
    child.update(1.0)
    tree.root.n.store(3)
    expected = 1.0 + 1.0 * math.sqrt(math.log(3) / 1)
    assert uct_value(child, 1.0) == pytest.approx(expected, rel=1e-12)
    assert uct_value(child, 1.0) == pytest.approx(1 + 1.0482, abs=1e-4)


def test_uct_parent_unvisited_treats_log_as_zero():
    tree = Tree()
    tree.root.init([0])
    child = tree.root.add_child()
    child.update(0.25)
    assert uct_value(child, 5.0) == 0.25


def test_uct_argmax_stable_under_scaling():
    means = [0.1, 0.35, 0.3]
    for factor in (1.0, 0.5, 2.0):
        tree = Tree()
        tree.root.init([0, 1, 2])
        for c, m in zip(tree.root.children, means):
            for _ in range(4):
                c.update(m * factor)
                tree.root.update(m * factor)
        values = [uct_value(c, 0.0) for c in tree.root.children]
        assert values.index(max(values)) == 1


def test_update_serial():
    node = Tree().root
    for _ in range(1000):
        node.update(1.0)
    assert node.n.load() == 1000
    assert node.w.load() == 1000 * SCALE
    half = Tree().root
    half.update(0.5)
    assert half.w.load() == SCALE // 2 and half.n.load() == 1


def test_update_concurrent(fast_switching):
    node = Tree().root
    run_threads(8, lambda i: [node.update(1.0) for _ in range(1000)])
    assert node.n.load() == 8000
    assert node.w.load() == 8000 * SCALE


def test_dump_format():
    tree = Tree()
    tree.root.init([3, 1])
    a = tree.root.add_child()
    a.update(0.5)
    tree.root.update(0.5)
    assert dump_tree(tree.root) == (
        "root n=1 w=32768 fe=0\n"
        "  3 n=0 w=0 fe=0\n"
        "  1 n=1 w=32768 fe=0\n"
    )
    assert tree.dump() == dump_tree(tree.root)
