"""Multivariate integer polynomials, Horner schemes and syntactic CSE.

A :class:`Polynomial` is kept in canonical form: like terms merged, zero
terms dropped, terms sorted by descending total degree and then by
descending exponent vector.  :func:`horner_transform` turns it into an
:class:`ExpressionDag` built only from constants, variables, binary
additions and binary multiplications, and :func:`cse` merges structurally
identical subtrees so :func:`count_ops` reflects the cost of evaluating
the shared form.

Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

__all__ = [
    "PolynomialSyntaxError",
    "MissingAssignmentError",
    "Monomial",
    "Polynomial",
    "DagNode",
    "ExpressionDag",
    "OpCount",
    "CONSTANT",
    "VARIABLE",
    "ADD",
    "MULTIPLY",
    "parse_polynomial",
    "format_polynomial",
    "evaluate",
    "horner_transform",
    "cse",
    "count_ops",
    "optimized_cost",
    "random_polynomial",
]

CONSTANT = "constant"
VARIABLE = "variable"
ADD = "add"
MULTIPLY = "multiply"


class PolynomialSyntaxError(ValueError):
    """Raised when polynomial text does not match the grammar."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class MissingAssignmentError(KeyError):
    pass


class Monomial(NamedTuple):
    coefficient: int
    exponents: tuple[int, ...]  # dense, one entry per variable

    @property
    def powers(self) -> dict[int, int]:
        """Sparse view: variable index -> power, zero powers omitted."""
        return {i: e for i, e in enumerate(self.exponents) if e}

    @property
    def degree(self) -> int:
        return sum(self.exponents)


def _term_key(exps: tuple[int, ...]):
    return (-sum(exps), tuple(-e for e in exps))


@dataclass(frozen=True)
class Polynomial:
    names: tuple[str, ...]
    terms: tuple[Monomial, ...]

    @property
    def nvars(self) -> int:
        return len(self.names)

    @classmethod
    def from_terms(
        cls, names: Sequence[str], terms: Iterable[tuple[Sequence[int], int]]
    ) -> "Polynomial":
        """Build the canonical polynomial from (exponents, coefficient) pairs."""
        names = tuple(names)
        merged: dict[tuple[int, ...], int] = {}
        for exps, coeff in terms:
            exps = tuple(exps)
            if len(exps) != len(names):
                raise ValueError("exponent vector length does not match variable count")
            if any(e < 0 for e in exps):
                raise ValueError("negative exponent")
            merged[exps] = merged.get(exps, 0) + int(coeff)
        ordered = sorted((e for e, c in merged.items() if c != 0), key=_term_key)
        return cls(names, tuple(Monomial(merged[e], e) for e in ordered))

    @classmethod
    def zero(cls, names: Sequence[str] = ()) -> "Polynomial":
        return cls(tuple(names), ())

    def is_zero(self) -> bool:
        return not self.terms

    def __str__(self) -> str:
        return format_polynomial(self)


class DagNode(NamedTuple):
    kind: str
    operands: tuple[int, ...] = ()
    value: int = 0  # constant value, or variable index for VARIABLE nodes


@dataclass(frozen=True)
class ExpressionDag:
    """Topologically ordered expression graph; operands point to earlier nodes."""

    nodes: tuple[DagNode, ...]
    roots: tuple[int, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        for i, node in enumerate(self.nodes):
            arity = 2 if node.kind in (ADD, MULTIPLY) else 0
            if node.kind not in (CONSTANT, VARIABLE, ADD, MULTIPLY):
                raise ValueError(f"unknown node kind {node.kind!r}")
            if len(node.operands) != arity:
                raise ValueError(f"node {i} ({node.kind}) needs {arity} operands")
            if any(not 0 <= j < i for j in node.operands):
                raise ValueError(f"node {i} references a node that is not earlier")
        if any(not 0 <= r < len(self.nodes) for r in self.roots):
            raise ValueError("root out of range")

    def to_text(self, root: int | None = None) -> str:
        """Fully parenthesized rendering of one root (the first by default)."""
        names = self.names
        memo: dict[int, str] = {}

        def render(i: int) -> str:
            if i in memo:
                return memo[i]
            node = self.nodes[i]
            if node.kind == CONSTANT:
                text = str(node.value)
            elif node.kind == VARIABLE:
                text = names[node.value] if names else f"v{node.value}"
            else:
                op = "+" if node.kind == ADD else "*"
                a, b = node.operands
                text = f"({render(a)}{op}{render(b)})"
            memo[i] = text
            return text

        return render(self.roots[0] if root is None else root)


class OpCount(NamedTuple):
    multiplications: int
    additions: int

    @property
    def total(self) -> int:
        return self.multiplications + self.additions


# --------------------------------------------------------------------------
# text format

_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)|(?P<ident>[a-zA-Z][a-zA-Z0-9_]*)|(?P<op>[-+*^]))")


def _natural_key(name: str):
    return [int(p) if p.isdigit() else p for p in re.split(r"(\d+)", name)]


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    end = len(text.rstrip())
    while pos < end:
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise PolynomialSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def parse_polynomial(text: str, variables: Sequence[str] | None = None) -> Polynomial:
    """Parse ``term (('+'|'-') term)*`` into a canonical :class:`Polynomial`.

    Variables are numbered in natural-sort order of their names unless
    ``variables`` fixes the list, in which case any other identifier is an
    error.  A single leading minus sign is accepted so that printed
    polynomials with a negative first term read back.
    """
    tokens = _tokenize(text)
    pos = 0

    def peek():
        return tokens[pos]

    def take():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    raw_terms: list[tuple[int, dict[str, int]]] = []

    def parse_term(sign: int):
        coeff = sign
        powers: dict[str, int] = {}
        while True:
            kind, value, at = take()
            if kind == "int":
                coeff *= int(value)
            elif kind == "ident":
                power = 1
                if peek()[1] == "^":
                    take()
                    k2, v2, at2 = take()
                    if k2 != "int":
                        raise PolynomialSyntaxError("expected integer exponent", at2)
                    power = int(v2)
                powers[value] = powers.get(value, 0) + power
            else:
                what = "end of input" if kind == "end" else repr(value)
                raise PolynomialSyntaxError(f"expected integer or identifier, got {what}", at)
            if peek()[1] == "*":
                take()
                continue
            return coeff, powers

    sign = 1
    if peek()[1] == "-":
        take()
        sign = -1
    raw_terms.append(parse_term(sign))
    while True:
        kind, value, at = take()
        if kind == "end":
            break
        if value not in ("+", "-"):
            raise PolynomialSyntaxError(f"expected '+' or '-', got {value!r}", at)
        raw_terms.append(parse_term(1 if value == "+" else -1))

    if variables is None:
        seen = {name for _, powers in raw_terms for name in powers}
        names = tuple(sorted(seen, key=_natural_key))
    else:
        names = tuple(variables)
        known = set(names)
        for _, powers in raw_terms:
            for name in powers:
                if name not in known:
                    raise ValueError(f"unknown variable {name!r}")
    index = {name: i for i, name in enumerate(names)}
    terms = []
    for coeff, powers in raw_terms:
        exps = [0] * len(names)
        for name, power in powers.items():
            exps[index[name]] += power
        terms.append((exps, coeff))
    return Polynomial.from_terms(names, terms)


def format_polynomial(p: Polynomial) -> str:
    if p.is_zero():
        return "0"
    parts = []
    for i, term in enumerate(p.terms):
        factors = [
            p.names[v] if e == 1 else f"{p.names[v]}^{e}"
            for v, e in enumerate(term.exponents)
            if e
        ]
        mag = abs(term.coefficient)
        if mag != 1 or not factors:
            factors.insert(0, str(mag))
        body = "*".join(factors)
        if i == 0:
            parts.append(body if term.coefficient > 0 else f"-{body}")
        else:
            parts.append(("+ " if term.coefficient > 0 else "- ") + body)
    return " ".join(parts)


# --------------------------------------------------------------------------
# evaluation

Point = Union[Mapping[Union[str, int], int], Sequence[int]]


def _resolve_point(names: Sequence[str], nvars: int, point: Point) -> list[int]:
    if isinstance(point, Mapping):
        values = []
        for i in range(nvars):
            name = names[i] if i < len(names) else None
            if name is not None and name in point:
                values.append(int(point[name]))
            elif i in point:
                values.append(int(point[i]))
            else:
                raise MissingAssignmentError(f"no value for variable {name or i!r}")
        return values
    values = [int(x) for x in point]
    if len(values) < nvars:
        raise MissingAssignmentError(f"point assigns {len(values)} of {nvars} variables")
    return values


def _dag_nvars(dag: ExpressionDag) -> int:
    used = [n.value for n in dag.nodes if n.kind == VARIABLE]
    return max(len(dag.names), max(used) + 1 if used else 0)


def evaluate(expr: Polynomial | ExpressionDag, point: Point):
    """Exact integer value of a polynomial or DAG at ``point``.

    ``point`` maps variable names (or indices) to integers, or is a
    sequence indexed by variable.  A DAG with several roots yields a tuple.
    """
    if isinstance(expr, Polynomial):
        xs = _resolve_point(expr.names, expr.nvars, point)
        total = 0
        for term in expr.terms:
            value = term.coefficient
            for x, e in zip(xs, term.exponents):
                if e:
                    value *= x**e
            total += value
        return total

    xs = _resolve_point(expr.names, _dag_nvars(expr), point)
    values: list[int] = []
    for node in expr.nodes:
        if node.kind == CONSTANT:
            values.append(node.value)
        elif node.kind == VARIABLE:
            values.append(xs[node.value])
        elif node.kind == ADD:
            values.append(values[node.operands[0]] + values[node.operands[1]])
        else:
            values.append(values[node.operands[0]] * values[node.operands[1]])
    if len(expr.roots) == 1:
        return values[expr.roots[0]]
    return tuple(values[r] for r in expr.roots)


# --------------------------------------------------------------------------
# Horner transformation

class _Builder:
    def __init__(self):
        self.nodes: list[DagNode] = []

    def _push(self, node: DagNode) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def const(self, value: int) -> int:
        return self._push(DagNode(CONSTANT, (), value))

    def var(self, index: int) -> int:
        return self._push(DagNode(VARIABLE, (), index))

    def add(self, a: int, b: int) -> int:
        return self._push(DagNode(ADD, (a, b)))

    def mul(self, a: int, b: int) -> int:
        return self._push(DagNode(MULTIPLY, (a, b)))

    def power(self, var: int, k: int) -> int:
        # x^k as k-1 chained multiplications: ((x*x)*x)...
        acc = self.var(var)
        for _ in range(k - 1):
            acc = self.mul(acc, self.var(var))
        return acc

    def is_unit(self, i: int) -> bool:
        node = self.nodes[i]
        return node.kind == CONSTANT and node.value == 1


def horner_transform(p: Polynomial, order: Sequence[int]) -> ExpressionDag:
    """Factor ``p`` recursively along ``order`` (a complete variable order).

    At each level the current variable x is pulled out Horner style,
    ``((q_n x^g + q_m) x^g' + ...) x^k``, with the coefficient
    polynomials q_i transformed along the rest of the order.  The leading
    coefficient of a chain with two or more levels is always multiplied in,
    so a dense univariate polynomial of degree n costs exactly n
    multiplications and n additions.  A lone power with unit coefficient is
    emitted without the multiplication by 1.
    """
    order = tuple(order)
    if sorted(order) != list(range(p.nvars)):
        raise ValueError(
            f"Horner scheme must be a complete permutation of 0..{p.nvars - 1}, got {order}"
        )
    b = _Builder()

    def build(terms: list[tuple[tuple[int, ...], int]], level: int) -> int:
        if not terms:
            return b.const(0)
        if level == len(order):
            # only the constant term is left
            return b.const(sum(c for _, c in terms))
        x = order[level]
        groups: dict[int, list[tuple[tuple[int, ...], int]]] = {}
        for exps, coeff in terms:
            k = exps[x]
            if k:
                exps = exps[:x] + (0,) + exps[x + 1:]
            groups.setdefault(k, []).append((exps, coeff))
        if len(groups) == 1 and 0 in groups:
            return build(terms, level + 1)
        powers = sorted(groups, reverse=True)
        acc = build(groups[powers[0]], level + 1)
        if len(powers) == 1:
            if b.is_unit(acc):
                return b.power(x, powers[0])
            return b.mul(acc, b.power(x, powers[0]))
        for hi, lo in zip(powers, powers[1:]):
            acc = b.mul(acc, b.power(x, hi - lo))
            acc = b.add(acc, build(groups[lo], level + 1))
        if powers[-1]:
            acc = b.mul(acc, b.power(x, powers[-1]))
        return acc

    root = build([(t.exponents, t.coefficient) for t in p.terms], 0)
    return ExpressionDag(tuple(b.nodes), (root,), p.names)


# --------------------------------------------------------------------------
# CSE and cost

def _reachable(dag: ExpressionDag) -> list[int]:
    seen = set()
    stack = list(dag.roots)
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        seen.add(i)
        stack.extend(dag.nodes[i].operands)
    return sorted(seen)


def cse(dag: ExpressionDag) -> ExpressionDag:
    """Merge structurally identical subexpressions (hash-consing).

    Two nodes merge when they have the same kind and the same (already
    merged) operands in the same order, so the criterion is syntactic:
    ``x+y`` and ``y+x`` stay distinct.  Unreachable nodes are dropped.
    """
    remap: dict[int, int] = {}
    table: dict[tuple, int] = {}
    nodes: list[DagNode] = []
    for i in _reachable(dag):
        node = dag.nodes[i]
        if node.operands:
            node = DagNode(node.kind, tuple(remap[j] for j in node.operands))
        key = (node.kind, node.operands, node.value)
        j = table.get(key)
        if j is None:
            j = len(nodes)
            nodes.append(node)
            table[key] = j
        remap[i] = j
    return ExpressionDag(tuple(nodes), tuple(remap[r] for r in dag.roots), dag.names)


def count_ops(dag: ExpressionDag) -> OpCount:
    muls = adds = 0
    for i in _reachable(dag):
        kind = dag.nodes[i].kind
        if kind == MULTIPLY:
            muls += 1
        elif kind == ADD:
            adds += 1
    return OpCount(muls, adds)


def optimized_cost(p: Polynomial, order: Sequence[int]) -> int:
    """Total operation count after Horner transformation along ``order`` and CSE."""
    return count_ops(cse(horner_transform(p, order))).total


# --------------------------------------------------------------------------
# fixtures

def random_polynomial(nvars: int, nterms: int, max_degree: int, seed: int) -> Polynomial:
    """Seeded random polynomial with exactly ``nterms`` distinct monomials.

    Every variable occurs in at least one term.  Coefficients are nonzero
    integers in [-9, 9].  Variables are named ``x0 .. x{nvars-1}``.
    """
    if nvars < 1 or nterms < 1:
        raise ValueError("nvars and nterms must be at least 1")
    if max_degree < 1:
        raise ValueError("max_degree must be at least 1")
    space = (max_degree + 1) ** nvars
    if nterms > space:
        raise ValueError(
            f"{nterms} distinct monomials requested but only {space} exist "
            f"for {nvars} variables of degree <= {max_degree}"
        )
    rng = random.Random(seed)
    names = tuple(f"x{i}" for i in range(nvars))

    if nterms * 4 > space:
        everything = sorted(product(range(max_degree + 1), repeat=nvars))
        chosen = rng.sample(everything, nterms)
    else:
        picked: set[tuple[int, ...]] = set()
        chosen = []
        width = min(nvars, 4)
        while len(chosen) < nterms:
            exps = [0] * nvars
            for v in rng.sample(range(nvars), rng.randint(0, width)):
                exps[v] = rng.randint(1, max_degree)
            t = tuple(exps)
            if t not in picked:
                picked.add(t)
                chosen.append(t)

    chosen = [list(t) for t in chosen]
    present = set(map(tuple, chosen))
    for v in range(nvars):
        if any(t[v] for t in chosen):
            continue
        # give v a power in some term without creating a duplicate
        for _ in range(1000):
            t = rng.randrange(nterms)
            cand = list(chosen[t])
            cand[v] = rng.randint(1, max_degree)
            if tuple(cand) not in present:
                present.discard(tuple(chosen[t]))
                present.add(tuple(cand))
                chosen[t] = cand
                break
        else:
            raise ValueError(f"could not place variable {v} without duplicating a monomial")

    coeffs = [rng.choice((-1, 1)) * rng.randint(1, 9) for _ in chosen]
    return Polynomial.from_terms(names, zip(chosen, coeffs))
