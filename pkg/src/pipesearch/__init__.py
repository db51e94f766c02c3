"""Pipelined parallel Monte Carlo tree search on a lock-free shared tree."""

from .mcts import SearchBudget, SearchResult, Token, uct_search
from .poly import (
    ExpressionDag,
    OpCount,
    Polynomial,
    count_ops,
    cse,
    evaluate,
    horner_transform,
    parse_polynomial,
    random_polynomial,
)
from .problem import HornerProblem, SyntheticProblem, parse_problem
from .sched import PipelineConfig, run_pipeline, run_sequential, run_tree_parallel
from .tree import SCALE, Node, Tree

__version__ = "0.1.0"
