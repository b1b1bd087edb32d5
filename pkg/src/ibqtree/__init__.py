"""Information-bottleneck quadtree abstractions for multi-resolution path planning."""

from .grid_io import CellPrior, GridMap, default_prior, load_map, load_prior
from .quadtree import QuadTree, TreeAbstraction, build_full_tree
from .ib_engine import (
    InfoCache,
    JointModel,
    build_joint,
    compute_info,
    greedy_search,
    ib_objective,
    qtree_search,
)
from .absgraph import AbstractGraph, build_graph
from .planner import CostParams, Path, PlanQuery, plan

__all__ = [
    "AbstractGraph",
    "CellPrior",
    "CostParams",
    "GridMap",
    "InfoCache",
    "JointModel",
    "Path",
    "PlanQuery",
    "QuadTree",
    "TreeAbstraction",
    "build_full_tree",
    "build_graph",
    "build_joint",
    "compute_info",
    "default_prior",
    "greedy_search",
    "ib_objective",
    "load_map",
    "load_prior",
    "plan",
    "qtree_search",
]

__version__ = "0.1.0"
