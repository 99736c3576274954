"""Cost-based optimization and evaluation of regular queries over property graphs."""

from __future__ import annotations

from .cost import CostModel
from .enumerator import (
    EnumerationError,
    EnumerationStats,
    enumerate_plans,
    exhaustive_plans,
    make_star_query,
    predicted_plan_count,
)
from .executor import datalog_oracle, execute
from .graph import PropertyGraph, build_catalog, load_graph
from .ir import Program, parse_program
from .plan import PlanGraph, render_dot
from .rules import RuleSet

__all__ = [
    "CostModel",
    "EnumerationError",
    "EnumerationStats",
    "PlanGraph",
    "Program",
    "PropertyGraph",
    "RuleSet",
    "build_catalog",
    "datalog_oracle",
    "enumerate_plans",
    "execute",
    "exhaustive_plans",
    "load_graph",
    "make_star_query",
    "parse_program",
    "predicted_plan_count",
    "render_dot",
]

__version__ = "0.1.0"
