"""Hybrid rewriting: internal e-graph rules plus external loop transforms."""

from ..egraph import EGraph, SaturationLimits, SaturationReport
from .loops import TransformError, apply_to_function, tile, unroll, unroll_directives
from .plan import (
    DEFAULT_BUDGET,
    ExternalTransform,
    LoopShape,
    TransformPlan,
    apply_external,
    loop_nest,
    plan_external,
    shape_of,
)
from .rulefile import RuleFileError, parse_rules
from .rules import internal_rules


def run_internal(g: EGraph, rules=None, limits: SaturationLimits = SaturationLimits()) -> SaturationReport:
    return g.saturate(internal_rules() if rules is None else rules, limits)


__all__ = [
    "DEFAULT_BUDGET",
    "ExternalTransform",
    "LoopShape",
    "RuleFileError",
    "TransformError",
    "TransformPlan",
    "apply_external",
    "apply_to_function",
    "internal_rules",
    "loop_nest",
    "parse_rules",
    "plan_external",
    "run_internal",
    "shape_of",
    "tile",
    "unroll",
    "unroll_directives",
]
