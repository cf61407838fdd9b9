"""Lukasiewicz knowledge bases compiled to convex piecewise-linear programs."""

from .formula import (
    Atom,
    Const,
    FALSE,
    Implies,
    Join,
    Not,
    OpKind,
    Quant,
    TRUE,
    Var,
    evaluate,
    evaluate_batch,
    equivalent_on_grid,
    exists,
    forall,
    implies,
    neg,
    strong_and,
    strong_or,
    variables,
    weak_and,
    weak_or,
)

__all__ = [
    "Atom",
    "Const",
    "FALSE",
    "Implies",
    "Join",
    "Not",
    "OpKind",
    "Quant",
    "TRUE",
    "Var",
    "evaluate",
    "evaluate_batch",
    "equivalent_on_grid",
    "exists",
    "forall",
    "implies",
    "neg",
    "strong_and",
    "strong_or",
    "variables",
    "weak_and",
    "weak_or",
]

__version__ = "0.1.0"
