"""Formula trees over [0,1] with Lukasiewicz connective semantics.

The connectives come in two strengths.  The strong pair is additive and
clipped (truncated sum / truncated difference), the weak pair is the lattice
min / max.  Implication is residuated material implication, negation is the
standard involution 1 - x.

Nodes are immutable; helper constructors flatten nested joins of the same
connective so that ``strong_or(a, strong_or(b, c))`` and
``strong_or(a, b, c)`` build the same tree.
"""

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np


class OpKind(Enum):
    """Associative binary connectives, stored n-ary."""

    STRONG_AND = "*"
    WEAK_AND = "^"
    STRONG_OR = "+"
    WEAK_OR = "|"


class FormulaError(Exception):
    pass


class EvaluationError(FormulaError):
    pass


@dataclass(frozen=True)
class Var:
    """Propositional variable, or a grounded atom after grounding."""

    name: str


@dataclass(frozen=True)
class Atom:
    """Predicate applied to argument names (variables or constants)."""

    pred: str
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class Const:
    value: int  # 0 or 1

    def __post_init__(self):
        if self.value not in (0, 1):
            raise FormulaError(f"constant must be 0 or 1, got {self.value!r}")


@dataclass(frozen=True)
class Not:
    arg: object


@dataclass(frozen=True)
class Implies:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Join:
    """n-ary application of one associative connective (len(args) >= 2)."""

    op: OpKind
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) < 2:
            raise FormulaError("Join needs at least two operands")


@dataclass(frozen=True)
class Quant:
    universal: bool
    var: str
    body: object


TRUE = Const(1)
FALSE = Const(0)


def _join(op, parts):
    flat = []
    for p in parts:
        if isinstance(p, Join) and p.op is op:
            flat.extend(p.args)
        else:
            flat.append(p)
    if not flat:
        raise FormulaError("empty join")
    if len(flat) == 1:
        return flat[0]
    return Join(op, tuple(flat))


def strong_and(*parts):
    return _join(OpKind.STRONG_AND, parts)


def weak_and(*parts):
    return _join(OpKind.WEAK_AND, parts)


def strong_or(*parts):
    return _join(OpKind.STRONG_OR, parts)


def weak_or(*parts):
    return _join(OpKind.WEAK_OR, parts)


def neg(f):
    return Not(f)


def implies(lhs, rhs):
    return Implies(lhs, rhs)


def forall(var, body):
    return Quant(True, var, body)


def exists(var, body):
    return Quant(False, var, body)


def is_literal(f) -> bool:
    return isinstance(f, (Var, Atom)) or (
        isinstance(f, Not) and isinstance(f.arg, (Var, Atom))
    )


def variables(f) -> tuple:
    """Sorted names of the propositional variables appearing in ``f``.

    Rejects trees that still contain atoms or quantifiers; those must be
    grounded to Var leaves first.
    """
    names = set()

    def walk(node):
        if isinstance(node, Var):
            names.add(node.name)
        elif isinstance(node, Const):
            pass
        elif isinstance(node, Not):
            walk(node.arg)
        elif isinstance(node, Implies):
            walk(node.lhs)
            walk(node.rhs)
        elif isinstance(node, Join):
            for a in node.args:
                walk(a)
        elif isinstance(node, (Atom, Quant)):
            raise EvaluationError(
                "formula is not propositional (contains atoms or quantifiers)"
            )
        else:
            raise FormulaError(f"unknown node {node!r}")

    walk(f)
    return tuple(sorted(names))


def _check_unit(name, v):
    if not (0.0 <= v <= 1.0):
        raise EvaluationError(f"value for {name!r} outside [0,1]: {v}")


def evaluate(f, values) -> float:
    """Exact scalar semantics of a propositional formula.

    ``values`` maps every variable name to a number in [0,1].  Unbound
    variables and out-of-range values raise EvaluationError.
    """
    if isinstance(f, Var):
        if f.name not in values:
            raise EvaluationError(f"unbound variable {f.name!r}")
        v = float(values[f.name])
        _check_unit(f.name, v)
        return v
    if isinstance(f, Const):
        return float(f.value)
    if isinstance(f, Not):
        return 1.0 - evaluate(f.arg, values)
    if isinstance(f, Implies):
        return min(1.0, 1.0 - evaluate(f.lhs, values) + evaluate(f.rhs, values))
    if isinstance(f, Join):
        vals = [evaluate(a, values) for a in f.args]
        if f.op is OpKind.STRONG_AND:
            return max(0.0, sum(vals) - (len(vals) - 1))
        if f.op is OpKind.WEAK_AND:
            return min(vals)
        if f.op is OpKind.STRONG_OR:
            return min(1.0, sum(vals))
        return max(vals)
    if isinstance(f, (Atom, Quant)):
        raise EvaluationError("cannot evaluate atoms or quantifiers; ground first")
    raise FormulaError(f"unknown node {f!r}")


def evaluate_batch(f, columns) -> np.ndarray:
    """Vectorised ``evaluate`` over aligned numpy arrays of variable values."""
    if isinstance(f, Var):
        if f.name not in columns:
            raise EvaluationError(f"unbound variable {f.name!r}")
        col = np.asarray(columns[f.name], dtype=float)
        if col.size and (col.min() < 0.0 or col.max() > 1.0):
            raise EvaluationError(f"values for {f.name!r} outside [0,1]")
        return col
    if isinstance(f, Const):
        some = next(iter(columns.values()))
        return np.full(np.shape(some), float(f.value))
    if isinstance(f, Not):
        return 1.0 - evaluate_batch(f.arg, columns)
    if isinstance(f, Implies):
        a = evaluate_batch(f.lhs, columns)
        b = evaluate_batch(f.rhs, columns)
        return np.minimum(1.0, 1.0 - a + b)
    if isinstance(f, Join):
        cols = [evaluate_batch(a, columns) for a in f.args]
        if f.op is OpKind.STRONG_AND:
            return np.maximum(0.0, sum(cols) - (len(cols) - 1))
        if f.op is OpKind.WEAK_AND:
            out = cols[0]
            for c in cols[1:]:
                out = np.minimum(out, c)
            return out
        if f.op is OpKind.STRONG_OR:
            return np.minimum(1.0, sum(cols))
        out = cols[0]
        for c in cols[1:]:
            out = np.maximum(out, c)
        return out
    if isinstance(f, (Atom, Quant)):
        raise EvaluationError("cannot evaluate atoms or quantifiers; ground first")
    raise FormulaError(f"unknown node {f!r}")


_GRID_POINT_CAP = 4_000_000


def equivalent_on_grid(f, g, steps: int = 11, tol: float = 1e-12) -> bool:
    """Compare two propositional formulas on a uniform grid.

    Both formulas must mention exactly the same variable set; ``steps``
    points per axis are placed uniformly on [0,1] including both endpoints.
    """
    if steps < 2:
        raise ValueError("steps must be at least 2")
    va, vb = variables(f), variables(g)
    if va != vb:
        raise EvaluationError(f"variable sets differ: {va} vs {vb}")
    if not va:
        return abs(evaluate(f, {}) - evaluate(g, {})) <= tol
    if steps ** len(va) > _GRID_POINT_CAP:
        raise EvaluationError("grid too large to enumerate")
    axis = np.linspace(0.0, 1.0, steps)
    mesh = np.meshgrid(*([axis] * len(va)), indexing="ij")
    columns = {name: m.ravel() for name, m in zip(va, mesh)}
    diff = np.abs(evaluate_batch(f, columns) - evaluate_batch(g, columns))
    return bool(diff.max() <= tol)


def iter_nodes(f):
    """Yield every node of the tree, preorder."""
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Not):
            stack.append(node.arg)
        elif isinstance(node, Implies):
            stack.append(node.rhs)
            stack.append(node.lhs)
        elif isinstance(node, Join):
            stack.extend(reversed(node.args))
        elif isinstance(node, Quant):
            stack.append(node.body)
