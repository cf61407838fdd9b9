"""Compile fragment formulas to integer-coefficient piecewise-linear forms.

A concave-fragment formula evaluates to ``min(1, min_i(M_i . x + q_i))`` and
a convex-fragment formula to ``max(0, max_i(M_i . x + q_i))``; the constant
cap (respectively floor) is stored as an explicit all-zero piece and is kept
through pruning, so a compiled form is always safe to read as plain
min / max over its pieces.

The construction walks the normalized tree: literals and constants are
single affine pieces, a weak join concatenates the operand pieces, and a
strong join sums pieces pairwise across operands (the piece-level image of
distributing strong over weak).  Dominated pieces are discarded after every
such product to keep the blow-up in check.

The reverse direction rebuilds a formula from a min-form by reading each
piece as one strong disjunction: positive coefficients contribute repeated
plain literals, negative ones repeated negated literals, and the residual
intercept contributes repeated truth constants.
"""

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .formula import Const, Join, Not, OpKind, Var, is_literal
from .formula import variables as _formula_variables
from .normalize import FragmentLabel, classify, is_normalized


class CompilationError(Exception):
    pass


class EnvelopeError(Exception):
    pass


class FormKind(Enum):
    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class AffinePiece:
    """One affine function ``coeffs . x + intercept`` with integer data."""

    coeffs: tuple
    intercept: int

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(int(c) for c in self.coeffs))
        object.__setattr__(self, "intercept", int(self.intercept))


@dataclass(frozen=True)
class PiecewiseLinearForm:
    kind: FormKind
    variables: tuple
    pieces: tuple

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "pieces", tuple(self.pieces))
        n = len(self.variables)
        for p in self.pieces:
            if len(p.coeffs) != n:
                raise CompilationError("piece arity does not match variable list")

    @property
    def guard_piece(self):
        """The constant cap (min) or floor (max) piece."""
        q = 1 if self.kind is FormKind.MIN else 0
        return AffinePiece((0,) * len(self.variables), q)


def envelope(form: PiecewiseLinearForm, values) -> float:
    """Evaluate the form at one point; ``values`` maps names to numbers."""
    vec = np.array([float(values[v]) for v in form.variables])
    vals = [float(np.dot(p.coeffs, vec)) + p.intercept for p in form.pieces]
    return min(vals) if form.kind is FormKind.MIN else max(vals)


def envelope_batch(form: PiecewiseLinearForm, points: np.ndarray) -> np.ndarray:
    """Evaluate over an (N, n) array whose columns follow form.variables."""
    points = np.asarray(points, dtype=float)
    M = np.array([p.coeffs for p in form.pieces], dtype=float)
    q = np.array([p.intercept for p in form.pieces], dtype=float)
    vals = points @ M.T + q
    return vals.min(axis=1) if form.kind is FormKind.MIN else vals.max(axis=1)


def _cube_min(coeffs, intercept):
    """Exact minimum of an integer affine function over the unit cube."""
    return sum(c for c in coeffs if c < 0) + intercept


def _dominates(p, q, kind) -> bool:
    """True when piece ``p`` makes ``q`` redundant everywhere on the cube."""
    diff = tuple(cq - cp for cp, cq in zip(p.coeffs, q.coeffs))
    if kind is FormKind.MIN:
        # need p <= q on the cube, i.e. min(q - p) >= 0
        return _cube_min(diff, q.intercept - p.intercept) >= 0
    # max form: need p >= q on the cube
    return _cube_min(tuple(-d for d in diff), p.intercept - q.intercept) >= 0


def _prune(pieces, kind, keep=()):
    """Drop duplicated and dominated pieces; ``keep`` pieces always survive."""
    seen = set()
    unique = []
    for p in pieces:
        key = (p.coeffs, p.intercept)
        if key not in seen:
            seen.add(key)
            unique.append(p)
    kept = []
    for i, p in enumerate(unique):
        if p in keep:
            kept.append(p)
            continue
        dominated = any(
            j != i and _dominates(q, p, kind) for j, q in enumerate(unique)
        )
        if not dominated:
            kept.append(p)
    return kept


def prune_dominated(form: PiecewiseLinearForm) -> PiecewiseLinearForm:
    """Remove pieces that never attain the envelope.

    The constant guard piece is exempt: every min-form keeps its cap and
    every max-form its floor, so the [0,1] clipping stays explicit.
    """
    guard = form.guard_piece
    keep = {guard} if guard in form.pieces else set()
    pruned = _prune(form.pieces, form.kind, keep=keep)
    return PiecewiseLinearForm(form.kind, form.variables, tuple(pruned))


def _literal_piece(f, index, n):
    """Piece for a literal or constant (identical in both form kinds)."""
    row = [0] * n
    if isinstance(f, Var):
        row[index[f.name]] = 1
        return AffinePiece(tuple(row), 0)
    if isinstance(f, Not):
        row[index[f.arg.name]] = -1
        return AffinePiece(tuple(row), 1)
    if isinstance(f, Const):
        return AffinePiece(tuple(row), f.value)
    raise CompilationError(f"not a literal: {f!r}")


def _sum_product(blocks, kind, offset):
    """Combine operand piece lists of a strong join.

    Summing one piece from every operand (and shifting by ``offset`` per
    merge for the truncated difference) enumerates exactly the affine pieces
    of the connective applied to the operand envelopes.
    """
    acc = blocks[0]
    for block in blocks[1:]:
        acc = [
            AffinePiece(
                tuple(a + b for a, b in zip(p.coeffs, r.coeffs)),
                p.intercept + r.intercept + offset,
            )
            for p in acc
            for r in block
        ]
        acc = _prune(acc, kind)
    return acc


def _pieces(f, index, n, kind):
    if is_literal(f) or isinstance(f, Const):
        return [_literal_piece(f, index, n)]
    if not isinstance(f, Join):
        raise CompilationError(f"unsupported node {f!r}; normalize first")
    blocks = [_pieces(a, index, n, kind) for a in f.args]
    if kind is FormKind.MIN:
        if f.op is OpKind.WEAK_AND:
            merged = [p for b in blocks for p in b]
            return _prune(merged, kind)
        if f.op is OpKind.STRONG_OR:
            return _sum_product(blocks, kind, 0)
        raise CompilationError(f"connective {f.op.value!r} is outside the concave fragment")
    if f.op is OpKind.WEAK_OR:
        merged = [p for b in blocks for p in b]
        return _prune(merged, kind)
    if f.op is OpKind.STRONG_AND:
        return _sum_product(blocks, kind, -1)
    raise CompilationError(f"connective {f.op.value!r} is outside the convex fragment")


def compile_formula(f, label: FragmentLabel = None, variables=None) -> PiecewiseLinearForm:
    """Compile a normalized fragment formula to its piecewise-linear form.

    ``label`` picks the target for formulas in both fragments (literals and
    constants); otherwise it must match ``classify(f)``.  ``variables`` fixes
    the coordinate order, defaulting to sorted variable names.
    """
    if not is_normalized(f):
        raise CompilationError("compile expects a normalized formula")
    actual = classify(f)
    if actual is FragmentLabel.NEITHER:
        raise CompilationError("formula is outside both fragments")
    if label is None:
        label = actual if actual is not FragmentLabel.BOTH else FragmentLabel.CONCAVE
    if label not in (FragmentLabel.CONCAVE, FragmentLabel.CONVEX):
        raise CompilationError(f"target label must be concave or convex, got {label}")
    if actual is not FragmentLabel.BOTH and actual is not label:
        raise CompilationError(f"formula classifies {actual.value}, not {label.value}")

    names = tuple(variables) if variables is not None else _formula_variables(f)
    missing = set(_formula_variables(f)) - set(names)
    if missing:
        raise CompilationError(f"variable order misses {sorted(missing)}")
    index = {v: i for i, v in enumerate(names)}
    n = len(names)
    kind = FormKind.MIN if label is FragmentLabel.CONCAVE else FormKind.MAX
    pieces = _pieces(f, index, n, kind)
    guard = AffinePiece((0,) * n, 1 if kind is FormKind.MIN else 0)
    if guard not in pieces:
        pieces = pieces + [guard]
    pieces = _prune(pieces, kind, keep={guard})
    return PiecewiseLinearForm(kind, names, tuple(pieces))


def negate_form(form: PiecewiseLinearForm) -> PiecewiseLinearForm:
    """Pointwise complement: min-forms become max-forms and back."""
    flipped = tuple(
        AffinePiece(tuple(-c for c in p.coeffs), 1 - p.intercept) for p in form.pieces
    )
    kind = FormKind.MAX if form.kind is FormKind.MIN else FormKind.MIN
    return PiecewiseLinearForm(kind, form.variables, flipped)


def _repeat(parts, leaf, count):
    parts.extend([leaf] * count)


def affine_to_formula(form: PiecewiseLinearForm):
    """Rebuild a formula whose semantics is the (capped) min-form envelope.

    Each non-guard piece turns into a strong disjunction of repeated
    literals; the conjunction of those clauses evaluates back to the
    envelope.  Requires a min-form whose pieces stay nonnegative on the
    cube, i.e. residual intercepts ``q_i >= 0``.
    """
    if form.kind is not FormKind.MIN:
        raise EnvelopeError("expected a min-form; negate max-forms first")
    clauses = []
    for p in form.pieces:
        neg_weight = sum(-c for c in p.coeffs if c < 0)
        residual = p.intercept - neg_weight
        if residual < 0:
            raise EnvelopeError(
                f"piece {p.coeffs} + {p.intercept} dips below 0 on the cube"
            )
        if all(c == 0 for c in p.coeffs):
            if p.intercept == 0:
                return Const(0)
            continue  # constant >= 1 clause is vacuous under the cap
        parts = []
        for name, c in zip(form.variables, p.coeffs):
            if c > 0:
                _repeat(parts, Var(name), c)
            elif c < 0:
                _repeat(parts, Not(Var(name)), -c)
        _repeat(parts, Const(1), residual)
        clauses.append(parts[0] if len(parts) == 1 else Join(OpKind.STRONG_OR, tuple(parts)))
    if not clauses:
        return Const(1)
    if len(clauses) == 1:
        return clauses[0]
    return Join(OpKind.WEAK_AND, tuple(clauses))


# ---------------------------------------------------------------------------
# serialization


def form_to_dict(form: PiecewiseLinearForm) -> dict:
    return {
        "kind": form.kind.value,
        "variables": list(form.variables),
        "pieces": [
            {"coeffs": list(p.coeffs), "intercept": p.intercept} for p in form.pieces
        ],
    }


def form_to_json(form: PiecewiseLinearForm) -> str:
    return json.dumps(form_to_dict(form), indent=2, sort_keys=True)


def form_from_dict(data: dict) -> PiecewiseLinearForm:
    kind = FormKind(data["kind"])
    variables = tuple(data["variables"])
    pieces = tuple(
        AffinePiece(tuple(p["coeffs"]), p["intercept"]) for p in data["pieces"]
    )
    return PiecewiseLinearForm(kind, variables, pieces)


def form_from_json(text: str) -> PiecewiseLinearForm:
    return form_from_dict(json.loads(text))
