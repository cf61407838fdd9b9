"""Negation normal form, fragment classification, and clause translation.

A normalized formula has no implications and carries negation only on
variables and atoms.  On normalized trees the two tractable families are
purely syntactic:

* concave fragment: weak conjunction and strong disjunction only
  (pointwise min of affine functions),
* convex fragment: strong conjunction and weak disjunction only
  (pointwise max of affine functions).

Literals and constants belong to both, everything else to neither.
Negation normal form swaps the families, which is what makes penalties of
concave rules convex.
"""

from enum import Enum

from .formula import (
    Atom,
    Const,
    Implies,
    Join,
    Not,
    OpKind,
    Quant,
    Var,
    is_literal,
)


class FragmentLabel(Enum):
    CONCAVE = "concave"
    CONVEX = "convex"
    BOTH = "both"
    NEITHER = "neither"


class NotNormalizedError(Exception):
    pass


class TranslationError(Exception):
    pass


_DUAL = {
    OpKind.STRONG_AND: OpKind.STRONG_OR,
    OpKind.STRONG_OR: OpKind.STRONG_AND,
    OpKind.WEAK_AND: OpKind.WEAK_OR,
    OpKind.WEAK_OR: OpKind.WEAK_AND,
}


def normalize(f):
    """Eliminate implications and push negations down to the leaves.

    Quantifiers are rejected; ground first.  Nested joins of one connective
    are flattened, so the output is canonical enough for classify().
    """
    if isinstance(f, Quant):
        raise NotNormalizedError("normalize expects a propositional formula")
    return _nnf(f, False)


def _nnf(f, negated):
    if isinstance(f, (Var, Atom)):
        return Not(f) if negated else f
    if isinstance(f, Const):
        return Const(1 - f.value) if negated else f
    if isinstance(f, Not):
        return _nnf(f.arg, not negated)
    if isinstance(f, Implies):
        # a -> b is ~a + b
        body = Join(OpKind.STRONG_OR, (Not(f.lhs), f.rhs))
        return _nnf(body, negated)
    if isinstance(f, Join):
        op = _DUAL[f.op] if negated else f.op
        parts = []
        for a in f.args:
            sub = _nnf(a, negated)
            if isinstance(sub, Join) and sub.op is op:
                parts.extend(sub.args)
            else:
                parts.append(sub)
        return Join(op, tuple(parts))
    if isinstance(f, Quant):
        raise NotNormalizedError("normalize expects a propositional formula")
    raise NotNormalizedError(f"unknown node {f!r}")


def is_normalized(f) -> bool:
    if isinstance(f, (Var, Atom, Const)):
        return True
    if isinstance(f, Not):
        return isinstance(f.arg, (Var, Atom))
    if isinstance(f, Join):
        return all(is_normalized(a) for a in f.args)
    return False


def simplify(f):
    """Fold constants and duplicate weak-join operands; keep semantics exact.

    Applied to normalized trees.  Absorbing and neutral constants disappear
    (1 absorbs weak/strong disjunction, 0 absorbs the conjunctions, the
    other constant drops out), and idempotent weak joins are deduplicated.
    """
    if not isinstance(f, Join):
        return f
    args = [simplify(a) for a in f.args]
    flat = []
    for a in args:
        if isinstance(a, Join) and a.op is f.op:
            flat.extend(a.args)
        else:
            flat.append(a)
    op = f.op
    absorbing = {
        OpKind.STRONG_AND: 0,
        OpKind.WEAK_AND: 0,
        OpKind.STRONG_OR: 1,
        OpKind.WEAK_OR: 1,
    }[op]
    neutral = 1 - absorbing
    kept = []
    for a in flat:
        if isinstance(a, Const):
            if a.value == absorbing:
                return Const(absorbing)
            continue  # neutral constant drops
        kept.append(a)
    if op in (OpKind.WEAK_AND, OpKind.WEAK_OR):
        seen = set()
        deduped = []
        for a in kept:
            if a not in seen:
                seen.add(a)
                deduped.append(a)
        kept = deduped
    if not kept:
        return Const(neutral)
    if len(kept) == 1:
        return kept[0]
    return Join(op, tuple(kept))


def _syntactic_label(f) -> FragmentLabel:
    if is_literal(f) or isinstance(f, Const):
        return FragmentLabel.BOTH
    if isinstance(f, Join):
        labels = [_syntactic_label(a) for a in f.args]
        if any(l is FragmentLabel.NEITHER for l in labels):
            return FragmentLabel.NEITHER
        if f.op in (OpKind.WEAK_AND, OpKind.STRONG_OR):
            if all(l in (FragmentLabel.CONCAVE, FragmentLabel.BOTH) for l in labels):
                return FragmentLabel.CONCAVE
            return FragmentLabel.NEITHER
        if all(l in (FragmentLabel.CONVEX, FragmentLabel.BOTH) for l in labels):
            return FragmentLabel.CONVEX
        return FragmentLabel.NEITHER
    return FragmentLabel.NEITHER


_DISTRIBUTE_CAP = 256


def _distribute(f, budget):
    """One full pass distributing strong joins over weak joins underneath."""
    if not isinstance(f, Join) or budget[0] <= 0:
        return f
    args = [_distribute(a, budget) for a in f.args]
    f = Join(f.op, tuple(args))
    if f.op not in (OpKind.STRONG_AND, OpKind.STRONG_OR):
        return f
    weak_op = OpKind.WEAK_OR if f.op is OpKind.STRONG_AND else OpKind.WEAK_AND
    for i, a in enumerate(args):
        if isinstance(a, Join) and a.op is weak_op:
            rest = args[:i] + args[i + 1 :]
            branches = []
            for choice in a.args:
                budget[0] -= 1
                inner = Join(f.op, tuple(rest[:i] + [choice] + rest[i:]))
                branches.append(_distribute(inner, budget))
            return Join(weak_op, tuple(branches))
    return f


def classify(f) -> FragmentLabel:
    """Place a normalized formula in the concave or convex fragment.

    Syntactic on the connective tree, after a light rewrite pass (constant
    folding, idempotent deduplication, and distribution of strong over weak
    connectives).  Semantic membership up to general equivalence is not
    decided; formulas mixing the families stay NEITHER.
    """
    if not is_normalized(f):
        raise NotNormalizedError("classify expects a normalized formula")
    label = _syntactic_label(f)
    if label is not FragmentLabel.NEITHER:
        return label
    g = simplify(f)
    label = _syntactic_label(g)
    if label is not FragmentLabel.NEITHER:
        return label
    g = simplify(_distribute(g, [_DISTRIBUTE_CAP]))
    return _syntactic_label(g)


def fragment_violation_path(f) -> str:
    """Human-readable path to the first connective that leaves both fragments."""
    if not is_normalized(f):
        raise NotNormalizedError("expected a normalized formula")

    def walk(node, path):
        if not isinstance(node, Join):
            return None
        here = _syntactic_label(node)
        if here is not FragmentLabel.NEITHER:
            return None
        for i, a in enumerate(node.args):
            sub = walk(a, path + f".args[{i}]")
            if sub:
                return sub
        ops = sorted({a.op.value for a in node.args if isinstance(a, Join)} | {node.op.value})
        return f"{path}: connective {node.op.value!r} over {ops} mixes the fragments"

    out = walk(f, "root")
    return out or "root: formula is inside a fragment"


_CNF_TARGETS = {
    "concave": (OpKind.WEAK_AND, OpKind.STRONG_OR),
    "convex": (OpKind.STRONG_AND, OpKind.WEAK_OR),
    "strong": (OpKind.STRONG_AND, OpKind.STRONG_OR),
}


def fuzzify_cnf(clauses, target: str):
    """Translate boolean CNF clauses into one of the connective families.

    ``clauses`` is a list of clauses, each clause a list of ``(name, positive)``
    literal pairs; ``name`` may also be a formula leaf (Var or Atom).  Targets:

    * ``"concave"``: weak conjunction of strong disjunctions,
    * ``"convex"``: strong conjunction of weak disjunctions,
    * ``"strong"``: strong conjunction of strong disjunctions (generally
      outside both fragments; kept for the non-convex baseline).
    """
    if target not in _CNF_TARGETS:
        raise TranslationError(f"unknown target {target!r}")
    if not clauses:
        raise TranslationError("empty clause list")
    conj_op, disj_op = _CNF_TARGETS[target]
    conj_parts = []
    for clause in clauses:
        if not clause:
            raise TranslationError("empty clause")
        lits = []
        for name, positive in clause:
            leaf = name if isinstance(name, (Var, Atom)) else Var(name)
            lits.append(leaf if positive else Not(leaf))
        conj_parts.append(lits[0] if len(lits) == 1 else Join(disj_op, tuple(lits)))
    if len(conj_parts) == 1:
        return conj_parts[0]
    return Join(conj_op, tuple(conj_parts))
