"""Quantifier elimination over finite domains.

Universal quantifiers expand to weak conjunctions and existentials to weak
disjunctions over the domain of the bound variable, so a first-order rule
becomes one propositional formula over grounded-atom variables.  The
grounding map fixes, per predicate, the ordered list of argument tuples and
a global flat index, which downstream solvers use as the coordinate system
for vectors of grounded truth values.
"""

import itertools
import json
from dataclasses import dataclass, field

from .formula import (
    Atom,
    Const,
    Implies,
    Join,
    Not,
    OpKind,
    Quant,
    Var,
)

DEFAULT_LEAF_GUARD = 1_000_000


class GroundingError(Exception):
    pass


def atom_name(pred: str, constants: tuple) -> str:
    """Canonical propositional name of a grounded atom."""
    if not constants:
        return pred
    return f"{pred}({','.join(constants)})"


@dataclass
class GroundingMap:
    """Ordered grounding tuples and flat offsets for every predicate."""

    predicates: tuple
    tuples: dict  # pred -> tuple of constant tuples
    offsets: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.offsets:
            off = 0
            for p in self.predicates:
                self.offsets[p] = off
                off += len(self.tuples[p])
        self._positions = {
            p: {tup: i for i, tup in enumerate(self.tuples[p])}
            for p in self.predicates
        }

    @classmethod
    def from_kb(cls, kb) -> "GroundingMap":
        preds = tuple(kb.predicates)
        tuples = {}
        for p in preds:
            domains = [kb.domains[d] for d in kb.predicates[p]]
            tuples[p] = tuple(itertools.product(*domains))
        return cls(preds, tuples)

    @property
    def size(self) -> int:
        return sum(len(t) for t in self.tuples.values())

    def index(self, pred: str, constants: tuple) -> int:
        pos = self._positions.get(pred, {}).get(tuple(constants))
        if pos is None:
            raise GroundingError(f"unknown grounding {atom_name(pred, tuple(constants))}")
        return self.offsets[pred] + pos

    def names(self) -> list:
        out = []
        for p in self.predicates:
            for tup in self.tuples[p]:
                out.append(atom_name(p, tup))
        return out

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "predicates": {
                p: {
                    "offset": self.offsets[p],
                    "tuples": [list(t) for t in self.tuples[p]],
                }
                for p in self.predicates
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _atom_domains(f, kb, bound):
    """Infer the domain of every quantified variable from atom positions."""
    domains = {}

    def walk(node, scope):
        if isinstance(node, Atom):
            sig = kb.predicates.get(node.pred)
            if sig is None:
                raise GroundingError(f"undeclared predicate {node.pred!r}")
            if len(sig) != len(node.args):
                raise GroundingError(f"arity mismatch for {node.pred!r}")
            for arg, dom in zip(node.args, sig):
                if arg in scope:
                    prev = domains.get(arg)
                    if prev is not None and prev != dom:
                        raise GroundingError(
                            f"variable {arg!r} used with domains {prev!r} and {dom!r}"
                        )
                    domains[arg] = dom
        elif isinstance(node, Not):
            walk(node.arg, scope)
        elif isinstance(node, Implies):
            walk(node.lhs, scope)
            walk(node.rhs, scope)
        elif isinstance(node, Join):
            for a in node.args:
                walk(a, scope)
        elif isinstance(node, Quant):
            walk(node.body, scope | {node.var})

    walk(f, set(bound))
    return domains


def grounded_leaf_count(f, kb) -> int:
    """Leaves of the propositional expansion, without building it."""
    domains = _atom_domains(f, kb, ())

    def count(node):
        if isinstance(node, (Atom, Var, Const)):
            return 1
        if isinstance(node, Not):
            return count(node.arg)
        if isinstance(node, Implies):
            return count(node.lhs) + count(node.rhs)
        if isinstance(node, Join):
            return sum(count(a) for a in node.args)
        if isinstance(node, Quant):
            dom = domains.get(node.var)
            if dom is None:
                raise GroundingError(
                    f"cannot infer a domain for {node.var!r}; it appears in no atom"
                )
            return len(kb.domains[dom]) * count(node.body)
        raise GroundingError(f"unknown node {node!r}")

    return count(f)


def ground(f, kb, gmap: GroundingMap = None, leaf_guard: int = DEFAULT_LEAF_GUARD,
           override_guard: bool = False):
    """Expand quantifiers over their finite domains.

    Returns ``(formula, gmap)`` where the formula is propositional with
    grounded-atom variable names.  Expansions beyond ``leaf_guard`` leaves
    are refused unless ``override_guard`` is set.
    """
    if gmap is None:
        gmap = GroundingMap.from_kb(kb)
    total = grounded_leaf_count(f, kb)
    if total > leaf_guard and not override_guard:
        raise GroundingError(
            f"grounding would expand to {total} leaves (guard {leaf_guard}); "
            "override to proceed"
        )
    domains = _atom_domains(f, kb, ())
    return _ground(f, kb, gmap, domains, {}), gmap


def _ground(f, kb, gmap, domains, env):
    if isinstance(f, Atom):
        consts = []
        for arg, dom in zip(f.args, kb.predicates[f.pred]):
            if arg in env:
                consts.append(env[arg])
            elif arg in kb.domains.get(dom, ()):
                consts.append(arg)
            else:
                raise GroundingError(
                    f"argument {arg!r} of {f.pred!r} is neither bound nor a "
                    f"constant of domain {dom!r}"
                )
        name = atom_name(f.pred, tuple(consts))
        gmap.index(f.pred, tuple(consts))  # validates membership
        return Var(name)
    if isinstance(f, Var):
        raise GroundingError(
            f"free propositional variable {f.name!r} inside a first-order rule"
        )
    if isinstance(f, Const):
        return f
    if isinstance(f, Not):
        return Not(_ground(f.arg, kb, gmap, domains, env))
    if isinstance(f, Implies):
        return Implies(
            _ground(f.lhs, kb, gmap, domains, env),
            _ground(f.rhs, kb, gmap, domains, env),
        )
    if isinstance(f, Join):
        return Join(f.op, tuple(_ground(a, kb, gmap, domains, env) for a in f.args))
    if isinstance(f, Quant):
        dom_name = domains.get(f.var)
        if dom_name is None:
            raise GroundingError(
                f"cannot infer a domain for {f.var!r}; it appears in no atom"
            )
        consts = kb.domains[dom_name]
        parts = [
            _ground(f.body, kb, gmap, domains, {**env, f.var: c}) for c in consts
        ]
        if len(parts) == 1:
            return parts[0]
        op = OpKind.WEAK_AND if f.universal else OpKind.WEAK_OR
        return Join(op, tuple(parts))
    raise GroundingError(f"unknown node {f!r}")


@dataclass
class GroundInstance:
    """One grounding of the leading universal prefix of a rule."""

    binding: dict
    formula: object


def ground_instances(f, kb, gmap: GroundingMap = None,
                     leaf_guard: int = DEFAULT_LEAF_GUARD,
                     override_guard: bool = False):
    """Ground a rule, splitting the leading universal prefix.

    Each combination of values for the outermost run of universal
    quantifiers yields its own propositional formula, which is how one
    quantified rule becomes many independent constraints.  Formulas with no
    leading universals produce a single instance with an empty binding.
    """
    if gmap is None:
        gmap = GroundingMap.from_kb(kb)
    total = grounded_leaf_count(f, kb)
    if total > leaf_guard and not override_guard:
        raise GroundingError(
            f"grounding would expand to {total} leaves (guard {leaf_guard}); "
            "override to proceed"
        )
    domains = _atom_domains(f, kb, ())
    prefix = []
    body = f
    while isinstance(body, Quant) and body.universal:
        prefix.append(body.var)
        body = body.body
    axes = []
    for v in prefix:
        dom_name = domains.get(v)
        if dom_name is None:
            raise GroundingError(
                f"cannot infer a domain for {v!r}; it appears in no atom"
            )
        axes.append(kb.domains[dom_name])
    out = []
    for combo in itertools.product(*axes):
        env = dict(zip(prefix, combo))
        out.append(GroundInstance(env, _ground(body, kb, gmap, domains, env)))
    return out, gmap
