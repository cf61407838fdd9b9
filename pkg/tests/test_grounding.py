import json

import pytest

from lukqp.formula import Var, implies, weak_and, weak_or
from lukqp.grounding import (
    GroundingError,
    GroundingMap,
    atom_name,
    ground,
    ground_instances,
    grounded_leaf_count,
)
from lukqp.normalize import normalize
from lukqp.parser import parse_formula, parse_kb

TWO_PRED_KB = """
domain U = {x1, x2}
domain V = {y1, y2, y3, y4}
pred p1(U)
pred p2(V)
rule r: forall x: exists y: p1(x) -> p2(y)
"""


def test_two_predicate_expansion_structure():
    # One universal over two constants and one existential over a split
    # codomain: the expansion is a weak conjunction of weak disjunctions of
    # implications between grounded atoms.
    kb = parse_kb(
        """
        domain U = {x1, x2}
        domain V1 = {y1, y2}
        pred p1(U)
        pred p2a(V1)
        rule r: forall x: exists y: p1(x) -> p2a(y)
        """
    )
    f, gmap = ground(kb.rule("r").formula, kb)
    p11, p12 = Var("p1(x1)"), Var("p1(x2)")
    q1, q2 = Var("p2a(y1)"), Var("p2a(y2)")
    expected = weak_and(
        weak_or(implies(p11, q1), implies(p11, q2)),
        weak_or(implies(p12, q1), implies(p12, q2)),
    )
    assert normalize(f) == normalize(expected)


def test_grounding_map_offsets_and_indices():
    kb = parse_kb(TWO_PRED_KB)
    gmap = GroundingMap.from_kb(kb)
    assert gmap.size == 6
    assert gmap.index("p1", ("x1",)) == 0
    assert gmap.index("p1", ("x2",)) == 1
    assert gmap.index("p2", ("y1",)) == 2
    assert gmap.index("p2", ("y4",)) == 5
    with pytest.raises(GroundingError):
        gmap.index("p2", ("zz",))


def test_singleton_domain_collapses_quantifier():
    kb = parse_kb("domain U = {a}; pred p(U); rule r: forall x: p(x)")
    f, _ = ground(kb.rule("r").formula, kb)
    assert f == Var("p(a)")


def test_constants_allowed_as_atom_arguments():
    kb = parse_kb("domain U = {a, b}; pred p(U); rule r: p(a)")
    f, _ = ground(kb.rule("r").formula, kb)
    assert f == Var("p(a)")


def test_unbound_argument_rejected():
    kb = parse_kb("domain U = {a}; pred p(U); rule r: forall x: p(x)")
    bad = parse_formula("p(zz)")
    with pytest.raises(GroundingError):
        ground(bad, kb)


def test_variable_without_atom_rejected():
    kb = parse_kb("domain U = {a}; pred p(U); rule r: forall x: p(a)")
    with pytest.raises(GroundingError):
        ground(kb.rule("r").formula, kb)


def test_leaf_count_matches_product_rule():
    kb = parse_kb(TWO_PRED_KB)
    f = kb.rule("r").formula
    # forall over 2, exists over 4, two leaves inside the implication
    assert grounded_leaf_count(f, kb) == 2 * 4 * 2
    g, _ = ground(f, kb)
    leaves = sum(1 for v in str_vars(g))
    assert leaves == 16


def str_vars(f):
    from lukqp.formula import iter_nodes

    return [n for n in iter_nodes(f) if isinstance(n, Var)]


def test_memory_guard_trips_and_overrides():
    names = ",".join(f"c{i}" for i in range(12))
    kb = parse_kb(
        f"domain U = {{{names}}}\npred p(U, U, U)\n"
        "rule r: forall x: forall y: forall z: p(x,y,z)"
    )
    f = kb.rule("r").formula
    assert grounded_leaf_count(f, kb) == 12 ** 3
    with pytest.raises(GroundingError):
        ground(f, kb, leaf_guard=1000)
    g, _ = ground(f, kb, leaf_guard=1000, override_guard=True)
    assert g is not None
    assert len(str_vars(g)) == 12 ** 3


def test_ground_instances_split_leading_universals():
    kb = parse_kb(TWO_PRED_KB)
    instances, gmap = ground_instances(kb.rule("r").formula, kb)
    assert len(instances) == 2
    assert instances[0].binding == {"x": "x1"}
    assert instances[1].binding == {"x": "x2"}
    p11 = Var("p1(x1)")
    expected = weak_or(
        *[implies(p11, Var(atom_name("p2", (f"y{i}",)))) for i in range(1, 5)]
    )
    assert instances[0].formula == expected


def test_ground_instances_without_quantifier():
    kb = parse_kb("domain U = {a}; pred p(U); rule r: p(a)")
    instances, _ = ground_instances(kb.rule("r").formula, kb)
    assert len(instances) == 1
    assert instances[0].binding == {}
    assert instances[0].formula == Var("p(a)")


def test_map_json_export():
    kb = parse_kb(TWO_PRED_KB)
    gmap = GroundingMap.from_kb(kb)
    data = json.loads(gmap.to_json())
    assert data["size"] == 6
    assert data["predicates"]["p1"]["offset"] == 0
    assert data["predicates"]["p2"]["offset"] == 2
    assert data["predicates"]["p2"]["tuples"][0] == ["y1"]


def test_domain_conflict_rejected():
    kb = parse_kb(
        """
        domain U = {a}
        domain V = {b}
        pred p(U)
        pred q(V)
        rule r: forall x: (p(x)) ^ (q(x))
        """
    )
    with pytest.raises(GroundingError):
        ground(kb.rule("r").formula, kb)
