import numpy as np
import pytest

from lukqp.formula import (
    Atom,
    Const,
    Implies,
    Join,
    Not,
    OpKind,
    Quant,
    Var,
)
from lukqp.parser import ParseError, parse_formula, parse_kb, print_formula


def test_single_operator_chains():
    f = parse_formula("a + b + c")
    assert f == Join(OpKind.STRONG_OR, (Var("a"), Var("b"), Var("c")))
    f = parse_formula("a * b * c")
    assert f == Join(OpKind.STRONG_AND, (Var("a"), Var("b"), Var("c")))
    f = parse_formula("a ^ b")
    assert f == Join(OpKind.WEAK_AND, (Var("a"), Var("b")))
    f = parse_formula("a | b")
    assert f == Join(OpKind.WEAK_OR, (Var("a"), Var("b")))


def test_negation_binds_tightest():
    f = parse_formula("~a + b")
    assert f == Join(OpKind.STRONG_OR, (Not(Var("a")), Var("b")))


def test_mixed_connectives_rejected():
    with pytest.raises(ParseError):
        parse_formula("a * b + c")
    with pytest.raises(ParseError):
        parse_formula("a + b | c")
    with pytest.raises(ParseError):
        parse_formula("a ^ b * c")


def test_parenthesised_mixing_accepted():
    f = parse_formula("(a * b) + c")
    assert f == Join(
        OpKind.STRONG_OR,
        (Join(OpKind.STRONG_AND, (Var("a"), Var("b"))), Var("c")),
    )


def test_implication_right_associative():
    f = parse_formula("a -> b -> c")
    assert f == Implies(Var("a"), Implies(Var("b"), Var("c")))


def test_implication_operands_need_parens_for_chains():
    with pytest.raises(ParseError):
        parse_formula("a * b -> c")
    f = parse_formula("(a ^ b) -> (c ^ d)")
    assert f == Implies(
        Join(OpKind.WEAK_AND, (Var("a"), Var("b"))),
        Join(OpKind.WEAK_AND, (Var("c"), Var("d"))),
    )


def test_constants_and_atoms():
    f = parse_formula("p(u,v) + 1")
    assert f == Join(OpKind.STRONG_OR, (Atom("p", ("u", "v")), Const(1)))
    assert parse_formula("0") == Const(0)
    assert parse_formula("q()") == Atom("q", ())


def test_quantifiers():
    f = parse_formula("forall x: exists y: p(x) -> q(x,y)")
    assert f == Quant(
        True, "x", Quant(False, "y", Implies(Atom("p", ("x",)), Atom("q", ("x", "y"))))
    )


def test_parse_error_reports_position():
    with pytest.raises(ParseError) as e:
        parse_formula("a +\n+ b")
    assert e.value.line == 2


def test_unexpected_character():
    with pytest.raises(ParseError):
        parse_formula("a $ b")


def test_trailing_input_rejected():
    with pytest.raises(ParseError):
        parse_formula("a b")


def test_kb_roundtrip_statements():
    kb = parse_kb(
        """
        # toy knowledge base
        domain U = {x1, x2}
        pred p1(U)
        pred p2(U, U)
        rule r1 [w=2.5]: forall x: p1(x)
        rule r2: forall x: exists y: (p1(x)) -> (p2(x,y))
        """
    )
    assert kb.domains["U"] == ("x1", "x2")
    assert kb.predicates["p1"] == ("U",)
    assert kb.predicates["p2"] == ("U", "U")
    assert kb.rule("r1").weight == 2.5
    assert kb.rule("r2").weight == 1.0
    assert len(kb.rules) == 2


def test_kb_semicolon_separators():
    kb = parse_kb("domain U = {a}; pred p(U); rule r: forall v: p(v)")
    assert kb.predicates == {"p": ("U",)}


def test_kb_zero_ary_predicates_from_bare_names():
    kb = parse_kb("pred a(); pred b(); rule r: a -> b")
    assert kb.rule("r").formula == Implies(Atom("a", ()), Atom("b", ()))


def test_kb_undeclared_predicate_rejected():
    with pytest.raises(ParseError):
        parse_kb("domain U = {a}; pred p(U); rule r: q(a)")
    with pytest.raises(ParseError):
        parse_kb("rule r: a -> b")


def test_kb_arity_mismatch_rejected():
    with pytest.raises(ParseError):
        parse_kb("domain U = {a}; pred p(U); rule r: forall x: forall y: p(x,y)")


def test_kb_undeclared_domain_rejected():
    with pytest.raises(ParseError):
        parse_kb("pred p(V); rule r: forall x: p(x)")


def test_kb_duplicate_names_rejected():
    with pytest.raises(ParseError):
        parse_kb("domain U = {a}; domain U = {b}")
    with pytest.raises(ParseError):
        parse_kb("domain U = {a}; pred p(U); pred p(U)")
    with pytest.raises(ParseError):
        parse_kb("pred a(); rule r: a; rule r: a")


def test_print_simple_forms():
    assert print_formula(parse_formula("a + ~b + 1")) == "a + ~b + 1"
    assert print_formula(parse_formula("(a * b) -> c")) == "(a * b) -> c"
    assert print_formula(parse_formula("forall x: p(x)")) == "forall x: p(x)"


def _random_formula(rng, depth, vars_pool):
    pick = rng.integers(0, 8)
    if depth <= 0 or pick < 2:
        r = rng.integers(0, 4)
        if r == 0:
            return Const(int(rng.integers(0, 2)))
        name = vars_pool[rng.integers(0, len(vars_pool))]
        return Var(name) if r < 3 else Not(Var(name))
    if pick == 2:
        return Not(_random_formula(rng, depth - 1, vars_pool))
    if pick == 3:
        return Implies(
            _random_formula(rng, depth - 1, vars_pool),
            _random_formula(rng, depth - 1, vars_pool),
        )
    op = [OpKind.STRONG_AND, OpKind.WEAK_AND, OpKind.STRONG_OR, OpKind.WEAK_OR][
        int(rng.integers(0, 4))
    ]
    width = int(rng.integers(2, 4))
    return Join(op, tuple(_random_formula(rng, depth - 1, vars_pool) for _ in range(width)))


def test_print_parse_roundtrip_property():
    rng = np.random.default_rng(20240817)
    pool = ["a", "b", "c", "d", "e"]
    for _ in range(300):
        f = _random_formula(rng, 4, pool)
        text = print_formula(f)
        assert parse_formula(text) == f, text
