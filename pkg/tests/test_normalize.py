import numpy as np
import pytest

from lukqp.formula import (
    Const,
    Implies,
    Join,
    Not,
    OpKind,
    Var,
    evaluate,
    forall,
    implies,
    neg,
    strong_and,
    strong_or,
    weak_and,
    weak_or,
)
from lukqp.normalize import (
    FragmentLabel,
    NotNormalizedError,
    TranslationError,
    classify,
    fragment_violation_path,
    fuzzify_cnf,
    is_normalized,
    normalize,
    simplify,
)

x, y, z = Var("x"), Var("y"), Var("z")


def test_negated_strong_and_becomes_strong_or():
    assert normalize(neg(strong_and(x, y))) == strong_or(neg(x), neg(y))


def test_negated_weak_joins_swap():
    assert normalize(neg(weak_and(x, y))) == weak_or(neg(x), neg(y))
    assert normalize(neg(weak_or(x, y))) == weak_and(neg(x), neg(y))


def test_double_negation_cancels():
    assert normalize(neg(neg(x))) == x


def test_hornlike_implication_flattens():
    f = implies(strong_and(x, y, z), Var("w"))
    assert normalize(f) == strong_or(neg(x), neg(y), neg(z), Var("w"))


def test_negated_implication():
    assert normalize(neg(implies(x, y))) == strong_and(x, neg(y))


def test_negated_constants():
    assert normalize(neg(Const(0))) == Const(1)
    assert normalize(neg(Const(1))) == Const(0)


def test_quantifier_rejected():
    with pytest.raises(NotNormalizedError):
        normalize(forall("v", x))


def test_normalize_preserves_semantics():
    rng = np.random.default_rng(29)
    pool = ["x", "y", "z"]

    def rand_f(depth):
        pick = rng.integers(0, 7)
        if depth == 0 or pick == 0:
            k = rng.integers(0, 4)
            if k == 3:
                return Const(int(rng.integers(0, 2)))
            return Var(pool[k])
        if pick == 1:
            return neg(rand_f(depth - 1))
        if pick == 2:
            return implies(rand_f(depth - 1), rand_f(depth - 1))
        op = [OpKind.STRONG_AND, OpKind.WEAK_AND, OpKind.STRONG_OR, OpKind.WEAK_OR][
            int(rng.integers(0, 4))
        ]
        return Join(op, (rand_f(depth - 1), rand_f(depth - 1)))

    for _ in range(300):
        f = rand_f(4)
        g = normalize(f)
        assert is_normalized(g)
        v = {n: rng.random() for n in pool}
        assert evaluate(f, v) == pytest.approx(evaluate(g, v), abs=1e-12)


def test_classify_examples():
    assert classify(strong_or(x, neg(y))) is FragmentLabel.CONCAVE
    assert classify(weak_or(strong_and(x, y), z)) is FragmentLabel.CONVEX
    assert classify(x) is FragmentLabel.BOTH
    assert classify(neg(x)) is FragmentLabel.BOTH
    assert classify(Const(1)) is FragmentLabel.BOTH
    assert classify(strong_and(strong_or(x, y), z)) is FragmentLabel.NEITHER


def test_classify_requires_normalized():
    with pytest.raises(NotNormalizedError):
        classify(implies(x, y))
    with pytest.raises(NotNormalizedError):
        classify(neg(strong_and(x, y)))


def test_classify_equivalence_pair_stays_split():
    # Same function, two spellings: the weak-conjunction form is concave,
    # the strong-conjunction form is accepted as neither (syntactic policy).
    both_ways = weak_and(strong_or(neg(x), y), strong_or(neg(y), x))
    strong_form = strong_and(strong_or(neg(x), y), strong_or(neg(y), x))
    assert classify(both_ways) is FragmentLabel.CONCAVE
    assert classify(strong_form) is FragmentLabel.NEITHER


def test_classify_label_flip_under_negation():
    rng = np.random.default_rng(31)
    pool = ["x", "y", "z", "w"]

    def rand_concave(depth):
        if depth == 0 or rng.integers(0, 3) == 0:
            name = pool[rng.integers(0, len(pool))]
            return Var(name) if rng.integers(0, 2) else neg(Var(name))
        op = OpKind.WEAK_AND if rng.integers(0, 2) else OpKind.STRONG_OR
        return Join(op, (rand_concave(depth - 1), rand_concave(depth - 1)))

    for _ in range(200):
        f = rand_concave(3)
        lbl = classify(f)
        flipped = classify(normalize(neg(f)))
        if lbl is FragmentLabel.CONCAVE:
            assert flipped is FragmentLabel.CONVEX
        else:
            assert lbl is FragmentLabel.BOTH
            assert flipped is FragmentLabel.BOTH


def test_simplify_constant_absorption():
    assert simplify(strong_and(x, Const(1))) == x
    assert simplify(strong_and(x, Const(0))) == Const(0)
    assert simplify(strong_or(x, Const(0))) == x
    assert simplify(strong_or(x, Const(1))) == Const(1)
    assert simplify(weak_and(x, Const(1))) == x
    assert simplify(weak_or(x, Const(0))) == x
    assert simplify(weak_and(x, x, y)) == weak_and(x, y)


def test_classify_after_constant_folding():
    # (x * 1) ^ y mixes connectives syntactically; folding the neutral
    # constant reveals the concave formula x ^ y.
    f = weak_and(strong_and(x, Const(1)), y)
    assert classify(f) is FragmentLabel.CONCAVE


def test_fragment_violation_path_points_at_mixing():
    f = strong_and(strong_or(x, y), z)
    msg = fragment_violation_path(f)
    assert "root" in msg and "*" in msg


def test_fuzzify_cnf_concave():
    clauses = [
        [("A", False), ("B", False), ("C", True)],
        [("A", False), ("B", False), ("D", True)],
    ]
    f = fuzzify_cnf(clauses, "concave")
    A, B, C, D = Var("A"), Var("B"), Var("C"), Var("D")
    assert f == weak_and(
        strong_or(neg(A), neg(B), C), strong_or(neg(A), neg(B), D)
    )
    assert classify(f) is FragmentLabel.CONCAVE


def test_fuzzify_cnf_convex():
    clauses = [
        [("A", False), ("B", False), ("C", True)],
        [("A", False), ("B", False), ("D", True)],
    ]
    f = fuzzify_cnf(clauses, "convex")
    A, B, C, D = Var("A"), Var("B"), Var("C"), Var("D")
    assert f == strong_and(
        weak_or(neg(A), neg(B), C), weak_or(neg(A), neg(B), D)
    )
    assert classify(f) is FragmentLabel.CONVEX


def test_fuzzify_cnf_strong_pair_is_neither():
    clauses = [
        [("A", False), ("B", False), ("C", True)],
        [("A", False), ("B", False), ("D", True)],
    ]
    f = fuzzify_cnf(clauses, "strong")
    assert classify(f) is FragmentLabel.NEITHER


def test_fuzzify_single_literal_clause():
    assert fuzzify_cnf([[("x", True)]], "concave") == x
    assert fuzzify_cnf([[("x", True)]], "convex") == x


def test_fuzzify_rejects_empty():
    with pytest.raises(TranslationError):
        fuzzify_cnf([], "concave")
    with pytest.raises(TranslationError):
        fuzzify_cnf([[]], "convex")
    with pytest.raises(TranslationError):
        fuzzify_cnf([[("x", True)]], "weird")
