import numpy as np
import pytest

from lukqp.formula import (
    Const,
    Var,
    evaluate,
    evaluate_batch,
    neg,
    strong_and,
    strong_or,
    variables,
    weak_and,
    weak_or,
)
from lukqp.normalize import FragmentLabel, classify, normalize
from lukqp.pwl import (
    AffinePiece,
    CompilationError,
    EnvelopeError,
    FormKind,
    PiecewiseLinearForm,
    affine_to_formula,
    compile_formula,
    envelope,
    envelope_batch,
    form_from_json,
    form_to_json,
    negate_form,
    prune_dominated,
)

from helpers import fragment_corpus, random_points

x, y, z = Var("x"), Var("y"), Var("z")


def pieces_set(form):
    return {(p.coeffs, p.intercept) for p in form.pieces}


def test_compile_worked_min_form():
    f = weak_and(strong_or(weak_and(x, y), neg(y), z), neg(z))
    form = compile_formula(f, FragmentLabel.CONCAVE, variables=("x", "y", "z"))
    assert form.kind is FormKind.MIN
    assert pieces_set(form) == {
        ((0, 0, 0), 1),
        ((1, -1, 1), 1),
        ((0, 0, -1), 1),
    }


def test_compile_second_min_form():
    f = weak_and(
        strong_or(Var("x1"), neg(Var("x2"))), strong_or(Var("x1"), Var("x2"))
    )
    form = compile_formula(f, FragmentLabel.CONCAVE, variables=("x1", "x2"))
    assert pieces_set(form) == {
        ((0, 0), 1),
        ((1, -1), 1),
        ((1, 1), 0),
    }


def test_compile_single_strong_or():
    form = compile_formula(strong_or(x, neg(y)), variables=("x", "y"))
    assert form.kind is FormKind.MIN
    assert pieces_set(form) == {((0, 0), 1), ((1, -1), 1)}


def test_compile_literal_both_targets():
    cv = compile_formula(x, FragmentLabel.CONVEX)
    cc = compile_formula(x, FragmentLabel.CONCAVE)
    assert cv.kind is FormKind.MAX
    assert cc.kind is FormKind.MIN
    assert ((1,), 0) in pieces_set(cv)
    assert ((1,), 0) in pieces_set(cc)


def test_compile_convex_dual():
    f = weak_or(strong_and(x, y), z)
    form = compile_formula(f, variables=("x", "y", "z"))
    assert form.kind is FormKind.MAX
    assert pieces_set(form) == {
        ((0, 0, 0), 0),
        ((1, 1, 0), -1),
        ((0, 0, 1), 0),
    }


def test_compile_rejects_outside_fragment():
    with pytest.raises(CompilationError):
        compile_formula(strong_and(strong_or(x, y), z))
    with pytest.raises(CompilationError):
        compile_formula(strong_or(x, neg(y)), FragmentLabel.CONVEX)


def test_compile_rejects_unnormalized():
    with pytest.raises(CompilationError):
        compile_formula(neg(strong_and(x, y)))


def test_envelope_matches_evaluate_on_corpus():
    rng = np.random.default_rng(404)
    for f, label in fragment_corpus(count=60):
        form = compile_formula(f, label)
        names = form.variables
        cols = random_points(rng, names, 200)
        pts = np.column_stack([cols[n] for n in names]) if names else np.zeros((200, 0))
        env = envelope_batch(form, pts)
        ref = evaluate_batch(f, cols)
        assert np.abs(env - ref).max() <= 1e-12


def test_envelope_stays_in_unit_interval():
    rng = np.random.default_rng(405)
    for f, label in fragment_corpus(count=40):
        form = compile_formula(f, label)
        pts = rng.random((300, len(form.variables)))
        env = envelope_batch(form, pts)
        assert env.min() >= -1e-12 and env.max() <= 1 + 1e-12


def test_negate_form_examples():
    f = compile_formula(neg(z), FragmentLabel.CONCAVE, variables=("z",))
    assert pieces_set(f) == {((0,), 1), ((-1,), 1)}
    g = negate_form(f)
    assert g.kind is FormKind.MAX
    assert pieces_set(g) == {((0,), 0), ((1,), 0)}

    h = compile_formula(strong_or(x, neg(y)), variables=("x", "y"))
    k = negate_form(h)
    assert pieces_set(k) == {((0, 0), 0), ((-1, 1), 0)}


def test_negate_form_involution_and_complement():
    rng = np.random.default_rng(406)
    for f, label in fragment_corpus(count=30):
        form = compile_formula(f, label)
        twice = negate_form(negate_form(form))
        assert twice == form
        pts = rng.random((100, len(form.variables)))
        direct = envelope_batch(form, pts)
        flipped = envelope_batch(negate_form(form), pts)
        assert np.abs(direct + flipped - 1.0).max() <= 1e-12


def test_prune_keeps_guard_piece():
    form = PiecewiseLinearForm(
        FormKind.MIN, ("x",), (AffinePiece((0,), 1), AffinePiece((1,), 2))
    )
    pruned = prune_dominated(form)
    assert pieces_set(pruned) == {((0,), 1)}

    form = PiecewiseLinearForm(
        FormKind.MIN,
        ("x",),
        (AffinePiece((0,), 1), AffinePiece((1,), 0), AffinePiece((1,), 1)),
    )
    pruned = prune_dominated(form)
    assert pieces_set(pruned) == {((0,), 1), ((1,), 0)}


def test_prune_never_changes_envelope():
    rng = np.random.default_rng(407)
    for f, label in fragment_corpus(count=30):
        form = compile_formula(f, label)
        extra = PiecewiseLinearForm(
            form.kind,
            form.variables,
            form.pieces + (AffinePiece((2,) * len(form.variables), 3),),
        )
        pruned = prune_dominated(extra)
        pts = rng.random((120, len(form.variables)))
        assert np.abs(envelope_batch(pruned, pts) - envelope_batch(extra, pts)).max() <= 1e-12


def test_affine_to_formula_simple_cases():
    form = PiecewiseLinearForm(
        FormKind.MIN, ("x", "y"), (AffinePiece((0, 0), 1), AffinePiece((1, -1), 1))
    )
    assert affine_to_formula(form) == strong_or(x, neg(y))

    form = PiecewiseLinearForm(
        FormKind.MIN, ("x", "y"), (AffinePiece((0, 0), 1), AffinePiece((1, 1), 0))
    )
    assert affine_to_formula(form) == strong_or(x, y)


def test_affine_to_formula_repeats_literals_for_big_coefficients():
    form = PiecewiseLinearForm(
        FormKind.MIN, ("x",), (AffinePiece((0,), 1), AffinePiece((2,), 0))
    )
    assert affine_to_formula(form) == strong_or(x, x)


def test_affine_to_formula_rejects_negative_residual():
    form = PiecewiseLinearForm(
        FormKind.MIN, ("x",), (AffinePiece((1,), -1),)
    )
    with pytest.raises(EnvelopeError):
        affine_to_formula(form)


def test_affine_to_formula_rejects_max_forms():
    form = PiecewiseLinearForm(FormKind.MAX, ("x",), (AffinePiece((1,), 0),))
    with pytest.raises(EnvelopeError):
        affine_to_formula(form)


def test_affine_round_trip_on_corpus():
    rng = np.random.default_rng(408)
    for f, label in fragment_corpus(count=40):
        if label is not FragmentLabel.CONCAVE:
            continue
        form = compile_formula(f, label)
        back = affine_to_formula(form)
        assert classify(normalize(back)) in (FragmentLabel.CONCAVE, FragmentLabel.BOTH)
        names = variables(back)
        if set(names) != set(form.variables):
            # rebuilt formula may drop variables whose pieces were pruned
            continue
        cols = random_points(rng, form.variables, 150)
        ref = envelope_batch(
            form, np.column_stack([cols[n] for n in form.variables])
        )
        got = evaluate_batch(back, cols)
        assert np.abs(got - ref).max() <= 1e-12


def test_jensen_convexity_of_max_forms():
    rng = np.random.default_rng(409)
    for f, label in fragment_corpus(count=40):
        if label is not FragmentLabel.CONVEX:
            continue
        form = compile_formula(f, label)
        n = len(form.variables)
        a = rng.random((500, n))
        b = rng.random((500, n))
        lam = rng.random((500, 1))
        mid = envelope_batch(form, lam * a + (1 - lam) * b)
        bound = lam[:, 0] * envelope_batch(form, a) + (1 - lam[:, 0]) * envelope_batch(form, b)
        assert (mid <= bound + 1e-12).all()


def test_json_round_trip():
    f = weak_and(strong_or(weak_and(x, y), neg(y), z), neg(z))
    form = compile_formula(f, FragmentLabel.CONCAVE)
    again = form_from_json(form_to_json(form))
    assert again == form


def test_envelope_scalar_matches_batch():
    f = strong_or(x, neg(y))
    form = compile_formula(f, variables=("x", "y"))
    val = envelope(form, {"x": 0.3, "y": 0.9})
    ref = envelope_batch(form, np.array([[0.3, 0.9]]))[0]
    assert val == pytest.approx(ref, abs=1e-12)
    assert val == pytest.approx(evaluate(f, {"x": 0.3, "y": 0.9}), abs=1e-12)


def test_compile_integer_coefficients():
    for f, label in fragment_corpus(count=30):
        form = compile_formula(f, label)
        for p in form.pieces:
            assert all(isinstance(c, int) for c in p.coeffs)
            assert isinstance(p.intercept, int)


def test_variable_order_respected():
    f = strong_or(x, neg(y))
    form = compile_formula(f, variables=("y", "x"))
    assert pieces_set(form) == {((0, 0), 1), ((-1, 1), 1)}
