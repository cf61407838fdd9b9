"""Shared generators and reference cases for the test suite."""

import numpy as np

from lukqp.formula import Join, Not, OpKind, Var, neg, strong_or, weak_and
from lukqp.normalize import FragmentLabel

POOL = ["x1", "x2", "x3", "x4", "x5", "x6"]

CONCAVE_OPS = (OpKind.WEAK_AND, OpKind.STRONG_OR)
CONVEX_OPS = (OpKind.STRONG_AND, OpKind.WEAK_OR)


def random_fragment_formula(rng, concave: bool, depth: int = 5, max_vars: int = 6):
    """Random formula inside one fragment: ops restricted to its pair."""
    pool = POOL[:max_vars]
    ops = CONCAVE_OPS if concave else CONVEX_OPS

    def build(d):
        if d == 0 or rng.integers(0, 3) == 0:
            name = pool[rng.integers(0, len(pool))]
            return Var(name) if rng.integers(0, 2) else Not(Var(name))
        op = ops[rng.integers(0, 2)]
        width = int(rng.integers(2, 4))
        return Join(op, tuple(build(d - 1) for _ in range(width)))

    return build(depth)


def fragment_corpus(seed: int = 1234, count: int = 220):
    """Mixed corpus of concave and convex formulas plus hand-worked cases."""
    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(count):
        concave = i % 2 == 0
        f = random_fragment_formula(rng, concave, depth=int(rng.integers(2, 6)))
        label = FragmentLabel.CONCAVE if concave else FragmentLabel.CONVEX
        corpus.append((f, label))
    corpus.extend(KNOWN_CONCAVE)
    return corpus


x, y, z = Var("x"), Var("y"), Var("z")

# Hand-worked concave references whose compiled min-forms are known exactly.
KNOWN_CONCAVE = [
    (weak_and(strong_or(weak_and(x, y), neg(y), z), neg(z)), FragmentLabel.CONCAVE),
    (weak_and(strong_or(Var("x1"), neg(Var("x2"))), strong_or(Var("x1"), Var("x2"))), FragmentLabel.CONCAVE),
    (strong_or(x, neg(y)), FragmentLabel.CONCAVE),
]


def random_points(rng, names, count):
    return {name: rng.random(count) for name in names}


# --------------------------------------------------------------------------
# Reference QP oracles.  Both are deliberately independent of lukqp.qp: the
# enumeration oracle walks every plausible active set and solves the equality
# KKT system directly, the grid oracle scans feasible lattice points.  They
# are slow and only meant for problems of desk size.


def brute_force_qp(problem, feas_tol: float = 1e-9, sign_tol: float = 1e-8):
    """Exact minimizer of a tiny QP by active-set enumeration.

    Returns (z, objective).  Requires the optimum to exist; intended for
    problems with at most ~8 variables and ~10 inequality rows where the
    active set at the optimum satisfies linear independence.
    """
    import itertools

    n, m = problem.n, problem.m
    box_states = []
    for i in range(n):
        states = [None]
        if np.isfinite(problem.lower[i]):
            states.append(("lo", problem.lower[i]))
        if np.isfinite(problem.upper[i]):
            states.append(("up", problem.upper[i]))
        box_states.append(states)

    scale = 1.0 + abs(problem.Q).max(initial=0.0) + abs(problem.c).max(initial=0.0)
    best_obj, best_z = np.inf, None
    row_subsets = itertools.chain.from_iterable(
        itertools.combinations(range(m), r) for r in range(min(m, n) + 1)
    )
    for rows in row_subsets:
        for combo in itertools.product(*box_states):
            fixed = [(j, st) for j, st in enumerate(combo) if st is not None]
            k = len(rows) + len(fixed)
            if k > n:
                continue
            G = np.zeros((k, n))
            h = np.zeros(k)
            for idx, i in enumerate(rows):
                G[idx] = problem.A[i]
                h[idx] = problem.b[i]
            for idx, (j, st) in enumerate(fixed, start=len(rows)):
                G[idx, j] = 1.0
                h[idx] = st[1]
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = problem.Q
            kkt[:n, n:] = G.T
            kkt[n:, :n] = G
            rhs = np.concatenate([-problem.c, h])
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            if np.abs(kkt @ sol - rhs).max(initial=0.0) > 1e-8 * scale:
                continue
            z = sol[:n]
            nu = sol[n:]
            if m and np.max(problem.A @ z - problem.b, initial=-np.inf) > feas_tol:
                continue
            lo_bad = np.isfinite(problem.lower) & (z < problem.lower - feas_tol)
            up_bad = np.isfinite(problem.upper) & (z > problem.upper + feas_tol)
            if lo_bad.any() or up_bad.any():
                continue
            ok = True
            for idx in range(len(rows)):
                if nu[idx] < -sign_tol:
                    ok = False
                    break
            if ok:
                for idx, (j, st) in enumerate(fixed, start=len(rows)):
                    if st[0] == "up" and nu[idx] < -sign_tol:
                        ok = False
                        break
                    if st[0] == "lo" and nu[idx] > sign_tol:
                        ok = False
                        break
            if not ok:
                continue
            obj = problem.objective(z)
            if obj < best_obj - 1e-13:
                best_obj, best_z = obj, z
    if best_z is None:
        raise AssertionError("enumeration oracle found no KKT point")
    return best_z, best_obj


def grid_search_qp(problem, step: float = 1e-3):
    """Feasible-lattice argmin for 2-variable problems with finite boxes."""
    assert problem.n == 2
    axes = [
        np.arange(problem.lower[i], problem.upper[i] + step / 2, step)
        for i in range(2)
    ]
    g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
    pts = np.column_stack([g0.ravel(), g1.ravel()])
    if problem.m:
        feas = np.all(pts @ problem.A.T <= problem.b + 1e-12, axis=1)
        pts = pts[feas]
    obj = 0.5 * np.einsum("ij,jk,ik->i", pts, problem.Q, pts) + pts @ problem.c
    best = int(np.argmin(obj))
    return pts[best], float(obj[best])


def random_strict_qp(rng, n, m, infinite_box_prob: float = 0.25):
    """Random strictly convex QP with a guaranteed-nonempty feasible set."""
    from lukqp.qp import QPProblem

    M = rng.normal(size=(n, n))
    Q = M.T @ M + np.diag(0.1 + rng.random(n))
    c = rng.normal(scale=2.0, size=n)
    lower = np.where(rng.random(n) < infinite_box_prob, -np.inf, -1.0 - rng.random(n))
    upper = np.where(rng.random(n) < infinite_box_prob, np.inf, 1.0 + rng.random(n))
    both = np.isfinite(lower) & np.isfinite(upper)
    interior = np.zeros(n)
    interior[both] = (lower[both] + upper[both]) / 2.0
    A = rng.normal(size=(m, n)) if m else np.zeros((0, n))
    b = (A @ interior + 0.05 + rng.random(m)) if m else np.zeros(0)
    return QPProblem(Q=Q, c=c, A=A, b=b, lower=lower, upper=upper)
