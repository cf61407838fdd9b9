"""Kernel-expansion predicate training under logical constraints.

Each predicate j gets a scoring function p_j(x) = sum_s alpha_js k_j(x_s, x) + b_j
over its sample set (unlabeled points first, then labeled ones, deduplicated).
Training minimizes

    0.5 * sum_j alpha_j' K_j alpha_j  +  C1 * sum(pointwise slacks)
                                      +  C2 * sum(logic slacks)

subject to margin rows for supervised points, range rows keeping every sampled
value inside [0, 1], and one row per affine piece of each compiled logical
constraint.  The quadratic term is the norm of the implicit feature-space
weight vector written through the kernel expansion, which is exact here
because every constraint touches the function only at sample points.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .pwl import FormKind, PiecewiseLinearForm
from .qp import QPProblem, QPSolution, kkt_residuals, solve


class LearnerError(Exception):
    pass


# -- kernels ----------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    sigma: float | None = None
    degree: int | None = None
    offset: float = 0.0

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.sigma is None or self.sigma <= 0:
                raise LearnerError("gaussian kernel needs sigma > 0")
        elif self.kind == "polynomial":
            if self.degree is None or self.degree < 1:
                raise LearnerError("polynomial kernel needs degree >= 1")
        elif self.kind != "linear":
            raise LearnerError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def gaussian(cls, sigma: float) -> "KernelSpec":
        return cls(kind="gaussian", sigma=float(sigma))

    @classmethod
    def polynomial(cls, degree: int, offset: float = 1.0) -> "KernelSpec":
        return cls(kind="polynomial", degree=int(degree), offset=float(offset))

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(kind="linear")

    def gram(self, X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
        """Kernel matrix k(X_i, Y_j); Y defaults to X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
        if self.kind == "gaussian":
            sq = (
                np.sum(X * X, axis=1)[:, None]
                + np.sum(Y * Y, axis=1)[None, :]
                - 2.0 * X @ Y.T
            )
            return np.exp(-np.maximum(sq, 0.0) / (2.0 * self.sigma**2))
        if self.kind == "polynomial":
            return (X @ Y.T + self.offset) ** self.degree
        return X @ Y.T

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma,
                "degree": self.degree, "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(kind=d["kind"], sigma=d.get("sigma"),
                   degree=d.get("degree"), offset=d.get("offset", 0.0))


# -- data -------------------------------------------------------------------


def _as_point(p) -> tuple:
    if isinstance(p, (int, float)):
        return (float(p),)
    return tuple(float(v) for v in p)


@dataclass
class TrainingSets:
    """Supervised and unsupervised points per predicate.

    The sample set of a predicate lists its unsupervised points first, then
    any supervised points not already present, without duplicates.  Labels
    must be -1 or +1.
    """

    labeled: dict = field(default_factory=dict)    # pred -> [(point, label)]
    unlabeled: dict = field(default_factory=dict)  # pred -> [point]

    def __post_init__(self):
        self.labeled = {
            p: [(_as_point(x), int(y)) for x, y in rows]
            for p, rows in self.labeled.items()
        }
        self.unlabeled = {
            p: [_as_point(x) for x in pts] for p, pts in self.unlabeled.items()
        }
        for p, rows in self.labeled.items():
            for _, y in rows:
                if y not in (-1, 1):
                    raise LearnerError(f"label {y} for {p!r} is not -1/+1")

    def predicates(self) -> list:
        out = list(self.unlabeled)
        for p in self.labeled:
            if p not in out:
                out.append(p)
        return out

    def samples(self, pred: str) -> list:
        seen = {}
        for x in self.unlabeled.get(pred, ()):
            seen.setdefault(x, len(seen))
        for x, _ in self.labeled.get(pred, ()):
            seen.setdefault(x, len(seen))
        return list(seen)

    def labeled_sites(self, pred: str) -> list:
        """(sample index, label) per supervised entry, in input order."""
        index = {x: i for i, x in enumerate(self.samples(pred))}
        return [(index[x], y) for x, y in self.labeled.get(pred, ())]


def load_predicate_csv(path) -> TrainingSets:
    """Read one predicate's data: columns x1..xn then label; blank label
    marks an unsupervised point.  A non-numeric first row is a header."""
    labeled, unlabeled = [], []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    for r in rows:
        *xs, tag = r
        point = tuple(float(v) for v in xs)
        tag = tag.strip()
        if not tag:
            unlabeled.append(point)
            continue
        y = int(float(tag))
        if y not in (-1, 1):
            raise LearnerError(f"label {tag!r} is not -1/+1")
        labeled.append((point, y))
    name = "p"
    return TrainingSets(labeled={name: labeled} if labeled else {},
                        unlabeled={name: unlabeled} if unlabeled else {})


# -- logical constraints -----------------------------------------------------


@dataclass
class LogicalConstraint:
    """One soft rule: every affine piece must stay at or below the slack.

    pieces: list of (coeffs, intercept) where coeffs maps a
    (predicate, sample index) site to an integer weight.  The weight scales
    the slack penalty where the consumer supports nonuniform rule costs.
    """

    pieces: list
    name: str = ""
    weight: float = 1.0


def constraint_from_form(form: PiecewiseLinearForm, site_of_var: dict,
                         name: str = "") -> LogicalConstraint:
    """Turn a max-of-affine violation form into learner constraint rows.

    ``site_of_var`` maps the form's variable names (grounded atom names) to
    (predicate, sample index) pairs.
    """
    if form.kind is not FormKind.MAX:
        raise LearnerError("constraint form must be a max of affine pieces "
                           "(the negation of a compiled concave rule)")
    sites = []
    for v in form.variables:
        if v not in site_of_var:
            raise LearnerError(f"grounded atom {v!r} has no sample site")
        sites.append(site_of_var[v])
    pieces = []
    for piece in form.pieces:
        coeffs = {}
        for site, m in zip(sites, piece.coeffs):
            if m:
                coeffs[site] = coeffs.get(site, 0) + int(m)
        pieces.append((coeffs, float(piece.intercept)))
    return LogicalConstraint(pieces=pieces, name=name)


# -- assembly ----------------------------------------------------------------


@dataclass
class PrimalLayout:
    predicates: list
    samples: dict            # pred -> list of point tuples
    alpha_offset: dict       # pred -> first index of its alpha block
    bias_index: dict         # pred -> index of its bias
    point_slacks: list       # (pred, sample index, label) per supervised row
    point_slack_offset: int
    logic_slack_offset: int
    n_vars: int


@dataclass
class AssembledPrimal:
    problem: QPProblem
    layout: PrimalLayout
    grams: dict
    kernels: dict
    C1: float
    C2: float


def assemble_primal(constraints, data: TrainingSets, kernels: dict,
                    C1: float, C2: float,
                    gram_cache: dict | None = None) -> AssembledPrimal:
    """Build the training QP.

    constraints: list of LogicalConstraint over (predicate, sample) sites.
    kernels: KernelSpec per predicate.
    gram_cache: optional {pred: K} reuse across assemblies on identical samples.
    """
    if C1 <= 0 or C2 <= 0:
        raise LearnerError("C1 and C2 must be positive")
    preds = data.predicates()
    for p in preds:
        if p not in kernels:
            raise LearnerError(f"no kernel given for predicate {p!r}")

    samples = {p: data.samples(p) for p in preds}
    grams = {}
    for p in preds:
        pts = samples[p]
        if not pts:
            raise LearnerError(f"predicate {p!r} has no sample points")
        if gram_cache is not None and p in gram_cache:
            K = gram_cache[p]
        else:
            K = kernels[p].gram(np.array(pts, dtype=float))
            K = K + 1e-10 * np.eye(len(pts))
            if gram_cache is not None:
                gram_cache[p] = K
        grams[p] = K

    alpha_offset, bias_index = {}, {}
    pos = 0
    for p in preds:
        alpha_offset[p] = pos
        pos += len(samples[p])
        bias_index[p] = pos
        pos += 1
    point_slacks = []
    for p in preds:
        for sidx, y in data.labeled_sites(p):
            point_slacks.append((p, sidx, y))
    point_slack_offset = pos
    pos += len(point_slacks)
    logic_slack_offset = pos
    pos += len(constraints)
    n = pos

    Q = np.zeros((n, n))
    for p in preds:
        a0 = alpha_offset[p]
        S = len(samples[p])
        Q[a0:a0 + S, a0:a0 + S] = grams[p]
    c = np.zeros(n)
    c[point_slack_offset:point_slack_offset + len(point_slacks)] = C1
    c[logic_slack_offset:n] = C2

    rows, rhs = [], []

    def p_row(pred, sidx, scale=1.0):
        """Row fragment expressing scale * p_pred(x_sidx)."""
        r = np.zeros(n)
        a0 = alpha_offset[pred]
        S = len(samples[pred])
        r[a0:a0 + S] = scale * grams[pred][sidx]
        r[bias_index[pred]] = scale
        return r

    # margin rows: y(2p - 1) >= 1 - 2 xi   <=>   -2y p - 2 xi <= -(1 + y)
    for k, (pred, sidx, y) in enumerate(point_slacks):
        r = p_row(pred, sidx, scale=-2.0 * y)
        r[point_slack_offset + k] = -2.0
        rows.append(r)
        rhs.append(-(1.0 + y))

    # range rows: 0 <= p <= 1 at every sample
    for pred in preds:
        for sidx in range(len(samples[pred])):
            rows.append(p_row(pred, sidx, scale=1.0))
            rhs.append(1.0)
            rows.append(p_row(pred, sidx, scale=-1.0))
            rhs.append(0.0)

    # logic rows: each affine piece of constraint h stays below its slack
    for h, con in enumerate(constraints):
        for coeffs, q in con.pieces:
            if not coeffs:
                if q <= 0:
                    continue  # trivially satisfied against xi >= 0
                r = np.zeros(n)
            else:
                r = np.zeros(n)
                for (pred, sidx), m in coeffs.items():
                    if pred not in alpha_offset:
                        raise LearnerError(
                            f"constraint {con.name!r} uses unknown predicate {pred!r}")
                    if not 0 <= sidx < len(samples[pred]):
                        raise LearnerError(
                            f"constraint {con.name!r} references sample {sidx} "
                            f"outside the {len(samples[pred])} samples of {pred!r}")
                    r += p_row(pred, sidx, scale=float(m))
            r[logic_slack_offset + h] = -1.0
            rows.append(r)
            rhs.append(-q)

    A = np.array(rows) if rows else np.zeros((0, n))
    b = np.array(rhs)
    lower = np.full(n, -np.inf)
    lower[point_slack_offset:] = 0.0
    upper = np.full(n, np.inf)

    problem = QPProblem(Q=Q, c=c, A=A, b=b, lower=lower, upper=upper)
    layout = PrimalLayout(
        predicates=preds,
        samples=samples,
        alpha_offset=alpha_offset,
        bias_index=bias_index,
        point_slacks=point_slacks,
        point_slack_offset=point_slack_offset,
        logic_slack_offset=logic_slack_offset,
        n_vars=n,
    )
    return AssembledPrimal(problem=problem, layout=layout, grams=grams,
                           kernels=dict(kernels), C1=float(C1), C2=float(C2))


# -- trained model -----------------------------------------------------------


@dataclass
class PredicateModel:
    kernel: KernelSpec
    points: np.ndarray
    alpha: np.ndarray
    bias: float

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.points.shape[1]:
            raise LearnerError(
                f"point dimension {X.shape[1]} does not match "
                f"training dimension {self.points.shape[1]}")
        return self.kernel.gram(X, self.points) @ self.alpha + self.bias


@dataclass
class KernelModel:
    predicates: dict                 # name -> PredicateModel
    C1: float
    C2: float
    point_slacks: list               # (pred, sample index, label, value)
    logic_slacks: list
    status: str
    residuals: tuple
    iterations: int

    def predict(self, pred: str, X) -> np.ndarray:
        if pred not in self.predicates:
            raise LearnerError(f"unknown predicate {pred!r}")
        return self.predicates[pred].predict(X)

    def to_dict(self) -> dict:
        return {
            "C1": self.C1,
            "C2": self.C2,
            "status": self.status,
            "residuals": list(self.residuals),
            "iterations": self.iterations,
            "point_slacks": [list(t) for t in self.point_slacks],
            "logic_slacks": list(self.logic_slacks),
            "predicates": {
                name: {
                    "kernel": pm.kernel.to_dict(),
                    "points": pm.points.tolist(),
                    "alpha": pm.alpha.tolist(),
                    "bias": pm.bias,
                }
                for name, pm in self.predicates.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "KernelModel":
        preds = {
            name: PredicateModel(
                kernel=KernelSpec.from_dict(e["kernel"]),
                points=np.array(e["points"], dtype=float),
                alpha=np.array(e["alpha"], dtype=float),
                bias=float(e["bias"]),
            )
            for name, e in d["predicates"].items()
        }
        return cls(
            predicates=preds,
            C1=d["C1"],
            C2=d["C2"],
            point_slacks=[tuple(t) for t in d["point_slacks"]],
            logic_slacks=list(d["logic_slacks"]),
            status=d["status"],
            residuals=tuple(d["residuals"]),
            iterations=d["iterations"],
        )

    @classmethod
    def from_json(cls, text: str) -> "KernelModel":
        return cls.from_dict(json.loads(text))


def _whitened_problem(assembled: AssembledPrimal):
    """Substitute beta = L^T alpha per predicate, with L = chol(K + ridge).

    Exact change of variables: the Gram block of Q turns into the identity
    and every kernel row of A into a row of L, so the kernel's conditioning
    drops out of the QP entirely.  Biases, slacks, bounds, and all
    multipliers are untouched; alpha is recovered by one triangular solve.
    """
    lay = assembled.layout
    P = assembled.problem
    Q = P.Q.copy()
    A = P.A.copy()
    chols = {}
    for p in lay.predicates:
        a0 = lay.alpha_offset[p]
        S = len(lay.samples[p])
        L = np.linalg.cholesky(assembled.grams[p])
        chols[p] = L
        sl = slice(a0, a0 + S)
        Q[sl, :] = 0.0
        Q[:, sl] = 0.0
        Q[sl, sl] = np.eye(S)
        if A.size:
            A[:, sl] = scipy.linalg.solve_triangular(L, A[:, sl].T, lower=True).T
    whitened = QPProblem(Q=Q, c=P.c, A=A, b=P.b, lower=P.lower, upper=P.upper)
    return whitened, chols


def train(assembled: AssembledPrimal, tol: float = 1e-6,
          max_iter: int = 50_000) -> KernelModel:
    """Solve the assembled QP and unpack the model parameters."""
    lay = assembled.layout
    whitened, chols = _whitened_problem(assembled)
    sol = solve(whitened, tol=tol, max_iter=max_iter)
    if sol.status == "infeasible":
        raise LearnerError("training problem reported infeasible")
    z = sol.z.copy()
    for p in lay.predicates:
        a0 = lay.alpha_offset[p]
        S = len(lay.samples[p])
        z[a0:a0 + S] = scipy.linalg.solve_triangular(
            chols[p].T, z[a0:a0 + S], lower=False
        )
    mapped = QPSolution(
        z=z,
        ineq_multipliers=sol.ineq_multipliers,
        lower_multipliers=sol.lower_multipliers,
        upper_multipliers=sol.upper_multipliers,
        objective=assembled.problem.objective(z),
        status=sol.status,
        iterations=sol.iterations,
        residuals=sol.residuals,
        objective_trace=sol.objective_trace,
    )
    residuals = kkt_residuals(assembled.problem, mapped)
    preds = {}
    for p in lay.predicates:
        a0 = lay.alpha_offset[p]
        S = len(lay.samples[p])
        preds[p] = PredicateModel(
            kernel=assembled.kernels[p],
            points=np.array(lay.samples[p], dtype=float),
            alpha=z[a0:a0 + S].copy(),
            bias=float(z[lay.bias_index[p]]),
        )
    point_slacks = [
        (pred, sidx, y, float(z[lay.point_slack_offset + k]))
        for k, (pred, sidx, y) in enumerate(lay.point_slacks)
    ]
    logic_slacks = [
        float(v) for v in z[lay.logic_slack_offset:lay.n_vars]
    ]
    return KernelModel(
        predicates=preds,
        C1=assembled.C1,
        C2=assembled.C2,
        point_slacks=point_slacks,
        logic_slacks=logic_slacks,
        status=sol.status,
        residuals=residuals,
        iterations=sol.iterations,
    )
