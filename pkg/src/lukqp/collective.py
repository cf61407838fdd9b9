"""Collective adjustment of grounded predicate scores.

Takes prior values for every grounded atom (raw model outputs, possibly
outside [0,1]) and returns the closest interpretation, in squared distance,
that softly satisfies a set of compiled logical constraints:

    minimize  sum ||p - prior||^2 + C1 * sum(slacks)

with every affine violation piece held below its rule's slack and all values
boxed to [0,1].  No kernel machinery is involved; the grounded values
themselves are the decision variables.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .grounding import atom_name
from .learner import LogicalConstraint
from .qp import QPProblem, solve


class CollectiveError(Exception):
    pass


@dataclass
class PriorTable:
    """Prior score vector per predicate, aligned with the grounding order.

    Values outside [0,1] are accepted; solutions are always boxed.
    """

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = {
            p: np.asarray(v, dtype=float).ravel() for p, v in self.values.items()
        }

    def predicates(self) -> list:
        return list(self.values)

    def size(self, pred: str) -> int:
        return self.values[pred].size


@dataclass
class ManifoldRelation:
    """Pairwise closeness weights R for one predicate's sample points."""

    R: np.ndarray
    sigma: float

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        S = self.R.shape[0]
        if self.R.shape != (S, S):
            raise CollectiveError("relation matrix must be square")
        if np.abs(self.R - self.R.T).max(initial=0.0) > 1e-12:
            raise CollectiveError("relation matrix must be symmetric")
        if self.R.min(initial=1.0) < 0.0 or self.R.max(initial=0.0) > 1.0:
            raise CollectiveError("relation entries must lie in [0,1]")
        if S and np.abs(np.diag(self.R) - 1.0).max() > 1e-12:
            raise CollectiveError("relation diagonal must be 1")

    @classmethod
    def from_points(cls, points, sigma: float) -> "ManifoldRelation":
        if sigma <= 0:
            raise CollectiveError("sigma must be positive")
        X = np.atleast_2d(np.asarray(points, dtype=float))
        sq = (
            np.sum(X * X, axis=1)[:, None]
            + np.sum(X * X, axis=1)[None, :]
            - 2.0 * X @ X.T
        )
        return cls(R=np.exp(-np.maximum(sq, 0.0) / sigma**2), sigma=sigma)


DEFAULT_RELATION_CUTOFF = 0.01


def manifold_rows(rel: ManifoldRelation, pred: str,
                  cutoff: float = DEFAULT_RELATION_CUTOFF) -> list:
    """Soft closeness constraints: one per retained pair, two rows each.

    A pair (i, j) with weight R contributes R + p_i - p_j - 1 <= xi and
    R - p_i + p_j - 1 <= xi against that pair's own slack.  Pairs with R
    below the cutoff are dropped to bound the row count.
    """
    S = rel.R.shape[0]
    out = []
    for i in range(S):
        for j in range(i + 1, S):
            R = float(rel.R[i, j])
            if R < cutoff:
                continue
            q = R - 1.0
            out.append(LogicalConstraint(
                pieces=[
                    ({(pred, i): 1, (pred, j): -1}, q),
                    ({(pred, i): -1, (pred, j): 1}, q),
                ],
                name=f"close({pred},{i},{j})",
            ))
    return out


@dataclass
class CollectiveLayout:
    predicates: list
    offsets: dict
    slack_offset: int
    n_vars: int


@dataclass
class AssembledCollective:
    problem: QPProblem
    layout: CollectiveLayout


def assemble_collective(priors: PriorTable, constraints,
                        C1: float) -> AssembledCollective:
    if C1 <= 0:
        raise CollectiveError("C1 must be positive")
    preds = priors.predicates()
    offsets = {}
    pos = 0
    for p in preds:
        offsets[p] = pos
        pos += priors.size(p)
    slack_offset = pos
    n = pos + len(constraints)

    Q = np.zeros((n, n))
    Q[:slack_offset, :slack_offset] = 2.0 * np.eye(slack_offset)
    c = np.zeros(n)
    for p in preds:
        o = offsets[p]
        c[o:o + priors.size(p)] = -2.0 * priors.values[p]
    for h, con in enumerate(constraints):
        c[slack_offset + h] = C1 * con.weight

    rows, rhs = [], []
    for h, con in enumerate(constraints):
        for coeffs, q in con.pieces:
            if not coeffs:
                if q <= 0:
                    continue
                r = np.zeros(n)
            else:
                r = np.zeros(n)
                for (pred, idx), m in coeffs.items():
                    if pred not in offsets:
                        raise CollectiveError(
                            f"constraint {con.name!r} uses unknown predicate {pred!r}")
                    if not 0 <= idx < priors.size(pred):
                        raise CollectiveError(
                            f"constraint {con.name!r} references grounding {idx} "
                            f"outside {pred!r}")
                    r[offsets[pred] + idx] += float(m)
            r[slack_offset + h] = -1.0
            rows.append(r)
            rhs.append(-q)

    A = np.array(rows) if rows else np.zeros((0, n))
    b = np.array(rhs)
    lower = np.zeros(n)
    upper = np.concatenate([np.ones(slack_offset),
                            np.full(len(constraints), np.inf)])
    problem = QPProblem(Q=Q, c=c, A=A, b=b, lower=lower, upper=upper)
    layout = CollectiveLayout(predicates=preds, offsets=offsets,
                              slack_offset=slack_offset, n_vars=n)
    return AssembledCollective(problem=problem, layout=layout)


@dataclass
class CollectiveResult:
    values: dict
    slacks: list
    objective: float
    status: str
    residuals: tuple


def solve_collective(priors: PriorTable, constraints, C1: float,
                     tol: float = 1e-6,
                     max_iter: int = 50_000) -> CollectiveResult:
    asm = assemble_collective(priors, constraints, C1)
    sol = solve(asm.problem, tol=tol, max_iter=max_iter)
    if sol.status == "infeasible":
        raise CollectiveError("collective problem reported infeasible")
    lay = asm.layout
    values = {}
    for p in lay.predicates:
        o = lay.offsets[p]
        values[p] = sol.z[o:o + priors.size(p)].copy()
    slacks = [float(v) for v in sol.z[lay.slack_offset:lay.n_vars]]
    return CollectiveResult(values=values, slacks=slacks,
                            objective=sol.objective, status=sol.status,
                            residuals=sol.residuals)


# -- structured text ----------------------------------------------------------


def priors_to_dict(priors: PriorTable, gmap) -> dict:
    out = {}
    for p in priors.predicates():
        tuples = gmap.tuples.get(p, ())
        if len(tuples) != priors.size(p):
            raise CollectiveError(f"prior length for {p!r} does not match the "
                                  f"grounding map")
        for t, v in zip(tuples, priors.values[p]):
            out[atom_name(p, t)] = float(v)
    return out


def priors_from_dict(data: dict, gmap) -> PriorTable:
    values = {}
    for p, tuples in gmap.tuples.items():
        vec = []
        for t in tuples:
            key = atom_name(p, t)
            if key not in data:
                raise CollectiveError(f"missing prior for grounding {key!r}")
            vec.append(float(data[key]))
        values[p] = np.array(vec)
    return PriorTable(values=values)


def result_to_json(result: CollectiveResult, gmap, constraints) -> str:
    values = {}
    for p, vec in result.values.items():
        for t, v in zip(gmap.tuples[p], vec):
            values[atom_name(p, t)] = float(v)
    slacks = {
        (con.name or f"rule_{h}"): s
        for h, (con, s) in enumerate(zip(constraints, result.slacks))
    }
    return json.dumps(
        {"values": values, "slacks": slacks, "objective": result.objective,
         "status": result.status},
        indent=2, sort_keys=True,
    )
