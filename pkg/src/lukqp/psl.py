"""Hinge-potential Markov random field over grounded rules.

Every rule is a universally quantified statement in the concave fragment.
Grounding it gives one clique per variable binding; compiling the grounded
body and negating yields a max-of-affine form whose envelope is the clique's
potential: zero when the rule holds fully, growing linearly with the
violation, never above one.

MAP inference minimizes the weighted sum of potentials over all cliques.
That is a linear program in the atom values and one epigraph slack per
clique; a tiny proximal pull toward one half (1e-9) selects a canonical
point from the optimal face so repeated runs agree to the last bit.
Weight learning follows the standard approximation that replaces the
expected total potential with its value at the current MAP point.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .formula import Quant, iter_nodes
from .grounding import GroundingMap, ground_instances
from .normalize import FragmentLabel, fragment_violation_path, normalize, simplify
from .pwl import CompilationError, FormKind, envelope, compile_formula, negate_form
from .qp import QPProblem, solve

_PROXIMAL = 1e-9


class PSLError(Exception):
    pass


@dataclass
class CompiledRule:
    name: str
    weight: float
    forms: list          # one max-of-affine violation form per grounding
    bindings: list       # the variable binding behind each form


@dataclass
class WeightedRuleSet:
    kb: object
    gmap: GroundingMap
    rules: list          # CompiledRule, in knowledge-base order

    def weights(self) -> dict:
        return {r.name: r.weight for r in self.rules}

    def reweighted(self, weights: dict) -> "WeightedRuleSet":
        rules = []
        for r in self.rules:
            w = float(weights.get(r.name, r.weight))
            if w < 0:
                raise PSLError(f"negative weight for rule {r.name!r}")
            rules.append(replace(r, weight=w))
        return WeightedRuleSet(kb=self.kb, gmap=self.gmap, rules=rules)


def compile_ruleset(kb, weights: dict | None = None) -> WeightedRuleSet:
    """Ground and compile every rule of the knowledge base.

    Rules must be universally quantified only (no existentials) and their
    bodies must normalize into the concave fragment.
    """
    gmap = GroundingMap.from_kb(kb)
    compiled = []
    for rule in kb.rules:
        for node in iter_nodes(rule.formula):
            if isinstance(node, Quant) and not node.universal:
                raise PSLError(
                    f"rule {rule.name!r} uses an existential quantifier; "
                    "only universally quantified rules are supported here")
        weight = rule.weight
        if weights and rule.name in weights:
            weight = float(weights[rule.name])
        if weight < 0:
            raise PSLError(f"negative weight for rule {rule.name!r}")
        instances, _ = ground_instances(rule.formula, kb, gmap=gmap)
        forms, bindings = [], []
        for inst in instances:
            body = simplify(normalize(inst.formula))
            try:
                form = compile_formula(body, label=FragmentLabel.CONCAVE)
            except CompilationError as exc:
                raise PSLError(
                    f"rule {rule.name!r} leaves the concave fragment: "
                    f"{fragment_violation_path(body)}") from exc
            forms.append(negate_form(form))
            bindings.append(inst.binding)
        compiled.append(CompiledRule(name=rule.name, weight=weight,
                                     forms=forms, bindings=bindings))
    return WeightedRuleSet(kb=kb, gmap=gmap, rules=compiled)


def potential(form, values) -> float:
    """Violation degree of one grounded clique: 1 - truth value."""
    if form.kind is not FormKind.MAX:
        raise PSLError("potential expects a max-of-affine violation form")
    try:
        return envelope(form, values)
    except KeyError as exc:
        raise PSLError(f"grounding value missing for atom {exc.args[0]!r}") from exc


def rule_total_potential(rule: CompiledRule, values) -> float:
    return sum(potential(f, values) for f in rule.forms)


def map_objective(ruleset: WeightedRuleSet, values) -> float:
    return sum(r.weight * rule_total_potential(r, values) for r in ruleset.rules)


@dataclass
class Interpretation:
    values: dict
    evidence: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for name, v in self.values.items():
            if not 0.0 <= float(v) <= 1.0:
                raise PSLError(f"value for {name!r} outside [0,1]: {v}")
        self.evidence = frozenset(self.evidence)

    def to_json(self) -> str:
        return json.dumps(
            {"values": {k: float(v) for k, v in sorted(self.values.items())},
             "evidence": sorted(self.evidence)},
            indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Interpretation":
        data = json.loads(text)
        return cls(values=data["values"],
                   evidence=frozenset(data.get("evidence", ())))


def map_inference(ruleset: WeightedRuleSet, evidence: dict | None = None,
                  tol: float = 1e-8, max_iter: int = 50_000) -> Interpretation:
    """Most probable interpretation given fixed evidence atoms."""
    evidence = dict(evidence or {})
    atoms = ruleset.gmap.names()
    index = {name: i for i, name in enumerate(atoms)}
    for name, v in evidence.items():
        if name not in index:
            raise PSLError(f"evidence atom {name!r} is not in the grounding map")
        if not 0.0 <= float(v) <= 1.0:
            raise PSLError(f"evidence value for {name!r} outside [0,1]: {v}")
    N = len(atoms)

    slack_meta = []  # (rule position, form)
    for r in ruleset.rules:
        for f in r.forms:
            slack_meta.append((r.weight, f))
    H = len(slack_meta)
    n = N + H

    Q = np.zeros((n, n))
    Q[:N, :N] = 2.0 * _PROXIMAL * np.eye(N)
    c = np.zeros(n)
    c[:N] = -_PROXIMAL
    for h, (w, _) in enumerate(slack_meta):
        c[N + h] = w + _PROXIMAL

    rows, rhs = [], []
    for h, (_, form) in enumerate(slack_meta):
        cols = [index[v] for v in form.variables]
        for piece in form.pieces:
            if not any(piece.coeffs):
                if piece.intercept <= 0:
                    continue
                r = np.zeros(n)
            else:
                r = np.zeros(n)
                for j, m in zip(cols, piece.coeffs):
                    r[j] += float(m)
            r[N + h] = -1.0
            rows.append(r)
            rhs.append(-float(piece.intercept))

    lower = np.zeros(n)
    upper = np.concatenate([np.ones(N), np.full(H, np.inf)])
    for name, v in evidence.items():
        lower[index[name]] = float(v)
        upper[index[name]] = float(v)

    problem = QPProblem(
        Q=Q, c=c,
        A=np.array(rows) if rows else np.zeros((0, n)),
        b=np.array(rhs),
        lower=lower, upper=upper,
    )
    # resolve below the proximal scale, else the centering tie-break is noise
    sol = solve(problem, tol=min(tol, _PROXIMAL / 100.0), max_iter=max_iter)
    if sol.status == "infeasible":
        raise PSLError("MAP problem reported infeasible")
    values = {name: float(np.clip(sol.z[i], 0.0, 1.0))
              for name, i in index.items()}
    for name, v in evidence.items():
        values[name] = float(v)
    return Interpretation(values=values, evidence=frozenset(evidence))


def weight_gradient(ruleset: WeightedRuleSet, training: Interpretation,
                    tol: float = 1e-8) -> dict:
    """Per-rule ascent direction for the training log-likelihood.

    Positive component: the rule is violated more at the MAP point than in
    the training data, so its weight should grow.
    """
    evidence = {name: training.values[name] for name in training.evidence}
    star = map_inference(ruleset, evidence, tol=tol)
    grad = {}
    for r in ruleset.rules:
        grad[r.name] = (rule_total_potential(r, star.values)
                        - rule_total_potential(r, training.values))
    return grad


def learn_weights(ruleset: WeightedRuleSet, training: Interpretation,
                  rate: float = 0.1, steps: int = 25,
                  tol: float = 1e-8) -> tuple:
    """Projected gradient ascent on rule weights; returns (ruleset, history)."""
    if rate <= 0 or steps < 1:
        raise PSLError("rate must be positive and steps at least 1")
    current = ruleset
    history = []
    for _ in range(steps):
        grad = weight_gradient(current, training, tol=tol)
        new_weights = {
            name: max(0.0, w + rate * grad[name])
            for name, w in current.weights().items()
        }
        history.append(dict(grad))
        current = current.reweighted(new_weights)
    return current, history


def weights_to_json(ruleset: WeightedRuleSet) -> str:
    return json.dumps({"weights": ruleset.weights()}, indent=2, sort_keys=True)


def weights_from_json(text: str) -> dict:
    return dict(json.loads(text)["weights"])
