"""Four-rectangle benchmark on a planar grid.

Four classes A, B, C, D live on a square domain sampled as a regular grid.
A and B are fully supervised, C partially, D not at all, and the single rule

    forall x: (A(x) and B(x)) -> (C(x) and D(x))

ties them together.  Its clause form is translated into the connectives of
the target logic in two ways: translation "2" keeps the concave fragment
(weak conjunction over strong disjunctions) and trains through the exact
QP; translation "1" uses the strong conjunction of the clauses, whose
violation saturates, and is trained by plain subgradient descent from a
random start since no convex formulation exists for it.  A "none" model
without the rule serves as the common baseline.

Per (supervision fraction, repetition, variant) the driver records the F1
score of classes C and D on the full grid.  Everything is deterministic
given the config seed; rows come out ready for CSV.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .grounding import ground_instances
from .learner import (
    KernelSpec,
    TrainingSets,
    assemble_primal,
    constraint_from_form,
    train,
)
from .normalize import normalize, simplify
from .parser import parse_kb
from .pwl import compile_formula, negate_form


class ExperimentError(Exception):
    pass


DEFAULT_RECTANGLES = {
    "A": (-3.0, 1.0, -2.0, 2.0),
    "B": (-1.0, 3.0, -1.0, 1.0),
    "C": (-1.0, 1.0, -3.0, 3.0),
    "D": (-1.0, 1.0, -1.0, 1.0),
}

CSV_HEADER = "fraction,rep,variant,class,f1"


@dataclass
class ExperimentConfig:
    xmin: float = -3.0
    xmax: float = 3.0
    ymin: float = -3.0
    ymax: float = 3.0
    step: float = 0.5
    rectangles: dict = field(default_factory=lambda: dict(DEFAULT_RECTANGLES))
    fractions: list = field(default_factory=lambda: [round(0.1 * k, 2) for k in range(1, 11)])
    sigma: float = 1.0
    C1: float = 15.0
    C2: float = 10.0
    seed: int = 0
    repetitions: int = 5
    variants: list = field(default_factory=lambda: ["none", "1", "2"])
    tol: float = 1e-3
    # training effort cap per QP; scores move well below the decision
    # threshold's granularity long before full convergence
    max_iter: int = 2000

    def __post_init__(self):
        self.rectangles = {k: tuple(v) for k, v in self.rectangles.items()}
        if self.step <= 0 or self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise ExperimentError("degenerate domain box or step")
        if set(self.rectangles) != {"A", "B", "C", "D"}:
            raise ExperimentError("rectangles must be exactly A, B, C, D")
        for name, (x0, x1, y0, y1) in self.rectangles.items():
            if x1 <= x0 or y1 <= y0:
                raise ExperimentError(f"rectangle {name} is degenerate")
            if x0 < self.xmin or x1 > self.xmax or y0 < self.ymin or y1 > self.ymax:
                raise ExperimentError(f"rectangle {name} leaves the domain box")
        for f in self.fractions:
            if not 0.0 < f <= 1.0:
                raise ExperimentError(f"supervision fraction {f} outside (0,1]")
        for v in self.variants:
            if v not in ("none", "1", "2"):
                raise ExperimentError(f"unknown variant {v!r}")
        if self.repetitions < 0:
            raise ExperimentError("repetitions must be nonnegative")
        if self.sigma <= 0 or self.C1 <= 0 or self.C2 <= 0:
            raise ExperimentError("sigma, C1, C2 must be positive")
        if self.max_iter < 1:
            raise ExperimentError("max_iter must be positive")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))


def grid_points(config: ExperimentConfig) -> list:
    xs = np.arange(config.xmin, config.xmax + config.step / 2, config.step)
    ys = np.arange(config.ymin, config.ymax + config.step / 2, config.step)
    return [(float(x), float(y)) for x in xs for y in ys]


def in_rectangle(point, rect) -> bool:
    x0, x1, y0, y1 = rect
    return x0 <= point[0] <= x1 and y0 <= point[1] <= y1


def membership(config: ExperimentConfig, points) -> dict:
    """Ground-truth boolean vector per class."""
    return {
        name: np.array([in_rectangle(p, rect) for p in points])
        for name, rect in config.rectangles.items()
    }


def f1_score(predicted: np.ndarray, truth: np.ndarray) -> float:
    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    if tp == 0:
        return 1.0 if fp == 0 and fn == 0 else 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


# -- the logical constraint, taken through the full compilation path ---------


def _rule_constraints(n_points: int):
    """Clause form of (A and B) -> (C and D), concave translation, grounded
    at every grid point; one constraint (one slack) per point."""
    consts = ", ".join(f"g{i}" for i in range(n_points))
    kb = parse_kb(
        f"domain pt = {{{consts}}}\n"
        "pred A(pt)\npred B(pt)\npred C(pt)\npred D(pt)\n"
        "rule link: forall x: (~A(x) + ~B(x) + C(x)) ^ (~A(x) + ~B(x) + D(x))\n"
    )
    instances, gmap = ground_instances(kb.rule("link").formula, kb)
    constraints = []
    for inst in instances:
        body = simplify(normalize(inst.formula))
        form = negate_form(compile_formula(body))
        i = int(inst.binding["x"][1:])
        sites = {f"{p}(g{i})": (p, i) for p in ("A", "B", "C", "D")}
        constraints.append(constraint_from_form(form, sites, name=f"link@g{i}"))
    return constraints


def _training_sets(config, points, truth, c_indices) -> TrainingSets:
    labeled = {}
    for name in ("A", "B"):
        labeled[name] = [(p, 1 if truth[name][i] else -1)
                         for i, p in enumerate(points)]
    labeled["C"] = [(points[i], 1 if truth["C"][i] else -1) for i in c_indices]
    labeled["D"] = []
    unlabeled = {name: list(points) for name in ("A", "B", "C", "D")}
    return TrainingSets(labeled=labeled, unlabeled=unlabeled)


def _variant1_scores(config, points, truth, c_indices, rng, gram):
    """Subgradient training with the saturating rule penalty.

    The penalty per point is min(1, relu(A+B-C-1) + relu(A+B-D-1)): the sum
    of the two clause violations under the strong translation, capped.  Once
    the cap binds, the gradient dies, which is the whole point of comparing
    against the exact convex treatment.
    """
    n = len(points)
    K = gram
    labels = {}
    sup_mask = {}
    for name in ("A", "B", "C", "D"):
        y = np.zeros(n)
        mask = np.zeros(n, dtype=bool)
        if name in ("A", "B"):
            mask[:] = True
            y[:] = np.where(truth[name], 1.0, -1.0)
        elif name == "C":
            mask[c_indices] = True
            y[c_indices] = np.where(truth["C"][c_indices], 1.0, -1.0)
        labels[name] = y
        sup_mask[name] = mask

    alpha = {name: rng.normal(scale=0.1, size=n) for name in ("A", "B", "C", "D")}
    bias = {name: float(rng.normal(scale=0.1)) for name in ("A", "B", "C", "D")}
    box_weight = 10.0

    def predictions():
        return {name: K @ alpha[name] + bias[name] for name in alpha}

    def objective(p):
        total = 0.0
        for name in alpha:
            total += 0.5 * alpha[name] @ K @ alpha[name]
            m, y = sup_mask[name], labels[name]
            if m.any():
                up = (y == 1) & m
                down = (y == -1) & m
                total += config.C1 * np.maximum(0.0, 1.0 - p[name][up]).sum()
                total += config.C1 * np.maximum(0.0, p[name][down]).sum()
            total += box_weight * (
                np.maximum(0.0, -p[name]) ** 2 + np.maximum(0.0, p[name] - 1.0) ** 2
            ).sum()
        h1 = np.maximum(0.0, p["A"] + p["B"] - p["C"] - 1.0)
        h2 = np.maximum(0.0, p["A"] + p["B"] - p["D"] - 1.0)
        total += config.C2 * np.minimum(1.0, h1 + h2).sum()
        return float(total)

    best_obj = np.inf
    best = None
    steps = 600
    for t in range(steps):
        p = predictions()
        obj = objective(p)
        if obj < best_obj:
            best_obj = obj
            best = ({k: v.copy() for k, v in alpha.items()}, dict(bias))
        g = {name: np.zeros(n) for name in alpha}
        for name in alpha:
            m, y = sup_mask[name], labels[name]
            g[name][(y == 1) & m & (p[name] < 1.0)] -= config.C1
            g[name][(y == -1) & m & (p[name] > 0.0)] += config.C1
            g[name] += 2.0 * box_weight * (
                np.maximum(0.0, p[name] - 1.0) - np.maximum(0.0, -p[name])
            )
        h1 = np.maximum(0.0, p["A"] + p["B"] - p["C"] - 1.0)
        h2 = np.maximum(0.0, p["A"] + p["B"] - p["D"] - 1.0)
        live = (h1 + h2) < 1.0  # saturated points contribute nothing
        a1 = live & (h1 > 0.0)
        a2 = live & (h2 > 0.0)
        g["A"] += config.C2 * (a1 + a2)
        g["B"] += config.C2 * (a1 + a2)
        g["C"] -= config.C2 * a1
        g["D"] -= config.C2 * a2
        # Descent direction preconditioned by the kernel: the parameter
        # gradient is K(alpha + g) for alpha and sum(g) for the bias, so
        # stepping along (alpha + g, sum(g)) follows the function-space
        # gradient.  Normalize by the induced prediction change to keep
        # steps comparable across iterations.
        d_alpha = {name: alpha[name] + g[name] for name in alpha}
        d_bias = {name: float(g[name].sum()) for name in alpha}
        mag = 1.0
        for name in alpha:
            shift = K @ d_alpha[name] + d_bias[name]
            mag = max(mag, float(np.abs(shift).max()))
        lr = 0.5 / np.sqrt(1.0 + t)
        for name in alpha:
            alpha[name] -= (lr / mag) * d_alpha[name]
            bias[name] -= (lr / mag) * d_bias[name]
    p = predictions()
    if objective(p) > best_obj:
        alpha, bias = best
        p = {name: K @ alpha[name] + bias[name] for name in alpha}
    return {name: p[name] for name in ("C", "D")}


def _variant_qp_scores(config, points, truth, c_indices, constraints, gram_cache):
    data = _training_sets(config, points, truth, c_indices)
    kernels = {name: KernelSpec.gaussian(config.sigma)
               for name in ("A", "B", "C", "D")}
    asm = assemble_primal(constraints, data, kernels,
                          C1=config.C1, C2=config.C2, gram_cache=gram_cache)
    model = train(asm, tol=config.tol, max_iter=config.max_iter)
    X = np.array(points)
    return {name: model.predict(name, X) for name in ("C", "D")}


def _none_scores(config, points, truth, c_indices, gram_cache, d_cache):
    """Rule-free baseline.  Without logic rows the training QP separates per
    predicate, so only the C classifier depends on the label draw; D never
    sees a label and its (trivial) model is shared across the whole sweep.
    A and B are not evaluated and need no training at all here."""
    X = np.array(points)
    if "D" not in d_cache:
        data = TrainingSets(labeled={"D": []}, unlabeled={"D": list(points)})
        asm = assemble_primal([], data, {"D": KernelSpec.gaussian(config.sigma)},
                              C1=config.C1, C2=config.C2, gram_cache=gram_cache)
        d_cache["D"] = train(asm, tol=config.tol,
                             max_iter=config.max_iter).predict("D", X)
    labeled_c = [(points[i], 1 if truth["C"][i] else -1) for i in c_indices]
    data = TrainingSets(labeled={"C": labeled_c}, unlabeled={"C": list(points)})
    asm = assemble_primal([], data, {"C": KernelSpec.gaussian(config.sigma)},
                          C1=config.C1, C2=config.C2, gram_cache=gram_cache)
    model = train(asm, tol=config.tol, max_iter=config.max_iter)
    return {"C": model.predict("C", X), "D": d_cache["D"]}


def run_experiment(config: ExperimentConfig, log=None) -> list:
    """All (fraction, rep, variant, class, f1) rows, deterministic per seed."""
    points = grid_points(config)
    n = len(points)
    truth = membership(config, points)
    constraints = _rule_constraints(n)
    # every predicate samples the same grid, so one Gram matrix serves all
    kernel = KernelSpec.gaussian(config.sigma)
    gram = kernel.gram(np.array(points)) + 1e-10 * np.eye(n)
    gram_cache = {name: gram for name in ("A", "B", "C", "D")}
    d_cache = {}

    rows = []
    for fi, fraction in enumerate(config.fractions):
        for rep in range(config.repetitions):
            pick_rng = np.random.default_rng([config.seed, fi, rep])
            k = max(1, int(round(fraction * n)))
            c_indices = np.sort(pick_rng.choice(n, size=k, replace=False))
            for variant in config.variants:
                if variant == "none":
                    scores = _none_scores(config, points, truth,
                                          c_indices, gram_cache, d_cache)
                elif variant == "2":
                    scores = _variant_qp_scores(config, points, truth,
                                                c_indices, constraints,
                                                gram_cache)
                else:
                    init_rng = np.random.default_rng([config.seed, fi, rep, 1])
                    scores = _variant1_scores(config, points, truth,
                                              c_indices, init_rng, gram)
                for cls in ("C", "D"):
                    score = f1_score(scores[cls] >= 0.5, truth[cls])
                    rows.append((fraction, rep, variant, cls, score))
                    if log:
                        log(f"fraction={fraction:.2f} rep={rep} "
                            f"variant={variant} class={cls} f1={score:.4f}")
    return rows


def rows_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for fraction, rep, variant, cls, score in rows:
        lines.append(f"{fraction:.2f},{rep},{variant},{cls},{score:.6f}")
    return "\n".join(lines) + "\n"


def mean_f1(rows, variant: str, cls: str, fraction=None) -> float:
    vals = [
        s for (f, _, v, c, s) in rows
        if v == variant and c == cls and (fraction is None or f == fraction)
    ]
    if not vals:
        raise ExperimentError("no rows match the aggregation filter")
    return float(np.mean(vals))
