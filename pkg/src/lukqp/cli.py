"""Command-line front end.

Each subcommand reads plain files, runs one pipeline stage, and writes a
deterministic text result to stdout or ``-o``.  Exit status 0 means success;
any parse, validation, compilation, or solver error exits with status 2 and
a one-line message on stderr.
"""

import argparse
import json
import sys

from .collective import (
    CollectiveError,
    PriorTable,
    priors_from_dict,
    result_to_json,
    solve_collective,
)
from .experiment import ExperimentConfig, ExperimentError, rows_to_csv, run_experiment
from .formula import (
    Atom,
    Const,
    FormulaError,
    Implies,
    Join,
    Not,
    Quant,
    Var,
    iter_nodes,
)
from .grounding import (
    DEFAULT_LEAF_GUARD,
    GroundingError,
    GroundingMap,
    atom_name,
    ground_instances,
)
from .learner import (
    KernelSpec,
    LearnerError,
    TrainingSets,
    assemble_primal,
    constraint_from_form,
    load_predicate_csv,
    train,
)
from .normalize import (
    FragmentLabel,
    NotNormalizedError,
    TranslationError,
    classify,
    fragment_violation_path,
    normalize,
    simplify,
)
from .parser import ParseError, parse_kb, print_formula
from .psl import (
    Interpretation,
    PSLError,
    compile_ruleset,
    learn_weights,
    map_inference,
    weights_to_json,
)
from .pwl import CompilationError, EnvelopeError, FormKind, compile_formula, negate_form
from .qp import DEFAULT_MAX_ITER, DEFAULT_TOL, QPError

PACKAGE_ERRORS = (
    ParseError,
    FormulaError,
    NotNormalizedError,
    TranslationError,
    CompilationError,
    EnvelopeError,
    GroundingError,
    LearnerError,
    CollectiveError,
    PSLError,
    ExperimentError,
    QPError,
)


class CliError(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
        return
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {out_path}: {exc.strerror or exc}") from exc


def _read_json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def _strip_universals(formula, rule_name: str):
    """Peel leading universal quantifiers; reject existentials anywhere."""
    for node in iter_nodes(formula):
        if isinstance(node, Quant) and not node.universal:
            raise CliError(
                f"rule {rule_name!r} uses an existential quantifier; "
                "these rules cannot be compiled symbolically")
    body = formula
    while isinstance(body, Quant):
        body = body.body
    for node in iter_nodes(body):
        if isinstance(node, Quant):
            raise CliError(
                f"rule {rule_name!r} has a quantifier below a connective; "
                "ground it instead of compiling symbolically")
    return body


def _propositionalize(f):
    """Treat each distinct atom template as one propositional variable."""
    if isinstance(f, Atom):
        return Var(atom_name(f.pred, f.args))
    if isinstance(f, (Var, Const)):
        return f
    if isinstance(f, Not):
        return Not(_propositionalize(f.arg))
    if isinstance(f, Implies):
        return Implies(_propositionalize(f.lhs), _propositionalize(f.rhs))
    if isinstance(f, Join):
        return Join(f.op, tuple(_propositionalize(a) for a in f.args))
    raise CliError(f"cannot compile node {type(f).__name__}")


def _form_lines(form) -> list:
    kind = "min" if form.kind is FormKind.MIN else "max"
    lines = [f"  {kind} over {', '.join(form.variables) or '(constants)'}"]
    for piece in form.pieces:
        coeffs = " ".join(str(c) for c in piece.coeffs)
        lines.append(f"  piece [{coeffs}] + {piece.intercept}")
    return lines


def cmd_compile(args) -> int:
    kb = parse_kb(_read(args.kb))
    chunks = []
    for rule in kb.rules:
        body = _propositionalize(_strip_universals(rule.formula, rule.name))
        body = simplify(normalize(body))
        label = classify(body)
        if label is FragmentLabel.NEITHER:
            raise CliError(
                f"rule {rule.name!r} is outside both fragments; offending "
                f"mix at {fragment_violation_path(body)}")
        form = compile_formula(body, label=label)
        chunks.append(f"rule {rule.name}: {label.name.lower()}")
        chunks.extend(_form_lines(form))
    text = "\n".join(chunks)
    _write(text + "\n" if text else "", args.output)
    return 0


def cmd_ground(args) -> int:
    kb = parse_kb(_read(args.kb))
    guard = DEFAULT_LEAF_GUARD
    lines = []
    gmap = None
    for rule in kb.rules:
        instances, gmap = ground_instances(
            rule.formula, kb, gmap=gmap,
            leaf_guard=guard, override_guard=args.override_grounding_guard)
        lines.append(f"rule {rule.name}: {len(instances)} instances")
        for inst in instances:
            binding = " ".join(f"{v}={c}" for v, c in sorted(inst.binding.items()))
            lines.append(f"  [{binding}] {print_formula(inst.formula)}")
    _write("\n".join(lines) + "\n" if lines else "", args.output)
    return 0


def _site_map(gmap: GroundingMap) -> dict:
    sites = {}
    for p in gmap.predicates:
        for pos, tup in enumerate(gmap.tuples[p]):
            sites[atom_name(p, tup)] = (p, pos)
    return sites


def _grounded_constraints(kb, override_guard: bool = False) -> tuple:
    """Violation-form constraints for every rule instance of the KB."""
    gmap = GroundingMap.from_kb(kb)
    sites = _site_map(gmap)
    constraints = []
    for rule in kb.rules:
        instances, _ = ground_instances(rule.formula, kb, gmap=gmap,
                                        override_guard=override_guard)
        for inst in instances:
            body = simplify(normalize(inst.formula))
            try:
                form = compile_formula(body, label=FragmentLabel.CONCAVE)
            except CompilationError as exc:
                raise CliError(
                    f"rule {rule.name!r} leaves the concave fragment: "
                    f"{fragment_violation_path(body)}") from exc
            binding = ",".join(c for _, c in sorted(inst.binding.items()))
            con = constraint_from_form(
                negate_form(form), sites,
                name=f"{rule.name}[{binding}]" if binding else rule.name)
            constraints.append(con)
    return constraints, gmap


def cmd_solve_kernel(args) -> int:
    spec = _read_json(args.config)
    for key in ("kb", "data"):
        if key not in spec:
            raise CliError(f"solver config is missing the {key!r} entry")
    kb = parse_kb(_read(spec["kb"]))
    sigma = float(spec.get("sigma", 1.0))
    C1 = float(spec.get("C1", 1.0))
    C2 = float(spec.get("C2", 1.0))

    labeled, unlabeled = {}, {}
    for pred, path in sorted(spec["data"].items()):
        if pred not in kb.predicates:
            raise CliError(f"data given for unknown predicate {pred!r}")
        one = load_predicate_csv(path)
        # the loader knows nothing about predicate names; re-key its rows
        labeled[pred] = [row for rows in one.labeled.values() for row in rows]
        unlabeled[pred] = [x for pts in one.unlabeled.values() for x in pts]
    data = TrainingSets(labeled=labeled, unlabeled=unlabeled)

    constraints, gmap = _grounded_constraints(
        kb, override_guard=args.override_grounding_guard)
    for pred in gmap.predicates:
        want = len(gmap.tuples[pred])
        have = len(data.samples(pred)) if pred in spec["data"] else 0
        if have != want:
            raise CliError(
                f"predicate {pred!r} needs one sample per domain grounding "
                f"({want}), found {have}")

    kernels = {p: KernelSpec.gaussian(sigma) for p in data.predicates()}
    assembled = assemble_primal(constraints, data, kernels, C1=C1, C2=C2)
    model = train(assembled, tol=args.tol, max_iter=args.max_iter)
    _write(model.to_json() + "\n", args.output)
    return 0


def cmd_solve_collective(args) -> int:
    kb = parse_kb(_read(args.kb))
    constraints, gmap = _grounded_constraints(
        kb, override_guard=args.override_grounding_guard)
    prior_data = _read_json(args.priors)
    if not isinstance(prior_data, dict):
        raise CliError("priors file must map grounded atoms to scores")
    priors = priors_from_dict(prior_data, gmap)
    result = solve_collective(priors, constraints, C1=args.c1,
                              tol=args.tol, max_iter=args.max_iter)
    _write(result_to_json(result, gmap, constraints) + "\n", args.output)
    return 0


def cmd_psl_map(args) -> int:
    kb = parse_kb(_read(args.kb))
    ruleset = compile_ruleset(kb)
    evidence = {}
    if args.evidence is not None:
        evidence = _read_json(args.evidence)
        if not isinstance(evidence, dict):
            raise CliError("evidence file must map grounded atoms to values")
    interp = map_inference(ruleset, evidence=evidence, tol=args.tol,
                           max_iter=args.max_iter)
    _write(interp.to_json() + "\n", args.output)
    return 0


def cmd_psl_learn(args) -> int:
    kb = parse_kb(_read(args.kb))
    ruleset = compile_ruleset(kb)
    training = Interpretation.from_json(_read(args.training))
    learned, _ = learn_weights(ruleset, training, rate=args.rate,
                               steps=args.steps, tol=args.tol)
    _write(weights_to_json(learned) + "\n", args.output)
    return 0


def cmd_experiment(args) -> int:
    config = ExperimentConfig.from_json(_read(args.config))
    if args.seed is not None:
        config.seed = args.seed
    rows = run_experiment(config)
    _write(rows_to_csv(rows), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lukqp",
        description="Compile fuzzy-logic rules and train the induced models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tol=DEFAULT_TOL):
        p.add_argument("-o", "--output", default=None,
                       help="output file (default: stdout)")
        p.add_argument("--tol", type=float, default=tol,
                       help="solver tolerance")
        p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER,
                       help="solver iteration budget")

    p = sub.add_parser("compile", help="compile each rule to its piecewise form")
    p.add_argument("kb")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("ground", help="list every grounded rule instance")
    p.add_argument("kb")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--override-grounding-guard", action="store_true")
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("solve-kernel",
                       help="train kernel classifiers under the KB's rules")
    p.add_argument("config", help="JSON with kb, data csv paths, sigma, C1, C2")
    common(p)
    p.add_argument("--override-grounding-guard", action="store_true")
    p.set_defaults(func=cmd_solve_kernel)

    p = sub.add_parser("solve-collective",
                       help="revise prior scores against the KB's rules")
    p.add_argument("kb")
    p.add_argument("priors", help="JSON mapping grounded atoms to prior scores")
    common(p)
    p.add_argument("--c1", type=float, default=1.0,
                   help="slack penalty weight")
    p.add_argument("--override-grounding-guard", action="store_true")
    p.set_defaults(func=cmd_solve_collective)

    p = sub.add_parser("psl-map", help="most probable interpretation")
    p.add_argument("kb")
    p.add_argument("evidence", nargs="?", default=None,
                   help="JSON mapping grounded atoms to fixed values")
    common(p, tol=1e-8)
    p.set_defaults(func=cmd_psl_map)

    p = sub.add_parser("psl-learn", help="fit rule weights to an interpretation")
    p.add_argument("kb")
    p.add_argument("training", help="interpretation JSON")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=25)
    p.set_defaults(func=cmd_psl_learn)

    p = sub.add_parser("experiment", help="run the grid benchmark, write CSV")
    p.add_argument("config", help="experiment configuration JSON")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config's random seed")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PACKAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
