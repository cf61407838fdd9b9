"""Text syntax for formulas and knowledge bases.

Formula syntax (ASCII)::

    *   strong conjunction        ^   weak conjunction (min)
    +   strong disjunction        |   weak disjunction (max)
    ~   negation                  ->  implication (right associative)
    0 1 constants                 forall v: / exists v:  quantifiers

Negation binds tightest, then the conjunctions, then the disjunctions, then
implication.  Chains of one connective need no parentheses (``a + b + c``),
but two *different* binary connectives never meet without parentheses:
``a * b + c`` is rejected rather than silently grouped, because the algebra
has no joint distributivity to make the ungrouped reading safe.

Knowledge-base files (by convention ``.lkb``) hold ``domain``, ``pred`` and
``rule`` statements, ``#`` starts a comment::

    domain U = {a, b}
    pred p(U)
    rule r1 [w=2.0]: forall x: p(x)
"""

import re
from dataclasses import dataclass, field

from .formula import (
    Atom,
    Const,
    Implies,
    Join,
    Not,
    OpKind,
    Quant,
    Var,
)


class ParseError(Exception):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}, column {col}: {message}"
        super().__init__(message)


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<comment>#[^\n]*)"
    r"|(?P<arrow>->)"
    r"|(?P<op>[*^+|~():,;={}\[\]])"
    r"|(?P<number>\d+(\.\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text):
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group(0)
        if kind not in ("ws", "comment"):
            if kind == "ident" and chunk in ("forall", "exists", "domain", "pred", "rule"):
                tokens.append(Token(chunk, chunk, line, col))
            elif kind == "op" or kind == "arrow":
                tokens.append(Token(chunk, chunk, line, col))
            else:
                tokens.append(Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Cursor:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        t = self.tokens[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, kind):
        t = self.peek()
        if t.kind != kind:
            raise ParseError(f"expected {kind!r}, found {t.text or 'end of input'!r}", t.line, t.col)
        return self.next()


_TIER1 = ("*", "^")
_TIER2 = ("+", "|")
_OP_BY_TOKEN = {
    "*": OpKind.STRONG_AND,
    "^": OpKind.WEAK_AND,
    "+": OpKind.STRONG_OR,
    "|": OpKind.WEAK_OR,
}


def _parse_quantified(cur):
    t = cur.peek()
    if t.kind in ("forall", "exists"):
        cur.next()
        name = cur.expect("ident").text
        cur.expect(":")
        body, _ = _parse_quantified(cur)
        return Quant(t.kind == "forall", name, body), False
    return _parse_implication(cur)


def _parse_implication(cur):
    lhs, lhs_paren = _parse_chain(cur)
    if cur.peek().kind == "->":
        t = cur.next()
        if not lhs_paren and _is_chain(lhs):
            raise ParseError(
                "operands of -> that contain a binary connective need parentheses",
                t.line,
                t.col,
            )
        rhs, rhs_paren = _parse_implication(cur)
        if not rhs_paren and _is_chain(rhs) and not isinstance(rhs, Implies):
            raise ParseError(
                "operands of -> that contain a binary connective need parentheses",
                t.line,
                t.col,
            )
        return Implies(lhs, rhs), False
    return lhs, lhs_paren


def _is_chain(f):
    return isinstance(f, Join)


def _parse_chain(cur):
    """One unparenthesised run of a single binary connective."""
    first, first_paren = _parse_unary(cur)
    t = cur.peek()
    if t.kind not in _TIER1 + _TIER2:
        return first, first_paren
    op_tok = t.kind
    parts = [first]
    while cur.peek().kind in _TIER1 + _TIER2:
        t = cur.next()
        if t.kind != op_tok:
            raise ParseError(
                f"cannot mix {op_tok!r} and {t.kind!r} without parentheses",
                t.line,
                t.col,
            )
        part, _ = _parse_unary(cur)
        parts.append(part)
    return Join(_OP_BY_TOKEN[op_tok], tuple(parts)), False


def _parse_unary(cur):
    t = cur.peek()
    if t.kind == "~":
        cur.next()
        inner, _ = _parse_unary(cur)
        return Not(inner), False
    if t.kind == "(":
        cur.next()
        inner, _ = _parse_quantified(cur)
        cur.expect(")")
        return inner, True
    if t.kind == "number":
        if t.text == "0":
            cur.next()
            return Const(0), False
        if t.text == "1":
            cur.next()
            return Const(1), False
        raise ParseError(f"unexpected number {t.text!r} in formula", t.line, t.col)
    if t.kind in ("forall", "exists"):
        return _parse_quantified(cur)
    if t.kind == "ident":
        cur.next()
        if cur.peek().kind == "(":
            cur.next()
            args = []
            if cur.peek().kind == "ident":
                args.append(cur.next().text)
                while cur.peek().kind == ",":
                    cur.next()
                    args.append(cur.expect("ident").text)
            cur.expect(")")
            return Atom(t.text, tuple(args)), False
        return Var(t.text), False
    raise ParseError(f"unexpected token {t.text or 'end of input'!r}", t.line, t.col)


def parse_formula(text: str):
    """Parse a single formula; raises ParseError with line/column on failure."""
    cur = _Cursor(tokenize(text))
    f, _ = _parse_quantified(cur)
    t = cur.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    return f


# ---------------------------------------------------------------------------
# knowledge bases


@dataclass
class Rule:
    name: str
    formula: object
    weight: float = 1.0


@dataclass
class SourceKB:
    """Parsed knowledge base: finite domains, typed predicates, named rules."""

    domains: dict = field(default_factory=dict)  # name -> tuple of constants
    predicates: dict = field(default_factory=dict)  # name -> tuple of domain names
    rules: list = field(default_factory=list)

    def rule(self, name):
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)


def parse_kb(text: str) -> SourceKB:
    """Parse domain/pred/rule statements into a validated SourceKB."""
    cur = _Cursor(tokenize(text))
    kb = SourceKB()
    while cur.peek().kind != "eof":
        t = cur.peek()
        if t.kind == ";":
            cur.next()
            continue
        if t.kind == "domain":
            cur.next()
            name = cur.expect("ident").text
            cur.expect("=")
            cur.expect("{")
            consts = [cur.expect("ident").text]
            while cur.peek().kind == ",":
                cur.next()
                consts.append(cur.expect("ident").text)
            cur.expect("}")
            if name in kb.domains:
                raise ParseError(f"domain {name!r} declared twice", t.line, t.col)
            if len(set(consts)) != len(consts):
                raise ParseError(f"domain {name!r} repeats a constant", t.line, t.col)
            kb.domains[name] = tuple(consts)
        elif t.kind == "pred":
            cur.next()
            name = cur.expect("ident").text
            cur.expect("(")
            args = []
            if cur.peek().kind == "ident":
                args.append(cur.next().text)
                while cur.peek().kind == ",":
                    cur.next()
                    args.append(cur.expect("ident").text)
            cur.expect(")")
            if name in kb.predicates:
                raise ParseError(f"predicate {name!r} declared twice", t.line, t.col)
            for d in args:
                if d not in kb.domains:
                    raise ParseError(f"predicate {name!r} uses undeclared domain {d!r}", t.line, t.col)
            kb.predicates[name] = tuple(args)
        elif t.kind == "rule":
            cur.next()
            name = cur.expect("ident").text
            weight = 1.0
            if cur.peek().kind == "[":
                cur.next()
                wtok = cur.expect("ident")
                if wtok.text != "w":
                    raise ParseError("expected 'w=' inside rule options", wtok.line, wtok.col)
                cur.expect("=")
                weight = float(cur.expect("number").text)
                cur.expect("]")
            cur.expect(":")
            body, _ = _parse_quantified(cur)
            if any(r.name == name for r in kb.rules):
                raise ParseError(f"rule {name!r} declared twice", t.line, t.col)
            kb.rules.append(Rule(name, _resolve_rule(body, kb, t), weight))
        else:
            raise ParseError(f"expected a declaration, found {t.text!r}", t.line, t.col)
    return kb


def _resolve_rule(f, kb, at):
    """Validate atoms against declarations; bare names become 0-ary atoms."""

    def walk(node):
        if isinstance(node, Var):
            sig = kb.predicates.get(node.name)
            if sig is None:
                raise ParseError(
                    f"undeclared predicate {node.name!r} in rule", at.line, at.col
                )
            if len(sig) != 0:
                raise ParseError(
                    f"predicate {node.name!r} expects {len(sig)} arguments", at.line, at.col
                )
            return Atom(node.name, ())
        if isinstance(node, Atom):
            sig = kb.predicates.get(node.pred)
            if sig is None:
                raise ParseError(f"undeclared predicate {node.pred!r} in rule", at.line, at.col)
            if len(sig) != len(node.args):
                raise ParseError(
                    f"predicate {node.pred!r} expects {len(sig)} arguments, got {len(node.args)}",
                    at.line,
                    at.col,
                )
            return node
        if isinstance(node, Const):
            return node
        if isinstance(node, Not):
            return Not(walk(node.arg))
        if isinstance(node, Implies):
            return Implies(walk(node.lhs), walk(node.rhs))
        if isinstance(node, Join):
            return Join(node.op, tuple(walk(a) for a in node.args))
        if isinstance(node, Quant):
            return Quant(node.universal, node.var, walk(node.body))
        raise ParseError(f"unsupported node {node!r}", at.line, at.col)

    return walk(f)


# ---------------------------------------------------------------------------
# printing


def print_formula(f) -> str:
    """Render a formula so that parse_formula(print_formula(f)) == f."""
    return _print(f, top=True)


def _needs_parens(node):
    return isinstance(node, (Join, Implies, Quant))


def _print(f, top=False):
    if isinstance(f, Var):
        return f.name
    if isinstance(f, Atom):
        if not f.args:
            return f"{f.pred}()"
        return f"{f.pred}({','.join(f.args)})"
    if isinstance(f, Const):
        return str(f.value)
    if isinstance(f, Not):
        inner = _print(f.arg)
        if _needs_parens(f.arg):
            inner = f"({inner})"
        return f"~{inner}"
    if isinstance(f, Join):
        sep = f" {f.op.value} "
        parts = []
        for a in f.args:
            s = _print(a)
            if _needs_parens(a):
                s = f"({s})"
            parts.append(s)
        return sep.join(parts)
    if isinstance(f, Implies):
        l = _print(f.lhs)
        if _needs_parens(f.lhs):
            l = f"({l})"
        r = _print(f.rhs)
        if _needs_parens(f.rhs):
            r = f"({r})"
        return f"{l} -> {r}"
    if isinstance(f, Quant):
        kw = "forall" if f.universal else "exists"
        return f"{kw} {f.var}: {_print(f.body)}"
    raise ValueError(f"unknown node {f!r}")
