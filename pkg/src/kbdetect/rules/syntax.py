"""Rule language: atoms, rules and the text parser.

One rule per statement::

    rule uncle : hasParent(?x, ?y) ^ hasBrother(?y, ?z) -> hasUncle(?x, ?z)

Atoms are ``Class(term)``, ``prop(term, term)`` or ``ns:builtin(args...)``.
Terms are variables (``?x``), numbers, quoted strings, ``true``/``false`` or
bare names (enum tags and individual names). ``//`` starts a comment.
``@stage <name>`` tags the following rules; ``@namespace <name>`` records a
built-in namespace.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterator

from ..knowledge import ClassAtom, Const, PropertyAtom, Var


class RuleSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}")


@dataclass(frozen=True)
class BuiltinAtom:
    namespace: str
    name: str
    args: tuple

    @property
    def qualname(self) -> str:
        return f"{self.namespace}:{self.name}"

    def __str__(self):
        return f"{self.qualname}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Rule:
    name: str
    antecedent: tuple
    consequent: tuple
    stage: str | None = None
    line: int = 0

    def __str__(self):
        body = " ^ ".join(str(a) for a in self.antecedent)
        head = " ^ ".join(str(a) for a in self.consequent)
        return f"rule {self.name} : {body} -> {head}"

    def variables(self) -> set[str]:
        out = set()
        for atom in self.antecedent + self.consequent:
            for t in _atom_terms(atom):
                if isinstance(t, Var):
                    out.add(t.name)
        return out


def _atom_terms(atom) -> tuple:
    if isinstance(atom, ClassAtom):
        return (atom.term,)
    if isinstance(atom, PropertyAtom):
        return (atom.subject, atom.object)
    return atom.args


@dataclass
class RuleSet:
    rules: list[Rule] = field(default_factory=list)
    namespaces: list[str] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.rules:
            if r.name in seen:
                raise ValueError(f"duplicate rule name {r.name!r}")
            seen.add(r.name)

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def __getitem__(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def stages(self) -> list[str]:
        out = []
        for r in self.rules:
            if r.stage is not None and r.stage not in out:
                out.append(r.stage)
        return out

    def stage(self, *names: str | None) -> "RuleSet":
        return RuleSet([r for r in self.rules if r.stage in names], list(self.namespaces))

    def without_stage(self, *names: str | None) -> "RuleSet":
        return RuleSet([r for r in self.rules if r.stage not in names], list(self.namespaces))

    def to_text(self) -> str:
        lines = [f"@namespace {ns}" for ns in self.namespaces]
        current = None
        for r in self.rules:
            if r.stage != current and r.stage is not None:
                lines.append(f"@stage {r.stage}")
                current = r.stage
            lines.append(str(r))
        return "\n".join(lines) + "\n"


_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<arrow>->|→)
  | (?P<and>\^|∧)
  | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<directive>@[A-Za-z_]+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(),:;])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, offset: int = 0) -> _Tok:
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, message: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise RuleSyntaxError(message, tok.line, tok.col)

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = repr(text) if text else kind
            got = repr(tok.text) if tok.kind != "eof" else "end of input"
            self.fail(f"expected {want}, got {got}", tok)
        return self.next()

    def parse(self) -> RuleSet:
        rules, namespaces = [], []
        stage = None
        names = set()
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.kind == "directive":
                self.next()
                arg = self.expect("name").text
                if tok.text == "@stage":
                    stage = arg
                elif tok.text == "@namespace":
                    if arg not in namespaces:
                        namespaces.append(arg)
                else:
                    self.fail(f"unknown directive {tok.text!r}", tok)
            elif tok.kind == "name" and tok.text == "rule":
                rule = self.rule(stage)
                if rule.name in names:
                    self.fail(f"duplicate rule name {rule.name!r}", tok)
                names.add(rule.name)
                rules.append(rule)
            elif tok.kind == "punct" and tok.text == ";":
                self.next()
            else:
                self.fail(f"expected 'rule' or a directive, got {tok.text!r}", tok)
        return RuleSet(rules, namespaces)

    def rule(self, stage) -> Rule:
        start = self.expect("name", "rule")
        name = self.expect("name").text
        self.expect("punct", ":")
        if self.peek().kind == "arrow":
            self.fail("rule antecedent must contain at least one atom")
        body = self.conjunction()
        self.expect("arrow")
        if self.peek().kind == "eof" or (self.peek().kind == "name" and self.peek().text == "rule"):
            self.fail("rule consequent must contain at least one atom")
        head = self.conjunction()
        return Rule(name, tuple(body), tuple(head), stage, start.line)

    def conjunction(self) -> list:
        atoms = [self.atom()]
        while self.peek().kind == "and":
            self.next()
            atoms.append(self.atom())
        return atoms

    def atom(self):
        head = self.expect("name")
        if head.text == "rule":
            self.fail("'rule' is reserved", head)
        namespace = None
        if self.peek().kind == "punct" and self.peek().text == ":":
            self.next()
            namespace = head.text
            head = self.expect("name")
        self.expect("punct", "(")
        args = []
        if not (self.peek().kind == "punct" and self.peek().text == ")"):
            args.append(self.term())
            while self.peek().kind == "punct" and self.peek().text == ",":
                self.next()
                args.append(self.term())
        self.expect("punct", ")")
        if namespace is not None:
            return BuiltinAtom(namespace, head.text, tuple(args))
        if len(args) == 1:
            return ClassAtom(head.text, args[0])
        if len(args) == 2:
            return PropertyAtom(head.text, args[0], args[1])
        self.fail(f"atom {head.text!r} takes 1 (class) or 2 (property) arguments, got {len(args)}", head)

    def term(self):
        tok = self.next()
        if tok.kind == "var":
            return Var(tok.text[1:])
        if tok.kind == "number":
            t = tok.text
            return Const(float(t) if any(c in t for c in ".eE") else int(t))
        if tok.kind == "string":
            return Const(json.loads(tok.text))
        if tok.kind == "name":
            if tok.text in ("true", "True"):
                return Const(True)
            if tok.text in ("false", "False"):
                return Const(False)
            return Const(tok.text)
        self.fail(f"expected a term, got {tok.text!r}" if tok.kind != "eof" else "expected a term", tok)


def parse_rules(text: str) -> RuleSet:
    """Parse rule text. Raises :class:`RuleSyntaxError` at the first error."""
    return _Parser(text).parse()


def load_rules(path) -> RuleSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_rules(fh.read())
