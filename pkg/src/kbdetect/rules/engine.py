"""Safety validation and forward-chaining evaluation of rule sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator

from ..boxes import BoundingBox
from ..knowledge import (
    ClassAtom,
    Const,
    KnowledgeBase,
    KnowledgeError,
    PropertyAtom,
    Var,
    match_atom,
    value_key,
    values_equal,
)
from .registry import IN, OUT, BuiltinError, BuiltinRegistry, standard_registry
from .syntax import BuiltinAtom, Rule, RuleSet


@dataclass(frozen=True)
class RuleViolation:
    rule: str
    message: str

    def __str__(self):
        return f"{self.rule}: {self.message}"


class RuleValidationError(ValueError):
    def __init__(self, violations: list[RuleViolation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def validate_safety(ruleset: RuleSet, kb: KnowledgeBase,
                    registry: BuiltinRegistry | None = None) -> list[RuleViolation]:
    """Check vocabulary, built-in signatures and variable binding order.

    A variable is bound once a class or property atom mentioning it has
    been matched, or once it appears as an OUTPUT argument of a generative
    built-in. Built-in INPUT variables must be bound by then; consequent
    variables must be bound by the end of the antecedent.
    """
    registry = registry if registry is not None else standard_registry()
    out = []

    def bad(rule, msg):
        out.append(RuleViolation(rule.name, msg))

    for rule in ruleset:
        bound: set[str] = set()
        for atom in rule.antecedent:
            if isinstance(atom, ClassAtom):
                if atom.cls not in kb.classes:
                    bad(rule, f"unknown class {atom.cls!r}")
                if isinstance(atom.term, Var):
                    bound.add(atom.term.name)
            elif isinstance(atom, PropertyAtom):
                if atom.prop not in kb.properties:
                    bad(rule, f"unknown property {atom.prop!r}")
                for t in (atom.subject, atom.object):
                    if isinstance(t, Var):
                        bound.add(t.name)
            else:
                bdef = registry.get(atom.namespace, atom.name)
                if bdef is None:
                    bad(rule, f"unknown built-in {atom.qualname}")
                    continue
                if len(atom.args) != bdef.arity:
                    bad(rule, f"{atom.qualname} takes {bdef.arity} arguments, got {len(atom.args)}")
                    continue
                outputs = []
                for pos, (arg, mode) in enumerate(zip(atom.args, bdef.signature)):
                    if mode == IN and isinstance(arg, Var) and arg.name not in bound:
                        bad(rule, f"input ?{arg.name} of {atom.qualname} is unbound at that point")
                    elif mode == OUT:
                        if not isinstance(arg, Var):
                            bad(rule, f"argument {pos + 1} of {atom.qualname} is an output and must be a variable")
                        else:
                            outputs.append(arg.name)
                bound.update(outputs)
        for atom in rule.consequent:
            if isinstance(atom, BuiltinAtom):
                bad(rule, f"built-in {atom.qualname} is not allowed in a consequent")
                continue
            if isinstance(atom, ClassAtom):
                if atom.cls not in kb.classes:
                    bad(rule, f"unknown class {atom.cls!r}")
                terms = (atom.term,)
            else:
                if atom.prop not in kb.properties:
                    bad(rule, f"unknown property {atom.prop!r}")
                terms = (atom.subject, atom.object)
            for t in terms:
                if isinstance(t, Var) and t.name not in bound:
                    bad(rule, f"consequent variable ?{t.name} is never bound")
    return out


@dataclass
class Limits:
    max_iterations: int = 100
    max_builtin_calls: int = 100_000


def _show(v) -> Any:
    if isinstance(v, BoundingBox):
        return repr(v)
    if isinstance(v, tuple):
        return list(v)
    return v


@dataclass
class Firing:
    pass_no: int
    rule: str
    bindings: dict
    new_facts: list[str]

    def to_dict(self) -> dict:
        return {"pass": self.pass_no, "rule": self.rule,
                "bindings": {k: _show(v) for k, v in self.bindings.items()},
                "new_facts": list(self.new_facts)}


@dataclass
class BuiltinCall:
    pass_no: int
    rule: str
    builtin: str
    args: list
    result: Any
    cached: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        d = {"pass": self.pass_no, "rule": self.rule, "builtin": self.builtin,
             "args": [_show(a) for a in self.args], "result": self.result, "cached": self.cached}
        if self.error is not None:
            d["error"] = self.error
        return d


@dataclass
class DerivationLog:
    firings: list[Firing] = field(default_factory=list)
    builtin_calls: list[BuiltinCall] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    passes: int = 0
    converged: bool = False

    @property
    def new_fact_count(self) -> int:
        return sum(len(f.new_facts) for f in self.firings)

    def extend(self, other: "DerivationLog") -> None:
        self.firings.extend(other.firings)
        self.builtin_calls.extend(other.builtin_calls)
        self.errors.extend(other.errors)
        self.passes += other.passes
        self.converged = other.converged

    def to_dict(self) -> dict:
        return {"passes": self.passes, "converged": self.converged,
                "firings": [f.to_dict() for f in self.firings],
                "builtin_calls": [c.to_dict() for c in self.builtin_calls],
                "errors": list(self.errors)}


class LimitExceeded(RuntimeError):
    def __init__(self, message: str, log: DerivationLog):
        self.log = log
        super().__init__(message)


@dataclass
class EvalContext:
    """Handed to built-ins: the KB being evaluated and where the call came from."""

    kb: KnowledgeBase
    rule: str = ""
    pass_no: int = 0


class _Unbound:
    pass


_UNBOUND = _Unbound()


class _Evaluator:
    def __init__(self, kb, registry, limits, memo, log):
        self.kb = kb
        self.registry = registry
        self.limits = limits
        self.memo = memo
        self.log = log
        self.calls = 0

    def _arg(self, term, binding):
        if isinstance(term, Var):
            return binding.get(term.name, _UNBOUND)
        if isinstance(term, Const):
            return term.value
        return term

    def _call(self, atom: BuiltinAtom, bdef, args, ctx):
        inputs = tuple(a for a, m in zip(args, bdef.signature) if m == IN)
        key = None
        if bdef.memoizable:
            try:
                key = (bdef.namespace, bdef.name, tuple(value_key(a) for a in inputs))
            except KnowledgeError:
                key = None
        if key is not None and key in self.memo:
            result = self.memo[key]
            self.log.builtin_calls.append(BuiltinCall(ctx.pass_no, ctx.rule, atom.qualname,
                                                      list(inputs), _summary(result), cached=True))
            return result
        self.calls += 1
        if self.calls > self.limits.max_builtin_calls:
            raise LimitExceeded(f"more than {self.limits.max_builtin_calls} built-in calls", self.log)
        call_args = tuple(None if m == OUT else a for a, m in zip(args, bdef.signature))
        result = bdef.func(ctx, call_args)
        if bdef.generative:
            result = [tuple(r) for r in result]
        else:
            result = bool(result)
        if key is not None:
            self.memo[key] = result
        self.log.builtin_calls.append(BuiltinCall(ctx.pass_no, ctx.rule, atom.qualname,
                                                  list(inputs), _summary(result)))
        return result

    def _match_builtin(self, atom: BuiltinAtom, binding, ctx) -> Iterator[dict]:
        bdef = self.registry.get(atom.namespace, atom.name)
        if bdef is None:
            raise BuiltinError(f"unknown built-in {atom.qualname}")
        args = [self._arg(t, binding) for t in atom.args]
        for a, m in zip(args, bdef.signature):
            if m == IN and a is _UNBOUND:
                raise BuiltinError(f"{atom.qualname} called with an unbound input")
        try:
            result = self._call(atom, bdef, args, ctx)
        except LimitExceeded:
            raise
        except Exception as e:  # built-in failure skips this binding only
            msg = f"pass {ctx.pass_no}, rule {ctx.rule}: {atom.qualname} failed: {e}"
            self.log.errors.append(msg)
            self.log.builtin_calls.append(BuiltinCall(ctx.pass_no, ctx.rule, atom.qualname,
                                                      [a for a in args if a is not _UNBOUND],
                                                      None, error=str(e)))
            return
        if not bdef.generative:
            if result:
                yield binding
            return
        out_terms = [t for t, m in zip(atom.args, bdef.signature) if m == OUT]
        for values in result:
            b = dict(binding)
            ok = True
            for term, val in zip(out_terms, values):
                cur = b.get(term.name, _UNBOUND)
                if cur is _UNBOUND:
                    b[term.name] = val
                elif not values_equal(cur, val):
                    ok = False
                    break
            if ok:
                yield b

    def matches(self, rule: Rule, ctx) -> Iterator[dict]:
        def walk(i, binding):
            if i == len(rule.antecedent):
                yield binding
                return
            atom = rule.antecedent[i]
            if isinstance(atom, BuiltinAtom):
                extended = self._match_builtin(atom, binding, ctx)
            else:
                extended = match_atom(self.kb, atom, binding)
            for b in extended:
                if b is not None:
                    yield from walk(i + 1, b)
        return walk(0, {})

    def fire(self, rule: Rule, binding: dict) -> list[str]:
        return assert_consequent(self.kb, rule, binding)


def _term(term, binding):
    if isinstance(term, Var):
        if term.name not in binding:
            raise KnowledgeError(f"?{term.name} is unbound")
        return binding[term.name]
    return term.value if isinstance(term, Const) else term


def assert_consequent(kb: KnowledgeBase, rule: Rule, binding: dict) -> list[str]:
    """Assert the consequent of ``rule`` under ``binding``; returns the new facts as text."""
    new = []
    for atom in rule.consequent:
        if isinstance(atom, ClassAtom):
            name = _term(atom.term, binding)
            if not isinstance(name, str):
                raise KnowledgeError(f"{atom.cls}() needs an individual, got {name!r}")
            if kb.assert_class(name, atom.cls):
                new.append(f"{atom.cls}({name})")
        elif isinstance(atom, PropertyAtom):
            s = _term(atom.subject, binding)
            o = _term(atom.object, binding)
            if kb.assert_fact(s, atom.prop, o):
                new.append(f"{atom.prop}({s}, {_show(o)})")
        else:
            raise KnowledgeError(f"cannot assert built-in {atom.qualname}")
    return new


def _summary(result):
    if isinstance(result, bool):
        return result
    return [[_show(v) for v in r] for r in result]


def evaluate_fixpoint(kb: KnowledgeBase, ruleset: RuleSet, registry: BuiltinRegistry | None = None,
                      limits: Limits | None = None, memo: dict | None = None) -> DerivationLog:
    """Fire rules in file order, pass after pass, until nothing changes.

    Each rule's matches are collected before its consequents are asserted,
    so facts derived by a rule are visible to later rules in the same pass.
    Memoizable built-ins are cached by their input values in ``memo``
    (fresh per call unless one is passed in). Raises :class:`LimitExceeded`
    with the partial log if ``max_iterations`` passes do not converge or
    the built-in call budget runs out.
    """
    registry = registry if registry is not None else standard_registry()
    limits = limits or Limits()
    log = DerivationLog()
    ev = _Evaluator(kb, registry, limits, {} if memo is None else memo, log)
    for pass_no in range(1, limits.max_iterations + 1):
        start = kb.version
        for rule in ruleset:
            ctx = EvalContext(kb, rule.name, pass_no)
            for binding in list(ev.matches(rule, ctx)):
                try:
                    new = ev.fire(rule, binding)
                except KnowledgeError as e:
                    log.errors.append(f"pass {pass_no}, rule {rule.name}: {e}")
                    continue
                if new:
                    log.firings.append(Firing(pass_no, rule.name, binding, new))
        log.passes = pass_no
        if kb.version == start:
            log.converged = True
            return log
    raise LimitExceeded(f"no fixpoint after {limits.max_iterations} passes", log)
