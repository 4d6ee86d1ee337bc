"""A small closed-vocabulary knowledge base.

Classes form a forest, individuals carry upward-closed class memberships
and property assertions are kept as an insertion-ordered set. Patterns of
class and property atoms can be matched against it, and the whole store
round-trips through a JSON document.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Any, Iterator, Sequence

from .boxes import BoundingBox

OBJECT = "object"
DATA = "data"
RANGES = ("any", "number", "string", "boolean", "point", "box")

SEMANTIC_OBJECT = "Semantic_Object"
SEMANTIC_CLASSES = ("Building", "Wall", "Door", "Window", "Ground", "Panel", "Gate_Counter")
DISJOINT_SEMANTIC = ("Wall", "Ground", "Panel", "Gate_Counter")


class KnowledgeError(ValueError):
    """Unknown name, referential-integrity or type error on a KB update."""


class KBSchemaError(ValueError):
    """A KB document does not match the expected layout. ``where`` locates it."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return f"?{self.name}"


@dataclass(frozen=True)
class Const:
    value: Any

    def __str__(self):
        if isinstance(self.value, str):
            bare = self.value.isidentifier() and self.value not in ("true", "True", "false", "False", "rule")
            return self.value if bare else json.dumps(self.value)
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        return repr(self.value)


@dataclass(frozen=True)
class ClassAtom:
    cls: str
    term: Any

    def __str__(self):
        return f"{self.cls}({self.term})"


@dataclass(frozen=True)
class PropertyAtom:
    prop: str
    subject: Any
    object: Any

    def __str__(self):
        return f"{self.prop}({self.subject}, {self.object})"


@dataclass(frozen=True)
class PropertyDef:
    name: str
    kind: str
    range: str = "any"


@dataclass(frozen=True)
class Assertion:
    subject: str
    property: str
    object: Any


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


def value_key(v):
    """Hashable identity of a value; keeps 1, 1.0 equal and apart from True."""
    if isinstance(v, bool):
        return ("b", v)
    if isinstance(v, (int, float)):
        return ("n", float(v))
    if isinstance(v, str):
        return ("s", v)
    if isinstance(v, tuple):
        return ("p",) + tuple(float(x) for x in v)
    if isinstance(v, BoundingBox):
        return ("x", v)
    raise KnowledgeError(f"unsupported value type {type(v).__name__}")


def values_equal(a, b) -> bool:
    try:
        return value_key(a) == value_key(b)
    except KnowledgeError:
        return False


def _matches_range(value, rng: str) -> bool:
    if rng == "any":
        return isinstance(value, (bool, int, float, str, tuple, BoundingBox))
    if rng == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
    if rng == "string":
        return isinstance(value, str)
    if rng == "boolean":
        return isinstance(value, bool)
    if rng == "point":
        return (isinstance(value, tuple) and len(value) in (2, 3)
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value))
    if rng == "box":
        return isinstance(value, BoundingBox)
    return False


class KnowledgeBase:
    """Classes, property declarations, individuals and assertions."""

    def __init__(self):
        self.classes: dict[str, str | None] = {}
        self.properties: dict[str, PropertyDef] = {}
        self.disjoint: list[tuple[str, ...]] = []
        self._members: dict[str, dict[str, None]] = {}  # individual -> ordered class set
        self._facts: dict[tuple, Assertion] = {}
        self._by_prop: dict[str, list[Assertion]] = {}
        self._by_subject: dict[tuple[str, str], list[Assertion]] = {}
        self.version = 0  # bumps on every new fact or membership

    # -- vocabulary ------------------------------------------------------
    def declare_class(self, name: str, superclass: str | None = None) -> None:
        if name in self.classes:
            if self.classes[name] != superclass:
                raise KnowledgeError(f"class {name!r} already declared with another superclass")
            return
        if superclass is not None:
            if superclass not in self.classes:
                raise KnowledgeError(f"unknown superclass {superclass!r}")
        self.classes[name] = superclass

    def declare_property(self, name: str, kind: str, range: str = "any") -> None:
        if kind not in (OBJECT, DATA):
            raise KnowledgeError(f"property kind must be 'object' or 'data', got {kind!r}")
        if range not in RANGES:
            raise KnowledgeError(f"unknown property range {range!r}")
        pdef = PropertyDef(name, kind, range if kind == DATA else "any")
        old = self.properties.get(name)
        if old is not None and old != pdef:
            raise KnowledgeError(f"property {name!r} already declared differently")
        self.properties[name] = pdef

    def declare_disjoint(self, *classes: str) -> None:
        for c in classes:
            if c not in self.classes:
                raise KnowledgeError(f"unknown class {c!r}")
        group = tuple(classes)
        if group not in self.disjoint:
            self.disjoint.append(group)

    def superclasses(self, cls: str) -> list[str]:
        """``cls`` followed by its ancestors, nearest first."""
        chain = []
        seen = set()
        while cls is not None:
            if cls in seen:
                raise KnowledgeError(f"class cycle through {cls!r}")
            seen.add(cls)
            chain.append(cls)
            cls = self.classes[cls]
        return chain

    def is_subclass(self, cls: str, ancestor: str) -> bool:
        return ancestor in self.superclasses(cls)

    # -- individuals and facts ---------------------------------------------
    @property
    def individuals(self) -> list[str]:
        return list(self._members)

    def has_individual(self, name: str) -> bool:
        return name in self._members

    def classes_of(self, name: str) -> list[str]:
        return list(self._members[name])

    def add_individual(self, name: str, *classes: str) -> bool:
        """Create ``name`` (if new) and assert each class. Returns whether anything changed."""
        changed = False
        if name not in self._members:
            self._members[name] = {}
            self.version += 1
            changed = True
        for c in classes:
            changed |= self.assert_class(name, c)
        return changed

    def assert_class(self, name: str, cls: str) -> bool:
        """Assert ``cls(name)``, closing upward; creates the individual if needed."""
        if cls not in self.classes:
            raise KnowledgeError(f"unknown class {cls!r}")
        if name not in self._members:
            self._members[name] = {}
            self.version += 1
        members = self._members[name]
        new = cls not in members
        for c in self.superclasses(cls):
            if c not in members:
                members[c] = None
                self.version += 1
        return new

    def instance_of(self, name: str, cls: str) -> bool:
        return name in self._members and cls in self._members[name]

    def instances(self, cls: str) -> list[str]:
        return [n for n, cs in self._members.items() if cls in cs]

    def _check_assertion(self, a: Assertion) -> None:
        if a.property not in self.properties:
            raise KnowledgeError(f"undeclared property {a.property!r}")
        if a.subject not in self._members:
            raise KnowledgeError(f"unknown subject individual {a.subject!r}")
        pdef = self.properties[a.property]
        if pdef.kind == OBJECT:
            if not isinstance(a.object, str):
                raise KnowledgeError(f"{a.property} is an object property; value must name an individual")
            if a.object not in self._members:
                raise KnowledgeError(f"unknown object individual {a.object!r}")
        elif not _matches_range(a.object, pdef.range):
            raise KnowledgeError(f"{a.property} expects a {pdef.range} value, got {a.object!r}")

    def assert_fact(self, a: Assertion | str, prop: str | None = None, obj: Any = None) -> bool:
        """Add an assertion; returns False if it was already present.

        Accepts an :class:`Assertion` or ``(subject, property, object)``.
        """
        if not isinstance(a, Assertion):
            a = Assertion(a, prop, obj)
        if isinstance(a.object, list):
            a = Assertion(a.subject, a.property, tuple(a.object))
        self._check_assertion(a)
        key = (a.subject, a.property, value_key(a.object))
        if key in self._facts:
            return False
        self._store(key, a)
        return True

    def _store(self, key, a: Assertion) -> None:
        self._facts[key] = a
        self._by_prop.setdefault(a.property, []).append(a)
        self._by_subject.setdefault((a.property, a.subject), []).append(a)
        self.version += 1

    @property
    def assertions(self) -> list[Assertion]:
        return list(self._facts.values())

    def facts(self, prop: str, subject: str | None = None) -> list[Assertion]:
        if subject is None:
            return list(self._by_prop.get(prop, ()))
        return list(self._by_subject.get((prop, subject), ()))

    def values(self, subject: str, prop: str) -> list:
        return [a.object for a in self._by_subject.get((prop, subject), ())]

    def value(self, subject: str, prop: str, default=None):
        vals = self.values(subject, prop)
        return vals[0] if vals else default

    def has_fact(self, subject: str, prop: str, obj) -> bool:
        try:
            return (subject, prop, value_key(obj)) in self._facts
        except KnowledgeError:
            return False

    def fact_count(self) -> int:
        return len(self._facts) + sum(len(c) for c in self._members.values())

    def copy(self) -> "KnowledgeBase":
        return kb_from_document(kb_to_document(self))

    # -- querying ------------------------------------------------------------
    def query(self, pattern: Sequence) -> list[dict[str, Any]]:
        return query_pattern(self, pattern)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return kb_to_document(self) == kb_to_document(other)


def builtin_vocabulary() -> KnowledgeBase:
    """The seeded building vocabulary (scene, geometry and topology layers)."""
    kb = KnowledgeBase()
    kb.declare_class(SEMANTIC_OBJECT)
    for c in SEMANTIC_CLASSES:
        kb.declare_class(c, SEMANTIC_OBJECT)
    for c in ("Geometric_Component", "BoundingBox", "Color", "Size", "Orientation",
              "Visibility", "Texture"):
        kb.declare_class(c)
    kb.declare_disjoint(*DISJOINT_SEMANTIC)
    for p in ("has_Geometric_Component", "has_Bounding_Box", "has_Color", "has_Size",
              "has_Orientation", "has_Visibility", "has_Texture",
              "isPerpendicularTo", "isConnectedTo", "isParallelTo"):
        kb.declare_property(p, OBJECT)
    for p, rng in (("hasPosition", "point"), ("hasHeight", "number"),
                   ("hasQualification", "string"), ("hasDetectionRes", "boolean"),
                   ("hasBoxGeometry", "box"), ("hasOrientation", "string"),
                   ("hasSize", "string"), ("hasTexture", "string"), ("hasColor", "string"),
                   ("hasVisibility", "string"), ("hasPlanarity", "number")):
        kb.declare_property(p, DATA, rng)
    return kb


# -- pattern matching ---------------------------------------------------------

def _term_value(term, binding):
    if isinstance(term, Var):
        return binding.get(term.name, _UNBOUND)
    if isinstance(term, Const):
        return term.value
    return term


class _Unbound:
    pass


_UNBOUND = _Unbound()


def _bind(binding: dict, term, value) -> dict | None:
    if isinstance(term, Var):
        cur = binding.get(term.name, _UNBOUND)
        if cur is _UNBOUND:
            out = dict(binding)
            out[term.name] = value
            return out
        return binding if values_equal(cur, value) else None
    return binding if values_equal(_term_value(term, binding), value) else None


def match_atom(kb: KnowledgeBase, atom, binding: dict) -> Iterator[dict]:
    """Extend ``binding`` in every way that makes ``atom`` true in ``kb``."""
    if isinstance(atom, ClassAtom):
        if atom.cls not in kb.classes:
            raise KnowledgeError(f"unknown class {atom.cls!r} in pattern")
        val = _term_value(atom.term, binding)
        if val is not _UNBOUND:
            if isinstance(val, str) and kb.instance_of(val, atom.cls):
                yield binding
            return
        for name in kb.instances(atom.cls):
            yield _bind(binding, atom.term, name)
        return
    if isinstance(atom, PropertyAtom):
        if atom.prop not in kb.properties:
            raise KnowledgeError(f"undeclared property {atom.prop!r} in pattern")
        subj = _term_value(atom.subject, binding)
        if subj is _UNBOUND:
            candidates = kb.facts(atom.prop)
        elif isinstance(subj, str):
            candidates = kb.facts(atom.prop, subj)
        else:
            return
        for fact in candidates:
            b = _bind(binding, atom.subject, fact.subject)
            if b is None:
                continue
            b = _bind(b, atom.object, fact.object)
            if b is not None:
                yield b
        return
    raise KnowledgeError(f"cannot match {atom!r} against the knowledge base")


def query_pattern(kb: KnowledgeBase, pattern: Sequence) -> list[dict[str, Any]]:
    """All bindings satisfying the conjunction, joined left to right."""
    if not all(isinstance(a, (ClassAtom, PropertyAtom)) for a in pattern):
        raise KnowledgeError("patterns may only contain class and property atoms")
    results = [{}]
    for atom in pattern:
        results = [b for prev in results for b in match_atom(kb, atom, prev)]
    return results


# -- consistency ------------------------------------------------------------

def check_consistency(kb: KnowledgeBase) -> list[Violation]:
    """Dangling references, range mismatches and disjoint class memberships."""
    out = []
    for name, cs in kb._members.items():
        for c in cs:
            if c not in kb.classes:
                out.append(Violation("undefined-class", f"{name} is asserted into undefined class {c}"))
    for a in kb.assertions:
        pdef = kb.properties.get(a.property)
        if pdef is None:
            out.append(Violation("undeclared-property", f"{a.subject} uses undeclared property {a.property}"))
            continue
        if not kb.has_individual(a.subject):
            out.append(Violation("dangling-reference", f"{a.property} subject {a.subject!r} does not exist"))
        if pdef.kind == OBJECT:
            if not isinstance(a.object, str):
                out.append(Violation("type-mismatch", f"{a.property}({a.subject}) has non-individual value {a.object!r}"))
            elif not kb.has_individual(a.object):
                out.append(Violation("dangling-reference", f"{a.property}({a.subject}, {a.object}) references a missing individual"))
        elif not _matches_range(a.object, pdef.range):
            out.append(Violation("type-mismatch", f"{a.property}({a.subject}) = {a.object!r} is not a {pdef.range}"))
    for group in kb.disjoint:
        for name, cs in kb._members.items():
            hit = [c for c in group if c in cs]
            if len(hit) > 1:
                out.append(Violation("disjointness", f"{name} is in disjoint classes {', '.join(hit)}"))
    return out


# -- persistence ------------------------------------------------------------

def _encode_value(v):
    if isinstance(v, BoundingBox):
        return v.to_dict()
    if isinstance(v, tuple):
        return list(v)
    return v


def _decode_value(raw, pdef: PropertyDef, where: str):
    rng = pdef.range
    if pdef.kind == OBJECT or rng in ("string",):
        if not isinstance(raw, str):
            raise KBSchemaError(where, f"expected a string, got {type(raw).__name__}")
        return raw
    if rng == "box":
        if not isinstance(raw, dict):
            raise KBSchemaError(where, "expected a box object")
        try:
            return BoundingBox.from_dict(raw)
        except (KeyError, ValueError) as e:
            raise KBSchemaError(where, f"bad box literal: {e}") from None
    if rng == "point" or isinstance(raw, list):
        if not isinstance(raw, list):
            raise KBSchemaError(where, "expected a coordinate list")
        return tuple(raw)
    if rng == "any" and isinstance(raw, dict):
        return BoundingBox.from_dict(raw)
    return raw


def kb_to_document(kb: KnowledgeBase) -> dict:
    return {
        "classes": [{"name": n, "superclass": s} for n, s in kb.classes.items()],
        "disjoint": [list(g) for g in kb.disjoint],
        "properties": [{"name": p.name, "kind": p.kind, "range": p.range} for p in kb.properties.values()],
        "individuals": [{"name": n, "classes": list(cs)} for n, cs in kb._members.items()],
        "assertions": [{"subject": a.subject, "property": a.property, "value": _encode_value(a.object)}
                       for a in kb.assertions],
    }


def _require(d: dict, key: str, where: str, kind=None):
    if not isinstance(d, dict) or key not in d:
        raise KBSchemaError(where, f"missing field {key!r}")
    val = d[key]
    if kind is not None and not isinstance(val, kind):
        raise KBSchemaError(f"{where}.{key}", f"expected {kind.__name__}")
    return val


def kb_from_document(doc: dict) -> KnowledgeBase:
    """Build a KB from a document. Dangling references load and are left to
    :func:`check_consistency`; schema errors raise :class:`KBSchemaError`."""
    if not isinstance(doc, dict):
        raise KBSchemaError("$", "KB document must be an object")
    for section in ("classes", "properties", "individuals", "assertions"):
        _require(doc, section, "$", list)
    kb = KnowledgeBase()
    pending = list(enumerate(doc["classes"]))
    # superclasses may be listed after their subclasses
    while pending:
        progress = []
        for i, c in pending:
            where = f"classes[{i}]"
            name = _require(c, "name", where, str)
            sup = c.get("superclass")
            if sup is None or sup in kb.classes:
                kb.declare_class(name, sup)
                progress.append(i)
        if not progress:
            i, c = pending[0]
            raise KBSchemaError(f"classes[{i}].superclass", f"undefined or cyclic superclass {c.get('superclass')!r}")
        pending = [(i, c) for i, c in pending if i not in progress]
    for i, g in enumerate(doc.get("disjoint", [])):
        try:
            kb.declare_disjoint(*g)
        except KnowledgeError as e:
            raise KBSchemaError(f"disjoint[{i}]", str(e)) from None
    for i, p in enumerate(doc["properties"]):
        where = f"properties[{i}]"
        name = _require(p, "name", where, str)
        kind = _require(p, "kind", where, str)
        if kind not in (OBJECT, DATA):
            raise KBSchemaError(f"{where}.kind", f"unknown property kind {kind!r}")
        rng = p.get("range", "any")
        if rng not in RANGES:
            raise KBSchemaError(f"{where}.range", f"unknown property range {rng!r}")
        kb.declare_property(name, kind, rng)
    for i, ind in enumerate(doc["individuals"]):
        where = f"individuals[{i}]"
        name = _require(ind, "name", where, str)
        kb.add_individual(name)
        for j, c in enumerate(ind.get("classes", [])):
            if c not in kb.classes:
                raise KBSchemaError(f"{where}.classes[{j}]", f"undefined class {c!r}")
            kb.assert_class(name, c)
    for i, a in enumerate(doc["assertions"]):
        where = f"assertions[{i}]"
        subj = _require(a, "subject", where, str)
        prop = _require(a, "property", where, str)
        if prop not in kb.properties:
            raise KBSchemaError(f"{where}.property", f"undeclared property {prop!r}")
        raw = _require(a, "value", where)
        value = _decode_value(raw, kb.properties[prop], f"{where}.value")
        fact = Assertion(subj, prop, value)
        key = (subj, prop, value_key(value))
        if key not in kb._facts:
            kb._store(key, fact)
    return kb


def dumps_kb(kb: KnowledgeBase) -> str:
    return json.dumps(kb_to_document(kb), indent=2) + "\n"


def save_kb(kb: KnowledgeBase, path) -> None:
    text = dumps_kb(kb)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_kb(path) -> KnowledgeBase:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise KBSchemaError(f"line {e.lineno}", e.msg) from None
    return kb_from_document(doc)
