"""Built-in registry and the standard comparison built-ins."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

IN = "in"
OUT = "out"


class BuiltinError(Exception):
    """Raised by a built-in on bad arguments; the engine logs it and skips the binding."""


@dataclass(frozen=True)
class BuiltinDef:
    """A built-in predicate callable from rule bodies.

    ``func(ctx, args)`` receives the argument values in order, with ``None``
    in OUTPUT positions. Filters return a bool; generative built-ins return
    an iterable of tuples holding the OUTPUT values.
    """

    namespace: str
    name: str
    signature: tuple[str, ...]
    func: Callable[[Any, tuple], Any]
    generative: bool = False
    memoizable: bool = False

    def __post_init__(self):
        if any(s not in (IN, OUT) for s in self.signature):
            raise ValueError("signature entries must be 'in' or 'out'")
        if OUT in self.signature and not self.generative:
            raise ValueError(f"{self.qualname}: OUTPUT arguments need a generative built-in")

    @property
    def qualname(self) -> str:
        return f"{self.namespace}:{self.name}"

    @property
    def arity(self) -> int:
        return len(self.signature)


class BuiltinRegistry:
    def __init__(self, defs=()):
        self._defs: dict[tuple[str, str], BuiltinDef] = {}
        for d in defs:
            self.register(d)

    def register(self, bdef: BuiltinDef) -> None:
        self._defs[(bdef.namespace, bdef.name)] = bdef

    def get(self, namespace: str, name: str) -> BuiltinDef | None:
        return self._defs.get((namespace, name))

    def __contains__(self, key) -> bool:
        return key in self._defs

    def __iter__(self):
        return iter(self._defs.values())

    def copy(self) -> "BuiltinRegistry":
        return BuiltinRegistry(self._defs.values())


def _number(x) -> float | int:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise BuiltinError(f"comparison needs numbers, got {x!r}")
    return x


def eval_comparison_builtin(name: str, a, b) -> bool:
    """``lessThan``/``greaterThan`` are strict; ``equal`` is exact for two
    integers and within 1e-9 otherwise."""
    a, b = _number(a), _number(b)
    if name == "lessThan":
        return a < b
    if name == "greaterThan":
        return a > b
    if name == "equal":
        if isinstance(a, int) and isinstance(b, int):
            return a == b
        return math.isclose(a, b, rel_tol=0.0, abs_tol=1e-9)
    raise BuiltinError(f"unknown comparison {name!r}")


def _comparison(name):
    def func(ctx, args):
        return eval_comparison_builtin(name, *args)
    return BuiltinDef("swrlb", name, (IN, IN), func)


def standard_registry() -> BuiltinRegistry:
    return BuiltinRegistry(_comparison(n) for n in ("lessThan", "greaterThan", "equal"))
