"""Runtime values of the stream language.

Plain Python objects carry the common cases: floats, ints, bools, ``()`` for
unit and 2-tuples for pairs. The classes below cover everything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class RV:
    """Reference to a node of the delayed-sampling graph."""

    id: int

    def __repr__(self):
        return f"RV({self.id})"


@dataclass(frozen=True)
class SymApp:
    """A first-order builtin applied to an argument that mentions random variables."""

    op: str
    arg: Any


@dataclass(frozen=True)
class SymDist:
    """A distribution whose parameters mention random variables."""

    family: str
    arg: Any


@dataclass(frozen=True)
class ListV:
    items: tuple = ()

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class ArrayV:
    items: tuple = ()

    def __len__(self):
        return len(self.items)


@dataclass(eq=False)
class Closure:
    param: Any  # pattern
    body: Any  # expression
    env: dict
    prob: bool = False


@dataclass(eq=False)
class StreamFn:
    """A stream function: initial state expression plus a step clause."""

    name: str
    init: Any
    state_pat: Any
    arg_pat: Any
    body: Any
    env: dict
    prob: bool
    init_value: Any = None


@dataclass(eq=False)
class DInstance:
    """State of a running deterministic stream."""

    fn: StreamFn
    state: Any


@dataclass(eq=False)
class PInstance:
    """State of an inference instance: one (state, graph) pair per particle."""

    fn: StreamFn
    particles: list = field(default_factory=list)
    step: int = 0
    site: int = 0


@dataclass(eq=False)
class Builtin:
    """A builtin function value (first-class when passed as an argument)."""

    name: str


def frv(v: Any) -> frozenset[int]:
    """Ids of the random variables occurring in a value."""
    out: set[int] = set()
    _collect(v, out)
    return frozenset(out)


def _collect(v: Any, out: set[int]) -> None:
    if isinstance(v, RV):
        out.add(v.id)
    elif isinstance(v, tuple):
        for c in v:
            _collect(c, out)
    elif isinstance(v, (SymApp, SymDist)):
        _collect(v.arg, out)
    elif isinstance(v, (ListV, ArrayV)):
        for c in v.items:
            _collect(c, out)
    elif isinstance(v, DInstance):
        _collect(v.state, out)


def ordered_frv(v: Any) -> list[int]:
    return sorted(frv(v))


def map_rvs(v: Any, f) -> Any:
    """Rebuild ``v`` with every random variable replaced by ``f(rv)``."""
    if isinstance(v, RV):
        return f(v)
    if isinstance(v, tuple):
        return tuple(map_rvs(c, f) for c in v)
    if isinstance(v, SymApp):
        return SymApp(v.op, map_rvs(v.arg, f))
    if isinstance(v, SymDist):
        return SymDist(v.family, map_rvs(v.arg, f))
    if isinstance(v, ListV):
        return ListV(tuple(map_rvs(c, f) for c in v.items))
    if isinstance(v, ArrayV):
        return ArrayV(tuple(map_rvs(c, f) for c in v.items))
    if isinstance(v, DInstance):
        return DInstance(v.fn, map_rvs(v.state, f))
    return v


def to_json(v: Any) -> Any:
    """Concrete value to a JSON-friendly structure."""
    if isinstance(v, bool) or v is None:
        return v
    if isinstance(v, (int, float)):
        return v
    if v == ():
        return None
    if isinstance(v, tuple):
        return [to_json(c) for c in v]
    if isinstance(v, (ListV, ArrayV)):
        return [to_json(c) for c in v.items]
    return repr(v)
