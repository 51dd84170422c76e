"""Concrete implementations of the first-order builtins and distribution constructors.

Higher-order list and array functions need to call closures, so they live in
the interpreter; everything here is a plain function of a concrete value.
"""

from __future__ import annotations

from typing import Any

from . import distributions as D
from .values import ArrayV, ListV


class RuntimeTypeError(TypeError):
    """A builtin received a value of the wrong shape."""


def _num(x: Any, op: str) -> float | int:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise RuntimeTypeError(f"{op}: expected a number, got {x!r}")
    return x


def _pair(v: Any, op: str) -> tuple[Any, Any]:
    if not (isinstance(v, tuple) and len(v) == 2):
        raise RuntimeTypeError(f"{op}: expected a pair, got {v!r}")
    return v


def _arith(op: str, f):
    def run(v):
        a, b = _pair(v, op)
        return f(_num(a, op), _num(b, op))

    return run


def _div(a, b):
    if isinstance(a, int) and isinstance(b, int):
        if b == 0:
            raise ZeroDivisionError("div: integer division by zero")
        q = abs(a) // abs(b)
        return q if (a >= 0) == (b >= 0) else -q
    if b == 0:
        raise ZeroDivisionError("div: division by zero")
    return a / b


def _eq(v):
    a, b = _pair(v, "eq")
    return D.values_equal(a, b)


def _not(v):
    if not isinstance(v, bool):
        raise RuntimeTypeError(f"not: expected a bool, got {v!r}")
    return not v


def _ite(v):
    c, branches = _pair(v, "ite")
    a, b = _pair(branches, "ite")
    if not isinstance(c, bool):
        raise RuntimeTypeError(f"ite: expected a bool condition, got {c!r}")
    return a if c else b


def _mean(v):
    if not isinstance(v, D.MDistr):
        raise RuntimeTypeError(f"mean: expected a distribution, got {v!r}")
    return v.stats()[0]


def _length(v):
    if not isinstance(v, ListV):
        raise RuntimeTypeError(f"List.length: expected a list, got {v!r}")
    return len(v.items)


def _append(v):
    a, b = _pair(v, "List.append")
    if not (isinstance(a, ListV) and isinstance(b, ListV)):
        raise RuntimeTypeError("List.append: expected two lists")
    return ListV(a.items + b.items)


def index_of(i: Any, n: int, op: str) -> int:
    """Array indices may be ints or integral reals."""
    if isinstance(i, bool) or not isinstance(i, (int, float)) or float(i) != int(i):
        raise RuntimeTypeError(f"{op}: index {i!r} is not integral")
    k = int(i)
    if not 0 <= k < n:
        raise IndexError(f"{op}: index {k} out of bounds for length {n}")
    return k


def _get(v):
    a, i = _pair(v, "Array.get")
    if not isinstance(a, ArrayV):
        raise RuntimeTypeError(f"Array.get: expected an array, got {a!r}")
    return a.items[index_of(i, len(a.items), "Array.get")]


FIRST_ORDER = {
    "plus": _arith("plus", lambda a, b: a + b),
    "sub": _arith("sub", lambda a, b: a - b),
    "mult": _arith("mult", lambda a, b: a * b),
    "div": _arith("div", _div),
    "lt": _arith("lt", lambda a, b: a < b),
    "eq": _eq,
    "not": _not,
    "ite": _ite,
    "mean": _mean,
    "eval": lambda v: v,
    "List.length": _length,
    "List.append": _append,
    "Array.get": _get,
}

CONSTANTS = {"List.nil": ListV(()), "Array.empty": ArrayV(())}

HIGHER_ORDER = {"List.init", "List.map", "List.filter", "List.iter2", "Array.init"}

# Ops whose result is a pure function of a symbolic argument. The rest either
# inspect structure (lists, arrays) or need a concrete value.
SYMBOLIC_OK = {"plus", "sub", "mult", "div", "lt", "eq", "not", "ite"}


class ListShuffle(D.Shuffle):
    """Shuffle over a list value; draws come back as lists."""

    def draw(self, rng):
        return ListV(super().draw(rng))


def _float(x: Any, fam: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise RuntimeTypeError(f"{fam}: expected a number, got {x!r}")
    return float(x)


def make_distribution(family: str, arg: Any) -> D.MDistr:
    if family == "gaussian":
        m, v = _pair(arg, family)
        return D.Gaussian(_float(m, family), _float(v, family))
    if family == "beta":
        a, b = _pair(arg, family)
        return D.Beta(_float(a, family), _float(b, family))
    if family == "uniform":
        a, b = _pair(arg, family)
        return D.Uniform(_float(a, family), _float(b, family))
    if family == "bernoulli":
        return D.Bernoulli(_float(arg, family))
    if family == "poisson":
        return D.Poisson(_float(arg, family))
    if family == "shuffle":
        if not isinstance(arg, ListV):
            raise RuntimeTypeError(f"shuffle: expected a list, got {arg!r}")
        return ListShuffle(arg.items)
    raise RuntimeTypeError(f"unknown distribution {family}")


DISTRIBUTIONS = ("gaussian", "beta", "bernoulli", "poisson", "uniform", "shuffle")


def apply_first_order(op: str, arg: Any) -> Any:
    if op in DISTRIBUTIONS:
        return make_distribution(op, arg)
    return FIRST_ORDER[op](arg)
