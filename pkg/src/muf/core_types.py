"""Core type system: simple types, det/prob modes and measurability.

Expressions under a probabilistic stream are checked in ``prob`` mode. In
that mode the expressions typed by deterministic-only rules (constants,
pairs, operator applications, ``init`` and ``infer``) must have a measurable
type, which is also what rules out nested inference: a ``pstream`` instance
is not measurable. Lambdas are exempt: they are only ever arguments of the
list and array builtins, and their bodies are checked in the enclosing mode.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .ast_parser import (
    Const,
    Expr,
    FunApp,
    FunDecl,
    If,
    Infer,
    Init,
    Lambda,
    Let,
    Observe,
    OpApp,
    Pair,
    Pattern,
    PPair,
    PUnit,
    Program,
    PVar,
    PWild,
    Sample,
    StreamDecl,
    Unfold,
    ValDecl,
    Var,
    walk,
)


class CoreTypeError(TypeError):
    def __init__(self, kind: str, msg: str):
        super().__init__(f"{kind} error: {msg}")
        self.kind = kind  # "mode" | "measurability" | "type" | "scope"


# ---------------------------------------------------------------------------
# Types

_tv_ids = itertools.count()


class TVar:
    __slots__ = ("id", "ref")

    def __init__(self):
        self.id = next(_tv_ids)
        self.ref = None

    def __repr__(self):
        return f"'t{self.id}"


@dataclass(frozen=True)
class TCon:
    name: str
    args: tuple = ()

    def __repr__(self):
        return show(self)


UNIT, BOOL, REAL, INT = TCon("unit"), TCon("bool"), TCon("real"), TCon("int")


def prod(a, b):
    return TCon("prod", (a, b))


def fun(a, b):
    return TCon("fun", (a, b))


def distr(a):
    return TCon("distr", (a,))


def lst(a):
    return TCon("list", (a,))


def arr(a):
    return TCon("array", (a,))


def resolve(t):
    while isinstance(t, TVar) and t.ref is not None:
        t = t.ref
    return t


def zonk(t):
    """Fully resolved copy of a type."""
    t = resolve(t)
    if isinstance(t, TCon):
        return TCon(t.name, tuple(zonk(a) for a in t.args))
    return t


def show(t) -> str:
    t = resolve(t)
    if isinstance(t, TVar):
        return repr(t)
    if t.name == "prod":
        return f"({show(t.args[0])} * {show(t.args[1])})"
    if t.name == "fun":
        return f"({show(t.args[0])} -> {show(t.args[1])})"
    if not t.args:
        return t.name
    return f"{t.name}({', '.join(show(a) for a in t.args)})"


def _occurs(v: TVar, t) -> bool:
    t = resolve(t)
    if t is v:
        return True
    return isinstance(t, TCon) and any(_occurs(v, a) for a in t.args)


def unify(a, b, where: str = "") -> None:
    a, b = resolve(a), resolve(b)
    if a is b:
        return
    if isinstance(a, TVar):
        if _occurs(a, b):
            raise CoreTypeError("type", f"recursive type {show(a)} = {show(b)} {where}")
        a.ref = b
        return
    if isinstance(b, TVar):
        unify(b, a, where)
        return
    if a.name != b.name or len(a.args) != len(b.args):
        raise CoreTypeError("type", f"cannot match {show(a)} with {show(b)} {where}".rstrip())
    for x, y in zip(a.args, b.args):
        unify(x, y, where)


def measurable(t) -> bool:
    """Unresolved type variables count as measurable."""
    t = resolve(t)
    if isinstance(t, TVar):
        return True
    if t.name in ("unit", "bool", "real", "int"):
        return True
    if t.name in ("prod", "distr", "list", "array"):
        return all(measurable(a) for a in t.args)
    return False


# ---------------------------------------------------------------------------
# Builtin signatures


def _signature(op: str):
    a, b, i = TVar(), TVar(), TVar()
    if op in ("plus", "sub", "mult", "div"):
        return fun(prod(a, a), a)
    if op == "lt":
        return fun(prod(a, a), BOOL)
    if op == "eq":
        return fun(prod(a, a), BOOL)
    if op == "not":
        return fun(BOOL, BOOL)
    if op == "ite":
        return fun(prod(BOOL, prod(a, a)), a)
    if op == "mean":
        return fun(distr(a), REAL)
    if op == "eval":
        return fun(a, a)
    if op == "List.init":
        return fun(prod(INT, fun(INT, a)), lst(a))
    if op == "List.map":
        return fun(prod(fun(a, b), lst(a)), lst(b))
    if op == "List.filter":
        return fun(prod(fun(a, BOOL), lst(a)), lst(a))
    if op == "List.append":
        return fun(prod(lst(a), lst(a)), lst(a))
    if op == "List.length":
        return fun(lst(a), INT)
    if op == "List.iter2":
        return fun(prod(fun(prod(a, b), UNIT), prod(lst(a), lst(b))), UNIT)
    if op == "Array.init":
        return fun(prod(INT, fun(INT, a)), arr(a))
    if op == "Array.get":
        # indices may be ints or integral reals; checked at run time
        return fun(prod(arr(a), i), a)
    # distribution parameters are checked at run time
    if op in ("gaussian", "beta", "uniform"):
        return fun(prod(a, b), distr(REAL))
    if op == "bernoulli":
        return fun(a, distr(BOOL))
    if op == "poisson":
        return fun(a, distr(INT))
    if op == "shuffle":
        return fun(lst(a), distr(lst(a)))
    raise CoreTypeError("scope", f"unknown operator {op}")


def _constant(name: str):
    if name == "List.nil":
        return lst(TVar())
    if name == "Array.empty":
        return arr(TVar())
    return None


# ---------------------------------------------------------------------------
# Checker


@dataclass
class StreamSig:
    kind: str  # "d" | "p"
    state: object
    input: object
    output: object


@dataclass
class TypedProgram:
    program: Program
    types: dict = field(default_factory=dict)  # uid -> type
    modes: dict = field(default_factory=dict)  # uid -> "det" | "prob"
    globals: dict = field(default_factory=dict)  # name -> type
    streams: dict = field(default_factory=dict)  # name -> StreamSig
    prob_funs: set = field(default_factory=set)

    def type_of(self, e: Expr):
        return zonk(self.types[e.uid])

    def main_sig(self) -> StreamSig:
        s = self.streams[self.program.main]
        return StreamSig(s.kind, zonk(s.state), zonk(s.input), zonk(s.output))


def _uses_prob(e: Expr, prob_funs: set) -> bool:
    for x in walk(e):
        if isinstance(x, (Sample, Observe)):
            return True
        if isinstance(x, FunApp) and x.fn in prob_funs:
            return True
    return False


class _Checker:
    def __init__(self, prog: Program):
        self.tp = TypedProgram(prog)
        self.pending: list[tuple] = []  # (expr, type) needing measurability

    def bind(self, p: Pattern, t, env: dict) -> None:
        if isinstance(p, PVar):
            env[p.name] = t
        elif isinstance(p, PPair):
            a, b = TVar(), TVar()
            unify(t, prod(a, b), "in pattern")
            self.bind(p.left, a, env)
            self.bind(p.right, b, env)
        elif isinstance(p, PUnit):
            unify(t, UNIT, "in () pattern")

    def lookup(self, name: str, env: dict):
        if name in env:
            return env[name]
        c = _constant(name)
        if c is not None:
            return c
        if name in self.tp.globals:
            return self.tp.globals[name]
        raise CoreTypeError("scope", f"unbound identifier {name}")

    def expr(self, e: Expr, env: dict, mode: str):
        self.tp.modes[e.uid] = mode
        t = self._expr(e, env, mode)
        self.tp.types[e.uid] = t
        return t

    def _leaf(self, e: Expr, t, mode: str):
        if mode == "prob":
            self.pending.append((e, t))
        return t

    def _value(self, e: Expr, env: dict):
        """Arguments are values checked deterministically."""
        return self.expr(e, env, "det")

    def _expr(self, e: Expr, env: dict, mode: str):
        if isinstance(e, Const):
            t = {"real": REAL, "int": INT, "bool": BOOL, "unit": UNIT}[e.ty]
            return self._leaf(e, t, mode)
        if isinstance(e, Var):
            return self.lookup(e.name, env)
        if isinstance(e, Pair):
            t = prod(self._value(e.left, env), self._value(e.right, env))
            return self._leaf(e, t, mode)
        if isinstance(e, OpApp):
            sig = _signature(e.op)
            res = TVar()
            unify(fun(self._value(e.arg, env), res), sig, f"in {e.op}")
            return self._leaf(e, res, mode)
        if isinstance(e, FunApp):
            if e.fn in self.tp.prob_funs and mode != "prob":
                raise CoreTypeError("mode", f"{e.fn} samples or observes and is called outside a probabilistic stream")
            ft = self.lookup(e.fn, env)
            res = TVar()
            unify(ft, fun(self._value(e.arg, env), res), f"in call to {e.fn}")
            return res
        if isinstance(e, If):
            unify(self._value(e.cond, env), BOOL, "in if condition")
            a = self.expr(e.then, env, mode)
            b = self.expr(e.orelse, env, mode)
            unify(a, b, "in if branches")
            return a
        if isinstance(e, Let):
            t1 = self.expr(e.bound, env, mode)
            inner = dict(env)
            self.bind(e.pat, t1, inner)
            return self.expr(e.body, inner, mode)
        if isinstance(e, Init):
            sig = self._stream(e.stream)
            if sig.kind != "d":
                raise CoreTypeError("mode", f"init expects a deterministic stream function; {e.stream} is probabilistic")
            return self._leaf(e, TCon("dstream", (sig.input, sig.output)), mode)
        if isinstance(e, Infer):
            if mode == "prob":
                raise CoreTypeError("measurability", f"nested inference: infer {e.stream} inside a probabilistic stream")
            sig = self._stream(e.stream)
            return self._leaf(e, TCon("pstream", (sig.input, sig.output)), mode)
        if isinstance(e, Unfold):
            it = resolve(self.lookup(e.inst, env))
            argt = self._value(e.arg, env)
            if isinstance(it, TCon) and it.name in ("dstream", "pstream"):
                inp, out = it.args
                unify(argt, inp, f"in unfold {e.inst}")
                out_t = out if it.name == "dstream" else distr(out)
                return prod(out_t, it)
            raise CoreTypeError("type", f"unfold: {e.inst} is not a stream instance ({show(it)})")
        if isinstance(e, Sample):
            if mode != "prob":
                raise CoreTypeError("mode", "sample outside a probabilistic stream")
            a = TVar()
            unify(self._value(e.dist, env), distr(a), "in sample")
            return a
        if isinstance(e, Observe):
            if mode != "prob":
                raise CoreTypeError("mode", "observe outside a probabilistic stream")
            a = TVar()
            unify(self._value(e.dist, env), distr(a), "in observe")
            unify(self._value(e.value, env), a, "in observed value")
            return UNIT
        if isinstance(e, Lambda):
            a = TVar()
            inner = dict(env)
            self.bind(e.pat, a, inner)
            return fun(a, self.expr(e.body, inner, mode))
        raise CoreTypeError("type", f"unknown expression {e!r}")

    def _stream(self, name: str) -> StreamSig:
        if name not in self.tp.streams:
            raise CoreTypeError("scope", f"unbound stream function {name}")
        return self.tp.streams[name]

    def decl(self, d) -> None:
        tp = self.tp
        if isinstance(d, ValDecl):
            t = self.expr(d.expr, {}, "det")
            self.bind(d.pat, t, tp.globals)
        elif isinstance(d, FunDecl):
            prob = _uses_prob(d.body, tp.prob_funs)
            a = TVar()
            env: dict = {}
            self.bind(d.pat, a, env)
            tp.globals[d.name] = fun(a, self.expr(d.body, env, "prob" if prob else "det"))
            if prob:
                tp.prob_funs.add(d.name)
        else:
            kind = "p" if _uses_prob(d.body, tp.prob_funs) or _uses_prob(d.init, tp.prob_funs) else "d"
            mode = "prob" if kind == "p" else "det"
            state, inp, out = TVar(), TVar(), TVar()
            unify(self.expr(d.init, {}, mode), state, f"in init of {d.name}")
            env = {}
            self.bind(d.state_pat, state, env)
            self.bind(d.arg_pat, inp, env)
            # the step returns (output, next state)
            unify(self.expr(d.body, env, mode), prod(out, state), f"in step of {d.name}")
            tp.streams[d.name] = StreamSig(kind, state, inp, out)
            tp.globals[d.name] = TCon("pstreamfn" if kind == "p" else "dstreamfn", (inp, out))

    def run(self) -> TypedProgram:
        for d in self.tp.program.decls:
            self.decl(d)
        for e, t in self.pending:
            if not measurable(t):
                raise CoreTypeError("measurability", f"probabilistic expression of non-measurable type {show(t)}")
        return self.tp


def typecheck_core(prog: Program) -> TypedProgram:
    """Assign every expression a type and a det/prob mode; raise CoreTypeError otherwise."""
    return _Checker(prog).run()
