"""Evaluation of stream programs.

Deterministic code is evaluated directly. Probabilistic stream bodies run
once per particle against that particle's delayed-sampling graph: random
variables stay symbolic (``RV``, ``SymApp``, ``SymDist``) until an ``if``, a
strict builtin argument or ``eval`` needs a concrete value. ``infer`` is a
particle filter with multinomial resampling at the start of every step.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Any, Callable

from . import distributions as D
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
    Program,
    PUnit,
    PVar,
    PWild,
    Sample,
    StreamDecl,
    Unfold,
    ValDecl,
    Var,
)
from .builtins import (
    CONSTANTS,
    DISTRIBUTIONS,
    FIRST_ORDER,
    SYMBOLIC_OK,
    RuntimeTypeError,
    apply_first_order,
    index_of,
    make_distribution,
)
from .core_types import TypedProgram, typecheck_core
from .ds_graph import DSGraph, Initialized
from .values import (
    RV,
    ArrayV,
    Closure,
    DInstance,
    ListV,
    PInstance,
    StreamFn,
    SymApp,
    SymDist,
    frv,
)

sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))

# Rng stream tags
_PARTICLE, _RESAMPLE, _MC = 0, 1, 2


class EvalError(RuntimeError):
    pass


class DegenerateWeights(EvalError):
    """Every particle has weight zero."""


@dataclass
class InferConfig:
    particles: int = 100
    seed: int = 0
    mc_draws: int = 1000
    record_trace: bool = False

    def __post_init__(self):
        if self.particles < 1:
            raise ValueError("particles must be at least 1")


@dataclass
class Particle:
    state: Any
    graph: DSGraph
    weight: float = 1.0


@dataclass
class _Prob:
    """Evaluation context of one particle."""

    graph: DSGraph
    weight: float = 1.0


@dataclass
class StepInfo:
    """What an observer sees after each inference step."""

    site: int
    step: int
    particles: list
    output: D.MDistr


class Interpreter:
    def __init__(self, program: Program, config: InferConfig | None = None,
                 typed: TypedProgram | None = None,
                 observer: Callable[[StepInfo], None] | None = None):
        self.program = program
        self.config = config or InferConfig()
        self.typed = typed or typecheck_core(program)
        self.observer = observer
        self._sites = 0
        self.env = self.eval_decls()

    # -- declarations --------------------------------------------------------

    def eval_decls(self) -> dict:
        env: dict = {}
        for d in self.program.decls:
            if isinstance(d, ValDecl):
                self.bind(d.pat, self.eval(d.expr, env, None), env, None)
            elif isinstance(d, FunDecl):
                env[d.name] = Closure(d.pat, d.body, env, d.name in self.typed.prob_funs)
            elif isinstance(d, StreamDecl):
                prob = self.typed.streams[d.name].kind == "p"
                env[d.name] = StreamFn(d.name, d.init, d.state_pat, d.arg_pat, d.body, env, prob)
        return env

    # -- patterns ------------------------------------------------------------

    def bind(self, p: Pattern, v: Any, env: dict, ctx: _Prob | None) -> None:
        if isinstance(p, PVar):
            env[p.name] = v
        elif isinstance(p, PPair):
            if ctx is not None and not isinstance(v, tuple) and frv(v):
                v = ctx.graph.hl_value(v)
            if not (isinstance(v, tuple) and len(v) == 2):
                raise EvalError(f"cannot match {v!r} against a pair pattern")
            self.bind(p.left, v[0], env, ctx)
            self.bind(p.right, v[1], env, ctx)
        elif isinstance(p, PUnit):
            if v != ():
                raise EvalError(f"cannot match {v!r} against ()")
        elif not isinstance(p, PWild):
            raise EvalError(f"unknown pattern {p!r}")

    # -- expressions ---------------------------------------------------------

    def lookup(self, name: str, env: dict) -> Any:
        if name in env:
            return env[name]
        if name in CONSTANTS:
            return CONSTANTS[name]
        raise EvalError(f"unbound identifier {name}")

    def eval(self, e: Expr, env: dict, ctx: _Prob | None) -> Any:
        """Evaluate ``e``; ``ctx`` is None in deterministic code."""
        while True:
            if isinstance(e, Let):
                v = self.eval(e.bound, env, ctx)
                env = dict(env)
                self.bind(e.pat, v, env, ctx)
                e = e.body
                continue
            if isinstance(e, If):
                c = self.force(self.eval(e.cond, env, ctx), ctx)
                if not isinstance(c, bool):
                    raise RuntimeTypeError(f"if: expected a bool condition, got {c!r}")
                e = e.then if c else e.orelse
                continue
            return self._eval(e, env, ctx)

    def force(self, v: Any, ctx: _Prob | None) -> Any:
        """Concrete value of ``v``; valuing random variables records an eval event."""
        if ctx is not None and frv(v):
            return ctx.graph.hl_value(v)
        return v

    def _eval(self, e: Expr, env: dict, ctx: _Prob | None) -> Any:
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Var):
            return self.lookup(e.name, env)
        if isinstance(e, Pair):
            return (self.eval(e.left, env, ctx), self.eval(e.right, env, ctx))
        if isinstance(e, Lambda):
            return Closure(e.pat, e.body, env, ctx is not None)
        if isinstance(e, OpApp):
            return self.apply_op(e.op, self.eval(e.arg, env, ctx), ctx)
        if isinstance(e, FunApp):
            f = self.lookup(e.fn, env)
            return self.call(f, self.eval(e.arg, env, ctx), ctx)
        if isinstance(e, Init):
            fn = self.lookup(e.stream, env)
            return DInstance(fn, self.eval(fn.init, fn.env, None))
        if isinstance(e, Infer):
            return self.start_infer(self.lookup(e.stream, env))
        if isinstance(e, Unfold):
            inst = self.lookup(e.inst, env)
            arg = self.eval(e.arg, env, ctx)
            return self.unfold(inst, arg, ctx)
        if isinstance(e, Sample):
            if ctx is None:
                raise EvalError("sample outside a probabilistic stream")
            return ctx.graph.hl_assume(self.eval(e.dist, env, ctx))
        if isinstance(e, Observe):
            if ctx is None:
                raise EvalError("observe outside a probabilistic stream")
            d = self.eval(e.dist, env, ctx)
            x = self.eval(e.value, env, ctx)
            rv = ctx.graph.hl_assume(d)
            x = self.force(x, ctx)
            ctx.weight *= ctx.graph.hl_observe(rv.id, x)
            return ()
        raise EvalError(f"cannot evaluate {e!r}")

    # -- application -----------------------------------------------------------

    def call(self, f: Any, arg: Any, ctx: _Prob | None) -> Any:
        if not isinstance(f, Closure):
            raise RuntimeTypeError(f"cannot apply {f!r}")
        if f.prob and ctx is None:
            raise EvalError("probabilistic function called outside a probabilistic stream")
        env = dict(f.env)
        self.bind(f.param, arg, env, ctx)
        return self.eval(f.body, env, ctx)

    def apply_op(self, op: str, arg: Any, ctx: _Prob | None) -> Any:
        symbolic = ctx is not None and bool(frv(arg))
        if op in DISTRIBUTIONS:
            if symbolic and op != "shuffle":
                return SymDist(op, arg)
            if symbolic:
                arg = ctx.graph.hl_value(arg)
            return make_distribution(op, arg)
        if op == "eval":
            return self.force(arg, ctx)
        if op in SYMBOLIC_OK:
            return SymApp(op, arg) if symbolic else FIRST_ORDER[op](arg)
        if op in ("List.length", "List.append"):
            return FIRST_ORDER[op](arg)
        if op == "Array.get":
            a, i = _pair(arg, op)
            if not isinstance(a, ArrayV):
                raise RuntimeTypeError(f"Array.get: expected an array, got {a!r}")
            return a.items[index_of(self.force(i, ctx), len(a.items), op)]
        if op == "List.init" or op == "Array.init":
            n, f = _pair(arg, op)
            n = self.force(n, ctx)
            if isinstance(n, bool) or not isinstance(n, int):
                raise RuntimeTypeError(f"{op}: expected an int count, got {n!r}")
            items = tuple(self.call(f, i, ctx) for i in range(max(n, 0)))
            return ListV(items) if op == "List.init" else ArrayV(items)
        if op == "List.map":
            f, xs = _pair(arg, op)
            return ListV(tuple(self.call(f, x, ctx) for x in _list(xs, op)))
        if op == "List.filter":
            f, xs = _pair(arg, op)
            keep = []
            for x in _list(xs, op):
                b = self.force(self.call(f, x, ctx), ctx)
                if not isinstance(b, bool):
                    raise RuntimeTypeError(f"List.filter: predicate returned {b!r}")
                if b:
                    keep.append(x)
            return ListV(tuple(keep))
        if op == "List.iter2":
            f, (xs, ys) = _pair(arg, op)
            xs, ys = _list(xs, op), _list(ys, op)
            if len(xs) != len(ys):
                raise RuntimeTypeError("List.iter2: lists have different lengths")
            for x, y in zip(xs, ys):
                self.call(f, (x, y), ctx)
            return ()
        # mean and any other strict builtin
        return apply_first_order(op, self.force(arg, ctx))

    # -- streams ---------------------------------------------------------------

    def unfold(self, inst: Any, arg: Any, ctx: _Prob | None) -> tuple:
        if isinstance(inst, DInstance):
            fn = inst.fn
            env = dict(fn.env)
            self.bind(fn.state_pat, inst.state, env, ctx)
            self.bind(fn.arg_pat, arg, env, ctx)
            out = self.eval(fn.body, env, ctx)
            o, s = _pair(out, f"step of {fn.name}")
            return o, DInstance(fn, s)
        if isinstance(inst, PInstance):
            if ctx is not None:
                raise EvalError("nested inference")
            return self.infer_step(inst, arg)
        raise RuntimeTypeError(f"unfold: {inst!r} is not a stream instance")

    def start_infer(self, fn: StreamFn) -> PInstance:
        if not isinstance(fn, StreamFn):
            raise RuntimeTypeError(f"infer: {fn!r} is not a stream function")
        site = self._sites
        self._sites += 1
        cfg = self.config
        parts = []
        for j in range(cfg.particles):
            g = DSGraph(D.Rng.derive(cfg.seed, site, 0, j, _PARTICLE), record_trace=cfg.record_trace)
            ctx = _Prob(g)
            s = self.eval(fn.init, fn.env, ctx) if fn.prob else self.eval(fn.init, fn.env, None)
            parts.append(Particle(s, g, ctx.weight))
        return PInstance(fn, parts, step=0, site=site)

    def infer_step(self, inst: PInstance, arg: Any) -> tuple[D.MDistr, PInstance]:
        if frv(arg):
            raise EvalError("infer input must be deterministic")
        cfg, fn, t = self.config, inst.fn, inst.step + 1
        n = len(inst.particles)
        weights = [p.weight for p in inst.particles]
        total = sum(weights)
        if not total > 0 or math.isnan(total):
            raise DegenerateWeights(f"infer {fn.name}: all particle weights are zero")
        rs = D.Rng.derive(cfg.seed, inst.site, t, 0, _RESAMPLE)
        chosen = rs.multinomial_indices([w / total for w in weights], n)
        new, comps, ws = [], [], []
        for j, i in enumerate(chosen):
            src = inst.particles[i]
            # only the part reachable from the state survives resampling
            g = src.graph.clone(keep=frv(src.state))
            g.rng = D.Rng.derive(cfg.seed, inst.site, t, j, _PARTICLE)
            env = dict(fn.env)
            ctx = _Prob(g) if fn.prob else None
            self.bind(fn.state_pat, src.state, env, ctx)
            self.bind(fn.arg_pat, arg, env, ctx)
            o, s = _pair(self.eval(fn.body, env, ctx), f"step of {fn.name}")
            w = ctx.weight if ctx is not None else 1.0
            new.append(Particle(s, g, w))
            ws.append(w)
            comps.append((o, g, j))
        wt = sum(ws)
        if not wt > 0 or math.isnan(wt):
            raise DegenerateWeights(f"infer {fn.name}: all particle weights are zero at step {t}")
        norm = [w / wt for w in ws]
        out = _mixture(norm, [
            distribution(o, g, D.Rng.derive(cfg.seed, inst.site, t, j, _MC), cfg.mc_draws)
            for o, g, j in comps
        ])
        for p, w in zip(new, norm):
            p.weight = w
        nxt = PInstance(fn, new, step=t, site=inst.site)
        if self.observer is not None:
            self.observer(StepInfo(inst.site, t, new, out))
        return out, nxt


def _pair(v: Any, what: str) -> tuple:
    if not (isinstance(v, tuple) and len(v) == 2):
        raise RuntimeTypeError(f"{what}: expected a pair, got {v!r}")
    return v


def _list(v: Any, what: str) -> tuple:
    if not isinstance(v, ListV):
        raise RuntimeTypeError(f"{what}: expected a list, got {v!r}")
    return v.items


def _mixture(weights: list[float], comps: list[D.MDistr]) -> D.MDistr:
    """Merge identical components; a single survivor is returned as is."""
    merged: list[list] = []
    for w, c in zip(weights, comps):
        for m in merged:
            if m[1] == c:
                m[0] += w
                break
        else:
            merged.append([w, c])
    if len(merged) == 1:
        return merged[0][1]
    return D.Mixture(tuple(m[0] for m in merged), tuple(m[1] for m in merged))


# ---------------------------------------------------------------------------
# Distribution of a semi-symbolic value


def components(g: DSGraph) -> dict[int, int]:
    """Node id to a representative of its connected component."""
    parents = g.marg_parents()
    rep: dict[int, int] = {}
    for n in g.nodes:
        path = []
        m = n
        while m not in rep:
            path.append(m)
            st = g.nodes[m]
            if isinstance(st, Initialized):
                m = st.parent
            elif m in parents:
                m = parents[m][0]
            else:
                rep[m] = m
                break
        r = rep[m]
        for x in path:
            rep[x] = r
    return rep


def distribution(v: Any, g: DSGraph, rng: D.Rng | None = None, draws: int = 1000,
                 rep: dict[int, int] | None = None) -> D.MDistr:
    """Marginal distribution of ``v`` under ``g``; the graph is left untouched.

    Tuples, lists and arrays whose parts live in different connected
    components become a Product; anything without a closed form falls back
    to Monte Carlo.
    """
    if not frv(v):
        return D.Delta(v)
    exact = _exact(v, g)
    if exact is not None:
        return exact
    if isinstance(v, (tuple, ListV, ArrayV)):
        items = v if isinstance(v, tuple) else v.items
        rep = components(g) if rep is None else rep
        groups = [{rep[n] for n in frv(x)} for x in items]
        if sum(map(len, groups)) == len(set().union(*groups)):
            return D.Product(tuple(distribution(x, g, rng, draws, rep) for x in items))
    return _monte_carlo(v, g, rng or D.Rng(0), draws, rep)


def _exact(v: Any, g: DSGraph) -> D.MDistr | None:
    if isinstance(v, RV):
        return g.posterior(v.id)
    aff = g.affine(v) if isinstance(v, SymApp) else None
    if aff is not None and aff[0] is not None:
        x, s, t = aff
        post = g.posterior(x)
        if isinstance(post, D.Gaussian):
            if s == 0:
                return D.Delta(t)
            return D.Gaussian(s * post.mean + t, s * s * post.var)
        if isinstance(post, D.Delta):
            return D.Delta(s * post.value + t)
    return None


def _monte_carlo(v: Any, g: DSGraph, rng: D.Rng, draws: int,
                 rep: dict[int, int] | None = None) -> D.MDistr:
    rep = components(g) if rep is None else rep
    roots = {rep[n] for n in frv(v)}
    sub = {n: st for n, st in g.nodes.items() if rep[n] in roots}
    samples = []
    for _ in range(draws):
        h = DSGraph(rng)
        h.nodes = dict(sub)
        h.next_id = g.next_id
        samples.append(h.concretize(v))
    return D.Categorical.from_samples(samples)


# ---------------------------------------------------------------------------
# Whole programs


def run_program(program: Program, inputs: list, config: InferConfig | None = None,
                typed: TypedProgram | None = None,
                observer: Callable[[StepInfo], None] | None = None) -> list:
    """Unfold the main stream over ``inputs`` and collect its outputs.

    A probabilistic main stream is run under ``infer``.
    """
    it = Interpreter(program, config, typed, observer)
    fn = it.env[program.main]
    inst = it.start_infer(fn) if fn.prob else DInstance(fn, it.eval(fn.init, fn.env, None))
    outs = []
    for x in inputs:
        o, inst = it.unfold(inst, x, None)
        outs.append(o)
    return outs


def output_json(v: Any) -> Any:
    """Distributions become {mean, variance}; other values map structurally."""
    from .values import to_json

    if isinstance(v, D.MDistr):
        try:
            m, var = v.stats()
        except D.UndefinedMoment:
            return {"distribution": repr(v)}
        return {"mean": _plain(m), "variance": _plain(var)}
    if isinstance(v, tuple) and v != ():
        return [output_json(c) for c in v]
    return to_json(v)


def _plain(x: Any) -> Any:
    if isinstance(x, tuple):
        return [_plain(c) for c in x]
    if isinstance(x, bool):
        return float(x)
    return x


def input_from_json(x: Any, ty: Any) -> Any:
    """Convert one JSON step input to a runtime value, guided by the core type."""
    from .core_types import TVar, resolve

    ty = resolve(ty)
    if isinstance(ty, TVar):
        return _untyped(x)
    name = ty.name
    if name == "unit":
        if x not in (None, [], {}):
            raise ValueError(f"expected null for unit input, got {x!r}")
        return ()
    if name == "real":
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ValueError(f"expected a number, got {x!r}")
        return float(x)
    if name == "int":
        if isinstance(x, bool) or not isinstance(x, int):
            raise ValueError(f"expected an integer, got {x!r}")
        return x
    if name == "bool":
        if not isinstance(x, bool):
            raise ValueError(f"expected true/false, got {x!r}")
        return x
    if name == "prod":
        if not isinstance(x, list) or len(x) < 2:
            raise ValueError(f"expected an array for a tuple input, got {x!r}")
        a, b = ty.args
        rest = x[1] if len(x) == 2 else x[1:]
        return (input_from_json(x[0], a), input_from_json(rest, b))
    if name in ("list", "array"):
        if not isinstance(x, list):
            raise ValueError(f"expected an array, got {x!r}")
        items = tuple(input_from_json(c, ty.args[0]) for c in x)
        return ListV(items) if name == "list" else ArrayV(items)
    raise ValueError(f"inputs of type {name} are not supported")


def _untyped(x: Any) -> Any:
    if x is None:
        return ()
    if isinstance(x, list):
        return ListV(tuple(_untyped(c) for c in x))
    return x


def default_input(ty: Any) -> Any:
    """Zero-like input used when no input file is given."""
    from .core_types import TVar, resolve

    ty = resolve(ty)
    if isinstance(ty, TVar):
        return ()
    return {
        "unit": lambda: (),
        "real": lambda: 0.0,
        "int": lambda: 0,
        "bool": lambda: False,
        "prod": lambda: (default_input(ty.args[0]), default_input(ty.args[1])),
        "list": lambda: ListV(()),
        "array": lambda: ArrayV(()),
    }.get(ty.name, lambda: ())()


__all__ = [
    "DegenerateWeights",
    "EvalError",
    "InferConfig",
    "Interpreter",
    "Particle",
    "StepInfo",
    "default_input",
    "distribution",
    "input_from_json",
    "output_json",
    "run_program",
]
