"""Type-and-effect analysis that certifies bounded-memory inference.

Every expression is given a reference-set type (which random variables it
may and must refer to) and an effect on an abstract delayed-sampling graph.
Two graph domains are provided: ``MCGraph`` for the m-consumed property and
``UPGraph`` for the unseparated-paths property. An ``infer`` site is
accepted when the stream body satisfies both success conditions over
repeated abstract iterations.

Abstract random variables are named by (iteration, occurrence path), where
the path lists the syntactic positions of the sample/observe node and of
every call or unfold that led to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from . import builtins as B
from .ast_parser import (
    CONSTANTS,
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
from .core_types import TypedProgram, typecheck_core


class AnalysisError(Exception):
    def __init__(self, kind: str, msg: str):
        super().__init__(f"{kind}: {msg}")
        self.kind = kind


# ---------------------------------------------------------------------------
# Abstract random variables and types


@dataclass(frozen=True, order=True)
class AbsRV:
    iteration: int
    path: tuple

    def __str__(self):
        return ".".join(map(str, self.path)) + f"@{self.iteration}"


class _NoConst:
    def __repr__(self):
        return "NOCONST"


NOCONST = _NoConst()


@dataclass(frozen=True)
class DistInfo:
    """Family and per-parameter reference sets of a distribution value."""

    family: str
    params: tuple | None  # one RefSet per parameter, None when unknown


@dataclass(frozen=True)
class RefSet:
    lb: frozenset = frozenset()
    ub: frozenset = frozenset()
    const: Any = field(default=NOCONST, compare=False)
    dist: DistInfo | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.lb <= self.ub:
            raise ValueError("lower bound must be contained in the upper bound")

    @staticmethod
    def of(lb: Iterable = (), ub: Iterable | None = None) -> "RefSet":
        lb = frozenset(lb)
        return RefSet(lb, lb if ub is None else frozenset(ub) | lb)

    def plain(self) -> "RefSet":
        return RefSet(self.lb, self.ub)


EMPTY = RefSet()


@dataclass(frozen=True)
class UnitT:
    pass


UNIT = UnitT()


@dataclass(frozen=True)
class Prod:
    left: Any
    right: Any


@dataclass(frozen=True)
class FunT:
    """A function value; calls are analysed by inlining the body."""

    pat: Pattern
    body: Expr
    env: dict = field(compare=False, repr=False)
    name: str = "<lambda>"
    node: int = 0


@dataclass(frozen=True)
class StepFn:
    state_pat: Pattern
    in_pat: Pattern
    env: dict = field(compare=False, repr=False)
    body: Expr = field(compare=False, repr=False)
    name: str = ""


@dataclass(frozen=True)
class StreamFnT:
    """A declared stream function: initial state type and step function."""

    init: Any
    step: StepFn


@dataclass(frozen=True)
class StreamT:
    state: Any
    step: StepFn


@dataclass(frozen=True)
class BoundedT:
    pass


BOUNDED = BoundedT()


def fold(t: Any) -> RefSet:
    """Collapse a type into the reference set of everything it contains."""
    if isinstance(t, RefSet):
        return t.plain()
    if isinstance(t, (UnitT, BoundedT)):
        return EMPTY
    if isinstance(t, Prod):
        a, b = fold(t.left), fold(t.right)
        return RefSet(a.lb | b.lb, a.ub | b.ub)
    if isinstance(t, StreamT):
        return fold(t.state)
    raise AnalysisError("fold", f"cannot fold a value of type {type(t).__name__}")


def size(t: Any) -> int:
    if isinstance(t, RefSet):
        return 1
    if isinstance(t, Prod):
        return size(t.left) + size(t.right)
    if isinstance(t, StreamT):
        return size(t.state)
    return 0


def join_refs(a: RefSet, b: RefSet) -> RefSet:
    const = a.const if _same_const(a.const, b.const) else NOCONST
    dist = None
    if a.dist and b.dist and a.dist.family == b.dist.family:
        pa, pb = a.dist.params, b.dist.params
        params = None
        if pa is not None and pb is not None and len(pa) == len(pb):
            params = tuple(join_refs(x, y) for x, y in zip(pa, pb))
        dist = DistInfo(a.dist.family, params)
    return RefSet(a.lb & b.lb, a.ub | b.ub, const, dist)


def _same_const(a, b) -> bool:
    if a is NOCONST or b is NOCONST:
        return False
    return type(a) is type(b) and a == b


def join_types(t1: Any, t2: Any) -> Any:
    if isinstance(t1, UnitT) and isinstance(t2, UnitT):
        return UNIT
    if isinstance(t1, RefSet) and isinstance(t2, RefSet):
        return join_refs(t1, t2)
    if isinstance(t1, Prod) and isinstance(t2, Prod):
        return Prod(join_types(t1.left, t2.left), join_types(t1.right, t2.right))
    if isinstance(t1, BoundedT) and isinstance(t2, BoundedT):
        return BOUNDED
    data = (RefSet, Prod, UnitT)
    if isinstance(t1, data) and isinstance(t2, data):
        return join_refs(fold(t1), fold(t2))
    raise AnalysisError("join-undefined",
                        f"cannot join {type(t1).__name__} with {type(t2).__name__} across branches")


# ---------------------------------------------------------------------------
# m-consumed abstract graph


@dataclass(frozen=True)
class MCGraph:
    """Introduced variables, directly consumed variables and assume links.

    ``links`` holds (parent, child) pairs from assumes whose lower bound
    names the parent. A variable counts as consumed when it is directly
    observed or evaluated, or when it links to a consumed variable.
    """

    in_: frozenset = frozenset()
    con: frozenset = frozenset()
    links: frozenset = frozenset()

    def consumed(self) -> frozenset:
        parents: dict = {}
        for a, b in self.links:
            parents.setdefault(b, []).append(a)
        seen = set(self.con)
        stack = list(self.con)
        while stack:
            for a in parents.get(stack.pop(), ()):
                if a not in seen:
                    seen.add(a)
                    stack.append(a)
        return frozenset(seen)


MC_BOTTOM = MCGraph()


def mc_assume(x, r: RefSet, g: MCGraph) -> MCGraph:
    return MCGraph(g.in_ | {x}, g.con, g.links | {(p, x) for p in r.lb})


def mc_observe(x, r: RefSet, g: MCGraph) -> MCGraph:
    return MCGraph(g.in_, g.con | r.lb | {x}, g.links)


def mc_value(r: RefSet, g: MCGraph) -> MCGraph:
    return MCGraph(g.in_, g.con | r.lb, g.links)


def mc_join(g1: MCGraph, g2: MCGraph) -> MCGraph:
    return MCGraph(g1.in_ | g2.in_, g1.con & g2.con, g1.links & g2.links)


# ---------------------------------------------------------------------------
# Unseparated-paths abstract graph


@dataclass(frozen=True)
class UPGraph:
    p: dict = field(default_factory=dict)  # (source, dest) -> longest path, in edges
    sep: frozenset = frozenset()


UP_BOTTOM = UPGraph()


def up_assume(x, r: RefSet, g: UPGraph) -> UPGraph:
    parents = r.ub - g.sep
    p = dict(g.p)
    p[(x, x)] = 0
    for (a, b), n in g.p.items():
        if b in parents and p.get((a, x), -1) < n + 1:
            p[(a, x)] = n + 1
    return UPGraph(p, g.sep)


def up_observe(x, r: RefSet, g: UPGraph) -> UPGraph:
    return UPGraph(g.p, g.sep | r.lb | {x})


def up_value(r: RefSet, g: UPGraph) -> UPGraph:
    return UPGraph(g.p, g.sep | r.lb)


def up_join(g1: UPGraph, g2: UPGraph) -> UPGraph:
    p = dict(g1.p)
    for k, n in g2.p.items():
        if p.get(k, 0) < n:
            p[k] = n
    return UPGraph(p, g1.sep & g2.sep)


def path(t: Any, g: UPGraph) -> int:
    """Longest path from a variable the type may reference, ignoring separators."""
    ub = fold(t).ub
    return max((n for (a, b), n in g.p.items()
                if a in ub and a not in g.sep and b not in g.sep), default=0)


@dataclass(frozen=True)
class Domain:
    name: str
    bottom: Any
    assume: Callable
    observe: Callable
    value: Callable
    join: Callable


MC = Domain("mc", MC_BOTTOM, mc_assume, mc_observe, mc_value, mc_join)
UP = Domain("up", UP_BOTTOM, up_assume, up_observe, up_value, up_join)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class SiteReport:
    site: str
    mc: bool
    up: bool
    mc_unconsumed: list = field(default_factory=list)
    up_longest_path: int = 0
    iterations_used: int = 0
    notes: list = field(default_factory=list)

    @property
    def bounded(self) -> bool:
        return self.mc and self.up

    def to_json(self) -> dict:
        return {
            "site": self.site,
            "mc": self.mc,
            "up": self.up,
            "bounded": self.bounded,
            "mc_unconsumed": list(self.mc_unconsumed),
            "up_longest_path": self.up_longest_path,
            "iterations_used": self.iterations_used,
        }


@dataclass
class AnalysisReport:
    sites: list

    @property
    def accepted(self) -> bool:
        return all(s.bounded for s in self.sites)

    def to_json(self) -> dict:
        return {"accepted": self.accepted, "sites": [s.to_json() for s in self.sites]}


# ---------------------------------------------------------------------------
# Typing rules


_CONJ_PARENT = {"gaussian": "gaussian", "bernoulli": "beta"}
_ARITY = {"gaussian": 2, "beta": 2, "uniform": 2, "bernoulli": 1, "poisson": 1, "shuffle": 1}
_CLOSURE_OPS = {"List.init", "Array.init", "List.map", "List.filter", "List.iter2"}


def _const_of(t: Any) -> Any:
    if isinstance(t, RefSet):
        return t.const
    if isinstance(t, UnitT):
        return ()
    if isinstance(t, Prod):
        a, b = _const_of(t.left), _const_of(t.right)
        return NOCONST if a is NOCONST or b is NOCONST else (a, b)
    return NOCONST


def _signature(t: Any) -> Any:
    if isinstance(t, RefSet):
        return ("r", type(t.const).__name__, t.const) if t.const is not NOCONST else "r"
    if isinstance(t, Prod):
        return ("p", _signature(t.left), _signature(t.right))
    if isinstance(t, StreamT):
        return ("s", t.step.name, _signature(t.state))
    return type(t).__name__


def _pattern_type(p: Pattern) -> Any:
    if isinstance(p, PPair):
        return Prod(_pattern_type(p.left), _pattern_type(p.right))
    return EMPTY


class Analyzer:
    """Walks a program; ``domain`` selects the abstract graph in use."""

    def __init__(self, program: Program, typed: TypedProgram | None = None,
                 up_budget: int = 10, mc_limit: int = 32):
        self.program = program
        self.typed = typed or typecheck_core(program)
        self.up_budget = up_budget
        self.mc_limit = mc_limit
        self.domain = MC
        self.iteration = 0
        self.prefix: tuple = ()
        self.families: dict = {}
        self.sites: dict[int, SiteReport] = {}
        self._site_names: dict[str, int] = {}
        self._calls: list = []
        self.occ = _occurrences(program)

    # -- graph plumbing --------------------------------------------------------

    def fresh(self, node: Expr, family: str | None) -> AbsRV:
        x = AbsRV(self.iteration, self.prefix + (self.occ[node.uid],))
        self.families[x] = family
        return x

    def _compatible(self, x, child: str) -> bool:
        fam = self.families.get(x)
        return fam is None or fam == _CONJ_PARENT[child]

    def assume(self, node: Expr, dist_t: Any, g: Any) -> tuple[AbsRV, Any]:
        """Introduce a variable for ``dist_t``, mirroring the runtime's conjugacy test.

        A parent is linked only when the runtime could keep the variable
        symbolic; otherwise every referenced variable is valued first.
        """
        r = fold(dist_t)
        info = dist_t.dist if isinstance(dist_t, RefSet) else None
        fam = info.family if info else None
        x = self.fresh(node, fam)
        parents = self._link_candidates(info, r)
        if parents is None:
            return x, self.domain.assume(x, EMPTY, self.domain.value(r, g))
        return x, self.domain.assume(x, RefSet(r.lb & parents, parents), g)

    def _link_candidates(self, info: DistInfo | None, r: RefSet) -> frozenset | None:
        """Variables the new one may be conditioned on; None when it is never linked."""
        if not r.ub:
            return frozenset()
        if info is None:
            return r.ub
        fam = info.family
        if fam not in _CONJ_PARENT:
            return None
        if info.params is None:
            cands = frozenset(x for x in r.ub if self._compatible(x, fam))
            return cands or None
        if fam == "gaussian":
            mean, var = info.params
            if var.lb:
                return None
            scope = mean
        else:
            (scope,) = info.params
        if len(r.lb) > 1 or any(not self._compatible(x, fam) for x in r.lb):
            return None
        cands = frozenset(x for x in scope.ub if self._compatible(x, fam))
        return cands or None

    def value(self, t: Any, g: Any) -> Any:
        return self.domain.value(fold(t), g)

    # -- environments ----------------------------------------------------------

    def bind(self, p: Pattern, t: Any, env: dict) -> None:
        if isinstance(p, PVar):
            env[p.name] = t
        elif isinstance(p, PPair):
            if isinstance(t, Prod):
                self.bind(p.left, t.left, env)
                self.bind(p.right, t.right, env)
            elif isinstance(t, RefSet):
                # a tuple read out of a collection: both halves may alias it
                self.bind(p.left, t.plain(), env)
                self.bind(p.right, t.plain(), env)
            else:
                raise AnalysisError("pattern", f"cannot destructure {type(t).__name__}")

    def lookup(self, env: dict, name: str) -> Any:
        if name in env:
            return env[name]
        if name in CONSTANTS:
            return EMPTY
        raise AnalysisError("scope", f"unbound name {name}")

    # -- expressions -----------------------------------------------------------

    def expr(self, e: Expr, env: dict, g: Any) -> tuple[Any, Any]:
        if isinstance(e, Let):
            t, g = self.expr(e.bound, env, g)
            env = dict(env)
            self.bind(e.pat, t, env)
            return self.expr(e.body, env, g)
        if isinstance(e, If):
            c, g = self.expr(e.cond, env, g)
            g = self.value(c, g)
            if isinstance(c, RefSet) and isinstance(c.const, bool):
                return self.expr(e.then if c.const else e.orelse, env, g)
            t1, g1 = self.expr(e.then, env, g)
            t2, g2 = self.expr(e.orelse, env, g)
            return join_types(t1, t2), self.domain.join(g1, g2)
        if isinstance(e, Const):
            return (UNIT if e.ty == "unit" else RefSet(const=e.value)), g
        if isinstance(e, Var):
            return self.lookup(env, e.name), g
        if isinstance(e, Pair):
            a, g = self.expr(e.left, env, g)
            b, g = self.expr(e.right, env, g)
            return Prod(a, b), g
        if isinstance(e, Lambda):
            return FunT(e.pat, e.body, env, "<lambda>", self.occ[e.uid]), g
        if isinstance(e, Sample):
            d, g = self.expr(e.dist, env, g)
            x, g = self.assume(e, d, g)
            return RefSet.of({x}), g
        if isinstance(e, Observe):
            d, g = self.expr(e.dist, env, g)
            v, g = self.expr(e.value, env, g)
            x, g = self.assume(e, d, g)
            r2 = fold(v)
            return UNIT, self.domain.observe(x, r2, self.domain.value(r2, g))
        if isinstance(e, OpApp):
            return self.op(e, env, g)
        if isinstance(e, FunApp):
            f = self.lookup(env, e.fn)
            a, g = self.expr(e.arg, env, g)
            return self.call(f, a, g, self.occ[e.uid])
        if isinstance(e, Init):
            m = self.lookup(env, e.stream)
            if not isinstance(m, StreamFnT):
                raise AnalysisError("init", f"{e.stream} is not a stream function")
            return StreamT(m.init, m.step), g
        if isinstance(e, Infer):
            m = self.lookup(env, e.stream)
            if not isinstance(m, StreamFnT):
                raise AnalysisError("infer", f"{e.stream} is not a stream function")
            self.check_site(e, m)
            return BOUNDED, g
        if isinstance(e, Unfold):
            inst = self.lookup(env, e.inst)
            a, g = self.expr(e.arg, env, g)
            if isinstance(inst, BoundedT):
                if fold(a).ub:
                    raise AnalysisError("unfold", "input of an inferred stream must be deterministic")
                return Prod(EMPTY, BOUNDED), g
            if not isinstance(inst, StreamT):
                raise AnalysisError("unfold", f"{e.inst} is not a stream instance")
            out, state, g = self.step(inst.step, inst.state, a, g, self.occ[e.uid])
            return Prod(out, StreamT(state, inst.step)), g
        raise AnalysisError("syntax", f"unexpected expression {type(e).__name__}")

    def step(self, s: StepFn, state: Any, arg: Any, g: Any, site: int | None = None):
        env = dict(s.env)
        self.bind(s.state_pat, state, env)
        self.bind(s.in_pat, arg, env)
        saved = self.prefix
        if site is not None:
            self.prefix = saved + (site,)
        try:
            t, g = self.expr(s.body, env, g)
        finally:
            self.prefix = saved
        if isinstance(t, Prod):
            return t.left, t.right, g
        if isinstance(t, RefSet):
            return t.plain(), t.plain(), g
        raise AnalysisError("step", f"step of {s.name} must return an (output, state) pair")

    def call(self, f: Any, arg: Any, g: Any, site: int) -> tuple[Any, Any]:
        if not isinstance(f, FunT):
            raise AnalysisError("call", "applying a value that is not a function")
        if f.node in self._calls:
            raise AnalysisError("recursion", f"recursive call of {f.name}")
        env = dict(f.env)
        self.bind(f.pat, arg, env)
        saved = self.prefix
        self.prefix = saved + (site,)
        self._calls.append(f.node)
        try:
            return self.expr(f.body, env, g)
        finally:
            self._calls.pop()
            self.prefix = saved

    def op(self, e: OpApp, env: dict, g: Any) -> tuple[Any, Any]:
        name = e.op
        if name in _CLOSURE_OPS:
            return self.closure_op(e, env, g)
        t, g = self.expr(e.arg, env, g)
        if name in B.DISTRIBUTIONS:
            params = None
            if _ARITY[name] == 1:
                params = (fold(t),)
            elif isinstance(t, Prod):
                params = (fold(t.left), fold(t.right))
            r = fold(t)
            return RefSet(r.lb, r.ub, dist=DistInfo(name, params)), g
        if name == "eval":
            return EMPTY, self.value(t, g)
        if name in B.SYMBOLIC_OK:
            r = fold(t)
            const = _const_of(t)
            if const is not NOCONST and not r.ub:
                try:
                    return RefSet(const=B.FIRST_ORDER[name](const)), g
                except Exception:
                    pass
            return r, g
        if name in ("List.length", "List.append"):
            return fold(t), g
        if name == "Array.get":
            if isinstance(t, Prod):
                g = self.value(t.right, g)
                return RefSet(frozenset(), fold(t.left).ub), g
            return RefSet(frozenset(), fold(t).ub), g
        # any other builtin needs a concrete argument
        return EMPTY, self.value(t, g)

    def closure_op(self, e: OpApp, env: dict, g: Any) -> tuple[Any, Any]:
        """Collection builtins: the function body runs zero or more times."""
        if not isinstance(e.arg, Pair):
            raise AnalysisError("op", f"{e.op} expects a literal argument pair")
        site = self.occ[e.uid]
        if e.op in ("List.init", "Array.init"):
            n, g = self.expr(e.arg.left, env, g)
            f, g = self.expr(e.arg.right, env, g)
            g = self.value(n, g)
            t, g1 = self.call(f, EMPTY, g, site)
            return RefSet(frozenset(), fold(t).ub), self.domain.join(g, g1)
        f, g = self.expr(e.arg.left, env, g)
        rest, g = self.expr(e.arg.right, env, g)
        if e.op == "List.iter2":
            if isinstance(rest, Prod):
                elem = Prod(RefSet(frozenset(), fold(rest.left).ub),
                            RefSet(frozenset(), fold(rest.right).ub))
            else:
                elem = RefSet(frozenset(), fold(rest).ub)
            _, g1 = self.call(f, elem, g, site)
            return UNIT, self.domain.join(g, g1)
        elem = RefSet(frozenset(), fold(rest).ub)
        t, g1 = self.call(f, elem, g, site)
        if e.op == "List.filter":
            g1 = self.value(t, g1)
            return elem, self.domain.join(g, g1)
        return RefSet(frozenset(), fold(t).ub), self.domain.join(g, g1)

    # -- iteration and success conditions ---------------------------------------

    def iterations(self, m: StreamFnT, domain: Domain) -> "_Iterations":
        return _Iterations(self, m, domain)

    def check_site(self, e: Infer, m: StreamFnT) -> SiteReport:
        if e.uid in self.sites:
            return self.sites[e.uid]
        k = self._site_names.get(e.stream, 0)
        self._site_names[e.stream] = k + 1
        name = e.stream if k == 0 else f"{e.stream}#{k}"
        rep = self.check_stream(name, m)
        self.sites[e.uid] = rep
        return rep

    def check_stream(self, name: str, m: StreamFnT) -> SiteReport:
        saved = (self.domain, self.iteration, self.prefix)
        try:
            mc_ok, unconsumed, notes = self.check_mc(m)
            up_ok, longest, used = self.check_up(m)
        finally:
            self.domain, self.iteration, self.prefix = saved
        return SiteReport(name, mc_ok, up_ok, unconsumed, longest, used, notes)

    def check_mc(self, m: StreamFnT) -> tuple[bool, list, list]:
        """Every variable kept in the state must eventually be consumed.

        The check starts a window at every iteration until the constants
        in the incoming state repeat, so variables first introduced after
        iteration 0 are covered too.
        """
        it = self.iterations(m, MC)
        seen: dict = {}
        windows = []
        k = 0
        while True:
            sig = _signature(it.state_in(k))
            windows.append(k)
            if sig in seen or k + 1 >= self.mc_limit:
                break
            seen[sig] = k
            k += 1
        notes = [] if windows == [0] else [f"windows at iterations {windows}"]
        for k in windows:
            g_k = it.graph(k)
            before = it.graph(k - 1).in_ if k > 0 else frozenset()
            target = (g_k.in_ - before) & fold(it.state(k)).ub
            prev = None
            n = k
            while True:
                done = it.graph(n).consumed() & target
                if done == target:
                    break
                if (prev is not None and done == prev) or n + 1 >= self.mc_limit:
                    return False, sorted(str(x) for x in target - done), notes
                prev = done
                n += 1
        return True, [], notes

    def check_up(self, m: StreamFnT) -> tuple[bool, int, int]:
        """Longest unseparated path from the state must stop growing."""
        it = self.iterations(m, UP)
        last = 0
        for n in range(self.up_budget):
            t, g = it.state(n), it.graph(n)
            pn = path(t, g)
            w = n + pn * size(t) + 1
            pw = path(it.state(w), it.graph(w))
            last = max(pn, pw)
            if pn == pw:
                return True, pn, n + 1
        return False, last, self.up_budget

    # -- programs ----------------------------------------------------------------

    def declarations(self) -> dict:
        """Context built from the top-level declarations."""
        env: dict = {}
        self.domain = MC
        for i, d in enumerate(self.program.decls):
            if isinstance(d, ValDecl):
                t, _ = self.expr(d.expr, env, MC_BOTTOM)
                self.bind(d.pat, t, env)
            elif isinstance(d, FunDecl):
                env[d.name] = FunT(d.pat, d.body, env, d.name, -1 - i)
            elif isinstance(d, StreamDecl):
                t, _ = self.expr(d.init, env, MC_BOTTOM)
                if fold(t).ub:
                    raise AnalysisError("stream", f"initial state of {d.name} must be deterministic")
                env[d.name] = StreamFnT(t, StepFn(d.state_pat, d.arg_pat, dict(env), d.body, d.name))
                env = dict(env)
        return env

    def analyze(self) -> AnalysisReport:
        env = self.declarations()
        main = env.get(self.program.main)
        if isinstance(main, StreamFnT):
            if self.typed.streams[self.program.main].kind == "p":
                self.sites[-1] = self.check_stream(self.program.main, main)
            else:
                self.step(main.step, main.init, _pattern_type(main.step.in_pat), MC_BOTTOM)
        return AnalysisReport(list(self.sites.values()))


class _Iterations:
    """Lazily computed abstract iterations of one stream function."""

    def __init__(self, an: Analyzer, m: StreamFnT, domain: Domain):
        self.an, self.m, self.domain = an, m, domain
        self.states: list = []
        self.graphs: list = []

    def _run_to(self, n: int) -> None:
        an = self.an
        while len(self.states) <= n:
            k = len(self.states)
            state_in = self.m.init if k == 0 else self.states[-1]
            g = self.domain.bottom if k == 0 else self.graphs[-1]
            saved = (an.domain, an.iteration, an.prefix)
            an.domain, an.iteration, an.prefix = self.domain, k, ()
            try:
                _, state, g = an.step(self.m.step, state_in, _pattern_type(self.m.step.in_pat), g)
            finally:
                an.domain, an.iteration, an.prefix = saved
            self.states.append(state)
            self.graphs.append(g)

    def state_in(self, n: int) -> Any:
        return self.m.init if n == 0 else self.state(n - 1)

    def state(self, n: int) -> Any:
        self._run_to(n)
        return self.states[n]

    def graph(self, n: int) -> Any:
        self._run_to(n)
        return self.graphs[n]


def _occurrences(program: Program) -> dict[int, int]:
    """Stable position of every expression node, in source order."""
    out: dict[int, int] = {}

    def walk(e):
        if not isinstance(e, Expr):
            return
        out.setdefault(e.uid, len(out))
        for v in vars(e).values():
            if isinstance(v, Expr):
                walk(v)

    for d in program.decls:
        for part in vars(d).values():
            walk(part)
    return out


def analyze_program(program: Program, typed: TypedProgram | None = None,
                    up_budget: int = 10) -> AnalysisReport:
    return Analyzer(program, typed, up_budget).analyze()


def iterate(program: Program, stream: str, domain: Domain, n: int,
            typed: TypedProgram | None = None) -> tuple[Any, Any]:
    """State type and abstract graph after iterations 0..n of ``stream``."""
    an = Analyzer(program, typed)
    env = an.declarations()
    it = an.iterations(env[stream], domain)
    return it.state(n), it.graph(n)
