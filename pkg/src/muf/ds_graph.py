"""Delayed-sampling graph.

Node states are immutable records stored in a dict keyed by node id, so a
particle's graph can be copied with a shallow ``dict`` copy. The low-level
operations follow the reference OCaml implementation arm for arm, and the
high-level ``hl_*`` operations add the symbolic layer plus trace recording.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Iterable

from . import distributions as D
from .builtins import apply_first_order, make_distribution
from .values import RV, ArrayV, DInstance, ListV, SymApp, SymDist, frv


class InvariantError(AssertionError):
    """A graph operation was called in a state the algorithm never produces."""


@dataclass(frozen=True)
class Initialized:
    parent: int
    cdistr: D.CDistr


@dataclass(frozen=True)
class Marginalized:
    mdistr: D.MDistr
    child: int | None = None
    child_cdistr: D.CDistr | None = None


@dataclass(frozen=True)
class Realized:
    value: Any


NodeState = Initialized | Marginalized | Realized


@dataclass(frozen=True)
class Assume:
    """``var`` was introduced, conditioned on ``parent`` (None for a root)."""

    var: int
    parent: int | None = None


@dataclass(frozen=True)
class Obs:
    var: int


@dataclass(frozen=True)
class Eval:
    vars: frozenset


TraceEvent = Assume | Obs | Eval


class DSGraph:
    def __init__(self, rng: D.Rng | None = None, record_trace: bool = False):
        self.nodes: dict[int, NodeState] = {}
        self.next_id = 0
        self.rng = rng if rng is not None else D.Rng(0)
        # the trace is a chain of frozen segments shared between clones
        self._trace_prev: tuple | None = () if record_trace else None
        self._trace_own: list[TraceEvent] = []

    @property
    def recording(self) -> bool:
        return self._trace_prev is not None

    @property
    def trace(self) -> list[TraceEvent] | None:
        if self._trace_prev is None:
            return None
        segs = [self._trace_own]
        seg = self._trace_prev
        while seg:
            seg, events = seg
            segs.append(events)
        return [ev for events in reversed(segs) for ev in events]

    def clone(self, keep: Iterable[int] | None = None) -> "DSGraph":
        """Copy of the graph; with ``keep``, only the nodes reachable from it."""
        g = DSGraph.__new__(DSGraph)
        if keep is None:
            g.nodes = dict(self.nodes)
        else:
            g.nodes = {n: self.nodes[n] for n in sorted(self.reachable(keep))}
        g.next_id = self.next_id
        g.rng = self.rng
        if self._trace_prev is not None and self._trace_own:
            self._trace_prev = (self._trace_prev, tuple(self._trace_own))
            self._trace_own = []
        g._trace_prev = self._trace_prev
        g._trace_own = []
        return g

    def __len__(self):
        return len(self.nodes)

    def state(self, n: int) -> NodeState:
        try:
            return self.nodes[n]
        except KeyError:
            raise KeyError(f"unknown node {n}") from None

    def _record(self, ev: TraceEvent) -> None:
        if self._trace_prev is not None:
            self._trace_own.append(ev)

    def _fresh(self, st: NodeState) -> int:
        n = self.next_id
        self.next_id += 1
        self.nodes[n] = st
        return n

    # -- low-level interface -------------------------------------------------

    def assume_constant(self, d: D.MDistr) -> int:
        return self._fresh(Marginalized(d))

    def assume_conditional(self, parent: int, cd: D.CDistr) -> int:
        if isinstance(self.state(parent), Realized):
            raise InvariantError(f"assume_conditional: parent {parent} is realized")
        return self._fresh(Initialized(parent, cd))

    def realize(self, n: int, x: Any) -> None:
        self.nodes[n] = Realized(x)

    def marginalize(self, n: int) -> None:
        st = self.state(n)
        if not isinstance(st, Initialized):
            raise InvariantError(f"marginalize: node {n} is not initialized")
        p = self.state(st.parent)
        if isinstance(p, Realized):
            self.nodes[n] = Marginalized(D.cdistr_to_mdistr(st.cdistr, p.value))
        elif isinstance(p, Marginalized) and p.child is None:
            self.nodes[st.parent] = Marginalized(p.mdistr, n, st.cdistr)
            self.nodes[n] = Marginalized(D.make_marginal(p.mdistr, st.cdistr))
        else:
            raise InvariantError(f"marginalize: parent {st.parent} of {n} is in state {p}")

    def force_condition(self, n: int) -> None:
        st = self.state(n)
        if isinstance(st, Marginalized) and st.child is not None:
            c = self.state(st.child)
            if isinstance(c, Realized):
                self.nodes[n] = Marginalized(D.make_conditional(st.mdistr, st.child_cdistr, c.value))

    def sample(self, n: int) -> None:
        self.force_condition(n)
        st = self.state(n)
        if isinstance(st, Realized):
            return
        if isinstance(st, Marginalized) and st.child is None:
            self.realize(n, st.mdistr.draw(self.rng))
            return
        raise InvariantError(f"sample: node {n} is in state {st}")

    def prune(self, n: int) -> None:
        if isinstance(self.state(n), Initialized):
            raise InvariantError(f"prune: node {n} is initialized")
        # iterative form of: prune the child chain, then sample this node
        chain = [n]
        while True:
            st = self.nodes[chain[-1]]
            if not (isinstance(st, Marginalized) and st.child is not None):
                break
            chain.append(st.child)
        for m in reversed(chain):
            self.sample(m)

    def graft(self, n: int) -> None:
        # iterative form of: graft the parent, condition it, marginalize n
        chain = [n]
        while isinstance(self.state(chain[-1]), Initialized):
            chain.append(self.nodes[chain[-1]].parent)
        top = self.nodes[chain[-1]]
        if isinstance(top, Marginalized) and top.child is not None:
            self.prune(top.child)
        for m in reversed(chain[:-1]):
            self.force_condition(self.nodes[m].parent)
            self.marginalize(m)

    def value(self, n: int) -> Any:
        while True:
            st = self.state(n)
            if isinstance(st, Realized):
                return st.value
            self.graft(n)
            self.sample(n)

    def observe(self, n: int, x: Any) -> None:
        """Low-level observe: the node must already be grafted."""
        self.force_condition(n)
        st = self.state(n)
        if isinstance(st, Marginalized) and st.child is None:
            self.realize(n, x)
            return
        raise InvariantError(f"observe: node {n} is in state {st}")

    # -- symbolic values -----------------------------------------------------

    def concretize(self, v: Any) -> Any:
        """Value every random variable in ``v`` and evaluate symbolic ops."""
        if isinstance(v, RV):
            return self.value(v.id)
        if isinstance(v, tuple):
            return tuple(self.concretize(c) for c in v)
        if isinstance(v, SymApp):
            return apply_first_order(v.op, self.concretize(v.arg))
        if isinstance(v, SymDist):
            return make_distribution(v.family, self.concretize(v.arg))
        if isinstance(v, ListV):
            return ListV(tuple(self.concretize(c) for c in v.items))
        if isinstance(v, ArrayV):
            return ArrayV(tuple(self.concretize(c) for c in v.items))
        if isinstance(v, DInstance):
            return DInstance(v.fn, self.concretize(v.state))
        return v

    def affine(self, v: Any) -> tuple[int | None, float, float] | None:
        """Write ``v`` as ``s * X + t``; X is None for a constant. None if not affine."""
        if isinstance(v, bool):
            return None
        if isinstance(v, (int, float)):
            return None, 0.0, float(v)
        if isinstance(v, RV):
            return v.id, 1.0, 0.0
        if not (isinstance(v, SymApp) and isinstance(v.arg, tuple) and len(v.arg) == 2):
            return None
        a, b = self.affine(v.arg[0]), self.affine(v.arg[1])
        if a is None or b is None:
            return None
        (xa, sa, ta), (xb, sb, tb) = a, b
        if xa is not None and xb is not None and xa != xb:
            return None
        x = xa if xa is not None else xb
        if v.op == "plus":
            return x, sa + sb, ta + tb
        if v.op == "sub":
            return x, sa - sb, ta - tb
        if v.op == "mult":
            if xa is not None and xb is not None:
                return None
            if xa is None:
                return x, ta * sb, ta * tb
            return x, sa * tb, ta * tb
        if v.op == "div":
            if xb is not None or tb == 0:
                return None
            return x, sa / tb, ta / tb
        return None

    def _gaussian_family(self, n: int) -> bool:
        st = self.state(n)
        if isinstance(st, Marginalized):
            return isinstance(st.mdistr, D.Gaussian)
        if isinstance(st, Initialized):
            return isinstance(st.cdistr, (D.CGaussianMean, D.CGaussianObs))
        return False

    def _conjugate(self, d: SymDist) -> tuple[int, D.CDistr] | None:
        fv = frv(d.arg)
        if len(fv) != 1:
            return None
        (y,) = fv
        if isinstance(self.state(y), Realized):
            return None
        if d.family == "gaussian" and isinstance(d.arg, tuple) and len(d.arg) == 2:
            m, var = d.arg
            if frv(var) or isinstance(var, bool) or not isinstance(var, (int, float)):
                return None
            aff = self.affine(m)
            if aff is None or aff[0] != y or not self._gaussian_family(y):
                return None
            if var <= 0:
                raise D.DistributionError(f"gaussian: variance must be positive, got {var}")
            return y, D.CGaussianMean(float(var), (aff[1], aff[2]))
        if d.family == "bernoulli" and d.arg == RV(y):
            st = self.state(y)
            if isinstance(st, Marginalized) and isinstance(st.mdistr, D.Beta):
                return y, D.CBernoulli()
        return None

    # -- high-level interface ------------------------------------------------

    def hl_assume(self, d: Any) -> RV:
        if isinstance(d, D.MDistr):
            x = self.assume_constant(d)
            self._record(Assume(x, None))
            return RV(x)
        if not isinstance(d, SymDist):
            raise TypeError(f"assume: not a distribution: {d!r}")
        conj = self._conjugate(d)
        if conj is not None:
            y, cd = conj
            x = self.assume_conditional(y, cd)
            self._record(Assume(x, y))
            return RV(x)
        concrete = self.hl_value(d)
        x = self.assume_constant(concrete)
        self._record(Assume(x, None))
        return RV(x)

    def hl_value(self, v: Any) -> Any:
        self._record(Eval(frv(v)))
        return self.concretize(v)

    def hl_observe(self, n: int, x: Any) -> float:
        """Condition node ``n`` on ``x``; returns the density of ``x`` under its marginal."""
        if isinstance(self.state(n), Realized):
            raise InvariantError(f"observe: node {n} is already realized")
        self.graft(n)
        w = self.state(n).mdistr.pdf(x)
        self.observe(n, x)
        self._record(Obs(n))
        return w

    def observe_dist(self, d: Any, x: Any) -> float:
        """Assume ``d``, then condition on ``x``; returns the likelihood weight."""
        return self.hl_observe(self.hl_assume(d).id, x)

    # -- queries -------------------------------------------------------------

    def posterior(self, n: int) -> D.MDistr | None:
        """Exact current distribution of a node, or None when no closed form is known.

        Does not modify the graph.
        """
        ups = []
        while isinstance(self.state(n), Initialized):
            ups.append(self.nodes[n].cdistr)
            n = self.nodes[n].parent
        st = self.nodes[n]
        if isinstance(st, Realized):
            if not ups:
                return D.Delta(st.value)
            post = D.cdistr_to_mdistr(ups.pop(), st.value)
        else:
            post = self._marg_posterior(n)
        for cd in reversed(ups):
            if post is None:
                return None
            try:
                post = D.make_marginal(post, cd)
            except D.NonConjugate:
                return None
        return post

    def _marg_posterior(self, n: int) -> D.MDistr | None:
        chain = [n]
        while True:
            st = self.nodes[chain[-1]]
            if st.child is None or isinstance(self.nodes[st.child], Realized):
                break
            chain.append(st.child)
        st = self.nodes[chain[-1]]
        if st.child is None:
            post = st.mdistr
        else:
            post = D.make_conditional(st.mdistr, st.child_cdistr, self.nodes[st.child].value)
        for m in reversed(chain[:-1]):
            st = self.nodes[m]
            if post == D.make_marginal(st.mdistr, st.child_cdistr):
                post = st.mdistr
            elif isinstance(st.mdistr, D.Gaussian) and isinstance(post, D.Gaussian):
                # E[X | child] is affine in the child; integrate it against
                # the child's posterior
                c0 = D.make_conditional(st.mdistr, st.child_cdistr, 0.0)
                c1 = D.make_conditional(st.mdistr, st.child_cdistr, 1.0)
                slope = c1.mean - c0.mean
                post = D.Gaussian(c0.mean + slope * post.mean, c0.var + slope * slope * post.var)
            else:
                return None
        return post

    def reachable(self, roots: Iterable[int]) -> set[int]:
        seen: set[int] = set()
        stack = [r for r in roots]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            st = self.nodes.get(n)
            if isinstance(st, Initialized):
                stack.append(st.parent)
            elif isinstance(st, Marginalized) and st.child is not None:
                if isinstance(self.nodes.get(st.child), (Marginalized, Realized)):
                    stack.append(st.child)
        return seen

    def marg_parents(self) -> dict[int, list[int]]:
        """Reverse of the marginalized child links."""
        out: dict[int, list[int]] = {}
        for n, st in self.nodes.items():
            if isinstance(st, Marginalized) and st.child is not None:
                out.setdefault(st.child, []).append(n)
        return out

    def chain_profile(self, nodes: Iterable[int] | None = None) -> tuple[int, int]:
        """(longest initialized chain, longest marginalized chain), in edges."""
        ids = list(self.nodes) if nodes is None else list(nodes)

        def up(n):
            st = self.nodes[n]
            return st.parent if isinstance(st, Initialized) else None

        def down(n):
            st = self.nodes[n]
            if isinstance(st, Marginalized) and st.child is not None:
                if isinstance(self.nodes[st.child], Marginalized):
                    return st.child
            return None

        init_memo: dict[int, int] = {}
        marg_memo: dict[int, int] = {}
        best_i = max((_chain_len(n, up, init_memo) for n in ids), default=0)
        best_m = max((_chain_len(n, down, marg_memo) for n in ids), default=0)
        return best_i, best_m

    def root_path(self, n: int, parents: dict[int, list[int]] | None = None) -> list[int]:
        """Nodes from the root of ``n``'s tree down to ``n``.

        A realized node holds no links, so it is the root of whatever
        initialized nodes hang below it.
        """
        parents = self.marg_parents() if parents is None else parents
        path = [n]
        seen = {n}
        while True:
            st = self.nodes[path[-1]]
            if isinstance(st, Realized) and len(path) > 1:
                break
            if isinstance(st, Initialized):
                up = st.parent
            else:
                ps = parents.get(path[-1], [])
                if len(ps) > 1:
                    raise InvariantError(f"node {path[-1]} is the child of several nodes")
                if not ps:
                    break
                up = ps[0]
            if up in seen:
                raise InvariantError(f"cycle through node {up}")
            seen.add(up)
            path.append(up)
        return path[::-1]

    def classify(self, n: int, parents: dict[int, list[int]] | None = None) -> str:
        """Shape of the root-to-node path: 'init', 'marg' or 'marg-init'.

        Raises InvariantError when the path has neither shape.
        """
        kinds = []
        for m in self.root_path(n, parents):
            st = self.nodes[m]
            kinds.append("I" if isinstance(st, Initialized) else "M" if isinstance(st, Marginalized) else "R")
        body = "".join(kinds)
        # realized nodes only at the ends: a realized root can parent an
        # initialized chain and a realized leaf can end a marginalized chain
        if not re.fullmatch(r"R?M*I*|M*R", body):
            raise InvariantError(f"node {n}: root path {body} violates the chain structure")
        if "I" in body and ("M" in body or body.startswith("R")):
            return "marg-init"
        return "init" if "I" in body else "marg"

    def check_invariants(self) -> None:
        parents = self.marg_parents()
        for n, st in self.nodes.items():
            if isinstance(st, Initialized):
                if st.parent not in self.nodes:
                    raise InvariantError(f"node {n}: dangling parent {st.parent}")
            if isinstance(st, Marginalized) and st.child is not None:
                if not isinstance(self.nodes.get(st.child), (Marginalized, Realized)):
                    raise InvariantError(f"node {n}: child link to a non-marginalized node")
            self.classify(n, parents)

    def dump(self) -> str:
        lines = []
        for n in sorted(self.nodes):
            st = self.nodes[n]
            if isinstance(st, Initialized):
                lines.append(f"{n}: Initialized(parent={st.parent}, {st.cdistr})")
            elif isinstance(st, Marginalized):
                link = "" if st.child is None else f", child={st.child}"
                lines.append(f"{n}: Marginalized({st.mdistr}{link})")
            else:
                lines.append(f"{n}: Realized({st.value!r})")
        return "\n".join(lines)


def _chain_len(n: int, step, memo: dict[int, int]) -> int:
    """Number of ``step`` links from ``n`` before the chain stops."""
    path = []
    while n is not None and n not in memo:
        path.append(n)
        n = step(n)
    k = memo[n] if n is not None else -1
    for m in reversed(path):
        k += 1
        memo[m] = k
    return memo[path[0]] if path else k
