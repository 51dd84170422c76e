"""Trace-level checks of the two dataflow properties behind bounded memory.

A trace is the list of ``Assume`` / ``Obs`` / ``Eval`` events recorded by a
delayed-sampling graph. Trace order is a topological order of the
assumed-from relation, so both properties are computed in one backward pass.

Conventions:

* ``m(X) = 0`` when X is observed or evaluated, ``1 + min m(X')`` over the
  variables X' assumed from X otherwise, and infinity when no such chain
  reaches a consumed variable.
* Unseparated path lengths count variables. A variable that is observed or
  evaluated is on no unseparated path, so it starts a path of length 0.
  ``PathReport.edges`` gives the same lengths counted in edges.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from .ds_graph import Assume, DSGraph, Eval, InvariantError, Obs, TraceEvent

INF = math.inf


def _structure(trace: Sequence[TraceEvent]):
    order: list[int] = []
    children: dict[int, list[int]] = {}
    consumed: set[int] = set()
    for ev in trace:
        if isinstance(ev, Assume):
            order.append(ev.var)
            children.setdefault(ev.var, [])
            if ev.parent is not None:
                children.setdefault(ev.parent, []).append(ev.var)
        elif isinstance(ev, Obs):
            consumed.add(ev.var)
        elif isinstance(ev, Eval):
            consumed.update(ev.vars)
    return order, children, consumed


@dataclass
class ConsumptionReport:
    m: dict[int, float]

    @property
    def max_finite(self) -> int:
        return int(max((v for v in self.m.values() if v != INF), default=0))

    @property
    def unconsumed(self) -> list[int]:
        return sorted(x for x, v in self.m.items() if v == INF)


def m_consumed(trace: Sequence[TraceEvent]) -> ConsumptionReport:
    """Least m for which each introduced variable is m-consumed."""
    order, children, consumed = _structure(trace)
    m: dict[int, float] = {}
    for x in reversed(order):
        if x in consumed:
            m[x] = 0
        else:
            m[x] = min((m[c] + 1 for c in children[x]), default=INF)
    return ConsumptionReport(m)


@dataclass
class PathReport:
    longest: dict[int, int]  # variable -> longest unseparated path it starts (variables)
    ending: dict[int, int] = field(default_factory=dict)  # longest path ending at it

    @property
    def global_max(self) -> int:
        return max(self.longest.values(), default=0)

    def state_max(self, roots: Iterable[int]) -> int:
        return max((self.longest.get(r, 0) for r in roots), default=0)

    def through(self, x: int) -> int:
        """Longest unseparated path that contains ``x``."""
        if not self.longest.get(x):
            return 0
        return self.ending[x] + self.longest[x] - 1

    def edges(self, x: int) -> int:
        return max(self.longest.get(x, 0) - 1, 0)


def unseparated_paths(trace: Sequence[TraceEvent]) -> PathReport:
    order, children, consumed = _structure(trace)
    down: dict[int, int] = {}
    for x in reversed(order):
        if x in consumed:
            down[x] = 0
        else:
            down[x] = 1 + max((down[c] for c in children[x]), default=0)
    parent = {c: p for p, cs in children.items() for c in cs}
    up: dict[int, int] = {}
    for x in order:
        if x in consumed:
            up[x] = 0
        else:
            p = parent.get(x)
            up[x] = 1 + (up[p] if p is not None else 0)
    return PathReport(down, up)


def max_unconsumed_chain(trace: Sequence[TraceEvent]) -> int:
    """Longest assumed-from chain of variables that are never consumed, in variables."""
    order, children, _ = _structure(trace)
    rep = m_consumed(trace)
    best: dict[int, int] = {}
    for x in reversed(order):
        if rep.m[x] != INF:
            best[x] = 0
        else:
            best[x] = 1 + max((best[c] for c in children[x]), default=0)
    return max(best.values(), default=0)


# ---------------------------------------------------------------------------
# Bounded-memory criteria over a sequence of step snapshots


@dataclass
class Verdict:
    holds: bool
    horizon: int
    reason: str = ""
    step: int | None = None  # first violating step

    def __bool__(self):
        return self.holds


def check_high_level(executions: Sequence[tuple[Iterable[int], Sequence[TraceEvent]]],
                     m_bound: int, c_bound: int, literal: bool = False) -> Verdict:
    """Check both dataflow properties on snapshots (state variables, trace so far).

    Only the observed horizon is checked. A variable passes the first
    property if it is m_bound-consumed at the last snapshot, or if it never
    starts an unseparated path with more than m_bound variables. Judging
    paths that start at the variable, rather than paths through it, keeps
    dead-end outputs hanging off a long chain from counting as unbounded.
    ``literal=True`` uses paths through the variable instead.
    """
    horizon = len(executions)
    on_long_path: dict[int, int] = {}
    for n, (roots, trace) in enumerate(executions, start=1):
        paths = unseparated_paths(trace)
        for x in paths.longest:
            span = paths.through(x) if literal else paths.longest[x]
            if x not in on_long_path and span > m_bound:
                on_long_path[x] = n
        worst = max(roots, key=lambda r: paths.longest.get(r, 0), default=None)
        if worst is not None and paths.longest.get(worst, 0) > c_bound:
            return Verdict(False, horizon,
                           f"state variable {worst} starts an unseparated path of "
                           f"{paths.longest[worst]} variables", n)
    if executions:
        final = m_consumed(executions[-1][1])
        for x, m in sorted(final.m.items()):
            if m > m_bound and x in on_long_path:
                return Verdict(False, horizon,
                               f"variable {x} is not {m_bound}-consumed and starts a longer "
                               f"unseparated path", on_long_path[x])
    return Verdict(True, horizon)


def check_low_level(snapshots: Sequence[tuple[DSGraph, Iterable[int]]], k: int) -> Verdict:
    """|reachable(g, s)| <= k * |frv(s)| at every snapshot."""
    for n, (g, roots) in enumerate(snapshots, start=1):
        roots = set(roots)
        size = len(g.reachable(roots))
        if size > k * len(roots):
            return Verdict(False, len(snapshots),
                           f"{size} reachable nodes for {len(roots)} state variables", n)
    return Verdict(True, len(snapshots))


@dataclass
class ProbeResult:
    ok: bool
    init_chain: int
    marg_chain: int
    unconsumed_chain: int
    max_path: int
    max_m: int
    bad_nodes: list = field(default_factory=list)


def chain_bounds_probe(g: DSGraph, trace: Sequence[TraceEvent] | None = None) -> ProbeResult:
    """Relate graph chains to trace properties after an arbitrary op sequence.

    Every node must have the chain shape "initialized chain below a
    marginalized chain"; an initialized chain never has more edges than the
    longest chain of never-consumed variables; a marginalized chain never
    has more edges than the longest unseparated path plus the largest m.
    """
    trace = g.trace if trace is None else trace
    parents = g.marg_parents()
    bad = []
    for n in g.nodes:
        try:
            g.classify(n, parents)
        except InvariantError:
            bad.append(n)
    init_c, marg_c = g.chain_profile()
    unc = max_unconsumed_chain(trace)
    paths = unseparated_paths(trace)
    mm = m_consumed(trace).max_finite
    ok = not bad and init_c <= unc and marg_c <= paths.global_max + mm
    return ProbeResult(ok, init_c, marg_c, unc, paths.global_max, mm, bad)


# ---------------------------------------------------------------------------
# Per-step metrics

CSV_COLUMNS = ["step", "reachable", "max_init_chain", "max_marg_chain",
               "max_state_path", "max_unconsumed_m", "unconsumed"]


@dataclass
class StepMetrics:
    step: int
    reachable: int
    max_init_chain: int
    max_marg_chain: int
    max_state_path: int
    max_unconsumed_m: int
    unconsumed: int

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def step_metrics(step: int, g: DSGraph, roots: Iterable[int]) -> StepMetrics:
    """Metrics of one particle after a step.

    Chain lengths are measured inside the reachable part of the graph;
    ``max_unconsumed_m`` is the largest finite m and ``unconsumed`` counts
    variables not consumed so far.
    """
    roots = set(roots)
    live = g.reachable(roots)
    init_c, marg_c = g.chain_profile(live)
    trace = g.trace or []
    cons = m_consumed(trace)
    paths = unseparated_paths(trace)
    return StepMetrics(step, len(live), init_c, marg_c, paths.state_max(roots),
                       cons.max_finite, len(cons.unconsumed))


def write_csv(rows: Iterable[StepMetrics], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.row())


class TraceRecorder:
    """Inference observer that collects metrics for one particle per step.

    Run with ``InferConfig(record_trace=True)``. Only the first infer site
    is followed unless ``site`` is given.
    """

    def __init__(self, particle_index: int = 0, site: int | None = None):
        self.particle_index = particle_index
        self.site = site
        self.metrics: list[StepMetrics] = []
        self.snapshots: list[tuple[frozenset, list]] = []
        self.graphs: list[tuple[DSGraph, frozenset]] = []

    def __call__(self, info) -> None:
        from .values import frv

        if self.site is None:
            self.site = info.site
        if info.site != self.site:
            return
        if not 0 <= self.particle_index < len(info.particles):
            raise IndexError(f"particle index {self.particle_index} out of range")
        p = info.particles[self.particle_index]
        roots = frv(p.state)
        self.metrics.append(step_metrics(info.step, p.graph, roots))
        self.snapshots.append((roots, p.graph.trace or []))
        self.graphs.append((p.graph, roots))

    def high_level(self, m_bound: int, c_bound: int, literal: bool = False) -> Verdict:
        return check_high_level(self.snapshots, m_bound, c_bound, literal)

    def low_level(self, k: int) -> Verdict:
        return check_low_level(self.graphs, k)
