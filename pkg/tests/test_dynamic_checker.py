import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gen_ops import random_sequence, random_trace
from oracles import brute_m, brute_paths
from muf import CORPUS, distributions as D, parse
from muf.core_types import typecheck_core
from muf.ds_graph import Assume, DSGraph, Eval, Obs, Realized
from muf.dynamic_checker import (
    CSV_COLUMNS,
    TraceRecorder,
    chain_bounds_probe,
    check_high_level,
    check_low_level,
    m_consumed,
    max_unconsumed_chain,
    unseparated_paths,
    write_csv,
)
from muf.interpreter import InferConfig, default_input, run_program
from muf.values import RV, SymDist

# two Kalman iterations: x1, y1 ⇜ x1 observed, x2 ⇜ x1, y2 ⇜ x2 observed
X1, Y1, X2, Y2 = 0, 1, 2, 3
KALMAN2 = [Assume(X1), Assume(Y1, X1), Obs(Y1), Assume(X2, X1), Assume(Y2, X2), Obs(Y2)]

# Hold-First: i, x1 ⇜ i, y1 ⇜ x1 observed, x2 ⇜ x1, y2 ⇜ x2 observed
I, HX1, HY1, HX2, HY2 = range(5)
HOLD2 = [Assume(I), Assume(HX1, I), Assume(HY1, HX1), Obs(HY1),
         Assume(HX2, HX1), Assume(HY2, HX2), Obs(HY2)]

traces = st.integers(0, 2**32).map(lambda s: random_trace(random.Random(s)))


def test_kalman_consumption():
    rep = m_consumed(KALMAN2)
    assert rep.m == {X1: 1, Y1: 0, X2: 1, Y2: 0}
    assert rep.max_finite == 1 and rep.unconsumed == []


def test_hold_first_consumption():
    rep = m_consumed(HOLD2)
    assert (rep.m[I], rep.m[HX1], rep.m[HY1]) == (2, 1, 0)


def test_lone_variable_never_consumed():
    rep = m_consumed([Assume(0)])
    assert rep.m[0] == math.inf and rep.unconsumed == [0]


def test_eval_consumes():
    assert m_consumed([Assume(0), Assume(1, 0), Eval(frozenset({1}))]).m == {0: 1, 1: 0}


def test_hold_first_path_has_three_variables():
    paths = unseparated_paths(HOLD2)
    assert paths.longest[I] == 3
    assert paths.edges(I) == 2
    assert paths.state_max({I, HX2}) == 3


def test_kalman_paths_from_state():
    paths = unseparated_paths(KALMAN2)
    # the unobserved x's chain together, but the state only holds x2
    assert paths.state_max({X2}) == 1
    assert paths.global_max == 2
    assert paths.longest[Y1] == 0


def test_observed_variables_start_no_path():
    trace = [Assume(0), Obs(0), Assume(1, 0), Obs(1)]
    assert unseparated_paths(trace).longest == {0: 0, 1: 0}


def test_through_counts_both_directions():
    trace = [Assume(0), Assume(1, 0), Assume(2, 1), Assume(3, 2)]
    assert unseparated_paths(trace).through(1) == 4


@settings(max_examples=500)
@given(traces)
def test_m_matches_brute_force(trace):
    assert m_consumed(trace).m == brute_m(trace)


@settings(max_examples=500)
@given(traces)
def test_paths_match_enumeration(trace):
    assert unseparated_paths(trace).longest == brute_paths(trace)


@given(traces, st.data())
def test_observing_never_lengthens(trace, data):
    vars_ = [e.var for e in trace if isinstance(e, Assume)]
    if not vars_:
        return
    x = data.draw(st.sampled_from(vars_))
    before_m, after_m = m_consumed(trace).m, m_consumed(trace + [Obs(x)]).m
    before_p, after_p = unseparated_paths(trace).longest, unseparated_paths(trace + [Obs(x)]).longest
    assert all(after_m[v] <= before_m[v] for v in vars_)
    assert all(after_p[v] <= before_p[v] for v in vars_)


@settings(max_examples=300)
@given(st.integers(0, 2**32))
def test_consumed_variables_end_up_realized(seed):
    g, _ = random_sequence(seed)
    for ev in g.trace:
        targets = [ev.var] if isinstance(ev, Obs) else ev.vars if isinstance(ev, Eval) else []
        for v in targets:
            assert isinstance(g.nodes[v], Realized)


@settings(max_examples=500)
@given(st.integers(0, 2**32))
def test_chain_bounds_on_random_sequences(seed):
    g, _ = random_sequence(seed)
    r = chain_bounds_probe(g)
    assert r.ok, r


def test_initialized_chain_of_five():
    g = DSGraph(record_trace=True)
    x = g.hl_assume(D.Gaussian(0.0, 1.0))
    for _ in range(5):
        x = g.hl_assume(SymDist("gaussian", (x, 1.0)))
    r = chain_bounds_probe(g)
    assert r.ok and r.init_chain == 5
    assert m_consumed(g.trace).m[0] > 4
    assert max_unconsumed_chain(g.trace) == 6


def test_fully_observed_chains_are_short():
    g = DSGraph(record_trace=True)
    x = g.hl_assume(D.Gaussian(0.0, 1.0))
    g.hl_observe(x.id, 0.3)
    for v in (1.0, -0.5, 2.0):
        y = g.hl_assume(SymDist("gaussian", (x, 1.0)))
        g.hl_observe(y.id, v)
        x = y
    r = chain_bounds_probe(g)
    assert r.init_chain <= 1 and r.marg_chain <= 1


def _record(name, steps, particles=5, inputs=None):
    prog = parse((CORPUS / f"{name}.muf").read_text())
    tp = typecheck_core(prog)
    xs = inputs or [default_input(tp.main_sig().input)] * steps
    rec = TraceRecorder()
    run_program(prog, xs, InferConfig(particles=particles, record_trace=True), tp, rec)
    return rec


def test_kalman_high_level_holds():
    rec = _record("kalman", 100, inputs=[0.2 * (t % 4) for t in range(100)])
    assert rec.high_level(1, 1).holds
    assert rec.low_level(2).holds


def test_hold_first_violates_path_bound():
    rec = _record("kalman_hold_first", 100)
    v = rec.high_level(8, 100)
    assert not v.holds and "state variable" in v.reason and v.step == 100
    assert not rec.low_level(8).holds


def test_random_walk_violates_consumption():
    v = _record("gaussian_random_walk", 100).high_level(8, 8)
    assert not v.holds and "consumed" in v.reason


def test_empty_state_is_trivially_low_level_bounded():
    assert check_low_level([(DSGraph(), set())], 1).holds
    assert check_high_level([], 0, 0).holds


def test_csv_output(tmp_path):
    rec = _record("coin", 3)
    path = tmp_path / "m.csv"
    with open(path, "w") as f:
        write_csv(rec.metrics, f)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert [l.split(",")[0] for l in lines[1:]] == ["1", "2", "3"]


def test_bad_particle_index():
    with pytest.raises(IndexError):
        _record_bad = TraceRecorder(particle_index=7)
        prog = parse((CORPUS / "coin.muf").read_text())
        run_program(prog, [True], InferConfig(particles=2, record_trace=True), None, _record_bad)


def _dead_end_chain(n):
    # x_k <~ x_{k-1}, each x_k consumed through an observed child, plus an
    # output-only z_k <~ x_k that nothing ever touches
    trace, roots, snaps, nid = [], None, [], 0
    prev = None
    for _ in range(n):
        x, y, z = nid, nid + 1, nid + 2
        nid += 3
        trace += [Assume(x, prev), Assume(z, x), Assume(y, x), Obs(y)]
        prev = x
        snaps.append(({x}, list(trace)))
    return snaps


def test_dead_end_outputs_are_unused():
    snaps = _dead_end_chain(30)
    assert check_high_level(snaps, 4, 4)
    lit = check_high_level(snaps, 4, 4, literal=True)
    assert not lit and "not 4-consumed" in lit.reason
