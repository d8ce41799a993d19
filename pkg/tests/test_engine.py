"""Derivation engine: criteria, symbolic unfolding, ground execution."""

import pytest

from clptcg.engine import (
    CRITERION_STOP,
    Engine,
    LitItem,
    RefNeqItem,
    SUCCESS,
    entry_goal,
    parse_criterion,
)
from clptcg.heap import GROUND, SYMBOLIC
from clptcg.ir import CallLit, parse_ir
from clptcg.terms import Int, NULL, Store

COUNT = """
count([N],[R],H,H,ok) :-
        N #=< 0,
        R #= 0.
count([N],[R],H,H2,EF) :-
        N #> 0,
        M #= N - 1,
        count([M],[R2],H,H2,EF),
        R #= R2 + 1.
"""


def test_parse_criterion():
    c = parse_criterion("block-k:2")
    assert c.kind == "block-k" and c.k == 2 and c.spec() == "block-k:2"
    d = parse_criterion("depth-k:7")
    assert d.kind == "depth-k" and d.k == 7
    for bad in ("block-k", "block-k:x", "size-k:2", "block-k:0"):
        with pytest.raises(ValueError):
            parse_criterion(bad)


def _unfold_count(spec):
    prog = parse_ir(COUNT)
    store = Store()
    eng = Engine(prog, store, mode=SYMBOLIC)
    goal = entry_goal(store, "count", 1, 1)
    return eng.unfold(goal, parse_criterion(spec))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_block_k_bounds_recursion_depth(k):
    rs = _unfold_count(f"block-k:{k}")
    succ = [r for r in rs if r.stop_reason == SUCCESS]
    stops = [r for r in rs if r.stop_reason == CRITERION_STOP]
    # one successful path per admitted recursion depth, one cut branch
    assert len(succ) == k
    assert len(stops) == 1
    depths = sorted(len(r.trace) for r in succ)
    assert depths == list(range(1, k + 1))


def test_depth_k_zero_emits_no_cases():
    rs = _unfold_count("depth-k:0")
    assert [r.stop_reason for r in rs] == [CRITERION_STOP]


def test_depth_k_suites_are_nested():
    small = {r.trace for r in _unfold_count("depth-k:6") if r.stop_reason == SUCCESS}
    large = {r.trace for r in _unfold_count("depth-k:12") if r.stop_reason == SUCCESS}
    assert small <= large
    assert small != large


def test_resultants_capture_path_constraints():
    rs = _unfold_count("block-k:2")
    two_step = next(r for r in rs if r.stop_reason == SUCCESS and len(r.trace) == 2)
    ops = {c.op for c in two_step.constraints}
    assert "#>" in ops and "#=<" in ops
    assert two_step.exflag.name == "ok"


def test_ground_run_is_deterministic():
    prog = parse_ir(COUNT)
    store = Store()
    eng = Engine(prog, store, mode=GROUND)
    out = store.fresh()
    call = CallLit("count", (Int(3),), (out,), NULL, store.fresh(), store.fresh())
    run = eng.run_ground((LitItem(call, None),))
    assert len(run.solutions) == 1
    trace, executed, (args_out, _h, exflag) = run.solutions[0]
    assert args_out == (Int(3),)
    assert exflag.name == "ok"
    assert trace == (("count", 1),) * 3 + (("count", 0),)
    assert ("count", 0, "g") in executed


def test_refneq_enumerates_reference_shapes():
    prog = parse_ir(COUNT)
    store = Store()
    eng = Engine(prog, store, mode=SYMBOLIC)
    a, b = store.fresh(), store.fresh()
    out = store.fresh()
    call = CallLit("count", (Int(0),), (out,), store.fresh(), store.fresh(), store.fresh())
    goal = (RefNeqItem(a, b), LitItem(call, None))
    rs = eng.unfold(goal, parse_criterion("block-k:2"))
    # null/r, r/null, r/r-with-disequality: three viable branches
    # (null/null is pruned, and every branch succeeds on count(0))
    branch_markers = {r.path[0] for r in rs}
    assert len(branch_markers) == 3
    assert all(r.stop_reason == SUCCESS for r in rs)


def test_entry_goal_shape():
    store = Store()
    goal = entry_goal(store, "count", 1, 1)
    assert len(goal) == 1
    lit = goal[0].lit
    assert isinstance(lit, CallLit)
    assert lit.pred == "count"
    assert len(lit.args_in) == 1 and len(lit.args_out) == 1
