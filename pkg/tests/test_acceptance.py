"""Acceptance criteria, one test (and one pass/fail line) per criterion.

Run with `pytest tests/test_acceptance.py -v` to see the per-criterion
verdicts.
"""

import random
import sys
import time
from collections import Counter
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))
from _util import FIXTURES, differential_check, load_fixture

from clptcg.harness import (
    acyclic,
    generate_suite,
    ground_heap_cells,
    noshare,
    parse_precondition,
)
from clptcg.ir import CallLit
from clptcg.terms import OK, is_cons, is_ref


# -- shared helpers ---------------------------------------------------------


def _fields(cell):
    out = []
    t = cell.args[1]
    while is_cons(t):
        out.append(t.args[0])
        t = t.args[1]
    return out


def _field(cell, name):
    for fe in _fields(cell):
        if fe.args[0].args[1].name == name:
            return fe.args[1]
    return None


def _list_nodes(cells, root):
    """data values of the node chain a SortedList reference heads."""
    out = []
    if not (is_ref(root) and root.args[0].value in cells):
        return out, True
    cur = _field(cells[root.args[0].value], "first")
    seen = set()
    while is_ref(cur) and cur.args[0].value in cells:
        k = cur.args[0].value
        if k in seen:
            return out, False  # cyclic
        seen.add(k)
        out.append(_field(cells[k], "data").value)
        cur = _field(cells[k], "next")
    return out, True


def _merge_suites():
    _resolved, program = load_fixture("merge.moo")
    t0 = time.perf_counter()
    off = generate_suite(program, "SortedList.merge", "block-k:2", aliasing=False)
    t_off = time.perf_counter() - t0
    t0 = time.perf_counter()
    on = generate_suite(program, "SortedList.merge", "block-k:2", aliasing=True)
    t_on = time.perf_counter() - t0
    return program, off, t_off, on, t_on


def _is_sharing(tc):
    cells = ground_heap_cells(tc.h_in)
    this, l = tc.args_in
    return this == l or not noshare(cells, this, l)


def test_criterion_1_merge_blockk2_alias_off():
    _program, suite, elapsed, _on, _t = _merge_suites()
    assert len(suite.cases) == 9
    exc = [tc for tc in suite.cases if tc.exflag != OK]
    assert len(exc) == 3 and all(tc.exc_class == "NPE" for tc in exc)
    shapes = []
    for tc in suite.cases:
        if tc.exflag != OK:
            continue
        ci = ground_heap_cells(tc.h_in)
        co = ground_heap_cells(tc.h_out)
        a, ok_a = _list_nodes(ci, tc.args_in[0])
        b, ok_b = _list_nodes(ci, tc.args_in[1])
        merged, ok_m = _list_nodes(co, tc.args_in[0])
        assert ok_a and ok_b and ok_m, "unexpected cycle without aliasing"
        assert a == sorted(a) and b == sorted(b), "inputs must be sorted lists"
        assert merged == sorted(merged), "output must be a sorted list"
        shapes.append((len(a), len(b), len(merged)))
    assert Counter(shapes) == Counter(
        {(1, 1, 2): 2, (1, 2, 3): 2, (2, 1, 3): 2}
    )
    assert not suite.replay_failures
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    print("criterion 1: PASS — 9 cases (3 NPE), table shapes match, "
          f"{elapsed * 1000:.0f} ms")


def test_criterion_2_merge_blockk2_alias_on():
    _program, off, _t, suite, elapsed = _merge_suites()
    assert len(suite.cases) == 16
    assert {tc.trace for tc in off.cases} <= {tc.trace for tc in suite.cases}
    extra = [tc for tc in suite.cases if _is_sharing(tc)]
    assert len(extra) == 7
    exc = [tc for tc in extra if tc.exflag != OK]
    assert len(exc) == 1 and exc[0].exc_class == "NPE"
    for tc in extra:
        if tc.exflag != OK:
            continue
        co = ground_heap_cells(tc.h_out)
        assert not acyclic(co, tc.args_in[0]), "sharing case must cycle"
    assert not suite.replay_failures
    assert elapsed < 2.0, f"took {elapsed:.2f}s"
    print("criterion 2: PASS — 16 cases, 7 sharing extras "
          f"(1 NPE, 6 cyclic outputs), {elapsed * 1000:.0f} ms")


FIXTURE_ENTRIES = [
    ("merge.moo", "SortedList.merge"),
    ("arrays.moo", "Summer.upto"),
    ("dispatch.moo", "Driver.m"),
    ("recsum.moo", "Rec.sum"),
]


def test_criterion_3_replay_closure_on_all_fixtures():
    total = 0
    for fixture, entry in FIXTURE_ENTRIES:
        _resolved, program = load_fixture(fixture)
        for criterion in ("block-k:2", "depth-k:25"):
            for aliasing in (False, True):
                suite = generate_suite(program, entry, criterion, aliasing=aliasing)
                assert suite.cases, (fixture, criterion, aliasing)
                assert not suite.replay_failures, (
                    fixture,
                    criterion,
                    aliasing,
                    suite.replay_failures,
                )
                total += len(suite.cases)
    print(f"criterion 3: PASS — {total} cases across 4 fixtures x 2 criteria "
          "x 2 aliasing modes all replay")


def test_criterion_4_virtual_dispatch_pruning():
    _resolved, program = load_fixture("dispatch.moo")
    impl_of = {}
    for pname, pred in program.predicates.items():
        for ci, clause in enumerate(pred.clauses):
            for lit in clause.body:
                if isinstance(lit, CallLit) and lit.pred in ("A.p", "B.p", "C.p"):
                    impl_of.setdefault((pname, ci), set()).add(lit.pred)
    suite = generate_suite(program, "Driver.m", "block-k:2", aliasing=True)
    aliased_targets = set()
    for tc in suite.cases:
        a, b = tc.args_in[1], tc.args_in[2]
        if a != b or not is_ref(a):
            continue
        for step in tc.trace:
            aliased_targets |= impl_of.get(step, set())
    assert aliased_targets == {"B.p", "C.p"}
    print("criterion 4: PASS — aliased receivers dispatch to B.p and C.p, "
          "never A.p")


def test_criterion_5_coverage():
    _resolved, merge_prog = load_fixture("merge.moo")
    merge = generate_suite(merge_prog, "SortedList.merge", "block-k:2")
    assert merge.coverage.percent == 100.0

    _resolved, rec_prog = load_fixture("recsum.moo")
    small = generate_suite(rec_prog, "Rec.sum", "depth-k:6")
    large = generate_suite(rec_prog, "Rec.sum", "depth-k:20")
    assert small.coverage.percent < large.coverage.percent
    assert {tc.trace for tc in small.cases} < {tc.trace for tc in large.cases}
    print("criterion 5: PASS — merge block-k:2 at 100% coverage; depth-k "
          f"{small.coverage.percent:.0f}% < {large.coverage.percent:.0f}% "
          "with nested suites")


def test_criterion_6_precondition_filtering():
    _resolved, program = load_fixture("merge.moo")
    pre = parse_precondition((FIXTURES / "merge_noalias.pre").read_text())
    filtered = generate_suite(
        program, "SortedList.merge", "block-k:2", aliasing=True, precondition=pre
    )
    off = generate_suite(program, "SortedList.merge", "block-k:2", aliasing=False)
    assert len(filtered.cases) == 9
    assert not any(_is_sharing(tc) for tc in filtered.cases)
    assert sorted(tc.trace for tc in filtered.cases) == sorted(
        tc.trace for tc in off.cases
    )
    assert not filtered.replay_failures
    print("criterion 6: PASS — this != l with noshare leaves exactly the 9 "
          "non-aliasing cases")


def test_criterion_7_substrate_property_suites():
    import test_heap
    import test_terms

    test_terms.test_trail_rollback_identity_random_scripts()
    test_terms.test_label_agrees_with_exhaustive_search()
    test_heap.test_get_cell_branch_set_matches_reference_enumeration(False)
    test_heap.test_get_cell_branch_set_matches_reference_enumeration(True)
    checked = 0
    for fixture, entry in FIXTURE_ENTRIES:
        resolved, program = load_fixture(fixture)
        checked += differential_check(
            resolved, program, entry, random.Random(555), runs=200
        )
    assert checked >= 800
    print("criterion 7: PASS — rollback, labeling, lookup, and "
          f"{checked} differential runs all agree")
