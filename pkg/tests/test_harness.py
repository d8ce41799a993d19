"""Harness: preconditions, heap properties, grounding, the replay
oracle, coverage accounting, and suite serialization."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))
from _util import FIXTURES, load_fixture

from clptcg.harness import (
    HarnessError,
    acyclic,
    format_text_report,
    generate_suite,
    ground_heap_cells,
    heap_signature,
    measure_coverage,
    noshare,
    parse_precondition,
    replay_ground,
    suite_to_json,
)
from clptcg.heap import field_entry, object_cell
from clptcg.ir import FieldSig
from clptcg.terms import Atom, Compound, Int, NULL, OK, make_list, ref


def node(v, nxt):
    return object_cell(
        Atom("SLNode"),
        make_list(
            [
                field_entry(FieldSig("SLNode", "data"), Int(v)),
                field_entry(FieldSig("SLNode", "next"), nxt),
            ]
        ),
    )


# -- preconditions ----------------------------------------------------------


def test_parse_precondition():
    pre = parse_precondition(
        """
        % lists are distinct and disjoint
        this != l
        n >= 2
        noshare(this, l)
        acyclic(this)
        """
    )
    assert pre.level1 == (("cmp", "!=", "this", "l"), ("cmp", ">=", "n", 2))
    assert pre.level2 == (("noshare", "this", "l"), ("acyclic", "this"))


@pytest.mark.parametrize(
    "text", ["noshare(a)", "acyclic(a, b)", "a ~ b", "this <"]
)
def test_parse_precondition_rejects_garbage(text):
    with pytest.raises(HarnessError):
        parse_precondition(text)


def test_precondition_unknown_name_is_an_error():
    _resolved, program = load_fixture("merge.moo")
    with pytest.raises(HarnessError):
        generate_suite(
            program,
            "SortedList.merge",
            "block-k:2",
            precondition=parse_precondition("bogus != l"),
        )


# -- ground heap properties -------------------------------------------------


def test_noshare():
    cells = {1: node(0, ref(Int(2))), 2: node(1, NULL), 3: node(2, NULL)}
    assert noshare(cells, ref(Int(1)), ref(Int(3)))
    assert not noshare(cells, ref(Int(1)), ref(Int(2)))
    assert not noshare(cells, ref(Int(1)), ref(Int(1)))
    assert noshare(cells, NULL, ref(Int(1)))


def test_acyclic():
    cells = {
        1: node(0, ref(Int(2))),
        2: node(1, NULL),
        3: node(2, ref(Int(3))),  # self loop
        4: node(3, ref(Int(3))),
    }
    assert acyclic(cells, ref(Int(1)))
    assert not acyclic(cells, ref(Int(3)))
    assert not acyclic(cells, ref(Int(4)))
    assert acyclic(cells, NULL)
    assert acyclic(cells, ref(Int(99)))  # dangling: nothing to traverse


def test_heap_signature_is_renaming_invariant_but_sharing_sensitive():
    a = {1: node(5, ref(Int(2))), 2: node(6, NULL)}
    b = {7: node(5, ref(Int(3))), 3: node(6, NULL)}
    assert heap_signature(a, [ref(Int(1))]) == heap_signature(b, [ref(Int(7))])
    shared = {1: node(5, ref(Int(2))), 2: node(6, NULL)}
    assert heap_signature(shared, [ref(Int(1)), ref(Int(2))]) != heap_signature(
        shared, [ref(Int(1)), ref(Int(1))]
    )
    cyc = {1: node(5, ref(Int(1)))}
    assert heap_signature(cyc, [ref(Int(1))]) != heap_signature(
        a, [ref(Int(1))]
    )


# -- grounding and replay ---------------------------------------------------


def _merge_suite(**kw):
    _resolved, program = load_fixture("merge.moo")
    return program, generate_suite(program, "SortedList.merge", "block-k:2", **kw)


def test_generated_cases_are_ground_and_serializable():
    program, suite = _merge_suite()
    doc = suite_to_json(suite)
    assert doc["schema"] == 1
    assert doc["entry"] == "SortedList.merge"
    assert len(doc["cases"]) == len(suite.cases) == 9
    for case in doc["cases"]:
        assert set(case) == {"id", "input", "output", "exflag", "trace"}
        if case["exflag"].startswith("exc"):
            assert case["output"] is None
        else:
            assert case["output"] is not None


def test_replay_oracle_detects_corrupted_output():
    program, suite = _merge_suite()
    tc = next(c for c in suite.cases if c.exflag == OK)
    assert replay_ground(tc, program).ok

    def bump_data(t):
        if (
            isinstance(t, Compound)
            and t.functor == "field"
            and t.args[0] == FieldSig("SLNode", "data").term()
        ):
            return Compound("field", (t.args[0], Int(t.args[1].value + 1)))
        if isinstance(t, Compound):
            return Compound(t.functor, tuple(bump_data(a) for a in t.args))
        return t

    tc.h_out = bump_data(tc.h_out)
    res = replay_ground(tc, program)
    assert not res.ok and "output state" in res.detail


def test_replay_oracle_detects_corrupted_trace():
    program, suite = _merge_suite()
    tc = suite.cases[0]
    tc.trace = tc.trace[:-1]
    res = replay_ground(tc, program)
    assert not res.ok and "trace" in res.detail


def test_replay_oracle_detects_wrong_exception_class():
    program, suite = _merge_suite()
    tc = next(c for c in suite.cases if c.exc_class == "NPE")
    tc.exc_class = "OOB"
    res = replay_ground(tc, program)
    assert not res.ok


def test_out_of_bounds_constraints_make_cases_ungroundable():
    """n < -10 is satisfiable over the integers, so the symbolic path
    survives, but labeling within [-8, 8] must fail."""
    _resolved, program = load_fixture("recsum.moo")
    suite = generate_suite(
        program,
        "Rec.sum",
        "block-k:2",
        bounds=(-8, 8),
        precondition=parse_precondition("n < -10"),
    )
    assert suite.cases == []
    assert suite.ungroundable > 0


def test_noshare_precondition_discards_sharing_cases_only():
    _resolved, program = load_fixture("merge.moo")
    plain = generate_suite(program, "SortedList.merge", "block-k:2", aliasing=True)
    pre = parse_precondition((FIXTURES / "merge_noalias.pre").read_text())
    filtered = generate_suite(
        program, "SortedList.merge", "block-k:2", aliasing=True, precondition=pre
    )
    assert len(filtered.cases) < len(plain.cases)
    # soundness: every kept case really is reference-disjoint
    for tc in filtered.cases:
        cells = ground_heap_cells(tc.h_in)
        assert noshare(cells, tc.args_in[0], tc.args_in[1])


# -- coverage ---------------------------------------------------------------


def test_coverage_of_empty_suite_is_zero():
    _resolved, program = load_fixture("merge.moo")
    report = measure_coverage([], program, "merge")
    assert report.exercised == 0 and report.percent == 0.0


def test_coverage_is_monotone_in_the_suite():
    program, suite = _merge_suite()
    executed = [replay_ground(tc, program).executed for tc in suite.cases]
    last = 0.0
    for i in range(len(executed) + 1):
        pct = measure_coverage(executed[:i], program, "merge").percent
        assert pct >= last
        last = pct
    assert last == 100.0


# -- reporting --------------------------------------------------------------


def test_text_report_layout():
    program, suite = _merge_suite()
    text = format_text_report(suite, program.entries["SortedList.merge"])
    lines = text.splitlines()
    assert "Input" in lines[2] and "Output" in lines[2] and "EF" in lines[2]
    assert sum(1 for l in lines if l.lstrip()[:1].isdigit()) == 9
    assert "coverage" in text
