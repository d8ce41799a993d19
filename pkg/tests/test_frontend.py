"""Source-to-clause compiler: structural output checks and differential
testing against the reference interpreter."""

import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))
from _util import FIXTURES, differential_check, load_fixture

from clptcg.ir import (
    ArithGuard,
    CallLit,
    RefNeqGuard,
    TypeGuardLit,
    parse_ir,
    validate,
)
from clptcg.minioo import SourceError, compile_source, parse_source


def _clause_shape(clause):
    if clause.guard is None:
        guard = None
    elif isinstance(clause.guard, ArithGuard):
        guard = clause.guard.op
    elif isinstance(clause.guard, RefNeqGuard):
        guard = "\\=="
    else:
        guard = f"type:{clause.guard.cls}"
    body = tuple(
        ("call", lit.pred) if isinstance(lit, CallLit) else (type(lit).__name__,)
        for lit in clause.body
    )
    return guard, body


def _program_shape(program):
    return {
        name: [_clause_shape(c) for c in pred.clauses]
        for name, pred in program.predicates.items()
    }


def test_merge_compiles_to_the_expected_block_structure():
    compiled = compile_source((FIXTURES / "merge.moo").read_text())
    golden = parse_ir((FIXTURES / "merge_golden.ir").read_text())
    assert set(compiled.predicates) == {
        "merge",
        "nullcheck1",
        "nullcheck2",
        "nullcheck3",
        "if1",
        "preloop",
        "loop",
        "loopcond1",
        "loopcond2",
        "loopbody1",
        "if2",
        "loopbody2",
        "if3",
    }
    assert _program_shape(compiled) == _program_shape(golden)
    assert set(compiled.entries) == {"SortedList.merge"}


def test_compiled_fixtures_validate():
    for name in ("merge.moo", "arrays.moo", "dispatch.moo", "recsum.moo"):
        program = compile_source((FIXTURES / name).read_text())
        assert validate(program) == [], name


def test_null_checks_are_elided_when_provably_redundant():
    """curr = first after first was dereferenced needs no null check, so
    merge has exactly three null-check blocks."""
    compiled = compile_source((FIXTURES / "merge.moo").read_text())
    checks = [p for p in compiled.predicates if p.startswith("nullcheck")]
    assert sorted(checks) == ["nullcheck1", "nullcheck2", "nullcheck3"]


def test_dispatch_emits_type_guarded_clauses():
    program = compile_source((FIXTURES / "dispatch.moo").read_text())
    dispatch = next(
        p for name, p in program.predicates.items() if name.startswith("dispatch")
    )
    guards = [c.guard for c in dispatch.clauses if isinstance(c.guard, TypeGuardLit)]
    classes = {g.cls for g in guards}
    assert classes == {"A", "B", "C"}
    targets = {
        lit.pred
        for c in dispatch.clauses
        for lit in c.body
        if isinstance(lit, CallLit) and lit.pred in ("A.p", "B.p", "C.p")
    }
    assert targets == {"A.p", "B.p", "C.p"}


@pytest.mark.parametrize(
    "source",
    [
        # && outside a loop condition
        "class C { int m(int a) { if (a > 0 && a < 5) return 1; return 0; } }",
        # reference equality between two references
        "class C { C f; int m(C a) { if (a == this.f) return 1; return 0; } }",
        # unknown variable
        "class C { int m() { return x; } }",
        # unknown field
        "class C { int m() { return this.nope; } }",
        # int/reference mix
        "class C { C f; int m() { return this.f + 1; } }",
    ],
)
def test_source_diagnostics(source):
    with pytest.raises(SourceError):
        compile_source(source)


def test_interpreter_smoke():
    from clptcg.minioo.interp import Heap, Interp, Obj

    resolved = parse_source((FIXTURES / "recsum.moo").read_text())
    interp = Interp(resolved)
    heap = Heap()
    this = heap.alloc(Obj("Rec", {}))
    assert interp.run_method(heap, this, "sum", [4]) == ("ok", 10)
    assert interp.run_method(heap, this, "sum", [-3]) == ("ok", 0)
    assert interp.run_method(heap, None, "sum", [1]) == ("exc", "NPE")


@pytest.mark.parametrize(
    "fixture,entry",
    [
        ("merge.moo", "SortedList.merge"),
        ("arrays.moo", "Summer.upto"),
        ("dispatch.moo", "Driver.m"),
        ("recsum.moo", "Rec.sum"),
    ],
)
def test_differential_interpreter_vs_ground_clauses(fixture, entry):
    """200+ random inputs per fixture: the tree-walking interpreter and
    ground clause execution must agree on outcome and final state."""
    resolved, program = load_fixture(fixture)
    n = differential_check(resolved, program, entry, random.Random(2024), runs=200)
    assert n >= 200
