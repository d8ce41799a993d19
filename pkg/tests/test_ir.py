"""Clause-form text syntax: parse/print round trips, structural
equality up to renaming, and the validity checker."""

from pathlib import Path

import pytest

from clptcg.ir import (
    ArithGuard,
    CallLit,
    GetFieldLit,
    IrSyntaxError,
    parse_ir,
    print_program,
    programs_equal,
    validate,
)

FIXTURES = Path(__file__).parent / "fixtures"

SMALL = """
:- class('Node', [v: int, next: 'Node']).
:- entry('Node.sum', sum, [this: 'Node'], int).

sum([r(Th)],[S],H,H_2,EF) :-
        get_field(H,Th,'Node':v,V),
        step([r(Th),V],[S],H,H_2,EF).

step([r(Th),V],[V],H,H,ok) :-
        V #>= 0.
step([r(Th),V],[Z],H,H,ok) :-
        V #< 0,
        Z #= 0 - V.
"""


def test_parse_and_print_round_trip():
    p1 = parse_ir(SMALL)
    text = print_program(p1)
    p2 = parse_ir(text)
    assert programs_equal(p1, p2)


def test_round_trip_on_compiled_fixture():
    text = (FIXTURES / "merge_golden.ir").read_text()
    p1 = parse_ir(text)
    p2 = parse_ir(print_program(p1))
    assert programs_equal(p1, p2)


def test_parsed_shapes():
    p = parse_ir(SMALL)
    assert set(p.predicates) == {"sum", "step"}
    sum_cl = p.predicates["sum"].clauses[0]
    assert sum_cl.guard is None
    assert isinstance(sum_cl.body[0], GetFieldLit)
    assert isinstance(sum_cl.body[1], CallLit)
    step = p.predicates["step"]
    assert isinstance(step.clauses[0].guard, ArithGuard)
    assert step.clauses[0].guard.op == "#>="
    assert p.entries["Node.sum"].pred == "sum"
    assert p.class_table.find_field("Node", "v").cls == "Node"


def test_equality_is_modulo_renaming():
    renamed = SMALL.replace("Th", "Self").replace("V", "W")
    assert programs_equal(parse_ir(SMALL), parse_ir(renamed))
    changed = SMALL.replace("V #>= 0", "V #> 0")
    assert not programs_equal(parse_ir(SMALL), parse_ir(changed))


def test_validate_accepts_well_formed_program():
    assert validate(parse_ir(SMALL)) == []


def test_validate_flags_unknown_predicate():
    bad = SMALL.replace("step([r(Th),V],[S],H,H_2,EF)", "missing([r(Th),V],[S],H,H_2,EF)", 1)
    issues = validate(parse_ir(bad))
    assert any("missing" in str(i) for i in issues)


def test_validate_flags_overlapping_clauses():
    text = """
p([X],[X],H,H,ok).
p([Y],[Y],H,H,ok).
"""
    issues = validate(parse_ir(text))
    assert any("overlap" in str(i) for i in issues)


def test_syntax_error_reported():
    with pytest.raises(IrSyntaxError):
        parse_ir("p([X],[X],H,H,ok) :- .")


def test_compiled_fixture_validates_cleanly():
    assert validate(parse_ir((FIXTURES / "merge_golden.ir").read_text())) == []
