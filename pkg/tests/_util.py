"""Shared helpers for the test suite: random ground inputs for the
source-language fixtures, a differential runner comparing the reference
interpreter against ground clause execution, and a transliteration of
the membership-style location-lookup enumeration used as a reference
in the heap properties."""

from __future__ import annotations

import copy
import random
from pathlib import Path

from clptcg.engine import Engine, LitItem
from clptcg.heap import GROUND, array_cell, loc, object_cell, field_entry, type_term
from clptcg.ir import INT, BOOL, VOID, ArrayType, CallLit
from clptcg.minioo import lower_program, parse_source
from clptcg.minioo.interp import Arr, Heap, Interp, MooStuck, Obj, Ref
from clptcg.harness import ground_heap_cells, heap_signature
from clptcg.terms import (
    Int,
    NULL,
    Store,
    Var,
    cons,
    is_cons,
    is_ref,
    make_list,
    ref,
    syntactic_eq,
    unify,
)

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture(name: str):
    """(Resolved source, lowered Program) for tests/fixtures/<name>."""
    resolved = parse_source((FIXTURES / name).read_text())
    return resolved, lower_program(resolved)


# ---------------------------------------------------------------------------
# random ground inputs
# ---------------------------------------------------------------------------


class InputBuilder:
    """Random acyclic inputs for an entry's parameter types.

    Objects only reference previously created objects (or null), so the
    generated heaps are always acyclic and every traversal terminates.
    """

    def __init__(self, rng: random.Random, table, max_objects: int = 6):
        self.rng = rng
        self.table = table
        self.max_objects = max_objects
        self.heap = Heap()
        self.by_class: dict = {}

    def value(self, typ):
        if typ == INT:
            return self.rng.randint(-4, 4)
        if typ == BOOL:
            return self.rng.randint(0, 1)
        if isinstance(typ, ArrayType):
            if self.rng.random() < 0.2:
                return None
            n = self.rng.randint(0, 3)
            return self.heap.alloc(
                Arr(typ.elem, [self.value(typ.elem) for _ in range(n)])
            )
        return self.reference(typ)

    def reference(self, cls: str):
        roll = self.rng.random()
        candidates = [
            r
            for c in self.table.subclasses(cls)
            for r in self.by_class.get(c, [])
        ]
        if roll < 0.25 or (roll < 0.5 and not candidates):
            return None
        if roll < 0.5 or len(self.heap.cells) >= self.max_objects:
            return self.rng.choice(candidates) if candidates else None
        dyn = self.rng.choice(self.table.subclasses(cls))
        fields = {
            fs: self.value(t) for fs, t in self.table.declared_fields(dyn)
        }
        r = self.heap.alloc(Obj(dyn, fields))
        self.by_class.setdefault(dyn, []).append(r)
        return r


def random_input(rng: random.Random, table, entry):
    """(interp heap, this ref, arg values) — this is always non-null."""
    b = InputBuilder(rng, table)
    this = None
    while this is None:
        this = b.reference(entry.param_types[0])
    args = [b.value(t) for t in entry.param_types[1:]]
    return b.heap, this, args


# ---------------------------------------------------------------------------
# interp heap <-> heap term
# ---------------------------------------------------------------------------


def _to_term_value(v):
    if v is None:
        return NULL
    if isinstance(v, Ref):
        return ref(Int(-v.loc))  # negative: never collides with replay allocs
    return Int(v)


def interp_heap_to_term(heap: Heap, table):
    entries = []
    for k, cell in sorted(heap.cells.items()):
        if isinstance(cell, Obj):
            fes = [
                field_entry(fs, _to_term_value(cell.fields[fs]))
                for fs, _t in table.declared_fields(cell.cls)
            ]
            c = object_cell_term(cell.cls, fes)
        else:
            c = array_cell(
                type_term(cell.elem_type),
                Int(len(cell.elems)),
                make_list([_to_term_value(e) for e in cell.elems]),
            )
        entries.append(loc(Int(-k), c))
    return make_list(entries)


def object_cell_term(cls: str, field_entries):
    from clptcg.terms import Atom

    return object_cell(Atom(cls), make_list(field_entries))


def interp_heap_cells(heap: Heap, table) -> dict:
    return ground_heap_cells(interp_heap_to_term(heap, table))


# ---------------------------------------------------------------------------
# differential runner
# ---------------------------------------------------------------------------


def differential_check(resolved, program, entry_name: str, rng, runs: int = 200):
    """Run random inputs through both semantics; return the checked count.

    Raises AssertionError on the first divergence.  Inputs on which the
    reference interpreter is stuck (no defined outcome) are skipped and
    do not count towards runs.
    """
    entry = program.entries[entry_name]
    cls, method = entry_name.split(".")
    table = program.class_table
    interp = Interp(resolved)
    done = 0
    attempts = 0
    while done < runs:
        attempts += 1
        assert attempts < runs * 20, "too many stuck inputs"
        heap, this, args = random_input(rng, table, entry)
        ref_heap = copy.deepcopy(heap)
        try:
            expected = interp.run_method(ref_heap, this, method, args)
        except MooStuck:
            continue

        store = Store()
        h_in = interp_heap_to_term(heap, table)
        args_in = tuple([_to_term_value(this)] + [_to_term_value(a) for a in args])
        arity_out = 0 if entry.ret_type == VOID else 1
        call = CallLit(
            entry.pred,
            args_in,
            tuple(store.fresh() for _ in range(arity_out)),
            h_in,
            store.fresh(),
            store.fresh(),
        )
        eng = Engine(program, store, mode=GROUND)
        run = eng.run_ground((LitItem(call, None),))
        assert len(run.solutions) == 1, (
            f"{entry_name}: expected one ground derivation, got "
            f"{len(run.solutions)} for {args_in} heap {h_in}"
        )
        _trace, _executed, (args_out, h_out, exflag) = run.solutions[0]

        kind, payload = expected
        if kind == "exc":
            assert is_exc_term(exflag), (
                f"{entry_name}: interpreter threw {payload}, clauses returned ok"
            )
            got_cls = exception_class_of(exflag, h_out)
            assert got_cls == payload, f"{entry_name}: {got_cls} != {payload}"
        else:
            assert not is_exc_term(exflag), (
                f"{entry_name}: clauses threw, interpreter returned {payload}"
            )
            want_roots = list(args_in) + [_to_term_value(payload)] if arity_out else list(args_in)
            got_roots = list(args_in) + list(args_out) if arity_out else list(args_in)
            want = heap_signature(interp_heap_cells(ref_heap, table), want_roots)
            got = heap_signature(ground_heap_cells(h_out), got_roots)
            assert want == got, f"{entry_name}: output state diverges"
        done += 1
    return done


def is_exc_term(t):
    from clptcg.terms import is_exc

    return is_exc(t)


def exception_class_of(exflag, h_out):
    from clptcg.harness import _exception_class

    return _exception_class(exflag, h_out)


# ---------------------------------------------------------------------------
# reference location lookup (membership-style enumeration)
# ---------------------------------------------------------------------------


def reference_get_cell_outcomes(h, target, store: Store, alias: bool) -> set:
    """Branch outcomes of the clause-by-clause lookup definition.

    Walks the location list: try unifying the target with each key (with
    aliasing off only syntactic matches), skip past keys that are not
    identical to the target, and allocate at an open tail.  Outcomes are
    canonical: ("loc", index) or "fresh".
    """
    out: set = set()

    def go(t, idx):
        t = store.deref(t)
        if is_cons(t):
            entry = store.deref(t.args[0])
            key = store.deref(entry.args[0])
            tgt = store.deref(target)
            if syntactic_eq(key, tgt, store):
                out.add(("loc", idx))
                return  # the disequality guard on the skip clause fails
            # aliasing only unifies a symbolic (variable) reference with
            # variable-keyed locations; concrete locations never alias
            if alias and isinstance(tgt, Var) and isinstance(key, Var):
                m = store.mark()
                if unify(tgt, key, store):
                    out.add(("loc", idx))
                store.undo_to(m)
            go(t.args[1], idx + 1)
        elif isinstance(t, Var):
            out.add("fresh")

    go(h, 0)
    return out


def _known_count(h, store: Store) -> int:
    n = 0
    t = store.deref(h)
    while is_cons(t):
        n += 1
        t = store.deref(t.args[1])
    return n


def engine_get_cell_outcomes(heap_ops, h, target, store: Store) -> set:
    """Branch outcomes of the production lookup, canonicalized the same way."""
    out: set = set()
    n_known = _known_count(h, store)
    for key, _cell in heap_ops.get_cell(h, target):
        t = store.deref(h)
        idx = None
        i = 0
        while is_cons(t) and i < n_known:
            entry = store.deref(t.args[0])
            if idx is None and syntactic_eq(
                store.deref(entry.args[0]), store.deref(key), store
            ):
                idx = i
            t = store.deref(t.args[1])
            i += 1
        out.add("fresh" if idx is None else ("loc", idx))
    return out
