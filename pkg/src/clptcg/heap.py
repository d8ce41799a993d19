"""Run-time heap representation and heap builtins.

The heap is an ordinary term: a list of `loc(Ref, Cell)` locations whose
tail may be an unbound variable (the unknown part of a symbolic heap).
Cells are `object(Class, Fields)` with `Fields` a closed list of
`field('C':f, Value)` in declaration order (superclass fields first), or
`array(ElemType, Length, Elems)` where symbolic element lists may also
have an open tail.

Operations come in two modes.  Ground mode is deterministic: lookups are
by syntactic key equality and a missing key is a hard error.  Symbolic
mode is nondeterministic: a lookup on an unknown reference yields, in
order, the syntactically matching location if one exists, otherwise one
aliasing branch per variable-keyed known location (aliasing mode on
only), and finally a fresh lazily-allocated location at the open tail.

All multi-branch operations are generators that establish their bindings
before each yield and undo them on resumption, so a caller can explore
alternatives depth-first over a single store.
"""

from __future__ import annotations

from typing import Iterator, Optional

from .ir import ArrayType, ClassTable, FieldSig, TypeExpr
from .terms import (
    ArithConstraint,
    Atom,
    Compound,
    Int,
    NIL,
    NULL,
    Store,
    Term,
    Var,
    cons,
    is_cons,
    make_list,
    post_constraint,
    syntactic_eq,
    unify,
)

GROUND = "ground"
SYMBOLIC = "symbolic"


class DanglingReference(Exception):
    """A ground lookup did not find its key: the input state is broken."""


def loc(ref: Term, cell: Term) -> Compound:
    return Compound("loc", (ref, cell))


def object_cell(cls: Term, fields: Term) -> Compound:
    return Compound("object", (cls, fields))


def array_cell(elem_type: Term, length: Term, elems: Term) -> Compound:
    return Compound("array", (elem_type, length, elems))


def field_entry(fsig: FieldSig, value: Term) -> Compound:
    return Compound("field", (fsig.term(), value))


def type_term(t: TypeExpr) -> Term:
    if isinstance(t, ArrayType):
        return Compound("array_of", (type_term(t.elem),))
    return Atom(t)


def default_value(t: TypeExpr) -> Term:
    """Zero-initialization: ints and bools to 0, references to null."""
    if t in ("int", "bool"):
        return Int(0)
    return NULL


def heap_locations(h: Term, store: Store):
    """(known locations, tail) of a heap term under the current bindings."""
    out = []
    t = store.deref(h)
    while is_cons(t):
        entry = store.deref(t.args[0])
        out.append(entry)
        t = store.deref(t.args[1])
    return out, t


class HeapOps:
    def __init__(
        self,
        class_table: ClassTable,
        store: Store,
        mode: str = SYMBOLIC,
        alias: bool = False,
    ):
        self.table = class_table
        self.store = store
        self.mode = mode
        self.alias = alias

    # -- location lookup -------------------------------------------------

    def get_cell(self, h: Term, ref: Term) -> Iterator[tuple]:
        """Yield (key, cell) branches for the location of ref in h.

        The key is the location's own key term (after aliasing it is the
        same variable as ref); callers pass it to set_cell to rewrite the
        right location.
        """
        store = self.store
        ref = store.deref(ref)
        known, tail = heap_locations(h, store)

        # exact syntactic match is deterministic and preempts everything
        for entry in known:
            key = store.deref(entry.args[0])
            if syntactic_eq(key, ref, store):
                yield key, entry.args[1]
                return

        if self.mode == GROUND:
            raise DanglingReference(f"no location for reference {ref!r}")

        if self.alias and isinstance(ref, Var):
            for entry in known:
                key = store.deref(entry.args[0])
                if isinstance(key, Var):
                    m = store.mark()
                    if unify(ref, key, store):
                        yield key, entry.args[1]
                    store.undo_to(m)

        if isinstance(tail, Var):
            m = store.mark()
            cell = store.fresh()
            new_tail = store.fresh()
            if unify(tail, cons(loc(ref, cell), new_tail), store):
                yield ref, cell
            store.undo_to(m)

    def set_cell(self, h: Term, key: Term, new_cell: Term) -> Term:
        """The heap h with the location of key rewritten to new_cell.

        key must name a present location (callers obtain it from
        get_cell, which guarantees presence).
        """
        store = self.store
        t = store.deref(h)
        entries = []
        replaced = False
        while is_cons(t):
            entry = store.deref(t.args[0])
            k = store.deref(entry.args[0])
            if not replaced and syntactic_eq(k, key, store):
                entries.append(loc(entry.args[0], new_cell))
                replaced = True
            else:
                entries.append(entry)
            t = store.deref(t.args[1])
        if not replaced:
            raise DanglingReference(f"set_cell: no location for {key!r}")
        return make_list(entries, t)

    # -- cell refinement -------------------------------------------------

    def _as_object(self, cell: Term) -> Optional[tuple]:
        """Refine cell into object(Type, Fields); None if it is an array."""
        store = self.store
        c = store.deref(cell)
        if isinstance(c, Var):
            shape = object_cell(store.fresh(), store.fresh())
            unify(c, shape, store)
            c = store.deref(c)
        if isinstance(c, Compound) and c.functor == "object" and len(c.args) == 2:
            return c.args[0], c.args[1]
        return None

    def _as_array(self, cell: Term) -> Optional[tuple]:
        store = self.store
        c = store.deref(cell)
        if isinstance(c, Var):
            shape = array_cell(store.fresh(), store.fresh(), store.fresh())
            unify(c, shape, store)
            c = store.deref(c)
        if isinstance(c, Compound) and c.functor == "array" and len(c.args) == 3:
            return c.args[0], c.args[1], c.args[2]
        return None

    def instantiate_fields(self, fields: Term, cls: str) -> Optional[list]:
        """Ensure fields is the closed declared field list of cls.

        Returns the entries as (FieldSig, value Term) pairs, or None when
        the cell's field list cannot belong to cls.
        """
        store = self.store
        declared = self.table.declared_fields(cls)
        f = store.deref(fields)
        if isinstance(f, Var):
            entries = [field_entry(fs, store.fresh()) for fs, _t in declared]
            unify(f, make_list(entries), store)
            f = store.deref(f)
        out = []
        t = f
        for fs, _ty in declared:
            if not is_cons(t):
                return None
            entry = store.deref(t.args[0])
            if not (
                isinstance(entry, Compound)
                and entry.functor == "field"
                and len(entry.args) == 2
            ):
                return None
            if not syntactic_eq(entry.args[0], fs.term(), store):
                return None
            out.append((fs, entry.args[1]))
            t = store.deref(t.args[1])
        if t != NIL:
            return None
        return out

    # -- class hierarchy -------------------------------------------------

    def subclass(self, t: Term, cls: str) -> Iterator[None]:
        """Branches binding/checking t to be a subclass of cls.

        Ground t: a single branch iff t is cls or below it.  Unbound t:
        one branch per candidate, cls first, then its strict subclasses
        in declaration order.
        """
        store = self.store
        t = store.deref(t)
        if isinstance(t, Atom):
            if self.table.is_subclass(t.name, cls):
                yield None
            return
        if isinstance(t, Var):
            for cand in self.table.subclasses(cls):
                m = store.mark()
                if unify(t, Atom(cand), store):
                    yield None
                store.undo_to(m)

    # -- allocation ------------------------------------------------------

    def new_object(self, h: Term, cls: str, ref_out: Term, h_out: Term):
        """Allocate a new object with a concrete, never-reused reference."""
        store = self.store
        if cls not in self.table:
            raise KeyError(f"unknown class {cls!r}")
        ref = store.fresh_ref()
        entries = []
        for fs, ftype in self.table.declared_fields(cls):
            if self.mode == GROUND:
                entries.append(field_entry(fs, default_value(ftype)))
            else:
                entries.append(field_entry(fs, store.fresh()))
        cell = object_cell(Atom(cls), make_list(entries))
        m = store.mark()
        if unify(ref_out, ref, store) and unify(h_out, cons(loc(ref, cell), h), store):
            yield None
        store.undo_to(m)

    def new_array(self, h: Term, elem_type: Term, length: Term, ref_out: Term, h_out: Term):
        store = self.store
        n = store.deref(length)
        ref = store.fresh_ref()
        if isinstance(n, Int):
            if n.value < 0:
                return
            if self.mode == GROUND:
                et = store.deref(elem_type)
                default = Int(0) if et == Atom("int") or et == Atom("bool") else NULL
                elems: Term = make_list([default] * n.value)
            else:
                elems = make_list([store.fresh() for _ in range(n.value)])
            cell = array_cell(elem_type, n, elems)
        else:
            if self.mode == GROUND:
                return
            m0 = store.mark()
            if not post_constraint(ArithConstraint("#>=", n, Int(0)), store):
                store.undo_to(m0)
                return
            cell = array_cell(elem_type, n, store.fresh())
        m = store.mark()
        if unify(ref_out, ref, store) and unify(h_out, cons(loc(ref, cell), h), store):
            yield None
        store.undo_to(m)

    # -- field access ----------------------------------------------------

    def get_field(self, h: Term, ref: Term, fsig: FieldSig, out: Term):
        store = self.store
        for _key, cell in self.get_cell(h, ref):
            m_branch = store.mark()
            ob = self._as_object(cell)
            if ob is not None:
                t, fields = ob
                for _ in self.subclass(t, fsig.cls):
                    m_cls = store.mark()
                    cls = store.deref(t)
                    entries = self.instantiate_fields(fields, cls.name)
                    if entries is not None:
                        value = None
                        for fs, v in entries:
                            if fs == fsig:
                                value = v
                                break
                        # a missing field kills this dynamic-type branch
                        if value is not None and unify(out, value, store):
                            yield None
                    store.undo_to(m_cls)
            store.undo_to(m_branch)

    def set_field(self, h: Term, ref: Term, fsig: FieldSig, value: Term, h_out: Term):
        store = self.store
        for key, cell in self.get_cell(h, ref):
            m_branch = store.mark()
            ob = self._as_object(cell)
            if ob is not None:
                t, fields = ob
                for _ in self.subclass(t, fsig.cls):
                    m_cls = store.mark()
                    cls = store.deref(t)
                    entries = self.instantiate_fields(fields, cls.name)
                    if entries is not None and any(fs == fsig for fs, _v in entries):
                        new_fields = make_list(
                            [
                                field_entry(fs, value if fs == fsig else v)
                                for fs, v in entries
                            ]
                        )
                        new_heap = self.set_cell(h, key, object_cell(t, new_fields))
                        if unify(h_out, new_heap, store):
                            yield None
                    store.undo_to(m_cls)
            store.undo_to(m_branch)

    # -- arrays ----------------------------------------------------------

    def length_of(self, h: Term, ref: Term, out: Term):
        store = self.store
        for _key, cell in self.get_cell(h, ref):
            m_branch = store.mark()
            arr = self._as_array(cell)
            if arr is not None:
                _t, length, _elems = arr
                ok = unify(out, length, store)
                if ok and self.mode == SYMBOLIC and isinstance(store.deref(out), Var):
                    ok = post_constraint(ArithConstraint("#>=", out, Int(0)), store)
                if ok:
                    yield None
            store.undo_to(m_branch)

    def _elem_at(self, elems: Term, index: int, length: Term) -> Optional[Term]:
        """The element term at index, lazily extending an open tail.

        Extension posts Length #> index so a too-short array cannot be
        grounded later.  Returns None when the position cannot exist.
        """
        store = self.store
        t = store.deref(elems)
        i = 0
        while True:
            if is_cons(t):
                if i == index:
                    return t.args[0]
                t = store.deref(t.args[1])
                i += 1
                continue
            if t == NIL:
                return None
            if isinstance(t, Var):
                if self.mode == GROUND:
                    return None
                fresh = [store.fresh() for _ in range(index - i + 1)]
                new_tail = store.fresh()
                if not unify(t, make_list(fresh, new_tail), store):
                    return None
                if not post_constraint(
                    ArithConstraint("#>", length, Int(index)), store
                ):
                    return None
                return fresh[-1]
            return None

    def _index_branches(self, idx: Term, length: Term) -> Iterator[int]:
        """Concrete candidate positions for an array index."""
        store = self.store
        i = store.deref(idx)
        if isinstance(i, Int):
            if i.value >= 0:
                yield i.value
            return
        if self.mode == GROUND:
            return
        lo, hi = store.domain_bounds
        for k in range(0, max(hi, 0) + 1):
            m = store.mark()
            if post_constraint(
                ArithConstraint("#=", i, Int(k)), store
            ) and post_constraint(ArithConstraint("#>", length, Int(k)), store):
                yield k
            store.undo_to(m)

    def get_array(self, h: Term, ref: Term, idx: Term, out: Term):
        store = self.store
        for _key, cell in self.get_cell(h, ref):
            m_branch = store.mark()
            arr = self._as_array(cell)
            if arr is not None:
                _t, length, elems = arr
                for k in self._index_branches(idx, length):
                    m = store.mark()
                    v = self._elem_at(elems, k, length)
                    if v is not None and unify(out, v, store):
                        yield None
                    store.undo_to(m)
            store.undo_to(m_branch)

    def set_array(self, h: Term, ref: Term, idx: Term, value: Term, h_out: Term):
        store = self.store
        for key, cell in self.get_cell(h, ref):
            m_branch = store.mark()
            arr = self._as_array(cell)
            if arr is not None:
                t, length, elems = arr
                for k in self._index_branches(idx, length):
                    m = store.mark()
                    if self._elem_at(elems, k, length) is None:
                        store.undo_to(m)
                        continue
                    entries, tail = [], store.deref(elems)
                    while is_cons(tail):
                        entries.append(tail.args[0])
                        tail = store.deref(tail.args[1])
                    entries[k] = value
                    new_cell = array_cell(t, length, make_list(entries, tail))
                    new_heap = self.set_cell(h, key, new_cell)
                    if unify(h_out, new_heap, store):
                        yield None
                    store.undo_to(m)
            store.undo_to(m_branch)

    # -- type guard ------------------------------------------------------

    def type_guard(self, h: Term, ref: Term, cls: str):
        store = self.store
        for _key, cell in self.get_cell(h, ref):
            m_branch = store.mark()
            ob = self._as_object(cell)
            if ob is not None:
                t, _fields = ob
                if unify(t, Atom(cls), store):
                    yield None
            store.undo_to(m_branch)
