"""Concrete reference interpreter for the mini object-oriented language.

Executes a resolved source program directly on a mutable heap, with the
same observable semantics as the compiled clause form: truncating
integer division, `NPE`/`OOB` exceptions, left-to-right evaluation,
short-circuit `&&`, and virtual dispatch on the dynamic class.  Used to
cross-check the compiler: running the clause program in ground mode on
the same inputs must produce the same outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..ir import VOID, is_ref_type
from ..terms import int_div, int_mod
from .parser import Resolved
from . import ast as A

NPE_CLASS = "NPE"
OOB_CLASS = "OOB"


class MooError(Exception):
    """A runtime exception carrying the exception class name."""

    def __init__(self, cls: str):
        super().__init__(cls)
        self.cls = cls


class MooStuck(Exception):
    """Execution has no defined outcome (division by zero, negative
    array length, or exhausted step budget); the clause program has no
    derivation for such inputs."""


@dataclass(frozen=True)
class Ref:
    loc: int


@dataclass
class Obj:
    cls: str
    fields: dict  # FieldSig -> value


@dataclass
class Arr:
    elem_type: object
    elems: list


@dataclass
class Heap:
    cells: dict = field(default_factory=dict)
    _next: int = 1

    def alloc(self, cell) -> Ref:
        while self._next in self.cells:
            self._next += 1
        loc = self._next
        self.cells[loc] = cell
        self._next += 1
        return Ref(loc)

    def put(self, loc: int, cell) -> None:
        self.cells[loc] = cell

    def cell(self, ref: Ref):
        return self.cells[ref.loc]


def default_value(t):
    return None if is_ref_type(t) else 0


class _Return(Exception):
    def __init__(self, value):
        self.value = value


class Interp:
    def __init__(self, resolved: Resolved, max_steps: int = 200_000):
        self.res = resolved
        self.table = resolved.table
        self.max_steps = max_steps
        self.steps = 0

    # -- entry points ---------------------------------------------------

    def run_method(self, heap: Heap, this, method: str, args: list):
        """Dispatch and run; ("ok", value) or ("exc", exception class)."""
        self.steps = 0
        try:
            if this is None:
                raise MooError(NPE_CLASS)
            value = self._invoke(heap, this, method, args)
        except MooError as e:
            return ("exc", e.cls)
        return ("ok", value)

    # -- machinery ------------------------------------------------------

    def _tick(self) -> None:
        self.steps += 1
        if self.steps > self.max_steps:
            raise MooStuck("step budget exhausted")

    def _invoke(self, heap: Heap, this: Ref, method: str, args: list):
        cell = heap.cell(this)
        if not isinstance(cell, Obj):
            raise MooStuck("method call on an array reference")
        m = self.res.resolve_method(cell.cls, method)
        if m is None:
            raise MooStuck(f"no method {method!r} on {cell.cls!r}")
        env = {"this": this}
        for (pname, _ptype), v in zip(m.params, args):
            env[pname] = v
        for s in _collect_locals(m.body):
            for n in s.names:
                env[n] = default_value(s.typ)
        try:
            self.exec_stmts(heap, env, m.body)
        except _Return as r:
            return r.value
        return None if m.ret_type == VOID else default_value(m.ret_type)

    def exec_stmts(self, heap: Heap, env: dict, stmts: list) -> None:
        for s in stmts:
            self.exec_stmt(heap, env, s)

    def exec_stmt(self, heap: Heap, env: dict, s: A.Stmt) -> None:
        self._tick()
        if isinstance(s, A.LocalDecl):
            return
        if isinstance(s, A.Assign):
            self.exec_assign(heap, env, s)
            return
        if isinstance(s, A.Return):
            raise _Return(
                self.eval(heap, env, s.expr) if s.expr is not None else None
            )
        if isinstance(s, A.ExprStmt):
            self.eval(heap, env, s.expr)
            return
        if isinstance(s, A.If):
            if self.eval_cond(heap, env, s.cond):
                self.exec_stmts(heap, env, s.then_body)
            else:
                self.exec_stmts(heap, env, s.else_body)
            return
        if isinstance(s, A.While):
            while self.eval_cond(heap, env, s.cond):
                self._tick()
                self.exec_stmts(heap, env, s.body)
            return
        raise TypeError(s)  # pragma: no cover

    def exec_assign(self, heap: Heap, env: dict, s: A.Assign) -> None:
        t = s.target
        if isinstance(t, A.VarRef):
            env[t.name] = self.eval(heap, env, s.expr)
            return
        if isinstance(t, A.FieldRead):
            obj = self._deref_obj(heap, self.eval(heap, env, t.obj))
            value = self.eval(heap, env, s.expr)
            fsig = self.table.find_field(t.obj.typ, t.field_name)
            obj.fields[fsig] = value
            return
        if isinstance(t, A.ArrayRead):
            arr = self._deref_arr(heap, self.eval(heap, env, t.arr))
            idx = self.eval(heap, env, t.index)
            value = self.eval(heap, env, s.expr)
            self._bounds(arr, idx)
            arr.elems[idx] = value
            return
        raise TypeError(t)  # pragma: no cover

    # -- conditions -----------------------------------------------------

    def eval_cond(self, heap: Heap, env: dict, c: A.Cond) -> bool:
        if isinstance(c, A.And):
            return self.eval_cond(heap, env, c.lhs) and self.eval_cond(
                heap, env, c.rhs
            )
        if isinstance(c, A.Cmp):
            if isinstance(c.lhs, A.NullLit) or isinstance(c.rhs, A.NullLit):
                operand = c.rhs if isinstance(c.lhs, A.NullLit) else c.lhs
                v = self.eval(heap, env, operand)
                return (v is None) if c.op == "==" else (v is not None)
            a = self.eval(heap, env, c.lhs)
            b = self.eval(heap, env, c.rhs)
            return {
                "<": a < b,
                "<=": a <= b,
                ">": a > b,
                ">=": a >= b,
                "==": a == b,
                "!=": a != b,
            }[c.op]
        if isinstance(c, A.BoolCond):
            return self.eval(heap, env, c.expr) != 0
        raise TypeError(c)  # pragma: no cover

    # -- expressions ----------------------------------------------------

    def eval(self, heap: Heap, env: dict, e: A.Expr):
        self._tick()
        if isinstance(e, A.IntLit):
            return e.value
        if isinstance(e, A.BoolLit):
            return 1 if e.value else 0
        if isinstance(e, A.NullLit):
            return None
        if isinstance(e, A.This):
            return env["this"]
        if isinstance(e, A.VarRef):
            return env[e.name]
        if isinstance(e, A.FieldRead):
            obj = self._deref_obj(heap, self.eval(heap, env, e.obj))
            fsig = self.table.find_field(e.obj.typ, e.field_name)
            return obj.fields[fsig]
        if isinstance(e, A.ArrayLen):
            arr = self._deref_arr(heap, self.eval(heap, env, e.arr))
            return len(arr.elems)
        if isinstance(e, A.ArrayRead):
            arr = self._deref_arr(heap, self.eval(heap, env, e.arr))
            idx = self.eval(heap, env, e.index)
            self._bounds(arr, idx)
            return arr.elems[idx]
        if isinstance(e, A.BinOp):
            a = self.eval(heap, env, e.lhs)
            b = self.eval(heap, env, e.rhs)
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "*":
                return a * b
            if b == 0:
                raise MooStuck("division by zero")
            return int_div(a, b) if e.op == "/" else int_mod(a, b)
        if isinstance(e, A.Neg):
            return -self.eval(heap, env, e.operand)
        if isinstance(e, A.NewObject):
            fields = {
                fs: default_value(t)
                for fs, t in self.table.declared_fields(e.cls)
            }
            return heap.alloc(Obj(e.cls, fields))
        if isinstance(e, A.NewArray):
            n = self.eval(heap, env, e.length)
            if n < 0:
                raise MooStuck("negative array length")
            return heap.alloc(
                Arr(e.elem_type, [default_value(e.elem_type)] * n)
            )
        if isinstance(e, A.Call):
            recv = self.eval(heap, env, e.recv)
            if recv is None:
                raise MooError(NPE_CLASS)
            args = [self.eval(heap, env, a) for a in e.args]
            return self._invoke(heap, recv, e.method, args)
        raise TypeError(e)  # pragma: no cover

    # -- helpers --------------------------------------------------------

    def _deref_obj(self, heap: Heap, v) -> Obj:
        if v is None:
            raise MooError(NPE_CLASS)
        cell = heap.cell(v)
        assert isinstance(cell, Obj)
        return cell

    def _deref_arr(self, heap: Heap, v) -> Arr:
        if v is None:
            raise MooError(NPE_CLASS)
        cell = heap.cell(v)
        assert isinstance(cell, Arr)
        return cell

    def _bounds(self, arr: Arr, idx: int) -> None:
        if idx < 0 or idx >= len(arr.elems):
            raise MooError(OOB_CLASS)


def _collect_locals(stmts: list):
    out = []
    for s in stmts:
        if isinstance(s, A.LocalDecl):
            out.append(s)
        elif isinstance(s, A.If):
            out.extend(_collect_locals(s.then_body))
            out.extend(_collect_locals(s.else_body))
        elif isinstance(s, A.While):
            out.extend(_collect_locals(s.body))
    return out
