"""Lowering from the mini object-oriented language to the clause IR.

A method becomes a family of predicates: one entry predicate plus one
block predicate per control split.  Splits arise from null checks on
dereferences the nullness analysis cannot discharge (`nullcheckN`, with
an exception clause allocating an 'NPE' object), conditionals (`ifN`,
false branch first), loops (`loop` trampoline, `loopcondN` per conjunct,
`loopbodyN` blocks), array bounds checks (`boundscheckN` pairs raising
'OOB'), virtual calls with several candidate targets (`dispatchN`, one
type-guarded clause per possible dynamic class), and resumption after a
call that may raise (`exccheckN` / `contN`).

Block predicates pass the whole environment (this, parameters, locals)
positionally; in-flight temporaries are appended after it.  A block with
a single caller inherits the caller's argument shapes (`r(V)`, `null`,
constants); join blocks with several callers use plain head variables
and recover non-nullness on demand by rewriting a head variable V into
`r(V')` when the analysis proves the reference non-null.
"""

from __future__ import annotations

import re
from typing import Optional

from ..heap import type_term
from ..ir import (
    ArithGuard,
    AssignLit,
    CallLit,
    ClassInfo,
    ClassTable,
    Clause,
    EntrySpec,
    GetArrayLit,
    GetFieldLit,
    LengthLit,
    NewArrayLit,
    NewObjectLit,
    Predicate,
    Program,
    RefNeqGuard,
    SetArrayLit,
    SetFieldLit,
    TypeGuardLit,
    VOID,
    is_ref_type,
)
from ..terms import NULL, Atom, Compound, Int, Term, Var, exc, ref
from . import analysis as AN
from . import ast as A
from .parser import Resolved, parse_source

NPE_CLASS = "NPE"
OOB_CLASS = "OOB"

_OP_MAP = {"+": "+", "-": "-", "*": "*", "/": "/", "%": "mod"}

_HINT_SUFFIX = re.compile(r"_\d+$")


class DeadPath(Exception):
    """The current clause was finished exceptionally mid-statement."""


class LoweringError(Exception):
    pass


def default_term(t) -> Term:
    return NULL if is_ref_type(t) else Int(0)


def subst_term(t: Term, m: dict) -> Term:
    if isinstance(t, Var):
        return m.get(t.id, t)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(subst_term(a, m) for a in t.args))
    return t


def map_literal(lit, f):
    if isinstance(lit, ArithGuard):
        return ArithGuard(lit.op, f(lit.lhs), f(lit.rhs))
    if isinstance(lit, RefNeqGuard):
        return RefNeqGuard(f(lit.a), f(lit.b))
    if isinstance(lit, TypeGuardLit):
        return TypeGuardLit(f(lit.h), f(lit.ref), lit.cls)
    if isinstance(lit, AssignLit):
        return AssignLit(f(lit.var), f(lit.expr))
    if isinstance(lit, CallLit):
        return CallLit(
            lit.pred,
            tuple(f(a) for a in lit.args_in),
            tuple(f(a) for a in lit.args_out),
            f(lit.h_in),
            f(lit.h_out),
            f(lit.exflag),
        )
    if isinstance(lit, NewObjectLit):
        return NewObjectLit(f(lit.h), lit.cls, f(lit.ref), f(lit.h_out))
    if isinstance(lit, NewArrayLit):
        return NewArrayLit(f(lit.h), f(lit.elem_type), f(lit.length), f(lit.ref), f(lit.h_out))
    if isinstance(lit, LengthLit):
        return LengthLit(f(lit.h), f(lit.ref), f(lit.out))
    if isinstance(lit, GetFieldLit):
        return GetFieldLit(f(lit.h), f(lit.ref), lit.fsig, f(lit.out))
    if isinstance(lit, SetFieldLit):
        return SetFieldLit(f(lit.h), f(lit.ref), lit.fsig, f(lit.val), f(lit.h_out))
    if isinstance(lit, GetArrayLit):
        return GetArrayLit(f(lit.h), f(lit.ref), f(lit.idx), f(lit.out))
    if isinstance(lit, SetArrayLit):
        return SetArrayLit(f(lit.h), f(lit.ref), f(lit.idx), f(lit.val), f(lit.h_out))
    raise TypeError(lit)  # pragma: no cover


# ---------------------------------------------------------------------------
# continuations
# ---------------------------------------------------------------------------


class EpilogueK:
    """Return point of the method."""


class CallK:
    """A tail call to an already-named predicate (loop back edge)."""

    def __init__(self, pred: str):
        self.pred = pred


class SeqK:
    """Remaining statements, materialized lazily as a join block."""

    def __init__(self, stmts: list, next_k, depth: int):
        self.stmts = stmts
        self.next = next_k
        self.depth = depth
        self.abs: Optional[dict] = None
        self.target: Optional[str] = None


class Cell:
    """Mutable holder for the clause context currently being extended."""

    def __init__(self, ctx: "ClauseCtx"):
        self.ctx = ctx


# ---------------------------------------------------------------------------
# clause construction
# ---------------------------------------------------------------------------


class ClauseCtx:
    def __init__(self, lw, pred, slot, head, out_arity, abs_state, env, flight, subst):
        self.lw = lw
        self.pred = pred
        self.slot = slot
        self.head = list(head)
        self.out_arity = out_arity
        self.h_in = lw.fresh("H")
        self.heap = self.h_in
        self.guard = None
        self.body: list = []
        self.env = dict(env)
        self.flight = list(flight)
        self.subst = dict(subst)
        self.abs = dict(abs_state) if abs_state is not None else {}
        self.done = False

    def resolve(self, t: Term) -> Term:
        return subst_term(t, self.subst)

    def add(self, lit) -> None:
        self.body.append(map_literal(lit, self.resolve))

    def compose(self, m: dict) -> None:
        out = {k: subst_term(v, m) for k, v in self.subst.items()}
        for k, v in m.items():
            out.setdefault(k, v)
        self.subst = out

    def rewrite(self, m: dict) -> None:
        """Apply a substitution to everything built so far (head included)."""

        def f(t):
            return subst_term(t, m)

        self.head = [f(t) for t in self.head]
        if self.guard is not None:
            self.guard = map_literal(self.guard, f)
        self.body = [map_literal(lit, f) for lit in self.body]
        self.env = {k: f(v) for k, v in self.env.items()}
        self.flight = [f(t) for t in self.flight]
        self.compose(m)

    def finish(self, args_out: tuple, h_out: Term, exflag: Term) -> None:
        assert not self.done
        self.done = True
        self.pred.clauses[self.slot] = Clause(
            args_in=tuple(self.head),
            args_out=args_out,
            h_in=self.h_in,
            h_out=h_out,
            exflag=exflag,
            guard=self.guard,
            body=tuple(self.body),
        )

    def finish_ok(self, value: Optional[Term]) -> None:
        outs = () if self.out_arity == 0 else (self.resolve(value),)
        self.finish(outs, self.heap, Atom("ok"))

    def finish_exc(self, exc_ref: Term) -> None:
        outs = tuple(self.lw.fresh("R") for _ in range(self.out_arity))
        self.finish(outs, self.heap, exc(self.resolve(exc_ref)))

    def finish_tail(self, pred: str, args) -> None:
        h_out = self.lw.fresh("H")
        ef = self.lw.fresh("EF")
        outs = tuple(self.lw.fresh("R") for _ in range(self.out_arity))
        self.body.append(
            CallLit(
                pred,
                tuple(self.resolve(a) for a in args),
                outs,
                self.heap,
                h_out,
                ef,
            )
        )
        self.finish(outs, h_out, ef)


# ---------------------------------------------------------------------------
# the lowerer
# ---------------------------------------------------------------------------


class Lowerer:
    def __init__(self, resolved: Resolved):
        self.res = resolved
        self.table = resolved.table
        self._vc = 0
        self._name_counts: dict = {}
        self.var_names: dict = {}
        self.counters: dict = {}
        extra = [
            ClassInfo(n, None, ())
            for n in (NPE_CLASS, OOB_CLASS)
            if n not in self.table
        ]
        full_table = ClassTable(list(self.table.classes.values()) + extra)
        self.program = Program(
            predicates={},
            class_table=full_table,
            entries={},
            var_names=self.var_names,
        )
        self.method_pred = self._method_pred_names()
        self.may_throw = self._compute_may_throw()
        # per-method state
        self.env_keys: list = []
        self.depth = 0
        self.ret_type = VOID
        self._out_arity = 0

    # -- naming ---------------------------------------------------------

    def fresh(self, hint: str = "V") -> Var:
        self._vc += 1
        v = Var(-self._vc)
        n = self._name_counts.get(hint, 0)
        self._name_counts[hint] = n + 1
        self.var_names[v.id] = hint if n == 0 else f"{hint}_{n + 1}"
        return v

    def hint_of(self, v: Var) -> str:
        name = self.var_names.get(v.id, "V")
        return _HINT_SUFFIX.sub("", name) or "V"

    def next_name(self, kind: str) -> str:
        n = self.counters.get(kind, 0) + 1
        self.counters[kind] = n
        if kind in ("loop", "preloop") and n == 1:
            return kind
        return f"{kind}{n}"

    def new_pred(self, name: str) -> Predicate:
        if name in self.program.predicates:
            raise LoweringError(f"predicate name collision: {name}")
        pred = Predicate(name)
        self.program.predicates[name] = pred
        return pred

    # -- program-level passes -------------------------------------------

    def _method_decls(self):
        for c in self.res.program.classes:
            for m in c.methods:
                yield c.name, m

    def _method_pred_names(self) -> dict:
        counts: dict = {}
        for _cls, m in self._method_decls():
            counts[m.name] = counts.get(m.name, 0) + 1
        out = {}
        for cls, m in self._method_decls():
            out[(cls, m.name)] = m.name if counts[m.name] == 1 else f"{cls}.{m.name}"
        return out

    def _call_targets(self, e: A.Call) -> list:
        """Candidate (dynamic class, implementation) pairs, most general
        class first."""
        static_cls = e.recv.typ
        out = []
        for d in self.table.subclasses(static_cls):
            impl = self.res.resolve_method(d, e.method)
            if impl is not None:
                out.append((d, impl))
        return out

    def _compute_may_throw(self) -> dict:
        throws = {}
        calls = {}

        def scan_expr(e, key):
            if isinstance(e, (A.ArrayRead, A.ArrayLen)):
                throws[key] = True
            if isinstance(e, A.FieldRead) and not isinstance(e.obj, A.This):
                throws[key] = True
            if isinstance(e, A.Call):
                if not isinstance(e.recv, A.This):
                    throws[key] = True
                calls[key].append(e)
            for child in _expr_children(e):
                scan_expr(child, key)

        def scan_stmts(stmts, key):
            for s in stmts:
                if isinstance(s, A.Assign):
                    if isinstance(s.target, A.ArrayRead):
                        throws[key] = True
                    if isinstance(s.target, A.FieldRead) and not isinstance(
                        s.target.obj, A.This
                    ):
                        throws[key] = True
                    scan_expr(s.target, key)
                    scan_expr(s.expr, key)
                elif isinstance(s, A.Return):
                    if s.expr is not None:
                        scan_expr(s.expr, key)
                elif isinstance(s, A.ExprStmt):
                    scan_expr(s.expr, key)
                elif isinstance(s, A.If):
                    scan_cond(s.cond, key)
                    scan_stmts(s.then_body, key)
                    scan_stmts(s.else_body, key)
                elif isinstance(s, A.While):
                    scan_cond(s.cond, key)
                    scan_stmts(s.body, key)

        def scan_cond(c, key):
            if isinstance(c, A.And):
                scan_cond(c.lhs, key)
                scan_cond(c.rhs, key)
            elif isinstance(c, A.Cmp):
                scan_expr(c.lhs, key)
                scan_expr(c.rhs, key)
            elif isinstance(c, A.BoolCond):
                scan_expr(c.expr, key)

        for cls, m in self._method_decls():
            key = (cls, m.name)
            throws.setdefault(key, False)
            calls[key] = []
            scan_stmts(m.body, key)

        changed = True
        while changed:
            changed = False
            for key, sites in calls.items():
                if throws[key]:
                    continue
                for e in sites:
                    if any(
                        throws[(impl.cls, impl.name)]
                        for _d, impl in self._call_targets(e)
                    ):
                        throws[key] = True
                        changed = True
                        break
        return throws

    # -- splits ---------------------------------------------------------

    def _pattern(self, v: Term, m: dict, overrides: dict) -> Term:
        if isinstance(v, Var):
            if v.id in m:
                return m[v.id]
            spec = overrides.get(v.id)
            if spec == "nonnull":
                t: Term = ref(self.fresh(self.hint_of(v)))
            elif spec == "null":
                t = NULL
            elif spec == "excpat":
                t = exc(self.fresh("E"))
            elif isinstance(spec, Term):
                t = spec
            else:
                t = self.fresh(self.hint_of(v))
            m[v.id] = t
            return t
        if isinstance(v, Compound):
            return Compound(v.functor, tuple(self._pattern(a, m, overrides) for a in v.args))
        return v

    def make_split(self, ctx: ClauseCtx, name: str, specs: list, extras=()):
        """Single-caller split: one new predicate whose clauses inherit
        the caller's argument shapes.  Returns (args, clause ctxs)."""
        pred = self.new_pred(name)
        args = [
            ctx.resolve(v)
            for v in list(ctx.env.values()) + list(ctx.flight) + list(extras)
        ]
        ctxs = []
        for spec in specs:
            slot = len(pred.clauses)
            pred.clauses.append(None)
            m: dict = {}
            overrides = spec.get("override", {})
            head = [self._pattern(v, m, overrides) for v in args]

            def f(t, m=m):
                return subst_term(t, m)

            env2 = {k: f(ctx.resolve(v)) for k, v in ctx.env.items()}
            flight2 = [f(ctx.resolve(v)) for v in ctx.flight]
            subst2 = {k: subst_term(v, m) for k, v in ctx.subst.items()}
            for k, v in m.items():
                subst2.setdefault(k, v)
            c2 = ClauseCtx(
                self, pred, slot, head, ctx.out_arity, ctx.abs, env2, flight2, subst2
            )
            guard_fn = spec.get("guard")
            if guard_fn is not None:
                c2.guard = guard_fn(f, c2)
            ctxs.append(c2)
        return args, ctxs

    def split_call(self, cc: Cell, name: str, specs: list, extras=()):
        args, ctxs = self.make_split(cc.ctx, name, specs, extras)
        cc.ctx.finish_tail(name, args)
        return ctxs

    def make_join(self, name: str, out_arity: int, abs_state, specs=None):
        """Multi-caller block: plain head variable per environment slot."""
        pred = self.new_pred(name)
        ctxs = []
        for spec in specs or [{}]:
            slot = len(pred.clauses)
            pred.clauses.append(None)
            head = []
            env2 = {}
            patterns = spec.get("patterns", {})
            for k in self.env_keys:
                p = patterns.get(k)
                if p == "nonnull":
                    t: Term = ref(self.fresh(_var_hint(k)))
                elif p == "null":
                    t = NULL
                else:
                    t = self.fresh(_var_hint(k))
                head.append(t)
                env2[k] = t
            ctx = ClauseCtx(self, pred, slot, head, out_arity, abs_state, env2, [], {})
            guard_fn = spec.get("guard")
            if guard_fn is not None:
                ctx.guard = guard_fn(env2, ctx)
            ctxs.append(ctx)
        return ctxs

    # -- exceptional exits ----------------------------------------------

    def _emit_throw(self, ctx: ClauseCtx, cls: str) -> None:
        e = self.fresh("E")
        h2 = self.fresh("H")
        ctx.add(NewObjectLit(ctx.heap, cls, e, h2))
        ctx.heap = h2
        ctx.finish_exc(e)

    def run_clause(self, fn) -> None:
        try:
            fn()
        except DeadPath:
            pass

    # -- dereferencing ---------------------------------------------------

    def refine_nonnull(self, ctx: ClauseCtx, v: Var) -> Var:
        inner = self.fresh(self.hint_of(v))
        ctx.rewrite({v.id: ref(inner)})
        return inner

    def deref(self, cc: Cell, value: Term, src: Optional[A.Expr]) -> Term:
        """The inner reference variable of a value known to be non-null,
        splitting off a null check when the analysis cannot prove it."""
        ctx = cc.ctx
        v = ctx.resolve(value)
        if isinstance(v, Compound) and v.functor == "r":
            if src is not None:
                AN.mark_nonnull(ctx.abs, src)
            return v.args[0]
        if v == NULL:
            self._emit_throw(ctx, NPE_CLASS)
            raise DeadPath
        assert isinstance(v, Var), v
        nn = AN.nullness_of(ctx.abs, src) if src is not None else AN.UNK
        if nn == AN.NUL:
            self._emit_throw(ctx, NPE_CLASS)
            raise DeadPath
        if nn == AN.NN:
            return self.refine_nonnull(ctx, v)
        ctx.flight.append(v)
        name = self.next_name("nullcheck")
        c_ok, c_null = self.split_call(
            cc,
            name,
            [{"override": {v.id: "nonnull"}}, {"override": {v.id: "null"}}],
        )
        self._emit_throw(c_null, NPE_CLASS)
        cc.ctx = c_ok
        if src is not None:
            AN.mark_nonnull(c_ok.abs, src)
        inner = c_ok.flight.pop()
        assert isinstance(inner, Compound) and inner.functor == "r"
        return inner.args[0]

    # -- expressions -----------------------------------------------------

    def eval_expr(self, cc: Cell, e: A.Expr) -> Optional[Term]:
        if isinstance(e, A.IntLit):
            return Int(e.value)
        if isinstance(e, A.BoolLit):
            return Int(1 if e.value else 0)
        if isinstance(e, A.NullLit):
            return NULL
        if isinstance(e, A.This):
            return cc.ctx.resolve(cc.ctx.env["this"])
        if isinstance(e, A.VarRef):
            return cc.ctx.resolve(cc.ctx.env[e.name])
        if isinstance(e, A.FieldRead):
            inner = self._eval_receiver(cc, e.obj)
            fsig = self.table.find_field(e.obj.typ, e.field_name)
            out = self.fresh(_var_hint(e.field_name))
            cc.ctx.add(GetFieldLit(cc.ctx.heap, inner, fsig, out))
            return out
        if isinstance(e, A.ArrayLen):
            inner = self._eval_receiver(cc, e.arr)
            out = self.fresh("Len")
            cc.ctx.add(LengthLit(cc.ctx.heap, inner, out))
            return out
        if isinstance(e, A.ArrayRead):
            inner, idx = self._array_access(cc, e.arr, e.index)
            out = self.fresh("Elem")
            ctx = cc.ctx
            ctx.add(GetArrayLit(ctx.heap, ctx.resolve(inner), ctx.resolve(idx), out))
            return out
        if isinstance(e, A.BinOp):
            lhs = self.eval_expr(cc, e.lhs)
            cc.ctx.flight.append(lhs)
            rhs = self.eval_expr(cc, e.rhs)
            lhs = cc.ctx.flight.pop()
            rhs = cc.ctx.resolve(rhs)
            if (
                isinstance(lhs, Int)
                and isinstance(rhs, Int)
                and e.op in ("+", "-", "*")
            ):
                folds = {"+": lhs.value + rhs.value, "-": lhs.value - rhs.value, "*": lhs.value * rhs.value}
                return Int(folds[e.op])
            t = self.fresh("T")
            cc.ctx.add(AssignLit(t, Compound(_OP_MAP[e.op], (lhs, rhs))))
            return t
        if isinstance(e, A.Neg):
            v = self.eval_expr(cc, e.operand)
            v = cc.ctx.resolve(v)
            if isinstance(v, Int):
                return Int(-v.value)
            t = self.fresh("T")
            cc.ctx.add(AssignLit(t, Compound("-", (Int(0), v))))
            return t
        if isinstance(e, A.NewObject):
            r = self.fresh("O")
            h2 = self.fresh("H")
            cc.ctx.add(NewObjectLit(cc.ctx.heap, e.cls, r, h2))
            cc.ctx.heap = h2
            return ref(r)
        if isinstance(e, A.NewArray):
            n = self.eval_expr(cc, e.length)
            r = self.fresh("Arr")
            h2 = self.fresh("H")
            ctx = cc.ctx
            ctx.add(NewArrayLit(ctx.heap, type_term(e.elem_type), ctx.resolve(n), r, h2))
            ctx.heap = h2
            return ref(r)
        if isinstance(e, A.Call):
            return self.lower_call(cc, e)
        raise TypeError(e)  # pragma: no cover

    def _eval_receiver(self, cc: Cell, obj: A.Expr) -> Term:
        v = self.eval_expr(cc, obj)
        inner = self.deref(cc, v, obj)
        return cc.ctx.resolve(inner)

    def _array_access(self, cc: Cell, arr: A.Expr, index: A.Expr):
        """Deref + index eval + length + the two bounds-check splits.
        Returns (inner ref var, index term)."""
        inner = self._eval_receiver(cc, arr)
        ctx = cc.ctx
        ctx.flight.append(ref(inner))
        idx = self.eval_expr(cc, index)
        ctx = cc.ctx
        ln = self.fresh("Len")
        ctx.add(LengthLit(ctx.heap, ctx.resolve(inner), ln))
        ctx.flight.append(ctx.resolve(idx))
        ctx.flight.append(ln)

        def low_guard(op):
            def g(f, _ctx, op=op):
                return ArithGuard(op, f(ctx.resolve(idx)), Int(0))

            return g

        name = self.next_name("boundscheck")
        c_ok, c_oob = self.split_call(
            cc, name, [{"guard": low_guard("#>=")}, {"guard": low_guard("#<")}]
        )
        self._emit_throw(c_oob, OOB_CLASS)
        cc.ctx = c_ok

        def high_guard(op):
            def g(f, _ctx, op=op):
                return ArithGuard(op, f(c_ok.resolve(idx)), f(c_ok.resolve(ln)))

            return g

        name = self.next_name("boundscheck")
        c_ok2, c_oob2 = self.split_call(
            cc, name, [{"guard": high_guard("#<")}, {"guard": high_guard("#>=")}]
        )
        self._emit_throw(c_oob2, OOB_CLASS)
        cc.ctx = c_ok2
        cc.ctx.flight.pop()  # length
        idx2 = cc.ctx.flight.pop()
        rv = cc.ctx.flight.pop()
        assert isinstance(rv, Compound) and rv.functor == "r"
        return rv.args[0], idx2

    # -- calls -----------------------------------------------------------

    def lower_call(self, cc: Cell, e: A.Call) -> Optional[Term]:
        recv_v = self.eval_expr(cc, e.recv)
        cc.ctx.flight.append(recv_v)
        inner = self.deref(cc, recv_v, e.recv)
        ctx = cc.ctx
        ctx.flight[-1] = ref(ctx.resolve(inner))
        vals = []
        for a in e.args:
            v = self.eval_expr(cc, a)
            cc.ctx.flight.append(cc.ctx.resolve(v))
            vals.append(None)
        ctx = cc.ctx
        for i in range(len(vals) - 1, -1, -1):
            vals[i] = ctx.flight.pop()
        recv_term = ctx.flight.pop()

        targets = self._call_targets(e)
        impls = []
        for _d, impl in targets:
            if (impl.cls, impl.name) not in [(i.cls, i.name) for i in impls]:
                impls.append(impl)
        ret = impls[0].ret_type
        rout = self.fresh("R") if ret != VOID else None
        efc = self.fresh("EF")
        throws = any(self.may_throw[(i.cls, i.name)] for i in impls)

        if len(impls) == 1:
            pred = self.method_pred[(impls[0].cls, impls[0].name)]
            h2 = self.fresh("H")
            ctx.add(
                CallLit(
                    pred,
                    (recv_term,) + tuple(vals),
                    (rout,) if rout is not None else (),
                    ctx.heap,
                    h2,
                    efc,
                )
            )
            ctx.heap = h2
            if throws:
                self._exccheck_split(cc, rout, efc)
        else:
            self._dispatch(cc, e, targets, recv_term, vals, rout, efc, throws)
        AN.eval_effects(cc.ctx.abs, e)
        return cc.ctx.resolve(rout) if rout is not None else None

    def _exccheck_split(self, cc: Cell, rout, efc) -> None:
        extras = ([rout] if rout is not None else []) + [efc]
        name = self.next_name("exccheck")
        c_ok, c_exc = self.split_call(
            cc,
            name,
            [{"override": {efc.id: Atom("ok")}}, {"override": {efc.id: "excpat"}}],
            extras=extras,
        )
        outs = tuple(self.fresh("R") for _ in range(c_exc.out_arity))
        c_exc.finish(outs, c_exc.heap, c_exc.resolve(efc))
        cc.ctx = c_ok

    def _dispatch(self, cc, e, targets, recv_term, vals, rout, efc, throws) -> None:
        ctx = cc.ctx
        inner = recv_term.args[0]
        extras = [recv_term] + list(vals)
        if rout is not None:
            extras.append(rout)
        extras.append(efc)

        def type_spec(d):
            def g(f, c2, d=d):
                return TypeGuardLit(c2.h_in, f(inner), d)

            return {"guard": g}

        dname = self.next_name("dispatch")
        dargs, dctxs = self.make_split(ctx, dname, [type_spec(d) for d, _ in targets], extras)
        if throws:
            cname = self.next_name("exccheck")
            cspecs = [
                {"override": {efc.id: Atom("ok")}},
                {"override": {efc.id: "excpat"}},
            ]
        else:
            cname = self.next_name("cont")
            cspecs = [{}]
        _cargs, cctxs = self.make_split(ctx, cname, cspecs, extras)
        ctx.finish_tail(dname, dargs)

        for (d, impl), dctx in zip(targets, dctxs):
            pred = self.method_pred[(impl.cls, impl.name)]
            h2 = self.fresh("H")
            dctx.add(
                CallLit(
                    pred,
                    (dctx.resolve(recv_term),) + tuple(dctx.resolve(v) for v in vals),
                    (dctx.resolve(rout),) if rout is not None else (),
                    dctx.heap,
                    h2,
                    dctx.resolve(efc),
                )
            )
            dctx.heap = h2
            dctx.finish_tail(cname, dargs)

        if throws:
            c_ok, c_exc = cctxs
            outs = tuple(self.fresh("R") for _ in range(c_exc.out_arity))
            c_exc.finish(outs, c_exc.heap, c_exc.resolve(efc))
            cc.ctx = c_ok
        else:
            cc.ctx = cctxs[0]

    # -- statements ------------------------------------------------------

    def lower_stmts(self, cc: Cell, stmts: list, kont) -> None:
        for i, s in enumerate(stmts):
            if cc.ctx.done:
                return
            rest = stmts[i + 1:]
            if isinstance(s, A.If):
                jk = SeqK(rest, kont, self.depth)
                self.lower_if(cc, s, jk)
                return
            if isinstance(s, A.While):
                jk = SeqK(rest, kont, self.depth)
                self.lower_while(cc, s, jk)
                return
            if isinstance(s, A.Return):
                value = None
                if s.expr is not None:
                    value = self.eval_expr(cc, s.expr)
                if cc.ctx.out_arity == 0:
                    cc.ctx.finish_ok(None)
                else:
                    cc.ctx.finish_ok(
                        value if value is not None else default_term(self.ret_type)
                    )
                return
            if isinstance(s, A.LocalDecl):
                continue
            if isinstance(s, A.Assign):
                self.lower_assign(cc, s)
                continue
            if isinstance(s, A.ExprStmt):
                self.eval_expr(cc, s.expr)
                continue
            raise TypeError(s)  # pragma: no cover
        self.jump_to(cc.ctx, kont)

    def lower_assign(self, cc: Cell, s: A.Assign) -> None:
        t = s.target
        if isinstance(t, A.VarRef):
            v = self.eval_expr(cc, s.expr)
            ctx = cc.ctx
            ctx.env[t.name] = ctx.resolve(v)
            AN.assign_transfer(ctx.abs, t, s.expr)
            return
        if isinstance(t, A.FieldRead):
            inner = self._eval_receiver(cc, t.obj)
            cc.ctx.flight.append(ref(inner))
            v = self.eval_expr(cc, s.expr)
            ctx = cc.ctx
            rv = ctx.flight.pop()
            fsig = self.table.find_field(t.obj.typ, t.field_name)
            h2 = self.fresh("H")
            ctx.add(SetFieldLit(ctx.heap, rv.args[0], fsig, ctx.resolve(v), h2))
            ctx.heap = h2
            AN.assign_transfer(ctx.abs, t, s.expr)
            return
        if isinstance(t, A.ArrayRead):
            v = None  # evaluated between index and bounds checks
            inner = self._eval_receiver(cc, t.arr)
            cc.ctx.flight.append(ref(inner))
            idx = self.eval_expr(cc, t.index)
            cc.ctx.flight.append(cc.ctx.resolve(idx))
            v = self.eval_expr(cc, s.expr)
            ctx = cc.ctx
            v = ctx.resolve(v)
            idx = ctx.flight.pop()
            rv = ctx.flight.pop()
            ctx.flight.append(rv)
            ln = self.fresh("Len")
            ctx.add(LengthLit(ctx.heap, rv.args[0], ln))
            ctx.flight.append(idx)
            ctx.flight.append(ln)
            ctx.flight.append(v)

            def low_guard(op):
                def g(f, _c, op=op):
                    return ArithGuard(op, f(idx), Int(0))

                return g

            name = self.next_name("boundscheck")
            c_ok, c_oob = self.split_call(
                cc, name, [{"guard": low_guard("#>=")}, {"guard": low_guard("#<")}]
            )
            self._emit_throw(c_oob, OOB_CLASS)
            cc.ctx = c_ok

            def high_guard(op):
                def g(f, _c, op=op):
                    return ArithGuard(op, f(c_ok.resolve(idx)), f(c_ok.resolve(ln)))

                return g

            name = self.next_name("boundscheck")
            c_ok2, c_oob2 = self.split_call(
                cc, name, [{"guard": high_guard("#<")}, {"guard": high_guard("#>=")}]
            )
            self._emit_throw(c_oob2, OOB_CLASS)
            ctx = cc.ctx = c_ok2
            v = ctx.flight.pop()
            ctx.flight.pop()  # length
            idx = ctx.flight.pop()
            rv = ctx.flight.pop()
            h2 = self.fresh("H")
            ctx.add(SetArrayLit(ctx.heap, rv.args[0], idx, v, h2))
            ctx.heap = h2
            AN.assign_transfer(ctx.abs, t, s.expr)
            return
        raise TypeError(t)  # pragma: no cover

    # -- conditionals ----------------------------------------------------

    def _cond_specs(self, cc: Cell, cond):
        """Evaluate the operands of a simple condition in the current
        context.  Returns (extras, false_spec, true_spec) or a bool when
        the condition is statically decided."""
        if isinstance(cond, A.Cmp):
            null_test = isinstance(cond.lhs, A.NullLit) or isinstance(
                cond.rhs, A.NullLit
            )
            if null_test and cond.op in ("==", "!="):
                operand = cond.rhs if isinstance(cond.lhs, A.NullLit) else cond.lhs
                v = self.eval_expr(cc, operand)
                v = cc.ctx.resolve(v)
                if v == NULL:
                    return cond.op == "=="
                if isinstance(v, Compound) and v.functor == "r":
                    return cond.op == "!="
                true_pat = "null" if cond.op == "==" else "nonnull"
                false_pat = "nonnull" if cond.op == "==" else "null"
                return (
                    [v],
                    {"override": {v.id: false_pat}},
                    {"override": {v.id: true_pat}},
                )
            lhs = self.eval_expr(cc, cond.lhs)
            cc.ctx.flight.append(lhs)
            rhs = self.eval_expr(cc, cond.rhs)
            lhs = cc.ctx.flight.pop()
            rhs = cc.ctx.resolve(rhs)
            if isinstance(lhs, Int) and isinstance(rhs, Int):
                return _cmp_ints(cond.op, lhs.value, rhs.value)
            pos, neg = A.CMP_TO_GUARD[cond.op]

            def guard(op):
                def g(f, _c, op=op):
                    return ArithGuard(op, f(lhs), f(rhs))

                return g

            return [lhs, rhs], {"guard": guard(neg)}, {"guard": guard(pos)}
        if isinstance(cond, A.BoolCond):
            v = self.eval_expr(cc, cond.expr)
            v = cc.ctx.resolve(v)
            if isinstance(v, Int):
                return v.value != 0

            def guard(op):
                def g(f, _c, op=op):
                    return ArithGuard(op, f(v), Int(0))

                return g

            return [v], {"guard": guard("#=")}, {"guard": guard("#\\=")}
        raise TypeError(cond)  # pragma: no cover

    def lower_if(self, cc: Cell, s: A.If, join_k: SeqK) -> None:
        res = self._cond_specs(cc, s.cond)
        base_abs = cc.ctx.abs
        join_k.abs = AN.join(
            AN.analyze_stmts(AN.refine_cond(base_abs, s.cond, True), s.then_body),
            AN.analyze_stmts(AN.refine_cond(base_abs, s.cond, False), s.else_body),
        )
        if isinstance(res, bool):
            branch = s.then_body if res else s.else_body
            refined = AN.refine_cond(base_abs, s.cond, res)
            cc.ctx.abs = refined if refined is not None else {}
            self.lower_stmts(cc, branch, join_k)
            return
        extras, false_spec, true_spec = res
        name = self.next_name("if")
        c_false, c_true = self.split_call(cc, name, [false_spec, true_spec], extras)
        for ctx, body, truth in ((c_true, s.then_body, True), (c_false, s.else_body, False)):
            ctx.abs = _refined(ctx.abs, s.cond, truth)
            self.run_clause(lambda ctx=ctx, body=body: self.lower_stmts(Cell(ctx), body, join_k))

    # -- loops -----------------------------------------------------------

    def lower_while(self, cc: Cell, w: A.While, exit_k: SeqK) -> None:
        ctx = cc.ctx
        inv, exit_abs = AN.loop_invariant(ctx.abs, w)
        exit_k.abs = exit_abs
        loop_name = self.next_name("loop")
        (lctx,) = self.make_join(loop_name, ctx.out_arity, inv)
        ctx.finish_tail(loop_name, list(ctx.env.values()))
        conjs = _flatten_cond(w.cond)
        self.depth += 1
        try:
            self.run_clause(
                lambda: self._lower_conjuncts(Cell(lctx), conjs, 0, w, loop_name, exit_k)
            )
        finally:
            self.depth -= 1

    def _lower_conjuncts(self, cc: Cell, conjs, i, w, loop_name, exit_k) -> None:
        exits = []  # false clauses, finished after the body so the loop
        # body's own splits are numbered before the exit continuation
        while i < len(conjs):
            res = self._cond_specs(cc, conjs[i])
            if isinstance(res, bool):
                if res:
                    cc.ctx.abs = _refined(cc.ctx.abs, conjs[i], True)
                    i += 1
                    continue
                self.jump_to(cc.ctx, exit_k)
                return
            extras, false_spec, true_spec = res
            name = self.next_name("loopcond")
            c_false, c_true = self.split_call(cc, name, [false_spec, true_spec], extras)
            c_true.abs = _refined(c_true.abs, conjs[i], True)
            c_false.abs = _refined(c_false.abs, conjs[i], False)
            exits.append(c_false)
            cc = Cell(c_true)
            i += 1
        # all conjuncts hold: the loop body block
        bname = self.next_name("loopbody")
        (bctx,) = self.split_call(cc, bname, [{}])
        self.run_clause(
            lambda: self.lower_stmts(Cell(bctx), w.body, CallK(loop_name))
        )
        for c in exits:
            self.run_clause(lambda c=c: self.jump_to(c, exit_k))

    # -- joins and continuations ----------------------------------------

    def jump_to(self, ctx: ClauseCtx, kont) -> None:
        if ctx.done:
            return
        assert not ctx.flight, "temporaries alive at a statement boundary"
        if isinstance(kont, EpilogueK):
            if ctx.out_arity == 0:
                ctx.finish_ok(None)
            else:
                ctx.finish_ok(default_term(self.ret_type))
            return
        if isinstance(kont, CallK):
            ctx.finish_tail(kont.pred, list(ctx.env.values()))
            return
        assert isinstance(kont, SeqK)
        if not kont.stmts:
            self.jump_to(ctx, kont.next)
            return
        if kont.target is None:
            if self._collapsible_if(kont):
                self._materialize_if_join(kont)
            else:
                self._materialize_block(kont)
        ctx.finish_tail(kont.target, list(ctx.env.values()))

    def _collapsible_if(self, k: SeqK) -> bool:
        if len(k.stmts) != 1 or not isinstance(k.stmts[0], A.If):
            return False
        cond = k.stmts[0].cond
        if isinstance(cond, A.Cmp):
            return _trivial(cond.lhs) and _trivial(cond.rhs)
        if isinstance(cond, A.BoolCond):
            return _trivial(cond.expr)
        return False

    def _materialize_block(self, k: SeqK) -> None:
        if any(isinstance(s, A.While) for s in k.stmts) and k.depth == 0:
            kind = "preloop"
        elif k.depth > 0:
            kind = "loopbody"
        else:
            kind = "cont"
        name = self.next_name(kind)
        k.target = name
        (ctx,) = self.make_join(name, self._out_arity, k.abs)
        saved = self.depth
        self.depth = k.depth
        try:
            self.run_clause(lambda: self.lower_stmts(Cell(ctx), k.stmts, k.next))
        finally:
            self.depth = saved

    def _materialize_if_join(self, k: SeqK) -> None:
        s = k.stmts[0]
        cond = s.cond
        name = self.next_name("if")
        k.target = name

        def value_of(env2, e):
            if isinstance(e, A.IntLit):
                return Int(e.value)
            if isinstance(e, A.BoolLit):
                return Int(1 if e.value else 0)
            if isinstance(e, A.NullLit):
                return NULL
            if isinstance(e, A.This):
                return env2["this"]
            assert isinstance(e, A.VarRef)
            return env2[e.name]

        specs: list
        if isinstance(cond, A.Cmp) and (
            isinstance(cond.lhs, A.NullLit) or isinstance(cond.rhs, A.NullLit)
        ):
            operand = cond.rhs if isinstance(cond.lhs, A.NullLit) else cond.lhs
            key = "this" if isinstance(operand, A.This) else operand.name
            true_pat = "null" if cond.op == "==" else "nonnull"
            false_pat = "nonnull" if cond.op == "==" else "null"
            specs = [{"patterns": {key: false_pat}}, {"patterns": {key: true_pat}}]
        elif isinstance(cond, A.Cmp):
            pos, neg = A.CMP_TO_GUARD[cond.op]

            def guard(op):
                def g(env2, _c, op=op):
                    return ArithGuard(op, value_of(env2, cond.lhs), value_of(env2, cond.rhs))

                return g

            specs = [{"guard": guard(neg)}, {"guard": guard(pos)}]
        else:

            def bguard(op):
                def g(env2, _c, op=op):
                    return ArithGuard(op, value_of(env2, cond.expr), Int(0))

                return g

            specs = [{"guard": bguard("#=")}, {"guard": bguard("#\\=")}]

        c_false, c_true = self.make_join(name, self._out_arity, k.abs, specs)
        saved = self.depth
        self.depth = k.depth
        try:
            for ctx, body, truth in (
                (c_true, s.then_body, True),
                (c_false, s.else_body, False),
            ):
                ctx.abs = _refined(ctx.abs, cond, truth)
                self.run_clause(
                    lambda ctx=ctx, body=body: self.lower_stmts(Cell(ctx), body, k.next)
                )
        finally:
            self.depth = saved

    # -- methods ---------------------------------------------------------

    def lower_method(self, cls: str, m: A.MethodDecl) -> None:
        pred_name = self.method_pred[(cls, m.name)]
        pred = self.new_pred(pred_name)
        pred.clauses.append(None)
        th = self.fresh("Th")
        head = [ref(th)]
        env = {"this": ref(th)}
        for pname, _ptype in m.params:
            v = self.fresh(_var_hint(pname))
            head.append(v)
            env[pname] = v
        locals_ = _collect_locals(m.body)
        for n, t in locals_:
            if n in env:
                raise LoweringError(
                    f"{cls}.{m.name}: local {n!r} shadows another variable"
                )
            env[n] = default_term(t)
        self.env_keys = list(env)
        self.depth = 0
        self.ret_type = m.ret_type
        self._out_arity = 0 if m.ret_type == VOID else 1
        abs_state = AN.initial_state([p for p, _ in m.params])
        for n, t in locals_:
            if is_ref_type(t):
                abs_state[AN.var_key(n)] = AN.NUL
        ctx = ClauseCtx(self, pred, 0, head, self._out_arity, abs_state, env, [], {})
        self.run_clause(lambda: self.lower_stmts(Cell(ctx), m.body, EpilogueK()))

        entry_name = f"{cls}.{m.name}"
        self.program.entries[entry_name] = EntrySpec(
            entry_name,
            pred_name,
            ("this",) + tuple(p for p, _ in m.params),
            (cls,) + tuple(t for _, t in m.params),
            m.ret_type,
        )

    def lower(self) -> Program:
        for cls, m in self._method_decls():
            self.lower_method(cls, m)
        for pred in self.program.predicates.values():
            for i, c in enumerate(pred.clauses):
                if c is None:  # pragma: no cover
                    raise LoweringError(f"unfinished clause {pred.name}/{i + 1}")
        return self.program


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _var_hint(name: str) -> str:
    return name[0].upper() + name[1:] if name else "V"


def _trivial(e: A.Expr) -> bool:
    return isinstance(e, (A.VarRef, A.This, A.IntLit, A.BoolLit, A.NullLit))


def _cmp_ints(op: str, a: int, b: int) -> bool:
    return {
        "<": a < b,
        "<=": a <= b,
        ">": a > b,
        ">=": a >= b,
        "==": a == b,
        "!=": a != b,
    }[op]


def _flatten_cond(c: A.Cond) -> list:
    if isinstance(c, A.And):
        return _flatten_cond(c.lhs) + _flatten_cond(c.rhs)
    return [c]


def _refined(abs_state, cond, truth):
    out = AN.refine_cond(abs_state if abs_state is not None else {}, cond, truth)
    return out if out is not None else {}


def _expr_children(e: A.Expr):
    if isinstance(e, A.FieldRead):
        return [e.obj]
    if isinstance(e, A.ArrayRead):
        return [e.arr, e.index]
    if isinstance(e, A.ArrayLen):
        return [e.arr]
    if isinstance(e, A.BinOp):
        return [e.lhs, e.rhs]
    if isinstance(e, A.Neg):
        return [e.operand]
    if isinstance(e, A.NewArray):
        return [e.length]
    if isinstance(e, A.Call):
        return [e.recv] + list(e.args)
    return []


def _collect_locals(stmts: list) -> list:
    out = []
    for s in stmts:
        if isinstance(s, A.LocalDecl):
            out.extend((n, s.typ) for n in s.names)
        elif isinstance(s, A.If):
            out.extend(_collect_locals(s.then_body))
            out.extend(_collect_locals(s.else_body))
        elif isinstance(s, A.While):
            out.extend(_collect_locals(s.body))
    return out


def lower_program(resolved: Resolved) -> Program:
    return Lowerer(resolved).lower()


def compile_source(text: str) -> Program:
    return lower_program(parse_source(text))
