"""Derivation engine over the clause IR.

One generic depth-first driver serves two purposes:

- symbolic execution under a coverage criterion (block-k or depth-k),
  collecting resultants at every leaf; and
- ground replay (mode "ground", no criterion), which must find exactly
  one successful derivation and records which instructions it executed.

A goal is a sequence of items.  Besides instantiated guards and body
literals it may contain scope markers (popping the block-k ancestor
stack when a clause body is exhausted) and delayed property literals
(heap predicates such as noshare/acyclic that the selection rule skips
and the harness checks on grounded leaves).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .heap import GROUND, SYMBOLIC, HeapOps
from .ir import (
    ArithGuard,
    AssignLit,
    CallLit,
    GetArrayLit,
    GetFieldLit,
    LengthLit,
    NewArrayLit,
    NewObjectLit,
    Program,
    RefNeqGuard,
    SetArrayLit,
    SetFieldLit,
    TypeGuardLit,
)
from .terms import (
    ArithConstraint,
    Compound,
    DivisionByZero,
    Int,
    NULL,
    NotGround,
    Store,
    Term,
    Var,
    eval_ground,
    is_ref,
    post_constraint,
    ref,
    syntactic_eq,
    unify,
)

sys.setrecursionlimit(max(sys.getrecursionlimit(), 100_000))


# ---------------------------------------------------------------------------
# goal items
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LitItem:
    """An instantiated guard or body literal, tagged with its origin.

    origin is (pred, clause_index, slot) where slot is "g" for the guard
    or the body position; None for harness-injected literals.
    """

    lit: object
    origin: Optional[tuple]


@dataclass(frozen=True)
class PopMarker:
    pred: str


@dataclass(frozen=True)
class DelayedProp:
    """A level-2 property literal: ("noshare", a, b) or ("acyclic", a)."""

    kind: str
    args: tuple


@dataclass(frozen=True)
class RefNeqItem:
    """A level-1 reference disequality over entry arguments.

    Enumerates the null/r(_) shapes of unbound operands and posts an
    integer disequality between the inner reference variables when both
    sides are non-null.
    """

    a: Term
    b: Term


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


class BlockK:
    """Stop when a predicate already occurs K times among its covering
    ancestors (the chain of calls whose bodies are still in progress)."""

    kind = "block-k"

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("block-k requires K >= 1")
        self.k = k

    def initial_aux(self):
        return ()

    def push(self, aux, pred):
        return aux + (pred,)

    def pop(self, aux):
        return aux[:-1]

    def stops(self, aux, pred, steps) -> bool:
        return aux.count(pred) >= self.k

    def spec(self) -> str:
        return f"block-k:{self.k}"


class DepthK:
    """Stop when the branch has performed K derivation steps."""

    kind = "depth-k"

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("depth-k requires K >= 0")
        self.k = k

    def initial_aux(self):
        return ()

    def push(self, aux, pred):
        return aux

    def pop(self, aux):
        return aux

    def stops(self, aux, pred, steps) -> bool:
        return steps >= self.k

    def spec(self) -> str:
        return f"depth-k:{self.k}"


def parse_criterion(spec: str):
    kind, sep, param = spec.partition(":")
    if not sep or not param.lstrip("-").isdigit():
        raise ValueError(f"bad criterion {spec!r}; expected block-k:<K> or depth-k:<K>")
    k = int(param)
    if kind == "block-k":
        return BlockK(k)
    if kind == "depth-k":
        return DepthK(k)
    raise ValueError(f"unknown criterion kind {kind!r}")


# ---------------------------------------------------------------------------
# resultants
# ---------------------------------------------------------------------------

SUCCESS = "success"
CRITERION_STOP = "criterion-stop"


@dataclass(frozen=True)
class Resultant:
    """A captured leaf of the symbolic tree.

    All terms are deep-resolved snapshots taken before backtracking, so
    they stay meaningful after the driver's store moves on.  Unbound
    variables inside them are shared between fields (the same Var object
    appears in the input and output sides), which is what lets the
    harness ground input and output consistently.
    """

    stop_reason: str
    args_in: tuple
    args_out: tuple
    h_in: Term
    h_out: Term
    exflag: Term
    constraints: tuple
    delayed: tuple  # unresolved DelayedProp items with resolved args
    trace: tuple  # (pred, clause_index) derivation steps
    path: tuple  # trace plus builtin branch choices; unique per leaf
    var_counter: int


@dataclass
class GroundRun:
    solutions: list = field(default_factory=list)  # (trace, executed, outs)
    steps: int = 0


class EngineError(Exception):
    pass


# ---------------------------------------------------------------------------
# clause instantiation
# ---------------------------------------------------------------------------


def _rename(t: Term, mapping: dict, store: Store) -> Term:
    if isinstance(t, Var):
        if t.id not in mapping:
            mapping[t.id] = store.fresh()
        return mapping[t.id]
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(_rename(a, mapping, store) for a in t.args))
    return t


def _instantiate_literal(lit, mapping: dict, store: Store):
    def r(t):
        return _rename(t, mapping, store)

    if isinstance(lit, ArithGuard):
        return ArithGuard(lit.op, r(lit.lhs), r(lit.rhs))
    if isinstance(lit, RefNeqGuard):
        return RefNeqGuard(r(lit.a), r(lit.b))
    if isinstance(lit, TypeGuardLit):
        return TypeGuardLit(r(lit.h), r(lit.ref), lit.cls)
    if isinstance(lit, AssignLit):
        return AssignLit(r(lit.var), r(lit.expr))
    if isinstance(lit, CallLit):
        return CallLit(
            lit.pred,
            tuple(r(a) for a in lit.args_in),
            tuple(r(a) for a in lit.args_out),
            r(lit.h_in),
            r(lit.h_out),
            r(lit.exflag),
        )
    if isinstance(lit, NewObjectLit):
        return NewObjectLit(r(lit.h), lit.cls, r(lit.ref), r(lit.h_out))
    if isinstance(lit, NewArrayLit):
        return NewArrayLit(r(lit.h), r(lit.elem_type), r(lit.length), r(lit.ref), r(lit.h_out))
    if isinstance(lit, LengthLit):
        return LengthLit(r(lit.h), r(lit.ref), r(lit.out))
    if isinstance(lit, GetFieldLit):
        return GetFieldLit(r(lit.h), r(lit.ref), lit.fsig, r(lit.out))
    if isinstance(lit, SetFieldLit):
        return SetFieldLit(r(lit.h), r(lit.ref), lit.fsig, r(lit.val), r(lit.h_out))
    if isinstance(lit, GetArrayLit):
        return GetArrayLit(r(lit.h), r(lit.ref), r(lit.idx), r(lit.out))
    if isinstance(lit, SetArrayLit):
        return SetArrayLit(r(lit.h), r(lit.ref), r(lit.idx), r(lit.val), r(lit.h_out))
    raise TypeError(f"unknown literal {lit!r}")


# ---------------------------------------------------------------------------
# the driver
# ---------------------------------------------------------------------------


class Engine:
    def __init__(
        self,
        program: Program,
        store: Store,
        mode: str = SYMBOLIC,
        alias: bool = False,
        max_steps: int = 1_000_000,
    ):
        self.program = program
        self.store = store
        self.mode = mode
        self.heap = HeapOps(program.class_table, store, mode=mode, alias=alias)
        self.max_steps = max_steps

    # -- builtin reduction ----------------------------------------------

    def _builtin_branches(self, lit) -> Iterator[Optional[int]]:
        """Branch stream of a builtin; yields a branch ordinal."""
        store = self.store
        if isinstance(lit, ArithGuard):
            yield from self._arith_branches(lit.op, lit.lhs, lit.rhs)
        elif isinstance(lit, AssignLit):
            try:
                value = eval_ground(lit.expr, store)
            except NotGround:
                m = store.mark()
                if post_constraint(ArithConstraint("#=", lit.var, lit.expr), store):
                    yield 0
                store.undo_to(m)
                return
            except DivisionByZero:
                return
            m = store.mark()
            if unify(lit.var, Int(value), store):
                yield 0
            store.undo_to(m)
        elif isinstance(lit, RefNeqGuard):
            yield from self._refneq_branches(lit.a, lit.b, enumerate_shapes=False)
        elif isinstance(lit, TypeGuardLit):
            for i, _ in enumerate(self.heap.type_guard(lit.h, lit.ref, lit.cls)):
                yield i
        elif isinstance(lit, NewObjectLit):
            for i, _ in enumerate(self.heap.new_object(lit.h, lit.cls, lit.ref, lit.h_out)):
                yield i
        elif isinstance(lit, NewArrayLit):
            for i, _ in enumerate(
                self.heap.new_array(lit.h, lit.elem_type, lit.length, lit.ref, lit.h_out)
            ):
                yield i
        elif isinstance(lit, LengthLit):
            for i, _ in enumerate(self.heap.length_of(lit.h, self._inner(lit.ref), lit.out)):
                yield i
        elif isinstance(lit, GetFieldLit):
            for i, _ in enumerate(
                self.heap.get_field(lit.h, self._inner(lit.ref), lit.fsig, lit.out)
            ):
                yield i
        elif isinstance(lit, SetFieldLit):
            for i, _ in enumerate(
                self.heap.set_field(lit.h, self._inner(lit.ref), lit.fsig, lit.val, lit.h_out)
            ):
                yield i
        elif isinstance(lit, GetArrayLit):
            for i, _ in enumerate(
                self.heap.get_array(lit.h, self._inner(lit.ref), lit.idx, lit.out)
            ):
                yield i
        elif isinstance(lit, SetArrayLit):
            for i, _ in enumerate(
                self.heap.set_array(lit.h, self._inner(lit.ref), lit.idx, lit.val, lit.h_out)
            ):
                yield i
        else:
            raise TypeError(f"unknown builtin {lit!r}")

    def _inner(self, t: Term) -> Term:
        """Heap builtins address locations by the inner reference variable;
        IR sites may hold either the bare inner term or an r(_) wrapper."""
        d = self.store.deref(t)
        if is_ref(d):
            return d.args[0]
        return d

    def _arith_branches(self, op: str, lhs: Term, rhs: Term):
        store = self.store
        m = store.mark()
        if post_constraint(ArithConstraint(op, lhs, rhs), store):
            yield 0
        store.undo_to(m)

    def _refneq_branches(self, a: Term, b: Term, enumerate_shapes: bool):
        """a \\== b.  With shape enumeration (level-1 preconditions) the
        unbound operands are instantiated to null / r(_) alternatives."""
        store = self.store
        a = store.deref(a)
        b = store.deref(b)
        if syntactic_eq(a, b, store):
            return
        shapes_a = [a]
        shapes_b = [b]
        if enumerate_shapes:
            if isinstance(a, Var):
                shapes_a = [NULL, ref(store.fresh())]
            if isinstance(b, Var):
                shapes_b = [NULL, ref(store.fresh())]
        branch = 0
        for sa in shapes_a:
            for sb in shapes_b:
                m = store.mark()
                ok = unify(a, sa, store) and unify(b, sb, store)
                if ok:
                    da, db = store.deref(a), store.deref(b)
                    if da == NULL and db == NULL:
                        ok = False
                    elif is_ref(da) and is_ref(db):
                        ok = post_constraint(
                            ArithConstraint("#\\=", da.args[0], db.args[0]), store
                        )
                    # null vs r(_): trivially different
                if ok:
                    yield branch
                branch += 1
                store.undo_to(m)

    # -- symbolic unfolding ----------------------------------------------

    def unfold(self, goal: tuple, criterion) -> list:
        """Run the six-step unfolding loop to completion and return all
        Success and CriterionStop resultants in derivation order."""
        self._root = goal
        results: list = []
        self._unfold(list(goal), criterion, criterion.initial_aux(), (), (), 0, results)
        return results

    def _capture(self, reason: str, goal, trace, path) -> Resultant:
        store = self.store
        root = self._root_call
        delayed = tuple(
            DelayedProp(item.kind, tuple(store.resolve(a) for a in item.args))
            for item in goal
            if isinstance(item, DelayedProp)
        )
        return Resultant(
            stop_reason=reason,
            args_in=tuple(store.resolve(a) for a in root.args_in),
            args_out=tuple(store.resolve(a) for a in root.args_out),
            h_in=store.resolve(root.h_in),
            h_out=store.resolve(root.h_out),
            exflag=store.resolve(root.exflag),
            constraints=tuple(
                ArithConstraint(c.op, store.resolve(c.lhs), store.resolve(c.rhs))
                for c in store.constraints
            ),
            delayed=delayed,
            trace=trace,
            path=path,
            var_counter=store._var_counter,
        )

    def _unfold(self, goal, criterion, aux, trace, path, steps, results):
        store = self.store
        # consume finished clause scopes
        while goal and isinstance(goal[0], PopMarker):
            aux = criterion.pop(aux)
            goal = goal[1:]
        # select: leftmost non-delayed item
        idx = None
        for i, item in enumerate(goal):
            if isinstance(item, PopMarker):
                # markers behind delayed literals: drop scope and continue
                aux = criterion.pop(aux)
                continue
            if not isinstance(item, DelayedProp):
                idx = i
                break
        if idx is None:
            results.append(self._capture(SUCCESS, goal, trace, path))
            return
        item = goal[idx]
        rest = goal[:idx] + goal[idx + 1 :]

        if isinstance(item, RefNeqItem):
            for b in self._refneq_branches(item.a, item.b, enumerate_shapes=True):
                self._unfold(rest, criterion, aux, trace, path + (("refneq", b),), steps + 1, results)
            return

        lit = item.lit if isinstance(item, LitItem) else item
        if isinstance(lit, CallLit):
            pred = self.program.predicate(lit.pred)
            if pred is None:
                raise EngineError(f"call to undefined predicate {lit.pred!r}")
            if criterion.stops(aux, lit.pred, steps):
                results.append(self._capture(CRITERION_STOP, goal, trace, path))
                return
            for cidx, clause in enumerate(pred.clauses):
                m = store.mark()
                mapping: dict = {}
                head_in = tuple(_rename(a, mapping, store) for a in clause.args_in)
                head_out = tuple(_rename(a, mapping, store) for a in clause.args_out)
                h_in = _rename(clause.h_in, mapping, store)
                h_out = _rename(clause.h_out, mapping, store)
                exflag = _rename(clause.exflag, mapping, store)
                ok = (
                    len(head_in) == len(lit.args_in)
                    and len(head_out) == len(lit.args_out)
                    and all(
                        unify(p, a, store) for p, a in zip(head_in, lit.args_in)
                    )
                    and all(
                        unify(p, a, store) for p, a in zip(head_out, lit.args_out)
                    )
                    and unify(h_in, lit.h_in, store)
                    and unify(h_out, lit.h_out, store)
                    and unify(exflag, lit.exflag, store)
                )
                if ok:
                    items: list = []
                    if clause.guard is not None:
                        items.append(
                            LitItem(
                                _instantiate_literal(clause.guard, mapping, store),
                                (lit.pred, cidx, "g"),
                            )
                        )
                    for k, b in enumerate(clause.body):
                        items.append(
                            LitItem(
                                _instantiate_literal(b, mapping, store),
                                (lit.pred, cidx, k),
                            )
                        )
                    items.append(PopMarker(lit.pred))
                    self._unfold(
                        items + rest,
                        criterion,
                        criterion.push(aux, lit.pred),
                        trace + ((lit.pred, cidx),),
                        path + ((lit.pred, cidx),),
                        steps + 1,
                        results,
                    )
                store.undo_to(m)
            return

        # builtins
        if isinstance(criterion, DepthK) and criterion.stops(aux, None, steps):
            results.append(self._capture(CRITERION_STOP, goal, trace, path))
            return
        m = store.mark()
        for b in self._builtin_branches(lit):
            origin = item.origin if isinstance(item, LitItem) else None
            self._unfold(
                rest,
                criterion,
                aux,
                trace,
                path + ((origin, b),),
                steps + 1,
                results,
            )
        store.undo_to(m)

    @property
    def _root_call(self) -> CallLit:
        for item in self._root:
            lit = item.lit if isinstance(item, LitItem) else item
            if isinstance(lit, CallLit):
                return lit
        raise EngineError("goal contains no entry call")

    # -- ground execution ------------------------------------------------

    def run_ground(self, goal: tuple) -> GroundRun:
        if self.mode != GROUND:
            raise EngineError("run_ground requires a ground-mode engine")
        self._root = goal
        run = GroundRun()
        self._ground(list(goal), (), (), run)
        return run

    def _ground(self, goal, trace, executed, run):
        run.steps += 1
        if run.steps > self.max_steps:
            raise EngineError("ground execution exceeded its step budget")
        store = self.store
        while goal and isinstance(goal[0], PopMarker):
            goal = goal[1:]
        if not goal:
            root = self._root_call
            outs = (
                tuple(store.resolve(a) for a in root.args_out),
                store.resolve(root.h_out),
                store.resolve(root.exflag),
            )
            run.solutions.append((trace, executed, outs))
            return
        item = goal[0]
        rest = goal[1:]
        lit = item.lit if isinstance(item, LitItem) else item
        origin = item.origin if isinstance(item, LitItem) else None
        if isinstance(lit, CallLit):
            pred = self.program.predicate(lit.pred)
            if pred is None:
                raise EngineError(f"call to undefined predicate {lit.pred!r}")
            for cidx, clause in enumerate(pred.clauses):
                m = store.mark()
                mapping: dict = {}
                head_in = tuple(_rename(a, mapping, store) for a in clause.args_in)
                head_out = tuple(_rename(a, mapping, store) for a in clause.args_out)
                h_in = _rename(clause.h_in, mapping, store)
                h_out = _rename(clause.h_out, mapping, store)
                exflag = _rename(clause.exflag, mapping, store)
                ok = (
                    len(head_in) == len(lit.args_in)
                    and len(head_out) == len(lit.args_out)
                    and all(unify(p, a, store) for p, a in zip(head_in, lit.args_in))
                    and all(unify(p, a, store) for p, a in zip(head_out, lit.args_out))
                    and unify(h_in, lit.h_in, store)
                    and unify(h_out, lit.h_out, store)
                    and unify(exflag, lit.exflag, store)
                )
                if ok:
                    items: list = []
                    if clause.guard is not None:
                        items.append(
                            LitItem(
                                _instantiate_literal(clause.guard, mapping, store),
                                (lit.pred, cidx, "g"),
                            )
                        )
                    for k, b in enumerate(clause.body):
                        items.append(
                            LitItem(
                                _instantiate_literal(b, mapping, store),
                                (lit.pred, cidx, k),
                            )
                        )
                    items.append(PopMarker(lit.pred))
                    step_exec = executed + ((origin,) if origin is not None else ())
                    self._ground(
                        items + rest, trace + ((lit.pred, cidx),), step_exec, run
                    )
                store.undo_to(m)
            return
        m = store.mark()
        for _b in self._builtin_branches(lit):
            step_exec = executed + ((origin,) if origin is not None else ())
            self._ground(rest, trace, step_exec, run)
        store.undo_to(m)


# ---------------------------------------------------------------------------
# entry goals
# ---------------------------------------------------------------------------


def entry_goal(store: Store, pred: str, arity_out: int, n_params: int) -> tuple:
    """A fresh symbolic entry goal calling pred with unknown arguments."""
    call = CallLit(
        pred,
        tuple(store.fresh() for _ in range(n_params)),
        tuple(store.fresh() for _ in range(arity_out)),
        store.fresh(),
        store.fresh(),
        store.fresh(),
    )
    return (LitItem(call, None),)
