"""Test-case generation harness over compiled clause programs.

Ties the pieces together: entry preconditions, symbolic execution under
a coverage criterion, grounding of the collected resultants into
concrete test cases (labeling integers, closing heaps), a ground-replay
oracle that re-executes every case and checks the derivation, and
instruction-coverage measurement over the replayed suite.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .engine import (
    CRITERION_STOP,
    DelayedProp,
    Engine,
    LitItem,
    RefNeqItem,
    Resultant,
    entry_goal,
    parse_criterion,
)
from .heap import GROUND, SYMBOLIC, heap_locations
from .ir import (
    ArithGuard,
    ArrayType,
    BOOL,
    CallLit,
    EntrySpec,
    INT,
    Program,
    VOID,
    fsig_of_term,
    is_ref_type,
)
from .terms import (
    ArithConstraint,
    Atom,
    Compound,
    Int,
    NIL,
    NULL,
    OK,
    Store,
    Term,
    Var,
    is_cons,
    is_exc,
    is_ref,
    label,
    make_list,
    post_constraint,
    ref,
    unify,
)


class HarnessError(Exception):
    pass


class Ungroundable(Exception):
    """The resultant's path constraint has no solution within bounds."""


# ---------------------------------------------------------------------------
# preconditions
# ---------------------------------------------------------------------------

_REL_MAP = {
    "<": "#<",
    "<=": "#=<",
    ">": "#>",
    ">=": "#>=",
    "==": "#=",
    "!=": "#\\=",
}

_PROP_RE = re.compile(r"^(noshare|acyclic)\s*\(\s*(\w+)\s*(?:,\s*(\w+)\s*)?\)$")
_CMP_RE = re.compile(r"^(\w+|-?\d+)\s*(<=|>=|==|!=|<|>)\s*(\w+|-?\d+)$")


@dataclass(frozen=True)
class Precondition:
    """Entry-state restrictions, split by when they can be enforced.

    level1 literals run before the entry call (arithmetic comparisons
    and reference disequalities over the entry arguments); level2 are
    heap-reachability properties checked on each grounded result.
    """

    level1: tuple = ()  # ("cmp", op, a, b) | ("refneq", a, b); operands str|int
    level2: tuple = ()  # ("noshare", a, b) | ("acyclic", a)


def parse_precondition(text: str) -> Precondition:
    level1 = []
    level2 = []
    for raw in text.splitlines():
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        m = _PROP_RE.match(line)
        if m:
            kind, a, b = m.groups()
            if kind == "noshare":
                if b is None:
                    raise HarnessError(f"noshare needs two arguments: {line!r}")
                level2.append(("noshare", a, b))
            else:
                if b is not None:
                    raise HarnessError(f"acyclic takes one argument: {line!r}")
                level2.append(("acyclic", a))
            continue
        m = _CMP_RE.match(line)
        if m:
            a, op, b = m.groups()
            level1.append(("cmp", op, _operand(a), _operand(b)))
            continue
        raise HarnessError(f"cannot parse precondition line {line!r}")
    return Precondition(tuple(level1), tuple(level2))


def _operand(tok: str):
    return int(tok) if re.fullmatch(r"-?\d+", tok) else tok


def entry_environment(entry: EntrySpec, goal: tuple) -> dict:
    """Map the entry's parameter names to the goal's argument terms."""
    for item in goal:
        lit = item.lit if isinstance(item, LitItem) else item
        if isinstance(lit, CallLit):
            return dict(zip(entry.param_names, lit.args_in))
    raise HarnessError("goal contains no entry call")


def apply_precondition(goal: tuple, pre: Precondition, entry: EntrySpec) -> tuple:
    """Prepend level-1 literals and append level-2 delayed properties."""
    env = entry_environment(entry, goal)
    types = dict(zip(entry.param_names, entry.param_types))

    def resolve(x, want_ref: Optional[bool] = None) -> Term:
        if isinstance(x, int):
            return Int(x)
        if x not in env:
            raise HarnessError(f"precondition names unknown parameter {x!r}")
        if want_ref is not None and is_ref_type(types[x]) != want_ref:
            kind = "a reference" if want_ref else "an integer"
            raise HarnessError(f"precondition expects {x!r} to be {kind}")
        return env[x]

    front: list = []
    for p in pre.level1:
        _tag, op, a, b = p
        ref_sides = [isinstance(x, str) and is_ref_type(types.get(x, INT)) for x in (a, b)]
        if any(ref_sides):
            if not all(ref_sides):
                raise HarnessError(f"cannot compare a reference with an integer: {p}")
            if op != "!=":
                raise HarnessError("only != is supported between references")
            front.append(RefNeqItem(resolve(a, True), resolve(b, True)))
        else:
            front.append(
                LitItem(ArithGuard(_REL_MAP[op], resolve(a, False), resolve(b, False)), None)
            )
    back = [
        DelayedProp(p[0], tuple(resolve(x, True) for x in p[1:])) for p in pre.level2
    ]
    return tuple(front) + goal + tuple(back)


# ---------------------------------------------------------------------------
# ground heap inspection
# ---------------------------------------------------------------------------


def ground_heap_cells(h: Term, store: Optional[Store] = None) -> dict:
    """{location int: cell Term} of a (closed) ground heap term.

    Locations whose cell is still an unbound variable are dropped: they
    were lazily created but never inspected, so no execution step can
    depend on them.
    """
    store = store or Store()
    known, _tail = heap_locations(h, store)
    cells = {}
    for entry in known:
        key = store.deref(entry.args[0])
        cell = store.deref(entry.args[1])
        if isinstance(key, Int) and not isinstance(cell, Var):
            cells[key.value] = cell
    return cells


def _cell_refs(cell: Term) -> list:
    """Reference values stored directly in a ground cell."""
    out = []

    def walk(t: Term) -> None:
        if is_ref(t) and isinstance(t.args[0], Int):
            out.append(t.args[0].value)
        elif isinstance(t, Compound):
            for a in t.args:
                walk(a)

    walk(cell)
    return out


def reachable_locations(cells: dict, roots) -> set:
    seen: set = set()
    work = [r.args[0].value for r in roots if is_ref(r) and isinstance(r.args[0], Int)]
    while work:
        k = work.pop()
        if k in seen:
            continue
        seen.add(k)
        if k in cells:
            work.extend(_cell_refs(cells[k]))
    return seen


def noshare(cells: dict, a: Term, b: Term) -> bool:
    """True iff nothing is reachable from both a and b."""
    return not (reachable_locations(cells, [a]) & reachable_locations(cells, [b]))


def acyclic(cells: dict, a: Term) -> bool:
    """True iff no reference cycle is reachable from a."""
    WHITE, GREY, BLACK = 0, 1, 2
    color: dict = {}

    def visit(k: int) -> bool:
        state = color.get(k, WHITE)
        if state == GREY:
            return False
        if state == BLACK or k not in cells:
            return True
        color[k] = GREY
        for succ in _cell_refs(cells[k]):
            if not visit(succ):
                return False
        color[k] = BLACK
        return True

    if not (is_ref(a) and isinstance(a.args[0], Int)):
        return True
    return visit(a.args[0].value)


_PROP_CHECKS = {"noshare": noshare, "acyclic": acyclic}


# ---------------------------------------------------------------------------
# grounding resultants
# ---------------------------------------------------------------------------


@dataclass
class TestCase:
    id: int
    entry: str
    args_in: tuple
    h_in: Term
    args_out: tuple
    h_out: Term
    exflag: Term  # Atom ok | exc(Int)
    exc_class: Optional[str]
    trace: tuple
    delayed: tuple = ()  # (kind, ground arg Terms) heap properties to check


class _Grounder:
    """Closes one resultant's shared terms inside a scratch store.

    Reference-shaped holes are fixed first (unbound reference variables
    become null, unbound location variables become fresh distinct
    negative integers so they can never collide with locations the
    replay allocates), integer variables are labeled against the path
    constraint, and arrays are padded to their now-concrete lengths.
    """

    def __init__(self, store: Store, table):
        self.store = store
        self.table = table
        self.int_vars: list = []
        self.arrays: list = []
        self._neg = 0

    def _fresh_loc(self) -> Int:
        self._neg -= 1
        return Int(self._neg)

    def _bind(self, v: Var, t: Term) -> None:
        if not unify(v, t, self.store):
            raise Ungroundable(f"cannot close {v!r} as {t!r}")

    def _want_int(self, t: Term, booly: bool = False) -> None:
        t = self.store.deref(t)
        if isinstance(t, Var):
            self.int_vars.append(t)
            if booly:
                st = self.store
                if not (
                    post_constraint(ArithConstraint("#>=", t, Int(0)), st)
                    and post_constraint(ArithConstraint("#=<", t, Int(1)), st)
                ):
                    raise Ungroundable("boolean variable outside {0,1}")

    def close_value(self, t: Term, typ) -> None:
        store = self.store
        t = store.deref(t)
        if typ in (INT, BOOL):
            self._want_int(t, booly=typ == BOOL)
            return
        if isinstance(t, Var):
            self._bind(t, NULL)
            return
        if is_ref(t):
            inner = store.deref(t.args[0])
            if isinstance(inner, Var):
                self._bind(inner, self._fresh_loc())

    def close_heap(self, h: Term) -> None:
        store = self.store
        known, tail = heap_locations(h, store)
        if isinstance(tail, Var):
            self._bind(tail, NIL)
        for entry in known:
            key = store.deref(entry.args[0])
            if isinstance(key, Var):
                self._bind(key, self._fresh_loc())
        for entry in known:
            self.close_cell(store.deref(entry.args[1]))

    def close_cell(self, cell: Term) -> None:
        store = self.store
        if isinstance(cell, Var):
            return  # never inspected; dropped at serialization
        if cell.functor == "object":
            cls = store.deref(cell.args[0])
            if not isinstance(cls, Atom):
                return
            fields = store.deref(cell.args[1])
            while is_cons(fields):
                fe = store.deref(fields.args[0])
                fsig = fsig_of_term(store.deref(fe.args[0]))
                ftype = self.table.field_type(fsig) if fsig else INT
                self.close_value(fe.args[1], ftype)
                fields = store.deref(fields.args[1])
            if isinstance(fields, Var):
                self._bind(fields, NIL)
        elif cell.functor == "array":
            et = store.deref(cell.args[0])
            if isinstance(et, Var):
                self._bind(et, Atom(INT))
            length = store.deref(cell.args[1])
            if isinstance(length, Var):
                if not post_constraint(ArithConstraint("#>=", length, Int(0)), store):
                    raise Ungroundable("negative array length")
                self.int_vars.append(length)
            self.arrays.append(cell)

    def elem_type_of(self, et: Term):
        if isinstance(et, Compound) and et.functor == "array_of":
            return ArrayType(self.elem_type_of(et.args[0]))
        return et.name if isinstance(et, Atom) else INT

    def finish_arrays(self) -> None:
        """Close element lists once every length is a concrete integer."""
        store = self.store
        for cell in self.arrays:
            et = self.elem_type_of(store.deref(cell.args[0]))
            length = store.deref(cell.args[1])
            if not isinstance(length, Int):
                raise Ungroundable("array length left symbolic")
            elems = store.deref(cell.args[2])
            n = 0
            while is_cons(elems):
                self.close_value(elems.args[0], et)
                n += 1
                elems = store.deref(elems.args[1])
            if isinstance(elems, Var):
                if n > length.value:
                    raise Ungroundable("array holds more elements than its length")
                pad = Int(0) if et in (INT, BOOL) else NULL
                self._bind(elems, make_list([pad] * (length.value - n)))

    def close_defaults(self, t: Term) -> None:
        """Bind whatever is still free in an output term to its default."""
        store = self.store
        t = store.deref(t)
        if isinstance(t, Var):
            self._bind(t, Int(0))
        elif is_ref(t):
            inner = store.deref(t.args[0])
            if isinstance(inner, Var):
                self._bind(inner, self._fresh_loc())
        elif isinstance(t, Compound):
            for a in t.args:
                self.close_defaults(a)


def ground_resultant(
    r: Resultant, entry: EntrySpec, table, bounds: tuple
) -> TestCase:
    """Turn one Success resultant into a concrete test case.

    Raises Ungroundable when the path constraint has no integer solution
    within bounds.
    """
    store = Store(bounds)
    store._var_counter = r.var_counter
    for c in r.constraints:
        if not post_constraint(ArithConstraint(c.op, c.lhs, c.rhs), store):
            raise Ungroundable("path constraint inconsistent")

    g = _Grounder(store, table)
    ptypes = entry.param_types
    for t, typ in zip(r.args_in, ptypes):
        g.close_value(t, typ)
    g.close_heap(r.h_in)
    if entry.ret_type != VOID:
        for t in r.args_out:
            g.close_value(t, entry.ret_type)
    g.close_heap(r.h_out)

    # every variable a constraint mentions must be valued for the final
    # ground re-check of the store to go through
    for c in store.constraints:
        for side in (c.lhs, c.rhs):
            g.int_vars.extend(store.term_vars(side))

    if not label(g.int_vars, store):
        raise Ungroundable("no integer solution within bounds")
    g.finish_arrays()

    # anything still free on the output side defaults to zero/null
    for t in r.args_out:
        g.close_defaults(t)

    exflag = store.resolve(r.exflag)
    exc_class = None
    if is_exc(exflag):
        exc_class = _exception_class(exflag, store.resolve(r.h_out))
    elif exflag != OK:
        raise Ungroundable(f"exception flag left open: {exflag!r}")
    return TestCase(
        id=-1,
        entry=entry.name,
        args_in=tuple(store.resolve(a) for a in r.args_in),
        h_in=store.resolve(r.h_in),
        args_out=tuple(store.resolve(a) for a in r.args_out),
        h_out=store.resolve(r.h_out),
        exflag=exflag,
        exc_class=exc_class,
        trace=r.trace,
        delayed=tuple(
            (p.kind, tuple(store.resolve(a) for a in p.args)) for p in r.delayed
        ),
    )


def _exception_class(exflag: Term, h_out: Term) -> str:
    inner = exflag.args[0]
    cells = ground_heap_cells(h_out)
    if isinstance(inner, Int) and inner.value in cells:
        cell = cells[inner.value]
        if cell.functor == "object" and isinstance(cell.args[0], Atom):
            return cell.args[0].name
    raise HarnessError(f"cannot resolve exception object {exflag!r}")


# ---------------------------------------------------------------------------
# ground replay oracle
# ---------------------------------------------------------------------------


def heap_signature(cells: dict, roots) -> tuple:
    """Canonical shape of the heap graph reachable from roots.

    Two heaps have equal signatures iff they are isomorphic as rooted,
    labeled graphs — concrete location numbers do not matter, sharing
    and cycles do.
    """
    canon: dict = {}

    def walk(t: Term):
        if t == NULL:
            return ("null",)
        if isinstance(t, Int):
            return ("int", t.value)
        if isinstance(t, Atom):
            return ("atom", t.name)
        if is_ref(t) and isinstance(t.args[0], Int):
            k = t.args[0].value
            if k in canon:
                return ("ref", canon[k])
            canon[k] = idx = len(canon)
            cell = cells.get(k)
            if cell is None:
                return ("dangling", idx)
            if cell.functor == "object":
                return (
                    "obj",
                    idx,
                    cell.args[0].name,
                    _fields_sig(cell.args[1], walk),
                )
            return (
                "arr",
                idx,
                repr(cell.args[0]),
                tuple(walk(e) for e in _list_items(cell.args[2])),
            )
        return ("term", repr(t))

    return tuple(walk(r) for r in roots)


def _list_items(t: Term) -> list:
    out = []
    while is_cons(t):
        out.append(t.args[0])
        t = t.args[1]
    return out


def _fields_sig(fields: Term, walk) -> tuple:
    out = []
    for fe in _list_items(fields):
        out.append((str(fsig_of_term(fe.args[0])), walk(fe.args[1])))
    return tuple(out)


@dataclass
class ReplayResult:
    ok: bool
    detail: str = ""
    executed: tuple = ()


def replay_ground(tc: TestCase, program: Program, max_steps: int = 1_000_000) -> ReplayResult:
    """Re-execute the case concretely and compare against its record."""
    entry = program.entries[tc.entry]
    store = Store()
    eng = Engine(program, store, mode=GROUND, max_steps=max_steps)
    goal = (
        LitItem(
            CallLit(
                entry.pred,
                tc.args_in,
                tuple(store.fresh() for _ in tc.args_out),
                tc.h_in,
                store.fresh(),
                store.fresh(),
            ),
            None,
        ),
    )
    run = eng.run_ground(goal)
    if len(run.solutions) != 1:
        return ReplayResult(False, f"determinism violated: {len(run.solutions)} derivations")
    trace, executed, (args_out, h_out, exflag) = run.solutions[0]
    if trace != tc.trace:
        return ReplayResult(False, "trace mismatch", executed)
    if is_exc(tc.exflag):
        if not is_exc(exflag):
            return ReplayResult(False, f"expected exception, got {exflag!r}", executed)
        got = _exception_class(exflag, h_out)
        if got != tc.exc_class:
            return ReplayResult(
                False, f"exception class {got!r} != {tc.exc_class!r}", executed
            )
        return ReplayResult(True, executed=executed)
    if exflag != OK:
        return ReplayResult(False, f"expected normal return, got {exflag!r}", executed)
    want_roots = list(tc.args_in) + list(tc.args_out)
    got_roots = list(tc.args_in) + list(args_out)
    want = heap_signature(ground_heap_cells(tc.h_out), want_roots)
    got = heap_signature(ground_heap_cells(h_out), got_roots)
    if want != got:
        return ReplayResult(False, "output state differs", executed)
    return ReplayResult(True, executed=executed)


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------


@dataclass
class CoverageReport:
    exercised: int
    reachable: int

    @property
    def percent(self) -> float:
        return 100.0 * self.exercised / self.reachable if self.reachable else 0.0


def reachable_instructions(program: Program, entry_pred: str) -> set:
    """All (pred, clause, slot) instruction sites in the call closure."""
    seen_preds: set = set()
    work = [entry_pred]
    while work:
        p = work.pop()
        if p in seen_preds:
            continue
        seen_preds.add(p)
        pred = program.predicate(p)
        if pred is None:
            continue
        for clause in pred.clauses:
            for lit in clause.body:
                if isinstance(lit, CallLit):
                    work.append(lit.pred)
    out: set = set()
    for p in seen_preds:
        pred = program.predicate(p)
        if pred is None:
            continue
        for cidx, clause in enumerate(pred.clauses):
            if clause.guard is not None:
                out.add((p, cidx, "g"))
            for k in range(len(clause.body)):
                out.add((p, cidx, k))
    return out


def measure_coverage(executed_sets, program: Program, entry_pred: str) -> CoverageReport:
    reachable = reachable_instructions(program, entry_pred)
    exercised: set = set()
    for s in executed_sets:
        exercised |= set(s) & reachable
    return CoverageReport(len(exercised), len(reachable))


# ---------------------------------------------------------------------------
# suite generation
# ---------------------------------------------------------------------------


@dataclass
class Suite:
    entry: str
    criterion: str
    aliasing: bool
    bounds: tuple
    cases: list = field(default_factory=list)
    ungroundable: int = 0
    discarded: int = 0
    stopped: int = 0  # leaves cut by the criterion, not emitted as cases
    replay_failures: list = field(default_factory=list)  # (case id, detail)
    coverage: Optional[CoverageReport] = None


def generate_suite(
    program: Program,
    entry_name: str,
    criterion_spec: str,
    aliasing: bool = False,
    bounds: tuple = (-8, 8),
    precondition: Optional[Precondition] = None,
    replay: bool = True,
) -> Suite:
    """Run the whole pipeline for one entry point."""
    entry = program.entries.get(entry_name)
    if entry is None:
        raise HarnessError(
            f"unknown entry {entry_name!r}; have {sorted(program.entries)}"
        )
    criterion = parse_criterion(criterion_spec)
    store = Store(bounds)
    eng = Engine(program, store, mode=SYMBOLIC, alias=aliasing)
    arity_out = 0 if entry.ret_type == VOID else 1
    goal = entry_goal(store, entry.pred, arity_out, len(entry.param_names))
    if precondition is not None:
        goal = apply_precondition(goal, precondition, entry)
    resultants = eng.unfold(goal, criterion)

    suite = Suite(entry_name, criterion.spec(), aliasing, bounds)
    for r in resultants:
        if r.stop_reason == CRITERION_STOP:
            suite.stopped += 1
            continue
        try:
            tc = ground_resultant(r, entry, program.class_table, bounds)
        except Ungroundable:
            suite.ungroundable += 1
            continue
        if tc.delayed and not _delayed_hold(tc):
            suite.discarded += 1
            continue
        tc.id = len(suite.cases) + 1
        suite.cases.append(tc)

    if replay:
        executed = []
        for tc in suite.cases:
            res = replay_ground(tc, program)
            if res.ok:
                executed.append(res.executed)
            else:
                suite.replay_failures.append((tc.id, res.detail))
        suite.coverage = measure_coverage(executed, program, entry.pred)
    return suite


def _delayed_hold(tc: TestCase) -> bool:
    """Evaluate the case's delayed heap properties on its ground input."""
    cells = ground_heap_cells(tc.h_in)
    return all(
        _PROP_CHECKS[kind](cells, *args) for kind, args in tc.delayed
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def value_to_json(t: Term):
    if t == NULL:
        return None
    if isinstance(t, Int):
        return t.value
    if is_ref(t) and isinstance(t.args[0], Int):
        return {"ref": t.args[0].value}
    if isinstance(t, Atom):
        return {"atom": t.name}
    raise HarnessError(f"cannot serialize value {t!r}")


def _type_to_json(t: Term):
    if isinstance(t, Compound) and t.functor == "array_of":
        return [_type_to_json(t.args[0])]
    return t.name if isinstance(t, Atom) else repr(t)


def heap_to_json(h: Term) -> list:
    out = []
    cells = ground_heap_cells(h)
    for k in sorted(cells):
        cell = cells[k]
        if cell.functor == "object":
            body = {
                "kind": "object",
                "class": cell.args[0].name,
                "fields": {
                    str(fsig_of_term(fe.args[0])): value_to_json(fe.args[1])
                    for fe in _list_items(cell.args[1])
                },
            }
        else:
            body = {
                "kind": "array",
                "elem": _type_to_json(cell.args[0]),
                "length": cell.args[1].value,
                "elems": [value_to_json(e) for e in _list_items(cell.args[2])],
            }
        out.append({"loc": k, "cell": body})
    return out


def case_to_json(tc: TestCase) -> dict:
    exflag = "ok" if tc.exflag == OK else f"exc({tc.exc_class})"
    output = None
    if tc.exflag == OK:
        output = {
            "args": [value_to_json(a) for a in tc.args_out],
            "heap": heap_to_json(tc.h_out),
        }
    return {
        "id": tc.id,
        "input": {
            "args": [value_to_json(a) for a in tc.args_in],
            "heap": heap_to_json(tc.h_in),
        },
        "output": output,
        "exflag": exflag,
        "trace": [[p, c] for p, c in tc.trace],
    }


def suite_to_json(suite: Suite) -> dict:
    doc = {
        "schema": 1,
        "entry": suite.entry,
        "criterion": suite.criterion,
        "aliasing": "on" if suite.aliasing else "off",
        "bounds": list(suite.bounds),
        "cases": [case_to_json(tc) for tc in suite.cases],
    }
    if suite.coverage is not None:
        doc["coverage"] = {
            "exercised": suite.coverage.exercised,
            "reachable": suite.coverage.reachable,
            "percent": round(suite.coverage.percent, 2),
        }
    return doc


def _render_value(t: Term, cells: dict, seen: set) -> str:
    if t == NULL:
        return "null"
    if isinstance(t, Int):
        return str(t.value)
    if is_ref(t) and isinstance(t.args[0], Int):
        k = t.args[0].value
        if k in seen or k not in cells:
            return f"r({k})"
        seen.add(k)
        cell = cells[k]
        if cell.functor == "object":
            inner = ",".join(
                f"{fsig_of_term(fe.args[0]).name}={_render_value(fe.args[1], cells, seen)}"
                for fe in _list_items(cell.args[1])
            )
            return f"{cell.args[0].name}#{k}{{{inner}}}"
        elems = ",".join(
            _render_value(e, cells, seen) for e in _list_items(cell.args[2])
        )
        return f"array#{k}[{elems}]"
    return repr(t)


def format_text_report(suite: Suite, entry: EntrySpec) -> str:
    lines = [
        f"entry {suite.entry}  criterion {suite.criterion}  "
        f"aliasing {'on' if suite.aliasing else 'off'}  bounds {suite.bounds}",
        "",
        f"{'N':>3}  {'Input':<60} {'Output':<40} EF",
    ]
    names = entry.param_names
    for tc in suite.cases:
        in_cells = ground_heap_cells(tc.h_in)
        seen: set = set()
        inputs = ", ".join(
            f"{n}={_render_value(a, in_cells, seen)}"
            for n, a in zip(names, tc.args_in)
        )
        if tc.exflag == OK:
            out_cells = ground_heap_cells(tc.h_out)
            seen = set()
            parts = [
                f"{n}={_render_value(a, out_cells, seen)}"
                for n, a in zip(names, tc.args_in)
            ]
            parts += [_render_value(a, out_cells, seen) for a in tc.args_out]
            output = ", ".join(parts)
            ef = "ok"
        else:
            output = "-"
            ef = f"exc({tc.exc_class})"
        lines.append(f"{tc.id:>3}  {inputs:<60} {output:<40} {ef}")
    if suite.coverage is not None:
        lines.append("")
        lines.append(
            f"coverage: {suite.coverage.exercised}/{suite.coverage.reachable} "
            f"instructions ({suite.coverage.percent:.1f}%)"
        )
    extras = []
    if suite.ungroundable:
        extras.append(f"{suite.ungroundable} ungroundable (try wider bounds)")
    if suite.discarded:
        extras.append(f"{suite.discarded} discarded by precondition")
    if extras:
        lines.append("; ".join(extras))
    return "\n".join(lines) + "\n"
