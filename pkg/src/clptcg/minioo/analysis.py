"""Flow-sensitive nullness analysis over source methods.

The lowering consults this analysis to decide whether a dereference
needs an explicit null-check block (with an exception clause) or can be
compiled to a plain reference pattern: a check is omitted exactly when
the analysis proves the receiver non-null on every path.

Abstract state: a dict whose keys are access paths -- a local/parameter
name ("v", name) or a one-level field path ("f", base, field) -- mapped
to {NN, NUL, UNK}, plus alias facts ("a", p, q) recording that two paths
currently hold the same value (so nullness learned about one transfers
to the other).  Missing entries mean UNK.  `None` is the unreachable
state (all paths returned).
"""

from __future__ import annotations

from typing import Optional

from . import ast as A

NN = "nonnull"
NUL = "null"
UNK = "unknown"
ALIAS = "alias"

VKEY = "v"
FKEY = "f"
AKEY = "a"


def var_key(name: str):
    return (VKEY, name)


def field_key(base: str, fname: str):
    return (FKEY, base, fname)


def _alias_key(p, q):
    return (AKEY,) + tuple(sorted((p, q)))


def initial_state(param_names) -> dict:
    state = {var_key("this"): NN}
    return state


def join(a: Optional[dict], b: Optional[dict]) -> Optional[dict]:
    if a is None:
        return None if b is None else dict(b)
    if b is None:
        return dict(a)
    out = {}
    for k in a.keys() & b.keys():
        if a[k] == b[k] and a[k] != UNK:
            out[k] = a[k]
    return out


def states_equal(a: Optional[dict], b: Optional[dict]) -> bool:
    def norm(s):
        return None if s is None else {k: v for k, v in s.items() if v != UNK}

    return norm(a) == norm(b)


def _base_name(e: A.Expr) -> Optional[str]:
    if isinstance(e, A.This):
        return "this"
    if isinstance(e, A.VarRef):
        return e.name
    return None


def _path_of(e: A.Expr):
    base = _base_name(e)
    if base is not None:
        return var_key(base)
    if isinstance(e, A.FieldRead):
        b = _base_name(e.obj)
        if b is not None:
            return field_key(b, e.field_name)
    return None


def _alias_class(state: dict, path) -> set:
    """All paths transitively connected to path by alias facts."""
    seen = {path}
    frontier = [path]
    while frontier:
        p = frontier.pop()
        for k in state:
            if k[0] != AKEY:
                continue
            _, x, y = k
            other = y if x == p else (x if y == p else None)
            if other is not None and other not in seen:
                seen.add(other)
                frontier.append(other)
    return seen


def _set_fact(state: dict, path, fact: str) -> None:
    for p in _alias_class(state, path):
        if fact == UNK:
            state.pop(p, None)
        else:
            state[p] = fact


def _get_fact(state: dict, path) -> str:
    for p in _alias_class(state, path):
        v = state.get(p, UNK)
        if v != UNK:
            return v
    return UNK


def _kill_path(state: dict, path) -> None:
    state.pop(path, None)
    for k in [k for k in state if k[0] == AKEY and path in (k[1], k[2])]:
        del state[k]


def _kill_var(state: dict, name: str) -> None:
    for p in [
        k
        for k in state
        if (k[0] == VKEY and k[1] == name) or (k[0] == FKEY and k[1] == name)
    ]:
        _kill_path(state, p)


def _kill_field(state: dict, fname: str) -> None:
    for p in [k for k in state if k[0] == FKEY and k[2] == fname]:
        _kill_path(state, p)


def _kill_all_fields(state: dict) -> None:
    for p in [k for k in state if k[0] == FKEY]:
        _kill_path(state, p)


def nullness_of(state: dict, e: A.Expr) -> str:
    if isinstance(e, A.NullLit):
        return NUL
    if isinstance(e, (A.NewObject, A.NewArray, A.This)):
        return NN
    path = _path_of(e)
    if path is not None:
        return _get_fact(state, path)
    return UNK


def mark_nonnull(state: dict, e: A.Expr) -> None:
    """Record that e was successfully dereferenced (so it is non-null)."""
    path = _path_of(e)
    if path is not None:
        _set_fact(state, path, NN)


def eval_effects(state: dict, e: A.Expr) -> None:
    """Apply the refinements implied by evaluating e, left to right."""
    if isinstance(e, (A.IntLit, A.BoolLit, A.NullLit, A.This, A.VarRef)):
        return
    if isinstance(e, A.FieldRead):
        eval_effects(state, e.obj)
        mark_nonnull(state, e.obj)
        return
    if isinstance(e, A.ArrayRead):
        eval_effects(state, e.arr)
        mark_nonnull(state, e.arr)
        eval_effects(state, e.index)
        return
    if isinstance(e, A.ArrayLen):
        eval_effects(state, e.arr)
        mark_nonnull(state, e.arr)
        return
    if isinstance(e, A.BinOp):
        eval_effects(state, e.lhs)
        eval_effects(state, e.rhs)
        return
    if isinstance(e, A.Neg):
        eval_effects(state, e.operand)
        return
    if isinstance(e, A.NewObject):
        return
    if isinstance(e, A.NewArray):
        eval_effects(state, e.length)
        return
    if isinstance(e, A.Call):
        eval_effects(state, e.recv)
        mark_nonnull(state, e.recv)
        for a in e.args:
            eval_effects(state, a)
        # a call may mutate any field through aliases
        _kill_all_fields(state)
        return
    raise TypeError(e)  # pragma: no cover


def assign_transfer(state: dict, target: A.Expr, expr: A.Expr) -> None:
    """State update for `target = expr` (operand effects included)."""
    if isinstance(target, A.VarRef):
        eval_effects(state, expr)
        value = nullness_of(state, expr)
        src_path = _path_of(expr)
        _kill_var(state, target.name)
        if value != UNK:
            state[var_key(target.name)] = value
        # x and the copied path now hold the same value, unless the
        # source path was rooted at x itself (that object is gone)
        if src_path is not None and target.name not in src_path:
            state[_alias_key(var_key(target.name), src_path)] = ALIAS
        return
    if isinstance(target, A.FieldRead):
        eval_effects(state, target.obj)
        mark_nonnull(state, target.obj)
        eval_effects(state, expr)
        value = nullness_of(state, expr)
        base = _base_name(target.obj)
        src_path = _path_of(expr)
        _kill_field(state, target.field_name)
        if base is not None:
            dst = field_key(base, target.field_name)
            if value != UNK:
                state[dst] = value
            if (
                src_path is not None
                and not (src_path[0] == FKEY and src_path[2] == target.field_name)
            ):
                state[_alias_key(dst, src_path)] = ALIAS
        return
    if isinstance(target, A.ArrayRead):
        eval_effects(state, target.arr)
        mark_nonnull(state, target.arr)
        eval_effects(state, target.index)
        eval_effects(state, expr)
        return
    raise TypeError(target)  # pragma: no cover


def refine_cond(state: dict, cond: A.Cond, truth: bool) -> Optional[dict]:
    """The state after cond evaluated to truth; None when impossible
    for the nullness facts tracked here."""
    s = dict(state)
    if isinstance(cond, A.And):
        if truth:
            s = refine_cond(s, cond.lhs, True)
            if s is None:
                return None
            return refine_cond(s, cond.rhs, True)
        # fails because the first conjunct is false, or because it holds
        # and a later one fails (short-circuit)
        first = refine_cond(s, cond.lhs, False)
        held = refine_cond(s, cond.lhs, True)
        rest = None if held is None else refine_cond(held, cond.rhs, False)
        return join(first, rest)
    if isinstance(cond, A.Cmp):
        eval_effects(s, cond.lhs)
        eval_effects(s, cond.rhs)
        null_test = isinstance(cond.lhs, A.NullLit) or isinstance(cond.rhs, A.NullLit)
        if null_test and cond.op in ("==", "!="):
            operand = cond.rhs if isinstance(cond.lhs, A.NullLit) else cond.lhs
            is_null = (cond.op == "==") == truth
            fact = NUL if is_null else NN
            path = _path_of(operand)
            if path is not None:
                prior = _get_fact(s, path)
                if prior != UNK and prior != fact:
                    return None
                _set_fact(s, path, fact)
        return s
    if isinstance(cond, A.BoolCond):
        eval_effects(s, cond.expr)
        return s
    raise TypeError(cond)  # pragma: no cover


def analyze_stmts(state: Optional[dict], stmts: list) -> Optional[dict]:
    """The state after executing stmts; None when every path returns."""
    s = None if state is None else dict(state)
    for stmt in stmts:
        if s is None:
            return None
        s = _analyze_stmt(s, stmt)
    return s


def _analyze_stmt(s: dict, stmt: A.Stmt) -> Optional[dict]:
    if isinstance(stmt, A.LocalDecl):
        return s
    if isinstance(stmt, A.Assign):
        assign_transfer(s, stmt.target, stmt.expr)
        return s
    if isinstance(stmt, A.Return):
        if stmt.expr is not None:
            eval_effects(s, stmt.expr)
        return None
    if isinstance(stmt, A.ExprStmt):
        eval_effects(s, stmt.expr)
        return s
    if isinstance(stmt, A.If):
        t = refine_cond(s, stmt.cond, True)
        e = refine_cond(s, stmt.cond, False)
        t_out = analyze_stmts(t, stmt.then_body) if t is not None else None
        e_out = analyze_stmts(e, stmt.else_body) if e is not None else None
        return join(t_out, e_out)
    if isinstance(stmt, A.While):
        _inv, exit_state = loop_invariant(s, stmt)
        return exit_state
    raise TypeError(stmt)  # pragma: no cover


def loop_invariant(state: dict, stmt: A.While):
    """(invariant at the loop header, state after the loop exits)."""
    inv = dict(state)
    for _ in range(64):
        entry = refine_cond(inv, stmt.cond, True)
        body_out = analyze_stmts(entry, stmt.body) if entry is not None else None
        new_inv = join(state, body_out) if body_out is not None else dict(state)
        if states_equal(new_inv, inv):
            break
        inv = new_inv
    exit_state = refine_cond(inv, stmt.cond, False)
    return inv, exit_state if exit_state is not None else dict(inv)
