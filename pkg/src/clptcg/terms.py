"""Terms, substitutions, unification and the bounded-integer constraint store.

This is the CLP substrate everything else evaluates on.  Terms are immutable;
all mutable state (variable bindings, posted constraints) lives in a Store and
every mutation is recorded on a trail so failed alternatives can be rolled
back exactly.

Key invariants:
- A failed unify/post leaves the store bit-identical to its pre-state.
- Binding chains are acyclic (occurs check is on by default).
- Labeling enumerates candidate values by ascending absolute value, with
  ties broken negative-last: 0, 1, -1, 2, -2, ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Term):
    id: int

    def __repr__(self) -> str:
        return f"_V{self.id}"


@dataclass(frozen=True)
class Int(Term):
    value: int

    def __repr__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Atom(Term):
    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Compound(Term):
    functor: str
    args: tuple

    def __repr__(self) -> str:
        return f"{self.functor}({', '.join(map(repr, self.args))})"


NULL = Atom("null")
OK = Atom("ok")
NIL = Atom("[]")


def ref(inner: Term) -> Compound:
    """A non-null reference value r(Inner)."""
    return Compound("r", (inner,))


def is_ref(t: Term) -> bool:
    return isinstance(t, Compound) and t.functor == "r" and len(t.args) == 1


def exc(inner: Term) -> Compound:
    return Compound("exc", (inner,))


def is_exc(t: Term) -> bool:
    return isinstance(t, Compound) and t.functor == "exc" and len(t.args) == 1


def cons(head: Term, tail: Term) -> Compound:
    return Compound(".", (head, tail))


def is_cons(t: Term) -> bool:
    return isinstance(t, Compound) and t.functor == "." and len(t.args) == 2


def make_list(items: Iterable[Term], tail: Term = NIL) -> Term:
    out = tail
    for item in reversed(list(items)):
        out = cons(item, out)
    return out


# Arithmetic comparison and operator symbols of the clause language.
REL_OPS = ("#>", "#<", "#>=", "#=<", "#=", "#\\=")
ARITH_OPS = ("+", "-", "*", "/", "mod")

NEGATED_REL = {
    "#>": "#=<",
    "#=<": "#>",
    "#<": "#>=",
    "#>=": "#<",
    "#=": "#\\=",
    "#\\=": "#=",
}


@dataclass(frozen=True)
class ArithConstraint:
    """lhs <op> rhs over integer expressions built from +, -, *, /, mod."""

    op: str
    lhs: Term
    rhs: Term

    def __repr__(self) -> str:
        return f"{self.lhs!r} {self.op} {self.rhs!r}"


class StoreError(Exception):
    pass


class Store:
    """Bindings (sigma), arithmetic constraints (gamma) and the undo trail.

    A Store is confined to a single derivation at a time.  Sibling branches
    must either run sequentially with mark/undo_to, or on independent stores.
    """

    def __init__(self, domain_bounds: tuple = (-8, 8)):
        self.bindings: dict = {}
        self.constraints: list = []
        self.trail: list = []
        self.domain_bounds = domain_bounds
        self._var_counter = 0
        self._ref_counter = 0
        # Ids of variables mentioned by some posted constraint; binding one
        # of these forces a consistency re-check.
        self._constrained: set = set()

    # -- variable / reference supply ------------------------------------

    def fresh(self) -> Var:
        self._var_counter += 1
        return Var(self._var_counter)

    def fresh_ref(self) -> Int:
        """Concrete heap references are non-negative and never reused."""
        r = Int(self._ref_counter)
        self._ref_counter += 1
        return r

    # -- trail ----------------------------------------------------------

    def mark(self) -> int:
        return len(self.trail)

    def undo_to(self, mark: int) -> None:
        while len(self.trail) > mark:
            kind, payload = self.trail.pop()
            if kind == "bind":
                del self.bindings[payload]
            elif kind == "constraint":
                self.constraints.pop()
                if payload:
                    self._constrained.difference_update(payload)
            else:  # pragma: no cover - trail kinds are closed
                raise StoreError(f"unknown trail entry {kind}")

    def snapshot_key(self):
        """A hashable fingerprint of the whole store, for rollback tests."""
        return (
            tuple(sorted(self.bindings.items(), key=lambda kv: kv[0])),
            tuple(self.constraints),
        )

    # -- bindings -------------------------------------------------------

    def bind(self, var: Var, term: Term) -> None:
        if var.id in self.bindings:
            raise StoreError(f"variable {var} already bound")
        self.bindings[var.id] = term
        self.trail.append(("bind", var.id))

    def deref(self, t: Term) -> Term:
        while isinstance(t, Var):
            bound = self.bindings.get(t.id)
            if bound is None:
                return t
            t = bound
        return t

    def resolve(self, t: Term) -> Term:
        """Deep dereference: replace every bound variable inside t."""
        t = self.deref(t)
        if isinstance(t, Compound):
            return Compound(t.functor, tuple(self.resolve(a) for a in t.args))
        return t

    def term_vars(self, t: Term, acc: Optional[list] = None) -> list:
        """Free variables of t under the current bindings, left-to-right."""
        if acc is None:
            acc = []
        t = self.deref(t)
        if isinstance(t, Var):
            if t not in acc:
                acc.append(t)
        elif isinstance(t, Compound):
            for a in t.args:
                self.term_vars(a, acc)
        return acc


def occurs(var: Var, t: Term, store: Store) -> bool:
    t = store.deref(t)
    if isinstance(t, Var):
        return t == var
    if isinstance(t, Compound):
        return any(occurs(var, a, store) for a in t.args)
    return False


def unify(a: Term, b: Term, store: Store, occurs_check: bool = True) -> bool:
    """Attempt to make a and b equal by binding variables.

    Returns True on success.  On failure every change made during the
    attempt (including any constraint-consistency bookkeeping) is undone.
    """
    mark = store.mark()
    stack = [(a, b)]
    touched_constrained = False
    while stack:
        x, y = stack.pop()
        x = store.deref(x)
        y = store.deref(y)
        if isinstance(x, Var) and isinstance(y, Var):
            if x != y:
                store.bind(x, y)
                touched_constrained |= x.id in store._constrained
            continue
        if isinstance(x, Var) or isinstance(y, Var):
            if isinstance(y, Var):
                x, y = y, x
            if occurs_check and occurs(x, y, store):
                store.undo_to(mark)
                return False
            store.bind(x, y)
            touched_constrained |= x.id in store._constrained
            continue
        if isinstance(x, Int) and isinstance(y, Int):
            if x.value != y.value:
                store.undo_to(mark)
                return False
            # Binding an Int to a constrained variable position can decide a
            # pending constraint; that case is handled by the Var branches.
            continue
        if isinstance(x, Atom) and isinstance(y, Atom):
            if x.name != y.name:
                store.undo_to(mark)
                return False
            continue
        if isinstance(x, Compound) and isinstance(y, Compound):
            if x.functor != y.functor or len(x.args) != len(y.args):
                store.undo_to(mark)
                return False
            for pair in zip(reversed(x.args), reversed(y.args)):
                stack.append(pair)
            continue
        store.undo_to(mark)
        return False
    if touched_constrained and not check_consistency(store):
        store.undo_to(mark)
        return False
    return True


def syntactic_eq(a: Term, b: Term, store: Store) -> bool:
    """True iff a and b dereference to identical terms.  Creates no bindings."""
    a = store.deref(a)
    b = store.deref(b)
    if isinstance(a, Var) or isinstance(b, Var):
        return a == b
    if isinstance(a, Compound) and isinstance(b, Compound):
        return (
            a.functor == b.functor
            and len(a.args) == len(b.args)
            and all(syntactic_eq(x, y, store) for x, y in zip(a.args, b.args))
        )
    return a == b


# -- arithmetic evaluation ----------------------------------------------


def int_div(a: int, b: int) -> int:
    """Integer division truncating toward zero."""
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def int_mod(a: int, b: int) -> int:
    """Remainder with the dividend's sign (a == b * int_div(a,b) + mod)."""
    return a - b * int_div(a, b)


class NotGround(Exception):
    pass


class DivisionByZero(Exception):
    pass


def eval_ground(t: Term, store: Store) -> int:
    t = store.deref(t)
    if isinstance(t, Int):
        return t.value
    if isinstance(t, Compound):
        if t.functor == "-" and len(t.args) == 1:
            return -eval_ground(t.args[0], store)
        if t.functor in ARITH_OPS and len(t.args) == 2:
            a = eval_ground(t.args[0], store)
            b = eval_ground(t.args[1], store)
            if t.functor == "+":
                return a + b
            if t.functor == "-":
                return a - b
            if t.functor == "*":
                return a * b
            if b == 0:
                raise DivisionByZero()
            return int_div(a, b) if t.functor == "/" else int_mod(a, b)
    raise NotGround()


def _linearize(t: Term, store: Store):
    """Return (coeffs: {var_id: c}, const) for a linear expression, else None."""
    t = store.deref(t)
    if isinstance(t, Int):
        return {}, t.value
    if isinstance(t, Var):
        return {t.id: 1}, 0
    if isinstance(t, Compound):
        if t.functor == "-" and len(t.args) == 1:
            sub = _linearize(t.args[0], store)
            if sub is None:
                return None
            return {v: -c for v, c in sub[0].items()}, -sub[1]
        if t.functor in ("+", "-") and len(t.args) == 2:
            la = _linearize(t.args[0], store)
            lb = _linearize(t.args[1], store)
            if la is None or lb is None:
                return None
            sign = 1 if t.functor == "+" else -1
            coeffs = dict(la[0])
            for v, c in lb[0].items():
                coeffs[v] = coeffs.get(v, 0) + sign * c
            return {v: c for v, c in coeffs.items() if c != 0}, la[1] + sign * lb[1]
        if t.functor == "*" and len(t.args) == 2:
            la = _linearize(t.args[0], store)
            lb = _linearize(t.args[1], store)
            if la is None or lb is None:
                return None
            if not la[0]:
                k, other = la[1], lb
            elif not lb[0]:
                k, other = lb[1], la
            else:
                return None
            return {v: k * c for v, c in other[0].items() if k * c != 0}, k * other[1]
        if t.functor in ("/", "mod") and len(t.args) == 2:
            try:
                return {}, eval_ground(t, store)
            except (NotGround, DivisionByZero):
                return None
    return None


NEG_INF = -math.inf
POS_INF = math.inf


def _canonical(coeffs: dict):
    """Sign-normalised key for a linear form; returns (key, sign)."""
    items = tuple(sorted(coeffs.items()))
    if items[0][1] < 0:
        return tuple((v, -c) for v, c in items), -1
    return items, 1


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def _floor_div(a: int, b: int) -> int:
    return a // b


def check_consistency(store: Store, want_domains: bool = False):
    """Re-derive interval information for the current constraint set.

    Returns False (or (False, {})) on inconsistency.  Propagation is bounds
    consistency over linear forms; nonlinear constraints are checked exactly
    once ground, except that a divisor provably equal to zero fails eagerly.
    """
    # interval per canonical linear form; diseqs as forbidden form values
    intervals: dict = {}
    diseqs: list = []
    residual: list = []

    def fail():
        return (False, {}) if want_domains else False

    for c in store.constraints:
        lin_l = _linearize(c.lhs, store)
        lin_r = _linearize(c.rhs, store)
        if lin_l is None or lin_r is None:
            residual.append(c)
            continue
        coeffs = dict(lin_l[0])
        for v, k in lin_r[0].items():
            coeffs[v] = coeffs.get(v, 0) - k
        coeffs = {v: k for v, k in coeffs.items() if k != 0}
        const = lin_l[1] - lin_r[1]  # form = sum + const, relop 0
        if not coeffs:
            okc = {
                "#>": const > 0,
                "#>=": const >= 0,
                "#<": const < 0,
                "#=<": const <= 0,
                "#=": const == 0,
                "#\\=": const != 0,
            }[c.op]
            if not okc:
                return fail()
            continue
        key, sign = _canonical(coeffs)
        # constraint on S = sum of canonical form: S relop -const (adjusted)
        bound = -const * sign
        lo, hi = intervals.get(key, (NEG_INF, POS_INF))
        op = c.op
        if sign < 0:
            op = {"#>": "#<", "#<": "#>", "#>=": "#=<", "#=<": "#>=",
                  "#=": "#=", "#\\=": "#\\="}[op]
        if op == "#>":
            lo = max(lo, bound + 1)
        elif op == "#>=":
            lo = max(lo, bound)
        elif op == "#<":
            hi = min(hi, bound - 1)
        elif op == "#=<":
            hi = min(hi, bound)
        elif op == "#=":
            lo = max(lo, bound)
            hi = min(hi, bound)
        else:  # "#\="
            diseqs.append((key, bound))
            intervals.setdefault(key, (lo, hi))
            continue
        if lo > hi:
            return fail()
        intervals[key] = (lo, hi)

    # residual nonlinear constraints: exact once ground, eager divisor-0 check
    for c in residual:
        try:
            lv = eval_ground(c.lhs, store)
            rv = eval_ground(c.rhs, store)
        except NotGround:
            if _divisor_must_be_zero(c.lhs, store) or _divisor_must_be_zero(c.rhs, store):
                return fail()
            continue
        except DivisionByZero:
            return fail()
        okc = {
            "#>": lv > rv,
            "#>=": lv >= rv,
            "#<": lv < rv,
            "#=<": lv <= rv,
            "#=": lv == rv,
            "#\\=": lv != rv,
        }[c.op]
        if not okc:
            return fail()

    # bounds propagation between per-variable domains and multi-var forms
    domains: dict = {}
    for key, (lo, hi) in intervals.items():
        if len(key) == 1:
            (v, k), = key
            dlo = _ceil_div(lo, k) if lo != NEG_INF else NEG_INF
            dhi = _floor_div(hi, k) if hi != POS_INF else POS_INF
            cur = domains.get(v, (NEG_INF, POS_INF))
            domains[v] = (max(cur[0], dlo), min(cur[1], dhi))

    multi = {k: iv for k, iv in intervals.items() if len(k) > 1}
    changed = True
    passes = 0
    while changed and passes < 200:
        changed = False
        passes += 1
        for key, (lo, hi) in multi.items():
            for i, (v, k) in enumerate(key):
                rest_lo, rest_hi = 0, 0
                for j, (w, kw) in enumerate(key):
                    if j == i:
                        continue
                    wlo, whi = domains.get(w, (NEG_INF, POS_INF))
                    a = kw * wlo
                    b = kw * whi
                    rest_lo += min(a, b)
                    rest_hi += max(a, b)
                # k*v in [lo - rest_hi, hi - rest_lo]
                vlo = lo - rest_hi
                vhi = hi - rest_lo
                if k < 0:
                    vlo, vhi = -vhi, -vlo
                    kk = -k
                else:
                    kk = k
                nlo = _ceil_div(vlo, kk) if vlo not in (NEG_INF, POS_INF) else vlo
                nhi = _floor_div(vhi, kk) if vhi not in (NEG_INF, POS_INF) else vhi
                cur = domains.get(v, (NEG_INF, POS_INF))
                new = (max(cur[0], nlo), min(cur[1], nhi))
                if new != cur:
                    domains[v] = new
                    if new[0] > new[1]:
                        return fail()
                    changed = True
        # fold domains back into multi-var form intervals
        for key in list(multi):
            lo, hi = multi[key]
            slo, shi = 0, 0
            for v, k in key:
                vlo, vhi = domains.get(v, (NEG_INF, POS_INF))
                a, b = k * vlo, k * vhi
                slo += min(a, b)
                shi += max(a, b)
            if slo > hi or shi < lo:
                return fail()

    for v, (lo, hi) in domains.items():
        if lo > hi:
            return fail()
    for key, forbidden in diseqs:
        lo, hi = intervals.get(key, (NEG_INF, POS_INF))
        if len(key) == 1:
            (v, k), = key
            dlo, dhi = domains.get(v, (NEG_INF, POS_INF))
            if dlo == dhi and k * dlo == forbidden:
                return fail()
        if lo == hi == forbidden:
            return fail()

    return (True, domains) if want_domains else True


def _divisor_must_be_zero(t: Term, store: Store) -> bool:
    t = store.deref(t)
    if isinstance(t, Compound):
        if t.functor in ("/", "mod") and len(t.args) == 2:
            d = store.deref(t.args[1])
            if isinstance(d, Int) and d.value == 0:
                return True
        return any(_divisor_must_be_zero(a, store) for a in t.args)
    return False


def post_constraint(c: ArithConstraint, store: Store) -> bool:
    """Add c to the store and propagate.  Rolls back entirely on failure."""
    new_vars = {v.id for v in store.term_vars(c.lhs)} | {
        v.id for v in store.term_vars(c.rhs)
    }
    added = new_vars - store._constrained
    store._constrained.update(added)
    store.constraints.append(c)
    store.trail.append(("constraint", frozenset(added)))
    if not check_consistency(store):
        store.undo_to(store.mark() - 1)
        return False
    return True


def interval(var: Var, store: Store):
    """Derived bounds-consistent interval of var (may be infinite)."""
    ok, domains = check_consistency(store, want_domains=True)
    if not ok:
        raise StoreError("interval() on an inconsistent store")
    return domains.get(var.id, (NEG_INF, POS_INF))


def _candidates(lo: int, hi: int) -> Iterator[int]:
    vals = sorted(range(lo, hi + 1), key=lambda v: (abs(v), v < 0))
    return iter(vals)


def _check_all_ground(store: Store) -> bool:
    for c in store.constraints:
        try:
            lv = eval_ground(c.lhs, store)
            rv = eval_ground(c.rhs, store)
        except NotGround:
            return False
        except DivisionByZero:
            return False
        okc = {
            "#>": lv > rv,
            "#>=": lv >= rv,
            "#<": lv < rv,
            "#=<": lv <= rv,
            "#=": lv == rv,
            "#\\=": lv != rv,
        }[c.op]
        if not okc:
            return False
    return True


def label(variables: list, store: Store) -> bool:
    """Bind every variable to an integer satisfying the constraint store.

    Values are tried by ascending absolute value within the variable's
    derived interval intersected with the store's domain_bounds.  The first
    full assignment (in that order, variables left to right) is kept; every
    constraint is then re-checked with exact integer arithmetic.  Returns
    False (store untouched) when no assignment exists.
    """
    todo = [v for v in (store.deref(v) for v in variables) if isinstance(v, Var)]
    seen = set()
    todo = [v for v in todo if not (v.id in seen or seen.add(v.id))]
    mark = store.mark()

    def go(i: int) -> bool:
        if i == len(todo):
            return _check_all_ground(store)
        v = store.deref(todo[i])
        if not isinstance(v, Var):
            return go(i + 1)
        ok, domains = check_consistency(store, want_domains=True)
        if not ok:
            return False
        lo, hi = domains.get(v.id, (NEG_INF, POS_INF))
        lo = max(lo, store.domain_bounds[0])
        hi = min(hi, store.domain_bounds[1])
        if lo > hi:
            return False
        for val in _candidates(int(lo), int(hi)):
            m = store.mark()
            if unify(v, Int(val), store):
                if go(i + 1):
                    return True
                store.undo_to(m)
        return False

    if go(0):
        return True
    store.undo_to(mark)
    return False
