"""Unification, constraint store, and labeling behavior."""

import itertools
import random

import pytest

from clptcg.terms import (
    ArithConstraint,
    Atom,
    Compound,
    DivisionByZero,
    Int,
    NULL,
    NotGround,
    Store,
    Var,
    eval_ground,
    int_div,
    int_mod,
    interval,
    label,
    post_constraint,
    ref,
    unify,
)


def test_unify_basics():
    s = Store()
    x, y = s.fresh(), s.fresh()
    assert unify(x, Int(3), s)
    assert s.deref(x) == Int(3)
    assert unify(y, x, s)
    assert s.deref(y) == Int(3)
    assert not unify(Int(3), Int(4), s)
    assert unify(Compound("f", (x, NULL)), Compound("f", (Int(3), NULL)), s)
    assert not unify(Atom("a"), Atom("b"), s)


def test_unify_occurs_check():
    s = Store()
    x = s.fresh()
    assert not unify(x, Compound("f", (x,)), s)


def test_unify_failure_rolls_back_partial_bindings():
    s = Store()
    x, y = s.fresh(), s.fresh()
    m = s.mark()
    assert not unify(Compound("f", (x, Int(1))), Compound("f", (Int(2), Int(3))), s)
    s.undo_to(m)
    assert isinstance(s.deref(x), Var)
    assert isinstance(s.deref(y), Var)


def test_trail_rollback_identity_random_scripts():
    """Any mix of bindings and constraint posts undoes to the exact
    prior store state."""
    rng = random.Random(7)
    for _ in range(50):
        s = Store()
        xs = [s.fresh() for _ in range(4)]
        # some initial state that must survive
        unify(xs[0], Int(rng.randint(-3, 3)), s)
        post_constraint(ArithConstraint("#>=", xs[1], Int(-2)), s)
        before = s.snapshot_key()
        m = s.mark()
        for _step in range(rng.randint(1, 8)):
            a = rng.choice(xs)
            b = rng.choice(xs + [Int(rng.randint(-3, 3))])
            if rng.random() < 0.5:
                unify(a, b, s)
            else:
                op = rng.choice(["#>", "#<", "#>=", "#=<", "#=", "#\\="])
                post_constraint(ArithConstraint(op, a, b), s)
        s.undo_to(m)
        assert s.snapshot_key() == before


def _brute_force(n_vars, constraints, lo, hi):
    sols = []
    for vals in itertools.product(range(lo, hi + 1), repeat=n_vars):
        ok = True
        for op, f in constraints:
            l, r = f(vals)
            ok = {
                "#>": l > r,
                "#>=": l >= r,
                "#<": l < r,
                "#=<": l <= r,
                "#=": l == r,
                "#\\=": l != r,
            }[op]
            if not ok:
                break
        if ok:
            sols.append(vals)
    return sols


def test_label_agrees_with_exhaustive_search():
    """On random small systems, label succeeds exactly when exhaustive
    enumeration finds a solution, and its answer satisfies everything."""
    rng = random.Random(99)
    lo, hi = -6, 6
    for _ in range(120):
        s = Store(domain_bounds=(lo, hi))
        n = rng.randint(1, 3)
        xs = [s.fresh() for _ in range(n)]
        cons = []
        checkers = []
        posted_ok = True
        for _c in range(rng.randint(1, 4)):
            op = rng.choice(["#>", "#>=", "#<", "#=<", "#=", "#\\="])
            i = rng.randrange(n)
            if rng.random() < 0.5:
                k = rng.randint(lo, hi)
                lhs, rhs = xs[i], Int(k)
                checkers.append((op, lambda v, i=i, k=k: (v[i], k)))
            else:
                j = rng.randrange(n)
                k = rng.randint(-3, 3)
                lhs, rhs = xs[i], Compound("+", (xs[j], Int(k)))
                checkers.append((op, lambda v, i=i, j=j, k=k: (v[i], v[j] + k)))
            cons.append(ArithConstraint(op, lhs, rhs))
        for c in cons:
            if not post_constraint(c, s):
                posted_ok = False
                break
        sols = _brute_force(n, checkers, lo, hi)
        if not posted_ok:
            assert not sols, "solver rejected a satisfiable system at post time"
            continue
        got = label(list(xs), s)
        assert got == bool(sols)
        if got:
            vals = tuple(s.deref(x).value for x in xs)
            assert vals in sols


def test_label_value_order_prefers_small_magnitudes():
    s = Store()
    x = s.fresh()
    assert label([x], s)
    assert s.deref(x) == Int(0)
    s2 = Store()
    y = s2.fresh()
    post_constraint(ArithConstraint("#\\=", y, Int(0)), s2)
    assert label([y], s2)
    assert s2.deref(y) == Int(1)


def test_interval_narrows_with_constraints():
    s = Store()
    x = s.fresh()
    post_constraint(ArithConstraint("#>", x, Int(2)), s)
    post_constraint(ArithConstraint("#=<", x, Int(5)), s)
    lo, hi = interval(x, s)
    assert (lo, hi) == (3, 5)


def test_unsatisfiable_constraints_detected():
    s = Store()
    x = s.fresh()
    assert post_constraint(ArithConstraint("#>", x, Int(3)), s)
    ok = post_constraint(ArithConstraint("#<", x, Int(3)), s)
    assert not ok or not label([x], s)


@pytest.mark.parametrize(
    "a,b,q,r",
    [(7, 2, 3, 1), (-7, 2, -3, -1), (7, -2, -3, 1), (-7, -2, 3, -1), (6, 3, 2, 0)],
)
def test_division_truncates_toward_zero(a, b, q, r):
    assert int_div(a, b) == q
    assert int_mod(a, b) == r
    assert b * q + r == a


def test_eval_ground():
    s = Store()
    x = s.fresh()
    unify(x, Int(5), s)
    e = Compound("+", (Compound("*", (x, Int(2))), Int(-3)))
    assert eval_ground(e, s) == 7
    y = s.fresh()
    with pytest.raises(NotGround):
        eval_ground(y, s)
    with pytest.raises(DivisionByZero):
        eval_ground(Compound("/", (Int(1), Int(0))), s)


def test_ref_and_null_terms():
    s = Store()
    assert unify(ref(Int(3)), ref(Int(3)), s)
    assert not unify(ref(Int(3)), NULL, s)
