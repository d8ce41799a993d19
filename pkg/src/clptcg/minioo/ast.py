"""Abstract syntax for the mini object-oriented source language.

The language is Java-like and deliberately small: single inheritance,
int/bool/array/reference fields, methods with if/while/return, field and
array access, `new`, and virtual calls.  Expression nodes carry their
resolved static type after the resolution pass (`typ` attribute).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..ir import TypeExpr


@dataclass
class Pos:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


# -- expressions ------------------------------------------------------------


@dataclass
class Expr:
    pos: Pos
    typ: Optional[TypeExpr] = field(default=None, init=False, compare=False)


@dataclass
class IntLit(Expr):
    value: int = 0


@dataclass
class BoolLit(Expr):
    value: bool = False


@dataclass
class NullLit(Expr):
    pass


@dataclass
class This(Expr):
    pass


@dataclass
class VarRef(Expr):
    name: str = ""


@dataclass
class FieldRead(Expr):
    obj: Expr = None
    field_name: str = ""


@dataclass
class ArrayRead(Expr):
    arr: Expr = None
    index: Expr = None


@dataclass
class ArrayLen(Expr):
    arr: Expr = None


@dataclass
class BinOp(Expr):
    op: str = ""  # + - * / %
    lhs: Expr = None
    rhs: Expr = None


@dataclass
class Neg(Expr):
    operand: Expr = None


@dataclass
class NewObject(Expr):
    cls: str = ""


@dataclass
class NewArray(Expr):
    elem_type: TypeExpr = None
    length: Expr = None


@dataclass
class Call(Expr):
    recv: Expr = None  # This for implicit receivers
    method: str = ""
    args: list = field(default_factory=list)


# -- conditions -------------------------------------------------------------


@dataclass
class Cond:
    pos: Pos


@dataclass
class Cmp(Cond):
    op: str = ""  # < <= > >= == !=
    lhs: Expr = None
    rhs: Expr = None


@dataclass
class And(Cond):
    lhs: Cond = None
    rhs: Cond = None


@dataclass
class BoolCond(Cond):
    """A bare boolean-typed expression used as a condition."""

    expr: Expr = None


# -- statements -------------------------------------------------------------


@dataclass
class Stmt:
    pos: Pos


@dataclass
class LocalDecl(Stmt):
    typ: TypeExpr = None
    names: list = field(default_factory=list)


@dataclass
class Assign(Stmt):
    # target is VarRef, FieldRead, or ArrayRead (used as an lvalue)
    target: Expr = None
    expr: Expr = None


@dataclass
class If(Stmt):
    cond: Cond = None
    then_body: list = field(default_factory=list)
    else_body: list = field(default_factory=list)


@dataclass
class While(Stmt):
    cond: Cond = None
    body: list = field(default_factory=list)


@dataclass
class Return(Stmt):
    expr: Optional[Expr] = None


@dataclass
class ExprStmt(Stmt):
    expr: Expr = None  # a call used for its effect


# -- declarations -----------------------------------------------------------


@dataclass
class MethodDecl:
    name: str
    params: list  # of (name, TypeExpr)
    ret_type: TypeExpr
    body: list
    pos: Pos
    cls: str = ""  # filled during resolution


@dataclass
class ClassDecl:
    name: str
    superclass: Optional[str]
    fields: list  # of (name, TypeExpr)
    methods: list
    pos: Pos


@dataclass
class SourceProgram:
    classes: list


ARITH_BIN_OPS = ("+", "-", "*", "/", "%")
CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")

# Comparison lowering: source operator -> (clause-IR guard, negated guard).
CMP_TO_GUARD = {
    "<": ("#<", "#>="),
    "<=": ("#=<", "#>"),
    ">": ("#>", "#=<"),
    ">=": ("#>=", "#<"),
    "==": ("#=", "#\\="),
    "!=": ("#\\=", "#="),
}
