"""Parser and name/type resolution for the mini object-oriented language.

`parse_source` produces a resolved `SourceProgram` together with the
`ClassTable` shared with the clause IR, or raises `SourceError` carrying
positioned diagnostics.
"""

from __future__ import annotations

import re
from typing import Optional

from ..ir import INT, BOOL, VOID, ArrayType, ClassInfo, ClassTable, FieldSig, TypeExpr, is_ref_type
from . import ast as A

KEYWORDS = {
    "class",
    "extends",
    "public",
    "if",
    "else",
    "while",
    "return",
    "new",
    "null",
    "this",
    "true",
    "false",
    "int",
    "bool",
    "void",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>&&|<=|>=|==|!=|[-+*/%<>=!])
  | (?P<punct>[{}()\[\].,;])
    """,
    re.VERBOSE,
)


class SourceError(Exception):
    """One or more positioned diagnostics from parsing or resolution."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class Diag:
    def __init__(self, pos: A.Pos, message: str):
        self.pos = pos
        self.message = message

    def __str__(self) -> str:
        return f"{self.pos}: {self.message}"


class _Tok:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind
        self.text = text
        self.pos = pos


def _tokenize(text: str):
    toks = []
    pos = 0
    line, col = 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SourceError([Diag(A.Pos(line, col), f"unexpected character {text[pos]!r}")])
        kind = m.lastgroup
        t = m.group()
        if kind != "ws":
            toks.append(_Tok(kind, t, A.Pos(line, col)))
        nl = t.count("\n")
        if nl:
            line += nl
            col = len(t) - t.rfind("\n")
        else:
            col += len(t)
        pos = m.end()
    toks.append(_Tok("eof", "", A.Pos(line, col)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, ahead: int = 0) -> _Tok:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def at_name(self, text: str) -> bool:
        return self.at("name", text)

    def expect(self, kind: str, text: Optional[str] = None) -> _Tok:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            raise SourceError([Diag(tok.pos, f"expected {want!r}, found {tok.text or 'end of input'!r}")])
        return self.next()

    # -- types ----------------------------------------------------------

    def at_type(self) -> bool:
        tok = self.peek()
        return tok.kind == "name" and (
            tok.text in (INT, BOOL, VOID) or tok.text not in KEYWORDS
        )

    def parse_type(self, allow_void: bool = False) -> TypeExpr:
        tok = self.expect("name")
        if tok.text in KEYWORDS and tok.text not in (INT, BOOL, VOID):
            raise SourceError([Diag(tok.pos, f"expected a type, found {tok.text!r}")])
        if tok.text == VOID and not allow_void:
            raise SourceError([Diag(tok.pos, "void is only valid as a return type")])
        t: TypeExpr = tok.text
        while self.at("punct", "[") and self.peek(1).text == "]":
            if t == VOID:
                raise SourceError([Diag(tok.pos, "cannot make an array of void")])
            self.next()
            self.next()
            t = ArrayType(t)
        return t

    # -- declarations ---------------------------------------------------

    def parse_program(self) -> A.SourceProgram:
        classes = []
        while not self.at("eof"):
            classes.append(self.parse_class())
        return A.SourceProgram(classes)

    def parse_class(self) -> A.ClassDecl:
        start = self.expect("name", "class")
        name = self.expect("name")
        if name.text in KEYWORDS:
            raise SourceError([Diag(name.pos, f"{name.text!r} cannot name a class")])
        superclass = None
        if self.at_name("extends"):
            self.next()
            superclass = self.expect("name").text
        self.expect("punct", "{")
        fields, methods = [], []
        while not self.at("punct", "}"):
            if self.at_name("public"):
                self.next()
            tok = self.peek()
            typ = self.parse_type(allow_void=True)
            mname = self.expect("name")
            if self.at("punct", "("):
                methods.append(self.parse_method(typ, mname))
            else:
                if typ == VOID:
                    raise SourceError([Diag(tok.pos, "fields cannot be void")])
                names = [mname.text]
                while self.at("punct", ","):
                    self.next()
                    names.append(self.expect("name").text)
                self.expect("punct", ";")
                fields.extend((n, typ) for n in names)
        self.expect("punct", "}")
        return A.ClassDecl(name.text, superclass, fields, methods, start.pos)

    def parse_method(self, ret_type: TypeExpr, name: _Tok) -> A.MethodDecl:
        self.expect("punct", "(")
        params = []
        if not self.at("punct", ")"):
            while True:
                ptype = self.parse_type()
                pname = self.expect("name")
                params.append((pname.text, ptype))
                if not self.at("punct", ","):
                    break
                self.next()
        self.expect("punct", ")")
        body = self.parse_block()
        return A.MethodDecl(name.text, params, ret_type, body, name.pos)

    # -- statements -----------------------------------------------------

    def parse_block(self) -> list:
        self.expect("punct", "{")
        stmts = []
        while not self.at("punct", "}"):
            stmts.extend(self.parse_stmt())
        self.expect("punct", "}")
        return stmts

    def parse_stmt_or_block(self) -> list:
        if self.at("punct", "{"):
            return self.parse_block()
        return self.parse_stmt()

    def parse_stmt(self) -> list:
        tok = self.peek()
        if self.at_name("if"):
            self.next()
            self.expect("punct", "(")
            cond = self.parse_cond()
            self.expect("punct", ")")
            then_body = self.parse_stmt_or_block()
            else_body = []
            if self.at_name("else"):
                self.next()
                else_body = self.parse_stmt_or_block()
            return [A.If(tok.pos, cond, then_body, else_body)]
        if self.at_name("while"):
            self.next()
            self.expect("punct", "(")
            cond = self.parse_cond()
            self.expect("punct", ")")
            body = self.parse_stmt_or_block()
            return [A.While(tok.pos, cond, body)]
        if self.at_name("return"):
            self.next()
            expr = None
            if not self.at("punct", ";"):
                expr = self.parse_expr()
            self.expect("punct", ";")
            return [A.Return(tok.pos, expr)]
        if self._at_local_decl():
            typ = self.parse_type()
            names = [self.expect("name").text]
            stmts = [A.LocalDecl(tok.pos, typ, names)]
            if self.at("op", "="):
                self.next()
                init = self.parse_expr()
                stmts.append(A.Assign(tok.pos, A.VarRef(tok.pos, names[0]), init))
            else:
                while self.at("punct", ","):
                    self.next()
                    names.append(self.expect("name").text)
            self.expect("punct", ";")
            return stmts
        # assignment or expression statement
        expr = self.parse_expr()
        if self.at("op", "="):
            eq = self.next()
            if not isinstance(expr, (A.VarRef, A.FieldRead, A.ArrayRead)):
                raise SourceError([Diag(eq.pos, "invalid assignment target")])
            rhs = self.parse_expr()
            self.expect("punct", ";")
            return [A.Assign(tok.pos, expr, rhs)]
        self.expect("punct", ";")
        if not isinstance(expr, A.Call):
            raise SourceError([Diag(tok.pos, "only calls may be used as statements")])
        return [A.ExprStmt(tok.pos, expr)]

    def _at_local_decl(self) -> bool:
        """Lookahead: `T x` / `T[] x` at statement position is a declaration."""
        if not self.at_type():
            return False
        j = self.i + 1
        while (
            self.toks[j].kind == "punct"
            and self.toks[j].text == "["
            and self.toks[j + 1].kind == "punct"
            and self.toks[j + 1].text == "]"
        ):
            j += 2
        return self.toks[j].kind == "name" and self.toks[j].text not in KEYWORDS

    # -- conditions -----------------------------------------------------

    def parse_cond(self) -> A.Cond:
        cond = self.parse_cond_atom()
        while self.at("op", "&&"):
            op = self.next()
            rhs = self.parse_cond_atom()
            cond = A.And(op.pos, cond, rhs)
        return cond

    def parse_cond_atom(self) -> A.Cond:
        # A parenthesized group may be a nested condition or an expression;
        # reparse as a condition when a comparison or && follows the group.
        if self.at("punct", "("):
            save = self.i
            self.next()
            try:
                inner = self.parse_cond()
                if self.at("punct", ")"):
                    self.next()
                    return inner
            except SourceError:
                pass
            self.i = save
        lhs = self.parse_expr()
        tok = self.peek()
        if tok.kind == "op" and tok.text in A.CMP_OPS:
            self.next()
            rhs = self.parse_expr()
            return A.Cmp(tok.pos, tok.text, lhs, rhs)
        return A.BoolCond(lhs.pos, lhs)

    # -- expressions ----------------------------------------------------

    def parse_expr(self) -> A.Expr:
        t = self.parse_mul()
        while self.at("op", "+") or self.at("op", "-"):
            op = self.next()
            rhs = self.parse_mul()
            t = A.BinOp(op.pos, op.text, t, rhs)
        return t

    def parse_mul(self) -> A.Expr:
        t = self.parse_unary()
        while self.at("op", "*") or self.at("op", "/") or self.at("op", "%"):
            op = self.next()
            rhs = self.parse_unary()
            t = A.BinOp(op.pos, op.text, t, rhs)
        return t

    def parse_unary(self) -> A.Expr:
        if self.at("op", "-"):
            op = self.next()
            return A.Neg(op.pos, self.parse_unary())
        return self.parse_postfix()

    def parse_postfix(self) -> A.Expr:
        e = self.parse_primary()
        while True:
            if self.at("punct", "."):
                self.next()
                name = self.expect("name")
                if self.at("punct", "("):
                    args = self.parse_args()
                    e = A.Call(name.pos, e, name.text, args)
                elif name.text == "length":
                    e = A.ArrayLen(name.pos, e)
                else:
                    e = A.FieldRead(name.pos, e, name.text)
            elif self.at("punct", "["):
                lb = self.next()
                idx = self.parse_expr()
                self.expect("punct", "]")
                e = A.ArrayRead(lb.pos, e, idx)
            else:
                return e

    def parse_args(self) -> list:
        self.expect("punct", "(")
        args = []
        if not self.at("punct", ")"):
            while True:
                args.append(self.parse_expr())
                if not self.at("punct", ","):
                    break
                self.next()
        self.expect("punct", ")")
        return args

    def parse_primary(self) -> A.Expr:
        tok = self.peek()
        if tok.kind == "num":
            self.next()
            return A.IntLit(tok.pos, int(tok.text))
        if self.at_name("true") or self.at_name("false"):
            self.next()
            return A.BoolLit(tok.pos, tok.text == "true")
        if self.at_name("null"):
            self.next()
            return A.NullLit(tok.pos)
        if self.at_name("this"):
            self.next()
            return A.This(tok.pos)
        if self.at_name("new"):
            self.next()
            base = self.expect("name")
            if self.at("punct", "["):
                self.next()
                length = self.parse_expr()
                self.expect("punct", "]")
                t: TypeExpr = base.text
                return A.NewArray(tok.pos, t, length)
            self.expect("punct", "(")
            self.expect("punct", ")")
            return A.NewObject(tok.pos, base.text)
        if self.at("punct", "("):
            self.next()
            e = self.parse_expr()
            self.expect("punct", ")")
            return e
        if tok.kind == "name" and tok.text not in KEYWORDS:
            self.next()
            if self.at("punct", "("):
                args = self.parse_args()
                return A.Call(tok.pos, A.This(tok.pos), tok.text, args)
            return A.VarRef(tok.pos, tok.text)
        raise SourceError([Diag(tok.pos, f"expected an expression, found {tok.text or 'end of input'!r}")])


# ---------------------------------------------------------------------------
# resolution and type checking
# ---------------------------------------------------------------------------


class _Resolver:
    def __init__(self, program: A.SourceProgram):
        self.program = program
        self.diags: list = []
        infos = []
        for c in program.classes:
            infos.append(
                ClassInfo(
                    c.name,
                    c.superclass,
                    tuple((FieldSig(c.name, n), t) for n, t in c.fields),
                    tuple(m.name for m in c.methods),
                )
            )
        try:
            self.table = ClassTable(infos)
        except ValueError as e:
            raise SourceError([Diag(program.classes[0].pos if program.classes else A.Pos(1, 1), str(e))])
        self.methods: dict = {}  # (cls, name) -> MethodDecl
        for c in program.classes:
            for m in c.methods:
                if (c.name, m.name) in self.methods:
                    self.err(m.pos, f"duplicate method {m.name!r} in class {c.name!r}")
                m.cls = c.name
                self.methods[(c.name, m.name)] = m

    def err(self, pos: A.Pos, msg: str) -> None:
        self.diags.append(Diag(pos, msg))

    def resolve_method(self, cls: str, name: str) -> Optional[A.MethodDecl]:
        """The implementation of name seen by an instance of cls."""
        for c in self.table.ancestry(cls):
            m = self.methods.get((c, name))
            if m is not None:
                return m
        return None

    def check_type(self, t: TypeExpr, pos: A.Pos) -> None:
        while isinstance(t, ArrayType):
            t = t.elem
        if t not in (INT, BOOL, VOID) and t not in self.table:
            self.err(pos, f"unknown type {t!r}")

    def assignable(self, dst: TypeExpr, src: Optional[TypeExpr]) -> bool:
        if src is None:  # null literal
            return is_ref_type(dst)
        if dst == src:
            return True
        if (
            isinstance(dst, str)
            and isinstance(src, str)
            and dst in self.table
            and src in self.table
        ):
            return self.table.is_subclass(src, dst)
        return False

    def run(self) -> None:
        for c in self.program.classes:
            for fname, ftype in c.fields:
                self.check_type(ftype, c.pos)
            for m in c.methods:
                self.check_method(c, m)
        if self.diags:
            raise SourceError(self.diags)

    def check_method(self, c: A.ClassDecl, m: A.MethodDecl) -> None:
        self.check_type(m.ret_type, m.pos)
        scope: dict = {"this": c.name}
        for pname, ptype in m.params:
            self.check_type(ptype, m.pos)
            if pname in scope:
                self.err(m.pos, f"duplicate parameter {pname!r}")
            scope[pname] = ptype
        self.check_stmts(m.body, scope, m)

    def check_stmts(self, stmts: list, scope: dict, m: A.MethodDecl) -> None:
        for s in stmts:
            self.check_stmt(s, scope, m)

    def check_stmt(self, s: A.Stmt, scope: dict, m: A.MethodDecl) -> None:
        if isinstance(s, A.LocalDecl):
            self.check_type(s.typ, s.pos)
            for n in s.names:
                if n in scope:
                    self.err(s.pos, f"duplicate variable {n!r}")
                scope[n] = s.typ
        elif isinstance(s, A.Assign):
            dst = self.check_lvalue(s.target, scope)
            src = self.check_expr(s.expr, scope)
            if dst is not None and not self.assignable(dst, src):
                self.err(s.pos, f"cannot assign {src!r} to {dst!r}")
        elif isinstance(s, A.If):
            self.check_cond(s.cond, scope, in_while=False)
            self.check_stmts(s.then_body, dict(scope), m)
            self.check_stmts(s.else_body, dict(scope), m)
        elif isinstance(s, A.While):
            self.check_cond(s.cond, scope, in_while=True)
            self.check_stmts(s.body, dict(scope), m)
        elif isinstance(s, A.Return):
            if s.expr is None:
                if m.ret_type != VOID:
                    self.err(s.pos, "missing return value")
            else:
                t = self.check_expr(s.expr, scope)
                if m.ret_type == VOID:
                    self.err(s.pos, "void method cannot return a value")
                elif not self.assignable(m.ret_type, t):
                    self.err(s.pos, f"cannot return {t!r} from a {m.ret_type!r} method")
        elif isinstance(s, A.ExprStmt):
            self.check_expr(s.expr, scope)
        else:  # pragma: no cover
            raise TypeError(s)

    def check_lvalue(self, e: A.Expr, scope: dict) -> Optional[TypeExpr]:
        if isinstance(e, A.VarRef) and e.name not in scope:
            # an unqualified field of the enclosing class
            fs = self.table.find_field(scope["this"], e.name)
            if fs is not None:
                return self.check_expr(e, scope)
        return self.check_expr(e, scope)

    def check_cond(self, c: A.Cond, scope: dict, in_while: bool) -> None:
        if isinstance(c, A.And):
            if not in_while:
                self.err(c.pos, "'&&' is only supported in while conditions")
            self.check_cond(c.lhs, scope, in_while)
            self.check_cond(c.rhs, scope, in_while)
            return
        if isinstance(c, A.Cmp):
            lt = self.check_expr(c.lhs, scope)
            rt = self.check_expr(c.rhs, scope)
            l_ref = lt is None or is_ref_type(lt)
            r_ref = rt is None or is_ref_type(rt)
            if l_ref != r_ref:
                self.err(c.pos, "cannot compare a reference with a number")
            elif l_ref:
                if c.op not in ("==", "!="):
                    self.err(c.pos, f"operator {c.op!r} is not defined on references")
                elif not (isinstance(c.lhs, A.NullLit) or isinstance(c.rhs, A.NullLit)):
                    self.err(c.pos, "reference comparisons must be against null")
            return
        if isinstance(c, A.BoolCond):
            t = self.check_expr(c.expr, scope)
            if t != BOOL:
                self.err(c.pos, "condition must be a comparison or a bool expression")
            return
        raise TypeError(c)  # pragma: no cover

    def check_expr(self, e: A.Expr, scope: dict) -> Optional[TypeExpr]:
        t = self._expr_type(e, scope)
        e.typ = t
        return t

    def _expr_type(self, e: A.Expr, scope: dict) -> Optional[TypeExpr]:
        if isinstance(e, A.IntLit):
            return INT
        if isinstance(e, A.BoolLit):
            return BOOL
        if isinstance(e, A.NullLit):
            return None
        if isinstance(e, A.This):
            return scope["this"]
        if isinstance(e, A.VarRef):
            if e.name in scope:
                return scope[e.name]
            # sugar: unqualified field access on this
            fs = self.table.find_field(scope["this"], e.name)
            if fs is not None:
                repl = A.FieldRead(e.pos, A.This(e.pos), e.name)
                e.__class__ = A.FieldRead
                e.__dict__.clear()
                e.__dict__.update(repl.__dict__)
                return self.check_expr(e, scope)
            self.err(e.pos, f"undeclared variable {e.name!r}")
            return INT
        if isinstance(e, A.FieldRead):
            ot = self.check_expr(e.obj, scope)
            if not isinstance(ot, str) or ot not in self.table:
                if ot is not None:
                    self.err(e.pos, f"{ot!r} has no fields")
                return INT
            fs = self.table.find_field(ot, e.field_name)
            if fs is None:
                self.err(e.pos, f"class {ot!r} has no field {e.field_name!r}")
                return INT
            return self.table.field_type(fs)
        if isinstance(e, A.ArrayRead):
            at = self.check_expr(e.arr, scope)
            it = self.check_expr(e.index, scope)
            if it != INT:
                self.err(e.pos, "array index must be an int")
            if not isinstance(at, ArrayType):
                if at is not None:
                    self.err(e.pos, f"{at!r} is not an array")
                return INT
            return at.elem
        if isinstance(e, A.ArrayLen):
            at = self.check_expr(e.arr, scope)
            if not isinstance(at, ArrayType) and at is not None:
                self.err(e.pos, f"{at!r} is not an array")
            return INT
        if isinstance(e, A.BinOp):
            lt = self.check_expr(e.lhs, scope)
            rt = self.check_expr(e.rhs, scope)
            if lt != INT or rt != INT:
                self.err(e.pos, f"operator {e.op!r} needs int operands")
            return INT
        if isinstance(e, A.Neg):
            t = self.check_expr(e.operand, scope)
            if t != INT:
                self.err(e.pos, "unary '-' needs an int operand")
            return INT
        if isinstance(e, A.NewObject):
            if e.cls not in self.table:
                self.err(e.pos, f"unknown class {e.cls!r}")
            return e.cls
        if isinstance(e, A.NewArray):
            self.check_type(e.elem_type, e.pos)
            if self.check_expr(e.length, scope) != INT:
                self.err(e.pos, "array length must be an int")
            return ArrayType(e.elem_type)
        if isinstance(e, A.Call):
            rt = self.check_expr(e.recv, scope)
            if not isinstance(rt, str) or rt not in self.table:
                self.err(e.pos, f"cannot call a method on {rt!r}")
                return INT
            target = self.resolve_method(rt, e.method)
            if target is None:
                self.err(e.pos, f"class {rt!r} has no method {e.method!r}")
                return INT
            if len(e.args) != len(target.params):
                self.err(e.pos, f"{e.method!r} takes {len(target.params)} arguments")
            for arg, (_, ptype) in zip(e.args, target.params):
                at = self.check_expr(arg, scope)
                if not self.assignable(ptype, at):
                    self.err(arg.pos, f"cannot pass {at!r} as {ptype!r}")
            return target.ret_type if target.ret_type != VOID else VOID
        raise TypeError(e)  # pragma: no cover


class Resolved:
    """A parsed, name-resolved and type-checked source program."""

    def __init__(self, program: A.SourceProgram, table: ClassTable, resolver: _Resolver):
        self.program = program
        self.table = table
        self._resolver = resolver

    def resolve_method(self, cls: str, name: str) -> Optional[A.MethodDecl]:
        return self._resolver.resolve_method(cls, name)


def parse_source(text: str) -> Resolved:
    program = _Parser(text).parse_program()
    resolver = _Resolver(program)
    resolver.run()
    return Resolved(program, resolver.table, resolver)
