"""Clause intermediate representation for compiled object-oriented methods.

A program is a set of predicates.  Every clause has the shape

    Pred(Args_in, Args_out, H_in, H_out, ExFlag) :- [Guard,] B1, ..., Bn.

where the heap arguments are always variables and the body threads the
heap linearly through builtin operations and calls.  The concrete syntax
is Prolog-like: `%` comments, clauses terminated by `.`, quoted class
names, `r(V)`/`null` references, `#`-prefixed relational operators, and
field signatures written `'Class':field`.

Directives describe the class table and the callable entry points:

    :- class('SLNode', [data: int, next: 'SLNode']).
    :- class('B', extends('A'), [g: int]).
    :- entry('SortedList.merge', merge, [this: 'SortedList', l: 'SortedList'], void).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .terms import (
    NEGATED_REL,
    REL_OPS,
    Atom,
    Compound,
    Int,
    NIL,
    Term,
    Var,
    cons,
    is_cons,
)


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

INT = "int"
BOOL = "bool"
VOID = "void"


@dataclass(frozen=True)
class ArrayType:
    elem: "TypeExpr"

    def __repr__(self) -> str:
        return f"array({self.elem!r})"


# A TypeExpr is "int", "bool", "void", a class-name string, or ArrayType.
TypeExpr = Union[str, ArrayType]


def is_ref_type(t: TypeExpr) -> bool:
    return isinstance(t, ArrayType) or t not in (INT, BOOL, VOID)


@dataclass(frozen=True)
class FieldSig:
    """A qualified field signature 'C':f — the class that declares f."""

    cls: str
    name: str

    def term(self) -> Compound:
        return Compound(":", (Atom(self.cls), Atom(self.name)))

    def __str__(self) -> str:
        return f"{_atom_text(self.cls)}:{self.name}"


def fsig_of_term(t: Term) -> Optional[FieldSig]:
    if (
        isinstance(t, Compound)
        and t.functor == ":"
        and len(t.args) == 2
        and isinstance(t.args[0], Atom)
        and isinstance(t.args[1], Atom)
    ):
        return FieldSig(t.args[0].name, t.args[1].name)
    return None


@dataclass(frozen=True)
class ClassInfo:
    name: str
    superclass: Optional[str]
    fields: tuple  # of (FieldSig, TypeExpr), own fields only
    methods: tuple = ()  # method names declared in this class


class ClassTable:
    """Immutable single-inheritance class hierarchy with qualified fields."""

    def __init__(self, classes):
        self.classes: dict = {}
        for c in classes:
            if c.name in self.classes:
                raise ValueError(f"duplicate class {c.name}")
            self.classes[c.name] = c
        for c in self.classes.values():
            if c.superclass is not None and c.superclass not in self.classes:
                raise ValueError(f"unknown superclass {c.superclass} of {c.name}")
        # reject inheritance cycles
        for name in self.classes:
            seen = set()
            cur: Optional[str] = name
            while cur is not None:
                if cur in seen:
                    raise ValueError(f"inheritance cycle through {name}")
                seen.add(cur)
                cur = self.classes[cur].superclass

    def __contains__(self, name: str) -> bool:
        return name in self.classes

    def ancestry(self, name: str) -> list:
        """name and its superclasses, most derived first."""
        out = []
        cur: Optional[str] = name
        while cur is not None:
            out.append(cur)
            cur = self.classes[cur].superclass
        return out

    def is_subclass(self, sub: str, sup: str) -> bool:
        """Reflexive-transitive subclass test."""
        return sup in self.ancestry(sub)

    def subclasses(self, name: str) -> list:
        """name first, then its strict subclasses in declaration order."""
        out = [name]
        for other in self.classes:
            if other != name and self.is_subclass(other, name):
                out.append(other)
        return out

    def declared_fields(self, name: str) -> list:
        """All fields of an instance of name: superclass fields first."""
        out = []
        for cls in reversed(self.ancestry(name)):
            out.extend(self.classes[cls].fields)
        return out

    def find_field(self, cls: str, fname: str) -> Optional[FieldSig]:
        """Resolve an unqualified field name against the ancestry of cls."""
        for c in self.ancestry(cls):
            for fs, _t in self.classes[c].fields:
                if fs.name == fname:
                    return fs
        return None

    def field_type(self, fsig: FieldSig) -> Optional[TypeExpr]:
        info = self.classes.get(fsig.cls)
        if info is None:
            return None
        for fs, t in info.fields:
            if fs == fsig:
                return t
        return None


# ---------------------------------------------------------------------------
# guards and body literals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArithGuard:
    op: str  # one of REL_OPS
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class RefNeqGuard:
    a: Term
    b: Term


@dataclass(frozen=True)
class TypeGuardLit:
    h: Term
    ref: Term
    cls: str


Guard = Union[ArithGuard, RefNeqGuard, TypeGuardLit]


@dataclass(frozen=True)
class AssignLit:
    var: Term
    expr: Term


@dataclass(frozen=True)
class CallLit:
    pred: str
    args_in: tuple
    args_out: tuple
    h_in: Term
    h_out: Term
    exflag: Term


@dataclass(frozen=True)
class NewObjectLit:
    h: Term
    cls: str
    ref: Term
    h_out: Term


@dataclass(frozen=True)
class NewArrayLit:
    h: Term
    elem_type: Term
    length: Term
    ref: Term
    h_out: Term


@dataclass(frozen=True)
class LengthLit:
    h: Term
    ref: Term
    out: Term


@dataclass(frozen=True)
class GetFieldLit:
    h: Term
    ref: Term
    fsig: FieldSig
    out: Term


@dataclass(frozen=True)
class SetFieldLit:
    h: Term
    ref: Term
    fsig: FieldSig
    val: Term
    h_out: Term


@dataclass(frozen=True)
class GetArrayLit:
    h: Term
    ref: Term
    idx: Term
    out: Term


@dataclass(frozen=True)
class SetArrayLit:
    h: Term
    ref: Term
    idx: Term
    val: Term
    h_out: Term


BodyLiteral = Union[
    AssignLit,
    CallLit,
    NewObjectLit,
    NewArrayLit,
    LengthLit,
    GetFieldLit,
    SetFieldLit,
    GetArrayLit,
    SetArrayLit,
]


@dataclass(frozen=True)
class Clause:
    args_in: tuple
    args_out: tuple
    h_in: Term
    h_out: Term
    exflag: Term
    guard: Optional[Guard]
    body: tuple


@dataclass
class Predicate:
    name: str
    clauses: list = field(default_factory=list)


@dataclass(frozen=True)
class EntrySpec:
    name: str  # "Class.method"
    pred: str
    param_names: tuple
    param_types: tuple  # includes the receiver type first
    ret_type: TypeExpr


@dataclass
class Program:
    predicates: dict = field(default_factory=dict)  # name -> Predicate
    class_table: ClassTable = None
    entries: dict = field(default_factory=dict)  # "Class.method" -> EntrySpec
    var_names: dict = field(default_factory=dict)  # Var id -> display name

    def predicate(self, name: str) -> Optional[Predicate]:
        return self.predicates.get(name)


BUILTIN_NAMES = {
    "new_object",
    "new_array",
    "length",
    "get_field",
    "set_field",
    "get_array",
    "set_array",
    "type",
}


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


class IrSyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|%[^\n]*)
  | (?P<neck>:-)
  | (?P<relop>\#>=|\#=<|\#<|\#>|\#\\=|\#=)
  | (?P<refneq>\\==)
  | (?P<num>\d+)
  | (?P<var>[A-Z_][A-Za-z0-9_]*'*)
  | (?P<atom>[a-z][A-Za-z0-9_]*)
  | (?P<qatom>'(?:[^'\\]|\\.)*')
  | (?P<punct>[()\[\],.|:+\-*/])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    line, col = 1, 1
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise IrSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok_text = m.group()
        if kind != "ws":
            toks.append(_Tok(kind, tok_text, line, col))
        nl = tok_text.count("\n")
        if nl:
            line += nl
            col = len(tok_text) - tok_text.rfind("\n")
        else:
            col += len(tok_text)
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


def _unquote(text: str) -> str:
    body = text[1:-1]
    return body.replace("\\'", "'").replace("\\\\", "\\")


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.var_ids: dict = {}  # per-clause: name -> Var
        self.var_names: dict = {}
        self._var_counter = 0

    # -- token helpers --------------------------------------------------

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, text: Optional[str] = None) -> _Tok:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            raise IrSyntaxError(f"expected {want!r}, found {tok.text!r}", tok.line, tok.col)
        return self.next()

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    # -- variables ------------------------------------------------------

    def new_clause_scope(self) -> None:
        self.var_ids = {}

    def var(self, name: str) -> Var:
        if name == "_":
            self._var_counter += 1
            v = Var(-self._var_counter)
            self.var_names[v.id] = "_"
            return v
        if name not in self.var_ids:
            self._var_counter += 1
            v = Var(-self._var_counter)
            self.var_ids[name] = v
            self.var_names[v.id] = name
        return self.var_ids[name]

    # -- terms ----------------------------------------------------------

    def parse_term(self) -> Term:
        tok = self.peek()
        if tok.kind == "var":
            self.next()
            return self.var(tok.text)
        if tok.kind == "num":
            self.next()
            return Int(int(tok.text))
        if tok.kind == "punct" and tok.text == "-":
            self.next()
            num = self.expect("num")
            return Int(-int(num.text))
        if tok.kind == "punct" and tok.text == "[":
            return self.parse_list()
        if tok.kind in ("atom", "qatom"):
            self.next()
            name = _unquote(tok.text) if tok.kind == "qatom" else tok.text
            if self.at("punct", ":"):
                # field signature 'C':f
                self.next()
                fn = self.next()
                if fn.kind not in ("atom", "qatom"):
                    raise IrSyntaxError("expected field name", fn.line, fn.col)
                fname = _unquote(fn.text) if fn.kind == "qatom" else fn.text
                return FieldSig(name, fname).term()
            if self.at("punct", "("):
                self.next()
                args = [self.parse_term_or_expr()]
                while self.at("punct", ","):
                    self.next()
                    args.append(self.parse_term_or_expr())
                self.expect("punct", ")")
                return Compound(name, tuple(args))
            return Atom(name)
        raise IrSyntaxError(f"expected a term, found {tok.text!r}", tok.line, tok.col)

    def parse_list(self) -> Term:
        self.expect("punct", "[")
        if self.at("punct", "]"):
            self.next()
            return NIL
        items = [self.parse_term_or_expr()]
        while self.at("punct", ","):
            self.next()
            items.append(self.parse_term_or_expr())
        tail: Term = NIL
        if self.at("punct", "|"):
            self.next()
            tail = self.parse_term()
        self.expect("punct", "]")
        out = tail
        for item in reversed(items):
            out = cons(item, out)
        return out

    def parse_term_or_expr(self) -> Term:
        """A term, possibly continued by +,-,*,/,mod into an expression."""
        return self.parse_additive()

    def parse_additive(self) -> Term:
        t = self.parse_multiplicative()
        while self.at("punct", "+") or self.at("punct", "-"):
            op = self.next().text
            rhs = self.parse_multiplicative()
            t = Compound(op, (t, rhs))
        return t

    def parse_multiplicative(self) -> Term:
        t = self.parse_term()
        while (
            self.at("punct", "*")
            or self.at("punct", "/")
            or self.at("atom", "mod")
        ):
            op = self.next().text
            rhs = self.parse_term()
            t = Compound(op, (t, rhs))
        return t

    # -- clause structure -----------------------------------------------

    def parse_program(self) -> Program:
        preds: dict = {}
        classes: list = []
        entries: dict = {}
        while not self.at("eof"):
            if self.at("neck"):
                self.next()
                self.parse_directive(classes, entries)
                continue
            self.new_clause_scope()
            name_tok = self.next()
            if name_tok.kind not in ("atom", "qatom"):
                raise IrSyntaxError(
                    f"expected predicate name, found {name_tok.text!r}",
                    name_tok.line,
                    name_tok.col,
                )
            name = (
                _unquote(name_tok.text) if name_tok.kind == "qatom" else name_tok.text
            )
            clause = self.parse_clause_after_name(name_tok)
            preds.setdefault(name, Predicate(name)).clauses.append(clause)
        table = ClassTable(classes)
        return Program(
            predicates=preds,
            class_table=table,
            entries=entries,
            var_names=dict(self.var_names),
        )

    def parse_directive(self, classes: list, entries: dict) -> None:
        head = self.next()
        if head.kind == "atom" and head.text == "class":
            self.expect("punct", "(")
            cname = self.parse_class_name()
            superclass = None
            fields: list = []
            while self.at("punct", ","):
                self.next()
                if self.at("atom", "extends"):
                    self.next()
                    self.expect("punct", "(")
                    superclass = self.parse_class_name()
                    self.expect("punct", ")")
                else:
                    fields = self.parse_field_decls(cname)
            self.expect("punct", ")")
            self.expect("punct", ".")
            classes.append(ClassInfo(cname, superclass, tuple(fields)))
            return
        if head.kind == "atom" and head.text == "entry":
            self.expect("punct", "(")
            ename = self.parse_class_name()
            self.expect("punct", ",")
            pred_tok = self.next()
            pred = (
                _unquote(pred_tok.text)
                if pred_tok.kind == "qatom"
                else pred_tok.text
            )
            self.expect("punct", ",")
            self.expect("punct", "[")
            pnames: list = []
            ptypes: list = []
            if not self.at("punct", "]"):
                while True:
                    nm = self.expect("atom")
                    self.expect("punct", ":")
                    ptypes.append(self.parse_type())
                    pnames.append(nm.text)
                    if not self.at("punct", ","):
                        break
                    self.next()
            self.expect("punct", "]")
            self.expect("punct", ",")
            ret = self.parse_type()
            self.expect("punct", ")")
            self.expect("punct", ".")
            entries[ename] = EntrySpec(ename, pred, tuple(pnames), tuple(ptypes), ret)
            return
        raise IrSyntaxError(f"unknown directive {head.text!r}", head.line, head.col)

    def parse_class_name(self) -> str:
        tok = self.next()
        if tok.kind == "qatom":
            return _unquote(tok.text)
        if tok.kind == "atom":
            return tok.text
        raise IrSyntaxError("expected class name", tok.line, tok.col)

    def parse_field_decls(self, cname: str) -> list:
        self.expect("punct", "[")
        fields = []
        if not self.at("punct", "]"):
            while True:
                fn = self.next()
                if fn.kind not in ("atom", "qatom"):
                    raise IrSyntaxError("expected field name", fn.line, fn.col)
                fname = _unquote(fn.text) if fn.kind == "qatom" else fn.text
                self.expect("punct", ":")
                ftype = self.parse_type()
                fields.append((FieldSig(cname, fname), ftype))
                if not self.at("punct", ","):
                    break
                self.next()
        self.expect("punct", "]")
        return fields

    def parse_type(self) -> TypeExpr:
        tok = self.peek()
        if tok.kind == "atom" and tok.text == "array":
            self.next()
            self.expect("punct", "(")
            inner = self.parse_type()
            self.expect("punct", ")")
            return ArrayType(inner)
        if tok.kind == "atom" and tok.text in (INT, BOOL, VOID):
            self.next()
            return tok.text
        return self.parse_class_name()

    def parse_clause_after_name(self, name_tok: _Tok) -> Clause:
        self.expect("punct", "(")
        args_in = self.parse_plain_list()
        self.expect("punct", ",")
        args_out = self.parse_plain_list()
        self.expect("punct", ",")
        h_in = self.parse_term()
        self.expect("punct", ",")
        h_out = self.parse_term()
        self.expect("punct", ",")
        exflag = self.parse_term()
        self.expect("punct", ")")
        guard: Optional[Guard] = None
        body: list = []
        if self.at("neck"):
            self.next()
            literals = [self.parse_literal()]
            while self.at("punct", ","):
                self.next()
                literals.append(self.parse_literal())
            if literals and _is_guard(literals[0]):
                guard = literals[0]
                literals = literals[1:]
            for lit in literals[:]:
                if _is_guard(lit):
                    tok = name_tok
                    raise IrSyntaxError(
                        "guards are only allowed as the first literal",
                        tok.line,
                        tok.col,
                    )
            body = literals
        self.expect("punct", ".")
        return Clause(
            args_in=args_in,
            args_out=args_out,
            h_in=h_in,
            h_out=h_out,
            exflag=exflag,
            guard=guard,
            body=tuple(body),
        )

    def parse_plain_list(self) -> tuple:
        """A closed [t1,...,tn] argument list as a Python tuple."""
        self.expect("punct", "[")
        if self.at("punct", "]"):
            self.next()
            return ()
        items = [self.parse_term_or_expr()]
        while self.at("punct", ","):
            self.next()
            items.append(self.parse_term_or_expr())
        self.expect("punct", "]")
        return tuple(items)

    def parse_literal(self):
        tok = self.peek()
        if tok.kind == "var":
            # Var #= Expr (assignment) or Var ROp Expr / Var \== Term
            lhs = self.parse_term_or_expr()
            return self.finish_relational(lhs, allow_assign=True)
        if tok.kind == "num" or (tok.kind == "punct" and tok.text in ("-", "[")):
            lhs = self.parse_term_or_expr()
            return self.finish_relational(lhs, allow_assign=False)
        if tok.kind in ("atom", "qatom"):
            name = _unquote(tok.text) if tok.kind == "qatom" else tok.text
            nxt = self.toks[self.i + 1]
            if nxt.kind == "punct" and nxt.text == "(":
                self.next()
                self.next()
                args = [self.parse_term_or_expr()]
                while self.at("punct", ","):
                    self.next()
                    args.append(self.parse_term_or_expr())
                self.expect("punct", ")")
                return self.classify_compound_literal(name, args, tok)
            # bare atom in relational position, e.g. `null \== X`
            lhs = self.parse_term_or_expr()
            return self.finish_relational(lhs, allow_assign=False)
        raise IrSyntaxError(f"expected a literal, found {tok.text!r}", tok.line, tok.col)

    def finish_relational(self, lhs: Term, allow_assign: bool):
        tok = self.peek()
        if tok.kind == "relop":
            op = self.next().text
            rhs = self.parse_term_or_expr()
            if allow_assign and op == "#=" and isinstance(lhs, Var):
                return AssignLit(lhs, rhs)
            return ArithGuard(op, lhs, rhs)
        if tok.kind == "refneq":
            self.next()
            rhs = self.parse_term()
            return RefNeqGuard(lhs, rhs)
        raise IrSyntaxError(
            f"expected a relational operator, found {tok.text!r}", tok.line, tok.col
        )

    def classify_compound_literal(self, name: str, args: list, tok: _Tok):
        def arity(n):
            if len(args) != n:
                raise IrSyntaxError(
                    f"{name}/{len(args)}: expected {n} arguments", tok.line, tok.col
                )

        if name == "type":
            arity(3)
            cls = args[2]
            if not isinstance(cls, Atom):
                raise IrSyntaxError("type/3 expects a class name", tok.line, tok.col)
            return TypeGuardLit(args[0], args[1], cls.name)
        if name == "new_object":
            arity(4)
            cls = args[1]
            if not isinstance(cls, Atom):
                raise IrSyntaxError(
                    "new_object/4 expects a class name", tok.line, tok.col
                )
            return NewObjectLit(args[0], cls.name, args[2], args[3])
        if name == "new_array":
            arity(5)
            return NewArrayLit(args[0], args[1], args[2], args[3], args[4])
        if name == "length":
            arity(3)
            return LengthLit(args[0], args[1], args[2])
        if name == "get_field":
            arity(4)
            fs = fsig_of_term(args[2])
            if fs is None:
                raise IrSyntaxError(
                    "get_field/4 expects a field signature 'C':f", tok.line, tok.col
                )
            return GetFieldLit(args[0], args[1], fs, args[3])
        if name == "set_field":
            arity(5)
            fs = fsig_of_term(args[2])
            if fs is None:
                raise IrSyntaxError(
                    "set_field/5 expects a field signature 'C':f", tok.line, tok.col
                )
            return SetFieldLit(args[0], args[1], fs, args[3], args[4])
        if name == "get_array":
            arity(4)
            return GetArrayLit(args[0], args[1], args[2], args[3])
        if name == "set_array":
            arity(5)
            return SetArrayLit(args[0], args[1], args[2], args[3], args[4])
        # a call: name([ins],[outs],Hin,Hout,EF)
        arity(5)
        ins, outs = args[0], args[1]
        return CallLit(
            pred=name,
            args_in=tuple(_list_items(ins, tok)),
            args_out=tuple(_list_items(outs, tok)),
            h_in=args[2],
            h_out=args[3],
            exflag=args[4],
        )


def _list_items(t: Term, tok: _Tok) -> list:
    items = []
    while is_cons(t):
        items.append(t.args[0])
        t = t.args[1]
    if t != NIL:
        raise IrSyntaxError("call argument lists must be closed", tok.line, tok.col)
    return items


def _is_guard(lit) -> bool:
    return isinstance(lit, (ArithGuard, RefNeqGuard, TypeGuardLit))


def parse_ir(text: str) -> Program:
    return _Parser(text).parse_program()


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_PLAIN_ATOM_RE = re.compile(r"[a-z][A-Za-z0-9_]*$")


def _atom_text(name: str) -> str:
    if _PLAIN_ATOM_RE.match(name) and name not in ("mod",):
        return name
    return "'" + name.replace("\\", "\\\\").replace("'", "\\'") + "'"


def _type_text(t: TypeExpr) -> str:
    if isinstance(t, ArrayType):
        return f"array({_type_text(t.elem)})"
    if t in (INT, BOOL, VOID):
        return t
    return _atom_text(t)


class Printer:
    def __init__(self, var_names: Optional[dict] = None):
        self.var_names = var_names or {}
        self._auto: dict = {}

    def var_text(self, v: Var) -> str:
        name = self.var_names.get(v.id)
        if name and name != "_":
            return name
        if v.id not in self._auto:
            self._auto[v.id] = f"G{len(self._auto) + 1}"
        return "_" + self._auto[v.id]

    def term_text(self, t: Term) -> str:
        if isinstance(t, Var):
            return self.var_text(t)
        if isinstance(t, Int):
            return str(t.value)
        if isinstance(t, Atom):
            return _atom_text(t.name)
        assert isinstance(t, Compound)
        if t.functor == ":" and len(t.args) == 2:
            return f"{self.term_text(t.args[0])}:{t.args[1].name}"
        if t.functor == "." and len(t.args) == 2:
            items, tail = [], t
            while is_cons(tail):
                items.append(tail.args[0])
                tail = tail.args[1]
            inner = ",".join(self.term_text(x) for x in items)
            if tail == NIL:
                return f"[{inner}]"
            return f"[{inner}|{self.term_text(tail)}]"
        if t.functor in ("+", "-", "*", "/", "mod") and len(t.args) == 2:
            return (
                f"{self.term_text(t.args[0])} {t.functor} {self.term_text(t.args[1])}"
            )
        if t.functor == "-" and len(t.args) == 1:
            return f"-{self.term_text(t.args[0])}"
        inner = ",".join(self.term_text(a) for a in t.args)
        return f"{_atom_text(t.functor)}({inner})"

    def literal_text(self, lit) -> str:
        tt = self.term_text
        if isinstance(lit, ArithGuard):
            return f"{tt(lit.lhs)} {lit.op} {tt(lit.rhs)}"
        if isinstance(lit, RefNeqGuard):
            return f"{tt(lit.a)} \\== {tt(lit.b)}"
        if isinstance(lit, TypeGuardLit):
            return f"type({tt(lit.h)},{tt(lit.ref)},{_atom_text(lit.cls)})"
        if isinstance(lit, AssignLit):
            return f"{tt(lit.var)} #= {tt(lit.expr)}"
        if isinstance(lit, CallLit):
            ins = ",".join(tt(a) for a in lit.args_in)
            outs = ",".join(tt(a) for a in lit.args_out)
            return (
                f"{_atom_text(lit.pred)}([{ins}],[{outs}],"
                f"{tt(lit.h_in)},{tt(lit.h_out)},{tt(lit.exflag)})"
            )
        if isinstance(lit, NewObjectLit):
            return f"new_object({tt(lit.h)},{_atom_text(lit.cls)},{tt(lit.ref)},{tt(lit.h_out)})"
        if isinstance(lit, NewArrayLit):
            return (
                f"new_array({tt(lit.h)},{tt(lit.elem_type)},{tt(lit.length)},"
                f"{tt(lit.ref)},{tt(lit.h_out)})"
            )
        if isinstance(lit, LengthLit):
            return f"length({tt(lit.h)},{tt(lit.ref)},{tt(lit.out)})"
        if isinstance(lit, GetFieldLit):
            return f"get_field({tt(lit.h)},{tt(lit.ref)},{lit.fsig},{tt(lit.out)})"
        if isinstance(lit, SetFieldLit):
            return (
                f"set_field({tt(lit.h)},{tt(lit.ref)},{lit.fsig},"
                f"{tt(lit.val)},{tt(lit.h_out)})"
            )
        if isinstance(lit, GetArrayLit):
            return f"get_array({tt(lit.h)},{tt(lit.ref)},{tt(lit.idx)},{tt(lit.out)})"
        if isinstance(lit, SetArrayLit):
            return (
                f"set_array({tt(lit.h)},{tt(lit.ref)},{tt(lit.idx)},"
                f"{tt(lit.val)},{tt(lit.h_out)})"
            )
        raise TypeError(f"unknown literal {lit!r}")

    def clause_text(self, name: str, clause: Clause) -> str:
        tt = self.term_text
        ins = ",".join(tt(a) for a in clause.args_in)
        outs = ",".join(tt(a) for a in clause.args_out)
        head = (
            f"{_atom_text(name)}([{ins}],[{outs}],{tt(clause.h_in)},"
            f"{tt(clause.h_out)},{tt(clause.exflag)})"
        )
        lits = ([clause.guard] if clause.guard is not None else []) + list(clause.body)
        if not lits:
            return head + "."
        body = ",\n        ".join(self.literal_text(lit) for lit in lits)
        return f"{head} :-\n        {body}."


def print_program(program: Program) -> str:
    printer = Printer(program.var_names)
    chunks = []
    for info in program.class_table.classes.values():
        parts = [_atom_text(info.name)]
        if info.superclass is not None:
            parts.append(f"extends({_atom_text(info.superclass)})")
        if info.fields:
            fs = ", ".join(
                f"{f.name}: {_type_text(t)}" for f, t in info.fields
            )
            parts.append(f"[{fs}]")
        elif info.superclass is None:
            parts.append("[]")
        chunks.append(f":- class({', '.join(parts)}).")
    for entry in program.entries.values():
        params = ", ".join(
            f"{n}: {_type_text(t)}" for n, t in zip(entry.param_names, entry.param_types)
        )
        chunks.append(
            f":- entry({_atom_text(entry.name)}, {_atom_text(entry.pred)}, "
            f"[{params}], {_type_text(entry.ret_type)})."
        )
    chunks.append("")
    for pred in program.predicates.values():
        for clause in pred.clauses:
            chunks.append(printer.clause_text(pred.name, clause))
        chunks.append("")
    return "\n".join(chunks).rstrip() + "\n"


# ---------------------------------------------------------------------------
# structural equality up to variable renaming
# ---------------------------------------------------------------------------


def terms_equal_mod_renaming(a: Term, b: Term, mapping: dict) -> bool:
    if isinstance(a, Var) and isinstance(b, Var):
        if a.id in mapping:
            return mapping[a.id] == b.id
        if b.id in mapping.values():
            return False
        mapping[a.id] = b.id
        return True
    if isinstance(a, Int) and isinstance(b, Int):
        return a.value == b.value
    if isinstance(a, Atom) and isinstance(b, Atom):
        return a.name == b.name
    if isinstance(a, Compound) and isinstance(b, Compound):
        return (
            a.functor == b.functor
            and len(a.args) == len(b.args)
            and all(
                terms_equal_mod_renaming(x, y, mapping)
                for x, y in zip(a.args, b.args)
            )
        )
    return False


def _literal_parts(lit):
    if isinstance(lit, ArithGuard):
        return ("arith", lit.op), (lit.lhs, lit.rhs)
    if isinstance(lit, RefNeqGuard):
        return ("refneq",), (lit.a, lit.b)
    if isinstance(lit, TypeGuardLit):
        return ("type", lit.cls), (lit.h, lit.ref)
    if isinstance(lit, AssignLit):
        return ("assign",), (lit.var, lit.expr)
    if isinstance(lit, CallLit):
        return ("call", lit.pred, len(lit.args_in), len(lit.args_out)), (
            *lit.args_in,
            *lit.args_out,
            lit.h_in,
            lit.h_out,
            lit.exflag,
        )
    if isinstance(lit, NewObjectLit):
        return ("new_object", lit.cls), (lit.h, lit.ref, lit.h_out)
    if isinstance(lit, NewArrayLit):
        return ("new_array",), (lit.h, lit.elem_type, lit.length, lit.ref, lit.h_out)
    if isinstance(lit, LengthLit):
        return ("length",), (lit.h, lit.ref, lit.out)
    if isinstance(lit, GetFieldLit):
        return ("get_field", str(lit.fsig)), (lit.h, lit.ref, lit.out)
    if isinstance(lit, SetFieldLit):
        return ("set_field", str(lit.fsig)), (lit.h, lit.ref, lit.val, lit.h_out)
    if isinstance(lit, GetArrayLit):
        return ("get_array",), (lit.h, lit.ref, lit.idx, lit.out)
    if isinstance(lit, SetArrayLit):
        return ("set_array",), (lit.h, lit.ref, lit.idx, lit.val, lit.h_out)
    raise TypeError(f"unknown literal {lit!r}")


def clauses_equal(a: Clause, b: Clause) -> bool:
    """Structural clause equality up to a variable bijection."""
    mapping: dict = {}
    a_lits = ([a.guard] if a.guard else []) + list(a.body)
    b_lits = ([b.guard] if b.guard else []) + list(b.body)
    if len(a_lits) != len(b_lits):
        return False
    if len(a.args_in) != len(b.args_in) or len(a.args_out) != len(b.args_out):
        return False
    pairs = list(zip(a.args_in, b.args_in)) + list(zip(a.args_out, b.args_out))
    pairs += [(a.h_in, b.h_in), (a.h_out, b.h_out), (a.exflag, b.exflag)]
    for la, lb in zip(a_lits, b_lits):
        ka, ta = _literal_parts(la)
        kb, tb = _literal_parts(lb)
        if ka != kb:
            return False
        pairs += list(zip(ta, tb))
    return all(terms_equal_mod_renaming(x, y, mapping) for x, y in pairs)


def programs_equal(a: Program, b: Program) -> bool:
    if list(a.predicates) != list(b.predicates):
        return False
    for name in a.predicates:
        ca, cb = a.predicates[name].clauses, b.predicates[name].clauses
        if len(ca) != len(cb):
            return False
        if not all(clauses_equal(x, y) for x, y in zip(ca, cb)):
            return False
    if set(a.entries) != set(b.entries):
        return False
    for name in a.entries:
        if a.entries[name] != b.entries[name]:
            return False
    if list(a.class_table.classes) != list(b.class_table.classes):
        return False
    for name in a.class_table.classes:
        if a.class_table.classes[name] != b.class_table.classes[name]:
            return False
    return True


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning"
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.where}: {self.message}"


def _heap_io(lit):
    """(h_in, h_out or None) of a literal; None,None when heap-free."""
    if isinstance(lit, (ArithGuard, RefNeqGuard, AssignLit)):
        return None, None
    if isinstance(lit, TypeGuardLit):
        return lit.h, None
    if isinstance(lit, (LengthLit, GetFieldLit, GetArrayLit)):
        return lit.h, None
    if isinstance(lit, (NewObjectLit, SetFieldLit, SetArrayLit)):
        return lit.h, lit.h_out
    if isinstance(lit, NewArrayLit):
        return lit.h, lit.h_out
    if isinstance(lit, CallLit):
        return lit.h_in, lit.h_out
    raise TypeError(lit)


def validate(program: Program) -> list:
    diags: list = []
    table = program.class_table

    def err(where, msg):
        diags.append(Diagnostic("error", where, msg))

    def warn(where, msg):
        diags.append(Diagnostic("warning", where, msg))

    arities: dict = {}
    for pred in program.predicates.values():
        for idx, clause in enumerate(pred.clauses):
            sig = (len(clause.args_in), len(clause.args_out))
            if pred.name in arities and arities[pred.name] != sig:
                err(f"{pred.name}/{idx + 1}", "clauses disagree on arity")
            arities[pred.name] = sig

    for pred in program.predicates.values():
        for idx, clause in enumerate(pred.clauses):
            where = f"{pred.name}/{idx + 1}"
            if not isinstance(clause.h_in, Var):
                err(where, "h_in must be a variable")
            if not isinstance(clause.h_out, Var):
                err(where, "h_out must be a variable")
            ex = clause.exflag
            ex_ok = (
                isinstance(ex, Var)
                or ex == Atom("ok")
                or (isinstance(ex, Compound) and ex.functor == "exc" and len(ex.args) == 1)
            )
            if not ex_ok:
                err(where, "exception flag must be a variable, ok, or exc(_)")

            # linear heap threading
            if isinstance(clause.h_in, Var):
                cur = clause.h_in
                lits = ([clause.guard] if clause.guard else []) + list(clause.body)
                for lit in lits:
                    hin, hout = _heap_io(lit)
                    if hin is None:
                        continue
                    if hin != cur:
                        err(where, "heap not threaded linearly")
                        break
                    if hout is not None:
                        cur = hout
                else:
                    if cur != clause.h_out:
                        err(where, "heap not threaded linearly")

            # name resolution
            lits = ([clause.guard] if clause.guard else []) + list(clause.body)
            for lit in lits:
                if isinstance(lit, (GetFieldLit, SetFieldLit)):
                    if lit.fsig.cls not in table:
                        err(where, f"unknown class {lit.fsig.cls!r}")
                    elif table.field_type(lit.fsig) is None:
                        err(where, f"field {lit.fsig} not declared in {lit.fsig.cls!r}")
                elif isinstance(lit, NewObjectLit) and lit.cls not in table:
                    err(where, f"unknown class {lit.cls!r}")
                elif isinstance(lit, TypeGuardLit) and lit.cls not in table:
                    err(where, f"unknown class {lit.cls!r}")
                elif isinstance(lit, CallLit):
                    callee = program.predicates.get(lit.pred)
                    if callee is None:
                        err(where, f"call to undefined predicate {lit.pred!r}")
                    elif arities.get(lit.pred) != (
                        len(lit.args_in),
                        len(lit.args_out),
                    ):
                        err(where, f"call to {lit.pred!r} with wrong arity")

        # conservative mutual exclusivity
        for i in range(len(pred.clauses)):
            for j in range(i + 1, len(pred.clauses)):
                if not _provably_exclusive(pred.clauses[i], pred.clauses[j]):
                    warn(
                        f"{pred.name}/{i + 1} vs /{j + 1}",
                        "clauses may overlap",
                    )

    for entry in program.entries.values():
        if entry.pred not in program.predicates:
            err(entry.name, f"entry predicate {entry.pred!r} is undefined")

    return diags


def _canonical_positions(clause: Clause) -> dict:
    """Map each head variable to its first head-position path string."""
    mapping: dict = {}

    def walk(t: Term, path: str):
        if isinstance(t, Var):
            mapping.setdefault(t.id, path)
        elif isinstance(t, Compound):
            for k, a in enumerate(t.args):
                walk(a, f"{path}.{k}")

    for k, t in enumerate(clause.args_in):
        walk(t, f"in{k}")
    for k, t in enumerate(clause.args_out):
        walk(t, f"out{k}")
    return mapping


def _canon_term(t: Term, positions: dict):
    if isinstance(t, Var):
        return ("var", positions.get(t.id, f"?{t.id}"))
    if isinstance(t, Int):
        return ("int", t.value)
    if isinstance(t, Atom):
        return ("atom", t.name)
    return ("c", t.functor, tuple(_canon_term(a, positions) for a in t.args))


def _patterns_incompatible(a: Term, b: Term) -> bool:
    """True when the two head patterns can never unify."""
    if isinstance(a, Var) or isinstance(b, Var):
        return False
    if isinstance(a, Int) and isinstance(b, Int):
        return a.value != b.value
    if isinstance(a, Atom) and isinstance(b, Atom):
        return a.name != b.name
    if isinstance(a, Compound) and isinstance(b, Compound):
        if a.functor != b.functor or len(a.args) != len(b.args):
            return True
        return any(_patterns_incompatible(x, y) for x, y in zip(a.args, b.args))
    return True  # differing shapes (atom vs compound, int vs atom, ...)


def _provably_exclusive(a: Clause, b: Clause) -> bool:
    pos_a = list(a.args_in) + list(a.args_out) + [a.exflag]
    pos_b = list(b.args_in) + list(b.args_out) + [b.exflag]
    if len(pos_a) == len(pos_b):
        for x, y in zip(pos_a, pos_b):
            if _patterns_incompatible(x, y):
                return True
    ga, gb = a.guard, b.guard
    if isinstance(ga, ArithGuard) and isinstance(gb, ArithGuard):
        pa, pb = _canonical_positions(a), _canonical_positions(b)
        if NEGATED_REL[ga.op] == gb.op:
            if _canon_term(ga.lhs, pa) == _canon_term(gb.lhs, pb) and _canon_term(
                ga.rhs, pa
            ) == _canon_term(gb.rhs, pb):
                return True
    if isinstance(ga, TypeGuardLit) and isinstance(gb, TypeGuardLit):
        pa, pb = _canonical_positions(a), _canonical_positions(b)
        if (
            ga.cls != gb.cls
            and _canon_term(ga.ref, pa) == _canon_term(gb.ref, pb)
        ):
            return True
    return False
