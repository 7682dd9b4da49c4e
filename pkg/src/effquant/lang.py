"""Syntax of the generic core language and its s-expression surface form.

Kinds, types and terms are frozen dataclasses.  Effects inside types are
:mod:`effquant.effects` expressions over one quantale instance, so parsing
needs the instance that interprets ``eff{...}`` literals.

Surface grammar (one form per line)::

    term  ::= x | true | false | unit
            | (prim p) | (lam x [:eff E] e) | (lam (x T) [:eff E] e)
            | (app e e ...) | (tylam a :: K e) | (tyapp e T ...)
            | (if e e e) | (while e e) | (let x e e) | (seq e e ...)
    type  ::= bool | unit | a | (tapp T T ...) | (pi x T E T) | (-> T E T)
            | (forall a K E T) | (singleton v) | (eff E)
    kind  ::= * | E | (=> K K)
    eff   ::= eff{...} | a | (join E ...) | (seq E ...) | (star E) | "infix"

A program file may start with ``(assume x T)`` and ``(assume-type a K)``
headers that populate the initial environment.
"""

from __future__ import annotations

import itertools
import re
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

from effquant.algebra import Quantale, _elem_names
from effquant.effects import (
    EffExpr,
    EffectSyntaxError,
    EVar,
    Join,
    Lit,
    Seq,
    Star,
    effect_vars,
    parse_effect,
    parse_literal,
    read_literal_text,
    render_sexpr,
    rename_name,
    subst_var,
)

# ---------------------------------------------------------------------------
# Kinds


@dataclass(frozen=True)
class KStar:
    pass


@dataclass(frozen=True)
class KEff:
    pass


@dataclass(frozen=True)
class KArrow:
    dom: Kind
    cod: Kind


Kind = KStar | KEff | KArrow
STAR = KStar()
EFF = KEff()

# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class TBool:
    pass


@dataclass(frozen=True)
class TUnit:
    pass


@dataclass(frozen=True)
class PrimType:
    name: str


@dataclass(frozen=True)
class TVar:
    name: str


@dataclass(frozen=True)
class TApp:
    fn: Type
    arg: Type


@dataclass(frozen=True)
class EffType:
    effect: EffExpr


@dataclass(frozen=True)
class Pi:
    var: str
    dom: Type
    eff: EffExpr
    cod: Type


@dataclass(frozen=True)
class Forall:
    var: str
    kind: Kind
    eff: EffExpr
    body: Type


@dataclass(frozen=True)
class Singleton:
    value: Term


Type = TBool | TUnit | PrimType | TVar | TApp | EffType | Pi | Forall | Singleton
BOOL = TBool()
UNIT_T = TUnit()

# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Span:
    line: int
    col: int


@dataclass(frozen=True)
class Prim:
    name: str
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BoolVal:
    value: bool
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class UnitVal:
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Lam:
    var: str
    body: Term
    ann: Type | None = None
    eff: EffExpr | None = None
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class App:
    fn: Term
    arg: Term
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class If:
    cond: Term
    then: Term
    els: Term
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class While:
    cond: Term
    body: Term
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class TyLam:
    var: str
    kind: Kind
    body: Term
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class TyApp:
    fn: Term
    ty: Type
    span: Span | None = field(default=None, compare=False, repr=False)


Term = Prim | Var | BoolVal | UnitVal | Lam | App | If | While | TyLam | TyApp
TRUE = BoolVal(True)
FALSE = BoolVal(False)
UNIT = UnitVal()


def seq_term(first: Term, second: Term) -> Term:
    """``first ; second`` as the application of a discarding lambda."""
    return App(Lam("_", second), first)


def let_term(name: str, bound: Term, body: Term) -> Term:
    return App(Lam(name, body), bound)


def apply_all(fn: Term, *args: Term | Type) -> Term:
    """Curried application; arguments that are types become type applications."""
    for a in args:
        fn = TyApp(fn, a) if isinstance(a, _TYPE_CLASSES) else App(fn, a)
    return fn


# ---------------------------------------------------------------------------
# Programs and environments


@dataclass(frozen=True)
class TermBinding:
    name: str
    type: Type


@dataclass(frozen=True)
class TypeBinding:
    name: str
    kind: Kind


Binding = TermBinding | TypeBinding


@dataclass(frozen=True)
class Program:
    env: tuple[Binding, ...]
    term: Term


# ---------------------------------------------------------------------------
# Fresh names

_counter = itertools.count(1)


def fresh(base: str) -> str:
    root = base.split("'")[0] or "v"
    return f"{root}'{next(_counter)}"


# ---------------------------------------------------------------------------
# Free variables


def _effect_fv(e: EffExpr) -> frozenset[str]:
    names = set(effect_vars(e))

    def walk(x: EffExpr) -> None:
        match x:
            case Lit(v):
                names.update(_elem_names(v))
            case Join(a, b) | Seq(a, b):
                walk(a)
                walk(b)
            case Star(b):
                walk(b)

    walk(e)
    return frozenset(names)


def free_vars(x: Term | Type | EffExpr | Kind) -> frozenset[str]:
    """Free names across the term, type and effect strata.

    Names mentioned by effect literals count as free term-level names.
    """
    match x:
        case Var(n):
            return frozenset({n})
        case Prim() | BoolVal() | UnitVal() | TBool() | TUnit() | PrimType() | KStar() | KEff() | KArrow():
            return frozenset()
        case Lam(v, body, ann, eff):
            inner = free_vars(body) | (free_vars(eff) if eff is not None else frozenset())
            return (inner - {v}) | (free_vars(ann) if ann is not None else frozenset())
        case App(f, a):
            return free_vars(f) | free_vars(a)
        case If(c, t, e):
            return free_vars(c) | free_vars(t) | free_vars(e)
        case While(c, b):
            return free_vars(c) | free_vars(b)
        case TyLam(v, _, body):
            return free_vars(body) - {v}
        case TyApp(f, t):
            return free_vars(f) | free_vars(t)
        case TVar(n):
            return frozenset({n})
        case TApp(f, a):
            return free_vars(f) | free_vars(a)
        case EffType(e):
            return _effect_fv(e)
        case Pi(v, dom, eff, cod):
            return free_vars(dom) | ((_effect_fv(eff) | free_vars(cod)) - {v})
        case Forall(v, _, eff, body):
            return (_effect_fv(eff) | free_vars(body)) - {v}
        case Singleton(v):
            return free_vars(v)
    if isinstance(x, EffExpr):
        return _effect_fv(x)
    raise TypeError(f"no free variables for {x!r}")


_TYPE_CLASSES = (TBool, TUnit, PrimType, TVar, TApp, EffType, Pi, Forall, Singleton)
_TERM_CLASSES = (Prim, Var, BoolVal, UnitVal, Lam, App, If, While, TyLam, TyApp)


def is_type(x: object) -> bool:
    return isinstance(x, _TYPE_CLASSES)


# ---------------------------------------------------------------------------
# Values and primitive spines


def spine(e: Term) -> tuple[Term, list[Term | Type]] | None:
    """Split ``p a1 ... an`` into its head primitive and arguments, else None."""
    args: list[Term | Type] = []
    while True:
        match e:
            case App(f, a):
                args.append(a)
                e = f
            case TyApp(f, t):
                args.append(t)
                e = f
            case Prim():
                args.reverse()
                return e, args
            case _:
                return None


def is_value(e: Term, arity: Callable[[str], int] = lambda p: 0) -> bool:
    """Syntactic values, including partially applied primitive spines."""
    match e:
        case Lam() | TyLam() | Var() | BoolVal() | UnitVal() | Prim():
            return True
        case App() | TyApp():
            sp = spine(e)
            if sp is None:
                return False
            head, args = sp
            return len(args) < arity(head.name) and all(is_type(a) or is_value(a, arity) for a in args)
    return False


def value_name(v: Term) -> str | None:
    """The name a value contributes to effect literals, if it has one."""
    match v:
        case Var(n) | Prim(n):
            return n
    return None


# ---------------------------------------------------------------------------
# Substitution


class SubstitutionError(ValueError):
    pass


def _rename_binder(var: str, avoid: frozenset[str]) -> str | None:
    return fresh(var) if var in avoid else None


def subst_effect_value(q: Quantale, eff: EffExpr, x: str, v: Term) -> EffExpr:
    """``eff[v/x]``: literals mentioning ``x`` are transported to ``v``'s name."""
    if x not in _effect_fv(eff):
        return eff
    name = value_name(v)
    if name is None:
        raise SubstitutionError(f"cannot substitute a non-name value for {x!r} inside an effect")
    return rename_name(q, eff, x, name)


def subst_type_value(q: Quantale, t: Type, x: str, v: Term) -> Type:
    """``t[v/x]`` for a term variable ``x``."""
    if x not in free_vars(t):
        return t
    fv = free_vars(v)
    match t:
        case TApp(f, a):
            return TApp(subst_type_value(q, f, x, v), subst_type_value(q, a, x, v))
        case EffType(e):
            return EffType(subst_effect_value(q, e, x, v))
        case Singleton(val):
            return Singleton(subst_term(q, val, x, v))
        case Pi(y, dom, eff, cod):
            dom = subst_type_value(q, dom, x, v)
            if y == x:
                return Pi(y, dom, eff, cod)
            if y in fv:
                y2 = fresh(y)
                eff = subst_effect_value(q, eff, y, Var(y2))
                cod = subst_type_value(q, cod, y, Var(y2))
                y = y2
            return Pi(y, dom, subst_effect_value(q, eff, x, v), subst_type_value(q, cod, x, v))
        case Forall(a, k, eff, body):
            if a == x:
                return t
            if a in fv:
                a2 = fresh(a)
                eff = subst_var(eff, a, EVar(a2))
                body = subst_type_type(q, body, a, TVar(a2))
                a = a2
            return Forall(a, k, subst_effect_value(q, eff, x, v), subst_type_value(q, body, x, v))
    return t


def subst_term(q: Quantale, e: Term, x: str, v: Term) -> Term:
    """Capture-avoiding ``e[v/x]``; types and effects inside ``e`` are substituted too."""
    if x not in free_vars(e):
        return e
    fv = free_vars(v)
    match e:
        case Var(n):
            return v if n == x else e
        case Lam(y, body, ann, eff):
            ann2 = subst_type_value(q, ann, x, v) if ann is not None else None
            if y == x:
                return Lam(y, body, ann2, eff, e.span)
            if y in fv:
                y2 = fresh(y)
                body = subst_term(q, body, y, Var(y2))
                eff = subst_effect_value(q, eff, y, Var(y2)) if eff is not None else None
                y = y2
            eff2 = subst_effect_value(q, eff, x, v) if eff is not None else None
            return Lam(y, subst_term(q, body, x, v), ann2, eff2, e.span)
        case App(f, a):
            return App(subst_term(q, f, x, v), subst_term(q, a, x, v), e.span)
        case If(c, t, f):
            return If(subst_term(q, c, x, v), subst_term(q, t, x, v), subst_term(q, f, x, v), e.span)
        case While(c, b):
            return While(subst_term(q, c, x, v), subst_term(q, b, x, v), e.span)
        case TyLam(a, k, body):
            if a in fv:
                a2 = fresh(a)
                body = subst_type_in_term(q, body, a, TVar(a2))
                a = a2
            return TyLam(a, k, subst_term(q, body, x, v), e.span)
        case TyApp(f, t):
            return TyApp(subst_term(q, f, x, v), subst_type_value(q, t, x, v), e.span)
    return e


def _type_as_effect(t: Type) -> EffExpr | None:
    match t:
        case EffType(e):
            return e
        case TVar(n):
            return EVar(n)
    return None


def subst_type_type(q: Quantale, t: Type, a: str, by: Type) -> Type:
    """``t[by/a]`` for a type variable ``a`` (effect variables included)."""
    if a not in free_vars(t):
        return t
    fv = free_vars(by)
    eff_by = _type_as_effect(by)

    def in_eff(e: EffExpr) -> EffExpr:
        if a not in effect_vars(e):
            return e
        if eff_by is None:
            raise SubstitutionError(f"cannot substitute a non-effect type for effect variable {a!r}")
        return subst_var(e, a, eff_by)

    match t:
        case TVar(n):
            return by if n == a else t
        case TApp(f, x):
            return TApp(subst_type_type(q, f, a, by), subst_type_type(q, x, a, by))
        case EffType(e):
            return EffType(in_eff(e))
        case Singleton(v):
            return Singleton(subst_type_in_term(q, v, a, by))
        case Pi(y, dom, eff, cod):
            dom = subst_type_type(q, dom, a, by)
            if y in fv:
                y2 = fresh(y)
                eff = subst_effect_value(q, eff, y, Var(y2))
                cod = subst_type_value(q, cod, y, Var(y2))
                y = y2
            return Pi(y, dom, in_eff(eff), subst_type_type(q, cod, a, by))
        case Forall(b, k, eff, body):
            if b == a:
                return t
            if b in fv:
                b2 = fresh(b)
                eff = subst_var(eff, b, EVar(b2))
                body = subst_type_type(q, body, b, TVar(b2))
                b = b2
            return Forall(b, k, in_eff(eff), subst_type_type(q, body, a, by))
    return t


def subst_type_in_term(q: Quantale, e: Term, a: str, by: Type) -> Term:
    """``e[by/a]``: replace a type variable throughout a term."""
    if a not in free_vars(e):
        return e
    fv = free_vars(by)
    eff_by = _type_as_effect(by)
    match e:
        case Lam(y, body, ann, eff):
            ann2 = subst_type_type(q, ann, a, by) if ann is not None else None
            if y in fv:
                y2 = fresh(y)
                body = subst_term(q, body, y, Var(y2))
                eff = subst_effect_value(q, eff, y, Var(y2)) if eff is not None else None
                y = y2
            if eff is not None and a in effect_vars(eff):
                if eff_by is None:
                    raise SubstitutionError(f"cannot substitute a non-effect type for effect variable {a!r}")
                eff = subst_var(eff, a, eff_by)
            return Lam(y, subst_type_in_term(q, body, a, by), ann2, eff, e.span)
        case App(f, x):
            return App(subst_type_in_term(q, f, a, by), subst_type_in_term(q, x, a, by), e.span)
        case If(c, t, f):
            return If(*(subst_type_in_term(q, s, a, by) for s in (c, t, f)), e.span)
        case While(c, b):
            return While(subst_type_in_term(q, c, a, by), subst_type_in_term(q, b, a, by), e.span)
        case TyLam(b, k, body):
            if b == a:
                return e
            if b in fv:
                b2 = fresh(b)
                body = subst_type_in_term(q, body, b, TVar(b2))
                b = b2
            return TyLam(b, k, subst_type_in_term(q, body, a, by), e.span)
        case TyApp(f, t):
            return TyApp(subst_type_in_term(q, f, a, by), subst_type_type(q, t, a, by), e.span)
    return e


# ---------------------------------------------------------------------------
# S-expression reader


class ParseError(ValueError):
    def __init__(self, message: str, span: Span | None) -> None:
        where = f" at line {span.line}, column {span.col}" if span else ""
        super().__init__(message + where)
        self.span = span


@dataclass(frozen=True)
class SAtom:
    text: str
    span: Span


@dataclass(frozen=True)
class SStr:
    text: str
    span: Span


@dataclass(frozen=True)
class SLit:
    body: str
    span: Span


@dataclass(frozen=True)
class SList:
    items: tuple
    span: Span


SExpr = SAtom | SStr | SLit | SList
_DELIMS = set("()\"; \t\r\n")


def read_sexprs(text: str) -> list[SExpr]:
    """Read every top-level form.  ``;`` starts a comment outside strings and literals."""
    line_starts = [0] + [i + 1 for i, c in enumerate(text) if c == "\n"]

    def span_at(i: int) -> Span:
        lo, hi = 0, len(line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if line_starts[mid] <= i:
                lo = mid
            else:
                hi = mid - 1
        return Span(lo + 1, i - line_starts[lo] + 1)

    stack: list[tuple[list, Span]] = []
    out: list[SExpr] = []
    i = 0
    n = len(text)

    def emit(x: SExpr) -> None:
        (stack[-1][0] if stack else out).append(x)

    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == "(":
            stack.append(([], span_at(i)))
            i += 1
        elif c == ")":
            if not stack:
                raise ParseError("unexpected ')'", span_at(i))
            items, sp = stack.pop()
            emit(SList(tuple(items), sp))
            i += 1
        elif c == '"':
            j = text.find('"', i + 1)
            if j < 0:
                raise ParseError("unterminated string", span_at(i))
            emit(SStr(text[i + 1 : j], span_at(i)))
            i = j + 1
        elif text.startswith("eff{", i):
            try:
                body, j = read_literal_text(text, i)
            except EffectSyntaxError:
                raise ParseError("unterminated eff{...} literal", span_at(i)) from None
            emit(SLit(body, span_at(i)))
            i = j
        else:
            j = i
            while j < n and text[j] not in _DELIMS:
                j += 1
            emit(SAtom(text[i:j], span_at(i)))
            i = j
    if stack:
        raise ParseError("unbalanced parenthesis: missing ')'", stack[-1][1])
    return out


# ---------------------------------------------------------------------------
# Parser

_IDENT = re.compile(r"^[A-Za-z_][\w#.'\-]*$")
_KEYWORDS = {"true", "false", "unit"}
DEFAULT_PRIM_TYPES = frozenset({"lock", "ref"})


class _Parser:
    def __init__(self, q: Quantale, prim_types: Iterable[str]) -> None:
        self.q = q
        self.prim_types = frozenset(prim_types)

    def ident(self, s: SExpr, what: str) -> str:
        if not isinstance(s, SAtom) or not _IDENT.match(s.text) or s.text in _KEYWORDS:
            raise ParseError(f"expected {what}", s.span)
        return s.text

    def head(self, s: SList) -> str | None:
        if s.items and isinstance(s.items[0], SAtom):
            return s.items[0].text
        return None

    def arity(self, s: SList, n: int, form: str) -> None:
        if len(s.items) != n:
            raise ParseError(f"'{form}' takes {n - 1} argument(s), got {len(s.items) - 1}", s.span)

    # Kinds
    def kind(self, s: SExpr) -> Kind:
        if isinstance(s, SAtom):
            if s.text == "*":
                return STAR
            if s.text == "E":
                return EFF
        if isinstance(s, SList) and self.head(s) == "=>" and len(s.items) == 3:
            return KArrow(self.kind(s.items[1]), self.kind(s.items[2]))
        raise ParseError("expected a kind: *, E or (=> K K)", s.span)

    # Effects
    def effect(self, s: SExpr) -> EffExpr:
        match s:
            case SLit(body, sp):
                try:
                    return Lit(parse_literal(self.q, body))
                except (ValueError, TypeError) as exc:
                    raise ParseError(f"bad effect literal eff{{{body}}}: {exc}", sp) from None
            case SStr(text, sp):
                try:
                    return parse_effect(self.q, text)
                except (ValueError, TypeError) as exc:
                    raise ParseError(f"bad effect {text!r}: {exc}", sp) from None
            case SAtom(text, sp):
                return EVar(self.ident(s, "an effect variable"))
            case SList(items, sp):
                h = self.head(s)
                args = [self.effect(x) for x in items[1:]]
                if h in ("join", "seq") and args:
                    out = args[0]
                    for a in args[1:]:
                        out = Join(out, a) if h == "join" else Seq(out, a)
                    return out
                if h == "star" and len(args) == 1:
                    return Star(args[0])
        raise ParseError("expected an effect", s.span)

    # Types
    def type(self, s: SExpr) -> Type:
        if isinstance(s, SAtom):
            if s.text == "bool":
                return BOOL
            if s.text == "unit":
                return UNIT_T
            name = self.ident(s, "a type")
            return PrimType(name) if name in self.prim_types else TVar(name)
        if not isinstance(s, SList) or not s.items:
            raise ParseError("expected a type", s.span)
        h = self.head(s)
        it = s.items
        if h == "tapp" and len(it) >= 3:
            out = self.type(it[1])
            for a in it[2:]:
                out = TApp(out, self.type(a))
            return out
        if h == "pi":
            self.arity(s, 5, "pi")
            return Pi(self.ident(it[1], "a binder"), self.type(it[2]), self.effect(it[3]), self.type(it[4]))
        if h == "->":
            self.arity(s, 4, "->")
            return Pi("_", self.type(it[1]), self.effect(it[2]), self.type(it[3]))
        if h == "forall":
            self.arity(s, 5, "forall")
            return Forall(self.ident(it[1], "a type variable"), self.kind(it[2]), self.effect(it[3]), self.type(it[4]))
        if h == "singleton":
            self.arity(s, 2, "singleton")
            return Singleton(self.term(it[1]))
        if h == "eff":
            self.arity(s, 2, "eff")
            return EffType(self.effect(it[1]))
        raise ParseError(f"unknown type form {h!r}", s.span)

    # Terms
    def term(self, s: SExpr) -> Term:
        if isinstance(s, SAtom):
            if s.text == "true":
                return BoolVal(True, s.span)
            if s.text == "false":
                return BoolVal(False, s.span)
            if s.text == "unit":
                return UnitVal(s.span)
            return Var(self.ident(s, "a term"), s.span)
        if not isinstance(s, SList) or not s.items:
            raise ParseError("expected a term", s.span)
        h = self.head(s)
        it = s.items
        sp = s.span
        if h == "prim":
            self.arity(s, 2, "prim")
            return Prim(self.ident(it[1], "a primitive name"), sp)
        if h == "lam":
            return self.lam(s)
        if h == "app":
            if len(it) < 3:
                raise ParseError("'app' needs a function and at least one argument", sp)
            out = self.term(it[1])
            for a in it[2:]:
                out = App(out, self.term(a), sp)
            return out
        if h == "tylam":
            if len(it) != 5 or not (isinstance(it[2], SAtom) and it[2].text == "::"):
                raise ParseError("expected (tylam a :: K body)", sp)
            return TyLam(self.ident(it[1], "a type variable"), self.kind(it[3]), self.term(it[4]), sp)
        if h == "tyapp":
            if len(it) < 3:
                raise ParseError("'tyapp' needs a term and at least one type", sp)
            out = self.term(it[1])
            for a in it[2:]:
                out = TyApp(out, self.type(a), sp)
            return out
        if h == "if":
            self.arity(s, 4, "if")
            return If(self.term(it[1]), self.term(it[2]), self.term(it[3]), sp)
        if h == "while":
            self.arity(s, 3, "while")
            return While(self.term(it[1]), self.term(it[2]), sp)
        if h == "let":
            self.arity(s, 4, "let")
            return App(Lam(self.ident(it[1], "a binder"), self.term(it[3]), span=sp), self.term(it[2]), sp)
        if h == "seq":
            if len(it) < 2:
                raise ParseError("'seq' needs at least one term", sp)
            parts = [self.term(x) for x in it[1:]]
            out = parts[-1]
            for p in reversed(parts[:-1]):
                out = App(Lam("_", out, span=sp), p, sp)
            return out
        raise ParseError(f"unknown term form {h!r}", sp)

    def lam(self, s: SList) -> Lam:
        it = list(s.items[1:])
        if not it:
            raise ParseError("expected (lam x body)", s.span)
        binder = it.pop(0)
        ann = None
        if isinstance(binder, SList):
            if len(binder.items) != 2:
                raise ParseError("expected (x T) binder", binder.span)
            var = self.ident(binder.items[0], "a binder")
            ann = self.type(binder.items[1])
        else:
            var = self.ident(binder, "a binder")
        eff = None
        if len(it) == 3 and isinstance(it[0], SAtom) and it[0].text == ":eff":
            eff = self.effect(it[1])
            it = it[2:]
        if len(it) != 1:
            raise ParseError("expected (lam x [:eff E] body)", s.span)
        return Lam(var, self.term(it[0]), ann, eff, s.span)

    def program(self, forms: list[SExpr]) -> Program:
        env: list[Binding] = []
        body = None
        for f in forms:
            if isinstance(f, SList) and self.head(f) == "assume":
                self.arity(f, 3, "assume")
                env.append(TermBinding(self.ident(f.items[1], "a variable"), self.type(f.items[2])))
            elif isinstance(f, SList) and self.head(f) == "assume-type":
                self.arity(f, 3, "assume-type")
                env.append(TypeBinding(self.ident(f.items[1], "a type variable"), self.kind(f.items[2])))
            elif body is None:
                body = self.term(f)
            else:
                raise ParseError("a program holds exactly one term after its headers", f.span)
        if body is None:
            raise ParseError("empty program", None)
        return Program(tuple(env), body)


def default_quantale() -> Quantale:
    from effquant.instances import FQ

    return FQ


def parse_program(text: str, q: Quantale | None = None, prim_types: Iterable[str] = DEFAULT_PRIM_TYPES) -> Program:
    """Parse a program file: optional ``assume`` headers followed by one term."""
    return _Parser(q or default_quantale(), prim_types).program(read_sexprs(text))


def parse_term(text: str, q: Quantale | None = None, prim_types: Iterable[str] = DEFAULT_PRIM_TYPES) -> Term:
    forms = read_sexprs(text)
    if len(forms) != 1:
        raise ParseError(f"expected one term, found {len(forms)} forms", None)
    return _Parser(q or default_quantale(), prim_types).term(forms[0])


def type_from_sexpr(s: SExpr, q: Quantale | None = None, prim_types: Iterable[str] = DEFAULT_PRIM_TYPES) -> Type:
    """Parse an already-read s-expression as a type (for front-ends embedding types)."""
    return _Parser(q or default_quantale(), prim_types).type(s)


def parse_type(text: str, q: Quantale | None = None, prim_types: Iterable[str] = DEFAULT_PRIM_TYPES) -> Type:
    forms = read_sexprs(text)
    if len(forms) != 1:
        raise ParseError(f"expected one type, found {len(forms)} forms", None)
    return _Parser(q or default_quantale(), prim_types).type(forms[0])


def parse_kind(text: str) -> Kind:
    forms = read_sexprs(text)
    if len(forms) != 1:
        raise ParseError("expected one kind", None)
    return _Parser(default_quantale(), ()).kind(forms[0])


def parse_effect_sexpr(text: str, q: Quantale | None = None) -> EffExpr:
    forms = read_sexprs(text)
    if len(forms) != 1:
        raise ParseError("expected one effect", None)
    return _Parser(q or default_quantale(), ()).effect(forms[0])


# ---------------------------------------------------------------------------
# Rendering


def render_kind(k: Kind) -> str:
    match k:
        case KStar():
            return "*"
        case KEff():
            return "E"
        case KArrow(a, b):
            return f"(=> {render_kind(a)} {render_kind(b)})"
    raise TypeError(k)


def render_type(q: Quantale, t: Type) -> str:
    match t:
        case TBool():
            return "bool"
        case TUnit():
            return "unit"
        case PrimType(n) | TVar(n):
            return n
        case TApp():
            args = []
            while isinstance(t, TApp):
                args.append(t.arg)
                t = t.fn
            return "(tapp " + " ".join([render_type(q, t)] + [render_type(q, a) for a in reversed(args)]) + ")"
        case EffType(e):
            return f"(eff {render_sexpr(q, e)})"
        case Pi(v, dom, eff, cod):
            if v not in free_vars(eff) | free_vars(cod):
                return f"(-> {render_type(q, dom)} {render_sexpr(q, eff)} {render_type(q, cod)})"
            return f"(pi {v} {render_type(q, dom)} {render_sexpr(q, eff)} {render_type(q, cod)})"
        case Forall(v, k, eff, body):
            return f"(forall {v} {render_kind(k)} {render_sexpr(q, eff)} {render_type(q, body)})"
        case Singleton(v):
            return f"(singleton {render_term(q, v)})"
    raise TypeError(t)


def render_term(q: Quantale, e: Term) -> str:
    match e:
        case Var(n):
            return n
        case Prim(n):
            return f"(prim {n})"
        case BoolVal(b):
            return "true" if b else "false"
        case UnitVal():
            return "unit"
        case Lam(v, body, ann, eff):
            binder = v if ann is None else f"({v} {render_type(q, ann)})"
            mid = "" if eff is None else f" :eff {render_sexpr(q, eff)}"
            return f"(lam {binder}{mid} {render_term(q, body)})"
        case App(f, a):
            return f"(app {render_term(q, f)} {render_term(q, a)})"
        case If(c, t, f):
            return f"(if {render_term(q, c)} {render_term(q, t)} {render_term(q, f)})"
        case While(c, b):
            return f"(while {render_term(q, c)} {render_term(q, b)})"
        case TyLam(v, k, body):
            return f"(tylam {v} :: {render_kind(k)} {render_term(q, body)})"
        case TyApp(f, t):
            return f"(tyapp {render_term(q, f)} {render_type(q, t)})"
    raise TypeError(e)


def render_program(q: Quantale, p: Program) -> str:
    lines = []
    for b in p.env:
        if isinstance(b, TermBinding):
            lines.append(f"(assume {b.name} {render_type(q, b.type)})")
        else:
            lines.append(f"(assume-type {b.name} {render_kind(b.kind)})")
    lines.append(render_term(q, p.term))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Alpha-equivalence


def alpha_equal(
    q: Quantale,
    a: Term | Type,
    b: Term | Type,
    eff_eq: Callable[[EffExpr, EffExpr], bool] | None = None,
) -> bool:
    """Structural equality up to renaming of bound variables.

    Effects are compared with ``eff_eq`` after bound names are aligned;
    by default they must be syntactically equal.
    """
    eff_eq = eff_eq or (lambda x, y: x == y)

    def ren(e: EffExpr, m: dict[str, str]) -> EffExpr:
        for old, new in m.items():
            e = subst_var(e, old, EVar(new))
            e = rename_name(q, e, old, new)
        return e

    return _alpha(a, b, {}, {}, lambda x, mx, y, my: eff_eq(ren(x, mx), ren(y, my)))


def _alpha(a, b, ma: dict[str, str], mb: dict[str, str], eff_eq) -> bool:
    if type(a) is not type(b):
        return False
    match a:
        case Var(n):
            return ma.get(n, n) == mb.get(b.name, b.name)
        case TVar(n):
            return ma.get(n, n) == mb.get(b.name, b.name)
        case Prim(n) | PrimType(n):
            return n == b.name
        case BoolVal(v):
            return v == b.value
        case UnitVal() | TBool() | TUnit():
            return True
        case Lam(v, body, ann, eff):
            if (ann is None) != (b.ann is None) or (eff is None) != (b.eff is None):
                return False
            if ann is not None and not _alpha(ann, b.ann, ma, mb, eff_eq):
                return False
            c = fresh("%")
            ma2, mb2 = {**ma, v: c}, {**mb, b.var: c}
            if eff is not None and not eff_eq(eff, ma2, b.eff, mb2):
                return False
            return _alpha(body, b.body, ma2, mb2, eff_eq)
        case App(f, x):
            return _alpha(f, b.fn, ma, mb, eff_eq) and _alpha(x, b.arg, ma, mb, eff_eq)
        case If(c, t, f):
            return all(_alpha(x, y, ma, mb, eff_eq) for x, y in ((c, b.cond), (t, b.then), (f, b.els)))
        case While(c, body):
            return _alpha(c, b.cond, ma, mb, eff_eq) and _alpha(body, b.body, ma, mb, eff_eq)
        case TyLam(v, k, body):
            c = fresh("%")
            return k == b.kind and _alpha(body, b.body, {**ma, v: c}, {**mb, b.var: c}, eff_eq)
        case TyApp(f, t):
            return _alpha(f, b.fn, ma, mb, eff_eq) and _alpha(t, b.ty, ma, mb, eff_eq)
        case TApp(f, x):
            return _alpha(f, b.fn, ma, mb, eff_eq) and _alpha(x, b.arg, ma, mb, eff_eq)
        case EffType(e):
            return eff_eq(e, ma, b.effect, mb)
        case Singleton(v):
            return _alpha(v, b.value, ma, mb, eff_eq)
        case Pi(v, dom, eff, cod):
            if not _alpha(dom, b.dom, ma, mb, eff_eq):
                return False
            c = fresh("%")
            ma2, mb2 = {**ma, v: c}, {**mb, b.var: c}
            return eff_eq(eff, ma2, b.eff, mb2) and _alpha(cod, b.cod, ma2, mb2, eff_eq)
        case Forall(v, k, eff, body):
            if k != b.kind:
                return False
            c = fresh("%")
            ma2, mb2 = {**ma, v: c}, {**mb, b.var: c}
            return eff_eq(eff, ma2, b.eff, mb2) and _alpha(body, b.body, ma2, mb2, eff_eq)
    return False


# ---------------------------------------------------------------------------
# Language parameters


@dataclass(frozen=True)
class PrimStep:
    """Result of a defined primitive application: new term, state and state type."""

    result: Term
    state: object
    sigma: dict


@dataclass(frozen=True)
class LanguageParams:
    """Everything the generic core language is parameterized by.

    ``delta`` gives source types of primitives and is the least state type.
    ``semantics`` is partial: it returns None where the primitive is undefined.
    The dynamic effect of a primitive step is not part of ``semantics``; it is
    the final latent effect of the primitive's type after substituting the
    arguments, which the interpreter computes.
    """

    name: str
    q: Quantale
    kinds: dict[str, Kind]
    delta: dict[str, Type]
    initial_state: Callable[[], object]
    semantics: Callable[[str, list, object, dict], PrimStep | None]
    state_typing: Callable[[object, dict, Callable[[Term, Type, dict], str | None]], list[str]] = (
        lambda state, sigma, check: []
    )
    render_state: Callable[[object], str] = repr

    def arity(self, name: str, sigma: dict | None = None) -> int:
        """Number of curried arguments a primitive takes: the length of its type spine."""
        t = (sigma or self.delta).get(name)
        n = 0
        while isinstance(t, (Pi, Forall)):
            n += 1
            t = t.cod if isinstance(t, Pi) else t.body
        return n


def delta_violations(params: LanguageParams) -> list[str]:
    """Structural restrictions on primitive types.

    Primitive types may not be closed base types, and along a curried spine
    only the final binder may carry a latent effect other than the unit.
    """
    q = params.q
    from effquant.effects import ground_value

    out = []
    for name, t in params.delta.items():
        if isinstance(t, (TBool, TUnit)):
            out.append(f"{name}: primitive given a closed base type")
            continue
        effs = []
        while isinstance(t, (Pi, Forall)):
            effs.append(t.eff)
            t = t.cod if isinstance(t, Pi) else t.body
        for e in effs[:-1]:
            if ground_value(q, e) != q.unit:
                out.append(f"{name}: non-final binder carries latent effect {render_sexpr(q, e)}")
    return out
