"""The CAT atomicity language: parser, atomicity oracle, translation and differential check.

A ``.cat`` file looks like::

    (cat
      (locks m)
      (refs (x :lock m :type bool))
      (env (f A))              ; optional declared function atomicities
      (expect agree)           ; optional: agree | core-rejects | both-reject | diverge
      body)

Body forms: ``true``, ``false``, ``unit``, variables and lock names,
``(fun f ((x T) ...) e)``, ``(prim p e ...)``, ``(read x :race #t)``,
``(write x e :race #f)``, ``(let x e1 e2)``, ``(seq e ...)``, ``(if e e1 e2)``,
``(while e1 e2)``, ``(invoke e (f ...) e ...)``, ``(fork e)``, ``(atomic e)``.
Reads and writes may override the header's ``:lock`` and ``:type``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from effquant.algebra import leq
from effquant.checker import CheckError, Checker, check_env
from effquant.effects import ground_value, render_infix
from effquant.instances import ATOMICITY, Atomicity
from effquant.lang import (
    App,
    BOOL,
    Lam,
    ParseError,
    Pi,
    Prim,
    SAtom,
    SExpr,
    SList,
    Singleton,
    TApp,
    Term,
    TermBinding,
    Type,
    TyApp,
    UNIT,
    UNIT_T,
    Var,
    BoolVal,
    If,
    While,
    fresh,
    read_sexprs,
    render_term,
    render_type,
    seq_term,
    let_term,
    type_from_sexpr,
)
from effquant.locking import KINDS, LOCK, REF, fq_params

A = ATOMICITY
CAT_PRIMITIVES = {"new_lock": Atomicity.B, "acquire": Atomicity.R, "release": Atomicity.L}
OUTCOMES = ("agree", "core-rejects", "both-reject", "diverge")


class CatError(Exception):
    """The oracle rejects a term: unbound name or an atomic block that is not atomic."""


# ---------------------------------------------------------------------------
# Syntax


@dataclass(frozen=True)
class CConst:
    value: bool | None  # None is unit


@dataclass(frozen=True)
class CName:
    name: str  # a variable or a declared lock


@dataclass(frozen=True)
class CFun:
    name: str
    params: tuple[tuple[str, Type], ...]
    body: CatTerm


@dataclass(frozen=True)
class CPrim:
    name: str
    args: tuple[CatTerm, ...]


@dataclass(frozen=True)
class CRead:
    var: str
    race: bool
    lock: str | None = None
    type: Type | None = None


@dataclass(frozen=True)
class CWrite:
    var: str
    value: CatTerm
    race: bool
    lock: str | None = None
    type: Type | None = None


@dataclass(frozen=True)
class CLet:
    var: str
    bound: CatTerm
    body: CatTerm


@dataclass(frozen=True)
class CIf:
    cond: CatTerm
    then: CatTerm
    other: CatTerm


@dataclass(frozen=True)
class CWhile:
    cond: CatTerm
    body: CatTerm


@dataclass(frozen=True)
class CInvoke:
    fn: CatTerm
    targets: tuple[str, ...]
    args: tuple[CatTerm, ...]


@dataclass(frozen=True)
class CFork:
    body: CatTerm


@dataclass(frozen=True)
class CAtomic:
    body: CatTerm


CatTerm = CConst | CName | CFun | CPrim | CRead | CWrite | CLet | CIf | CWhile | CInvoke | CFork | CAtomic


@dataclass(frozen=True)
class RefDecl:
    lock: str
    type: Type


@dataclass
class CatProgram:
    locks: tuple[str, ...]
    refs: dict[str, RefDecl]
    env: dict[str, Atomicity]
    expect: str | None
    body: CatTerm


# ---------------------------------------------------------------------------
# Parsing


def _atom(s: SExpr) -> str | None:
    return s.text if isinstance(s, SAtom) else None


def _keywords(items: list) -> tuple[list, dict[str, SExpr]]:
    pos, kw = [], {}
    i = 0
    while i < len(items):
        t = _atom(items[i])
        if t is not None and t.startswith(":"):
            if i + 1 >= len(items):
                raise ParseError(f"keyword {t} lacks a value", items[i].span)
            kw[t[1:]] = items[i + 1]
            i += 2
        else:
            pos.append(items[i])
            i += 1
    return pos, kw


def _flag(s: SExpr) -> bool:
    t = _atom(s)
    if t in ("#t", "true"):
        return True
    if t in ("#f", "false"):
        return False
    raise ParseError("expected #t or #f", s.span)


def _ident(s: SExpr, what: str) -> str:
    t = _atom(s)
    if t is None or t.startswith(":"):
        raise ParseError(f"expected {what}", s.span)
    return t


class _CatParser:
    def __init__(self) -> None:
        self.q = fq_params().q

    def type(self, s: SExpr) -> Type:
        return type_from_sexpr(s, self.q, KINDS)

    def term(self, s: SExpr) -> CatTerm:
        if isinstance(s, SAtom):
            if s.text == "true":
                return CConst(True)
            if s.text == "false":
                return CConst(False)
            if s.text == "unit":
                return CConst(None)
            return CName(_ident(s, "a name"))
        if not isinstance(s, SList) or not s.items:
            raise ParseError("expected a CAT term", s.span)
        h = _atom(s.items[0])
        it = list(s.items[1:])
        sp = s.span

        def need(n: int) -> None:
            if len(it) != n:
                raise ParseError(f"'{h}' takes {n} operands", sp)

        if h == "fun":
            need(3)
            if not isinstance(it[1], SList):
                raise ParseError("expected a parameter list", it[1].span)
            params = []
            for p in it[1].items:
                if not (isinstance(p, SList) and len(p.items) == 2):
                    raise ParseError("expected (x T) parameter", p.span)
                params.append((_ident(p.items[0], "a parameter"), self.type(p.items[1])))
            return CFun(_ident(it[0], "a function name"), tuple(params), self.term(it[2]))
        if h == "prim":
            if not it:
                raise ParseError("'prim' needs a primitive name", sp)
            return CPrim(_ident(it[0], "a primitive"), tuple(self.term(a) for a in it[1:]))
        if h in ("read", "write"):
            pos, kw = _keywords(it)
            if "race" not in kw:
                raise ParseError(f"'{h}' needs a :race annotation", sp)
            if len(pos) != (1 if h == "read" else 2):
                raise ParseError(f"malformed '{h}'", sp)
            lock = _ident(kw["lock"], "a lock") if "lock" in kw else None
            ty = self.type(kw["type"]) if "type" in kw else None
            var = _ident(pos[0], "a reference")
            if h == "read":
                return CRead(var, _flag(kw["race"]), lock, ty)
            return CWrite(var, self.term(pos[1]), _flag(kw["race"]), lock, ty)
        if h == "let":
            need(3)
            return CLet(_ident(it[0], "a binder"), self.term(it[1]), self.term(it[2]))
        if h == "seq":
            if not it:
                raise ParseError("'seq' needs a term", sp)
            parts = [self.term(x) for x in it]
            out = parts[-1]
            for p in reversed(parts[:-1]):
                out = CLet("_", p, out)
            return out
        if h == "if":
            need(3)
            return CIf(*(self.term(x) for x in it))
        if h == "while":
            need(2)
            return CWhile(self.term(it[0]), self.term(it[1]))
        if h == "invoke":
            if len(it) < 2 or not isinstance(it[1], SList):
                raise ParseError("expected (invoke e (f ...) args ...)", sp)
            targets = tuple(_ident(x, "a function name") for x in it[1].items)
            return CInvoke(self.term(it[0]), targets, tuple(self.term(a) for a in it[2:]))
        if h == "fork":
            need(1)
            return CFork(self.term(it[0]))
        if h == "atomic":
            need(1)
            return CAtomic(self.term(it[0]))
        raise ParseError(f"unknown CAT form {h!r}", sp)

    def program(self, forms: list[SExpr]) -> CatProgram:
        if len(forms) != 1 or not isinstance(forms[0], SList) or _atom(forms[0].items[0]) != "cat":
            raise ParseError("a CAT file holds one (cat ...) form", forms[0].span if forms else None)
        locks: list[str] = []
        refs: dict[str, RefDecl] = {}
        env: dict[str, Atomicity] = {}
        expect = None
        body = None
        for f in forms[0].items[1:]:
            h = _atom(f.items[0]) if isinstance(f, SList) and f.items else None
            if h == "locks":
                locks.extend(_ident(x, "a lock") for x in f.items[1:])
            elif h == "refs":
                for r in f.items[1:]:
                    if not isinstance(r, SList) or not r.items:
                        raise ParseError("expected (x :lock m :type T)", r.span)
                    pos, kw = _keywords(list(r.items))
                    if len(pos) != 1 or "lock" not in kw or "type" not in kw:
                        raise ParseError("a reference declaration needs :lock and :type", r.span)
                    refs[_ident(pos[0], "a reference")] = RefDecl(_ident(kw["lock"], "a lock"), self.type(kw["type"]))
            elif h == "env":
                for b in f.items[1:]:
                    if not (isinstance(b, SList) and len(b.items) == 2):
                        raise ParseError("expected (f atomicity)", b.span)
                    env[_ident(b.items[0], "a function name")] = A.parse_literal(_ident(b.items[1], "an atomicity"))
            elif h == "expect":
                expect = _ident(f.items[1], "an outcome") if len(f.items) == 2 else None
                if expect not in OUTCOMES:
                    raise ParseError(f"expected outcome must be one of {', '.join(OUTCOMES)}", f.span)
            elif body is None:
                body = self.term(f)
            else:
                raise ParseError("a CAT file holds exactly one body term", f.span)
        if body is None:
            raise ParseError("missing CAT body", forms[0].span)
        for r in refs.values():
            if r.lock not in locks:
                raise ParseError(f"reference guarded by undeclared lock {r.lock!r}", None)
        return CatProgram(tuple(locks), refs, env, expect, body)


def parse_cat(text: str) -> CatProgram:
    return _CatParser().program(read_sexprs(text))


def load_cat(path: str | Path) -> CatProgram:
    return parse_cat(Path(path).read_text())


# ---------------------------------------------------------------------------
# Atomicity oracle


def cat_check(env: dict[str, Atomicity], t: CatTerm, locks: frozenset[str] | tuple = ()) -> Atomicity:
    """Least atomicity derivable for ``t``; raises CatError when no derivation exists.

    Functions are checked against ``env``: the body's atomicity must lie below
    the declared one.  Invocation sequences the arguments and the join of the
    candidate targets; the atomicity of the invoked expression itself does not
    enter the result.
    """
    seq, join, star = A.seq, A.join, A.star
    B = Atomicity.B

    def go(t: CatTerm, scope: frozenset[str]) -> Atomicity:
        match t:
            case CConst():
                return B
            case CName(n):
                if n not in scope:
                    raise CatError(f"unbound name {n!r}")
                return B
            case CFun(f, params, body):
                if f not in env:
                    raise CatError(f"function {f!r} has no atomicity in the environment")
                a = go(body, scope | {x for x, _ in params})
                if not leq(A, a, env[f]):
                    raise CatError(f"body of {f} has atomicity {A.render(a)}, above its declared {A.render(env[f])}")
                return B
            case CPrim(p, args):
                if p not in CAT_PRIMITIVES:
                    raise CatError(f"unknown primitive {p!r}")
                out = B
                for a in args:
                    out = seq(out, go(a, scope))
                return seq(out, CAT_PRIMITIVES[p])
            case CRead(x, race, _, _):
                if x not in scope:
                    raise CatError(f"unbound reference {x!r}")
                return Atomicity.A if race else B
            case CWrite(x, v, race, _, _):
                if x not in scope:
                    raise CatError(f"unbound reference {x!r}")
                return seq(go(v, scope), Atomicity.A if race else B)
            case CLet(x, e1, e2):
                return seq(go(e1, scope), go(e2, scope | {x}))
            case CIf(c, e1, e2):
                return seq(go(c, scope), join(go(e1, scope), go(e2, scope)))
            case CWhile(c, b):
                a1, a2 = go(c, scope), go(b, scope)
                return seq(a1, star(seq(a2, a1)))
            case CInvoke(fn, targets, args):
                go(fn, scope)
                out = B
                for a in args:
                    out = seq(out, go(a, scope))
                tgt = None
                for f in targets:
                    if f not in env:
                        raise CatError(f"invocation target {f!r} has no atomicity in the environment")
                    tgt = env[f] if tgt is None else join(tgt, env[f])
                if tgt is None:
                    raise CatError("invocation with no target functions")
                return seq(out, tgt)
            case CFork(body):
                go(body, scope)
                return Atomicity.A
            case CAtomic(body):
                a = go(body, scope)
                if not leq(A, a, Atomicity.A):
                    raise CatError(f"atomic block has atomicity {A.render(a)}, not below A")
                return a
        raise CatError(f"not a CAT term: {t!r}")

    return go(t, frozenset(locks))


def program_scope(p: CatProgram) -> frozenset[str]:
    return frozenset(p.locks) | frozenset(p.refs)


# ---------------------------------------------------------------------------
# Translation


@dataclass
class Translation:
    term: Term
    functions: dict[int, tuple[str, int]] = field(default_factory=dict)  # id(lam) -> (name, arity)
    lambdas: list = field(default_factory=list)

    def name_of(self, lam: Term) -> tuple[str, int] | None:
        hit = self.functions.get(id(lam))
        if hit is not None:
            return hit
        for obj, info in self.lambdas:
            if obj == lam:
                return info
        return None


class TranslationError(ValueError):
    pass


def wraplock(e: Term) -> Term:
    """``let x = new_lock () in (acquire x; e; release x; ())``."""
    x = fresh("wl")
    body = seq_term(
        App(Prim("acquire"), Var(x)),
        seq_term(e, seq_term(App(Prim("release"), Var(x)), UNIT)),
    )
    return let_term(x, App(Prim("new_lock"), UNIT), body)


def translate(p: CatProgram | CatTerm, refs: dict[str, RefDecl] | None = None) -> Translation:
    """Translate to the core language over the lockset-times-atomicity bundle."""
    if isinstance(p, CatProgram):
        refs, t = p.refs, p.body
    else:
        refs, t = refs or {}, p
    out = Translation(UNIT)

    def access(x: str, lock: str | None, ty: Type | None, prim: str) -> Term:
        decl = refs.get(x)
        lk = lock or (decl.lock if decl else None)
        tau = ty or (decl.type if decl else None)
        if lk is None or tau is None:
            raise TranslationError(f"access to {x!r} lacks a lock or type annotation")
        return App(TyApp(App(Prim(prim), Var(lk)), tau), Var(x))

    def go(t: CatTerm) -> Term:
        match t:
            case CConst(v):
                return UNIT if v is None else BoolVal(v)
            case CName(n):
                return Var(n)
            case CFun(f, params, body):
                inner = go(body)
                if not params:
                    params = (("_", UNIT_T),)
                for x, ty in reversed(params):
                    inner = Lam(x, inner, ty)
                out.functions[id(inner)] = (f, len(params))
                out.lambdas.append((inner, (f, len(params))))
                return inner
            case CPrim(name, args):
                term: Term = Prim(name)
                for a in args or (CConst(None),):
                    term = App(term, go(a))
                return term
            case CRead(x, race, lock, ty):
                return access(x, lock, ty, "read_racy" if race else "read_sync")
            case CWrite(x, v, race, lock, ty):
                return App(access(x, lock, ty, "write_racy" if race else "write_sync"), go(v))
            case CLet(x, e1, e2):
                return let_term(x, go(e1), go(e2))
            case CIf(c, e1, e2):
                return If(go(c), go(e1), go(e2))
            case CWhile(c, b):
                return While(go(c), go(b))
            case CInvoke(fn, _, args):
                term = go(fn)
                for a in args or (CConst(None),):
                    term = App(term, go(a))
                return term
            case CFork(body):
                return let_term("_", Lam("_", go(body), UNIT_T), wraplock(UNIT))
            case CAtomic(body):
                thunk = Lam("_", wraplock(go(body)), BOOL)
                return seq_term(App(Prim("req_atomic"), thunk), go(body))
        raise TranslationError(f"not a CAT term: {t!r}")

    out.term = go(t)
    return out


def core_env(p: CatProgram) -> tuple[TermBinding, ...]:
    out = [TermBinding(m, LOCK) for m in p.locks]
    for x, r in p.refs.items():
        out.append(TermBinding(x, TApp(TApp(REF, Singleton(Var(r.lock))), r.type)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Differential check


@dataclass
class DifferentialReport:
    outcome: str
    expected: str | None
    cat_atomicity: str | None
    cat_error: str | None
    core_type: str | None
    core_effect: str | None
    core_error: str | None
    gamma_hat: dict[str, str]
    translated: str

    @property
    def as_expected(self) -> bool:
        return self.outcome == (self.expected or "agree") or (self.expected is None and self.outcome != "diverge")

    @property
    def lemma_holds(self) -> bool:
        return self.outcome != "diverge"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["as_expected"] = self.as_expected
        return d

    def lines(self) -> list[str]:
        out = [f"outcome: {self.outcome}" + (f" (expected {self.expected})" if self.expected else "")]
        out.append(f"  CAT:  {self.cat_atomicity}" if self.cat_error is None else f"  CAT:  rejected: {self.cat_error}")
        if self.core_error is None:
            out.append(f"  core: {self.core_type} | {self.core_effect}")
        else:
            out.append(f"  core: rejected: {self.core_error}")
        if self.gamma_hat:
            out.append("  functions: " + ", ".join(f"{k}:{v}" for k, v in sorted(self.gamma_hat.items())))
        return out


def _final_latent(t: Type, n: int):
    for _ in range(n - 1):
        if not isinstance(t, Pi):
            return None
        t = t.cod
    return t.eff if isinstance(t, Pi) else None


def unembed_check(p: CatProgram) -> DifferentialReport:
    """Type the translation in the core language and compare atomicities with the oracle.

    Function atomicities for the oracle come from the core derivation: each
    function name maps to the atomicity of the final latent effect of its
    curried translation.  Names the core checker never reached keep their
    declared atomicity.
    """
    params = fq_params()
    q = params.q
    tr = translate(p)
    ch = Checker(params)
    seen: dict[str, Atomicity] = {}

    def observe(term, res) -> None:
        if not isinstance(term, Lam):
            return
        hit = tr.name_of(term)
        if hit is None or not isinstance(res.type, Pi):
            return
        name, arity = hit
        eff = _final_latent(res.type, arity)
        v = ground_value(q, eff) if eff is not None else None
        if v is None or v == q.top:
            return
        atom = v.right
        seen[name] = atom if name not in seen else A.join(seen[name], atom)

    ch.observers.append(observe)
    core_type = core_effect = core_error = None
    core_atom = None
    try:
        env = check_env(ch, core_env(p))
        res = ch.synth(env, tr.term)
        core_type = render_type(q, res.type)
        core_effect = render_infix(q, res.effect)
        g = ground_value(q, res.effect)
        core_atom = g.right if g is not None and g != q.top else None
        if core_atom is None:
            core_error = "effect is not a ground non-error element"
    except CheckError as exc:
        core_error = str(exc)
    gamma = {**p.env, **seen}
    cat_atom = cat_error = None
    try:
        cat_atom = cat_check(gamma, p.body, program_scope(p))
    except CatError as exc:
        cat_error = str(exc)
    if core_error is None:
        outcome = "agree" if cat_atom == core_atom else "diverge"
    else:
        outcome = "core-rejects" if cat_error is None else "both-reject"
    return DifferentialReport(
        outcome,
        p.expect,
        None if cat_atom is None else A.render(cat_atom),
        cat_error,
        core_type,
        core_effect,
        core_error,
        {k: A.render(v) for k, v in seen.items()},
        render_term(q, tr.term),
    )


__all__ = [
    "CAT_PRIMITIVES",
    "CatError",
    "CatProgram",
    "DifferentialReport",
    "TranslationError",
    "cat_check",
    "core_env",
    "load_cat",
    "parse_cat",
    "translate",
    "unembed_check",
    "wraplock",
]
