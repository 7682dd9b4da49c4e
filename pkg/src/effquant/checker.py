"""Kinding and typing for the generic core language.

``type_of`` synthesizes a type and effect.  Lambdas without a binder
annotation are accepted where the expected domain is known: in the function
position of an application (the argument is typed first, which is how
``let`` and ``;`` typecheck) and when checked against a Π-type.  Passing a
state type ``sigma`` switches to runtime typing: primitives are typed by
``sigma`` and effect literals may mention the runtime names it holds.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

from effquant.algebra import Quantale
from effquant.effects import (
    EffExpr,
    EVar,
    Lit,
    Normalizer,
    Seq,
    Star,
    Join,
    Verdict,
    effect_vars,
    literal_names,
    normalize,
    render_infix,
    subeffect,
    subst_var,
    to_expr,
)
from effquant.lang import (
    EFF,
    STAR,
    App,
    BoolVal,
    BOOL,
    Binding,
    EffType,
    Forall,
    If,
    KArrow,
    Kind,
    KEff,
    KStar,
    Lam,
    LanguageParams,
    Pi,
    Prim,
    PrimType,
    Program,
    Singleton,
    SubstitutionError,
    TApp,
    TBool,
    Term,
    TermBinding,
    TUnit,
    TVar,
    TyApp,
    TyLam,
    Type,
    TypeBinding,
    UNIT_T,
    UnitVal,
    Var,
    While,
    alpha_equal,
    free_vars,
    fresh,
    is_value,
    parse_program,
    render_kind,
    render_term,
    render_type,
    subst_effect_value,
    subst_term,
    subst_type_in_term,
    subst_type_type,
    subst_type_value,
)

__all__ = [
    "CheckError",
    "Derivation",
    "Env",
    "TypingResult",
    "check_program",
    "kind_of",
    "subst_term",
    "type_of",
    "types_equal",
]


class CheckError(Exception):
    """A kinding or typing failure, with the rule and source location."""

    def __init__(self, rule: str, message: str, term: Term | None = None, context: tuple[str, ...] = ()) -> None:
        self.rule = rule
        self.message = message
        self.span = getattr(term, "span", None)
        self.context = context
        where = f" (line {self.span.line}, column {self.span.col})" if self.span else ""
        super().__init__(f"{rule}: {message}{where}")

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "message": self.message,
            "span": None if self.span is None else {"line": self.span.line, "col": self.span.col},
            "context": list(self.context),
        }


@dataclass(frozen=True)
class Derivation:
    rule: str
    type: Type
    effect: EffExpr
    children: tuple[Derivation, ...] = ()


@dataclass(frozen=True)
class TypingResult:
    type: Type
    effect: EffExpr
    derivation: Derivation = field(repr=False, compare=False)


# ---------------------------------------------------------------------------
# Environments


@dataclass(frozen=True)
class Env:
    """An ordered telescope of term and type bindings."""

    entries: tuple[Binding, ...] = ()

    def extend(self, b: Binding) -> Env:
        return Env(self.entries + (b,))

    def term(self, name: str) -> Type | None:
        for b in reversed(self.entries):
            if b.name == name:
                return b.type if isinstance(b, TermBinding) else None
        return None

    def kind(self, name: str) -> Kind | None:
        for b in reversed(self.entries):
            if b.name == name:
                return b.kind if isinstance(b, TypeBinding) else None
        return None

    def names(self) -> frozenset[str]:
        return frozenset(b.name for b in self.entries)

    def term_names(self) -> frozenset[str]:
        return frozenset(b.name for b in self.entries if isinstance(b, TermBinding))


# ---------------------------------------------------------------------------
# The checker


class Checker:
    def __init__(self, params: LanguageParams, sigma: dict | None = None) -> None:
        self.params = params
        self.q: Quantale = params.q
        self.sigma = sigma
        self.norm = Normalizer(self.q)
        self.observers: list = []

    # Effects ------------------------------------------------------------------
    def simplify(self, e: EffExpr) -> EffExpr:
        return to_expr(self.q, self.norm.normalize(e))

    def eff_eq(self, a: EffExpr, b: EffExpr) -> bool:
        return self.norm.normalize(a) == self.norm.normalize(b)

    def render_eff(self, e: EffExpr) -> str:
        return render_infix(self.q, e)

    def not_top(self, e: EffExpr, rule: str, term: Term | None) -> EffExpr:
        nf = self.norm.normalize(e)
        if nf.is_top:
            raise CheckError(rule, f"effect {self.render_eff(e)} is the error element", term)
        return to_expr(self.q, nf)

    def scope_names(self, env: Env) -> frozenset[str]:
        names = env.term_names()
        if self.sigma is not None:
            names |= frozenset(self.sigma)
        return names

    def kind_effect(self, env: Env, e: EffExpr, term: Term | None = None) -> None:
        for v in effect_vars(e):
            if env.kind(v) != EFF:
                raise CheckError("K-Eff", f"effect variable {v!r} is not bound at kind E", term)
        missing = literal_names(self.q, e) - self.scope_names(env)
        if missing:
            raise CheckError("K-Eff", f"effect mentions out-of-scope names {sorted(missing)}", term)
        try:
            self.norm.normalize(e)
        except ValueError as exc:
            raise CheckError("K-Eff", str(exc), term) from None

    # Kinding ------------------------------------------------------------------
    def kind_of(self, env: Env, t: Type, term: Term | None = None) -> Kind:
        match t:
            case TBool() | TUnit():
                return STAR
            case PrimType(n):
                if n not in self.params.kinds:
                    raise CheckError("K-Prim", f"unknown primitive type {n!r}", term)
                return self.params.kinds[n]
            case TVar(n):
                k = env.kind(n)
                if k is None:
                    if n in self.params.kinds:
                        return self.params.kinds[n]
                    raise CheckError("K-Var", f"unbound type variable {n!r}", term)
                return k
            case TApp(f, a):
                kf = self.kind_of(env, f, term)
                if not isinstance(kf, KArrow):
                    raise CheckError("K-App", f"{render_type(self.q, f)} has kind {render_kind(kf)}, not an arrow", term)
                ka = self.kind_of(env, a, term)
                if ka != kf.dom:
                    raise CheckError(
                        "K-App", f"argument {render_type(self.q, a)} has kind {render_kind(ka)}, expected {render_kind(kf.dom)}", term
                    )
                return kf.cod
            case EffType(e):
                self.kind_effect(env, e, term)
                return EFF
            case Pi(x, dom, eff, cod):
                self.expect_star(env, dom, term)
                inner = env.extend(TermBinding(x, dom))
                self.kind_effect(inner, eff, term)
                self.expect_star(inner, cod, term)
                return STAR
            case Forall(a, k, eff, body):
                inner = env.extend(TypeBinding(a, k))
                self.kind_effect(inner, eff, term)
                self.expect_star(inner, body, term)
                return STAR
            case Singleton(v):
                if not is_value(v, self.arity):
                    raise CheckError("K-Singleton", "singleton of a non-value", term)
                r = self.synth(env, v)
                if not self.eff_eq(r.effect, Lit(self.q.unit)):
                    raise CheckError("K-Singleton", "singleton value must have the unit effect", term)
                return STAR
        raise CheckError("K", f"not a type: {t!r}", term)

    def expect_star(self, env: Env, t: Type, term: Term | None) -> None:
        k = self.kind_of(env, t, term)
        if k != STAR:
            raise CheckError("K", f"{render_type(self.q, t)} has kind {render_kind(k)}, expected *", term)

    def arity(self, name: str) -> int:
        return self.params.arity(name, self.sigma)

    def types_equal(self, a: Type, b: Type) -> bool:
        return alpha_equal(self.q, a, b, self.eff_eq)

    # Typing -------------------------------------------------------------------
    def unit_eff(self) -> EffExpr:
        return Lit(self.q.unit)

    def result(self, rule: str, t: Type, e: EffExpr, term: Term, children: Sequence[Derivation] = ()) -> TypingResult:
        e = self.not_top(e, rule, term)
        res = TypingResult(t, e, Derivation(rule, t, e, tuple(children)))
        for obs in self.observers:
            obs(term, res)
        return res

    def fresh_binder(self, env: Env, name: str) -> str:
        return fresh(name) if name in env.names() or (self.sigma is not None and name in self.sigma) else name

    def synth(self, env: Env, e: Term) -> TypingResult:
        match e:
            case Var(n):
                t = env.term(n)
                if t is None:
                    raise CheckError("T-Var", f"unbound variable {n!r}", e)
                return self.result("T-Var", t, self.unit_eff(), e)
            case Prim(n):
                table = self.params.delta if self.sigma is None else self.sigma
                if n not in table:
                    raise CheckError("T-Prim", f"unknown primitive {n!r}", e)
                return self.result("T-Prim", table[n], self.unit_eff(), e)
            case BoolVal():
                return self.result("T-Bool", BOOL, self.unit_eff(), e)
            case UnitVal():
                return self.result("T-Unit", UNIT_T, self.unit_eff(), e)
            case Lam(x, body, ann, eff):
                if ann is None:
                    raise CheckError("T-Lambda", f"cannot infer the type of binder {x!r}; annotate it", e)
                return self.lam(env, e, ann, eff, None)
            case App(f, a):
                return self.app(env, e)
            case If(c, t, f):
                rc = self.check_bool(env, c, "T-If")
                r1 = self.synth(env, t)
                r2 = self.synth(env, f)
                if not self.types_equal(r1.type, r2.type):
                    raise CheckError(
                        "T-If",
                        f"branches disagree: {render_type(self.q, r1.type)} vs {render_type(self.q, r2.type)}",
                        e,
                    )
                eff = Seq(rc.effect, Join(r1.effect, r2.effect))
                return self.result("T-If", r1.type, eff, e, [rc.derivation, r1.derivation, r2.derivation])
            case While(c, b):
                rc = self.check_bool(env, c, "T-While")
                rb = self.synth(env, b)
                try:
                    eff = self.simplify(Seq(rc.effect, Star(Seq(rb.effect, rc.effect))))
                except ValueError as exc:
                    raise CheckError("T-While", str(exc), e) from None
                return self.result("T-While", UNIT_T, eff, e, [rc.derivation, rb.derivation])
            case TyLam(a, k, body):
                if a in env.names():
                    a2 = fresh(a)
                    body = subst_type_in_term(self.q, body, a, TVar(a2))
                    a = a2
                rb = self.synth(env.extend(TypeBinding(a, k)), body)
                return self.result("T-TAbs", Forall(a, k, rb.effect, rb.type), self.unit_eff(), e, [rb.derivation])
            case TyApp(f, t):
                rf = self.synth(env, f)
                ft = rf.type
                if not isinstance(ft, Forall):
                    raise CheckError("T-TApp", f"type application of non-polymorphic {render_type(self.q, ft)}", e)
                k = self.kind_of(env, t, e)
                if k != ft.kind:
                    raise CheckError("T-TApp", f"type argument has kind {render_kind(k)}, expected {render_kind(ft.kind)}", e)
                try:
                    latent = self.type_into_effect(ft.eff, ft.var, t)
                    rt = subst_type_type(self.q, ft.body, ft.var, t)
                except SubstitutionError as exc:
                    raise CheckError("T-TApp", str(exc), e) from None
                return self.result("T-TApp", rt, Seq(rf.effect, latent), e, [rf.derivation])
        raise CheckError("T", f"not a term: {e!r}", e)

    def type_into_effect(self, eff: EffExpr, a: str, t: Type) -> EffExpr:
        if a not in effect_vars(eff):
            return eff
        match t:
            case EffType(x):
                return subst_var(eff, a, x)
            case TVar(n):
                return subst_var(eff, a, EVar(n))
        raise SubstitutionError(f"cannot put {render_type(self.q, t)} into an effect")

    def check_bool(self, env: Env, c: Term, rule: str) -> TypingResult:
        r = self.synth(env, c)
        if not isinstance(r.type, TBool):
            raise CheckError(rule, f"condition has type {render_type(self.q, r.type)}, expected bool", c)
        return r

    def lam(self, env: Env, e: Lam, dom: Type, eff: EffExpr | None, expected: Pi | None) -> TypingResult:
        self.expect_star(env, dom, e)
        x, body = e.var, e.body
        if x in env.names() or (self.sigma is not None and x in self.sigma):
            x2 = fresh(x)
            body = subst_term(self.q, body, x, Var(x2))
            if eff is not None:
                eff = subst_effect_value(self.q, eff, x, Var(x2))
            x = x2
        inner = env.extend(TermBinding(x, dom))
        rb = self.synth(inner, body)
        if expected is not None:
            exp_eff = subst_effect_value(self.q, expected.eff, expected.var, Var(x))
            exp_cod = subst_type_value(self.q, expected.cod, expected.var, Var(x))
            if eff is None:
                eff = exp_eff
            if not self.types_equal(rb.type, exp_cod):
                raise CheckError(
                    "T-Lambda",
                    f"body has type {render_type(self.q, rb.type)}, expected {render_type(self.q, exp_cod)}",
                    e,
                )
        if eff is None:
            latent = rb.effect
        else:
            self.kind_effect(inner, eff, e)
            v = subeffect(self.q, rb.effect, eff)
            if v is not Verdict.YES:
                raise CheckError(
                    "T-Lambda",
                    f"body effect {self.render_eff(rb.effect)} is not below the declared {self.render_eff(eff)} ({v.value})",
                    e,
                )
            latent = self.simplify(eff)
        return self.result("T-Lambda", Pi(x, dom, latent, rb.type), self.unit_eff(), e, [rb.derivation])

    def check(self, env: Env, e: Term, expected: Type) -> TypingResult:
        if isinstance(e, Lam) and isinstance(expected, Pi):
            dom = e.ann if e.ann is not None else expected.dom
            r = self.lam(env, e, dom, e.eff, expected)
        else:
            r = self.synth(env, e)
        if not self.types_equal(r.type, expected):
            raise CheckError(
                "T-App",
                f"argument has type {render_type(self.q, r.type)}, expected {render_type(self.q, expected)}",
                e,
            )
        return r

    def app(self, env: Env, e: App) -> TypingResult:
        f, a = e.fn, e.arg
        if isinstance(f, Lam) and f.ann is None:
            ra = self.synth(env, a)
            rf = self.lam(env, f, ra.type, f.eff, None)
        else:
            rf = self.synth(env, f)
            if not isinstance(rf.type, Pi):
                raise CheckError("T-App", f"application of non-function type {render_type(self.q, rf.type)}", e)
            ra = self.check(env, a, rf.type.dom)
        pi = rf.type
        x = pi.var
        dependent = x in free_vars(pi.eff) | free_vars(pi.cod)
        if dependent and not is_value(a, self.arity):
            raise CheckError("T-App", f"argument is not a value but {x!r} occurs in the latent effect or result", e)
        try:
            latent = subst_effect_value(self.q, pi.eff, x, a) if dependent else pi.eff
            rt = subst_type_value(self.q, pi.cod, x, a) if dependent else pi.cod
        except SubstitutionError as exc:
            raise CheckError("T-App", str(exc), e) from None
        return self.result("T-App", rt, Seq(Seq(rf.effect, ra.effect), latent), e, [rf.derivation, ra.derivation])


# ---------------------------------------------------------------------------
# Module-level API


def _env(env: Env | Sequence[Binding] | None) -> Env:
    if env is None:
        return Env()
    if isinstance(env, Env):
        return env
    return Env(tuple(env))


def kind_of(params: LanguageParams, env: Env | Sequence[Binding] | None, t: Type, sigma: dict | None = None) -> Kind:
    return Checker(params, sigma).kind_of(_env(env), t)


def type_of(params: LanguageParams, env: Env | Sequence[Binding] | None, e: Term, sigma: dict | None = None) -> TypingResult:
    return Checker(params, sigma).synth(_env(env), e)


def types_equal(params: LanguageParams, a: Type, b: Type) -> bool:
    return Checker(params).types_equal(a, b)


def check_env(checker: Checker, bindings: Sequence[Binding]) -> Env:
    """Check the telescope is well formed: distinct names, each type of kind * under its prefix."""
    env = Env()
    for b in bindings:
        if b.name in env.names():
            raise CheckError("Env", f"duplicate binding for {b.name!r}")
        if isinstance(b, TermBinding):
            checker.expect_star(env, b.type, None)
        env = env.extend(b)
    return env


@dataclass
class CheckReport:
    ok: bool
    program: Program | None
    result: TypingResult | None
    error: CheckError | None
    q: Quantale = field(repr=False)

    def to_dict(self) -> dict:
        out: dict = {"ok": self.ok}
        if self.result is not None:
            out["type"] = render_type(self.q, self.result.type)
            out["effect"] = render_infix(self.q, self.result.effect)
        if self.error is not None:
            out["error"] = self.error.to_dict()
        return out

    def lines(self) -> list[str]:
        if self.ok:
            return [f"type:   {render_type(self.q, self.result.type)}", f"effect: {render_infix(self.q, self.result.effect)}"]
        return [f"rejected: {self.error}"]


def check_program(params: LanguageParams, text: str | Program, sigma: dict | None = None) -> CheckReport:
    """Parse (if needed) and typecheck a program under its ``assume`` headers."""
    from effquant.lang import ParseError

    try:
        prog = text if isinstance(text, Program) else parse_program(text, params.q, params.kinds)
    except ParseError as exc:
        return CheckReport(False, None, None, CheckError("Parse", str(exc)), params.q)
    ch = Checker(params, sigma)
    try:
        env = check_env(ch, prog.env)
        res = ch.synth(env, prog.term)
    except CheckError as exc:
        return CheckReport(False, prog, None, exc, params.q)
    return CheckReport(True, prog, res, None, params.q)


def render_result(params: LanguageParams, r: TypingResult) -> str:
    return f"{render_type(params.q, r.type)} | {render_infix(params.q, r.effect)}"


def describe_term(params: LanguageParams, e: Term) -> str:
    return render_term(params.q, e)
