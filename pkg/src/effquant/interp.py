"""Labelled small-step semantics with effect accumulation.

Evaluation is call-by-value and left to right: the function position is
reduced before the argument, conditions before branches.  Each step carries
an effect; beta steps, conditionals and loop unrolling have the unit effect
and primitive steps have the final latent effect of the primitive's type with
the actual arguments substituted in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from effquant.algebra import Elem, leq
from effquant.checker import CheckError, Checker, Env
from effquant.effects import ground_value, render_infix, Lit
from effquant.lang import (
    App,
    BoolVal,
    EffType,
    Forall,
    If,
    Lam,
    LanguageParams,
    Pi,
    Prim,
    Program,
    SubstitutionError,
    Term,
    TVar,
    TyApp,
    TyLam,
    UNIT,
    Var,
    While,
    is_type,
    is_value,
    render_term,
    render_type,
    seq_term,
    spine,
    subst_effect_value,
    subst_term,
    subst_type_in_term,
    subst_type_type,
    subst_type_value,
)
from effquant.effects import subst_var

DEFAULT_FUEL = 100_000


@dataclass(frozen=True)
class MachineState:
    state: object
    term: Term
    sigma: dict = field(compare=False)
    accumulated: Elem


@dataclass(frozen=True)
class Stepped:
    next: MachineState
    effect: Elem
    rule: str


@dataclass(frozen=True)
class IsValue:
    pass


@dataclass(frozen=True)
class StuckPrimitive:
    name: str
    args: tuple


@dataclass(frozen=True)
class RuntimeTypeError:
    detail: str


StepOutcome = Stepped | IsValue | StuckPrimitive | RuntimeTypeError


class _Stuck(Exception):
    def __init__(self, outcome: StuckPrimitive | RuntimeTypeError) -> None:
        self.outcome = outcome


def initial(params: LanguageParams, term: Term) -> MachineState:
    return MachineState(params.initial_state(), term, dict(params.delta), params.q.unit)


def primitive_effect(params: LanguageParams, sigma: dict, name: str, args: list) -> Elem:
    """The last latent effect along the primitive's type spine, arguments substituted."""
    q = params.q
    t = sigma[name]
    latent = Lit(q.unit)
    for a in args:
        if isinstance(t, Pi):
            latent = subst_effect_value(q, t.eff, t.var, a)
            t = subst_type_value(q, t.cod, t.var, a)
        elif isinstance(t, Forall):
            latent = t.eff
            if t.var in _eff_vars(latent):
                if isinstance(a, EffType):
                    latent = subst_var(latent, t.var, a.effect)
                else:
                    raise SubstitutionError("non-effect type argument reaches an effect")
            t = subst_type_type(q, t.body, t.var, a)
        else:
            raise SubstitutionError(f"{name} applied to too many arguments")
    v = ground_value(q, latent)
    if v is None:
        raise SubstitutionError(f"effect of {name} is not ground after substitution")
    return v


def _eff_vars(e):
    from effquant.effects import effect_vars

    return effect_vars(e)


def step(params: LanguageParams, st: MachineState) -> StepOutcome:
    arity = lambda n: params.arity(n, st.sigma)  # noqa: E731
    if is_value(st.term, arity):
        return IsValue()
    try:
        rule, term, eff, state, sigma = _reduce(params, st, st.term, arity)
    except _Stuck as s:
        return s.outcome
    except SubstitutionError as exc:
        return RuntimeTypeError(str(exc))
    acc = params.q.seq(st.accumulated, eff)
    return Stepped(MachineState(state, term, sigma, acc), eff, rule)


def _reduce(params: LanguageParams, st: MachineState, e: Term, arity):
    q = params.q
    unit = q.unit

    def plain(rule: str, t: Term):
        return rule, t, unit, st.state, st.sigma

    def inner(sub: Term, rebuild):
        rule, t, eff, state, sigma = _reduce(params, st, sub, arity)
        return rule, rebuild(t), eff, state, sigma

    match e:
        case App(f, a):
            if not is_value(f, arity):
                return inner(f, lambda t: App(t, a, e.span))
            if not is_value(a, arity):
                return inner(a, lambda t: App(f, t, e.span))
            if isinstance(f, Lam):
                return plain("E-App", subst_term(q, f.body, f.var, a))
            return _prim(params, st, e, arity)
        case TyApp(f, t):
            if not is_value(f, arity):
                return inner(f, lambda x: TyApp(x, t, e.span))
            if isinstance(f, TyLam):
                return plain("E-TApp", subst_type_in_term(q, f.body, f.var, t))
            return _prim(params, st, e, arity)
        case If(c, t, f):
            if not is_value(c, arity):
                return inner(c, lambda x: If(x, t, f, e.span))
            if isinstance(c, BoolVal):
                return plain("E-IfTrue" if c.value else "E-IfFalse", t if c.value else f)
            raise _Stuck(RuntimeTypeError(f"condition is not a boolean: {render_term(q, c)}"))
        case While(c, b):
            return plain("E-While", If(c, seq_term(b, While(c, b, e.span)), UNIT, e.span))
        case Var(n):
            raise _Stuck(RuntimeTypeError(f"free variable {n!r}"))
    raise _Stuck(RuntimeTypeError(f"no rule applies to {render_term(q, e)}"))


def _prim(params: LanguageParams, st: MachineState, e: Term, arity):
    sp = spine(e)
    if sp is None:
        raise _Stuck(RuntimeTypeError(f"application of a non-function: {render_term(params.q, e)}"))
    head, args = sp
    if head.name not in st.sigma:
        raise _Stuck(RuntimeTypeError(f"unknown primitive {head.name!r}"))
    if len(args) != arity(head.name):
        raise _Stuck(RuntimeTypeError(f"{head.name} applied to {len(args)} arguments, expects {arity(head.name)}"))
    res = params.semantics(head.name, list(args), st.state, st.sigma)
    if res is None:
        raise _Stuck(StuckPrimitive(head.name, tuple(args)))
    eff = primitive_effect(params, st.sigma, head.name, list(args))
    return "E-Prim", res.result, eff, res.state, res.sigma


# ---------------------------------------------------------------------------
# Running


@dataclass(frozen=True)
class TraceLine:
    index: int
    rule: str
    effect: str
    accumulated: str
    sigma_size: int

    def render(self) -> str:
        return f"{self.index:>5}  {self.rule:<10} {self.effect:<20} acc={self.accumulated:<20} |Σ|={self.sigma_size}"


@dataclass
class RunResult:
    outcome: str  # "value", "diverged", "stuck", "type-error"
    final: MachineState
    steps: int
    detail: str = ""
    trace: list[TraceLine] = field(default_factory=list)

    def to_dict(self, params: LanguageParams) -> dict:
        q = params.q
        return {
            "outcome": self.outcome,
            "steps": self.steps,
            "value": render_term(q, self.final.term) if self.outcome == "value" else None,
            "accumulated": q.render(self.final.accumulated),
            "detail": self.detail,
            "trace": [t.__dict__ for t in self.trace],
        }


def run(params: LanguageParams, program: Term | Program, fuel: int = DEFAULT_FUEL, trace: bool = False) -> RunResult:
    """Step until a value, a stuck state, or ``fuel`` steps; effects fold into ``accumulated``."""
    term = program.term if isinstance(program, Program) else program
    if isinstance(program, Program) and program.env:
        raise ValueError("only closed programs can run; drop the assume headers")
    q = params.q
    st = initial(params, term)
    lines: list[TraceLine] = []
    for i in range(fuel):
        out = step(params, st)
        match out:
            case IsValue():
                return RunResult("value", st, i, "", lines)
            case StuckPrimitive(name, args):
                return RunResult("stuck", st, i, f"{name} undefined on its arguments", lines)
            case RuntimeTypeError(detail):
                return RunResult("type-error", st, i, detail, lines)
            case Stepped(nxt, eff, rule):
                if trace:
                    lines.append(TraceLine(i + 1, rule, q.render(eff), q.render(nxt.accumulated), len(nxt.sigma)))
                st = nxt
    if isinstance(step(params, st), IsValue):
        return RunResult("value", st, fuel, "", lines)
    return RunResult("diverged", st, fuel, f"fuel of {fuel} steps exhausted", lines)


# ---------------------------------------------------------------------------
# Preservation harness


@dataclass
class HarnessReport:
    ok: bool
    steps: int
    outcome: str
    static_type: str = ""
    static_effect: str = ""
    accumulated: str = ""
    violation: str | None = None
    violation_step: int | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def lines(self) -> list[str]:
        head = f"preservation: {'ok' if self.ok else 'VIOLATED'} after {self.steps} steps ({self.outcome})"
        out = [head, f"  static: {self.static_type} | {self.static_effect}", f"  accumulated: {self.accumulated}"]
        if self.violation:
            out.append(f"  step {self.violation_step}: {self.violation}")
        return out


def _sigma_extends(old: dict, new: dict, checker: Checker) -> str | None:
    for k, t in old.items():
        if k not in new:
            return f"state type lost {k!r}"
        if new[k] is not t and not checker.types_equal(t, new[k]):
            return f"state type changed the type of {k!r}"
    return None


def preservation_harness(params: LanguageParams, program: Term | Program, fuel: int = DEFAULT_FUEL) -> HarnessReport:
    """Run ``program`` and re-type every intermediate configuration.

    At each step the residual effect of the current term, sequenced after the
    effect accumulated so far, must stay below the static effect; the type
    must be preserved; the state type may only grow and must type the state.
    """
    q = params.q
    term = program.term if isinstance(program, Program) else program
    src = Checker(params)
    try:
        static = src.synth(Env(), term)
    except CheckError as exc:
        return HarnessReport(False, 0, "ill-typed", violation=f"source typing failed: {exc}", violation_step=0)
    gamma = ground_value(q, static.effect)
    st_type = render_type(q, static.type)
    st_eff = render_infix(q, static.effect)
    if gamma is None:
        return HarnessReport(False, 0, "open-effect", st_type, st_eff, violation="static effect is not ground")
    st = initial(params, term)

    def fail(i: int, msg: str, outcome: str = "running") -> HarnessReport:
        return HarnessReport(False, i, outcome, st_type, st_eff, q.render(st.accumulated), msg, i)

    def value_check(sigma: dict):
        def check(v: Term, t, _sigma=sigma) -> str | None:
            try:
                r = Checker(params, _sigma).synth(Env(), v)
            except CheckError as exc:
                return str(exc)
            if ground_value(q, r.effect) != q.unit:
                return "stored value has a non-unit effect"
            if not Checker(params, _sigma).types_equal(r.type, t):
                return f"stored value has type {render_type(q, r.type)}, expected {render_type(q, t)}"
            return None

        return check

    for i in range(fuel + 1):
        ch = Checker(params, st.sigma)
        try:
            r = ch.synth(Env(), st.term)
        except CheckError as exc:
            return fail(i, f"runtime typing failed: {exc}")
        residual = ground_value(q, r.effect)
        if residual is None:
            return fail(i, "residual effect is not ground")
        total = q.seq(st.accumulated, residual)
        if not leq(q, total, gamma):
            return fail(
                i,
                f"accumulated {q.render(st.accumulated)} ; residual {q.render(residual)} = {q.render(total)} "
                f"is not below the static effect {q.render(gamma)}",
            )
        if not ch.types_equal(r.type, static.type):
            return fail(i, f"type changed to {render_type(q, r.type)}")
        problems = params.state_typing(st.state, st.sigma, value_check(st.sigma))
        if problems:
            return fail(i, "state typing: " + "; ".join(problems))
        if i == fuel:
            break
        out = step(params, st)
        match out:
            case IsValue():
                return HarnessReport(True, i, "value", st_type, st_eff, q.render(st.accumulated))
            case StuckPrimitive(name, _):
                return HarnessReport(True, i, "stuck", st_type, st_eff, q.render(st.accumulated))
            case RuntimeTypeError(detail):
                return fail(i, f"progress violated: {detail}", "type-error")
            case Stepped(nxt, _, _):
                msg = _sigma_extends(st.sigma, nxt.sigma, ch)
                if msg:
                    return fail(i + 1, msg)
                st = nxt
    return HarnessReport(True, fuel, "diverged", st_type, st_eff, q.render(st.accumulated))
