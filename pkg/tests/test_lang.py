import pytest
from hypothesis import given
from hypothesis import strategies as st

from effquant.effects import EVar, Lit
from effquant.instances import FQ, LOCKSET, Atomicity, LockEffect
from effquant.lang import (
    BOOL,
    EFF,
    FALSE,
    STAR,
    TRUE,
    UNIT,
    UNIT_T,
    App,
    EffType,
    Forall,
    If,
    KArrow,
    Lam,
    ParseError,
    Pi,
    Prim,
    PrimType,
    Singleton,
    TyApp,
    TyLam,
    TVar,
    Var,
    While,
    alpha_equal,
    delta_violations,
    free_vars,
    is_value,
    parse_kind,
    parse_program,
    parse_term,
    parse_type,
    render_kind,
    render_program,
    render_term,
    render_type,
    seq_term,
    spine,
    subst_term,
    subst_type_type,
    subst_type_value,
)
from effquant.locking import fq_params

Q = FQ


def fq(pre=(), post=(), a=Atomicity.B):
    return Lit(FQ.make(LockEffect.of(pre, post), a))


class TestParser:
    def test_lambda(self):
        t = parse_term("(lam x (app (prim acquire) x))")
        assert t == Lam("x", App(Prim("acquire"), Var("x")))

    def test_type_lambda(self):
        t = parse_term("(tylam a :: E (lam x x))")
        assert t == TyLam("a", EFF, Lam("x", Var("x")))

    def test_seq_is_sugar(self):
        assert parse_term("(seq a b)") == seq_term(Var("a"), Var("b"))
        assert parse_term("(seq a b)") == App(Lam("_", Var("b")), Var("a"))

    def test_multi_argument_app(self):
        assert parse_term("(app f a b)") == App(App(Var("f"), Var("a")), Var("b"))

    def test_control(self):
        assert parse_term("(if true unit unit)") == If(TRUE, UNIT, UNIT)
        assert parse_term("(while false unit)") == While(FALSE, UNIT)

    def test_annotated_lambda(self):
        t = parse_term("(lam (x lock) :eff eff{{}=>{x}&R} x)")
        assert t.ann == PrimType("lock") and t.eff == fq((), "x", Atomicity.R)

    def test_types(self):
        t = parse_type("(pi x lock eff{{}=>{x}&R} unit)")
        assert t == Pi("x", PrimType("lock"), fq((), "x", Atomicity.R), UNIT_T)
        assert parse_type("(forall a E a (eff a))") == Forall("a", EFF, EVar("a"), EffType(EVar("a")))
        assert parse_type("(singleton x)") == Singleton(Var("x"))

    def test_kinds(self):
        assert parse_kind("(=> * (=> * *))") == KArrow(STAR, KArrow(STAR, STAR))
        assert render_kind(KArrow(STAR, EFF)) == "(=> * E)"

    def test_program_headers(self):
        p = parse_program("(assume f (-> bool eff{{}=>{}&B} bool)) (assume-type a *) (app f true)")
        assert [b.name for b in p.env] == ["f", "a"]
        assert parse_program(render_program(Q, p)) == p

    @pytest.mark.parametrize(
        "text",
        ["(lam x", "(app)", ")", "", "(if true unit)", "(lam (x lock) :eff)", "(foo 1)", "(lam x x) (lam y y)"],
    )
    def test_errors(self, text):
        with pytest.raises(ParseError):
            parse_program(text)

    def test_error_position(self):
        with pytest.raises(ParseError) as info:
            parse_program("(lam x\n  (app x (if true)))")
        assert info.value.span is not None and info.value.span.line == 2


class TestFreeVars:
    def test_pi_binds_in_effect(self):
        assert free_vars(parse_type("(pi x lock eff{{}=>{x}&R} unit)")) == frozenset()

    def test_effect_literal(self):
        assert free_vars(fq((), "x", Atomicity.R)) == {"x"}

    def test_singleton(self):
        assert free_vars(Singleton(Var("v"))) == {"v"}

    def test_term(self):
        assert free_vars(parse_term("(lam x (app x y))")) == {"y"}
        assert free_vars(parse_term("(tylam a :: * (tyapp f a))")) == {"f"}


class TestSubstitution:
    def test_variable(self):
        assert subst_term(Q, Var("x"), "x", Prim("l")) == Prim("l")

    def test_capture_avoiding(self):
        out = subst_term(Q, Lam("y", Var("x")), "x", Var("y"))
        assert isinstance(out, Lam) and out.var != "y" and out.body == Var("y")

    def test_shadowing(self):
        t = Lam("x", Var("x"))
        assert subst_term(Q, t, "x", Prim("l")) == t

    def test_type_value(self):
        t = Pi("y", PrimType("lock"), fq((), "x"), UNIT_T)
        assert subst_type_value(Q, t, "x", Prim("l")) == Pi("y", PrimType("lock"), fq((), "l"), UNIT_T)

    def test_type_value_collapses(self):
        t = Pi("y", PrimType("lock"), fq((), ["x", "z"]), UNIT_T)
        out = subst_type_value(Q, t, "x", Var("z"))
        assert out.eff == fq((), ["z", "z"])

    def test_type_type(self):
        t = Forall("b", STAR, EVar("a"), Pi("_", UNIT_T, EVar("a"), UNIT_T))
        out = subst_type_type(Q, t, "a", EffType(fq(a=Atomicity.A)))
        assert out.eff == fq(a=Atomicity.A) and out.body.eff == fq(a=Atomicity.A)

    def test_type_var(self):
        assert subst_type_type(Q, TVar("a"), "a", BOOL) == BOOL


class TestValues:
    def test_basic(self):
        for v in (TRUE, UNIT, Var("x"), Lam("x", Var("x")), Prim("acquire")):
            assert is_value(v)
        assert not is_value(App(Lam("x", Var("x")), TRUE))

    def test_partial_primitive(self):
        params = fq_params()
        arity = params.arity
        part = App(Prim("read_sync"), Var("l"))
        assert is_value(part, arity)
        full = App(TyApp(part, BOOL), Var("r"))
        assert not is_value(full, arity)
        assert spine(full) == (Prim("read_sync"), [Var("l"), BOOL, Var("r")])

    def test_arity(self):
        params = fq_params()
        assert params.arity("acquire") == 1
        assert params.arity("write_sync") == 4


def test_delta_restriction_holds():
    assert delta_violations(fq_params()) == []


def test_delta_restriction_detects():
    from dataclasses import replace

    params = fq_params()
    bad = replace(
        params,
        delta={**params.delta, "bad": Pi("x", PrimType("lock"), fq((), "x", Atomicity.R), Pi("_", UNIT_T, fq(), UNIT_T))},
    )
    assert delta_violations(bad) == ["bad: non-final binder carries latent effect eff{{}=>{x}&R}"]


# ---------------------------------------------------------------------------
# Round trip over generated terms

names = st.sampled_from(["x", "y", "z"])
leaves = st.one_of(
    names.map(Var),
    st.sampled_from([TRUE, FALSE, UNIT, Prim("acquire"), Prim("new_lock")]),
)


def _extend(sub):
    return st.one_of(
        st.builds(Lam, names, sub),
        st.builds(App, sub, sub),
        st.builds(If, sub, sub, sub),
        st.builds(While, sub, sub),
        st.builds(TyLam, st.just("a"), st.sampled_from([STAR, EFF]), sub),
        st.builds(TyApp, sub, st.sampled_from([BOOL, UNIT_T, TVar("a")])),
    )


terms = st.recursive(leaves, _extend, max_leaves=10)


@given(terms)
def test_render_parse_round_trip(t):
    assert alpha_equal(Q, parse_term(render_term(Q, t)), t)


@given(terms, names)
def test_subst_removes_variable(t, x):
    out = subst_term(Q, t, x, Prim("l"))
    assert x not in free_vars(out)
    assert free_vars(out) == free_vars(t) - {x}


@given(terms)
def test_alpha_equal_under_binder_renaming(t):
    renamed = Lam("w", subst_term(Q, t, "x", Var("w")))
    assert alpha_equal(Q, renamed, Lam("x", t))
    assert not alpha_equal(Q, renamed, Lam("x", Var("w")))


def test_render_type_round_trip():
    t = parse_type("(pi x lock eff{{}=>{}&B} (forall a * eff{{}=>{}&B} (pi _ (tapp ref (singleton x) a) eff{{x}=>{x}&B} a)))")
    assert parse_type(render_type(Q, t)) == t


def test_lockset_only_literals():
    p = parse_program("(lam (x lock) :eff eff{{}=>{x}} (app (prim acquire) x))", LOCKSET)
    assert p.term.eff == Lit(LockEffect.of((), "x"))
