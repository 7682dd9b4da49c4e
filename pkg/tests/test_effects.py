import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from effquant.algebra import ERR
from effquant.effects import (
    EVar,
    EffectSyntaxError,
    Join,
    Lit,
    Seq,
    Star,
    Verdict,
    effect_equal,
    effect_vars,
    evaluate,
    ground_value,
    normalize,
    parse_effect,
    render_infix,
    render_sexpr,
    simplify,
    subeffect,
    subst_effect,
)
from effquant.instances import ATOMICITY, FQ, LOCKSET, POWERSET, Atomicity, LockEffect, bounded_carrier
from effquant.lang import parse_effect_sexpr

from helpers import random_ground

B, L, R, A, T, E = Atomicity
Q = ATOMICITY


def p(text, q=Q):
    return parse_effect(q, text)


class TestSyntax:
    @pytest.mark.parametrize(
        "text",
        ["eff{A}", "a ; b | c", "(a | b) ; c*", "eff{R}* ; eff{A} ; eff{L}*", "(a ; b)*"],
    )
    def test_infix_round_trip(self, text):
        e = p(text)
        assert p(render_infix(Q, e)) == e

    def test_sexpr_round_trip(self):
        e = p("(eff{R}* ; a)* | eff{L}")
        assert parse_effect_sexpr(render_sexpr(Q, e), Q) == e

    def test_precedence(self):
        assert p("a ; b | c") == Join(Seq(EVar("a"), EVar("b")), EVar("c"))
        assert p("a ; b*") == Seq(EVar("a"), Star(EVar("b")))

    def test_product_literal(self):
        e = p("eff{{}=>{x}&R}", FQ)
        assert e == Lit(FQ.make(LockEffect.of((), "x"), R))
        assert render_infix(FQ, e) == "eff{{}=>{x}&R}"

    @pytest.mark.parametrize("text", ["a ;", "(a", "eff{Q}", "a b"])
    def test_errors(self, text):
        with pytest.raises(EffectSyntaxError):
            p(text)


class TestNormalize:
    def test_unit_dropped(self):
        assert simplify(Q, Seq(Lit(B), EVar("a"))) == EVar("a")

    def test_top_absorbs(self):
        assert normalize(Q, Join(EVar("a"), Lit(E))).is_top
        assert normalize(Q, Seq(Seq(EVar("a"), Lit(E)), EVar("b"))).is_top

    def test_reduction_pattern(self):
        e = p("(eff{R}* ; eff{B}*)* ; eff{A} ; (eff{B}* ; eff{L}*)*")
        assert simplify(Q, e) == Lit(A)
        assert simplify(Q, p("eff{R}* ; eff{A} ; eff{L}*")) == Lit(A)

    def test_commutative_lift(self):
        q = POWERSET
        e = p("eff{{IOExc}} ; (eff{{ArgExc}} ; eff{{ArgExc}})*", q)
        assert ground_value(q, e) == frozenset({"IOExc", "ArgExc"})

    def test_star_rules(self):
        assert simplify(Q, Star(Star(EVar("a")))) == Star(EVar("a"))
        assert simplify(Q, Star(Lit(B))) == Lit(B)
        assert simplify(Q, Join(EVar("a"), Star(EVar("a")))) == Star(EVar("a"))
        assert simplify(Q, Star(Lit(A))) == Lit(T)

    def test_join_order_is_canonical(self):
        assert normalize(Q, p("a | b")) == normalize(Q, p("b | a"))
        assert normalize(Q, p("a | a")) == normalize(Q, p("a"))

    def test_distributes(self):
        assert effect_equal(Q, p("a ; (b | c)"), p("a ; b | a ; c"))
        assert effect_equal(Q, p("(a | b) ; c"), p("a ; c | b ; c"))

    def test_not_commutative(self):
        assert not effect_equal(Q, p("a ; b"), p("b ; a"))


class TestSubeffect:
    def test_ground(self):
        assert subeffect(Q, Lit(L), Lit(A)) is Verdict.YES
        assert subeffect(Q, Lit(A), Lit(L)) is Verdict.NO

    def test_symbolic(self):
        assert subeffect(Q, p("a"), p("a | b")) is Verdict.YES
        assert subeffect(Q, p("a ; b"), p("b ; a")) is Verdict.UNKNOWN
        assert subeffect(Q, p("a"), p("a*")) is Verdict.YES

    def test_ground_agrees_with_order(self):
        for x in Atomicity:
            for y in Atomicity:
                v = subeffect(Q, Lit(x), Lit(y))
                assert (v is Verdict.YES) == (Q.join(x, y) == y)


class TestSubstitution:
    def test_fresh_name(self):
        e = p("eff{{}=>{x}&R}", FQ)
        out = subst_effect(FQ, e, {"x": "l"})
        assert out == Lit(FQ.make(LockEffect.of((), "l"), R))

    def test_collapse_keeps_both_claims(self):
        e = Lit(LockEffect.of((), ["l1", "l2"]))
        out = subst_effect(LOCKSET, e, {"l1": "x", "l2": "x"})
        assert out == Lit(LockEffect.of((), ["x", "x"]))

    def test_variable(self):
        assert subst_effect(Q, EVar("a"), {"a": Lit(A)}) == Lit(A)
        assert effect_vars(subst_effect(Q, p("a ; b"), {"a": Lit(B)})) == {"b"}


# ---------------------------------------------------------------------------
# Soundness against evaluation


def _ground_exprs(q, carrier, n, seed):
    rng = random.Random(seed)
    return [random_ground(rng, carrier, 5) for _ in range(n)]


@pytest.mark.parametrize(
    "q,carrier",
    [
        (ATOMICITY, list(Atomicity)),
        (POWERSET, list(POWERSET.elements)),
        (LOCKSET, bounded_carrier(["a", "b"], 2)),
    ],
    ids=["atomicity", "powerset", "lockset"],
)
def test_normalize_sound_and_idempotent(q, carrier):
    for e in _ground_exprs(q, carrier, 400, 11):
        v = evaluate(q, e)
        assert ground_value(q, e) == v
        s = simplify(q, e)
        assert simplify(q, s) == s
        assert evaluate(q, s) == v


variables = st.sampled_from(["a", "b", "c"])
atom_lits = st.sampled_from(list(Atomicity)).map(Lit)
exprs = st.recursive(
    st.one_of(variables.map(EVar), atom_lits),
    lambda sub: st.one_of(
        st.builds(Join, sub, sub),
        st.builds(Seq, sub, sub),
        st.builds(Star, sub),
    ),
    max_leaves=8,
)
assignments = st.fixed_dictionaries({v: st.sampled_from(list(Atomicity)) for v in "abc"})


@given(exprs, assignments)
def test_symbolic_normalize_sound(e, env):
    assert evaluate(Q, simplify(Q, e), env) == evaluate(Q, e, env)


@given(exprs, exprs, assignments)
def test_subeffect_yes_is_sound(e1, e2, env):
    if subeffect(Q, e1, e2) is Verdict.YES:
        assert Q.join(evaluate(Q, e1, env), evaluate(Q, e2, env)) == evaluate(Q, e2, env)


@given(exprs)
def test_normalize_idempotent(e):
    s = simplify(Q, e)
    assert simplify(Q, s) == s


def test_err_literal_renders():
    assert render_infix(Q, Lit(E)) == "eff{ERR}"
    assert normalize(LOCKSET, Lit(ERR)).is_top
