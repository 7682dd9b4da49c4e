import pytest
from hypothesis import given
from hypothesis import strategies as st

from effquant.algebra import ERR
from effquant.checker import CheckError, Env, check_program, kind_of, render_result, type_of, types_equal
from effquant.effects import Lit, Verdict, ground_value, render_infix, subeffect
from effquant.instances import FQ, Atomicity, LockEffect
from effquant.lang import (
    BOOL,
    EFF,
    STAR,
    TRUE,
    UNIT,
    UNIT_T,
    EffType,
    Forall,
    Lam,
    Pi,
    Prim,
    PrimType,
    TermBinding,
    TyLam,
    Var,
    While,
    is_value,
    parse_program,
    parse_term,
    render_type,
    subst_term,
    subst_type_value,
)
from effquant.locking import LOCK, lock_params

SAMPLE = """
(lam (x lock)
  (lam (r (tapp ref (singleton x) bool))
    (seq (app (prim acquire) x)
         (let y (app (tyapp (app (prim read_sync) x) bool) r)
           (seq (app (prim release) x) y)))))
"""

SAMPLE_TYPE = "(pi x lock eff{{}=>{}&B} (-> (tapp ref (singleton x) bool) eff{{}=>{}&A} bool))"

F_X_X = """
(assume x lock)
(app (lam (l1 lock) (lam (l2 lock) (seq (app (prim acquire) l1) (app (prim acquire) l2)))) x x)
"""


def lk(pre=(), post=()):
    return LockEffect.of(pre, post)


def effect_value(params, rep):
    return ground_value(params.q, rep.result.effect)


class TestSample:
    def test_displayed_judgment(self, fq):
        rep = check_program(fq, SAMPLE)
        assert rep.ok
        assert render_type(fq.q, rep.result.type) == SAMPLE_TYPE
        assert effect_value(fq, rep) == FQ.make(lk(), Atomicity.B)
        assert render_result(fq, rep.result) == SAMPLE_TYPE + " | eff{{}=>{}&B}"

    def test_derivation_trace(self, fq):
        d = check_program(fq, SAMPLE).result.derivation
        assert d.rule == "T-Lambda"
        rules = set()

        def walk(n):
            rules.add(n.rule)
            for c in n.children:
                walk(c)

        walk(d)
        assert {"T-App", "T-Prim", "T-Var"} <= rules


class TestValueRules:
    def test_true(self, fq):
        r = type_of(fq, None, TRUE)
        assert r.type == BOOL and ground_value(fq.q, r.effect) == fq.q.unit

    def test_while_true_unit(self, fq):
        r = type_of(fq, None, While(TRUE, UNIT))
        assert r.type == UNIT_T and ground_value(fq.q, r.effect) == fq.q.unit

    def test_partial_primitive_is_value(self, fq):
        rep = check_program(fq, "(prim acquire)")
        assert rep.ok and isinstance(rep.result.type, Pi)
        assert effect_value(fq, rep) == fq.q.unit

    def test_partial_spine_value(self, fq):
        rep = check_program(fq, "(assume l lock) (app (prim read_sync) l)")
        assert rep.ok and isinstance(rep.result.type, Forall)
        assert effect_value(fq, rep) == fq.q.unit


class TestSetVersusMultiset:
    def test_multiset_keeps_both_claims(self):
        params = lock_params("multiset", atomicity=False)
        rep = check_program(params, F_X_X)
        assert rep.ok
        assert effect_value(params, rep) == lk((), ["x", "x"])

    def test_set_variant_rejects(self):
        rep = check_program(lock_params("set", atomicity=False), F_X_X)
        assert not rep.ok
        assert rep.error.rule == "T-App" and "error element" in rep.error.message

    def test_with_atomicity(self):
        assert check_program(lock_params("multiset"), F_X_X).ok
        assert not check_program(lock_params("set"), F_X_X).ok


class TestRejections:
    def test_loop_acquiring(self, fq):
        rep = check_program(fq, "(assume l lock) (while true (app (prim acquire) l))")
        assert not rep.ok and rep.error.rule == "T-While"

    def test_dependent_non_value(self, fq):
        rep = check_program(fq, "(app (prim acquire) (app (prim new_lock) unit))")
        assert not rep.ok and rep.error.rule == "T-App"

    def test_let_bound_lock_balanced(self, fq):
        assert check_program(fq, "(let l (app (prim new_lock) unit) (seq (app (prim acquire) l) (app (prim release) l)))").ok

    def test_let_bound_lock_escaping(self, fq):
        rep = check_program(fq, "(let l (app (prim new_lock) unit) (app (prim acquire) l))")
        assert not rep.ok and rep.error.rule == "T-App"

    def test_unbound_variable(self, fq):
        assert not check_program(fq, "(app (prim acquire) nope)").ok

    def test_type_mismatch(self, fq):
        assert not check_program(fq, "(if unit true false)").ok

    def test_branch_mismatch(self, fq):
        assert not check_program(fq, "(if true unit false)").ok

    def test_latent_too_small(self, fq):
        rep = check_program(fq, "(lam (x lock) :eff eff{{}=>{}&B} (app (prim acquire) x))")
        assert not rep.ok and rep.error.rule == "T-Lambda"

    def test_unknown_is_rejection(self, fq):
        src = """
        (tylam a :: E (tylam b :: E
          (lam (f (-> unit a unit)) (lam (g (-> unit b unit)) :eff "b ; a"
            (seq (app f unit) (app g unit))))))
        """
        rep = check_program(fq, src)
        assert not rep.ok and rep.error.rule == "T-Lambda"

    def test_racy_pair_in_atomic(self, fq):
        src = """
        (assume l lock) (assume r (tapp ref (singleton l) bool))
        (app (prim req_atomic)
             (lam (_ bool) (seq (app (tyapp (app (prim read_racy) l) bool) r)
                                (app (tyapp (app (prim read_racy) l) bool) r))))
        """
        rep = check_program(fq, src)
        assert not rep.ok

    def test_parse_error_reported(self, fq):
        rep = check_program(fq, "(lam x")
        assert not rep.ok and rep.error.rule == "Parse"


class TestKinding:
    def test_bool(self, fq):
        assert kind_of(fq, None, BOOL) == STAR

    def test_literal_in_scope(self, fq):
        env = [TermBinding("x", LOCK)]
        lit = EffType(Lit(FQ.make(lk((), "x"), Atomicity.R)))
        assert kind_of(fq, env, lit) == EFF

    def test_literal_out_of_scope(self, fq):
        lit = EffType(Lit(FQ.make(lk((), "x"), Atomicity.R)))
        with pytest.raises(CheckError):
            kind_of(fq, None, lit)

    def test_runtime_names_in_sigma(self, fq):
        lit = EffType(Lit(FQ.make(lk((), ["lock#0"]), Atomicity.R)))
        sigma = {**fq.delta, "lock#0": LOCK}
        assert kind_of(fq, None, lit, sigma) == EFF

    def test_ref_kind(self, fq):
        t = parse_program("(assume l lock) (assume r (tapp ref (singleton l) bool)) r").env[1].type
        assert kind_of(fq, [TermBinding("l", LOCK)], t) == STAR

    def test_ill_kinded(self, fq):
        rep = check_program(fq, "(assume r (tapp ref bool)) r")
        assert not rep.ok


class TestPolymorphism:
    def test_type_application(self, fq):
        rep = check_program(fq, "(app (tyapp (tylam a :: * (lam (x a) x)) bool) true)")
        assert rep.ok and rep.result.type == BOOL

    def test_effect_application(self, fq):
        src = "(app (tyapp (tylam e :: E (lam (f (-> unit e unit)) (app f unit))) (eff eff{A})) (lam (_ unit) unit))"
        rep = check_program(fq, src)
        assert rep.ok
        assert effect_value(fq, rep) == FQ.make(lk(), Atomicity.A)

    def test_types_equal_alpha(self, fq):
        a = Pi("x", LOCK, Lit(FQ.make(lk((), "x"), Atomicity.R)), UNIT_T)
        b = Pi("y", LOCK, Lit(FQ.make(lk((), "y"), Atomicity.R)), UNIT_T)
        assert types_equal(fq, a, b)

    def test_shadowing_binder(self, fq):
        src = "(assume x lock) (lam (x lock) (app (prim acquire) x))"
        rep = check_program(fq, src)
        assert rep.ok


# ---------------------------------------------------------------------------
# Properties

values = st.sampled_from(
    [
        TRUE,
        UNIT,
        Prim("acquire"),
        Prim("new_lock"),
        Lam("x", Var("x"), BOOL),
        TyLam("a", STAR, Lam("x", Var("x"), UNIT_T)),
        parse_term("(lam (x lock) (seq (app (prim acquire) x) (app (prim release) x)))"),
        parse_term("(app (prim read_racy) l)"),
        Var("l"),
    ]
)


@given(values)
def test_values_have_unit_effect(v):
    from effquant.locking import fq_params

    params = fq_params()
    env = [TermBinding("l", LOCK)]
    assert is_value(v, params.arity)
    r = type_of(params, env, v)
    assert ground_value(params.q, r.effect) == params.q.unit


OPS = {
    "ax": "(app (prim acquire) x)",
    "rx": "(app (prim release) x)",
    "az": "(app (prim acquire) z)",
    "rz": "(app (prim release) z)",
    "nl": "(app (prim new_lock) unit)",
}
op_lists = st.lists(st.sampled_from(sorted(OPS)), min_size=1, max_size=5)


def _body(ops, branch):
    parts = [OPS[o] for o in ops]
    if branch and len(parts) > 1:
        parts = [f"(if true {parts[0]} {parts[0]})", *parts[1:]]
    return parts[0] if len(parts) == 1 else "(seq " + " ".join(parts) + ")"


@given(op_lists, st.booleans())
def test_substitution_soundness(ops, branch):
    # Substituting z for x may only make the effect smaller: the rename is
    # lax on sequencing, and it never introduces Err.
    from effquant.locking import fq_params

    params = fq_params()
    env = Env((TermBinding("x", LOCK), TermBinding("z", LOCK)))
    term = parse_term(f"(seq {_body(ops, branch)} unit)")
    try:
        r = type_of(params, env, term)
    except CheckError:
        return
    out = subst_term(params.q, term, "x", Var("z"))
    r2 = type_of(params, env, out)
    assert types_equal(params, r2.type, subst_type_value(params.q, r.type, "x", Var("z")))
    eff = ground_value(params.q, r.effect)
    expected = params.q.rename(eff, "x", "z")
    assert expected is not ERR
    assert subeffect(params.q, r2.effect, Lit(expected)) is Verdict.YES


def test_substitution_exact_when_no_interaction(fq):
    env = Env((TermBinding("x", LOCK), TermBinding("z", LOCK)))
    term = parse_term("(seq (app (prim acquire) x) (app (prim release) x))")
    r = type_of(fq, env, subst_term(fq.q, term, "x", Var("z")))
    assert ground_value(fq.q, r.effect) == FQ.make(lk(), Atomicity.A)


def test_effect_never_top(fq):
    for src in ("(assume l lock) (seq (app (prim acquire) l) (app (prim acquire) l))", SAMPLE):
        rep = check_program(fq, src)
        assert rep.ok
        assert not ground_value(fq.q, rep.result.effect) is ERR
        assert render_infix(fq.q, rep.result.effect) != "eff{ERR}"
