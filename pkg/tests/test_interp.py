import pytest
from hypothesis import given
from hypothesis import strategies as st

from effquant.checker import check_program
from effquant.instances import ATOMICITY, FQ, Atomicity, LockEffect, broken_atomicity
from effquant.interp import (
    IsValue,
    RuntimeTypeError,
    Stepped,
    StuckPrimitive,
    initial,
    preservation_harness,
    run,
    step,
)
from effquant.lang import TRUE, UNIT, App, If, Lam, Var, While, parse_program, parse_term, seq_term
from effquant.locking import emit_name, emit_params, fq_params

from test_checker import SAMPLE

REENTER = """
(let l (app (prim new_lock) unit)
  (seq (app (prim acquire) l) (app (prim acquire) l) (app (prim release) l) (app (prim release) l)))
"""

B, L, R, A, T, E = Atomicity


def lk(pre=(), post=()):
    return LockEffect.of(pre, post)


def prog(params, text):
    rep = check_program(params, text)
    assert rep.ok, rep.error
    return rep.program


class TestStep:
    def test_beta(self, fq):
        out = step(fq, initial(fq, App(Lam("x", Var("x")), TRUE)))
        assert isinstance(out, Stepped) and out.rule == "E-App"
        assert out.next.term == TRUE and out.effect == fq.q.unit

    def test_while_unfolds(self, fq):
        loop = While(TRUE, UNIT)
        out = step(fq, initial(fq, loop))
        assert out.rule == "E-While" and out.effect == fq.q.unit
        assert out.next.term == If(TRUE, seq_term(UNIT, loop), UNIT)

    def test_if(self, fq):
        out = step(fq, initial(fq, parse_term("(if false true false)")))
        assert out.rule == "E-IfFalse" and out.next.term == parse_term("false")

    def test_acquire(self, fq):
        st = initial(fq, parse_term("(app (prim new_lock) unit)"))
        made = step(fq, st)
        lock = made.next.term
        assert made.next.state.locks == {lock.name: False}
        out = step(fq, made.next.__class__(made.next.state, App(parse_term("(prim acquire)"), lock), made.next.sigma, fq.q.unit))
        assert out.effect == FQ.make(lk((), [lock.name]), R)
        assert out.next.state.locks == {lock.name: True}

    def test_value(self, fq):
        assert isinstance(step(fq, initial(fq, TRUE)), IsValue)

    def test_runtime_type_error(self, fq):
        out = step(fq, initial(fq, parse_term("(app true unit)")))
        assert isinstance(out, RuntimeTypeError)

    def test_left_to_right(self, fq):
        # The function position reduces before the argument.
        t = parse_term("(app (app (lam f f) (lam x x)) (app (lam y y) true))")
        out = step(fq, initial(fq, t))
        assert out.next.term == parse_term("(app (lam x x) (app (lam y y) true))")


class TestRun:
    def test_acquire_release(self, fq):
        p = prog(fq, "(let l (app (prim new_lock) unit) (seq (app (prim acquire) l) (app (prim release) l)))")
        r = run(fq, p)
        assert r.outcome == "value" and r.final.term == UNIT
        assert r.final.accumulated == FQ.make(lk(), A)

    def test_divergence(self, fq):
        r = run(fq, While(TRUE, UNIT), fuel=1000)
        assert r.outcome == "diverged" and r.steps == 1000
        assert r.final.accumulated == fq.q.unit

    def test_double_acquire_stuck(self, fq):
        r = run(fq, prog(fq, REENTER))
        assert r.outcome == "stuck" and "acquire" in r.detail

    def test_counting_locks_allow_reentry(self):
        params = fq_params(counting=True)
        r = run(params, prog(params, REENTER), trace=True)
        assert r.outcome == "value"
        assert r.final.state.locks == {"lock#0": 0}
        assert r.final.accumulated == FQ.make(lk(), A)
        assert any(t.accumulated == "{}=>{lock#0,lock#0}&R" for t in r.trace)

    def test_trace(self, fq):
        p = prog(fq, "(let l (app (prim new_lock) unit) (seq (app (prim acquire) l) (app (prim release) l)))")
        r = run(fq, p, trace=True)
        assert len(r.trace) == r.steps
        assert [t.rule for t in r.trace].count("E-Prim") == 3
        assert r.trace[-1].accumulated == "{}=>{}&A"
        assert "E-Prim" in r.trace[0].render() or "E-App" in r.trace[0].render()

    def test_fresh_names_deterministic(self, fq):
        p = prog(fq, "(seq (app (prim new_lock) unit) (app (prim new_lock) unit))")
        a, b = run(fq, p), run(fq, p)
        assert a.final.state == b.final.state
        assert sorted(a.final.state.locks) == ["lock#0", "lock#1"]

    def test_open_program_refused(self, fq):
        with pytest.raises(ValueError):
            run(fq, parse_program("(assume l lock) l"))

    def test_to_dict(self, fq):
        d = run(fq, While(TRUE, UNIT), fuel=10).to_dict(fq)
        assert d["outcome"] == "diverged" and d["value"] is None


class TestHarness:
    def test_sample_applied(self, fq):
        text = "(let l (app (prim new_lock) unit) (let r (app (tyapp (app (prim alloc) l) bool) true) (app " + SAMPLE + " l r)))"
        h = preservation_harness(fq, prog(fq, text))
        assert h.ok and h.outcome == "value" and h.steps > 5

    def test_value_trivial(self, fq):
        h = preservation_harness(fq, TRUE)
        assert h.ok and h.steps == 0 and h.accumulated == "{}=>{}&B"

    def test_ill_typed_rejected(self, fq):
        h = preservation_harness(fq, parse_term("(app true unit)"))
        assert not h.ok and h.outcome == "ill-typed"

    def test_broken_instance_detected(self):
        q = broken_atomicity()
        params = emit_params(q)
        e = lambda a: f"(app (prim {emit_name(q, a)}) unit)"  # noqa: E731
        text = f"(seq (if true {e(L)} {e(R)}) {e(R)})"
        assert check_program(params, text).ok
        h = preservation_harness(params, parse_term(text))
        assert not h.ok and h.violation_step is not None

    def test_sound_instance_passes_same_program(self):
        params = emit_params(ATOMICITY)
        e = lambda a: f"(app (prim {emit_name(ATOMICITY, a)}) unit)"  # noqa: E731
        h = preservation_harness(params, parse_term(f"(seq (if true {e(L)} {e(R)}) {e(R)})"))
        assert h.ok


# ---------------------------------------------------------------------------

emits = st.sampled_from([B, L, R, A])


def _emit_term(draw_tree):
    return draw_tree


@st.composite
def emit_programs(draw, depth=3):
    def go(d):
        pick = draw(st.integers(0, 3 if d > 0 else 0))
        if pick == 0:
            return f"(app (prim {emit_name(ATOMICITY, draw(emits))}) unit)"
        if pick == 1:
            return f"(seq {go(d - 1)} {go(d - 1)})"
        if pick == 2:
            return f"(if {draw(st.sampled_from(['true', 'false']))} {go(d - 1)} {go(d - 1)})"
        return f"(app (lam (x unit) {go(d - 1)}) unit)"

    return go(depth)


@given(emit_programs())
def test_harness_on_random_emit_programs(text):
    params = emit_params(ATOMICITY)
    rep = check_program(params, text)
    if not rep.ok:
        return
    h = preservation_harness(params, rep.program)
    assert h.ok, h.violation
    r = run(params, rep.program)
    assert r.outcome == "value"


@given(emit_programs())
def test_step_is_deterministic(text):
    params = emit_params(ATOMICITY)
    st0 = initial(params, parse_term(text))
    assert step(params, st0) == step(params, st0)


def test_stuck_only_on_primitives(fq):
    r = run(fq, prog(fq, REENTER))
    assert r.outcome == "stuck"
    assert isinstance(step(fq, r.final), StuckPrimitive)
