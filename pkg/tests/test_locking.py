import pytest

from effquant.checker import Checker, Env, type_of
from effquant.effects import ground_value
from effquant.instances import FQ, Atomicity, LockEffect
from effquant.interp import primitive_effect
from effquant.lang import (
    BOOL,
    TRUE,
    UNIT,
    UNIT_T,
    Forall,
    Lam,
    Pi,
    Prim,
    Singleton,
    TApp,
    parse_term,
    subst_type_type,
    subst_type_value,
)
from effquant.locking import (
    LOCK,
    PRIMITIVES,
    REF,
    LockHeapState,
    delta_table,
    emit_params,
    fq_params,
    lock_params,
)

B, L, R, A, T, E = Atomicity


def lk(pre=(), post=()):
    return LockEffect.of(pre, post)


def result_type(params, sigma, name, args):
    t = sigma[name]
    for a in args:
        if isinstance(t, Pi):
            t = subst_type_value(params.q, t.cod, t.var, a)
        else:
            t = subst_type_type(params.q, t.body, t.var, a)
    return t


def setup(params, counting=False):
    """A state with one free lock, one held lock and a boolean cell guarded by each."""
    locks = {"m": 0 if counting else False, "n": 1 if counting else True}
    heap = {"cm": TRUE, "cn": TRUE}
    sigma = {
        **params.delta,
        "m": LOCK,
        "n": LOCK,
        "cm": TApp(TApp(REF, Singleton(Prim("m"))), BOOL),
        "cn": TApp(TApp(REF, Singleton(Prim("n"))), BOOL),
    }
    return LockHeapState(locks, heap, counting), sigma


CALLS = [
    ("new_lock", [UNIT]),
    ("acquire", [Prim("m")]),
    ("release", [Prim("n")]),
    ("alloc", [Prim("m"), BOOL, TRUE]),
    ("read_racy", [Prim("m"), BOOL, Prim("cm")]),
    ("read_sync", [Prim("n"), BOOL, Prim("cn")]),
    ("write_racy", [Prim("m"), BOOL, Prim("cm"), TRUE]),
    ("write_sync", [Prim("n"), BOOL, Prim("cn"), TRUE]),
    ("req_atomic", [Lam("_", UNIT, BOOL)]),
]


class TestSemantics:
    def test_new_lock(self, fq):
        out = fq.semantics("new_lock", [UNIT], LockHeapState(), dict(fq.delta))
        assert out.result == Prim("lock#0")
        assert out.state.locks == {"lock#0": False}
        assert out.sigma["lock#0"] == LOCK

    def test_acquire(self, fq):
        state, sigma = setup(fq)
        out = fq.semantics("acquire", [Prim("m")], state, sigma)
        assert out.result == UNIT and out.state.locks["m"] is True
        assert primitive_effect(fq, sigma, "acquire", [Prim("m")]) == FQ.make(lk((), ["m"]), R)

    def test_release_free_lock_undefined(self, fq):
        state, sigma = setup(fq)
        assert fq.semantics("release", [Prim("m")], state, sigma) is None
        assert fq.semantics("acquire", [Prim("n")], state, sigma) is None

    def test_counting_release_free_undefined(self):
        params = fq_params(counting=True)
        state, sigma = setup(params, counting=True)
        assert params.semantics("release", [Prim("m")], state, sigma) is None
        assert params.semantics("acquire", [Prim("n")], state, sigma).state.locks["n"] == 2

    def test_write_sync(self, fq):
        state, sigma = setup(fq)
        args = [Prim("n"), BOOL, Prim("cn"), parse_term("false")]
        out = fq.semantics("write_sync", args, state, sigma)
        assert out.result == parse_term("false") and out.state.heap["cn"] == parse_term("false")
        assert primitive_effect(fq, sigma, "write_sync", args) == FQ.make(lk(["n"], ["n"]), B)
        assert state.heap["cn"] == TRUE

    def test_racy_effects(self, fq):
        _, sigma = setup(fq)
        assert primitive_effect(fq, sigma, "read_racy", [Prim("m"), BOOL, Prim("cm")]) == FQ.make(lk(), A)
        assert primitive_effect(fq, sigma, "write_racy", [Prim("m"), BOOL, Prim("cm"), TRUE]) == FQ.make(lk(), A)

    def test_partial_spine_effect_is_unit(self, fq):
        _, sigma = setup(fq)
        assert primitive_effect(fq, sigma, "read_sync", [Prim("n")]) == fq.q.unit

    def test_unknown_location_undefined(self, fq):
        state, sigma = setup(fq)
        assert fq.semantics("read_racy", [Prim("m"), BOOL, Prim("nowhere")], state, sigma) is None

    def test_render(self, fq):
        state, _ = setup(fq)
        assert state.render() == "locks[m=False, n=True] heap[cm, cn]"


class TestDelta:
    def test_nine_primitives(self, fq):
        assert sorted(fq.delta) == sorted(PRIMITIVES) and len(PRIMITIVES) == 9

    def test_acquire_type(self, fq):
        t = fq.delta["acquire"]
        assert t.dom == LOCK and ground_value(fq.q, t.eff) == FQ.make(lk((), ["x"]), R)

    def test_req_atomic_argument(self, fq):
        t = fq.delta["req_atomic"]
        assert isinstance(t.dom, Pi) and ground_value(fq.q, t.dom.eff) == FQ.make(lk(), A)

    def test_well_formed(self, fq):
        ch = Checker(fq)
        for name, t in fq.delta.items():
            ch.kind_of(Env(), t)

    def test_lockset_only_variant(self):
        params = lock_params("multiset", atomicity=False)
        assert ground_value(params.q, params.delta["acquire"].eff) == lk((), ["x"])

    def test_bad_family(self):
        with pytest.raises(ValueError):
            lock_params("bag")

    def test_delta_table_shapes(self):
        d = delta_table(FQ)
        assert isinstance(d["alloc"].cod, Forall)


@pytest.mark.parametrize("name,args", CALLS, ids=[c[0] for c in CALLS])
@pytest.mark.parametrize("counting", [False, True], ids=["flags", "counts"])
def test_primitive_preservation(name, args, counting):
    params = fq_params(counting)
    state, sigma = setup(params, counting)
    out = params.semantics(name, list(args), state, sigma)
    assert out is not None
    for k, v in sigma.items():
        assert out.sigma.get(k) == v
    expected = result_type(params, out.sigma, name, args)
    r = type_of(params, None, out.result, out.sigma)
    assert Checker(params, out.sigma).types_equal(r.type, expected)
    assert ground_value(params.q, r.effect) == params.q.unit

    def check(v, t):
        got = type_of(params, None, v, out.sigma)
        return None if Checker(params, out.sigma).types_equal(got.type, t) else "mismatch"

    assert params.state_typing(out.state, out.sigma, check) == []


def test_state_typing_catches_bad_cell(fq):
    state, sigma = setup(fq)
    bad = LockHeapState(state.locks, {**state.heap, "cm": UNIT}, False)

    def check(v, t):
        got = type_of(fq, None, v, sigma)
        return None if got.type == t else "mismatch"

    assert fq.state_typing(bad, sigma, check) == ["location cm: mismatch"]


def test_emit_params():
    from effquant.instances import ATOMICITY

    params = emit_params(ATOMICITY)
    assert len(params.delta) == 5
    t = params.delta["emit_A"]
    assert t.dom == UNIT_T and ground_value(ATOMICITY, t.eff) is A
    with pytest.raises(ValueError):
        emit_params(FQ)


def test_new_lock_effect_is_unit(fq):
    assert primitive_effect(fq, fq.delta, "new_lock", [UNIT]) == fq.q.unit
