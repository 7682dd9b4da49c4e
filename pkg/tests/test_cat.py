import pytest

from effquant.cat import (
    CAtomic,
    CatError,
    CConst,
    CFork,
    CName,
    CRead,
    CWhile,
    CWrite,
    cat_check,
    core_env,
    load_cat,
    parse_cat,
    translate,
    unembed_check,
    wraplock,
)
from effquant.checker import Env, check_env, Checker
from effquant.effects import ground_value
from effquant.instances import Atomicity
from effquant.lang import BOOL, App, Lam, ParseError, Prim, TyApp, Var, While, parse_term
from effquant.locking import fq_params

from conftest import CORPUS

B, L, R, A, T, E = Atomicity
HEAD = "(locks m n) (refs (x :lock m :type bool) (y :lock n :type bool))"
SCOPE = ("m", "n", "x", "y")


def cat(body, env="", expect=""):
    return parse_cat(f"(cat {HEAD} {env} {expect} {body})")


def oracle(body, env=None):
    return cat_check(env or {}, cat(body).body, SCOPE)


class TestOracle:
    def test_sync_read(self):
        assert oracle("(read x :race #f)") is B

    def test_racy_read(self):
        assert oracle("(read x :race #t)") is A

    def test_racy_write(self):
        assert oracle("(write x true :race #t)") is A

    def test_atomic_two_racy_writes(self):
        with pytest.raises(CatError):
            oracle("(atomic (seq (write x true :race #t) (write x false :race #t)))")

    def test_atomic_locked_block(self):
        assert oracle("(atomic (seq (prim acquire m) (write x true :race #f) (prim release m)))") is A

    def test_while(self):
        assert oracle("(while (read x :race #t) (read y :race #f))") is T
        assert oracle("(while (read x :race #f) (read y :race #f))") is B

    def test_fork(self):
        assert oracle("(fork (seq (write x true :race #t) (write x true :race #t)))") is A

    def test_if(self):
        assert oracle("(if (read x :race #f) (prim acquire m) (prim release m))") is A

    def test_invoke_joins_targets(self):
        env = {"f": R, "g": L}
        assert oracle("(let h unit (invoke h (f g) true))", env) is A

    def test_fun_checked_against_env(self):
        with pytest.raises(CatError):
            oracle("(fun f ((b bool)) (seq (read x :race #t) (read x :race #t)))", {"f": A})
        assert oracle("(fun f ((b bool)) (read x :race #t))", {"f": A}) is B

    def test_unbound(self):
        with pytest.raises(CatError):
            oracle("(read z :race #f)")
        with pytest.raises(CatError):
            oracle("(prim frob)")


class TestTranslation:
    def test_racy_read(self):
        t = translate(cat("(read x :race #t)")).term
        assert t == App(TyApp(App(Prim("read_racy"), Var("m")), BOOL), Var("x"))

    def test_sync_write(self):
        t = translate(cat("(write x true :race #f)")).term
        assert t.fn.fn.fn.fn == Prim("write_sync")

    def test_while(self):
        assert isinstance(translate(CWhile(CConst(True), CConst(None))).term, While)

    def test_fork_shape(self):
        t = translate(CFork(CConst(None))).term
        # let _ = (λ_. ⟦e⟧) in wraplock ()
        assert isinstance(t, App) and isinstance(t.fn, Lam) and isinstance(t.arg, Lam)

    def test_atomic_shape(self):
        t = translate(CAtomic(CRead("x", True, "m", BOOL))).term
        first = t.arg
        assert first.fn == Prim("req_atomic") and isinstance(first.arg, Lam)
        assert t.fn.body == translate(CRead("x", True, "m", BOOL)).term

    def test_missing_annotation(self):
        from effquant.cat import TranslationError

        with pytest.raises(TranslationError):
            translate(CRead("z", True, None, None))

    def test_function_back_mapping(self):
        tr = translate(cat("(fun f ((l lock) (b bool)) (read x :race #f))", "(env (f B))"))
        assert tr.name_of(tr.term) == ("f", 2)

    def test_core_env(self):
        env = core_env(cat("unit"))
        assert [b.name for b in env] == ["m", "n", "x", "y"]


def _wrap_atomicity(body: str):
    params = fq_params()
    ch = Checker(params)
    p = cat("unit")
    env = check_env(ch, core_env(p))
    term = wraplock(parse_term(body, params.q))
    try:
        res = ch.synth(env, term)
    except Exception:
        return None
    g = ground_value(params.q, res.effect)
    return None if g is None or g == params.q.top else g.right


RACY = "(app (tyapp (app (prim read_racy) m) bool) x)"


@pytest.mark.parametrize(
    "body,inner",
    [
        ("unit", B),
        (RACY, A),
        ("(app (prim acquire) m)", R),
        ("(app (prim release) m)", L),
        (f"(seq {RACY} {RACY})", T),
        (f"(while true {RACY})", T),
    ],
)
def test_wraplock_atomicity(body, inner):
    got = _wrap_atomicity(body)
    if inner in (B, L, R, A):
        assert got is A
    else:
        assert got is not A


def test_invoke_lemma_counterexample():
    # The invoked expression's own atomicity is dropped by the oracle.
    p = cat(
        "(let g (fun f ((b bool)) (read x :race #f)) (invoke (seq (read x :race #t) g) (f) true))",
        "(env (f B))",
    )
    rep = unembed_check(p)
    assert rep.cat_atomicity == "B" and rep.core_effect == "eff{{m}=>{m}&A}"
    assert rep.outcome == "diverge" and not rep.lemma_holds


class TestDifferential:
    def test_agree(self):
        rep = unembed_check(cat("(seq (prim acquire m) (read x :race #f) (prim release m))"))
        assert rep.outcome == "agree" and rep.cat_atomicity == "A"

    def test_both_reject(self):
        rep = unembed_check(cat("(atomic (seq (write x true :race #t) (write x false :race #t)))"))
        assert rep.outcome == "both-reject"

    def test_core_rejects_lock_loop(self):
        rep = unembed_check(cat("(while (read x :race #t) (prim acquire m))"))
        assert rep.outcome == "core-rejects" and rep.cat_atomicity is not None

    def test_report_dict(self):
        d = unembed_check(cat("(read x :race #t)", expect="(expect agree)")).to_dict()
        assert d["outcome"] == "agree" and d["as_expected"]


CAT_FILES = sorted((CORPUS / "cat").glob("*.cat"))


def test_cat_corpus_size():
    assert len(CAT_FILES) >= 20


@pytest.mark.parametrize("path", CAT_FILES, ids=[p.stem for p in CAT_FILES])
def test_cat_corpus(path):
    p = load_cat(path)
    rep = unembed_check(p)
    assert rep.as_expected, rep.lines()
    assert rep.lemma_holds
    if rep.outcome == "agree":
        assert rep.core_effect.endswith("&" + rep.cat_atomicity + "}")


class TestParser:
    @pytest.mark.parametrize(
        "text",
        [
            "(cat)",
            "(foo)",
            f"(cat {HEAD} (read x))",
            f"(cat {HEAD} (expect maybe) unit)",
            "(cat (refs (x :lock q :type bool)) unit)",
            f"(cat {HEAD} unit unit)",
        ],
    )
    def test_errors(self, text):
        with pytest.raises(ParseError):
            parse_cat(text)

    def test_seq_desugars(self):
        p = cat("(seq (read x :race #f) unit)")
        assert p.body.var == "_" and p.body.bound == CRead("x", False, None, None)

    def test_names(self):
        assert cat("m").body == CName("m")

    def test_write_override(self):
        p = cat("(write y true :race #f :lock n :type bool)")
        assert p.body == CWrite("y", CConst(True), False, "n", BOOL)
