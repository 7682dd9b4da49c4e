"""Locks, lock-indexed references and atomicity as language parameters.

The bundle instantiates the core language with the lockset quantale times
the atomicity quantale.  Racy accesses are named ``read_racy`` and
``write_racy``; accesses that require the guarding lock to be held are
``read_sync`` and ``write_sync``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from effquant.algebra import Quantale
from effquant.instances import FQ, LOCKSET, SET_FQ, SET_LOCKSET
from effquant.lang import (
    KArrow,
    LanguageParams,
    Pi,
    Prim,
    PrimStep,
    PrimType,
    Singleton,
    STAR,
    TApp,
    Term,
    Type,
    UNIT,
    UnitVal,
    parse_type,
)

LOCK = PrimType("lock")
REF = PrimType("ref")
PRIMITIVES = (
    "new_lock",
    "acquire",
    "release",
    "alloc",
    "read_racy",
    "read_sync",
    "write_racy",
    "write_sync",
    "req_atomic",
)
KINDS = {"lock": STAR, "ref": KArrow(STAR, KArrow(STAR, STAR))}


@dataclass(frozen=True)
class LockHeapState:
    """Lock map and heap; copied on every update so machine states stay immutable."""

    locks: dict = field(default_factory=dict)
    heap: dict = field(default_factory=dict)
    counting: bool = False

    def render(self) -> str:
        ls = ", ".join(f"{k}={v}" for k, v in self.locks.items())
        hs = ", ".join(f"{k}" for k in self.heap)
        return f"locks[{ls}] heap[{hs}]"


def _delta_text(atomicity: bool) -> dict[str, str]:
    def lit(lock: str, atom: str) -> str:
        if not atomicity:
            return "eff{" + lock + "}"
        return "eff{" + lock + "&" + atom + "}"

    unit_b = lit("{}=>{}", "B")
    racy = lit("{}=>{}", "A")
    sync = lit("{x}=>{x}", "B")
    ref_x = "(tapp ref (singleton x) a)"
    access = f"(pi x lock {unit_b} (forall a * {unit_b} "
    return {
        "new_lock": f"(pi _ unit {unit_b} lock)",
        "acquire": f"(pi x lock {lit('{}=>{x}', 'R')} unit)",
        "release": f"(pi x lock {lit('{x}=>{}', 'L')} unit)",
        "alloc": access + f"(pi _ a {unit_b} {ref_x})))",
        "read_racy": access + f"(pi _ {ref_x} {racy} a)))",
        "read_sync": access + f"(pi _ {ref_x} {sync} a)))",
        "write_racy": access + f"(pi _ {ref_x} {unit_b} (pi _ a {racy} a))))",
        "write_sync": access + f"(pi _ {ref_x} {unit_b} (pi _ a {sync} a))))",
        "req_atomic": f"(pi _ (pi _ bool {lit('{}=>{}', 'A')} unit) {unit_b} unit)",
    }


def delta_table(q: Quantale, atomicity: bool = True) -> dict[str, Type]:
    return {k: parse_type(v, q, KINDS) for k, v in _delta_text(atomicity).items()}


def _lock_name(v: Term) -> str | None:
    return v.name if isinstance(v, Prim) else None


def _semantics(name: str, args: list, state: LockHeapState, sigma: dict) -> PrimStep | None:
    locks, heap = state.locks, state.heap

    def with_state(result: Term, locks=locks, heap=heap, sigma=sigma) -> PrimStep:
        return PrimStep(result, LockHeapState(locks, heap, state.counting), sigma)

    match name:
        case "new_lock":
            fresh = f"lock#{len(locks)}"
            return with_state(
                Prim(fresh), locks={**locks, fresh: 0 if state.counting else False}, sigma={**sigma, fresh: LOCK}
            )
        case "acquire" | "release":
            lk = _lock_name(args[0])
            if lk not in locks:
                return None
            cur = locks[lk]
            if state.counting:
                if name == "release" and cur == 0:
                    return None
                nxt = cur + 1 if name == "acquire" else cur - 1
            else:
                if cur != (name == "release"):
                    return None
                nxt = name == "acquire"
            return with_state(UNIT, locks={**locks, lk: nxt})
        case "alloc":
            lk, tau, v = args
            loc = f"loc#{len(heap)}"
            ref_t = TApp(TApp(REF, Singleton(lk)), tau)
            return with_state(Prim(loc), heap={**heap, loc: v}, sigma={**sigma, loc: ref_t})
        case "read_racy" | "read_sync":
            loc = _lock_name(args[2])
            if loc not in heap:
                return None
            return with_state(heap[loc])
        case "write_racy" | "write_sync":
            loc = _lock_name(args[2])
            if loc not in heap:
                return None
            return with_state(args[3], heap={**heap, loc: args[3]})
        case "req_atomic":
            return with_state(UNIT)
    return None


def _state_typing(state: LockHeapState, sigma: dict, check: Callable[[Term, Type], str | None]) -> list[str]:
    out = []
    for lk in state.locks:
        if sigma.get(lk) != LOCK:
            out.append(f"lock {lk} is not typed as lock")
    for loc, v in state.heap.items():
        t = sigma.get(loc)
        if not (isinstance(t, TApp) and isinstance(t.fn, TApp) and t.fn.fn == REF):
            out.append(f"location {loc} has no reference type")
            continue
        msg = check(v, t.arg)
        if msg:
            out.append(f"location {loc}: {msg}")
    return out


def lock_params(family: str = "multiset", atomicity: bool = True, counting: bool = False) -> LanguageParams:
    """Lock primitives over a chosen lockset family, with or without atomicity.

    ``counting`` switches the lock map from held flags to acquisition counts,
    which makes recursive acquisition defined at runtime.
    """
    if family not in ("multiset", "set"):
        raise ValueError(f"unknown lockset family {family!r}")
    if atomicity:
        q = FQ if family == "multiset" else SET_FQ
    else:
        q = LOCKSET if family == "multiset" else SET_LOCKSET
    name = ("fq" if atomicity else "locks") + ("" if family == "multiset" else "-set") + ("-counting" if counting else "")
    return LanguageParams(
        name=name,
        q=q,
        kinds=dict(KINDS),
        delta=delta_table(q, atomicity),
        initial_state=lambda: LockHeapState(counting=counting),
        semantics=_semantics,
        state_typing=_state_typing,
        render_state=LockHeapState.render,
    )


def fq_params(counting: bool = False) -> LanguageParams:
    """The multiset lockset times atomicity bundle."""
    return lock_params("multiset", True, counting)


# ---------------------------------------------------------------------------
# Emit primitives: one unit-to-unit primitive per non-top element


def emit_name(q: Quantale, a) -> str:
    return "emit_" + re.sub(r"\W", "_", q.render(a))


def emit_params(q: Quantale, name: str | None = None) -> LanguageParams:
    """A bundle over a finite quantale whose only primitives perform a fixed effect.

    Useful for exercising the interpreter against arbitrary, including
    deliberately broken, quantales.
    """
    if q.elements is None:
        raise ValueError(f"{q.name} must be finite")
    from effquant.effects import Lit
    from effquant.lang import UNIT_T

    delta = {}
    for a in q.elements:
        if a == q.top:
            continue
        delta[emit_name(q, a)] = Pi("_", UNIT_T, Lit(a), UNIT_T)

    def sem(pname, args, state, sigma):
        return PrimStep(UNIT, state, sigma) if pname in delta and isinstance(args[0], UnitVal) else None

    return LanguageParams(name or f"emit-{q.name}", q, {}, delta, lambda: None, sem)


__all__ = [
    "KINDS",
    "LOCK",
    "LockHeapState",
    "PRIMITIVES",
    "REF",
    "delta_table",
    "emit_name",
    "emit_params",
    "fq_params",
    "lock_params",
]
