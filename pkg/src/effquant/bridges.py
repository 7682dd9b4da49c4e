"""Effectoids: relational presentations of sequential effects.

A finite quantale becomes an effectoid by dropping its top and reading
join/seq as relations.  Going back needs binary joins, a least base element
and a least result for every defined composition; the missing compositions
become a synthetic error element.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from effquant.algebra import (
    ConstructionError,
    Elem,
    FiniteQuantale,
    LawReport,
    LawResult,
    Quantale,
    UsageError,
    leq,
)


@dataclass(frozen=True)
class Effectoid:
    name: str
    carrier: tuple
    base: frozenset
    le: frozenset  # pairs (a, b) with a <= b
    seq3: frozenset  # triples (a, b, c) with a ; b |-> c
    renderer: Callable[[Elem], str] = field(default=str, repr=False, compare=False)

    def results(self, a: Elem, b: Elem) -> frozenset:
        """Every ``c`` with ``a ; b |-> c``."""
        return self._results().get((a, b), frozenset())

    def _results(self) -> dict:
        cache = self.__dict__.get("_res")
        if cache is None:
            cache = {}
            for a, b, c in self.seq3:
                cache.setdefault((a, b), set()).add(c)
            cache = {k: frozenset(v) for k, v in cache.items()}
            object.__setattr__(self, "_res", cache)
        return cache


EFFECTOID_LAWS = (
    "identity-left",
    "identity-right",
    "associativity",
    "reflexive",
    "base-upward",
    "seq-upward",
)


def quantale_to_effectoid(q: Quantale, carrier: Sequence[Elem] | None = None) -> Effectoid:
    """Drop the top; Base is above the unit; composition holds above the seq result."""
    elems = list(carrier) if carrier is not None else (list(q.elements) if q.elements is not None else None)
    if elems is None:
        raise UsageError(f"{q.name} is infinite; pass a finite carrier")
    eff = tuple(a for a in elems if a != q.top)
    if not eff:
        raise ConstructionError(f"{q.name} is trivial: it has no element besides its top")
    base = frozenset(a for a in eff if leq(q, q.unit, a))
    le = frozenset((a, b) for a in eff for b in eff if leq(q, a, b))
    seq3 = set()
    for a, b in itertools.product(eff, repeat=2):
        s = q.seq(a, b)
        if s == q.top:
            continue
        for c in eff:
            if leq(q, s, c):
                seq3.add((a, b, c))
    return Effectoid(q.name, eff, base, le, frozenset(seq3), q.render)


def effectoid_laws(e: Effectoid) -> LawReport:
    """Every effectoid law, checked exhaustively with a first counterexample."""
    C = e.carrier
    base = [b for b in C if b in e.base]
    res = e._results()
    empty: frozenset = frozenset()
    out = []

    def record(name: str, checked: int, witness) -> None:
        out.append(LawResult(name, witness is None, checked, witness))

    w = None
    for a, b in itertools.product(C, repeat=2):
        lhs = any(b in res.get((x, a), empty) for x in base)
        if lhs != ((a, b) in e.le):
            w = (a, b)
            break
    record("identity-left", len(C) ** 2, w)
    w = None
    for a, b in itertools.product(C, repeat=2):
        rhs = any(b in res.get((a, x), empty) for x in base)
        if rhs != ((a, b) in e.le):
            w = (a, b)
            break
    record("identity-right", len(C) ** 2, w)
    w = None
    for a, b, c in itertools.product(C, repeat=3):
        left = set()
        for m in res.get((a, b), empty):
            left |= res.get((m, c), empty)
        right = set()
        for m in res.get((b, c), empty):
            right |= res.get((a, m), empty)
        if left != right:
            w = (a, b, c, next(iter(left ^ right)))
            break
    record("associativity", len(C) ** 4, w)
    w = next(((a,) for a in C if (a, a) not in e.le), None)
    record("reflexive", len(C), w)
    w = next(((a, b) for a, b in e.le if a in e.base and b not in e.base), None)
    record("base-upward", len(e.le), w)
    w = None
    for a, b, c in e.seq3:
        for c2 in C:
            if (c, c2) in e.le and (a, b, c2) not in e.seq3:
                w = (a, b, c, c2)
                break
        if w:
            break
    record("seq-upward", len(e.seq3) * len(C), w)
    return LawReport(f"effectoid({e.name})", len(C), tuple(out), e.renderer)


@dataclass(frozen=True)
class NotApplicable:
    reason: str
    witness: tuple | None = None


class _SyntheticErr:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "Err"


SYNTH_ERR = _SyntheticErr()


def _least(e: Effectoid, cands) -> Elem | None:
    cands = list(cands)
    for c in cands:
        if all((c, d) in e.le for d in cands):
            return c
    return None


def effectoid_to_quantale(e: Effectoid) -> FiniteQuantale | NotApplicable:
    """The quantale with a synthetic error element, or why none exists."""
    C = e.carrier
    jt = {}
    for a, b in itertools.product(C, repeat=2):
        ubs = [c for c in C if (a, c) in e.le and (b, c) in e.le]
        if not ubs:
            jt[a, b] = SYNTH_ERR  # the erased top was their only upper bound
            continue
        j = _least(e, ubs)
        if j is None:
            return NotApplicable("no binary joins", (a, b))
        jt[a, b] = j
    unit = _least(e, [b for b in C if b in e.base])
    if unit is None:
        return NotApplicable("no least centric element")
    st = {}
    for a, b in itertools.product(C, repeat=2):
        rs = e.results(a, b)
        if not rs:
            st[a, b] = SYNTH_ERR
            continue
        least = _least(e, rs)
        if least is None:
            return NotApplicable("composition not principalled", (a, b))
        st[a, b] = least
    elems = (*C, SYNTH_ERR)
    for x in elems:
        jt[x, SYNTH_ERR] = jt[SYNTH_ERR, x] = SYNTH_ERR
        st[x, SYNTH_ERR] = st[SYNTH_ERR, x] = SYNTH_ERR

    def render(a: Elem) -> str:
        return "Err" if a is SYNTH_ERR else e.renderer(a)

    return FiniteQuantale(f"quantale({e.name})", elems, jt, st, unit, SYNTH_ERR, render)


def bowtie_effectoid() -> Effectoid:
    """``a`` and ``b`` lie below two incomparable maximal elements ``c`` and ``d``.

    ``u`` is the least base element and the unit; every composition without
    ``u`` is undefined.  The effectoid laws hold but ``a`` and ``b`` have no least
    upper bound.
    """
    C = ("u", "a", "b", "c", "d")
    below = {("u", x) for x in C} | {(x, y) for x in "ab" for y in "cd"}
    le = frozenset(below | {(x, x) for x in C})
    seq3 = set()
    for x, y in itertools.product(C, repeat=2):
        if "u" in (x, y):
            r = y if x == "u" else x
            seq3 |= {(x, y, c) for c in C if (r, c) in le}
    return Effectoid("bowtie", C, frozenset(C), le, frozenset(seq3))


def is_isomorphism(q1: Quantale, q2: Quantale, f: dict) -> tuple | None:
    """None if ``f`` is a structure-preserving bijection, else a witness."""
    e1, e2 = list(q1.elements), list(q2.elements)
    if len(e1) != len(e2) or set(f) != set(e1) or set(f.values()) != set(e2):
        return ("not a bijection",)
    if f[q1.unit] != q2.unit:
        return ("unit", q1.unit)
    if f[q1.top] != q2.top:
        return ("top", q1.top)
    for a, b in itertools.product(e1, repeat=2):
        if f[q1.join(a, b)] != q2.join(f[a], f[b]):
            return ("join", a, b)
        if f[q1.seq(a, b)] != q2.seq(f[a], f[b]):
            return ("seq", a, b)
    return None


@dataclass(frozen=True)
class RoundTrip:
    instance: str
    effectoid: LawReport
    back: FiniteQuantale | NotApplicable
    witness: tuple | None

    @property
    def isomorphic(self) -> bool:
        return not isinstance(self.back, NotApplicable) and self.witness is None

    def lines(self) -> list[str]:
        out = [f"effectoid laws for {self.instance}:"]
        for r in self.effectoid.results:
            extra = "" if r.passed else "  witness: " + ", ".join(map(self.effectoid.renderer, r.counterexample))
            out.append(f"  {r.law:<16} {'pass' if r.passed else 'FAIL'}{extra}")
        if isinstance(self.back, NotApplicable):
            out.append(f"  back to a quantale: not applicable ({self.back.reason})")
        else:
            out.append(f"  round trip isomorphic: {'yes' if self.isomorphic else 'NO ' + repr(self.witness)}")
        return out

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "effectoid": self.effectoid.to_dict(),
            "back": None if isinstance(self.back, NotApplicable) else self.back.name,
            "not_applicable": self.back.reason if isinstance(self.back, NotApplicable) else None,
            "isomorphic": self.isomorphic,
        }


def round_trip(q: Quantale) -> RoundTrip:
    e = quantale_to_effectoid(q)
    back = effectoid_to_quantale(e)
    witness = None
    if not isinstance(back, NotApplicable):
        f = {a: (SYNTH_ERR if a == q.top else a) for a in q.elements}
        witness = is_isomorphism(q, back, f)
    return RoundTrip(q.name, effectoid_laws(e), back, witness)
