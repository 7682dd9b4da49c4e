"""Concrete effect quantales.

* the atomicity quantale over mover classes B, L, R, A plus TOP and ERR;
* the multiset lockset quantale, indexed by lock names;
* a set-based lockset variant that is lawful for a fixed index set but not
  collapsible;
* the powerset of exception names as a commutative lift (see ``algebra``).
"""

from __future__ import annotations

import itertools
import re
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from effquant.algebra import (
    ERR,
    BatchOps,
    ConstructionError,
    FiniteQuantale,
    IndexedFamily,
    Quantale,
    _ErrType,
    powerset_lift,
    product,
)

# ---------------------------------------------------------------------------
# Atomicity


class Atomicity(Enum):
    B = "B"
    L = "L"
    R = "R"
    A = "A"
    TOP_FQ = "TOP_FQ"
    ERR = "ERR"

    def __repr__(self) -> str:
        return self.value


_B, _L, _R, _A, _T, _E = Atomicity

_UPSETS = {
    _B: {_B, _L, _R, _A, _T, _E},
    _L: {_L, _A, _T, _E},
    _R: {_R, _A, _T, _E},
    _A: {_A, _T, _E},
    _T: {_T, _E},
    _E: {_E},
}

# Rows are the left operand.  Err is not part of the printed table; it
# annihilates on both sides.
_SEQ_ROWS = {
    _B: (_B, _L, _R, _A, _T),
    _R: (_R, _A, _R, _A, _T),
    _L: (_L, _L, _T, _T, _T),
    _A: (_A, _A, _T, _T, _T),
    _T: (_T, _T, _T, _T, _T),
}
_COLS = (_B, _L, _R, _A, _T)


def atomicity_join(a: Atomicity, b: Atomicity) -> Atomicity:
    common = _UPSETS[a] & _UPSETS[b]
    return max(common, key=lambda x: len(_UPSETS[x]))


def atomicity_seq(a: Atomicity, b: Atomicity) -> Atomicity:
    if a is _E or b is _E:
        return _E
    return _SEQ_ROWS[a][_COLS.index(b)]


def _parse_atomicity(text: str) -> Atomicity:
    t = text.strip()
    if t in ("TOP", "⊤"):
        return _T
    try:
        return Atomicity(t)
    except ValueError:
        raise ConstructionError(f"unknown atomicity {text!r}") from None


def _build_atomicity() -> FiniteQuantale:
    elems = tuple(Atomicity)
    jt = {(a, b): atomicity_join(a, b) for a in elems for b in elems}
    st = {(a, b): atomicity_seq(a, b) for a in elems for b in elems}
    return FiniteQuantale("atomicity", elems, jt, st, _B, _E, lambda a: a.value, _parse_atomicity)


ATOMICITY = _build_atomicity()


def broken_atomicity() -> FiniteQuantale:
    """Atomicity with one seq entry changed; breaks associativity and distributivity."""
    return ATOMICITY.with_seq_override("atomicity-broken", {(_A, _R): _B})


# ---------------------------------------------------------------------------
# Lock multisets


@dataclass(frozen=True)
class LockMultiset:
    """A finite multiset of lock names, stored as sorted positive counts."""

    items: tuple[tuple[str, int], ...] = ()

    @classmethod
    def of(cls, data: Mapping[str, int] | Iterable[str] = ()) -> LockMultiset:
        counts = Counter(data) if not isinstance(data, Mapping) else Counter(dict(data))
        return cls(tuple(sorted((k, v) for k, v in counts.items() if v > 0)))

    def counter(self) -> Counter:
        return Counter(dict(self.items))

    def count(self, name: str) -> int:
        return dict(self.items).get(name, 0)

    def names(self) -> frozenset[str]:
        return frozenset(k for k, _ in self.items)

    def __or__(self, other: LockMultiset) -> LockMultiset:
        return LockMultiset.of(self.counter() | other.counter())

    def __add__(self, other: LockMultiset) -> LockMultiset:
        return LockMultiset.of(self.counter() + other.counter())

    def __sub__(self, other: LockMultiset) -> LockMultiset:
        # Counter subtraction is already zero-limited.
        return LockMultiset.of(self.counter() - other.counter())

    def __le__(self, other: LockMultiset) -> bool:
        o = dict(other.items)
        return all(v <= o.get(k, 0) for k, v in self.items)

    def rename(self, old: str, new: str) -> LockMultiset:
        c = self.counter()
        moved = c.pop(old, 0)
        c[new] += moved
        return LockMultiset.of(c)

    def render(self) -> str:
        return "{" + ",".join(k for k, v in self.items for _ in range(v)) + "}"


EMPTY = LockMultiset()


@dataclass(frozen=True)
class LockEffect:
    """(pre, post): locks required on entry and held on exit."""

    pre: LockMultiset = EMPTY
    post: LockMultiset = EMPTY

    @classmethod
    def of(cls, pre: Iterable[str] | Mapping[str, int] = (), post: Iterable[str] | Mapping[str, int] = ()) -> LockEffect:
        return cls(LockMultiset.of(pre), LockMultiset.of(post))

    def names(self) -> frozenset[str]:
        return self.pre.names() | self.post.names()

    @property
    def balanced(self) -> bool:
        return self.pre == self.post


LockElem = LockEffect | _ErrType


def lockset_join(x: LockElem, y: LockElem) -> LockElem:
    if x is ERR or y is ERR:
        return ERR
    if (x.pre - x.post, x.post - x.pre) != (y.pre - y.post, y.post - y.pre):
        return ERR
    return LockEffect(x.pre | y.pre, x.post | y.post)


def lockset_seq(x: LockElem, y: LockElem) -> LockElem:
    if x is ERR or y is ERR:
        return ERR
    rel = x.pre - x.post
    acq = x.post - x.pre
    pre_x, pre_y = x.pre.counter(), y.pre.counter()
    rc, ac = rel.counter(), acq.counter()
    c = Counter()
    for name in set(pre_x) | set(pre_y):
        c[name] = max(pre_x[name], rc[name] + max(pre_y[name] - ac[name], 0))
    cm = LockMultiset.of(c)
    post = (((cm - rel) + acq) - (y.pre - y.post)) + (y.post - y.pre)
    return LockEffect(cm, post)


_ENTRY = re.compile(r"^([A-Za-z_][\w#.']*)(?:\^(\d+))?$")


def _parse_multiset(text: str) -> LockMultiset:
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        raise ConstructionError(f"bad lock multiset {text!r}")
    counts: Counter = Counter()
    for part in text[1:-1].split(","):
        part = part.strip()
        if not part:
            continue
        m = _ENTRY.match(part)
        if not m:
            raise ConstructionError(f"bad lock entry {part!r}")
        counts[m.group(1)] += int(m.group(2) or 1)
    return LockMultiset.of(counts)


def _split_arrow(text: str) -> tuple[str, str]:
    if "=>" not in text:
        raise ConstructionError(f"lock effect {text!r} lacks '=>'")
    pre, post = text.split("=>", 1)
    return pre, post


class LocksetQuantale(Quantale):
    """The multiset lockset quantale over an index set (None: any names)."""

    has_analytic_star = True

    def __init__(self, index: frozenset[str] | None = None) -> None:
        self.index = index
        self.name = "lockset" if index is None else "lockset{" + ",".join(sorted(index)) + "}"
        self.unit = LockEffect()
        self.top = ERR

    def owns(self, a) -> bool:
        if a is ERR:
            return True
        return isinstance(a, LockEffect) and (self.index is None or a.names() <= self.index)

    def _join(self, a, b):
        return lockset_join(a, b)

    def _seq(self, a, b):
        return lockset_seq(a, b)

    def render(self, a) -> str:
        if a is ERR:
            return "ERR"
        return f"{a.pre.render()}=>{a.post.render()}"

    def parse_literal(self, text: str):
        text = text.strip()
        if text == "ERR":
            return ERR
        pre, post = _split_arrow(text)
        out = LockEffect(_parse_multiset(pre), _parse_multiset(post))
        if not self.owns(out):
            raise ConstructionError(f"{text!r} mentions names outside {self.name}")
        return out

    def names(self, a) -> frozenset[str]:
        return a.names()

    def rename(self, a, old: str, new: str):
        if a is ERR:
            return ERR
        return LockEffect(a.pre.rename(old, new), a.post.rename(old, new))

    def is_freely_iterable(self, a) -> bool:
        self._check(a)
        return a is ERR or a.balanced

    def analytic_star(self, a):
        self._check(a)
        if a is not ERR and a.balanced:
            return a
        return ERR

    def batch(self, carrier: Sequence) -> BatchOps:
        names: set[str] = set(self.index or ())
        for a in carrier:
            names |= a.names()
        return LockBatch(sorted(names))


class LockBatch(BatchOps):
    """Row layout ``[err | pre counts... | post counts...]``."""

    def __init__(self, names: Sequence[str]) -> None:
        self.names_ = list(names)
        self.k = len(self.names_)
        self.width = 1 + 2 * self.k

    def encode(self, elems: Sequence) -> np.ndarray:
        out = np.zeros((self.width, len(elems)), dtype=self.dtype)
        pos = {n: i for i, n in enumerate(self.names_)}
        for i, a in enumerate(elems):
            if a is ERR:
                out[0, i] = 1
                continue
            for n, v in a.pre.items:
                out[1 + pos[n], i] = v
            for n, v in a.post.items:
                out[1 + self.k + pos[n], i] = v
        return out

    def decode(self, col: np.ndarray):
        if col[0]:
            return ERR
        k = self.k
        pre = {n: int(col[1 + i]) for i, n in enumerate(self.names_)}
        post = {n: int(col[1 + k + i]) for i, n in enumerate(self.names_)}
        return LockEffect.of(pre, post)

    def _pack(self, err, pre, post) -> np.ndarray:
        shape = np.broadcast_shapes(err.shape, pre.shape[1:], post.shape[1:])
        out = np.empty((self.width,) + shape, dtype=self.dtype)
        out[0] = err
        out[1 : 1 + self.k] = pre
        out[1 + self.k :] = post
        return out

    def join(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        k = self.k
        px, qx, py, qy = x[1 : 1 + k], x[1 + k :], y[1 : 1 + k], y[1 + k :]
        err = (x[0] != 0) | (y[0] != 0) | np.any((px - qx) != (py - qy), axis=0)
        return self._pack(err, np.maximum(px, py), np.maximum(qx, qy))

    def seq(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        k = self.k
        px, qx, py, qy = x[1 : 1 + k], x[1 + k :], y[1 : 1 + k], y[1 + k :]
        rel = np.maximum(px - qx, 0)
        acq = np.maximum(qx - px, 0)
        c = np.maximum(px, rel + np.maximum(py - acq, 0))
        post = np.maximum(c - rel + acq - np.maximum(py - qy, 0), 0) + np.maximum(qy - py, 0)
        return self._pack((x[0] != 0) | (y[0] != 0), c, post)

    def is_top(self, x: np.ndarray) -> np.ndarray:
        return x[0] != 0

    def eq(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        ex, ey = x[0] != 0, y[0] != 0
        return (ex & ey) | (~ex & ~ey & np.all(x[1:] == y[1:], axis=0))


def bounded_carrier(names: Iterable[str], mult: int) -> list:
    """All lock effects over ``names`` with every count ≤ ``mult``, plus ERR."""
    names = sorted(names)
    counts = list(itertools.product(range(mult + 1), repeat=len(names)))
    out = [
        LockEffect.of(dict(zip(names, p)), dict(zip(names, q)))
        for p in counts
        for q in counts
    ]
    out.sort(key=lambda e: (sum(v for _, v in e.pre.items) + sum(v for _, v in e.post.items), repr(e)))
    return out + [ERR]


def lockset_family() -> IndexedFamily:
    return IndexedFamily("lockset", lambda s: LocksetQuantale(frozenset(s)))


LOCKSET = LocksetQuantale()


# ---------------------------------------------------------------------------
# Set-based lockset variant
#
# Each lock carries one of five behaviours, viewed as a partial shift on the
# lock's held-state {0, 1}: the identity, "must be free" {0→0}, "must be
# held" {1→1}, acquire {0→1} and release {1→0}.  Sequencing is relational
# composition and join is intersection; an empty relation anywhere is ERR.
# Tracking "must be free" is what keeps sequencing associative once counts are
# capped at one.

_ID = frozenset({(0, 0), (1, 1)})
_STATES = {
    "free": frozenset({(0, 0)}),
    "held": frozenset({(1, 1)}),
    "acq": frozenset({(0, 1)}),
    "rel": frozenset({(1, 0)}),
}
_REL_TO_STATE = {v: k for k, v in _STATES.items()}
_COUNTS = {"free": (0, 0, True), "held": (1, 1, False), "acq": (0, 1, True), "rel": (1, 0, False)}


def _compose(r1: frozenset, r2: frozenset) -> frozenset:
    return frozenset((a, c) for a, b in r1 for b2, c in r2 if b == b2)


@dataclass(frozen=True)
class SetLockEffect:
    """Per-lock behaviours, omitting locks whose behaviour is the identity."""

    states: tuple[tuple[str, str], ...] = ()

    @classmethod
    def of(cls, states: Mapping[str, str]) -> SetLockEffect:
        for s in states.values():
            if s != "id" and s not in _STATES:
                raise ConstructionError(f"unknown lock behaviour {s!r}")
        return cls(tuple(sorted((k, v) for k, v in states.items() if v != "id")))

    @classmethod
    def from_sets(cls, pre: Iterable[str] = (), post: Iterable[str] = (), free: Iterable[str] = ()) -> SetLockEffect:
        pre, post, free = set(pre), set(post), set(free)
        st: dict[str, str] = {}
        for n in pre | post | free:
            if n in free and (n in pre or n in post):
                raise ConstructionError(f"{n!r} cannot be both free-only and claimed")
            st[n] = "free" if n in free else "held" if n in pre and n in post else "rel" if n in pre else "acq"
        return cls.of(st)

    def state(self, name: str) -> str:
        return dict(self.states).get(name, "id")

    def names(self) -> frozenset[str]:
        return frozenset(k for k, _ in self.states)


def _rel(e: SetLockEffect, name: str) -> frozenset:
    s = e.state(name)
    return _ID if s == "id" else _STATES[s]


def _from_rels(rels: Mapping[str, frozenset]):
    out: dict[str, str] = {}
    for n, r in rels.items():
        if not r:
            return ERR
        out[n] = "id" if r == _ID else _REL_TO_STATE[r]
    return SetLockEffect.of(out)


def set_lockset_join(x, y):
    if x is ERR or y is ERR:
        return ERR
    names = x.names() | y.names()
    return _from_rels({n: _rel(x, n) & _rel(y, n) for n in names})


def set_lockset_seq(x, y):
    if x is ERR or y is ERR:
        return ERR
    names = x.names() | y.names()
    return _from_rels({n: _compose(_rel(x, n), _rel(y, n)) for n in names})


def _merge_states(s1: str, s2: str) -> str | None:
    """Behaviour of one lock that stood for two names; None means ERR."""
    if s1 == "id":
        return s2
    if s2 == "id":
        return s1
    p1, q1, f1 = _COUNTS[s1]
    p2, q2, f2 = _COUNTS[s2]
    p, q, free = p1 + p2, q1 + q2, f1 or f2
    if p > 1 or q > 1 or (free and p > 0):
        return None
    return {(0, 0): "free" if free else "id", (1, 1): "held", (0, 1): "acq", (1, 0): "rel"}[p, q]


class SetLocksetQuantale(Quantale):
    """Set-based locksets: lawful on a fixed index, but collapse is not collapsible."""

    has_analytic_star = True

    def __init__(self, index: frozenset[str] | None = None) -> None:
        self.index = index
        self.name = "lockset-set" if index is None else "lockset-set{" + ",".join(sorted(index)) + "}"
        self.unit = SetLockEffect()
        self.top = ERR
        if index is not None:
            names = sorted(index)
            self.elements = tuple(
                SetLockEffect.of(dict(zip(names, combo)))
                for combo in itertools.product(("id", "free", "held", "acq", "rel"), repeat=len(names))
            ) + (ERR,)

    def owns(self, a) -> bool:
        if a is ERR:
            return True
        return isinstance(a, SetLockEffect) and (self.index is None or a.names() <= self.index)

    def _join(self, a, b):
        return set_lockset_join(a, b)

    def _seq(self, a, b):
        return set_lockset_seq(a, b)

    def render(self, a) -> str:
        if a is ERR:
            return "ERR"
        pre = sorted(n for n, s in a.states if s in ("held", "rel"))
        post = sorted(n for n, s in a.states if s in ("held", "acq"))
        free = sorted(n for n, s in a.states if s == "free")
        out = "{" + ",".join(pre) + "}=>{" + ",".join(post) + "}"
        if free:
            out += "!{" + ",".join(free) + "}"
        return out

    def parse_literal(self, text: str):
        text = text.strip()
        if text == "ERR":
            return ERR
        free: list[str] = []
        if "!" in text:
            text, free_text = text.split("!", 1)
            free = [n for n, _ in _parse_multiset(free_text).items]
        pre, post = _split_arrow(text)
        pm, qm = _parse_multiset(pre), _parse_multiset(post)
        if any(v > 1 for _, v in pm.items + qm.items):
            return ERR
        out = SetLockEffect.from_sets(pm.names(), qm.names(), free)
        if not self.owns(out):
            raise ConstructionError(f"{text!r} mentions names outside {self.name}")
        return out

    def names(self, a) -> frozenset[str]:
        return a.names()

    def rename(self, a, old: str, new: str):
        if a is ERR or old == new:
            return a
        st = dict(a.states)
        moved = st.pop(old, "id")
        merged = _merge_states(st.get(new, "id"), moved)
        if merged is None:
            return ERR
        st[new] = merged
        return SetLockEffect.of(st)

    def is_freely_iterable(self, a) -> bool:
        self._check(a)
        return a is ERR or all(s in ("free", "held") for _, s in a.states)

    def analytic_star(self, a):
        self._check(a)
        return a if self.is_freely_iterable(a) else ERR


def set_bounded_carrier(names: Iterable[str]) -> list:
    """Every set-variant lock effect over ``names``, plus ERR."""
    names = sorted(names)
    behaviours = ("id", *_STATES)
    out = [SetLockEffect.of(dict(zip(names, p))) for p in itertools.product(behaviours, repeat=len(names))]
    return out + [ERR]


def lockset_set_variant() -> IndexedFamily:
    return IndexedFamily("lockset-set", lambda s: SetLocksetQuantale(frozenset(s)))


def set_to_multiset(a):
    """Forget the "must be free" marks, reading behaviours as 0/1 claim counts."""
    if a is ERR:
        return ERR
    pre = [n for n, s in a.states if s in ("held", "rel")]
    post = [n for n, s in a.states if s in ("held", "acq")]
    return LockEffect.of(pre, post)


SET_LOCKSET = SetLocksetQuantale()
POWERSET = powerset_lift(("IOExc", "ArgExc"))
FQ = product(LOCKSET, ATOMICITY)
SET_FQ = product(SET_LOCKSET, ATOMICITY)
