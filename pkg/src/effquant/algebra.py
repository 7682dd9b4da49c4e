"""Effect quantales: the interface, derived order, constructions and law suite.

An effect quantale is a join semilattice with a top element together with a
monoid whose multiplication (``seq``) distributes over joins on both sides and
is annihilated by top.  Instances here are plain Python objects; elements are
hashable values whose equality is structural.  Every operation checks that its
operands belong to the instance it is called on, and mixing instances is a
:class:`UsageError` rather than an in-band error element.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

Elem = Any


class UsageError(TypeError):
    """Raised when an operation receives an element of the wrong instance."""


class ConstructionError(ValueError):
    """Raised when a construction's preconditions are not met."""


class _ErrType:
    """The shared in-band error element used by product-like carriers."""

    _instance: _ErrType | None = None

    def __new__(cls) -> _ErrType:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ERR"

    def __reduce__(self) -> str:
        return "ERR"

    def names(self) -> frozenset[str]:
        return frozenset()


ERR = _ErrType()


class Quantale:
    """Base class for effect quantale instances.

    Subclasses implement ``_join``, ``_seq`` and ``owns``.  The public
    ``join`` and ``seq`` validate membership before dispatching.
    """

    name: str = "quantale"
    unit: Elem
    top: Elem
    elements: tuple[Elem, ...] | None = None

    def owns(self, a: Elem) -> bool:
        raise NotImplementedError

    def _join(self, a: Elem, b: Elem) -> Elem:
        raise NotImplementedError

    def _seq(self, a: Elem, b: Elem) -> Elem:
        raise NotImplementedError

    def _check(self, *xs: Elem) -> None:
        for x in xs:
            if not self.owns(x):
                raise UsageError(f"{x!r} is not an element of {self.name}")

    def join(self, a: Elem, b: Elem) -> Elem:
        self._check(a, b)
        return self._join(a, b)

    def seq(self, a: Elem, b: Elem) -> Elem:
        self._check(a, b)
        return self._seq(a, b)

    def eq(self, a: Elem, b: Elem) -> bool:
        self._check(a, b)
        return a == b

    def render(self, a: Elem) -> str:
        return str(a)

    def parse_literal(self, text: str) -> Elem:
        raise ConstructionError(f"{self.name} has no literal syntax")

    # Names and renaming drive transport of literals under substitution.
    def names(self, a: Elem) -> frozenset[str]:
        return frozenset()

    def rename(self, a: Elem, old: str, new: str) -> Elem:
        return a

    # Iteration: instances may register an analytic star; otherwise the
    # generic construction over ``elements`` is used when available.
    def analytic_star(self, a: Elem) -> Elem:
        raise NotImplementedError

    has_analytic_star: bool = False

    def is_freely_iterable(self, a: Elem) -> bool:
        return self.seq(a, a) == a

    def star(self, a: Elem) -> Elem:
        op = self.closure()
        if op is None:
            raise ConstructionError(f"{self.name} has no closure operator")
        return op.star(a)

    def closure(self):
        """The iteration closure operator, or None if unavailable."""
        cached = self.__dict__.get("_closure_cache", _MISSING)
        if cached is not _MISSING:
            return cached
        from effquant.iteration import ClosureError, closure

        try:
            op = closure(self)
        except (ClosureError, ConstructionError):
            op = None
        self.__dict__["_closure_cache"] = op
        return op

    def batch(self, carrier: Sequence[Elem]) -> BatchOps | None:
        """Vectorized operations covering ``carrier`` and everything it generates."""
        return TableBatch.try_build(self, carrier)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


_MISSING = object()


def leq(q: Quantale, a: Elem, b: Elem) -> bool:
    """The order induced by join: ``a ⊑ b`` iff ``a ⊔ b = b``."""
    return q.join(a, b) == b


# ---------------------------------------------------------------------------
# Finite table-based instances


class FiniteQuantale(Quantale):
    """A quantale given by explicit join and seq tables over a finite carrier."""

    def __init__(
        self,
        name: str,
        elements: Sequence[Elem],
        join_table: dict[tuple[Elem, Elem], Elem],
        seq_table: dict[tuple[Elem, Elem], Elem],
        unit: Elem,
        top: Elem,
        render: Callable[[Elem], str] = str,
        parse: Callable[[str], Elem] | None = None,
    ) -> None:
        self.name = name
        self.elements = tuple(elements)
        self._members = frozenset(self.elements)
        self._jt = dict(join_table)
        self._st = dict(seq_table)
        self.unit = unit
        self.top = top
        self._render = render
        self._parse = parse
        for a in self.elements:
            for b in self.elements:
                if (a, b) not in self._jt or (a, b) not in self._st:
                    raise ConstructionError(f"table for {name} is missing entry {a!r},{b!r}")

    def owns(self, a: Elem) -> bool:
        try:
            return a in self._members
        except TypeError:
            return False

    def _join(self, a: Elem, b: Elem) -> Elem:
        return self._jt[a, b]

    def _seq(self, a: Elem, b: Elem) -> Elem:
        return self._st[a, b]

    def render(self, a: Elem) -> str:
        return self._render(a)

    def parse_literal(self, text: str) -> Elem:
        if self._parse is not None:
            return self._parse(text)
        for a in self.elements:
            if self._render(a) == text:
                return a
        raise ConstructionError(f"unknown {self.name} literal {text!r}")

    def with_seq_override(self, name: str, overrides: dict[tuple[Elem, Elem], Elem]) -> FiniteQuantale:
        """A copy with some seq entries replaced; used to seed faults."""
        st = dict(self._st)
        st.update(overrides)
        return FiniteQuantale(name, self.elements, self._jt, st, self.unit, self.top, self._render, self._parse)


# ---------------------------------------------------------------------------
# Commutative lifting of a bounded join semilattice


@dataclass(frozen=True)
class JoinSemilattice:
    """A bounded join semilattice: the input to :func:`commutative_lift`."""

    name: str
    join: Callable[[Elem, Elem], Elem]
    top: Elem
    bottom: Elem | None
    owns: Callable[[Elem], bool]
    elements: tuple[Elem, ...] | None = None
    render: Callable[[Elem], str] = str
    parse: Callable[[str], Elem] | None = None


class LiftedQuantale(Quantale):
    """Join reused as sequencing; every element is freely iterable."""

    has_analytic_star = True

    def __init__(self, lattice: JoinSemilattice) -> None:
        self.lattice = lattice
        self.name = f"lift({lattice.name})"
        self.unit = lattice.bottom
        self.top = lattice.top
        self.elements = lattice.elements

    def owns(self, a: Elem) -> bool:
        return self.lattice.owns(a)

    def _join(self, a: Elem, b: Elem) -> Elem:
        return self.lattice.join(a, b)

    _seq = _join

    def render(self, a: Elem) -> str:
        return self.lattice.render(a)

    def parse_literal(self, text: str) -> Elem:
        if self.lattice.parse is None:
            return super().parse_literal(text)
        return self.lattice.parse(text)

    def analytic_star(self, a: Elem) -> Elem:
        self._check(a)
        return a


def commutative_lift(lattice: JoinSemilattice) -> LiftedQuantale:
    """Build the quantale (E, ⊔, ⊔, ⊤, ⊥) from a bounded join semilattice."""
    if lattice.bottom is None:
        raise ConstructionError(f"{lattice.name} has no bottom element to serve as unit")
    return LiftedQuantale(lattice)


def powerset_lattice(atoms: Iterable[str], name: str | None = None) -> JoinSemilattice:
    """The subsets of ``atoms`` ordered by inclusion."""
    universe = frozenset(atoms)
    subsets = [
        frozenset(c)
        for r in range(len(universe) + 1)
        for c in itertools.combinations(sorted(universe), r)
    ]

    def owns(a: Elem) -> bool:
        return isinstance(a, frozenset) and a <= universe

    def render(a: frozenset) -> str:
        return "{" + ",".join(sorted(a)) + "}"

    def parse(text: str) -> frozenset:
        text = text.strip()
        if not (text.startswith("{") and text.endswith("}")):
            raise ConstructionError(f"bad set literal {text!r}")
        body = text[1:-1].strip()
        items = frozenset(s.strip() for s in body.split(",") if s.strip())
        if not items <= universe:
            raise ConstructionError(f"{sorted(items - universe)} not in {sorted(universe)}")
        return items

    return JoinSemilattice(
        name=name or f"P{render(universe)}",
        join=lambda a, b: a | b,
        top=universe,
        bottom=frozenset(),
        owns=owns,
        elements=tuple(subsets),
        render=render,
        parse=parse,
    )


def powerset_lift(atoms: Iterable[str] = ("IOExc", "ArgExc")) -> LiftedQuantale:
    return commutative_lift(powerset_lattice(atoms))


# ---------------------------------------------------------------------------
# Products


@dataclass(frozen=True)
class Pair:
    left: Elem
    right: Elem

    def names(self) -> frozenset[str]:
        return _elem_names(self.left) | _elem_names(self.right)


def _elem_names(a: Elem) -> frozenset[str]:
    fn = getattr(a, "names", None)
    return fn() if callable(fn) else frozenset()


class ProductQuantale(Quantale):
    """Pointwise product with every top-containing pair merged into one Err."""

    def __init__(self, q: Quantale, r: Quantale) -> None:
        self.q = q
        self.r = r
        self.name = f"{q.name}*{r.name}"
        self.unit = Pair(q.unit, r.unit)
        self.top = ERR
        if q.elements is not None and r.elements is not None:
            self.elements = tuple(
                Pair(a, b) for a in q.elements if a != q.top for b in r.elements if b != r.top
            ) + (ERR,)
        self.has_analytic_star = True

    def owns(self, a: Elem) -> bool:
        if a is ERR:
            return True
        return (
            isinstance(a, Pair)
            and self.q.owns(a.left)
            and self.r.owns(a.right)
            and a.left != self.q.top
            and a.right != self.r.top
        )

    def make(self, a: Elem, b: Elem) -> Elem:
        if a == self.q.top or b == self.r.top:
            return ERR
        return Pair(a, b)

    def _join(self, x: Elem, y: Elem) -> Elem:
        if x is ERR or y is ERR:
            return ERR
        return self.make(self.q.join(x.left, y.left), self.r.join(x.right, y.right))

    def _seq(self, x: Elem, y: Elem) -> Elem:
        if x is ERR or y is ERR:
            return ERR
        return self.make(self.q.seq(x.left, y.left), self.r.seq(x.right, y.right))

    def render(self, a: Elem) -> str:
        if a is ERR:
            return "ERR"
        return f"{self.q.render(a.left)}&{self.r.render(a.right)}"

    def parse_literal(self, text: str) -> Elem:
        text = text.strip()
        if text == "ERR":
            return ERR
        if "&" in text:
            left, right = text.rsplit("&", 1)
            return self.make(self.q.parse_literal(left), self.r.parse_literal(right))
        # A lone component stands for itself paired with the other unit.
        try:
            return self.make(self.q.unit, self.r.parse_literal(text))
        except Exception:
            return self.make(self.q.parse_literal(text), self.r.unit)

    def names(self, a: Elem) -> frozenset[str]:
        if a is ERR:
            return frozenset()
        return self.q.names(a.left) | self.r.names(a.right)

    def rename(self, a: Elem, old: str, new: str) -> Elem:
        if a is ERR:
            return ERR
        return self.make(self.q.rename(a.left, old, new), self.r.rename(a.right, old, new))

    def analytic_star(self, a: Elem) -> Elem:
        self._check(a)
        if a is ERR:
            return ERR
        return self.make(self.q.star(a.left), self.r.star(a.right))

    def closure(self):
        if self.q.closure() is None or self.r.closure() is None:
            return None
        return super().closure()

    def is_freely_iterable(self, a: Elem) -> bool:
        self._check(a)
        if a is ERR:
            return True
        return self.q.is_freely_iterable(a.left) and self.r.is_freely_iterable(a.right)

    def batch(self, carrier: Sequence[Elem]) -> BatchOps | None:
        lefts = [p.left for p in carrier if p is not ERR] or [self.q.unit]
        rights = [p.right for p in carrier if p is not ERR] or [self.r.unit]
        lb = self.q.batch(lefts)
        rb = self.r.batch(rights)
        if lb is None or rb is None:
            return None
        return ProductBatch(self, lb, rb)


def product(q: Quantale, r: Quantale) -> ProductQuantale:
    return ProductQuantale(q, r)


# ---------------------------------------------------------------------------
# Homomorphisms and indexed families


@dataclass(frozen=True)
class Homomorphism:
    source: Quantale
    target: Quantale
    fn: Callable[[Elem], Elem]
    label: str = ""


def apply_hom(h: Homomorphism, a: Elem) -> Elem:
    if not h.source.owns(a):
        raise UsageError(f"{a!r} is not an element of {h.source.name}")
    out = h.fn(a)
    if not h.target.owns(out):
        raise UsageError(f"image {out!r} escapes {h.target.name}")
    return out


@dataclass(frozen=True)
class IndexedFamily:
    """A family of quantales indexed by finite sets of names.

    ``instantiate`` builds Q(S).  Inclusion is the identity on payloads and
    collapse renames a fresh name onto an existing one using the instance's
    ``rename`` (which merges whatever the two names carried).
    """

    name: str
    instantiate: Callable[[frozenset[str]], Quantale]

    def include(self, s: Iterable[str], t: Iterable[str]) -> Homomorphism:
        s, t = frozenset(s), frozenset(t)
        if not s <= t:
            raise UsageError(f"{sorted(s)} is not a subset of {sorted(t)}")
        return Homomorphism(self.instantiate(s), self.instantiate(t), lambda a: a, "include")

    def collapse(self, s: Iterable[str], x: str, target: str) -> Homomorphism:
        s = frozenset(s)
        if x in s:
            raise UsageError(f"collapsed name {x!r} must be fresh for {sorted(s)}")
        if target not in s:
            raise UsageError(f"collapse target {target!r} not in {sorted(s)}")
        src = self.instantiate(s | {x})
        return Homomorphism(src, self.instantiate(s), lambda a: src.rename(a, x, target), f"{x}->{target}")


def product_family(f: IndexedFamily, r: Quantale) -> IndexedFamily:
    """Pair an indexed family with a constant (unindexed) quantale."""
    return IndexedFamily(f"{f.name}*{r.name}", lambda s: ProductQuantale(f.instantiate(s), r))


def collapsibility_violations(
    h: Homomorphism, carrier: Sequence[Elem], limit: int = 1
) -> list[tuple[str, Elem, Elem]]:
    """Pairs where ``f a ∘ f b = ⊤`` but ``a ∘ b ≠ ⊤`` for ∘ in {seq, join}; ``limit=0`` collects all."""
    src, tgt = h.source, h.target
    out: list[tuple[str, Elem, Elem]] = []
    images = [apply_hom(h, a) for a in carrier]
    for (a, fa), (b, fb) in itertools.product(zip(carrier, images), repeat=2):
        for label, op_s, op_t in (("seq", src.seq, tgt.seq), ("join", src.join, tgt.join)):
            if op_t(fa, fb) == tgt.top and op_s(a, b) != src.top:
                out.append((label, a, b))
                if limit and len(out) >= limit:
                    return out
    return out


def homomorphism_violations(h: Homomorphism, carrier: Sequence[Elem], limit: int = 1) -> list[tuple]:
    """Failures of join/seq/unit/top preservation over ``carrier``."""
    src, tgt = h.source, h.target
    out: list[tuple] = []
    if apply_hom(h, src.unit) != tgt.unit:
        out.append(("unit", src.unit))
    if apply_hom(h, src.top) != tgt.top:
        out.append(("top", src.top))
    for a, b in itertools.product(carrier, repeat=2):
        if limit and len(out) >= limit:
            break
        fa, fb = apply_hom(h, a), apply_hom(h, b)
        if apply_hom(h, src.join(a, b)) != tgt.join(fa, fb):
            out.append(("join", a, b))
        if apply_hom(h, src.seq(a, b)) != tgt.seq(fa, fb):
            out.append(("seq", a, b))
    return out[:limit] if limit else out


# ---------------------------------------------------------------------------
# Vectorized backends


class BatchOps:
    """Column-major encoded elements with array versions of the operations.

    An encoded block has shape ``(width, n)``: one row per field, one column
    per element.  Operations broadcast, so a single column ``(width, 1)`` can
    be combined with a whole block.  Blocks may carry arbitrary payload in
    error columns, so ``eq`` must treat all error encodings as equal.
    """

    width: int
    dtype = np.int16

    def encode(self, elems: Sequence[Elem]) -> np.ndarray:
        raise NotImplementedError

    def decode(self, col: np.ndarray) -> Elem:
        raise NotImplementedError

    def join(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def seq(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def is_top(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eq(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.all(x == y, axis=0)


class TableBatch(BatchOps):
    """Index encoding for a carrier closed under join and seq."""

    width = 1

    def __init__(self, q: Quantale, elems: Sequence[Elem]) -> None:
        self.q = q
        self.elems = list(elems)
        self.index = {a: i for i, a in enumerate(self.elems)}
        n = len(self.elems)
        self.jt = np.empty((n, n), dtype=self.dtype)
        self.st = np.empty((n, n), dtype=self.dtype)
        for i, a in enumerate(self.elems):
            for j, b in enumerate(self.elems):
                self.jt[i, j] = self.index[q.join(a, b)]
                self.st[i, j] = self.index[q.seq(a, b)]
        self.top_index = self.index[q.top]

    @classmethod
    def try_build(cls, q: Quantale, carrier: Sequence[Elem]) -> TableBatch | None:
        closed = _close_carrier(q, carrier, limit=512)
        if closed is None:
            return None
        return cls(q, closed)

    def encode(self, elems: Sequence[Elem]) -> np.ndarray:
        return np.array([[self.index[a] for a in elems]], dtype=self.dtype).reshape(1, -1)

    def decode(self, col: np.ndarray) -> Elem:
        return self.elems[int(col[0])]

    def join(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.jt[x[0], y[0]][None]

    def seq(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.st[x[0], y[0]][None]

    def is_top(self, x: np.ndarray) -> np.ndarray:
        return x[0] == self.top_index


def _close_carrier(q: Quantale, carrier: Sequence[Elem], limit: int) -> list[Elem] | None:
    """Close ``carrier`` (plus unit and top) under join and seq, or give up."""
    if q.elements is not None and len(q.elements) <= limit:
        return list(q.elements)
    seen: dict[Elem, None] = dict.fromkeys(list(carrier) + [q.unit, q.top])
    frontier = list(seen)
    while frontier:
        new: list[Elem] = []
        items = list(seen)
        for a in frontier:
            for b in items:
                for c in (q.join(a, b), q.seq(a, b), q.seq(b, a)):
                    if c not in seen:
                        seen[c] = None
                        new.append(c)
                        if len(seen) > limit:
                            return None
        frontier = new
    return list(seen)


class ProductBatch(BatchOps):
    """Row layout ``[err | left rows... | right rows...]``."""

    def __init__(self, q: ProductQuantale, left: BatchOps, right: BatchOps) -> None:
        self.q = q
        self.left = left
        self.right = right
        self.width = 1 + left.width + right.width
        self._lu = left.encode([q.q.unit])[:, 0]
        self._ru = right.encode([q.r.unit])[:, 0]

    def encode(self, elems: Sequence[Elem]) -> np.ndarray:
        out = np.zeros((self.width, len(elems)), dtype=self.dtype)
        lw = self.left.width
        for i, a in enumerate(elems):
            if a is ERR:
                out[0, i] = 1
                out[1 : 1 + lw, i] = self._lu
                out[1 + lw :, i] = self._ru
            else:
                out[1 : 1 + lw, i] = self.left.encode([a.left])[:, 0]
                out[1 + lw :, i] = self.right.encode([a.right])[:, 0]
        return out

    def decode(self, col: np.ndarray) -> Elem:
        if col[0]:
            return ERR
        lw = self.left.width
        return Pair(self.left.decode(col[1 : 1 + lw]), self.right.decode(col[1 + lw :]))

    def _combine(self, x: np.ndarray, y: np.ndarray, lop, rop) -> np.ndarray:
        lw = self.left.width
        l = lop(x[1 : 1 + lw], y[1 : 1 + lw])
        r = rop(x[1 + lw :], y[1 + lw :])
        err = (x[0] != 0) | (y[0] != 0) | self.left.is_top(l) | self.right.is_top(r)
        shape = np.broadcast_shapes(l.shape[1:], r.shape[1:], err.shape)
        out = np.empty((self.width,) + shape, dtype=self.dtype)
        out[0] = err
        out[1 : 1 + lw] = l
        out[1 + lw :] = r
        return out

    def join(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self._combine(x, y, self.left.join, self.right.join)

    def seq(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self._combine(x, y, self.left.seq, self.right.seq)

    def is_top(self, x: np.ndarray) -> np.ndarray:
        return x[0] != 0

    def eq(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        lw = self.left.width
        ex, ey = x[0] != 0, y[0] != 0
        same = self.left.eq(x[1 : 1 + lw], y[1 : 1 + lw]) & self.right.eq(x[1 + lw :], y[1 + lw :])
        return (ex & ey) | (~ex & ~ey & same)


# ---------------------------------------------------------------------------
# Law suite

LAWS = (
    "join-assoc",
    "join-comm",
    "join-idem",
    "join-top",
    "seq-assoc",
    "unit-left",
    "unit-right",
    "top-left",
    "top-right",
    "dist-left",
    "dist-right",
    "isotonicity",
)

_UNARY: dict[str, Callable] = {
    "join-idem": lambda o, a: o.eq(o.join(a, a), a),
    "join-top": lambda o, a: o.eq(o.join(a, o.top), o.top),
    "unit-left": lambda o, a: o.eq(o.seq(o.unit, a), a),
    "unit-right": lambda o, a: o.eq(o.seq(a, o.unit), a),
    "top-left": lambda o, a: o.eq(o.seq(o.top, a), o.top),
    "top-right": lambda o, a: o.eq(o.seq(a, o.top), o.top),
}
_BINARY: dict[str, Callable] = {
    "join-comm": lambda o, a, b: o.eq(o.join(a, b), o.join(b, a)),
}
_TERNARY: dict[str, Callable] = {
    "join-assoc": lambda o, a, b, c: o.eq(o.join(o.join(a, b), c), o.join(a, o.join(b, c))),
    "seq-assoc": lambda o, a, b, c: o.eq(o.seq(o.seq(a, b), c), o.seq(a, o.seq(b, c))),
    "dist-left": lambda o, a, b, c: o.eq(o.seq(a, o.join(b, c)), o.join(o.seq(a, b), o.seq(a, c))),
    "dist-right": lambda o, a, b, c: o.eq(o.seq(o.join(a, b), c), o.join(o.seq(a, c), o.seq(b, c))),
}


class _ScalarOps:
    def __init__(self, q: Quantale) -> None:
        self.q = q
        self.unit = q.unit
        self.top = q.top
        self.join = q.join
        self.seq = q.seq

    def eq(self, a: Elem, b: Elem) -> bool:
        return a == b

    def leq(self, a: Elem, b: Elem) -> bool:
        return self.join(a, b) == b


class _ArrayOps:
    def __init__(self, q: Quantale, b: BatchOps) -> None:
        self.b = b
        self.unit = b.encode([q.unit])
        self.top = b.encode([q.top])
        self.join = b.join
        self.seq = b.seq
        self.eq = b.eq

    def leq(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.b.eq(self.b.join(x, y), y)


@dataclass(frozen=True)
class LawResult:
    law: str
    passed: bool
    checked: int
    counterexample: tuple | None = None
    mode: str = "exhaustive"


@dataclass(frozen=True)
class LawReport:
    instance: str
    carrier_size: int
    results: tuple[LawResult, ...]
    renderer: Callable[[Elem], str] = field(default=str, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def exhaustive(self) -> bool:
        return all(r.mode == "exhaustive" for r in self.results)

    def failures(self) -> list[str]:
        return [r.law for r in self.results if not r.passed]

    def __getitem__(self, law: str) -> LawResult:
        for r in self.results:
            if r.law == law:
                return r
        raise KeyError(law)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "carrier_size": self.carrier_size,
            "passed": self.passed,
            "laws": [
                {
                    "law": r.law,
                    "passed": r.passed,
                    "mode": r.mode,
                    "checked": r.checked,
                    "counterexample": None
                    if r.counterexample is None
                    else [self.renderer(x) for x in r.counterexample],
                }
                for r in self.results
            ],
        }

    def lines(self) -> list[str]:
        out = [f"laws for {self.instance} ({self.carrier_size} elements)"]
        for r in self.results:
            status = "pass" if r.passed else "FAIL"
            extra = ""
            if r.counterexample is not None:
                extra = "  counterexample: " + ", ".join(self.renderer(x) for x in r.counterexample)
            out.append(f"  {r.law:<12} {status} ({r.mode}, {r.checked} cases){extra}")
        return out


DEFAULT_BUDGET = 10_000

_ARITY = {**{k: 1 for k in _UNARY}, **{k: 2 for k in _BINARY}, **{k: 3 for k in _TERNARY}, "isotonicity": 3}
_LAW_FNS = {**_UNARY, **_BINARY, **_TERNARY}


def check_laws(
    q: Quantale,
    carrier: Sequence[Elem] | None = None,
    budget: int = DEFAULT_BUDGET,
    *,
    exhaustive_limit: int | None = None,
    seed: int = 0,
    vectorize: bool = True,
) -> LawReport:
    """Check every effect-quantale law plus isotonicity over ``carrier``.

    ``carrier`` defaults to the instance's enumeration.  A law whose tuple
    space (carrier size to the law's arity) fits in ``exhaustive_limit`` is
    checked exhaustively; larger spaces are sampled with ``budget`` tuples
    drawn from a generator seeded by ``seed``.  Without a limit every law is
    exhaustive.  Exhaustive counterexamples are the first failing tuple in
    carrier order.

    Isotonicity is checked as monotonicity of seq in each argument, which
    together with transitivity of the derived order is equivalent to the
    four-variable statement.
    """
    if carrier is None:
        if q.elements is None:
            raise UsageError(f"{q.name} has no finite enumeration; pass a carrier")
        carrier = q.elements
    elems = list(carrier)
    for a in elems:
        if not q.owns(a):
            raise UsageError(f"{a!r} is not an element of {q.name}")
    batch = q.batch(elems) if vectorize else None
    checker = _ArrayCheck(q, batch, elems) if batch is not None else _ScalarCheck(q, elems)
    rng = np.random.default_rng(seed)
    n = len(elems)
    results = []
    for law in LAWS:
        arity = _ARITY[law]
        if exhaustive_limit is None or n**arity <= exhaustive_limit:
            results.append(checker.exhaustive(law))
        else:
            idx = rng.integers(0, n, size=(budget, arity))
            results.append(checker.sampled(law, idx))
    return LawReport(q.name, n, tuple(results), q.render)


class _ScalarCheck:
    def __init__(self, q: Quantale, elems: list[Elem]) -> None:
        self.o = _ScalarOps(q)
        self.elems = elems

    def _run(self, law: str, tuples: Iterable[tuple[int, ...]], mode: str) -> LawResult:
        o, elems = self.o, self.elems
        count = 0
        for t in tuples:
            args = [elems[i] for i in t]
            if law == "isotonicity":
                a, b, c = args
                if not o.leq(a, b):
                    continue
                count += 1
                if not o.leq(o.seq(a, c), o.seq(b, c)):
                    return LawResult(law, False, count, (a, b, c, c), mode)
                if not o.leq(o.seq(c, a), o.seq(c, b)):
                    return LawResult(law, False, count, (c, c, a, b), mode)
                continue
            count += 1
            if not _LAW_FNS[law](o, *args):
                return LawResult(law, False, count, tuple(args), mode)
        return LawResult(law, True, count, None, mode)

    def exhaustive(self, law: str) -> LawResult:
        tuples = itertools.product(range(len(self.elems)), repeat=_ARITY[law])
        return self._run(law, tuples, "exhaustive")

    def sampled(self, law: str, idx: np.ndarray) -> LawResult:
        return self._run(law, (tuple(int(v) for v in row) for row in idx), "sampled")


class _ArrayCheck:
    chunk = 1 << 20

    def __init__(self, q: Quantale, batch: BatchOps, elems: list[Elem]) -> None:
        self.o = _ArrayOps(q, batch)
        self.elems = elems
        self.enc = batch.encode(elems)
        self._grid: tuple[np.ndarray, ...] | None = None

    def _mask(self, law: str, *args: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        """Pass mask, and for isotonicity also which side failed."""
        o = self.o
        if law != "isotonicity":
            return _LAW_FNS[law](o, *args), None
        a, b, c = args
        comparable = o.leq(a, b)
        left = o.leq(o.seq(a, c), o.seq(b, c))
        right = o.leq(o.seq(c, a), o.seq(c, b))
        return ~comparable | (left & right), left

    def _iso_ce(self, t: tuple[Elem, ...], left_ok: bool) -> tuple:
        a, b, c = t
        return (a, b, c, c) if not left_ok else (c, c, a, b)

    def exhaustive(self, law: str) -> LawResult:
        enc, elems, n = self.enc, self.elems, len(self.elems)
        arity = _ARITY[law]
        if arity == 1:
            mask, _ = self._mask(law, enc)
            bad = np.flatnonzero(~mask)
            ce = (elems[bad[0]],) if bad.size else None
            return LawResult(law, ce is None, n, ce)
        if arity == 2:
            for i in range(n):
                mask, _ = self._mask(law, enc[:, i : i + 1], enc)
                bad = np.flatnonzero(~mask)
                if bad.size:
                    return LawResult(law, False, i * n + int(bad[0]) + 1, (elems[i], elems[bad[0]]))
            return LawResult(law, True, n * n)
        if self._grid is None:
            gi, gj = np.divmod(np.arange(n * n), n)
            self._grid = (gi, gj, _gather(enc, gi), _gather(enc, gj))
        gi, gj, bj, bk = self._grid
        count = 0
        for i in range(n):
            mask, left = self._mask(law, enc[:, i : i + 1], bj, bk)
            count += n * n
            bad = np.flatnonzero(~mask)
            if bad.size:
                k = int(bad[0])
                t = (elems[i], elems[gi[k]], elems[gj[k]])
                ce = self._iso_ce(t, bool(left[k])) if law == "isotonicity" else t
                return LawResult(law, False, count, ce)
        return LawResult(law, True, count)

    def sampled(self, law: str, idx: np.ndarray) -> LawResult:
        elems = self.elems
        for start in range(0, idx.shape[0], self.chunk):
            block = idx[start : start + self.chunk]
            mask, left = self._mask(law, *(_gather(self.enc, block[:, m]) for m in range(block.shape[1])))
            bad = np.flatnonzero(~mask)
            if bad.size:
                k = int(bad[0])
                t = tuple(elems[int(v)] for v in block[k])
                ce = self._iso_ce(t, bool(left[k])) if law == "isotonicity" else t
                return LawResult(law, False, start + k + 1, ce, "sampled")
        return LawResult(law, True, idx.shape[0], None, "sampled")


def _gather(enc: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(enc[:, idx])
