"""Iteration derived from sequencing.

The freely iterable elements of a quantale are those with ``a ; a = a``.  The
iteration operator sends ``x`` to the least freely iterable element above both
``x`` and the unit; when every such upper set has a least element this is a
closure operator.  The stronger requirement that the freely iterable elements
be closed under joins is reported separately, since it only governs whether
star distributes over join (P4).
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from effquant.algebra import ConstructionError, Elem, Quantale, UsageError, leq


class ClosureError(ConstructionError):
    """Some ``x`` has no least freely iterable element above it and the unit."""

    def __init__(self, message: str, witness: Elem) -> None:
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class AnalyticSet:
    """A possibly infinite set of freely iterable elements given by predicate."""

    q: Quantale

    def __contains__(self, a: Elem) -> bool:
        return self.q.owns(a) and self.q.is_freely_iterable(a)


def _carrier(q: Quantale, carrier: Sequence[Elem] | None) -> list[Elem] | None:
    if carrier is not None:
        elems = list(carrier)
        for a in elems:
            if not q.owns(a):
                raise UsageError(f"{a!r} is not an element of {q.name}")
        return elems
    if q.elements is not None:
        return list(q.elements)
    return None


def freely_iterable(q: Quantale, carrier: Sequence[Elem] | None = None) -> frozenset | AnalyticSet:
    """``{a | a ; a = a}`` over the carrier, or a predicate for infinite instances."""
    elems = _carrier(q, carrier)
    if elems is not None:
        return frozenset(a for a in elems if q.seq(a, a) == a)
    if q.has_analytic_star:
        return AnalyticSet(q)
    raise UsageError(f"{q.name} is infinite and has no analytic iterability predicate")


@dataclass(frozen=True)
class ClosureOperator:
    q: Quantale
    fn: Callable[[Elem], Elem] = field(repr=False)
    kind: str = "generic"

    def star(self, a: Elem) -> Elem:
        if not self.q.owns(a):
            raise UsageError(f"{a!r} is not an element of {self.q.name}")
        return self.fn(a)

    __call__ = star


def _least(q: Quantale, cands: list[Elem]) -> Elem | None:
    for c in cands:
        if all(leq(q, c, d) for d in cands):
            return c
    return None


def generic_star_table(q: Quantale, elems: Sequence[Elem]) -> dict[Elem, Elem]:
    """``min(x↑ ∩ I↑ ∩ Iter)`` for each carrier element, by filtering the carrier."""
    closed = [a for a in elems if q.seq(a, a) == a and leq(q, q.unit, a)]
    table: dict[Elem, Elem] = {}
    for x in elems:
        least = _least(q, [c for c in closed if leq(q, x, c)])
        if least is None:
            raise ClosureError(f"{q.render(x)} has no least iterable element above it", x)
        table[x] = least
    return table


def closure(q: Quantale, carrier: Sequence[Elem] | None = None) -> ClosureOperator:
    """The free closure operator of ``q``.

    Finite instances (or an explicit carrier) use the generic construction;
    infinite instances fall back to their registered analytic star.
    """
    elems = _carrier(q, carrier)
    if elems is None:
        if not q.has_analytic_star:
            raise ConstructionError(f"{q.name} is infinite and registers no analytic star")
        return ClosureOperator(q, q.analytic_star, "analytic")
    table = generic_star_table(q, elems)

    def star(a: Elem) -> Elem:
        try:
            return table[a]
        except KeyError:
            raise UsageError(f"{q.render(a)} lies outside the enumerated carrier") from None

    return ClosureOperator(q, star, "generic")


# ---------------------------------------------------------------------------
# Property suite


@dataclass(frozen=True)
class PropResult:
    name: str
    passed: bool
    witness: tuple | None = None


P_NAMES = ("P1", "P2", "P3", "P4", "P5")


def check_star_properties(
    q: Quantale, star: Callable[[Elem], Elem], carrier: Sequence[Elem] | None = None
) -> dict[str, PropResult]:
    """P1 extensive, P2 absorbs one more step, P3 idempotent, P4 distributes over join, P5 above unit."""
    elems = _carrier(q, carrier)
    if elems is None:
        raise UsageError(f"{q.name} needs a carrier for the star property suite")
    stars = {a: star(a) for a in elems}

    def first(pred, tuples) -> PropResult | None:
        for t in tuples:
            if not pred(*t):
                return t
        return None

    def p2(e: Elem) -> bool:
        s = stars[e]
        return leq(q, q.seq(e, s), s) and leq(q, q.seq(s, e), s)

    def p4(e: Elem, f: Elem) -> bool:
        j = q.join(e, f)
        sj = stars[j] if j in stars else star(j)
        return sj == q.join(stars[e], stars[f])

    single = [(a,) for a in elems]
    checks = {
        "P1": (lambda e: leq(q, e, stars[e]), single),
        "P2": (p2, single),
        "P3": (lambda e: star(stars[e]) == stars[e], single),
        "P4": (p4, itertools.product(elems, repeat=2)),
        "P5": (lambda e: leq(q, q.unit, stars[e]), single),
    }
    out = {}
    for name, (pred, tuples) in checks.items():
        w = first(pred, tuples)
        out[name] = PropResult(name, w is None, w)
    return out


def closure_axioms(
    q: Quantale, star: Callable[[Elem], Elem], carrier: Sequence[Elem] | None = None
) -> dict[str, PropResult]:
    """Extensive, idempotent and monotone, each with a first witness on failure."""
    elems = _carrier(q, carrier)
    if elems is None:
        raise UsageError(f"{q.name} needs a carrier for the closure axioms")
    stars = {a: star(a) for a in elems}
    out = {}
    ext = next(((a,) for a in elems if not leq(q, a, stars[a])), None)
    out["extensive"] = PropResult("extensive", ext is None, ext)
    idem = next(((a,) for a in elems if star(stars[a]) != stars[a]), None)
    out["idempotent"] = PropResult("idempotent", idem is None, idem)
    mono = next(
        ((a, b) for a, b in itertools.product(elems, repeat=2) if leq(q, a, b) and not leq(q, stars[a], stars[b])),
        None,
    )
    out["monotone"] = PropResult("monotone", mono is None, mono)
    return out


# ---------------------------------------------------------------------------
# Iterability report


@dataclass(frozen=True)
class IterReport:
    instance: str
    iter_set: tuple[Elem, ...]
    least_element_condition: bool
    least_element_witness: Elem | None
    join_closed: bool
    join_witness: tuple[Elem, Elem] | None
    stars: dict = field(default_factory=dict)
    p_results: dict[str, PropResult] = field(default_factory=dict)
    renderer: Callable[[Elem], str] = field(default=str, repr=False, compare=False)

    @property
    def iterable(self) -> bool:
        """Iterable in the strong sense: least elements exist and Iter is join-closed."""
        return self.least_element_condition and self.join_closed

    def to_dict(self) -> dict:
        r = self.renderer

        def rw(w):
            return None if w is None else [r(x) for x in w]

        return {
            "instance": self.instance,
            "iter_set": [r(a) for a in self.iter_set],
            "least_element_condition": self.least_element_condition,
            "least_element_witness": None if self.least_element_witness is None else r(self.least_element_witness),
            "join_closed": self.join_closed,
            "join_witness": rw(self.join_witness),
            "stars": {r(a): r(b) for a, b in self.stars.items()},
            "properties": {k: {"passed": v.passed, "witness": rw(v.witness)} for k, v in self.p_results.items()},
        }

    def lines(self) -> list[str]:
        r = self.renderer
        out = [f"iteration for {self.instance}"]
        out.append("  Iter = {" + ", ".join(r(a) for a in self.iter_set) + "}")
        if self.least_element_condition:
            out.append("  least-element condition: holds")
        else:
            out.append(f"  least-element condition: FAILS at {r(self.least_element_witness)}")
        if self.join_closed:
            out.append("  Iter join-closed: yes")
        else:
            a, b = self.join_witness
            out.append(f"  Iter join-closed: NO ({r(a)} | {r(b)} is not freely iterable)")
        for a, s in self.stars.items():
            out.append(f"  {r(a)}* = {r(s)}")
        for name, res in self.p_results.items():
            extra = "" if res.passed else "  witness: " + ", ".join(r(x) for x in res.witness)
            out.append(f"  {name} {'pass' if res.passed else 'FAIL'}{extra}")
        return out


def iterability(q: Quantale, carrier: Sequence[Elem] | None = None) -> IterReport:
    elems = _carrier(q, carrier)
    if elems is None:
        raise UsageError(f"{q.name} is infinite; pass a bounded carrier")
    iters = [a for a in elems if q.seq(a, a) == a]
    iter_members = set(iters)
    join_w = None
    for a, b in itertools.combinations(iters, 2):
        j = q.join(a, b)
        if j not in iter_members and q.seq(j, j) != j:
            join_w = (a, b)
            break
    least_w = None
    stars: dict = {}
    props: dict = {}
    try:
        op = closure(q, elems)
    except ClosureError as exc:
        least_w = exc.witness
    else:
        stars = {a: op(a) for a in elems}
        props = check_star_properties(q, op, elems)
    return IterReport(q.name, tuple(iters), least_w is None, least_w, join_w is None, join_w, stars, props, q.render)
