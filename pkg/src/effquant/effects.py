"""Symbolic effect expressions, normalization and a sound subeffect test.

Expressions mix literals of one quantale with effect variables, joins, seqs
and stars.  :func:`normalize` rewrites them into a join of sequences using
only laws that hold in every effect quantale, so two expressions with equal
normal forms denote equal effects under every assignment of the variables.
"""

from __future__ import annotations

import enum
import re
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass
from functools import reduce

from effquant.algebra import ConstructionError, Elem, Quantale, UsageError, leq

# ---------------------------------------------------------------------------
# Expressions


class EffExpr:
    __slots__ = ()

    def __or__(self, other: EffExpr) -> EffExpr:
        return Join(self, other)

    def __rshift__(self, other: EffExpr) -> EffExpr:
        return Seq(self, other)


@dataclass(frozen=True)
class Lit(EffExpr):
    value: Elem


@dataclass(frozen=True)
class EVar(EffExpr):
    name: str


@dataclass(frozen=True)
class Join(EffExpr):
    left: EffExpr
    right: EffExpr


@dataclass(frozen=True)
class Seq(EffExpr):
    left: EffExpr
    right: EffExpr


@dataclass(frozen=True)
class Star(EffExpr):
    body: EffExpr


def seq_all(parts: Iterable[EffExpr], unit: Elem) -> EffExpr:
    parts = list(parts)
    if not parts:
        return Lit(unit)
    return reduce(Seq, parts)


def join_all(parts: Iterable[EffExpr]) -> EffExpr:
    parts = list(parts)
    if not parts:
        raise ConstructionError("empty join has no value (effect quantales need not have a bottom)")
    return reduce(Join, parts)


def effect_vars(e: EffExpr) -> frozenset[str]:
    match e:
        case EVar(n):
            return frozenset({n})
        case Lit():
            return frozenset()
        case Join(a, b) | Seq(a, b):
            return effect_vars(a) | effect_vars(b)
        case Star(b):
            return effect_vars(b)
    raise UsageError(f"not an effect expression: {e!r}")


def literal_names(q: Quantale, e: EffExpr) -> frozenset[str]:
    """Program-level names mentioned by literal payloads."""
    match e:
        case Lit(v):
            return q.names(v)
        case EVar():
            return frozenset()
        case Join(a, b) | Seq(a, b):
            return literal_names(q, a) | literal_names(q, b)
        case Star(b):
            return literal_names(q, b)
    raise UsageError(f"not an effect expression: {e!r}")


def is_ground(e: EffExpr) -> bool:
    return not effect_vars(e)


def evaluate(q: Quantale, e: EffExpr, env: Mapping[str, Elem] | None = None) -> Elem:
    """Fold the instance operations over ``e``; variables are looked up in ``env``."""
    match e:
        case Lit(v):
            q._check(v)
            return v
        case EVar(n):
            if env is None or n not in env:
                raise UsageError(f"effect variable {n!r} has no value")
            return env[n]
        case Join(a, b):
            return q.join(evaluate(q, a, env), evaluate(q, b, env))
        case Seq(a, b):
            return q.seq(evaluate(q, a, env), evaluate(q, b, env))
        case Star(b):
            return q.star(evaluate(q, b, env))
    raise UsageError(f"not an effect expression: {e!r}")


def subst_var(e: EffExpr, name: str, by: EffExpr) -> EffExpr:
    """Replace effect variable ``name``; effects have no binders so nothing can be captured."""
    match e:
        case EVar(n):
            return by if n == name else e
        case Lit():
            return e
        case Join(a, b):
            return Join(subst_var(a, name, by), subst_var(b, name, by))
        case Seq(a, b):
            return Seq(subst_var(a, name, by), subst_var(b, name, by))
        case Star(b):
            return Star(subst_var(b, name, by))
    raise UsageError(f"not an effect expression: {e!r}")


def map_literals(e: EffExpr, fn: Callable[[Elem], Elem]) -> EffExpr:
    match e:
        case Lit(v):
            return Lit(fn(v))
        case EVar():
            return e
        case Join(a, b):
            return Join(map_literals(a, fn), map_literals(b, fn))
        case Seq(a, b):
            return Seq(map_literals(a, fn), map_literals(b, fn))
        case Star(b):
            return Star(map_literals(b, fn))
    raise UsageError(f"not an effect expression: {e!r}")


def rename_name(q: Quantale, e: EffExpr, old: str, new: str) -> EffExpr:
    """Substitute the value ``new`` for the name ``old`` inside literals.

    When ``new`` is already mentioned this is the collapse homomorphism of the
    indexed family, so claims on the two names are merged; otherwise it is a
    plain renaming.
    """
    if old == new:
        return e
    return map_literals(e, lambda v: q.rename(v, old, new))


def subst_effect(q: Quantale, e: EffExpr, binding: Mapping[str, EffExpr | str]) -> EffExpr:
    """Apply several substitutions in order.

    A value of type :class:`EffExpr` replaces an effect variable; a string is a
    program value name substituted into literal payloads.
    """
    for key, val in binding.items():
        if isinstance(val, EffExpr):
            e = subst_var(e, key, val)
        else:
            e = rename_name(q, e, key, val)
    return e


# ---------------------------------------------------------------------------
# Normal forms
#
# A normal form is TOP or a sorted, duplicate-free tuple of alternatives.
# Each alternative is a tuple of atoms; adjacent literal atoms are fused and
# unit literals dropped, so the empty tuple stands for the unit.


@dataclass(frozen=True)
class LitAtom:
    value: Elem


@dataclass(frozen=True)
class VarAtom:
    name: str


@dataclass(frozen=True)
class StarAtom:
    body: NormalForm


Atom = LitAtom | VarAtom | StarAtom
Alt = tuple  # tuple[Atom, ...]


@dataclass(frozen=True)
class NormalForm:
    alts: tuple[Alt, ...] | None  # None is TOP

    @property
    def is_top(self) -> bool:
        return self.alts is None

    @property
    def is_ground(self) -> bool:
        return self.alts is not None and all(all(isinstance(a, LitAtom) for a in alt) for alt in self.alts)


TOP_NF = NormalForm(None)


class Normalizer:
    """Normalization relative to one quantale instance."""

    def __init__(self, q: Quantale) -> None:
        self.q = q

    # Canonical ordering -----------------------------------------------------
    def atom_key(self, a: Atom) -> tuple:
        match a:
            case LitAtom(v):
                return (0, self.q.render(v))
            case VarAtom(n):
                return (1, n)
            case StarAtom(nf):
                return (2, self.nf_key(nf))
        raise AssertionError(a)

    def nf_key(self, nf: NormalForm) -> tuple:
        if nf.alts is None:
            return (0,)
        return (1, tuple(tuple(self.atom_key(a) for a in alt) for alt in nf.alts))

    # Construction helpers ---------------------------------------------------
    def lit_nf(self, v: Elem) -> NormalForm:
        q = self.q
        if v == q.top:
            return TOP_NF
        if v == q.unit:
            return NormalForm(((),))
        return NormalForm(((LitAtom(v),),))

    def concat(self, x: Alt, y: Alt) -> Alt | None:
        """Concatenate two alternatives, fusing literals at the seam.  None is TOP."""
        if x and y and isinstance(x[-1], LitAtom) and isinstance(y[0], LitAtom):
            v = self.q.seq(x[-1].value, y[0].value)
            if v == self.q.top:
                return None
            if v == self.q.unit:
                return self.concat(x[:-1], y[1:])
            return x[:-1] + (LitAtom(v),) + y[1:]
        if x and y and isinstance(x[-1], StarAtom) and x[-1] == y[0]:
            # x* ; x* = x*, since stars are freely iterable.
            return x + y[1:]
        return x + y

    def make(self, alts: Iterable[Alt]) -> NormalForm:
        alts = set(alts)
        changed = True
        while changed:
            changed = False
            # Merge all purely literal alternatives (including the unit) by join.
            ground = [a for a in alts if all(isinstance(t, LitAtom) for t in a) and len(a) <= 1]
            if len(ground) > 1:
                vals = [a[0].value if a else self.q.unit for a in ground]
                v = reduce(self.q.join, vals)
                if v == self.q.top:
                    return TOP_NF
                alts -= set(ground)
                alts.add(() if v == self.q.unit else (LitAtom(v),))
                changed = True
            # A lone star absorbs the unit and everything below its body.
            for alt in list(alts):
                if len(alt) == 1 and isinstance(alt[0], StarAtom):
                    inner = set(alt[0].body.alts)
                    for other in list(alts):
                        if other == alt or other not in alts:
                            continue
                        if (
                            other == ()
                            or other in inner
                            or (len(other) == 1 and isinstance(other[0], StarAtom) and set(other[0].body.alts) <= inner)
                        ):
                            alts.discard(other)
                            changed = True
        ordered = sorted(alts, key=lambda alt: tuple(self.atom_key(a) for a in alt))
        return NormalForm(tuple(ordered))

    # Rewriting --------------------------------------------------------------
    def join(self, x: NormalForm, y: NormalForm) -> NormalForm:
        if x.is_top or y.is_top:
            return TOP_NF
        return self.make(x.alts + y.alts)

    def seq(self, x: NormalForm, y: NormalForm) -> NormalForm:
        if x.is_top or y.is_top:
            return TOP_NF
        out = []
        for a in x.alts:
            for b in y.alts:
                c = self.concat(a, b)
                if c is None:
                    return TOP_NF
                out.append(c)
        return self.make(out)

    def star(self, x: NormalForm) -> NormalForm:
        q = self.q
        op = q.closure()
        if op is None:
            raise ConstructionError(f"{q.name} has no closure operator; star is ill-kinded")
        if x.is_top:
            return TOP_NF
        if x.is_ground:
            # A ground normal form is a single literal or the unit.
            (alt,) = x.alts
            return self.lit_nf(op.star(alt[0].value if alt else q.unit))
        # (e ⊔ I)* = e*: both are the least iterable element above e and I.
        alts = tuple(a for a in x.alts if a != ())
        if len(alts) == 1 and len(alts[0]) == 1 and isinstance(alts[0][0], StarAtom):
            return NormalForm(alts)
        body = self.make(alts)
        return NormalForm(((StarAtom(body),),))

    def normalize(self, e: EffExpr) -> NormalForm:
        match e:
            case Lit(v):
                self.q._check(v)
                return self.lit_nf(v)
            case EVar(n):
                return NormalForm(((VarAtom(n),),))
            case Join(a, b):
                return self.join(self.normalize(a), self.normalize(b))
            case Seq(a, b):
                return self.seq(self.normalize(a), self.normalize(b))
            case Star(b):
                return self.star(self.normalize(b))
        raise UsageError(f"not an effect expression: {e!r}")


def normalize(q: Quantale, e: EffExpr) -> NormalForm:
    return Normalizer(q).normalize(e)


def to_expr(q: Quantale, nf: NormalForm) -> EffExpr:
    """Read a normal form back as an expression."""
    if nf.is_top:
        return Lit(q.top)

    def atom(a: Atom) -> EffExpr:
        match a:
            case LitAtom(v):
                return Lit(v)
            case VarAtom(n):
                return EVar(n)
            case StarAtom(b):
                return Star(to_expr(q, b))
        raise AssertionError(a)

    return join_all(seq_all((atom(a) for a in alt), q.unit) for alt in nf.alts)


def simplify(q: Quantale, e: EffExpr) -> EffExpr:
    return to_expr(q, normalize(q, e))


def ground_value(q: Quantale, e: EffExpr) -> Elem | None:
    """The element denoted by ``e`` if it normalizes to a ground form, else None."""
    nf = normalize(q, e)
    if nf.is_top:
        return q.top
    if not nf.is_ground:
        return None
    (alt,) = nf.alts
    return alt[0].value if alt else q.unit


class Verdict(enum.Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


def subeffect(q: Quantale, e1: EffExpr, e2: EffExpr) -> Verdict:
    """Decide ``e1 ⊑ e2`` soundly: YES only if it holds under every assignment."""
    n = Normalizer(q)
    n2 = n.normalize(e2)
    if n.join(n.normalize(e1), n2) == n2:
        return Verdict.YES
    if is_ground(e1) and is_ground(e2):
        return Verdict.YES if leq(q, evaluate(q, e1), evaluate(q, e2)) else Verdict.NO
    return Verdict.UNKNOWN


def effect_equal(q: Quantale, e1: EffExpr, e2: EffExpr) -> bool:
    """Sound equality: equal normal forms."""
    n = Normalizer(q)
    return n.normalize(e1) == n.normalize(e2)


# ---------------------------------------------------------------------------
# Rendering


def render_infix(q: Quantale, e: EffExpr) -> str:
    """Human-readable infix form: ``|`` for join, ``;`` for seq, postfix ``*``."""

    def go(e: EffExpr, prec: int) -> str:
        match e:
            case Lit(v):
                return "eff{" + q.render(v) + "}"
            case EVar(n):
                return n
            case Join(a, b):
                s = f"{go(a, 0)} | {go(b, 0)}"
                return f"({s})" if prec > 0 else s
            case Seq(a, b):
                s = f"{go(a, 1)} ; {go(b, 1)}"
                return f"({s})" if prec > 1 else s
            case Star(b):
                return go(b, 2) + "*"
        raise UsageError(f"not an effect expression: {e!r}")

    return go(e, 0)


def render_nf(q: Quantale, nf: NormalForm) -> str:
    return render_infix(q, to_expr(q, nf))


def render_sexpr(q: Quantale, e: EffExpr) -> str:
    match e:
        case Lit(v):
            return "eff{" + q.render(v) + "}"
        case EVar(n):
            return n
        case Join(a, b):
            return f"(join {render_sexpr(q, a)} {render_sexpr(q, b)})"
        case Seq(a, b):
            return f"(seq {render_sexpr(q, a)} {render_sexpr(q, b)})"
        case Star(b):
            return f"(star {render_sexpr(q, b)})"
    raise UsageError(f"not an effect expression: {e!r}")


# ---------------------------------------------------------------------------
# Infix parsing

_IDENT = re.compile(r"[A-Za-z_][\w#.']*")


class EffectSyntaxError(ValueError):
    def __init__(self, message: str, pos: int) -> None:
        super().__init__(f"{message} at offset {pos}")
        self.pos = pos


def read_literal_text(text: str, i: int) -> tuple[str, int]:
    """Given ``text[i:]`` starting with ``eff{``, return the braced body and the end index."""
    j = i + 4
    depth = 1
    while j < len(text):
        c = text[j]
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return text[i + 4 : j], j + 1
        j += 1
    raise EffectSyntaxError("unterminated eff{...} literal", i)


def parse_literal(q: Quantale, body: str) -> Elem:
    body = body.strip()
    if body in ("I", ""):
        return q.unit
    if body in ("T", "⊤"):
        return q.top
    return q.parse_literal(body)


def _tokens(text: str) -> list[tuple[str, str, int]]:
    out = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif text.startswith("eff{", i):
            body, j = read_literal_text(text, i)
            out.append(("lit", body, i))
            i = j
        elif c in "|;*()":
            out.append((c, c, i))
            i += 1
        else:
            m = _IDENT.match(text, i)
            if not m:
                raise EffectSyntaxError(f"unexpected character {c!r}", i)
            out.append(("id", m.group(), i))
            i = m.end()
    out.append(("end", "", len(text)))
    return out


def parse_effect(q: Quantale, text: str) -> EffExpr:
    """Parse ``a | b``, ``a ; b``, ``a*``, parentheses, ``eff{...}`` and variables."""
    toks = _tokens(text)
    pos = 0

    def peek() -> str:
        return toks[pos][0]

    def take(kind: str) -> tuple[str, str, int]:
        nonlocal pos
        t = toks[pos]
        if t[0] != kind:
            raise EffectSyntaxError(f"expected {kind!r}, found {t[1]!r}", t[2])
        pos += 1
        return t

    def join_level() -> EffExpr:
        e = seq_level()
        while peek() == "|":
            take("|")
            e = Join(e, seq_level())
        return e

    def seq_level() -> EffExpr:
        e = postfix()
        while peek() == ";":
            take(";")
            e = Seq(e, postfix())
        return e

    def postfix() -> EffExpr:
        e = primary()
        while peek() == "*":
            take("*")
            e = Star(e)
        return e

    def primary() -> EffExpr:
        kind, val, at = toks[pos]
        if kind == "lit":
            take("lit")
            try:
                return Lit(parse_literal(q, val))
            except ConstructionError as exc:
                raise EffectSyntaxError(str(exc), at) from None
        if kind == "id":
            take("id")
            return EVar(val)
        if kind == "(":
            take("(")
            e = join_level()
            take(")")
            return e
        raise EffectSyntaxError(f"unexpected {val or 'end of input'!r}", at)

    e = join_level()
    take("end")
    return e
