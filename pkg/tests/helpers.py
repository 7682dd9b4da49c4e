"""Shared generators for the test suite."""

from __future__ import annotations

import random

from effquant.effects import EffExpr, Join, Lit, Seq, Star


def random_ground(rng: random.Random, carrier, depth: int, star: bool = True) -> EffExpr:
    """A random variable-free expression with at most ``depth`` nested operators."""
    if depth == 0 or rng.random() < 0.25:
        return Lit(rng.choice(carrier))
    pick = rng.randrange(3 if star else 2)
    if pick == 0:
        return Join(random_ground(rng, carrier, depth - 1, star), random_ground(rng, carrier, depth - 1, star))
    if pick == 1:
        return Seq(random_ground(rng, carrier, depth - 1, star), random_ground(rng, carrier, depth - 1, star))
    return Star(random_ground(rng, carrier, depth - 1, star))


def expr_depth(e: EffExpr) -> int:
    match e:
        case Lit():
            return 0
        case Join(a, b) | Seq(a, b):
            return 1 + max(expr_depth(a), expr_depth(b))
        case Star(b):
            return 1 + expr_depth(b)
    return 0
