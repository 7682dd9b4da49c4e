"""Effect quantales: algebra, iteration, and a generic sequential effect system."""

from effquant.algebra import ERR, ConstructionError, Quantale, UsageError, check_laws, leq, product
from effquant.instances import ATOMICITY, FQ, LOCKSET, POWERSET, SET_FQ, SET_LOCKSET, Atomicity
from effquant.iteration import closure, iterability

__all__ = [
    "ATOMICITY",
    "Atomicity",
    "ConstructionError",
    "ERR",
    "FQ",
    "LOCKSET",
    "POWERSET",
    "Quantale",
    "SET_FQ",
    "SET_LOCKSET",
    "UsageError",
    "check_laws",
    "closure",
    "iterability",
    "leq",
    "product",
]
