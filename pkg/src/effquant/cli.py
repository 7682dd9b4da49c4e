"""Command-line entry point.

Exit codes: 0 success or agreement, 1 rejection, law failure or divergence,
2 usage errors such as an unknown instance or an unreadable file.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from collections.abc import Sequence
from pathlib import Path

from effquant.algebra import ERR, ConstructionError, Quantale, UsageError, check_laws, product
from effquant.instances import (
    ATOMICITY,
    LOCKSET,
    POWERSET,
    SET_LOCKSET,
    bounded_carrier,
    broken_atomicity,
    set_bounded_carrier,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CliUsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Instance selection


def _base_instance(name: str, locks: int, mult: int) -> tuple[Quantale, list]:
    names = [f"l{i + 1}" for i in range(locks)]
    match name:
        case "atomicity":
            return ATOMICITY, list(ATOMICITY.elements)
        case "atomicity-broken":
            q = broken_atomicity()
            return q, list(q.elements)
        case "powerset":
            return POWERSET, list(POWERSET.elements)
        case "lockset":
            return LOCKSET, bounded_carrier(names, mult)
        case "lockset-set":
            return SET_LOCKSET, set_bounded_carrier(names)
    raise CliUsageError(f"unknown instance {name!r}")


_ALIASES = {"fq": "lockset*atomicity", "fq-set": "lockset-set*atomicity"}


def resolve_instance(text: str, locks: int = 2, mult: int = 2) -> tuple[Quantale, list]:
    """An instance and a finite carrier; products are written ``a*b``."""
    if locks < 1 or mult < 1:
        raise CliUsageError("--locks and --mult must be positive")
    text = _ALIASES.get(text, text)
    parts = text.split("*")
    q, carrier = _base_instance(parts[0], locks, mult)
    for part in parts[1:]:
        r, rc = _base_instance(part, locks, mult)
        pq = product(q, r)
        seen = {}
        for a, b in itertools.product(carrier, rc):
            x = ERR if a is ERR or b is ERR else pq.make(a, b)
            seen.setdefault(x, None)
        if ERR in seen:
            del seen[ERR]
        q, carrier = pq, [*seen, ERR]
    return q, carrier


def resolve_params(name: str, counting: bool = False):
    from effquant.locking import lock_params

    table = {
        "fq": ("multiset", True),
        "fq-set": ("set", True),
        "lockset": ("multiset", False),
        "lockset-set": ("set", False),
    }
    if name not in table:
        raise CliUsageError(f"unknown language instance {name!r} (choose from {', '.join(table)})")
    fam, atom = table[name]
    return lock_params(fam, atom, counting)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliUsageError(f"cannot read {path}: {exc.strerror}") from None


def _emit(args, data: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(data, indent=2, sort_keys=True, default=str))
    else:
        for ln in lines:
            print(ln)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_laws(args) -> int:
    from effquant.iteration import iterability

    q, carrier = resolve_instance(args.instance, args.locks, args.mult)
    report = check_laws(q, carrier, args.budget, exhaustive_limit=args.exhaustive_limit, seed=args.seed)
    lines = report.lines()
    data = {"laws": report.to_dict()}
    try:
        it = iterability(q, carrier)
    except (ConstructionError, UsageError):
        it = None
    if it is not None and it.p_results:
        for name, res in it.p_results.items():
            if res.passed:
                lines.append(f"  {name} holds")
            else:
                lines.append(f"  {name} flagged: " + ", ".join(q.render(x) for x in res.witness))
        data["star_properties"] = {k: v.passed for k, v in it.p_results.items()}
    ok = report.passed
    if args.bridge:
        from effquant.bridges import round_trip

        rt = round_trip(q) if q.elements is not None else None
        if rt is None:
            raise CliUsageError(f"{q.name} is infinite; the effectoid bridge needs a finite instance")
        lines.extend(rt.lines())
        data["bridge"] = rt.to_dict()
        ok = ok and rt.effectoid.passed
    _emit(args, data, lines)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_iterate(args) -> int:
    from effquant.iteration import ClosureError, closure, iterability

    q, carrier = resolve_instance(args.instance, args.locks, args.mult)
    if args.element is not None:
        try:
            a = q.parse_literal(args.element)
        except (ConstructionError, ValueError) as exc:
            raise CliUsageError(f"cannot read element {args.element!r}: {exc}") from None
        if a not in carrier:
            carrier = [*carrier[:-1], a, carrier[-1]] if carrier and carrier[-1] is ERR else [*carrier, a]
        try:
            s = closure(q, carrier)(a)
        except ClosureError as exc:
            _emit(args, {"element": args.element, "error": str(exc)}, [f"no star: {exc}"])
            return EXIT_FAIL
        _emit(args, {"element": q.render(a), "star": q.render(s)}, [f"{q.render(a)}* = {q.render(s)}"])
        return EXIT_OK
    rep = iterability(q, carrier)
    _emit(args, rep.to_dict(), rep.lines())
    return EXIT_OK if rep.least_element_condition else EXIT_FAIL


def cmd_check(args) -> int:
    from effquant.checker import check_program

    params = resolve_params(args.instance)
    rep = check_program(params, _read(args.file))
    _emit(args, rep.to_dict(), rep.lines())
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_run(args) -> int:
    from effquant.checker import check_program
    from effquant.interp import preservation_harness, run

    params = resolve_params(args.instance, args.counting)
    rep = check_program(params, _read(args.file))
    if not rep.ok:
        _emit(args, rep.to_dict(), rep.lines())
        return EXIT_FAIL
    if rep.program.env:
        raise CliUsageError("only closed programs run; remove the assume headers")
    if args.harness:
        h = preservation_harness(params, rep.program.term, args.fuel)
        _emit(args, h.to_dict(), h.lines())
        return EXIT_OK if h.ok else EXIT_FAIL
    r = run(params, rep.program.term, args.fuel, trace=args.trace)
    d = r.to_dict(params)
    lines = [t.render() for t in r.trace]
    lines.append(f"{r.outcome} after {r.steps} steps; accumulated {d['accumulated']}")
    if d["value"] is not None:
        lines.append(f"value: {d['value']}")
    if r.detail:
        lines.append(r.detail)
    _emit(args, d, lines)
    return EXIT_OK if r.outcome in ("value", "diverged") else EXIT_FAIL


def cmd_cat_check(args) -> int:
    from effquant.cat import parse_cat, unembed_check

    from effquant.lang import ParseError

    try:
        prog = parse_cat(_read(args.file))
    except ParseError as exc:
        _emit(args, {"error": str(exc)}, [f"parse error: {exc}"])
        return EXIT_FAIL
    rep = unembed_check(prog)
    _emit(args, rep.to_dict(), rep.lines())
    return EXIT_OK if rep.outcome == "agree" else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="effquant", description="Effect quantales: laws, iteration, checking, running.")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    sub = p.add_subparsers(dest="command", required=True)

    def bounds(sp):
        sp.add_argument("--locks", type=int, default=2, help="lock names in bounded enumerations")
        sp.add_argument("--mult", type=int, default=2, help="largest lock multiplicity in bounded enumerations")

    sp = sub.add_parser("laws", help="check the quantale laws of an instance")
    sp.add_argument("instance")
    sp.add_argument("--bridge", action="store_true", help="also check the effectoid translation")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--budget", type=int, default=10_000)
    sp.add_argument("--exhaustive-limit", type=int, default=None)
    bounds(sp)
    sp.set_defaults(fn=cmd_laws)

    sp = sub.add_parser("iterate", help="iteration report, or the star of one element")
    sp.add_argument("instance")
    sp.add_argument("element", nargs="?")
    bounds(sp)
    sp.set_defaults(fn=cmd_iterate)

    for name, fn, hlp in (
        ("check", cmd_check, "typecheck a program"),
        ("run", cmd_run, "typecheck and interpret a closed program"),
    ):
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("file")
        sp.add_argument("--instance", default="fq")
        if name == "run":
            sp.add_argument("--fuel", type=int, default=100_000)
            sp.add_argument("--trace", action="store_true")
            sp.add_argument("--harness", action="store_true", help="re-type every step")
            sp.add_argument("--counting", action="store_true", help="counting lock state")
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("cat-check", help="atomicity oracle, translation and differential check")
    sp.add_argument("file")
    sp.set_defaults(fn=cmd_cat_check)

    for sp in sub.choices.values():
        if not any(a.dest == "json" for a in sp._actions):
            sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="machine-readable output")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except CliUsageError as exc:
        print(f"effquant: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
