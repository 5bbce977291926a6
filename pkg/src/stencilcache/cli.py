"""Command line entry point: ``stencilcache <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 search failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .cache_sim import CSV_COLUMNS, CacheConfig
from .experiments import (BOUNDS_COLUMNS, CORRELATE_COLUMNS, SWEEP_COLUMNS, SweepSpec, advise_padding,
                          bounds_report, correlate_map, correlate_summary, padding_effect, sweep, to_csv)
from .grid import GridShape, Stencil, star_stencil
from .lattice import SearchFailed, classify, construct_favorable_dims, interference_lattice
from .traversal import UnfavorableLatticeError, make_plan, multi_rhs_layout, run_stencil

EXIT_OK, EXIT_INPUT, EXIT_SEARCH = 0, 2, 3

log = logging.getLogger("stencilcache")


def parse_range(text: str) -> range:
    """``"40:100"`` is ``range(40, 100)``; a bare integer is a single value."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        r = range(int(lo), int(hi))
    else:
        r = range(int(text), int(text) + 1)
    if len(r) == 0:
        raise ValueError(f"empty range {text!r}")
    return r


def parse_ranges(text: str) -> tuple[range, ...]:
    return tuple(parse_range(part) for part in text.lower().split("x"))


def table(header, rows) -> str:
    rows = [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(str(h)), *(len(r[i]) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
    lines = ["  ".join(str(h).rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines) + "\n"


def emit(args, header, rows):
    text = to_csv(header, rows) if args.csv else table(header, rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def stencil_for(args, d: int) -> Stencil:
    if args.stencil is None:
        return star_stencil(d, 2)
    st = Stencil.parse(args.stencil)
    if st.d != d:
        raise ValueError(f"stencil is {st.d}-dimensional but the grid is {d}-dimensional")
    return st


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args) -> int:
    shape = GridShape.parse(args.shape)
    st = stencil_for(args, shape.d)
    cfg = args.cache
    lattice = interference_lattice(shape, cfg.size)
    plan = make_plan(args.order, shape, st, cfg, lattice, force=args.force)
    layout = multi_rhs_layout(lattice, st, cfg, args.rhs) if args.rhs > 1 else None
    if layout is not None and not layout.assumption_ok:
        log.warning("tiles are thinner than the stencil diameter over the associativity")
    if plan.meta.get("forced"):
        log.warning("unfavorable lattice; cache-fitting order forced")
    report = run_stencil(plan, st, cfg, layout=layout, include_q=args.include_q).report
    emit(args, CSV_COLUMNS, report.rows())
    return EXIT_OK


def cmd_sweep(args) -> int:
    ranges = parse_ranges(args.dims)
    st = stencil_for(args, len(ranges))
    spec = SweepSpec(ranges, args.cache, st, tuple(args.orders.split(",")), args.rhs, args.include_q, args.force)
    rows = sweep(spec)
    for r in rows:
        if r.note:
            log.warning("%s %s: %s", r.shape, r.order, r.note)
    emit(args, SWEEP_COLUMNS, (r.as_tuple() for r in rows))
    return EXIT_OK


def cmd_correlate(args) -> int:
    rows = correlate_map(parse_range(args.n1), parse_range(args.n2), args.n3, args.cache.size, args.threshold)
    emit(args, CORRELATE_COLUMNS, (r.as_tuple() for r in rows))
    summary = correlate_summary(rows)
    print(" ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in summary.items()),
          file=sys.stderr)
    return EXIT_OK


def cmd_advise_pad(args) -> int:
    shape = GridShape.parse(args.shape)
    st = stencil_for(args, shape.d)
    adv = advise_padding(shape, args.cache.size, st, args.cache, args.max_pad)
    header = ["original", "padded", "added", "total_added", "shortest_vector", "shortest_len", "pencils"]
    row = [str(adv.original), str(adv.padded), "x".join(map(str, adv.added)), adv.total_added,
           "(" + ",".join(map(str, adv.shortest_vector)) + ")", f"{adv.shortest_len:.6g}", adv.pencils]
    if args.simulate:
        before, after = padding_effect(adv, st, args.cache)
        header += ["misses_before", "misses_after"]
        row += [before, after]
    emit(args, header, [row])
    return EXIT_OK


def cmd_bounds(args) -> int:
    shape = GridShape.parse(args.shape)
    st = stencil_for(args, shape.d)
    rows = bounds_report(shape, args.cache.size, st, args.rhs, args.cache)
    emit(args, BOUNDS_COLUMNS, (r.as_tuple() for r in rows))
    return EXIT_OK


def cmd_lattice(args) -> int:
    if args.construct:
        shape = construct_favorable_dims(args.cache.size, args.construct, args.length, seed=args.seed)
    else:
        if not args.shape:
            raise ValueError("lattice needs --shape or --construct")
        shape = GridShape.parse(args.shape)
    st = stencil_for(args, shape.d)
    lat = interference_lattice(shape, args.cache.size)
    verdict = classify(lat, st, args.cache)
    vec = lambda v: "(" + ",".join(map(str, v)) + ")"  # noqa: E731
    rows = [("shape", str(shape)), ("S", lat.cache_size)]
    rows += [(f"basis[{i}]", vec(v)) for i, v in enumerate(lat.canonical_basis)]
    rows += [(f"reduced[{i}]", vec(v)) for i, v in enumerate(lat.reduced.vectors)]
    rows += [
        ("shortest_vector", vec(verdict.shortest_vector)),
        ("shortest_len", f"{verdict.shortest_len:.6g}"),
        ("eccentricity", f"{lat.reduced.eccentricity:.6g}"),
        ("threshold", f"{verdict.threshold:.6g}"),
        ("verdict", "unfavorable" if verdict.unfavorable else "favorable"),
    ]
    emit(args, ("field", "value"), rows)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cache", type=CacheConfig.parse, default=CacheConfig(1, 4096, 1),
                        help="associativity,sets,line words (default 1,4096,1)")
    common.add_argument("--csv", action="store_true", help="CSV instead of an aligned table")
    common.add_argument("--out", help="write output to FILE")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized searches")
    common.add_argument("--force", action="store_true",
                        help="run unfavorable cache-fitting orders and sweeps over 10^6 points")
    common.add_argument("--stencil", help='"star:d=3,r=2" or a file of offsets (default star, r=2)')
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="stencilcache", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate one traversal")
    p.add_argument("--shape", required=True, help="e.g. 45x91x100")
    p.add_argument("--order", choices=["natural", "strided", "fit"], default="natural")
    p.add_argument("--rhs", type=int, default=1)
    p.add_argument("--include-q", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="simulate a range of grid shapes")
    p.add_argument("--dims", required=True, help="per-dimension ranges, e.g. 40:100x91x20")
    p.add_argument("--orders", default="natural,fit")
    p.add_argument("--rhs", type=int, default=1)
    p.add_argument("--include-q", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("correlate", parents=[common], help="map of short interference vectors")
    p.add_argument("--n1", default="40:100")
    p.add_argument("--n2", default="40:100")
    p.add_argument("--n3", type=int, default=100)
    p.add_argument("--threshold", type=int, default=8, help="L1 norm below which a vector is short")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("advise-pad", parents=[common], help="smallest padding giving a favorable lattice")
    p.add_argument("--shape", required=True)
    p.add_argument("--max-pad", type=int, default=8)
    p.add_argument("--simulate", action="store_true", help="also report natural-order misses before and after")
    p.set_defaults(func=cmd_advise_pad)

    p = sub.add_parser("bounds", parents=[common], help="lower and upper load bounds")
    p.add_argument("--shape", required=True)
    p.add_argument("--rhs", type=int, default=1)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("lattice", parents=[common], help="interference lattice of a grid")
    p.add_argument("--shape")
    p.add_argument("--construct", type=int, metavar="D", help="search a favorable D-dimensional grid instead")
    p.add_argument("--length", type=float, default=8.0, help="target shortest length for --construct")
    p.set_defaults(func=cmd_lattice)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except SearchFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    except (ValueError, OverflowError, UnfavorableLatticeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
