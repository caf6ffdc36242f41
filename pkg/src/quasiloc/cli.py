"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 a mathematical
precondition failed (for example a schedule the chain cannot meet).
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import higson as hg
from . import io as qio
from .approximation import ApproximationError, approximate, approximate_multicolor, nearest_band
from .decomposition import DecompositionError, build_chain, decompose_zd, verify_chain
from .metric_space import SpaceError, build_space, graph, path_graph, zd_box
from .operators import (
    OperatorError,
    as_contraction,
    eps_prop_lower,
    eps_prop_upper,
    op_norm,
    random_decay_operator,
)
from .suites import SUITES, run_suite

EXIT_OK, EXIT_USAGE, EXIT_MATH = 0, 2, 3


class UsageError(Exception):
    pass


class MathError(Exception):
    pass


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _emit(report: dict, out: str | None) -> None:
    report = dict(report, timestamp=_timestamp())
    text = qio.dump_json(report)
    if out:
        qio.atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def _load_space(path: str):
    try:
        return qio.load_space(path)
    except (OSError, qio.FormatError, SpaceError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot load space from {path}: {exc}") from exc


def _load_op(space, path: str):
    try:
        return qio.load_operator(space, path)
    except (OSError, qio.FormatError, OperatorError) as exc:
        raise UsageError(f"cannot load operator from {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# space / op


def cmd_space_gen(args) -> int:
    try:
        if args.graph:
            kind, _, arg = args.graph.partition(":")
            n = int(arg)
            if kind == "path":
                space = path_graph(n)
            elif kind == "cycle":
                space = graph(n, [(i, (i + 1) % n) for i in range(n)])
            else:
                raise UsageError(f"unknown graph family {kind!r}; use path:N or cycle:N")
        else:
            dims = [int(v) for v in args.box.lower().replace("x", ",").split(",")]
            space = zd_box(dims, args.norm)
    except ValueError as exc:
        raise UsageError(f"malformed space description: {exc}") from exc
    text = qio.dump_json(qio.space_to_json(space))
    if args.out:
        qio.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"n={space.n} diameter={space.diameter}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_op_gen(args) -> int:
    space = _load_space(args.space)
    try:
        a = random_decay_operator(space, args.profile, args.seed)
    except OperatorError as exc:
        raise UsageError(str(exc)) from exc
    if args.contraction:
        a = as_contraction(a)
    qio.save_operator(a, args.out)
    print(f"n={space.n} profile={args.profile} seed={args.seed} norm={op_norm(a, args.tol):.6g}")
    return EXIT_OK


def cmd_prop_profile(args) -> int:
    space = _load_space(args.space)
    a = _load_op(space, args.op)
    if args.grid:
        grid = _floats(args.grid)
    else:
        diam = space.diameter
        grid = list(range(diam + 1)) if diam <= 64 else sorted({int(round(v)) for v in np.linspace(0, diam, 65)})
    rows = []
    for r in grid:
        up = eps_prop_upper(a, r, args.tol)
        lo = eps_prop_lower(a, r).value
        rows.append((r, up, lo))
    text = qio.profile_csv(rows)
    if args.out:
        qio.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# decompositions


def cmd_cover(args) -> int:
    space = _load_space(args.space)
    try:
        cover = decompose_zd(space, args.r)
    except DecompositionError as exc:
        raise MathError(str(exc)) from exc
    _emit({"cover": qio.cover_to_json(cover), "bound": cover.bound}, args.out)
    return EXIT_OK


def cmd_chain(args) -> int:
    space = _load_space(args.space)
    try:
        chain = build_chain(space, _floats(args.radii))
    except DecompositionError as exc:
        raise MathError(str(exc)) from exc
    rep = verify_chain(chain)
    text = qio.dump_json(qio.chain_to_json(chain))
    if args.out:
        qio.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"stages={chain.depth} terminal_bound={chain.terminal_bound:g} verified={bool(rep)}", file=sys.stderr)
    return EXIT_OK if rep else EXIT_MATH


# ---------------------------------------------------------------------------
# approximation


def cmd_approx_run(args) -> int:
    space = _load_space(args.space)
    a = _load_op(space, args.op)
    try:
        if args.chain:
            try:
                chain = qio.chain_from_json(space, json.loads(Path(args.chain).read_text()))
            except (OSError, json.JSONDecodeError, qio.FormatError) as exc:
                raise UsageError(f"cannot load chain: {exc}") from exc
            b, report = approximate(a, args.eps, chain)
        elif args.colors:
            b, report = approximate_multicolor(a, args.eps, args.colors)
        else:
            b, report = approximate(a, args.eps, stages=args.stages)
    except (ApproximationError, DecompositionError) as exc:
        raise MathError(str(exc)) from exc
    d = report.to_dict()
    d["seed"] = args.seed
    d["nearest_band_error"] = float(op_norm((a - nearest_band(a, report.output_propagation)).matrix, args.tol)) \
        if np.any(a.matrix) else 0.0
    d["passed"] = report.realized_error <= args.eps
    _emit(d, args.out)
    if args.emit_b:
        qio.save_operator(b, args.emit_b)
    return EXIT_OK if d["passed"] else EXIT_MATH


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    result = run_suite(args.suite, args.seed)
    _emit(result.to_dict(), args.out)
    print(f"{args.suite}: {'PASS' if result.passed else 'FAIL'} "
          f"({len(result.cases) - len(result.failures)}/{len(result.cases)} cases)", file=sys.stderr)
    return EXIT_OK if result.passed else EXIT_MATH


# ---------------------------------------------------------------------------
# higson


def _params(items: list[str] | None) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"parameter {item!r} must look like key=value")
        out[key] = value
    return out


def _field(args):
    space = hg.VirtualSpace(args.dim, args.norm)
    try:
        return hg.builtin_field(space, args.fn, **_params(args.params))
    except hg.HigsonError as exc:
        raise UsageError(str(exc)) from exc


def _sequence(args, space):
    makers = {"sinusoid": hg.sinusoid_sequence, "ramp": hg.ramp_sequence, "constant": hg.constant_sequence}
    if args.seq not in makers:
        raise UsageError(f"unknown sequence {args.seq!r}; choose from {', '.join(makers)}")
    return makers[args.seq](space, args.length)


def cmd_higson(args) -> int:
    lips = _floats(args.lips)
    try:
        if args.action == "split":
            g = _field(args)
            split = hg.higson_split(g, args.stages, rule=args.rule)
            stages = [hg.check_split_stage(split, n, samples=None if g.space.d == 1 else 4000)
                      for n in range(1, min(args.stages, 8) + 1)]
            annuli = [hg.residual_on_annulus(split, m, samples=None if g.space.d == 1 else 4000)
                      for m in range(2, args.stages)]
            report = {
                "fn": args.fn, "dim": args.dim, "radii": list(split.radii), "rule": args.rule,
                "stages": [{"n": s.n, "sup_gap": s.sup_gap, "bound": s.bound, "exhaustive": s.exhaustive}
                           for s in stages],
                "annuli": [{"m": c.m, "inner": c.inner, "outer": c.outer, "sup": c.sup, "bound": c.bound,
                            "points": c.points, "passed": c.passed} for c in annuli],
            }
            ok = all(s.passed for s in stages) and all(c.passed for c in annuli)
        elif args.action == "build-g":
            space = hg.VirtualSpace(args.dim, args.norm)
            seq = _sequence(args, space)
            ks, radii = _ints(args.indices), _floats(args.radii)
            g = hg.vl_to_higson(seq, ks, radii)
            full = [0.0] + radii
            box = args.box or int(2 * radii[-1]) + 8
            rows = []
            for L in lips:
                i0 = hg.higson_start_index(seq, ks, full, L)
                if i0 is None:
                    rows.append({"L": L, "i0": None})
                    continue
                m = hg.lipschitz_outside(g, full[i0], box, target=L)
                rows.append({"L": L, "i0": i0, "outside": full[i0], "upper": m.upper, "seen": m.lower,
                             "passed": m.upper <= L})
            report = {"seq": args.seq, "indices": ks, "radii": radii, "box": box, "checks": rows}
            ok = all(r.get("passed", True) for r in rows)
        elif args.action == "build-vl":
            g = _field(args)
            radii = _floats(args.radii)
            F = hg.higson_to_vl(g, radii)
            box = args.box or int(4 * radii[-1])
            table = hg.vl_modulus_check(F, lips, box)
            report = {"fn": args.fn, "radii": radii, **table.to_dict()}
            ok = True
        else:
            g = _field(args)
            box = args.box or 64
            lip = hg.lipschitz_on_box(g, box)
            oracle = hg.measured_oscillation(g, box, args.stages)
            report = {
                "fn": args.fn, "box": box, "lipschitz_on_box": lip.upper,
                "oscillation_radii": {n: oracle(n) for n in range(1, args.stages + 1)},
                "declared_oscillation": {n: g.oscillation(n) for n in range(1, args.stages + 1)}
                if g.oscillation else None,
            }
            ok = True
    except hg.HigsonError as exc:
        raise MathError(str(exc)) from exc
    _emit(report, args.out)
    return EXIT_OK if ok else EXIT_MATH


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasiloc", description="Quasi-local operators at finite scale.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out", help="output file (written atomically); stdout when omitted")
        sp.add_argument("--tol", type=float, default=1e-9, help="relative tolerance for norm brackets")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    space = sub.add_parser("space", help="metric spaces").add_subparsers(dest="action", required=True)
    gen = space.add_parser("gen", help="write a space descriptor")
    src = gen.add_mutually_exclusive_group(required=True)
    src.add_argument("--box", help="box side lengths, e.g. 64 or 32x32")
    src.add_argument("--graph", help="path:N or cycle:N")
    gen.add_argument("--norm", default="linf", choices=["linf", "l1"])
    common(gen, seed=False)
    gen.set_defaults(func=cmd_space_gen)

    op = sub.add_parser("op", help="operators").add_subparsers(dest="action", required=True)
    og = op.add_parser("gen", help="seeded random decay operator")
    og.add_argument("--space", required=True)
    og.add_argument("--profile", default="exp:1.0", help="exp:RATE, gauss:WIDTH or band:WIDTH")
    og.add_argument("--contraction", action="store_true", help="rescale to norm at most 1")
    common(og)
    og.set_defaults(func=cmd_op_gen)

    prop = sub.add_parser("prop", help="propagation").add_subparsers(dest="action", required=True)
    pp = prop.add_parser("profile", help="eps-propagation profile as CSV")
    pp.add_argument("--space", required=True)
    pp.add_argument("--op", required=True)
    pp.add_argument("--grid", help="comma-separated radii")
    common(pp, seed=False)
    pp.set_defaults(func=cmd_prop_profile)

    cov = sub.add_parser("cover", help="r-disjoint colored cover of a box")
    cov.add_argument("--space", required=True)
    cov.add_argument("--r", type=int, required=True)
    common(cov, seed=False)
    cov.set_defaults(func=cmd_cover)

    ch = sub.add_parser("chain", help="decomposition chain for a radius schedule")
    ch.add_argument("--space", required=True)
    ch.add_argument("--radii", required=True, help="comma-separated increasing radii")
    common(ch, seed=False)
    ch.set_defaults(func=cmd_chain)

    approx = sub.add_parser("approx", help="approximation pipeline").add_subparsers(dest="action", required=True)
    run = approx.add_parser("run", help="certified finite-propagation approximation")
    run.add_argument("--space", required=True)
    run.add_argument("--op", required=True)
    run.add_argument("--eps", type=float, required=True)
    how = run.add_mutually_exclusive_group()
    how.add_argument("--colors", type=int, help="single multicolor stage with this many colors")
    how.add_argument("--chain", help="chain JSON file")
    run.add_argument("--stages", type=int, default=1, help="stages of the self-built chain")
    run.add_argument("--emit-b", dest="emit_b", help="write the approximant here")
    common(run)
    run.set_defaults(func=cmd_approx_run)

    ver = sub.add_parser("verify", help="run an acceptance suite")
    ver.add_argument("--suite", required=True, help=", ".join(SUITES))
    common(ver)
    ver.set_defaults(func=cmd_verify)

    hig = sub.add_parser("higson", help="Higson-function constructions")
    hig.add_argument("action", choices=["split", "build-g", "build-vl", "check"])
    hig.add_argument("--fn", default="sinlog", help="const, zero, sinlog or angular")
    hig.add_argument("--params", nargs="*", help="key=value parameters for --fn")
    hig.add_argument("--dim", type=int, default=1)
    hig.add_argument("--norm", default="linf", choices=["linf", "l1"])
    hig.add_argument("--box", type=int, help="evaluation box radius")
    hig.add_argument("--stages", type=int, default=9)
    hig.add_argument("--rule", default="safe", choices=["safe", "minimal"], help="radius rule for split")
    hig.add_argument("--seq", default="sinusoid", help="sinusoid, ramp or constant (build-g)")
    hig.add_argument("--length", type=int, default=40, help="sequence prefix length")
    hig.add_argument("--indices", default="2,4,8,16")
    hig.add_argument("--radii", default="3,18,108,648")
    hig.add_argument("--lips", default="1,0.5,0.25")
    common(hig)
    hig.set_defaults(func=cmd_higson)
    return p


@contextlib.contextmanager
def _thread_cap():
    cap = os.environ.get("QUASILOC_THREADS")
    if not cap:
        yield
        return
    from threadpoolctl import threadpool_limits

    try:
        n = int(cap)
    except ValueError:
        raise UsageError(f"QUASILOC_THREADS must be an integer, got {cap!r}")
    with threadpool_limits(limits=max(1, n)):
        yield


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_cap():
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MathError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_MATH
    except (SpaceError, OperatorError, DecompositionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
