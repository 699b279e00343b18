"""Command-line front end.

Usage examples::

    gchan norm channels/attenuator.json --p 2
    gchan converge channels/attenuator.json --E-grid 1,10,100,10000 --p 2
    gchan converge channels/attenuator.json --E-grid 100,1000,10000 --p 2 --q 1
    gchan oracle channels/amplifier.json --E 1 --p 2
    gchan interp --seed 0 --n-maps 500 --d-max 8
    gchan entropy channels/attenuator.json --E-grid 0,1,10,10000 --format csv

JSON is the canonical output; ``--format csv`` re-encodes the same rows.
Floats are printed with 17 significant digits, non-finite ones as strings.
Exit codes: 0 ok, 1 malformed input, 2 channel not completely positive,
3 oracle/entropy check failed, 4 interpolation bound violated.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import channel as ch
from . import fockoracle as fo
from . import interpbound as ib
from . import thermal as th

EXIT_OK, EXIT_INPUT, EXIT_NOT_CP, EXIT_CHECK, EXIT_VIOLATION = 0, 1, 2, 3, 4


# ------------------------------------------------------------------------ encoding


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with fixed 17-significant-digit floats; output is byte-stable."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def rows_to_csv(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        out = []
        for c in columns:
            v = row.get(c)
            if v is None:
                out.append("")
            elif isinstance(v, bool):
                out.append("true" if v else "false")
            elif isinstance(v, (float, np.floating)):
                out.append(_fmt_float(float(v)).strip('"'))
            else:
                out.append(str(v))
        writer.writerow(out)
    return buf.getvalue()


def _emit(args, payload: dict, columns: list[str] | None = None, rows: list[dict] | None = None):
    if getattr(args, "format", "json") == "csv" and columns is not None:
        sys.stdout.write(rows_to_csv(columns, rows or []))
    else:
        sys.stdout.write(dumps(payload) + "\n")


# ------------------------------------------------------------------------- helpers


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


def _threads() -> int | None:
    raw = os.environ.get("GCHAN_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        return None
    return None if n <= 0 else n


def _grid_map(fn, items):
    """Evaluate ``fn`` over ``items`` concurrently; results stay in grid order."""
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


class CliError(Exception):
    def __init__(self, code: int, message: str, payload: dict | None = None):
        super().__init__(message)
        self.code = code
        self.payload = payload


def _load(path: str) -> ch.ChannelParams:
    try:
        return ch.load_channel(path)
    except ch.ChannelSpecError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc


def _load_cp(path: str) -> tuple[ch.ChannelParams, ch.CpReport]:
    params = _load(path)
    report = ch.cp_check(params)
    if not report.is_cp:
        raise CliError(EXIT_NOT_CP, "channel is not completely positive",
                       {"channel": path, "cp": report.to_dict()})
    return params, report


# ------------------------------------------------------------------------ commands


def cmd_norm(args) -> int:
    params, report = _load_cp(args.channel)
    norm = ch.schatten_norm_analytic(params, args.p)
    gram_det = float(np.prod(params.gram_eigenvalues))
    payload = {
        "channel": args.channel,
        "p": args.p,
        "norm": "unbounded" if math.isinf(norm) else norm,
        "unbounded": math.isinf(norm),
        "invertible": params.is_invertible,
        "det_KstarK": gram_det,
        "cp": report.to_dict(),
    }
    columns = ["p", "norm", "unbounded", "invertible", "det_KstarK"]
    _emit(args, payload, columns, [payload])
    return EXIT_OK


def _converge_rows(params, E_grid, p_grid):
    bound = ch.entropy_gain_bound(params)

    def row(point):
        E, p = point
        ratio = th.norm_ratio(params, E, p)
        limit = ch.schatten_norm_analytic(params, p)
        gain = th.entropy_gain(params, E)
        return {
            "E": E,
            "p": p,
            "norm_ratio": ratio,
            "norm_limit": limit,
            "entropy_gain": gain,
            "entropy_limit": bound,
            "entropy_dist": abs(gain - bound),
            "rel_dist": abs(ratio / limit - 1.0) if math.isfinite(limit) else math.inf,
        }

    return _grid_map(row, [(E, p) for p in p_grid for E in E_grid])


def _divergence_rows(params, E_grid, p_grid, q):
    def row(point):
        E, p = point
        return {"E": E, "p": p, "q": q, "cross_ratio": th.cross_norm_ratio(params, E, p, q)}

    rows = _grid_map(row, [(E, p) for p in p_grid for E in E_grid])
    prev = None
    for r in rows:
        if prev is not None and prev["p"] == r["p"] and prev["E"] > 0 and r["E"] > 0:
            r["slope"] = th.loglog_slope([prev["E"], r["E"]], [prev["cross_ratio"], r["cross_ratio"]])
        else:
            r["slope"] = None
        prev = r
    return rows


def cmd_converge(args) -> int:
    params, _ = _load_cp(args.channel)
    p_grid = args.p_grid or [args.p]
    if args.q is not None:
        rows = _divergence_rows(params, args.E_grid, p_grid, args.q)
        fits = {}
        for p in p_grid:
            pts = [(r["E"], r["cross_ratio"]) for r in rows if r["p"] == p and r["E"] > 0]
            if len(pts) >= 2:
                fits[format(p, "g")] = th.loglog_slope(*zip(*pts))
        payload = {"channel": args.channel, "mode": "divergence", "q": args.q,
                   "expected_slope": {format(p, "g"): 1 / args.q - 1 / p for p in p_grid},
                   "fitted_slope": fits, "rows": rows}
        columns = ["E", "p", "q", "cross_ratio", "slope"]
    else:
        rows = _converge_rows(params, args.E_grid, p_grid)
        payload = {"channel": args.channel, "mode": "converge", "rows": rows}
        columns = ["E", "p", "norm_ratio", "norm_limit", "entropy_gain", "entropy_limit",
                   "entropy_dist", "rel_dist"]
    _emit(args, payload, columns, rows)
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.channel:
        params, _ = _load_cp(args.channel)
    elif args.K2 is not None and args.mu is not None:
        params = ch.ChannelParams.single_mode(math.sqrt(args.K2), args.mu)
        report = ch.cp_check(params)
        if not report.is_cp:
            raise CliError(EXIT_NOT_CP, "channel is not completely positive", {"cp": report.to_dict()})
    else:
        raise CliError(EXIT_INPUT, "give a channel file or both --K2 and --mu")
    try:
        numeric, budget = fo.oracle_output_norm(params, args.E, args.p, args.cutoff)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    analytic = th.output_schatten_norm(params, args.E, args.p)
    discrepancy = abs(numeric - analytic) / analytic
    allowed = args.tol + budget
    passed = discrepancy <= allowed
    payload = {
        "channel": args.channel,
        "E": args.E,
        "p": args.p,
        "cutoff": args.cutoff or fo.thermal_cutoff(args.E),
        "analytic": analytic,
        "numeric": numeric,
        "rel_discrepancy": discrepancy,
        "tail_budget": budget,
        "tolerance": allowed,
        "pass": passed,
    }
    if not passed:
        raise CliError(EXIT_CHECK, "oracle disagrees with closed form", payload)
    columns = list(payload)
    _emit(args, payload, columns, [payload])
    return EXIT_OK


def cmd_interp(args) -> int:
    families = {"cp": ("cp",), "copositive": ("copositive",), "both": ("cp", "copositive")}[args.family]
    if args.identity:
        nmap = ib.PositiveMapRep(np.eye(args.d_max)[None])
        try:
            reports, violations = [ib.verify_bound(nmap, args.p_grid, args.trials, args.iters,
                                                   ib.map_rng(args.seed, 0))], []
        except ib.BoundViolation as exc:
            reports, violations = [], [exc]
        result = ib.SuiteResult(reports, violations)
    else:
        result = ib.run_suite(args.seed, args.n_maps, args.d_max, args.p_grid, families,
                              args.trials, args.iters, workers=_threads() or 1)
    payload = {"seed": args.seed, "p_grid": list(args.p_grid), "families": list(families)}
    payload.update(result.to_dict())
    rows = [
        {"map": i, "d": r.d, "pre_transpose": r.pre_transpose, "p": e.p, "lower": e.lower,
         "rhs": e.rhs, "slack": e.slack}
        for i, r in enumerate(result.reports) for e in r.entries
    ]
    if result.violations:
        with open(args.counterexample_out, "w", encoding="utf-8") as fh:
            fh.write(dumps([v.counterexample for v in result.violations]) + "\n")
        _emit(args, payload)
        print(f"bound violated on {len(result.violations)} map(s); see {args.counterexample_out}",
              file=sys.stderr)
        return EXIT_VIOLATION
    _emit(args, payload, ["map", "d", "pre_transpose", "p", "lower", "rhs", "slack"], rows)
    return EXIT_OK


def cmd_entropy(args) -> int:
    params, _ = _load_cp(args.channel)
    if not params.is_invertible:
        raise CliError(EXIT_INPUT, "entropy gain bound needs invertible K")
    bound = ch.entropy_gain_bound(params)

    def row(E):
        e = th.output_spectrum(params, E)
        gain = sum(th.thermal_entropy(float(x)) for x in e) - params.s * th.thermal_entropy(E)
        return {"E": E, "entropy_gain": gain, "bound": bound, "ok": gain >= bound - 1e-9}

    rows = _grid_map(row, args.E_grid)
    payload = {"channel": args.channel, "bound": bound, "rows": rows}
    if not all(r["ok"] for r in rows):
        raise CliError(EXIT_CHECK, "entropy gain below ln det K*K", payload)
    _emit(args, payload, ["E", "entropy_gain", "bound", "ok"], rows)
    return EXIT_OK


# -------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gchan", description="Norms of gauge-covariant Gaussian channels.")
    sub = ap.add_subparsers(dest="command", required=True)

    def fmt(p):
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("norm", help="analytic p -> p norm of a channel")
    p.add_argument("channel")
    p.add_argument("--p", type=float, required=True)
    fmt(p)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("converge", help="thermal lower bounds vs E (or q < p divergence)")
    p.add_argument("channel")
    p.add_argument("--E-grid", dest="E_grid", type=_float_list, default=[1.0, 10.0, 100.0, 1e4])
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--p-grid", dest="p_grid", type=_float_list, default=None)
    p.add_argument("--q", type=float, default=None)
    fmt(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("oracle", help="compare closed forms against the Fock-space oracle")
    p.add_argument("channel", nargs="?")
    p.add_argument("--K2", type=float, default=None, help="|K|^2 of a single-mode channel")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--E", type=float, default=1.0)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--cutoff", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    fmt(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("interp", help="randomized interpolation-bound suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-max", dest="d_max", type=int, default=8)
    p.add_argument("--n-maps", dest="n_maps", type=int, default=500)
    p.add_argument("--p-grid", dest="p_grid", type=_float_list, default=list(ib.DEFAULT_P_GRID))
    p.add_argument("--family", choices=("cp", "copositive", "both"), default="both")
    p.add_argument("--trials", type=int, default=ib.DEFAULT_TRIALS)
    p.add_argument("--iters", type=int, default=ib.DEFAULT_ITERS)
    p.add_argument("--identity", action="store_true", help="check only the identity map on C^d_max")
    p.add_argument("--counterexample-out", default="counterexample.json")
    fmt(p)
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("entropy", help="entropy gain of thermal inputs vs ln det K*K")
    p.add_argument("channel")
    p.add_argument("--E-grid", dest="E_grid", type=_float_list, default=[0.0, 1.0, 10.0, 100.0, 1e4])
    fmt(p)
    p.set_defaults(func=cmd_entropy)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        if exc.payload is not None:
            sys.stdout.write(dumps(exc.payload) + "\n")
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
