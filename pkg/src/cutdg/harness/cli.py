"""Command line driver: run, converge, sweep-alpha, region-map, list-presets."""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from .diagnostics import HarnessError
from .output import CONVERGENCE_HEADER, TRACE_HEADER, convergence_rows, csv_text, line_plot, write_text
from .presets import PRESETS, ExperimentSpec, get_preset, run_convergence, run_experiment

# flag dest -> preset parameter
_OVERRIDE_FLAGS = {
    "degree": "degree", "lambda1": "lambda1", "lambda2": "lambda2", "courant": "courant", "t_end": "t_end",
    "formulation": "formulation", "alpha": "alpha", "face_rule": "face_rule", "points": "error_points",
    "samples": "samples",
}


def _add_overrides(p: argparse.ArgumentParser, n_help: str) -> None:
    p.add_argument("--preset")
    p.add_argument("--n", help=n_help)
    p.add_argument("--degree")
    p.add_argument("--lambda1")
    p.add_argument("--lambda2")
    p.add_argument("--courant")
    p.add_argument("--t-end", dest="t_end")
    p.add_argument("--formulation")
    p.add_argument("--alpha")
    p.add_argument("--face-rule", dest="face_rule")
    p.add_argument("--points", help="Gauss points per sub-interval in the error norms")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="any preset parameter")
    _add_output(p)


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--csv", help="CSV output path (stdout when omitted)")
    p.add_argument("--svg", help="optional SVG plot path")
    p.add_argument("--config", help="key=value file mirroring the flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutdg", description="cut DG experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_overrides(sub.add_parser("run", help="run one preset"), "mesh size")
    _add_overrides(sub.add_parser("converge", help="refinement study"), "comma separated mesh sizes")
    sw = sub.add_parser("sweep-alpha", help="errors and conditioning against the cut size")
    sw.add_argument("--n")
    sw.add_argument("--degree")
    sw.add_argument("--samples")
    sw.add_argument("--courant")
    sw.add_argument("--face-rule", dest="face_rule")
    sw.add_argument("--no-errors", dest="no_errors", action="store_true", help="condition numbers only")
    sw.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    _add_output(sw)
    rm = sub.add_parser("region-map", help="stable interface penalty pairs")
    rm.add_argument("--a1")
    rm.add_argument("--a2")
    rm.add_argument("--samples")
    rm.add_argument("--conservative", action="store_true")
    rm.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    _add_output(rm)
    sub.add_parser("list-presets", help="show presets and their defaults")
    return parser


def read_config(path: str) -> dict:
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise HarnessError(f"cannot read config {path}: {exc}") from None
    for k, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise HarnessError(f"{path}:{k}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _parse(argv: Optional[Sequence[str]]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = read_config(args.config)
        explicit = vars(parser.parse_args(argv))
        known = set(explicit)
        for key, value in cfg.items():
            if key not in known or key in ("command", "config"):
                raise HarnessError(f"invalid override '{key}' in {args.config}")
            current = explicit[key]
            if key == "set":
                setattr(args, "set", [value] + list(current))
            elif key in ("conservative", "no_errors"):
                if not current:
                    setattr(args, key, value.lower() in ("1", "true", "yes"))
            elif current is None:
                setattr(args, key, value)
    return args


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    for dest, key in _OVERRIDE_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            out[key] = value
    for item in getattr(args, "set", []) or []:
        if "=" not in item:
            raise HarnessError(f"invalid override {item!r}; expected KEY=VALUE")
        k, v = (s.strip() for s in item.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _require_preset(args) -> str:
    if not args.preset:
        raise HarnessError("--preset is required")
    get_preset(args.preset)
    return args.preset


def _emit(args, header, rows, summary: str) -> None:
    text = csv_text(header, rows)
    write_text(args.csv, text, sys.stdout)
    print(summary, file=sys.stderr if args.csv is None else sys.stdout)


def cmd_run(args) -> int:
    preset = _require_preset(args)
    ov = _overrides(args)
    if args.n is not None:
        ov["n"] = args.n
    report = run_experiment(ExperimentSpec(preset, ov))
    if report.table is not None:
        header, rows = report.table
    else:
        header, rows = TRACE_HEADER, report.trace_rows()
    _emit(args, header, rows, report.summary())
    if args.svg:
        if report.table is not None:
            cols = np.array(report.table[1], dtype=float).T
            svg = line_plot([(header[k], cols[0], cols[k]) for k in range(1, len(header))], title=preset)
        else:
            t = np.array([r[0] for r in rows])
            svg = line_plot([("e(t)", t, [r[1] for r in rows])], title=preset, xlabel="t", ylabel="e")
        write_text(args.svg, svg)
    return 0


def _parse_ns(raw: Optional[str]):
    if raw is None:
        return None
    try:
        return [int(s) for s in raw.split(",") if s.strip()]
    except ValueError:
        raise HarnessError(f"invalid override n={raw!r}") from None


def cmd_converge(args) -> int:
    preset = _require_preset(args)
    rows, reports = run_convergence(preset, _parse_ns(args.n), _overrides(args))
    last = rows[-1]
    summary = (f"preset={preset} degree={reports[0].params['degree']} final L2={last.norms.L2:.6e} "
               f"order={last.order_L2:.3f} time={sum(r.wall_time for r in reports):.1f}s")
    _emit(args, CONVERGENCE_HEADER, convergence_rows(rows), summary)
    if args.svg:
        h = [r.h for r in rows]
        svg = line_plot([(f"L2 r={reports[0].params['degree']}", h, [r.norms.L2 for r in rows])],
                        title=preset, xlabel="h", ylabel="L2 error", logx=True, logy=True)
        write_text(args.svg, svg)
    return 0


def cmd_sweep(args) -> int:
    ov = _overrides(args)
    if args.n is not None:
        ov["n"] = args.n
    if args.no_errors:
        ov["errors"] = "false"
    report = run_experiment(ExperimentSpec("alpha_sweep", ov))
    header, rows = report.table
    cond = np.array([r[4] for r in rows])
    l2 = np.array([r[2] for r in rows])
    summary = f"alpha_sweep N={report.n} samples={len(rows)} cond max/min={cond.max() / cond.min():.3f}"
    if np.all(np.isfinite(l2)):
        summary += f" L2 spread={(l2.max() - l2.min()) / l2.min():.3f}"
    _emit(args, header, rows, summary + f" time={report.wall_time:.1f}s")
    if args.svg:
        a = [r[0] for r in rows]
        series = [("cond", a, cond)] + ([("L2", a, l2)] if np.all(np.isfinite(l2)) else [])
        write_text(args.svg, line_plot(series, title="alpha sweep", xlabel="alpha", logy=True))
    return 0


def cmd_region(args) -> int:
    ov = {}
    for key in ("a1", "a2", "samples"):
        if getattr(args, key) is not None:
            ov[key] = getattr(args, key)
    if args.conservative:
        ov["conservative"] = "true"
    ov.update(_overrides(args))
    report = run_experiment(ExperimentSpec("region_map", ov))
    header, rows = report.table
    n_ok = sum(r[2] for r in rows)
    _emit(args, header, rows, f"region_map points={len(rows)} feasible={n_ok}")
    return 0


def cmd_list(args) -> int:
    for name, pr in PRESETS.items():
        print(f"{name}: {pr.description}")
        print("    " + ", ".join(f"{k}={v}" for k, v in pr.defaults.items()))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _parse(argv)
        handler = {"run": cmd_run, "converge": cmd_converge, "sweep-alpha": cmd_sweep, "region-map": cmd_region,
                   "list-presets": cmd_list}[args.command]
        return handler(args)
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
