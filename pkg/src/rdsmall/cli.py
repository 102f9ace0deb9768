"""Command-line front end.

Three subcommands:

* ``diss`` — study-size report for a CSV: n, n below the cutoff, the
  rule-of-thumb bandwidth, and the count within it.
* ``analyze`` — one row per estimation method: bandwidth/window, point
  estimate, SE, confidence interval, success flag.  Method failures are
  report rows carrying the reason, not process errors.
* ``simulate`` — run a simulation cell from a JSON spec (or emit the
  study-size design grid with ``--table1``).

CSV input needs a header row; column names are configurable.  Rows with
missing or non-numeric values in the selected columns are dropped with a
counted warning by default; ``--strict`` turns the first such row into an
error.  All reports carry the toolkit version and the resolved
configuration, and the treated side is ``x >= cutoff`` (a beneficial
below-cutoff intervention therefore shows up as a positive effect).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from ._version import __version__
from .bandwidth import CurvatureBound, ak_bandwidth, estimate_m_hat, ik_bandwidth
from .core import RDSample, validate
from .diss import diss_m
from .errors import (
    MissingColumnError,
    ParseError,
    RDError,
    SpecValidationError,
)
from .inference import cv_interval, flci_interval, rbc_interval
from .local_poly import nn_variance
from .local_randomization import lr_interval, select_window
from .simulation import design_table, run_cell, validate_cell_spec, write_cell_outputs

DEFAULT_ANALYZE_METHODS = "ik/cv,ik/rbc,ik/flci,ak/cv,ak/rbc,ak/flci,lr"


def read_xy_csv(path: str | Path, x_col: str, y_col: str, strict: bool = False):
    """Read two numeric columns from a CSV; returns (x, y, n_dropped)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path}: empty file (header row required)")
        for col in (x_col, y_col):
            if col not in reader.fieldnames:
                raise MissingColumnError(
                    f"{path}: column {col!r} not found; available: {reader.fieldnames}"
                )
        xs, ys, dropped = [], [], 0
        for row_number, row in enumerate(reader, start=2):
            raw_x, raw_y = row.get(x_col), row.get(y_col)
            try:
                x = float(raw_x)
                y = float(raw_y)
                if not (np.isfinite(x) and np.isfinite(y)):
                    raise ValueError
            except (TypeError, ValueError):
                if strict:
                    raise ParseError(
                        f"{path}: row {row_number}: non-numeric or missing "
                        f"value ({x_col}={raw_x!r}, {y_col}={raw_y!r})"
                    )
                dropped += 1
                continue
            xs.append(x)
            ys.append(y)
    if not xs:
        raise ParseError(f"{path}: no usable data rows")
    return np.array(xs), np.array(ys), dropped


def _base_report(args, config_keys) -> dict:
    return {
        "version": __version__,
        "config": {k: getattr(args, k.replace("-", "_")) for k in config_keys},
    }


def cmd_diss(args) -> dict:
    x, y, dropped = read_xy_csv(args.input, args.x_col, args.y_col, args.strict)
    sample = RDSample(x=x, y=y, cutoff=args.cutoff)
    m, h_rot = diss_m(sample)
    report = _base_report(args, ("input", "x_col", "y_col", "cutoff", "strict"))
    report.update(
        {
            "n": int(sample.n),
            "n_below": int(np.count_nonzero(x < args.cutoff)),
            "h_rot": h_rot,
            "m": m,
            "dropped_rows": dropped,
        }
    )
    return report


def _analyze_methods(spec: str, lr_min: int) -> list[str]:
    methods = []
    for raw in spec.split(","):
        m = raw.strip().lower()
        if not m:
            continue
        if m in ("lr", f"lr{lr_min}"):
            methods.append(f"lr{lr_min}")
        elif m.count("/") == 1 and m.split("/")[0] in ("ik", "ak", "akm") and \
                m.split("/")[1] in ("cv", "rbc", "flci"):
            methods.append(m)
        else:
            raise SpecValidationError(f"--methods: unknown method id {m!r}")
    if not methods:
        raise SpecValidationError("--methods: at least one method required")
    return methods


def cmd_analyze(args) -> dict:
    x, y, dropped = read_xy_csv(args.input, args.x_col, args.y_col, args.strict)
    sample = RDSample(x=x, y=y, cutoff=args.cutoff)
    methods = _analyze_methods(args.methods, args.lr_min)
    rng = np.random.default_rng(args.seed)

    rows = []

    def add_row(method, **fields):
        row = {
            "method": method,
            "success": False,
            "bandwidth_or_window": None,
            "tau_hat": None,
            "se": None,
            "ci_lower": None,
            "ci_upper": None,
            "reason": None,
        }
        row.update(fields)
        rows.append(row)

    def add_estimate(method, est):
        add_row(
            method,
            success=True,
            bandwidth_or_window=est.bandwidth_or_window,
            tau_hat=est.tau_hat,
            se=est.se,
            ci_lower=est.ci_lower,
            ci_upper=est.ci_upper,
        )

    split = validate(sample)
    sigma2 = None
    sigma2_err = None
    try:
        sigma2 = nn_variance(sample, split)
    except RDError as err:
        sigma2_err = f"{type(err).__name__}: {err}"

    mhat = None
    mhat_err = None
    continuity = [m for m in methods if "/" in m]
    if any(m.startswith("ak/") or m.endswith("/flci") for m in continuity):
        try:
            mhat = estimate_m_hat(sample)
        except RDError as err:
            mhat_err = f"{type(err).__name__}: {err}"
    user_bound = None
    if args.m_bound is not None:
        user_bound = CurvatureBound(args.m_bound, "user")

    bw_cache: dict[str, object] = {}

    def bandwidth_for(alg):
        if alg in bw_cache:
            return bw_cache[alg]
        if alg == "ik":
            result = ik_bandwidth(sample)
        else:
            bound = user_bound if (alg == "akm" or user_bound is not None) else mhat
            if bound is None:
                reason = mhat_err or "no curvature bound (--m-bound not given)"
                bw_cache[alg] = reason
                return reason
            try:
                result = ak_bandwidth(sample, bound=bound, sigma2=sigma2)
            except RDError as err:
                result = f"{type(err).__name__}: {err}"
        bw_cache[alg] = result
        return result

    for method in continuity:
        alg, inf = method.split("/")
        bw = bandwidth_for(alg)
        if isinstance(bw, str):
            add_row(method, reason=bw)
            continue
        if not bw.ok:
            add_row(method, reason=bw.failure_reason)
            continue
        if sigma2 is None:
            add_row(method, bandwidth_or_window=bw.h, reason=sigma2_err)
            continue
        bound = user_bound if (alg == "akm" or user_bound is not None) else mhat
        if inf == "flci" and bound is None:
            add_row(method, bandwidth_or_window=bw.h,
                    reason=mhat_err or "no curvature bound")
            continue
        try:
            if inf == "cv":
                est = cv_interval(sample, bw.h, alpha=args.alpha, sigma2=sigma2,
                                  bw_label=alg)
            elif inf == "rbc":
                est = rbc_interval(sample, bw.h, alpha=args.alpha, sigma2=sigma2,
                                   bw_label=alg)
            else:
                est = flci_interval(sample, bw.h, alpha=args.alpha, bound=bound,
                                    sigma2=sigma2, bw_label=alg)
            add_estimate(method, est)
        except RDError as err:
            add_row(method, bandwidth_or_window=bw.h,
                    reason=f"{type(err).__name__}: {err}")

    for method in methods:
        if "/" in method:
            continue
        try:
            window = select_window(sample, args.lr_min)
            est = lr_interval(sample, window, alpha=args.alpha, rng=rng)
            add_estimate(method, est)
        except RDError as err:
            add_row(method, reason=f"{type(err).__name__}: {err}")

    report = _base_report(
        args,
        ("input", "x_col", "y_col", "cutoff", "alpha", "methods", "lr_min",
         "m_bound", "seed", "strict"),
    )
    report.update(
        {
            "n": int(sample.n),
            "n_below": int(split.n_below),
            "dropped_rows": dropped,
            "results": rows,
        }
    )
    return report


def cmd_simulate(args) -> int:
    if args.table1:
        payload = {"version": __version__, "design": design_table()}
        _emit(payload, args.out, args.format, table_key="design")
        return 0
    if args.spec is None:
        raise SpecValidationError("simulate needs --spec PATH or --table1")
    spec_path = Path(args.spec)
    if not spec_path.exists():
        raise FileNotFoundError(f"no such file: {spec_path}")
    try:
        raw = json.loads(spec_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SpecValidationError(f"{spec_path}: invalid JSON ({err})")
    cell = validate_cell_spec(raw)
    result = run_cell(cell)
    outdir = Path(args.out) if args.out else Path.cwd()
    json_path, csv_path = write_cell_outputs(result, outdir)
    print(json_path)
    print(csv_path)
    return 0


def _rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _emit(report: dict, out: str | None, fmt: str, table_key: str | None = None):
    if fmt == "csv":
        if table_key and isinstance(report.get(table_key), list):
            text = _rows_to_csv(report[table_key])
        else:
            text = _rows_to_csv([_flatten(report)])
    else:
        text = json.dumps(report, indent=2, sort_keys=True, default=str) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _flatten(report: dict) -> dict:
    flat = {}
    for key, value in report.items():
        if isinstance(value, dict):
            for k2, v2 in value.items():
                flat[f"{key}.{k2}"] = v2
        elif not isinstance(value, list):
            flat[key] = value
    return flat


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdsmall",
        description="Regression discontinuity estimation for small studies",
    )
    parser.add_argument("--version", action="version", version=f"rdsmall {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, alpha_default):
        p.add_argument("--input", required=True, help="CSV file with a header row")
        p.add_argument("--x-col", required=True, help="running-variable column")
        p.add_argument("--y-col", required=True, help="response column")
        p.add_argument("--cutoff", type=float, required=True)
        p.add_argument("--strict", action="store_true",
                       help="error on non-numeric rows instead of dropping them")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        if alpha_default is not None:
            p.add_argument("--alpha", type=float, default=alpha_default)

    p_diss = sub.add_parser("diss", help="study-size report for a CSV")
    add_io(p_diss, None)

    p_an = sub.add_parser("analyze", help="estimate the cutoff effect with each method")
    add_io(p_an, 0.10)
    p_an.add_argument("--methods", default=DEFAULT_ANALYZE_METHODS)
    p_an.add_argument("--lr-min", type=int, default=5,
                      help="minimum observations per side for the randomization window")
    p_an.add_argument("--m-bound", type=float, default=None,
                      help="user-supplied curvature bound (otherwise data driven)")
    p_an.add_argument("--seed", type=int, default=0)

    p_sim = sub.add_parser("simulate", help="run a simulation cell from a JSON spec")
    p_sim.add_argument("--spec", help="cell spec JSON path")
    p_sim.add_argument("--table1", action="store_true",
                       help="emit the study-size design grid instead of running a cell")
    p_sim.add_argument("--out", help="output directory (default: cwd)")
    p_sim.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "diss":
            _emit(cmd_diss(args), args.out, args.format)
        elif args.command == "analyze":
            report = cmd_analyze(args)
            if args.format == "csv":
                text = _rows_to_csv(report["results"])
                if args.out:
                    Path(args.out).write_text(text, encoding="utf-8")
                else:
                    sys.stdout.write(text)
            else:
                _emit(report, args.out, "json")
        elif args.command == "simulate":
            return cmd_simulate(args)
    except (RDError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
