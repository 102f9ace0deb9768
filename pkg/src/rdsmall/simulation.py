"""Monte Carlo evaluation harness.

Data generating processes are the nine combinations of three Beta running
variables (mapped to [-1, 1], cutoff 0) and three mean functions with a 0.1
jump at the cutoff; responses add N(0, 0.1295^2) noise.  Study sizes are
expressed through the population DISS m_bar rather than raw n.

Per-replication randomness comes from a stream derived from (master seed,
cell id, replication index), so results are bit-identical regardless of how
replications are scheduled across workers; method failures are recorded as
outcomes, never raised.  Point and interval operating characteristics are
summarized on the subset of replications where every method in the cell
produced a finite interval, mirroring how mixed-success methods must be
compared.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._version import __version__
from .bandwidth import (
    BandwidthResult,
    CurvatureBound,
    ak_bandwidth,
    estimate_m_hat,
    ik_bandwidth,
)
from .core import RDSample, validate
from .diss import BetaSpec, beta_quantile, beta_sigma_star, n_for_target_diss
from .errors import (
    EmptySideWarning,
    OutOfSupportError,
    RDError,
    SpecValidationError,
    ZeroCurvatureBoundError,
)
from .inference import cv_interval, flci_interval, rbc_interval
from .local_poly import nn_variance
from .local_randomization import (
    DEFAULT_GRID_POINTS,
    DEFAULT_MAX_EXACT,
    DEFAULT_N_MC,
    LRWindow,
    lr_interval,
)

NOISE_SD = 0.1295
TRUE_TAU = 0.1
CUTOFF = 0.0

RV_SPECS: dict[str, BetaSpec] = {
    "rv1": BetaSpec(1, 1, scale=2.0, shift=-1.0),
    "rv2": BetaSpec(2, 4, scale=2.0, shift=-1.0),
    "rv3": BetaSpec(14, 7, scale=2.0, shift=-1.0),
}

M_BAR_GRID = (10, 21, 27, 44, 57)

DEFAULT_METHODS = ("ik/cv", "ik/rbc", "ik/flci", "ak/cv", "ak/rbc", "ak/flci", "lr")


# ---------------------------------------------------------------------------
# Mean functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeanFunction:
    """One of the three simulated mean functions (jump 0.1 at x = 0)."""

    name: str
    knots: tuple[float, ...]
    nominal_curvature_bound: float
    true_tau: float = TRUE_TAU


MU_FUNCTIONS: dict[str, MeanFunction] = {
    "mu1": MeanFunction("mu1", knots=(-0.2, 0.2, 0.4, 0.7), nominal_curvature_bound=2.0),
    "mu2": MeanFunction("mu2", knots=(), nominal_curvature_bound=233.26),
    "mu3": MeanFunction("mu3", knots=(), nominal_curvature_bound=16.2),
}


def _plus_sq(x):
    return np.maximum(x, 0.0) ** 2


def _mu1(x):
    return (
        (x + 1.0) ** 2
        - 2.0 * _plus_sq(x + 0.2)
        + 2.0 * _plus_sq(x - 0.2)
        - 2.0 * _plus_sq(x - 0.4)
        + 2.0 * _plus_sq(x - 0.7)
        - 0.92
        + 0.1 * (x >= 0)
    )


def _mu2(x):
    return (
        0.42 + 0.84 * x - 3.0 * x**2 + 7.99 * x**3 - 9.01 * x**4 + 3.56 * x**5
        + 0.1 * (x >= 0)
    )


def _mu3(x):
    below = 0.05 + 1.5 * x + 3.2 * x**2 + 2.7 * x**3
    above = 0.15 - 0.15 * x + 2.5 * x**2 - 1.5 * x**3
    return np.where(x < 0, below, above)


_MU_EVAL = {"mu1": _mu1, "mu2": _mu2, "mu3": _mu3}

# Second derivatives as (lo, hi, ascending poly coefficients) pieces; the
# discontinuity points (knots, cutoff) separate pieces.
_MU_D2_PIECES = {
    "mu1": (
        (-1.0, -0.2, (2.0,)),
        (-0.2, 0.2, (-2.0,)),
        (0.2, 0.4, (2.0,)),
        (0.4, 0.7, (-2.0,)),
        (0.7, 1.0, (2.0,)),
    ),
    "mu2": ((-1.0, 1.0, (-6.0, 47.94, -108.12, 71.2)),),
    "mu3": ((-1.0, 0.0, (6.4, 16.2)), (0.0, 1.0, (5.0, -9.0))),
}


def eval_mu(name: str, x):
    """Evaluate a mean function; support is [-1, 1]."""
    x = np.asarray(x, dtype=float)
    if np.any((x < -1.0) | (x > 1.0)):
        raise OutOfSupportError(f"{name} is defined on [-1, 1]")
    out = _MU_EVAL[name](x)
    return float(out) if out.ndim == 0 else out


def mu_second_derivative(name: str, x):
    """Analytic second derivative (undefined exactly at knots/cutoff)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out.fill(np.nan)
    for lo, hi, coeffs in _MU_D2_PIECES[name]:
        mask = (x >= lo) & (x <= hi)
        out[mask] = np.polynomial.Polynomial(coeffs)(x[mask])
    return float(out) if out.ndim == 0 else out


def max_abs_second_derivative(name: str) -> float:
    """Analytic max of |mu''| over [-1, 1] away from the knot/cutoff points.

    For mu1 this is 2 and for mu2 it is 233.26 (attained at x = -1), both
    matching the designs' nominal bounds.  For mu3 the analytic value is 9.8 (also
    at x = -1), which does NOT match the nominal 16.2; 16.2 is the slope
    coefficient of mu3'' below the cutoff, suggesting a transcription slip.
    The nominal value stays available as
    ``MU_FUNCTIONS['mu3'].nominal_curvature_bound``; neither number is
    silently substituted for the other.
    """
    worst = 0.0
    for lo, hi, coeffs in _MU_D2_PIECES[name]:
        poly = np.polynomial.Polynomial(coeffs)
        candidates = [lo, hi]
        deriv = poly.deriv()
        if deriv.degree() >= 1:
            for root in deriv.roots():
                if abs(root.imag) < 1e-12 and lo < root.real < hi:
                    candidates.append(float(root.real))
        worst = max(worst, max(abs(float(poly(c))) for c in candidates))
    return worst


# ---------------------------------------------------------------------------
# Data generation
# ---------------------------------------------------------------------------


def generate_dataset(rv: str, mu: str, n: int, rng: np.random.Generator) -> RDSample:
    """Draw one simulated sample: inverse-CDF Beta scores, normal noise.

    Scores come from the Beta quantile function applied to uniforms (rather
    than a rejection sampler) so the draw is reproducible across platforms
    for a pinned seed; the uniform vector is drawn before the noise vector.
    """
    spec = RV_SPECS[rv]
    x = beta_quantile(spec, rng.random(n))
    y = eval_mu(mu, x) + NOISE_SD * rng.standard_normal(n)
    return RDSample(x=x, y=y, cutoff=CUTOFF)


def resolve_study_size(rv: str, m_bar: float) -> int:
    """Sample size achieving a population DISS target, on the Beta scale."""
    spec_z = RV_SPECS[rv].untransformed()
    sigma_star = beta_sigma_star(spec_z)
    return n_for_target_diss(spec_z, 0.5, sigma_star, m_bar)


def design_table() -> list[dict]:
    """The full study-size grid: n and rule-of-thumb bandwidth per (rv, m_bar)."""
    from .bandwidth import silverman_rot_population

    rows = []
    for rv in RV_SPECS:
        spec_z = RV_SPECS[rv].untransformed()
        sigma_star = beta_sigma_star(spec_z)
        for m_bar in M_BAR_GRID:
            n = resolve_study_size(rv, m_bar)
            rows.append(
                {
                    "rv": rv,
                    "m_bar": m_bar,
                    "n": n,
                    "h_rot": round(silverman_rot_population(1.34 * sigma_star, sigma_star, n), 3),
                }
            )
    return rows


# ---------------------------------------------------------------------------
# Cell specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellSpec:
    """One simulation cell: a DGP, a study size, methods, and run controls."""

    rv: str
    mu: str
    m_bar: float | None = None
    n: int | None = None
    replications: int = 2000
    seed: int = 0
    methods: tuple[str, ...] = DEFAULT_METHODS
    alpha: float = 0.05
    lr_min: int = 5
    m_bound: float | None = None
    workers: int = 1
    max_exact: int = DEFAULT_MAX_EXACT
    n_mc: int = DEFAULT_N_MC
    grid_points: int = DEFAULT_GRID_POINTS

    def cell_id(self) -> str:
        size = f"mbar{self.m_bar:g}" if self.m_bar is not None else f"n{self.n}"
        return f"{self.rv}_{self.mu}_{size}"


_CONTINUITY_BW = ("ik", "ak", "akm")
_CONTINUITY_INF = ("cv", "rbc", "flci")


def canonical_method_id(method: str, lr_min: int) -> str:
    return f"lr{lr_min}" if method in ("lr", f"lr{lr_min}") else method


def _validate_method(method: str, lr_min: int, path: str) -> str:
    if method == "lr" or method == f"lr{lr_min}":
        return f"lr{lr_min}"
    parts = method.split("/")
    if len(parts) == 2 and parts[0] in _CONTINUITY_BW and parts[1] in _CONTINUITY_INF:
        return method
    raise SpecValidationError(f"{path}: unknown method id {method!r}")


def validate_cell_spec(raw: dict) -> CellSpec:
    """Build a CellSpec from a JSON-style dict, reporting the failing field."""
    if not isinstance(raw, dict):
        raise SpecValidationError("spec: expected a JSON object")
    known = set(CellSpec.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise SpecValidationError(f"{key}: unknown field")

    def _get(key, type_, default, check=None, desc=""):
        value = raw.get(key, default)
        if value is None:
            return None
        try:
            value = type_(value)
        except (TypeError, ValueError):
            raise SpecValidationError(f"{key}: expected {type_.__name__}, got {value!r}")
        if check is not None and not check(value):
            raise SpecValidationError(f"{key}: {desc}, got {value!r}")
        return value

    rv = _get("rv", str, None, lambda v: v in RV_SPECS, f"one of {sorted(RV_SPECS)}")
    mu = _get("mu", str, None, lambda v: v in MU_FUNCTIONS, f"one of {sorted(MU_FUNCTIONS)}")
    if rv is None:
        raise SpecValidationError("rv: required")
    if mu is None:
        raise SpecValidationError("mu: required")
    m_bar = _get("m_bar", float, None, lambda v: v >= 1, ">= 1 required")
    n = _get("n", int, None, lambda v: v >= 1, ">= 1 required")
    if m_bar is None and n is None:
        raise SpecValidationError("m_bar: either m_bar or n is required")
    lr_min = _get("lr_min", int, 5, lambda v: v >= 1, ">= 1 required")
    methods_raw = raw.get("methods", list(DEFAULT_METHODS))
    if not isinstance(methods_raw, (list, tuple)) or not methods_raw:
        raise SpecValidationError("methods: expected a nonempty list")
    methods = tuple(
        _validate_method(str(m), lr_min, f"methods[{i}]")
        for i, m in enumerate(methods_raw)
    )
    return CellSpec(
        rv=rv,
        mu=mu,
        m_bar=m_bar,
        n=n,
        replications=_get("replications", int, 2000, lambda v: v >= 1, ">= 1 required"),
        seed=_get("seed", int, 0),
        methods=methods,
        alpha=_get("alpha", float, 0.05, lambda v: 0 < v < 1, "in (0, 1) required"),
        lr_min=lr_min,
        m_bound=_get("m_bound", float, None, lambda v: v > 0, "> 0 required"),
        workers=_get("workers", int, 1, lambda v: v >= 1, ">= 1 required"),
        max_exact=_get("max_exact", int, DEFAULT_MAX_EXACT, lambda v: v >= 1, ">= 1 required"),
        n_mc=_get("n_mc", int, DEFAULT_N_MC, lambda v: v >= 1, ">= 1 required"),
        grid_points=_get("grid_points", int, DEFAULT_GRID_POINTS, lambda v: v >= 3, ">= 3 required"),
    )


# ---------------------------------------------------------------------------
# Replication engine
# ---------------------------------------------------------------------------

# Per-method, per-replication outcome.
_FAIL = float("nan")


@dataclass(frozen=True)
class RepOutcome:
    bw_ok: bool
    bw: float  # bandwidth or window half-width; NaN when unavailable
    ok: bool
    tau: float
    lo: float
    hi: float
    reason: str = ""
    # Inversion-grid resolution (local randomization only): interval widths
    # are determined up to one grid step per endpoint, and width comparisons
    # downstream account for that.
    grid_step: float = _FAIL


def _fail(reason: str, bw_ok: bool = False, bw: float = _FAIL) -> RepOutcome:
    return RepOutcome(bw_ok, bw, False, _FAIL, _FAIL, _FAIL, reason)


def _rep_rng(cell: CellSpec, n: int, rep: int) -> np.random.Generator:
    key = zlib.crc32(cell.cell_id().encode("ascii"))
    return np.random.default_rng(np.random.SeedSequence([cell.seed, key, n, rep]))


def _adaptive_window(sample: RDSample, split, lr_min: int) -> LRWindow:
    """Nested-window rule with the per-side minimum capped at side size.

    The benchmark operating characteristics require the local-randomization
    method to run whenever both sides are populated (success rates of ~100%
    even at study sizes where a side holds fewer than lr_min points), so a
    deficient side contributes all of its points instead of failing.  The
    strict per-side contract lives in ``select_window``.
    """
    dist = np.abs(sample.x - sample.cutoff)
    per_side = []
    for idx in (split.below, split.above):
        eff = min(lr_min, idx.size)
        per_side.append(np.sort(dist[idx])[eff - 1])
    w = float(max(per_side))
    inside = dist <= w
    return LRWindow(
        half_width=w,
        indices_below=split.below[inside[split.below]],
        indices_above=split.above[inside[split.above]],
    )


def _replicate(cell: CellSpec, n: int, true_m: float, rep: int) -> dict[str, RepOutcome]:
    # empty sides inside a replication are ordinary failures, not warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptySideWarning)
        return _replicate_inner(cell, n, true_m, rep)


def _replicate_inner(cell: CellSpec, n: int, true_m: float, rep: int) -> dict[str, RepOutcome]:
    rng = _rep_rng(cell, n, rep)
    sample = generate_dataset(cell.rv, cell.mu, n, rng)

    methods = [canonical_method_id(m, cell.lr_min) for m in cell.methods]
    lr_id = f"lr{cell.lr_min}"
    continuity = [m for m in methods if m != lr_id]
    algs = sorted({m.split("/")[0] for m in continuity})
    needs_mhat = any(a in ("ik", "ak") for a in algs) and (
        "ak" in algs or any(m.endswith("/flci") for m in continuity)
    )

    split = validate(sample)

    out: dict[str, RepOutcome] = {}

    sigma2 = None
    sigma2_reason = ""
    if continuity:
        try:
            sigma2 = nn_variance(sample, split)
        except RDError:
            sigma2_reason = "nn_variance"

    mhat: CurvatureBound | None = None
    mhat_reason = ""
    if needs_mhat:
        try:
            mhat = estimate_m_hat(sample)
            if mhat.value <= 0:
                mhat, mhat_reason = None, "zero_curvature"
        except RDError:
            mhat_reason = "m_hat"

    bw_results: dict[str, BandwidthResult] = {}
    for alg in algs:
        if alg == "ik":
            bw_results["ik"] = ik_bandwidth(sample)
        elif alg == "ak":
            if mhat is None:
                bw_results["ak"] = BandwidthResult.failure("ak", mhat_reason)
            elif sigma2 is None:
                bw_results["ak"] = BandwidthResult.failure("ak", sigma2_reason)
            else:
                bw_results["ak"] = ak_bandwidth(sample, bound=mhat, sigma2=sigma2)
        elif alg == "akm":
            bound = CurvatureBound(true_m, "user")
            if sigma2 is None:
                bw_results["akm"] = BandwidthResult.failure("akm", sigma2_reason)
            else:
                try:
                    bw_results["akm"] = ak_bandwidth(sample, bound=bound, sigma2=sigma2)
                except ZeroCurvatureBoundError:
                    bw_results["akm"] = BandwidthResult.failure("akm", "zero_curvature")

    for method in continuity:
        alg, inf = method.split("/")
        bw = bw_results[alg]
        if not bw.ok:
            out[method] = _fail(bw.failure_reason or "bandwidth")
            continue
        if sigma2 is None:
            out[method] = _fail(sigma2_reason, bw_ok=True, bw=bw.h)
            continue
        flci_bound = None
        if inf == "flci":
            flci_bound = CurvatureBound(true_m, "user") if alg == "akm" else mhat
            if flci_bound is None:
                out[method] = _fail(mhat_reason, bw_ok=True, bw=bw.h)
                continue
        try:
            if inf == "cv":
                est = cv_interval(sample, bw.h, alpha=cell.alpha, sigma2=sigma2)
            elif inf == "rbc":
                est = rbc_interval(sample, bw.h, alpha=cell.alpha, sigma2=sigma2)
            else:
                est = flci_interval(
                    sample, bw.h, alpha=cell.alpha, bound=flci_bound, sigma2=sigma2
                )
            out[method] = RepOutcome(
                True, bw.h, True, est.tau_hat, est.ci_lower, est.ci_upper
            )
        except RDError as err:
            out[method] = _fail(type(err).__name__, bw_ok=True, bw=bw.h)

    if lr_id in methods:
        if split.empty_side is not None:
            out[lr_id] = _fail("empty_side")
        else:
            window = _adaptive_window(sample, split, cell.lr_min)
            try:
                est = lr_interval(
                    sample,
                    window,
                    alpha=cell.alpha,
                    grid_points=cell.grid_points,
                    max_exact=cell.max_exact,
                    n_mc=cell.n_mc,
                    rng=rng,
                )
                out[lr_id] = RepOutcome(
                    True,
                    window.half_width,
                    True,
                    est.tau_hat,
                    est.ci_lower,
                    est.ci_upper,
                    grid_step=est.diagnostics["grid_step"],
                )
            except RDError as err:
                out[lr_id] = _fail(type(err).__name__, bw_ok=True, bw=window.half_width)

    return out


def _run_chunk(cell: CellSpec, n: int, true_m: float, lo: int, hi: int):
    return [_replicate(cell, n, true_m, rep) for rep in range(lo, hi)]


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimCellResult:
    """Operating characteristics of one method in one cell.

    Point and interval metrics are computed on the common-success subset
    (replications where every method in the cell produced a finite
    interval); success rates use all replications.  ``mcse`` carries Monte
    Carlo standard errors: EmpSE/sqrt(R) for bias, sqrt(p(1-p)/R) for
    coverage, sd of squared errors over sqrt(R) for MSE.
    """

    dgp: str
    m_bar: float | None
    n: int
    method: str
    r_total: int
    r_common: int
    bw_success_rate: float
    interval_success_rate: float
    median_bandwidth: float
    bias: float
    emp_se: float
    mse: float
    coverage: float
    median_width: float
    median_grid_step: float
    mcse: dict
    failure_counts: dict

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CellResult:
    config: dict
    per_method: dict[str, SimCellResult]
    records: list  # (rep, method, RepOutcome) in replication order

    def to_json_dict(self) -> dict:
        return {
            "version": __version__,
            "config": self.config,
            "methods": {m: r.to_dict() for m, r in self.per_method.items()},
        }


def _aggregate(cell: CellSpec, n: int, true_m: float,
               rows: list[dict[str, RepOutcome]]) -> CellResult:
    methods = [canonical_method_id(m, cell.lr_min) for m in cell.methods]
    true_tau = MU_FUNCTIONS[cell.mu].true_tau
    r_total = len(rows)

    ok = {m: np.array([row[m].ok for row in rows]) for m in methods}
    common = np.logical_and.reduce([ok[m] for m in methods])
    r_common = int(common.sum())

    per_method = {}
    for m in methods:
        bw_ok = np.array([row[m].bw_ok for row in rows])
        bw = np.array([row[m].bw for row in rows])
        tau = np.array([row[m].tau for row in rows])
        lo = np.array([row[m].lo for row in rows])
        hi = np.array([row[m].hi for row in rows])

        reasons: dict[str, int] = {}
        for row in rows:
            if not row[m].ok:
                reasons[row[m].reason] = reasons.get(row[m].reason, 0) + 1

        steps = np.array([row[m].grid_step for row in rows])[common]
        steps = steps[np.isfinite(steps)]
        median_grid_step = float(np.median(steps)) if steps.size else _FAIL

        tau_c, lo_c, hi_c = tau[common], lo[common], hi[common]
        if r_common >= 2:
            bias = float(np.mean(tau_c) - true_tau)
            emp_se = float(np.std(tau_c, ddof=1))
            sq_err = (tau_c - true_tau) ** 2
            mse = float(np.mean(sq_err))
            coverage = float(np.mean((lo_c <= true_tau) & (true_tau <= hi_c)))
            median_width = float(np.median(hi_c - lo_c))
            mcse = {
                "bias": emp_se / math.sqrt(r_common),
                "coverage": math.sqrt(coverage * (1 - coverage) / r_common),
                "mse": float(np.std(sq_err, ddof=1)) / math.sqrt(r_common),
            }
        else:
            bias = emp_se = mse = coverage = median_width = _FAIL
            mcse = {"bias": _FAIL, "coverage": _FAIL, "mse": _FAIL}

        per_method[m] = SimCellResult(
            dgp=f"{cell.rv}{cell.mu}",
            m_bar=cell.m_bar,
            n=n,
            method=m,
            r_total=r_total,
            r_common=r_common,
            bw_success_rate=float(np.mean(bw_ok)),
            interval_success_rate=float(np.mean(ok[m])),
            median_bandwidth=float(np.median(bw[bw_ok])) if bw_ok.any() else _FAIL,
            bias=bias,
            emp_se=emp_se,
            mse=mse,
            coverage=coverage,
            median_width=median_width,
            median_grid_step=median_grid_step,
            mcse=mcse,
            failure_counts=dict(sorted(reasons.items())),
        )

    config = asdict(cell)
    # scheduling detail, not part of the result's identity: files must be
    # byte-identical across parallelism degrees
    del config["workers"]
    config["methods"] = list(methods)
    config["resolved_n"] = n
    config["resolved_m_bound"] = true_m
    config["true_tau"] = true_tau
    records = [(rep, m, rows[rep][m]) for rep in range(r_total) for m in methods]
    return CellResult(config=config, per_method=per_method, records=records)


def run_cell(cell: CellSpec) -> CellResult:
    """Run all replications of a cell and aggregate operating characteristics.

    Replication streams are independent of scheduling, so any ``workers``
    setting produces identical results.
    """
    n = cell.n if cell.n is not None else resolve_study_size(cell.rv, cell.m_bar)
    true_m = (
        cell.m_bound
        if cell.m_bound is not None
        else MU_FUNCTIONS[cell.mu].nominal_curvature_bound
    )
    r = cell.replications
    if cell.workers <= 1 or r < 2 * cell.workers:
        rows = _run_chunk(cell, n, true_m, 0, r)
    else:
        bounds = np.linspace(0, r, cell.workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=cell.workers) as pool:
            futures = [
                pool.submit(_run_chunk, cell, n, true_m, int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:])
            ]
            rows = [row for fut in futures for row in fut.result()]
    return _aggregate(cell, n, true_m, rows)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("rep", "method", "bw", "success", "tau_hat", "ci_lo", "ci_hi",
                "width", "covered")


def _fmt(value: float) -> str:
    return "" if not np.isfinite(value) else repr(float(value))


def replications_csv(result: CellResult) -> str:
    """Per-replication records as CSV text (deterministic formatting)."""
    true_tau = result.config["true_tau"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for rep, method, rec in result.records:
        if rec.ok:
            covered = int(rec.lo <= true_tau <= rec.hi)
            writer.writerow(
                [rep, method, _fmt(rec.bw), 1, _fmt(rec.tau), _fmt(rec.lo),
                 _fmt(rec.hi), _fmt(rec.hi - rec.lo), covered]
            )
        else:
            writer.writerow([rep, method, _fmt(rec.bw), 0, "", "", "", "", ""])
    return buf.getvalue()


def write_cell_outputs(result: CellResult, outdir: str | Path) -> tuple[Path, Path]:
    """Write result JSON and per-replication CSV; returns the two paths.

    Output bytes are a pure function of the cell spec (no timestamps), so
    re-running a cell with any parallelism degree reproduces the files
    exactly.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    size = f"mbar{cfg['m_bar']:g}" if cfg["m_bar"] is not None else f"n{cfg['n']}"
    stem = f"{cfg['rv']}_{cfg['mu']}_{size}"
    json_path = outdir / f"{stem}.json"
    csv_path = outdir / f"{stem}_replications.csv"
    payload = json.dumps(result.to_json_dict(), sort_keys=True, indent=2,
                         allow_nan=True)
    json_path.write_text(payload + "\n", encoding="utf-8")
    csv_path.write_text(replications_csv(result), encoding="utf-8")
    return json_path, csv_path
