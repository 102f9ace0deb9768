"""Data-driven bandwidth selection for boundary local-linear regression.

Three selectors:

* ``silverman_rot`` — the density rule of thumb 0.9 * s* * n^(-1/5) with
  s* = min(IQR/1.34, sd).  Method-free, so it anchors the study-size metric.
* ``ik_bandwidth`` — plug-in minimizer of the asymptotic MSE of the LATE
  estimator, with a regularization term that keeps the bandwidth finite when
  the two one-sided curvature estimates nearly cancel.
* ``ak_bandwidth`` — direct finite-sample MSE minimization under a global
  second-derivative bound M (user supplied, or estimated by
  ``estimate_m_hat``).

Selectors return a ``BandwidthResult`` rather than raising on data-dependent
failure: a pilot stage that cannot run is an outcome the Monte Carlo harness
counts, not an exception.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import RDSample, validate
from .errors import (
    BadBandwidthError,
    DegenerateSampleError,
    InsufficientDataError,
    NonFiniteError,
    ZeroCurvatureBoundError,
)
from .local_poly import Kernel, local_poly_fit, nn_variance

# Pilot constants for the plug-in selector.  The first-stage window is
# 1.84 * s* * n^(-1/5); the curvature-stage windows scale the variance/
# curvature ratio to the n^(-1/7) rate optimal for second-derivative
# estimation; 2160 is the variance constant of a one-sided quadratic fit's
# second-derivative estimate, which sizes the regularization term.
_PILOT_H1_FACTOR = 1.84
_PILOT_H2_FACTOR = 3.56
_PILOT_H2_RATE = 1.0 / 7.0
_REGULARIZATION_CONST = 2160.0
# Floor on the squared third-derivative estimate in the curvature-stage
# window formula, in natural response/score units.  Keeps the window finite
# on locally-cubicless data; note it is unit dependent, so exact scale
# equivariance of the selector holds only while the floor is not binding.
_M3_FLOOR = 0.01


@dataclass(frozen=True)
class CurvatureBound:
    """Global bound M on |second derivative of the mean function|."""

    value: float
    source: str  # "user" or "data_driven"

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise NonFiniteError(f"curvature bound must be finite and >= 0, got {self.value}")


@dataclass(frozen=True)
class BandwidthResult:
    """Outcome of a bandwidth algorithm: a value or a failure reason."""

    algorithm: str
    h: float | None
    failure_reason: str | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def ok(self) -> bool:
        return self.h is not None

    @staticmethod
    def failure(algorithm: str, reason: str, **diagnostics) -> "BandwidthResult":
        return BandwidthResult(algorithm, None, reason, dict(diagnostics))


def _sample_spread(x: np.ndarray) -> float:
    """s* = min(IQR/1.34, sd), linear-interpolation quartiles, sd with ddof=1."""
    iqr = float(np.percentile(x, 75) - np.percentile(x, 25))
    sd = float(np.std(x, ddof=1))
    return min(iqr / 1.34, sd)


def silverman_rot(x) -> float:
    """Rule-of-thumb bandwidth 0.9 * min(IQR/1.34, sd) * n^(-1/5)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise DegenerateSampleError(f"need n >= 2, got n={x.size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("running variable contains NaN or inf")
    s = _sample_spread(x)
    if s <= 0:
        raise DegenerateSampleError("running variable has zero spread")
    return 0.9 * s * x.size ** (-0.2)


def silverman_rot_population(iqr: float, sd: float, n: int) -> float:
    """Population rule of thumb 0.9 * min(iqr/1.34, sd) * n^(-1/5).

    Callers choose the scale of (iqr, sd); the study-size metric is invariant
    to that choice as long as cutoff and spread use the same scale.
    """
    if not (np.isfinite(iqr) and np.isfinite(sd)) or iqr <= 0 or sd <= 0:
        raise DegenerateSampleError(f"population iqr/sd must be positive, got {iqr}, {sd}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 0.9 * min(iqr / 1.34, sd) * n ** (-0.2)


# ---------------------------------------------------------------------------
# Kernel constant
# ---------------------------------------------------------------------------

_KERNEL_POLY = {
    # Coefficients of k(u) on [0, 1], ascending powers, exact rationals.
    Kernel.TRIANGULAR: (Fraction(1), Fraction(-1)),
    Kernel.UNIFORM: (Fraction(1, 2),),
    Kernel.EPANECHNIKOV: (Fraction(3, 4), Fraction(0), Fraction(-3, 4)),
}


def _poly_moment(coeffs, j: int) -> Fraction:
    return sum(c / Fraction(i + j + 1) for i, c in enumerate(coeffs))


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ca in enumerate(a):
        for k, cb in enumerate(b):
            out[i + k] += ca * cb
    return out


def kernel_constant(kernel: Kernel) -> float:
    """Boundary local-linear AMSE constant of a kernel, fifth-root scale.

    Built from the one-sided kernel moments nu_j = integral of u^j k(u) on
    [0, 1]: with b the equivalent-kernel bias constant and v its variance
    constant, the MSE-optimal bandwidth is (v/b^2)^(1/5) times
    ((sigma+^2 + sigma-^2) / (f * (mu''+ - mu''-)^2 * n))^(1/5); this
    function returns (v/b^2)^(1/5).  Triangular: 480^(1/5) = 3.4375...

    Exact rational arithmetic, so the value is deterministic per kernel.
    """
    coeffs = _KERNEL_POLY[kernel]
    nu = [_poly_moment(coeffs, j) for j in range(4)]
    det = nu[0] * nu[2] - nu[1] ** 2
    bias_const = (nu[2] ** 2 - nu[1] * nu[3]) / det
    # variance constant: integral of ((nu2 - nu1 u) k(u))^2 / det^2
    equiv = _poly_mul((nu[2], -nu[1]), coeffs)
    var_const = _poly_moment(_poly_mul(equiv, equiv), 0) / det**2
    return float(var_const / bias_const**2) ** 0.2


# ---------------------------------------------------------------------------
# Plug-in selector
# ---------------------------------------------------------------------------


def _pilot_stage(sample: RDSample):
    """First pilot stage: density and per-side response variances at the cutoff.

    Returns (h1, f_hat, s2_below, s2_above, n1_below, n1_above) or a failure
    reason string in place of the tuple.
    """
    x, y, c = sample.x, sample.y, sample.cutoff
    try:
        s_star = _sample_spread(x)
    except Exception:
        return "degenerate_running_variable"
    if s_star <= 0:
        return "degenerate_running_variable"
    h1 = _PILOT_H1_FACTOR * s_star * x.size ** (-0.2)
    below = (x >= c - h1) & (x < c)
    above = (x >= c) & (x <= c + h1)
    n1m, n1p = int(below.sum()), int(above.sum())
    if n1m < 2 or n1p < 2:
        return "pilot_variance"
    f_hat = (n1m + n1p) / (2.0 * x.size * h1)
    s2m = float(np.var(y[below], ddof=1))
    s2p = float(np.var(y[above], ddof=1))
    if s2m + s2p <= 0:
        return "pilot_variance_zero"
    return h1, f_hat, s2m, s2p, n1m, n1p


def ik_bandwidth(sample: RDSample, kernel: Kernel = Kernel.TRIANGULAR) -> BandwidthResult:
    """Regularized plug-in bandwidth for the boundary local-linear LATE.

    Pipeline: (i) rule-of-thumb pilot window gives f_hat(c) and per-side
    variances; (ii) a global cubic with an intercept jump sizes one-sided
    quadratic windows, whose fits give the one-sided curvatures mu''+-(c);
    (iii) a regularization term r = sum of 2160 * s2 / (N2 * h2^4) is added
    to the squared curvature difference.  The bandwidth is

        C_K * [ (s2+ + s2-) / (n * f_hat * ((mu''+ - mu''-)^2 + r)) ]^(1/5)

    which has the n^(-1/5) rate and is exactly scale equivariant while the
    curvature-window floor is not binding.  Any infeasible stage returns a
    ``BandwidthResult`` failure with a stage-specific reason.
    """
    algorithm = "ik"
    split = validate(sample)
    if split.empty_side is not None:
        return BandwidthResult.failure(algorithm, "empty_side")

    stage = _pilot_stage(sample)
    if isinstance(stage, str):
        return BandwidthResult.failure(algorithm, stage)
    h1, f_hat, s2m, s2p, n1m, n1p = stage

    x, y, c = sample.x, sample.y, sample.cutoff
    n = sample.n
    u = x - c

    # Global cubic with a jump dummy; its cubic coefficient estimates the
    # third derivative used to size the curvature windows.
    scale = max(np.abs(u).max(), 1e-300)
    t = u / scale
    design = np.column_stack([np.ones(n), (u >= 0).astype(float), t, t**2, t**3])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 5:
        return BandwidthResult.failure(algorithm, "pilot_cubic")
    m3 = 6.0 * coef[4] / scale**3

    m3sq = max(m3**2, _M3_FLOOR)
    h2m = _PILOT_H2_FACTOR * (s2m / (f_hat * m3sq)) ** _PILOT_H2_RATE * split.n_below ** (-_PILOT_H2_RATE)
    h2p = _PILOT_H2_FACTOR * (s2p / (f_hat * m3sq)) ** _PILOT_H2_RATE * split.n_above ** (-_PILOT_H2_RATE)

    curvature = {}
    windows = {}
    for side, h2 in (("below", h2m), ("above", h2p)):
        try:
            fit = local_poly_fit(sample, side, degree=2, h=h2, kernel=Kernel.UNIFORM)
        except (InsufficientDataError, BadBandwidthError):
            return BandwidthResult.failure(algorithm, f"pilot_curvature_{side}")
        curvature[side] = fit.second_derivative(y)
        windows[side] = fit.n_effective

    r_below = _REGULARIZATION_CONST * s2m / (windows["below"] * h2m**4)
    r_above = _REGULARIZATION_CONST * s2p / (windows["above"] * h2p**4)
    regularization = r_below + r_above

    c_k = kernel_constant(kernel)
    curv_gap = curvature["above"] - curvature["below"]
    denom = n * f_hat * (curv_gap**2 + regularization)
    h = c_k * ((s2m + s2p) / denom) ** 0.2
    if not np.isfinite(h) or h <= 0:
        return BandwidthResult.failure(algorithm, "nonfinite_result")

    return BandwidthResult(
        algorithm,
        float(h),
        diagnostics={
            "h1": h1,
            "f_hat": f_hat,
            "sigma2_below": s2m,
            "sigma2_above": s2p,
            "m3_hat": m3,
            "h2_below": h2m,
            "h2_above": h2p,
            "n2_below": windows["below"],
            "n2_above": windows["above"],
            "curvature_below": curvature["below"],
            "curvature_above": curvature["above"],
            "regularization": regularization,
            "kernel_constant": c_k,
        },
    )


# ---------------------------------------------------------------------------
# Bounded-curvature selector
# ---------------------------------------------------------------------------


def ak_plugin_bandwidth(
    s2_below: float, s2_above: float, f_at_cutoff: float, m: float, n: int,
    kernel: Kernel = Kernel.TRIANGULAR,
) -> float:
    """Closed-form bounded-curvature bandwidth
    [C_K (s2+ + s2-) / (4 f M^2 n)]^(1/5).

    Reported as a diagnostic alongside the finite-sample minimizer.
    """
    if m <= 0:
        raise ZeroCurvatureBoundError("plug-in bandwidth undefined for M = 0")
    c_k = kernel_constant(kernel)
    return float((c_k * (s2_below + s2_above) / (4.0 * f_at_cutoff * m**2 * n)) ** 0.2)


def _grid_objective(u: np.ndarray, sig2: np.ndarray, grid: np.ndarray,
                    kernel: Kernel, block: int = 32):
    """One side's worst-case-bias and variance loadings for every candidate h.

    Evaluates the degree-1 intercept-extraction weights in closed form (the
    2x2 normal equations) for all candidates at once:

        w_i = k(t_i) (S2 - S1 t_i) / (S0 S2 - S1^2),  t_i = u_i / h

    and returns (feasible, bias_load, variance) with
    bias_load = sum |w_i| u_i^2 and variance = sum w_i^2 sig2_i; candidates
    with fewer than two in-window points or a numerically singular design
    are marked infeasible.  Must agree with ``local_poly_fit`` weights (the
    test suite checks this); it exists only to keep the candidate sweep
    cheap.
    """
    order = np.argsort(np.abs(u))
    u = u[order]
    sig2 = sig2[order]
    absu = np.abs(u)
    k_count = grid.size
    feasible = np.zeros(k_count, dtype=bool)
    bias_load = np.full(k_count, np.inf)
    variance = np.full(k_count, np.inf)
    counts = np.searchsorted(absu, grid, side="left")

    for start in range(0, k_count, block):
        stop = min(start + block, k_count)
        h = grid[start:stop, None]
        m_max = int(counts[start:stop].max())
        if m_max < 2:
            continue
        t = u[None, :m_max] / h
        w = kernel.weight(t)
        w[np.abs(t) >= 1.0] = 0.0
        s0 = w.sum(axis=1)
        wt = w * t
        s1 = wt.sum(axis=1)
        s2 = (wt * t).sum(axis=1)
        det = s0 * s2 - s1**2
        ok = (counts[start:stop] >= 2) & (det > 1e-12 * np.maximum(s0 * s2, s1**2))
        safe_det = np.where(ok, det, 1.0)
        w_int = w * (s2[:, None] - s1[:, None] * t) / safe_det[:, None]
        bias_load[start:stop] = np.where(
            ok, (np.abs(w_int) * t**2).sum(axis=1) * h[:, 0] ** 2, np.inf
        )
        variance[start:stop] = np.where(
            ok, (w_int**2 * sig2[None, :m_max]).sum(axis=1), np.inf
        )
        feasible[start:stop] = ok
    return feasible, bias_load, variance


def ak_bandwidth(
    sample: RDSample,
    kernel: Kernel = Kernel.TRIANGULAR,
    bound: CurvatureBound | None = None,
    *,
    sigma2: np.ndarray | None = None,
    grid_size: int = 100,
) -> BandwidthResult:
    """Minimize the finite-sample MSE proxy worst-case-bias^2 + variance.

    For each candidate h on a logarithmic grid from the second-smallest
    per-side distance to the full data range, the degree-1 boundary fits
    give combined weights w; the candidate's score is

        (M/2 * sum |w_i| (x_i-c)^2)^2  +  sum w_i^2 sigma2_i

    with sigma2 the nearest-neighbor residual variances.  The minimizer is
    returned; ties break toward smaller h.  The score depends on the
    response only through sigma2, so re-running with frozen sigma2 and new
    noise gives an identical bandwidth.

    Raises ``ZeroCurvatureBoundError`` for a zero bound (the objective would
    degenerate to pure variance minimization).
    """
    algorithm = "ak" if bound is None or bound.source == "data_driven" else "akm"
    if bound is None:
        raise ValueError("ak_bandwidth requires a curvature bound")
    if bound.value <= 0:
        raise ZeroCurvatureBoundError("bounded-curvature bandwidth requires M > 0")

    split = validate(sample)
    if split.empty_side is not None:
        return BandwidthResult.failure(algorithm, "empty_side")
    if split.n_below < 2 or split.n_above < 2:
        return BandwidthResult.failure(algorithm, "insufficient_side")

    if sigma2 is None:
        try:
            sigma2 = nn_variance(sample, split)
        except InsufficientDataError:
            return BandwidthResult.failure(algorithm, "nn_variance")

    u = sample.x - sample.cutoff
    dist_below = np.sort(np.abs(u[split.below]))
    dist_above = np.sort(np.abs(u[split.above]))
    h_lo = max(dist_below[1], dist_above[1])
    h_hi = float(sample.x.max() - sample.x.min())
    if h_lo <= 0:
        h_lo = max(1e-8 * h_hi, np.finfo(float).tiny)
    if h_hi <= h_lo:
        h_hi = 2.0 * h_lo
    grid = np.geomspace(h_lo, h_hi, grid_size)

    ok_b, bias_b, var_b = _grid_objective(u[split.below], sigma2[split.below], grid, kernel)
    ok_a, bias_a, var_a = _grid_objective(u[split.above], sigma2[split.above], grid, kernel)
    feasible = ok_b & ok_a
    if not feasible.any():
        return BandwidthResult.failure(algorithm, "no_feasible_h")

    half_m = 0.5 * bound.value
    bias_bound = half_m * (bias_b + bias_a)
    variance = var_b + var_a
    mse = np.where(feasible, bias_bound**2 + variance, np.inf)
    pick = int(np.argmin(mse))  # first minimum: ties break toward smaller h
    best = (float(mse[pick]), float(grid[pick]), float(bias_bound[pick]),
            float(variance[pick]))
    n_feasible = int(feasible.sum())

    diagnostics = {
        "m": bound.value,
        "m_source": bound.source,
        "mse_at_h": best[0],
        "bias_bound_at_h": best[2],
        "variance_at_h": best[3],
        "grid_lo": float(grid[0]),
        "grid_hi": float(grid[-1]),
        "n_feasible": n_feasible,
        "kernel_constant": kernel_constant(kernel),
    }
    stage = _pilot_stage(sample)
    if not isinstance(stage, str):
        _, f_hat, s2m, s2p, _, _ = stage
        diagnostics["h_plugin"] = ak_plugin_bandwidth(
            s2m, s2p, f_hat, bound.value, sample.n, kernel
        )
    return BandwidthResult(algorithm, best[1], diagnostics=diagnostics)


def estimate_m_hat(sample: RDSample) -> CurvatureBound:
    """Data-driven curvature bound from side-wise global quartic fits.

    Each side gets an ordinary least squares quartic in (x - c); the bound is
    the maximum of |second derivative of the fitted quartic| over that side's
    observed score range, maximized across sides.  Degree 4 keeps the second
    derivative a quadratic (flexible enough for strongly curved designs)
    while remaining estimable at very small samples.

    Raises
    ------
    InsufficientDataError
        A side has fewer than 5 points or fewer than 5 distinct scores.
    """
    split = validate(sample)
    worst = 0.0
    for name, idx in (("below", split.below), ("above", split.above)):
        xs = sample.x[idx]
        ys = sample.y[idx]
        if xs.size < 5 or np.unique(xs).size < 5:
            raise InsufficientDataError(
                f"side {name} needs >= 5 points with >= 5 distinct scores "
                f"for the quartic curvature fit"
            )
        u = xs - sample.cutoff
        scale = np.abs(u).max()
        t = u / scale
        design = np.vander(t, 5, increasing=True)
        coef, _, rank, _ = np.linalg.lstsq(design, ys, rcond=None)
        if rank < 5:
            raise InsufficientDataError(f"rank-deficient quartic design on side {name}")
        # q''(t) = 2 a2 + 6 a3 t + 12 a4 t^2, in score units divide by scale^2.
        a2, a3, a4 = coef[2], coef[3], coef[4]
        candidates = [t.min(), t.max()]
        if a4 != 0:
            vertex = -a3 / (4.0 * a4)
            if t.min() <= vertex <= t.max():
                candidates.append(vertex)
        side_worst = max(
            abs(2 * a2 + 6 * a3 * tc + 12 * a4 * tc**2) / scale**2
            for tc in candidates
        )
        # exactly polynomial-of-degree-<=1 responses leave only least-squares
        # roundoff in the curvature coefficients; snap that to a true zero so
        # downstream rejects it explicitly instead of fitting to noise
        y_scale = max(float(np.std(ys)), np.finfo(float).tiny)
        if side_worst < 1e-8 * y_scale / scale**2:
            side_worst = 0.0
        worst = max(worst, side_worst)
    return CurvatureBound(value=float(worst), source="data_driven")
