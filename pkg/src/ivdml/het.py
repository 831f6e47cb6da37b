"""Kernel-smoothed heterogeneous treatment effect over an effect modifier.

The estimator at a point v reweights the residual products by
K((V_i - v)/h): bhat(v) = A/B with
A = (1/(N h)) sum r_y r_f K, B = (1/(N h)) sum r_d r_f K.
Robust confidence sets invert |Q(g, v)| <= z SE_Q(g, v)/sqrt(N h) via the
same parabola sublevel form as the homogeneous case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .crossfit import ResidualSet
from .hom import (
    ConfidenceSet,
    IrrelevantInstrumentError,
    QCoefficients,
    _ratio_or_raise,
    solve_quadratic_set,
)
from .kernelband import BandwidthRule, Kernel, bandwidth, gaussian_quantile, kernel_eval


class NotEstimableError(RuntimeError):
    """No observation carries kernel weight at the requested point."""


@dataclass(frozen=True)
class HetEstimate:
    """Local effect estimate at v with the variance of sqrt(Nh)(bhat(v) - b(v))."""

    v: float
    beta_hat_v: float
    sigma2_hat_v: float
    h: float
    n_total: int
    qcoef: QCoefficients

    def __post_init__(self) -> None:
        if not math.isfinite(self.beta_hat_v):
            raise ValueError("beta_hat_v must be finite")
        if self.sigma2_hat_v < 0:
            raise ValueError("sigma2_hat_v cannot be negative")
        if self.h <= 0:
            raise ValueError("bandwidth must be positive")

    @property
    def se(self) -> float:
        """Standard error of the local point estimate."""
        return math.sqrt(self.sigma2_hat_v / (self.n_total * self.h))


def het_coefficients(residuals: ResidualSet, v: float, h: float,
                     kernel: Kernel) -> QCoefficients:
    """Kernel-weighted score moments at the point v."""
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    w = kernel_eval(kernel, (residuals.v - v) / h)
    if not np.any(w > 0.0):
        raise NotEstimableError(f"not estimable at v={v}: no kernel weight")
    r_y, r_d, r_f = residuals.r_y, residuals.r_d, residuals.r_f
    nh = residuals.n * h
    rfw = r_f * w
    rf2w2 = rfw * rfw
    return QCoefficients(
        a=float(np.sum(r_y * rfw) / nh),
        b=float(np.sum(r_d * rfw) / nh),
        c=float(np.sum(r_y * r_y * rf2w2) / nh),
        e=2.0 * float(np.sum(r_y * r_d * rf2w2) / nh),
        f=float(np.sum(r_d * r_d * rf2w2) / nh),
        n_eff=residuals.n,
        h=h,
    )


def estimate_het(residuals: ResidualSet, v: float, h: float,
                 kernel: Kernel) -> HetEstimate:
    """Local point estimate and variance at v."""
    q = het_coefficients(residuals, v, h, kernel)
    beta = _ratio_or_raise(q, f"locally irrelevant instrument at v={v}")
    num = max(q.c - beta * q.e + beta * beta * q.f, 0.0)
    return HetEstimate(
        v=v, beta_hat_v=beta, sigma2_hat_v=num / (q.b * q.b), h=h,
        n_total=residuals.n, qcoef=q,
    )


def standard_ci_het(est: HetEstimate, alpha: float) -> ConfidenceSet:
    """Pointwise interval bhat(v) +- z * sigma(v) / sqrt(N h)."""
    z = gaussian_quantile(1.0 - alpha / 2.0)
    half = z * est.se
    return ConfidenceSet(
        shape="interval", bounds=(est.beta_hat_v - half, est.beta_hat_v + half), alpha=alpha
    )


def robust_set_het(qcoef: QCoefficients, alpha: float) -> ConfidenceSet:
    """Weak-instrument-robust confidence set at one point."""
    return solve_quadratic_set(qcoef, alpha)


@dataclass(frozen=True)
class CurvePoint:
    """One grid point of a heterogeneous-effect curve."""

    v: float
    estimable: bool
    estimate: HetEstimate | None = None
    ci: ConfidenceSet | None = None
    robust: ConfidenceSet | None = None
    message: str | None = None


@dataclass(frozen=True)
class HetCurve:
    """Effect estimates, intervals, and robust sets over a grid of v values."""

    grid: tuple[float, ...]
    points: tuple[CurvePoint, ...]
    h: float
    alpha: float

    def __post_init__(self) -> None:
        g = np.asarray(self.grid, dtype=float)
        if g.size == 0:
            raise ValueError("grid must be non-empty")
        if g.size > 1 and not np.all(np.diff(g) > 0):
            raise ValueError("grid must be strictly increasing")

    def to_rows(self) -> list[dict]:
        rows = []
        for p in self.points:
            if p.estimable:
                rows.append({
                    "v": p.v,
                    "beta": p.estimate.beta_hat_v,
                    "se": p.estimate.se,
                    "ci_lo": p.ci.bounds[0],
                    "ci_hi": p.ci.bounds[1],
                    "robust_shape": p.robust.shape,
                    "robust_b1": p.robust.bounds[0] if p.robust.bounds else "",
                    "robust_b2": p.robust.bounds[1] if p.robust.bounds else "",
                    "estimable": 1,
                })
            else:
                rows.append({
                    "v": p.v, "beta": "", "se": "", "ci_lo": "", "ci_hi": "",
                    "robust_shape": "", "robust_b1": "", "robust_b2": "", "estimable": 0,
                })
        return rows


def default_grid(v_values, n_points: int = 101) -> np.ndarray:
    """Equispaced grid between the 2.5% and 97.5% quantiles of V."""
    lo = float(np.percentile(v_values, 2.5))
    hi = float(np.percentile(v_values, 97.5))
    if not lo < hi:
        raise ValueError("degenerate V distribution: quantile range is empty")
    return np.linspace(lo, hi, n_points)


def estimate_curve(residuals: ResidualSet, grid, rule: BandwidthRule,
                   kernel: Kernel, alpha: float) -> HetCurve:
    """Estimate the effect curve on a grid with one shared bandwidth.

    Per-point failures (no kernel mass, locally irrelevant instrument) are
    recorded as not-estimable points and never abort the curve.
    """
    grid = tuple(float(g) for g in np.atleast_1d(grid))
    h = bandwidth(rule, residuals.v)
    points = []
    for v in grid:
        try:
            est = estimate_het(residuals, v, h, kernel)
            points.append(CurvePoint(
                v=v, estimable=True, estimate=est,
                ci=standard_ci_het(est, alpha),
                robust=robust_set_het(est.qcoef, alpha),
            ))
        except (NotEstimableError, IrrelevantInstrumentError) as exc:
            points.append(CurvePoint(v=v, estimable=False, message=str(exc)))
    return HetCurve(grid=grid, points=tuple(points), h=h, alpha=alpha)
