"""Homogeneous treatment effect: point estimate, variance, confidence sets.

The point estimate is two-stage least squares on the cross-fitted
residuals: bhat = mean(r_y r_f) / mean(r_d r_f).  The robust confidence
set inverts the score test |Q(b)| <= z * SE_Q(b) / sqrt(N), where
Q(b) = mean((r_y - b r_d) r_f); as a sublevel set of a parabola it is an
interval, the complement of an interval, or the whole real line.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .crossfit import ResidualSet
from .kernelband import gaussian_quantile

CONFIDENCE_SHAPES = ("interval", "two_rays", "whole_line")


class IrrelevantInstrumentError(RuntimeError):
    """The first-stage residual covariance is (locally) zero."""


@dataclass(frozen=True)
class QCoefficients:
    """Weighted residual cross-moments defining the score parabola.

    With unit weights and h = 1 these are plain sample means:
    a = mean(r_y r_f), b = mean(r_d r_f), c = mean(r_y^2 r_f^2),
    e = 2 mean(r_y r_d r_f^2), f = mean(r_d^2 r_f^2).  In the kernel-
    weighted case each term carries weights K((V_i - v)/h) (squared for
    c, e, f) and the normalizer 1/(N h).
    """

    a: float
    b: float
    c: float
    e: float
    f: float
    n_eff: int
    h: float = 1.0

    def __post_init__(self) -> None:
        for name in ("a", "b", "c", "e", "f", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"coefficient {name} is not finite")
        if self.c < 0 or self.f < 0:
            raise ValueError("c and f are sums of squares and cannot be negative")
        if self.n_eff < 1 or self.h <= 0:
            raise ValueError("need n_eff >= 1 and h > 0")

    def q_at(self, gamma):
        """Score value Q(gamma) = a - gamma * b (vectorized)."""
        return self.a - np.asarray(gamma, dtype=float) * self.b

    def se2_at(self, gamma):
        """Squared scale SE_Q^2(gamma) = c - gamma e + gamma^2 f - h Q(gamma)^2."""
        g = np.asarray(gamma, dtype=float)
        return self.c - g * self.e + g * g * self.f - self.h * self.q_at(g) ** 2

    @property
    def scale(self) -> float:
        """The root-n factor of the score statistic: sqrt(n_eff * h)."""
        return math.sqrt(self.n_eff * self.h)


@dataclass(frozen=True)
class ConfidenceSet:
    """An interval, the complement of an interval (two rays), or the line.

    ``interval``   bounds = (lo, hi), lo <= hi; lo may be -inf, hi +inf.
    ``two_rays``   bounds = (b1, b2): the set (-inf, b1] union [b2, inf).
    ``whole_line`` bounds = ().
    """

    shape: str
    bounds: tuple[float, ...]
    alpha: float
    note: str | None = None

    def __post_init__(self) -> None:
        if self.shape not in CONFIDENCE_SHAPES:
            raise ValueError(f"shape must be one of {CONFIDENCE_SHAPES}")
        bounds = tuple(float(b) for b in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if self.shape == "whole_line":
            if bounds:
                raise ValueError("whole_line carries no bounds")
        else:
            if len(bounds) != 2 or not bounds[0] <= bounds[1]:
                raise ValueError(f"{self.shape} needs two ordered bounds, got {bounds}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0,1), got {self.alpha}")

    def contains(self, x: float) -> bool:
        if self.shape == "whole_line":
            return True
        if self.shape == "interval":
            return self.bounds[0] <= x <= self.bounds[1]
        return x <= self.bounds[0] or x >= self.bounds[1]

    @property
    def length(self) -> float:
        """Lebesgue measure (inf for rays and the whole line)."""
        if self.shape == "interval":
            return self.bounds[1] - self.bounds[0]
        return math.inf

    def to_json_dict(self) -> dict:
        return {"shape": self.shape, "bounds": list(self.bounds), "alpha": self.alpha}


@dataclass(frozen=True)
class HomEstimate:
    """Point estimate, variance of sqrt(N)(bhat - b), and the score moments."""

    beta_hat: float
    sigma2_hat: float
    n_total: int
    qcoef: QCoefficients

    def __post_init__(self) -> None:
        if not math.isfinite(self.beta_hat):
            raise ValueError("beta_hat must be finite")
        if self.sigma2_hat < 0:
            raise ValueError("sigma2_hat cannot be negative")

    @property
    def se(self) -> float:
        """Standard error of the point estimate."""
        return math.sqrt(self.sigma2_hat / self.n_total)


def hom_coefficients(residuals: ResidualSet) -> QCoefficients:
    """Unweighted score moments over the pooled sample."""
    r_y, r_d, r_f = residuals.r_y, residuals.r_d, residuals.r_f
    rf2 = r_f * r_f
    return QCoefficients(
        a=float(np.mean(r_y * r_f)),
        b=float(np.mean(r_d * r_f)),
        c=float(np.mean(r_y * r_y * rf2)),
        e=2.0 * float(np.mean(r_y * r_d * rf2)),
        f=float(np.mean(r_d * r_d * rf2)),
        n_eff=residuals.n,
        h=1.0,
    )


def _ratio_or_raise(q: QCoefficients, what: str) -> float:
    if abs(q.b) <= 1e-12 * (1.0 + abs(q.a)):
        raise IrrelevantInstrumentError(what)
    return q.a / q.b


def estimate_hom(residuals: ResidualSet) -> HomEstimate:
    """Two-stage least squares on residuals with its variance estimate."""
    q = hom_coefficients(residuals)
    beta = _ratio_or_raise(q, "irrelevant instrument (zero first-stage covariance)")
    # mean((r_y - beta r_d)^2 r_f^2) expands to c - beta e + beta^2 f
    num = max(q.c - beta * q.e + beta * beta * q.f, 0.0)
    return HomEstimate(
        beta_hat=beta, sigma2_hat=num / (q.b * q.b), n_total=residuals.n, qcoef=q
    )


def standard_ci(est: HomEstimate, alpha: float) -> ConfidenceSet:
    """Symmetric asymptotic interval bhat +- z * sigma / sqrt(N)."""
    z = gaussian_quantile(1.0 - alpha / 2.0)
    half = z * est.se
    return ConfidenceSet(
        shape="interval", bounds=(est.beta_hat - half, est.beta_hat + half), alpha=alpha
    )


def q_stat(residuals: ResidualSet, beta: float) -> tuple[float, float]:
    """Score Q(beta) and its scale SE_Q(beta) on the pooled residuals."""
    q = hom_coefficients(residuals)
    val = float(q.q_at(beta))
    se2 = float(q.se2_at(beta))
    if se2 < 0.0:
        if se2 < -1e-10 * max(1.0, q.c):
            warnings.warn(f"SE_Q^2({beta}) = {se2} clamped to 0")
        se2 = 0.0
    return val, math.sqrt(se2)


def solve_quadratic_set(q: QCoefficients, alpha: float) -> ConfidenceSet:
    """Invert |Q(g)| <= z SE_Q(g)/scale into its explicit sublevel set.

    The inequality rearranges to R g^2 + S g + T <= 0 with
    R = b^2 + lam (h b^2 - f), S = -2ab + lam (e - 2 h a b),
    T = a^2 + lam (h a^2 - c), lam = z^2 / (n_eff h).
    """
    z = gaussian_quantile(1.0 - alpha / 2.0)
    lam = z * z / (q.n_eff * q.h)
    r_c = q.b * q.b + lam * (q.h * q.b * q.b - q.f)
    s_c = -2.0 * q.a * q.b + lam * (q.e - 2.0 * q.h * q.a * q.b)
    t_c = q.a * q.a + lam * (q.h * q.a * q.a - q.c)
    if r_c == 0.0:
        if s_c == 0.0:
            if t_c <= 0.0:
                return ConfidenceSet(shape="whole_line", bounds=(), alpha=alpha)
            return _degenerate_point(q, alpha)
        root = -t_c / s_c
        bounds = (-math.inf, root) if s_c > 0.0 else (root, math.inf)
        return ConfidenceSet(shape="interval", bounds=bounds, alpha=alpha)
    disc = s_c * s_c - 4.0 * r_c * t_c
    if r_c > 0.0:
        if disc <= 0.0:
            # only reachable through rounding: the point estimate is a member
            return _degenerate_point(q, alpha)
        half = math.sqrt(disc) / (2.0 * r_c)
        mid = -s_c / (2.0 * r_c)
        return ConfidenceSet(shape="interval", bounds=(mid - half, mid + half), alpha=alpha)
    if disc < 0.0:
        return ConfidenceSet(shape="whole_line", bounds=(), alpha=alpha)
    lo = (-s_c + math.sqrt(disc)) / (2.0 * r_c)
    hi = (-s_c - math.sqrt(disc)) / (2.0 * r_c)
    return ConfidenceSet(shape="two_rays", bounds=(lo, hi), alpha=alpha)


def _degenerate_point(q: QCoefficients, alpha: float) -> ConfidenceSet:
    beta = _ratio_or_raise(q, "set degenerate and point estimate undefined")
    warnings.warn("confidence set numerically empty; returning the point estimate")
    return ConfidenceSet(
        shape="interval", bounds=(beta, beta), alpha=alpha,
        note="numerically empty set collapsed to the point estimate",
    )


def robust_set_hom(residuals: ResidualSet, alpha: float) -> ConfidenceSet:
    """Weak-instrument-robust confidence set for the homogeneous effect."""
    return solve_quadratic_set(hom_coefficients(residuals), alpha)
