"""Independent oracle computations shared across test modules.

Everything here recomputes quantities from their defining formulas by
direct summation or quadrature, deliberately avoiding the library's own
closed forms.
"""

import math

import numpy as np

from ivdml import ConfidenceSet, Kernel, ResidualSet, kernel_eval


def simpson_normal_cdf(x: float, lo: float = -12.0, n_panels: int = 24000) -> float:
    """Standard normal CDF by composite Simpson integration of the density."""
    if x <= lo:
        return 0.0
    grid = np.linspace(lo, x, 2 * n_panels + 1)
    pdf = np.exp(-0.5 * grid * grid) / math.sqrt(2.0 * math.pi)
    h = (x - lo) / (2 * n_panels)
    weights = np.ones_like(grid)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return float(h / 3.0 * np.sum(weights * pdf))


def make_residuals(r_y, r_d, r_f, v=None, mode="ml_iv") -> ResidualSet:
    """Build a ResidualSet from raw arrays (single pseudo-fold)."""
    r_y = np.asarray(r_y, dtype=float)
    v = np.zeros_like(r_y) if v is None else np.asarray(v, dtype=float)
    return ResidualSet(
        r_y=r_y, r_d=np.asarray(r_d, dtype=float), r_f=np.asarray(r_f, dtype=float),
        v=v, fold_of=np.zeros(len(r_y), dtype=int), mode=mode,
    )


def scan_membership(res: ResidualSet, gammas, z: float, v: float = None,
                    h: float = 1.0, kernel: Kernel = None) -> np.ndarray:
    """Membership of each gamma in the defining score-test set, by direct sums.

    Without a target point this is the homogeneous test
    |Q(g)| <= z SE(g)/sqrt(N); with one, the kernel-weighted version with
    the sqrt(N h) scaling.
    """
    r_y, r_d, r_f = res.r_y, res.r_d, res.r_f
    n = len(r_y)
    if v is None:
        w = np.ones(n)
        hh = 1.0
    else:
        w = np.asarray(kernel_eval(kernel, (res.v - v) / h))
        hh = h
    out = []
    for g in np.atleast_1d(gammas):
        resid = r_y - g * r_d
        q = float(np.sum(resid * r_f * w) / (n * hh))
        se2 = float(np.sum(resid**2 * r_f**2 * w**2) / (n * hh)) - hh * q * q
        se = math.sqrt(max(se2, 0.0))
        out.append(abs(q) * math.sqrt(n * hh) <= z * se)
    return np.asarray(out)


def assert_set_matches_scan(cs: ConfidenceSet, gammas, member: np.ndarray,
                            step: float) -> None:
    """Closed-form set and grid scan may disagree only within one grid step
    of a closed-form boundary."""
    for g, m in zip(np.atleast_1d(gammas), member):
        if cs.contains(float(g)) == bool(m):
            continue
        if cs.shape == "whole_line":
            raise AssertionError(f"scan excludes {g} but the set is the whole line")
        dist = min(abs(float(g) - b) for b in cs.bounds if math.isfinite(b))
        assert dist <= step, (
            f"membership mismatch at {g}: set={cs.contains(float(g))}, scan={bool(m)}, "
            f"distance to boundary {dist} > step {step}"
        )
