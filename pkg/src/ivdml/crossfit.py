"""Cross-fitted residuals feeding the treatment-effect estimators.

For each fold, four nuisance regressions are trained strictly on the
fold's complement and evaluated on the fold itself:

* outcome on covariates            -> residual ``r_y``
* treatment on covariates          -> residual ``r_d``
* treatment on (instruments, covariates), then a second-stage regression
  of those fitted values on covariates alone -> instrument residual ``r_f``

In ``linear_iv`` mode the instrument residual is instead the raw
(univariate) instrument minus its regression on the covariates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import FoldPartition, Sample
from .learners import LearnerSpec, fit

MODES = ("ml_iv", "linear_iv")

#: nuisance keys accepted in the per-nuisance spec map
NUISANCES = ("l", "phi1", "f", "phi2", "mu")


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ResidualSet:
    """Per-observation cross-fitted residuals plus fold bookkeeping."""

    r_y: np.ndarray
    r_d: np.ndarray
    r_f: np.ndarray
    v: np.ndarray
    fold_of: np.ndarray
    mode: str

    def __post_init__(self) -> None:
        for name in ("r_y", "r_d", "r_f", "v"):
            arr = _readonly(getattr(self, name))
            object.__setattr__(self, name, arr)
        fo = np.array(self.fold_of, dtype=int)
        fo.setflags(write=False)
        object.__setattr__(self, "fold_of", fo)
        n = self.r_y.shape[0]
        if n == 0:
            raise ValueError("residual set must be non-empty")
        for name in ("r_d", "r_f", "v", "fold_of"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must be aligned with r_y (length {n})")
        for name in ("r_y", "r_d", "r_f", "v"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def n(self) -> int:
        return self.r_y.shape[0]


def resolve_specs(specs: Mapping[str, LearnerSpec] | LearnerSpec) -> dict[str, LearnerSpec]:
    """Fill in the per-nuisance learner map.

    A bare LearnerSpec applies to every nuisance.  The second-stage
    regression ``phi2`` and the instrument-on-covariates regression ``mu``
    default to the ``phi1`` spec when not given explicitly.
    """
    if isinstance(specs, LearnerSpec):
        return {name: specs for name in NUISANCES}
    out = dict(specs)
    unknown = set(out) - set(NUISANCES)
    if unknown:
        raise ValueError(f"unknown nuisance keys {sorted(unknown)}; expected {NUISANCES}")
    for name in ("l", "phi1"):
        if name not in out:
            raise ValueError(f"learner spec for nuisance {name!r} is required")
    out.setdefault("phi2", out["phi1"])
    out.setdefault("mu", out["phi1"])
    out.setdefault("f", out["phi1"])
    return out


def _warn_if_constant(y: np.ndarray, what: str, k: int) -> None:
    if np.ptp(y) == 0.0:
        warnings.warn(
            f"training data for {what} is constant in fold {k}; "
            "learner falls back to the constant prediction"
        )


def _compute(sample: Sample, partition: FoldPartition,
             specs: dict[str, LearnerSpec], want_ml: bool, want_linear: bool,
             ) -> dict[str, np.ndarray]:
    if partition.n != sample.n:
        raise ValueError("fold partition does not cover the sample")
    if want_linear and sample.z.shape[1] != 1:
        raise ValueError(
            f"linear_iv mode requires a univariate instrument, got d_z={sample.z.shape[1]}"
        )
    n = sample.n
    zx = np.column_stack([sample.z, sample.x])
    out = {
        "r_y": np.empty(n),
        "r_d": np.empty(n),
        "r_f_ml": np.empty(n) if want_ml else None,
        "r_f_lin": np.empty(n) if want_linear else None,
    }
    for k in range(partition.k):
        test = partition.folds[k]
        train = partition.complement(k)
        if train.size < 2:
            raise ValueError(f"fold {k} leaves fewer than 2 training rows")
        x_tr, x_te = sample.x[train], sample.x[test]
        _warn_if_constant(sample.y[train], "the outcome regression", k)
        _warn_if_constant(sample.d[train], "the treatment regression", k)
        l_hat = fit(specs["l"], x_tr, sample.y[train])
        phi1_hat = fit(specs["phi1"], x_tr, sample.d[train])
        out["r_y"][test] = sample.y[test] - l_hat.predict(x_te)
        out["r_d"][test] = sample.d[test] - phi1_hat.predict(x_te)
        if want_ml:
            f_hat = fit(specs["f"], zx[train], sample.d[train])
            # second stage: project the learned instrument onto the covariates
            phi2_hat = fit(specs["phi2"], x_tr, f_hat.predict(zx[train]))
            out["r_f_ml"][test] = f_hat.predict(zx[test]) - phi2_hat.predict(x_te)
        if want_linear:
            mu_hat = fit(specs["mu"], x_tr, sample.z[train, 0])
            out["r_f_lin"][test] = sample.z[test, 0] - mu_hat.predict(x_te)
    return out


def compute_residuals(sample: Sample, partition: FoldPartition,
                      specs: Mapping[str, LearnerSpec] | LearnerSpec,
                      mode: str = "ml_iv", seed: int = 0) -> ResidualSet:
    """Cross-fitted residuals for one instrument mode.

    The built-in learners are deterministic; ``seed`` exists so stochastic
    learners added later stay reproducible through the same interface.
    """
    del seed
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    resolved = resolve_specs(specs)
    res = _compute(sample, partition, resolved,
                   want_ml=(mode == "ml_iv"), want_linear=(mode == "linear_iv"))
    r_f = res["r_f_ml"] if mode == "ml_iv" else res["r_f_lin"]
    return ResidualSet(r_y=res["r_y"], r_d=res["r_d"], r_f=r_f,
                       v=sample.v, fold_of=partition.fold_of, mode=mode)


def paired_residuals(sample: Sample, partition: FoldPartition,
                     specs: Mapping[str, LearnerSpec] | LearnerSpec,
                     ) -> tuple[ResidualSet, ResidualSet]:
    """Residual sets for both instrument modes, sharing the outcome and
    treatment fits (identical to computing the two modes separately)."""
    resolved = resolve_specs(specs)
    res = _compute(sample, partition, resolved, want_ml=True, want_linear=True)
    ml = ResidualSet(r_y=res["r_y"], r_d=res["r_d"], r_f=res["r_f_ml"],
                     v=sample.v, fold_of=partition.fold_of, mode="ml_iv")
    lin = ResidualSet(r_y=res["r_y"], r_d=res["r_d"], r_f=res["r_f_lin"],
                      v=sample.v, fold_of=partition.fold_of, mode="linear_iv")
    return ml, lin


def iv_strength(residuals: ResidualSet) -> float:
    """Sample proxy for instrument strength: mean of (r_y - bhat r_d)^2 r_f^2.

    Zero instrument residuals give 0.  Reported as a diagnostic only; if
    the first-stage covariance vanishes while r_f does not, the proxy is
    evaluated at 0 with a warning.
    """
    r_y, r_d, r_f = residuals.r_y, residuals.r_d, residuals.r_f
    if not np.any(r_f != 0.0):
        return 0.0
    denom = float(np.mean(r_d * r_f))
    if denom == 0.0:
        warnings.warn("zero first-stage covariance; evaluating IV strength at 0")
        beta = 0.0
    else:
        beta = float(np.mean(r_y * r_f)) / denom
    return float(np.mean((r_y - beta * r_d) ** 2 * r_f**2))
