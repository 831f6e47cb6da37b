"""Synthetic data generators and the Monte-Carlo experiment runner.

The generators produce endogenous-treatment datasets with a hidden
confounder, a (possibly nonlinearly acting) instrument, and either a
constant or a smoothly varying treatment effect.  The experiment runner
replays estimation across seeded replications and reports mean squared
error and confidence-set coverage per method and target.
"""

from __future__ import annotations

import dataclasses
import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .aggregate import QCurveFamily, aggregate_point
from .crossfit import ResidualSet, compute_residuals, paired_residuals, resolve_specs
from .data import Sample, make_folds
from .het import NotEstimableError, estimate_het
from .hom import IrrelevantInstrumentError, estimate_hom
from .kernelband import BandwidthRule, Kernel, bandwidth, gaussian_quantile
from .learners import LearnerSpec
from .prng import child_seeds, make_generator, standard_normal

DIMENSIONS = ("one_d", "five_d")
BETA_KINDS = ("hom", "het")
F_KINDS = ("z_lin", "z_nonlin")
ENDOGENEITY_VARIANTS = ("baseline", "strong")
METHODS = ("hom_linearIV", "hom_mlIV", "het_linearIV", "het_mlIV")

# equicorrelated covariance for the five-dimensional design
_SIGMA_5D = 0.5 + 0.5 * np.eye(5)
_CHOL_5D = np.linalg.cholesky(_SIGMA_5D)


@dataclass(frozen=True)
class DgpSpec:
    """Configuration of one synthetic data-generating process."""

    dimension: str = "one_d"
    beta_kind: str = "hom"
    f_kind: str = "z_lin"
    strength: float = 1.0
    endogeneity_variant: str = "baseline"
    n: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"dimension must be one of {DIMENSIONS}")
        if self.beta_kind not in BETA_KINDS:
            raise ValueError(f"beta_kind must be one of {BETA_KINDS}")
        if self.f_kind not in F_KINDS:
            raise ValueError(f"f_kind must be one of {F_KINDS}")
        if self.endogeneity_variant not in ENDOGENEITY_VARIANTS:
            raise ValueError(f"endogeneity_variant must be one of {ENDOGENEITY_VARIANTS}")
        if self.strength < 0:
            raise ValueError(f"strength must be >= 0, got {self.strength}")
        if self.n < 10:
            raise ValueError(f"need n >= 10, got {self.n}")

    @property
    def label(self) -> str:
        return (
            f"{self.dimension},{self.beta_kind},{self.f_kind},"
            f"s={self.strength:g},{self.endogeneity_variant},n={self.n}"
        )

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_json_dict(obj: Mapping) -> "DgpSpec":
        return DgpSpec(**dict(obj))


def beta_truth(spec: DgpSpec) -> Callable[[np.ndarray], np.ndarray]:
    """The true treatment-effect function of the process."""
    if spec.beta_kind == "hom":
        return lambda v: np.ones_like(np.asarray(v, dtype=float))
    return lambda v: 2.0 * np.exp(-np.asarray(v, dtype=float) ** 2 / 2.0)


def _f_treatment(spec: DgpSpec, z: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = spec.strength
    if spec.dimension == "one_d":
        base = -np.sin(x[:, 0])
    else:
        base = -np.sin(x[:, 0]) + x[:, 1]
    if spec.f_kind == "z_lin":
        return base + s * z
    return base + s * (np.cos(z) + 0.2 * z)


def generate(spec: DgpSpec) -> tuple[Sample, Callable[[np.ndarray], np.ndarray]]:
    """Draw one dataset; bit-identical for identical (spec fields, seed)."""
    gen = make_generator(spec.seed)
    n = spec.n
    if spec.dimension == "one_d":
        block = standard_normal(gen, (5, n))
        x = block[0][:, None]
        h_conf, e_z, e_delta, e_eps = block[1], block[2], block[3], block[4]
        z = 0.5 * block[0] + e_z
        g_x = np.tanh(x[:, 0])
    else:
        raw = standard_normal(gen, (n, 5))
        x = raw @ _CHOL_5D.T
        block = standard_normal(gen, (4, n))
        h_conf, e_z, e_delta, e_eps = block
        z = 0.5 * x[:, 0] - 0.5 * x[:, 1] + e_z
        g_x = np.tanh(x[:, 0]) - x[:, 2]
    if spec.endogeneity_variant == "baseline":
        delta = 0.7 * h_conf + 0.7 * e_delta
        eps = np.sign(h_conf) - 0.5 + 0.5 * e_eps
    else:
        delta = 0.7 * h_conf + 0.1 * e_delta
        eps = 0.7 * h_conf + 0.1 * e_eps
    d = _f_treatment(spec, z, x) + delta
    truth = beta_truth(spec)
    v = x[:, 0]
    y = truth(v) * d + g_x + eps
    sample = Sample(y=y, d=d, z=z[:, None], x=x, v_col=0)
    return sample, truth


@dataclass(frozen=True)
class ExperimentRow:
    """Monte-Carlo summary for one (process, method, target)."""

    dgp: str
    method: str
    target: float | None
    mse: float
    coverage_standard: float
    coverage_standard_se: float
    coverage_robust: float
    coverage_robust_se: float
    mean_ci_length: float
    n_replications: int
    n_not_estimable: int

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ExperimentReport:
    """All rows of one experiment plus the resolved configuration."""

    rows: tuple[ExperimentRow, ...]
    config: dict

    def to_json_dict(self) -> dict:
        return {"config": self.config, "rows": [r.to_json_dict() for r in self.rows]}

    def to_csv_rows(self) -> list[dict]:
        return [r.to_json_dict() for r in self.rows]

    def row(self, dgp_label: str, method: str, target: float | None) -> ExperimentRow:
        for r in self.rows:
            if r.dgp == dgp_label and r.method == method:
                if target is None and r.target is None:
                    return r
                if target is not None and r.target is not None and r.target == target:
                    return r
        raise KeyError(f"no row for ({dgp_label!r}, {method!r}, {target!r})")


def _mode_of(method: str) -> str:
    return "ml_iv" if method.endswith("mlIV") else "linear_iv"


def _replication_worker(dgp: DgpSpec, dgp_idx: int, rep: int, *, methods: Sequence[str],
                        targets: Sequence[float], alpha: float, specs, seed: int,
                        k_folds: int, s_repetitions: int, kernel: Kernel,
                        rule: BandwidthRule, deviation_scale: float) -> dict:
    data_seed, fold_base = child_seeds(2, seed, dgp_idx, rep)
    sample, truth = generate(dataclasses.replace(dgp, seed=data_seed))
    want_ml = any(_mode_of(m) == "ml_iv" for m in methods)
    want_lin = any(_mode_of(m) == "linear_iv" for m in methods)
    residuals: dict[str, list[ResidualSet]] = {"ml_iv": [], "linear_iv": []}
    for s in range(s_repetitions):
        partition = make_folds(sample.n, k_folds, fold_base + s)
        if want_ml and want_lin:
            ml, lin = paired_residuals(sample, partition, specs)
            residuals["ml_iv"].append(ml)
            residuals["linear_iv"].append(lin)
        elif want_ml:
            residuals["ml_iv"].append(compute_residuals(sample, partition, specs, "ml_iv"))
        else:
            residuals["linear_iv"].append(
                compute_residuals(sample, partition, specs, "linear_iv")
            )
    z = gaussian_quantile(1.0 - alpha / 2.0)
    het_requested = any(m.startswith("het_") for m in methods)
    h = bandwidth(rule, sample.v) if het_requested else None
    out: dict[tuple[str, float | None], dict | None] = {}
    for method in methods:
        mode = _mode_of(method)
        res_list = residuals[mode]
        if method.startswith("hom_"):
            truth_val = 1.0
            try:
                ests = [estimate_hom(r) for r in res_list]
            except IrrelevantInstrumentError:
                out[(method, None)] = None
                continue
            agg = aggregate_point(
                [(e.beta_hat, e.sigma2_hat) for e in ests], deviation_scale
            )
            half = z * np.sqrt(agg.sigma2_star / sample.n)
            family = QCurveFamily([e.qcoef for e in ests])
            out[(method, None)] = {
                "sq_err": (agg.beta_star - truth_val) ** 2,
                "cover_std": abs(agg.beta_star - truth_val) <= half,
                "cover_rob": family.member(truth_val, alpha),
                "ci_len": 2.0 * half,
            }
        else:
            for v in targets:
                truth_val = float(truth(np.array([v]))[0])
                try:
                    ests = [estimate_het(r, v, h, kernel) for r in res_list]
                except (NotEstimableError, IrrelevantInstrumentError):
                    out[(method, v)] = None
                    continue
                agg = aggregate_point(
                    [(e.beta_hat_v, e.sigma2_hat_v) for e in ests], deviation_scale
                )
                half = z * np.sqrt(agg.sigma2_star / (sample.n * h))
                family = QCurveFamily([e.qcoef for e in ests])
                out[(method, v)] = {
                    "sq_err": (agg.beta_star - truth_val) ** 2,
                    "cover_std": abs(agg.beta_star - truth_val) <= half,
                    "cover_rob": family.member(truth_val, alpha),
                    "ci_len": 2.0 * half,
                }
    return out


def run_experiment(dgp_grid: Sequence[DgpSpec], methods: Sequence[str],
                   targets: Sequence[float], n_replications: int, alpha: float,
                   learner_specs: Mapping[str, LearnerSpec] | LearnerSpec,
                   seed: int, *, k_folds: int = 5, s_repetitions: int = 10,
                   kernel: Kernel = Kernel(), rule: BandwidthRule = BandwidthRule(),
                   deviation_scale: float = 1.0, threads: int = 1) -> ExperimentReport:
    """Monte-Carlo study of estimation error and confidence-set coverage.

    Replication r of process i derives its seeds from (seed, i, r), so
    results do not depend on the number of replications, the thread count,
    or the order of completion.  Failed replications are counted as
    not-estimable, never dropped silently.
    """
    methods = list(methods)
    targets = [float(v) for v in targets]
    if n_replications < 1:
        raise ValueError("need at least one replication")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; expected subset of {METHODS}")
    if not methods:
        raise ValueError("need at least one method")
    if any(m.startswith("het_") for m in methods) and not targets:
        raise ValueError("heterogeneous methods need at least one target value")
    for dgp in dgp_grid:
        if dgp.beta_kind == "het" and any(m.startswith("hom_") for m in methods):
            raise ValueError(
                "homogeneous methods have no defined truth under a heterogeneous process"
            )
    specs = resolve_specs(learner_specs)
    rows: list[ExperimentRow] = []
    for dgp_idx, dgp in enumerate(dgp_grid):
        worker = functools.partial(
            _replication_worker, dgp, dgp_idx, methods=methods, targets=targets,
            alpha=alpha, specs=specs, seed=seed, k_folds=k_folds,
            s_repetitions=s_repetitions, kernel=kernel, rule=rule,
            deviation_scale=deviation_scale,
        )
        if threads > 1:
            # worker processes sidestep the GIL; results merge in replication
            # order, so any worker count yields identical numbers
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(worker, range(n_replications)))
        else:
            results = [worker(rep) for rep in range(n_replications)]
        keys = [(m, None) if m.startswith("hom_") else (m, v)
                for m in methods for v in ([None] if m.startswith("hom_") else targets)]
        for method, target in keys:
            recs = [res[(method, target)] for res in results]
            good = [r for r in recs if r is not None]
            n_bad = len(recs) - len(good)
            if good:
                cs = float(np.mean([r["cover_std"] for r in good]))
                cr = float(np.mean([r["cover_rob"] for r in good]))
                m = len(good)
                row = ExperimentRow(
                    dgp=dgp.label, method=method, target=target,
                    mse=float(np.mean([r["sq_err"] for r in good])),
                    coverage_standard=cs,
                    coverage_standard_se=float(np.sqrt(cs * (1 - cs) / m)),
                    coverage_robust=cr,
                    coverage_robust_se=float(np.sqrt(cr * (1 - cr) / m)),
                    mean_ci_length=float(np.mean([r["ci_len"] for r in good])),
                    n_replications=n_replications, n_not_estimable=n_bad,
                )
            else:
                row = ExperimentRow(
                    dgp=dgp.label, method=method, target=target, mse=float("nan"),
                    coverage_standard=float("nan"), coverage_standard_se=float("nan"),
                    coverage_robust=float("nan"), coverage_robust_se=float("nan"),
                    mean_ci_length=float("nan"),
                    n_replications=n_replications, n_not_estimable=n_bad,
                )
            rows.append(row)
    config = {
        "dgp_grid": [d.to_json_dict() for d in dgp_grid],
        "methods": methods,
        "targets": targets,
        "n_replications": n_replications,
        "alpha": alpha,
        "learners": {k: s.to_json_dict() for k, s in specs.items()},
        "seed": seed,
        "k_folds": k_folds,
        "s_repetitions": s_repetitions,
        "kernel": kernel.kind,
        "bandwidth_rule": {"kind": rule.kind, "exponent": rule.exponent},
        "deviation_scale": deviation_scale,
    }
    return ExperimentReport(rows=tuple(rows), config=config)
