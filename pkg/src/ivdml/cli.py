"""Command-line interface: fit, fit-het, simulate, check-kernel.

Every output artifact embeds the fully resolved configuration (including
the seed), so re-running with the same flags reproduces the file
byte-for-byte.  Configuration may also come from a JSON file (--config);
explicit flags take precedence over file values, which take precedence
over the built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from .aggregate import aggregate_point, aggregated_robust_set
from .crossfit import compute_residuals
from .data import ColumnRoles, DataError, load_csv, make_folds
from .het import NotEstimableError, default_grid, estimate_het, robust_set_het, standard_ci_het
from .hom import (
    ConfidenceSet,
    IrrelevantInstrumentError,
    estimate_hom,
    robust_set_hom,
    standard_ci,
)
from .crossfit import iv_strength
from .kernelband import BandwidthRule, Kernel, bandwidth, check_kernel, gaussian_quantile
from .learners import LearnerSpec
from .simulate import METHODS, DgpSpec, run_experiment


class CliError(ValueError):
    """Invalid command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # noqa: D401 - argparse hook
        raise CliError(message)


_LEARNER_ALIASES = {
    "ols": "ols",
    "spline": "additive_spline",
    "additive_spline": "additive_spline",
    "trees": "boosted_trees",
    "boosted_trees": "boosted_trees",
}

_NUISANCES = ("l", "phi1", "f", "phi2", "mu")


def _parse_learner(text: str) -> LearnerSpec:
    text = text.strip()
    if text.startswith("{"):
        return LearnerSpec.from_json_dict(json.loads(text))
    if text in _LEARNER_ALIASES:
        return LearnerSpec(_LEARNER_ALIASES[text])
    raise CliError(
        f"cannot parse learner {text!r}: use one of {sorted(_LEARNER_ALIASES)} or a "
        'JSON object {"kind": ..., "params": {...}}'
    )


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in str(text).split(","))
    except ValueError:
        raise CliError(f"cannot parse column list {text!r}") from None


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in str(text).split(","))
    except ValueError:
        raise CliError(f"cannot parse number list {text!r}") from None


def _parse_grid(text: str):
    if ":" in str(text):
        parts = str(text).split(":")
        if len(parts) != 3:
            raise CliError(f"grid must be lo:hi:count or a comma list, got {text!r}")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1 or not lo <= hi:
            raise CliError(f"invalid grid specification {text!r}")
        return np.linspace(lo, hi, count)
    return np.asarray(_parse_float_list(text))


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_or_print(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _write_csv(rows: list[dict], path: str | None) -> None:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    _write_or_print(buf.getvalue(), path)


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge flag values over config-file values over defaults."""
    file_cfg = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise CliError(f"unknown config keys {sorted(unknown)}")
    resolved = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        else:
            resolved[key] = default
    return resolved


def _default_threads() -> int:
    env = os.environ.get("IVDML_THREADS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise CliError(f"IVDML_THREADS must be an integer, got {env!r}") from None


def _learner_map(cfg: dict) -> dict[str, LearnerSpec]:
    base = cfg["learner"]
    base_spec = base if isinstance(base, LearnerSpec) else _parse_learner(str(base))
    specs = {}
    for name in _NUISANCES:
        override = cfg.get(f"learner_{name}")
        if override is None:
            specs[name] = base_spec
        elif isinstance(override, LearnerSpec):
            specs[name] = override
        else:
            specs[name] = _parse_learner(str(override))
    return specs


def _learner_config_json(specs: dict[str, LearnerSpec]) -> dict:
    return {name: spec.to_json_dict() for name, spec in specs.items()}


_FIT_DEFAULTS = {
    "data": None, "y": None, "d": None, "z": None, "x": None, "v": None,
    "mode": "ml", "k": 5, "reps": 10, "alpha": 0.05, "seed": 0,
    "learner": "spline", "learner_l": None, "learner_phi1": None,
    "learner_f": None, "learner_phi2": None, "learner_mu": None,
    "deviation_scale": 1.0, "export_residuals": None, "out": None,
}

_FIT_HET_EXTRA = {
    "kernel": "epanechnikov", "bandwidth": "undersmooth",
    "bandwidth_exponent": None, "grid": None, "out_json": None, "out_csv": None,
}


def _add_fit_flags(p: _Parser, het: bool) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--data", help="CSV dataset (header row required)")
    p.add_argument("--y", type=int, help="response column index")
    p.add_argument("--d", type=int, help="treatment column index")
    p.add_argument("--z", help="instrument column indices, comma separated")
    p.add_argument("--x", help="covariate column indices, comma separated")
    p.add_argument("--v", type=int, help="effect-modifier column index")
    p.add_argument("--mode", choices=("ml", "linear"), help="instrument mode")
    p.add_argument("--k", type=int, help="number of cross-fitting folds")
    p.add_argument("--reps", type=int, help="number of repeated cross-fit partitions")
    p.add_argument("--alpha", type=float, help="miscoverage level")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--learner", help="learner for every nuisance (name or JSON)")
    for name in _NUISANCES:
        p.add_argument(f"--learner-{name.replace('_', '-')}", dest=f"learner_{name}",
                       help=f"override learner for nuisance {name}")
    p.add_argument("--deviation-scale", dest="deviation_scale", type=float,
                   help="multiplier on the aggregation dispersion correction")
    p.add_argument("--export-residuals", dest="export_residuals",
                   help="write per-repetition residuals to this CSV path")
    if het:
        p.add_argument("--kernel", choices=("epanechnikov", "gaussian"))
        p.add_argument("--bandwidth", choices=("silverman", "undersmooth"))
        p.add_argument("--bandwidth-exponent", dest="bandwidth_exponent", type=float)
        p.add_argument("--grid", help="evaluation grid: lo:hi:count or comma list")
        p.add_argument("--out-json", dest="out_json", help="output JSON path")
        p.add_argument("--out-csv", dest="out_csv", help="output CSV path")
    else:
        p.add_argument("--out", help="output JSON path (default: stdout)")


def _load_sample(cfg: dict):
    for key in ("data", "y", "d", "z", "x", "v"):
        if cfg[key] is None:
            raise CliError(f"--{key} is required")
    roles = ColumnRoles(
        y=int(cfg["y"]), d=int(cfg["d"]),
        z=_parse_int_list(cfg["z"]), x=_parse_int_list(cfg["x"]), v=int(cfg["v"]),
    )
    return load_csv(cfg["data"], roles)


def _residual_sets(sample, cfg: dict, specs):
    mode = {"ml": "ml_iv", "linear": "linear_iv"}[cfg["mode"]]
    if cfg["reps"] < 1:
        raise CliError("--reps must be at least 1")
    sets = []
    for s in range(int(cfg["reps"])):
        partition = make_folds(sample.n, int(cfg["k"]), int(cfg["seed"]) + s)
        sets.append(compute_residuals(sample, partition, specs, mode))
    return sets


def _export_residuals(res_sets, path: str) -> None:
    rows = []
    for s, res in enumerate(res_sets):
        for i in range(res.n):
            rows.append({
                "repetition": s, "index": i, "fold": int(res.fold_of[i]),
                "r_y": repr(float(res.r_y[i])), "r_d": repr(float(res.r_d[i])),
                "r_f": repr(float(res.r_f[i])), "v": repr(float(res.v[i])),
            })
    _write_csv(rows, path)


def _config_json(cfg: dict, specs, command: str) -> dict:
    out = {k: v for k, v in cfg.items() if not k.startswith("learner")}
    out["command"] = command
    out["learners"] = _learner_config_json(specs)
    return out


def _cmd_fit(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _FIT_DEFAULTS)
    specs = _learner_map(cfg)
    sample = _load_sample(cfg)
    alpha = float(cfg["alpha"])
    res_sets = _residual_sets(sample, cfg, specs)
    if cfg["export_residuals"]:
        _export_residuals(res_sets, cfg["export_residuals"])
    ests = [estimate_hom(res) for res in res_sets]
    agg = aggregate_point([(e.beta_hat, e.sigma2_hat) for e in ests],
                          float(cfg["deviation_scale"]))
    se = math.sqrt(agg.sigma2_star / sample.n)
    z = gaussian_quantile(1.0 - alpha / 2.0)
    ci = ConfidenceSet(shape="interval", alpha=alpha,
                       bounds=(agg.beta_star - z * se, agg.beta_star + z * se))
    if len(ests) == 1:
        robust = robust_set_hom(res_sets[0], alpha)
    else:
        halfwidth = 10.0 * max(math.sqrt(e.sigma2_hat / sample.n) for e in ests)
        robust = aggregated_robust_set([e.qcoef for e in ests], alpha,
                                       center=agg.beta_star, halfwidth=halfwidth)
    payload = {
        "beta": agg.beta_star,
        "se": se,
        "ci": [ci.bounds[0], ci.bounds[1]],
        "robust": robust.to_json_dict(),
        "alpha": alpha,
        "n": sample.n,
        "iv_strength": float(np.median([iv_strength(res) for res in res_sets])),
        "per_repetition": [
            {"beta": e.beta_hat, "sigma2": e.sigma2_hat} for e in ests
        ],
        "config": _config_json(cfg, specs, "fit"),
    }
    _write_or_print(_json_text(payload), cfg["out"])
    return 0


def _cmd_fit_het(args: argparse.Namespace) -> int:
    cfg = _resolve(args, {**_FIT_DEFAULTS, **_FIT_HET_EXTRA})
    cfg.pop("out", None)
    specs = _learner_map(cfg)
    sample = _load_sample(cfg)
    alpha = float(cfg["alpha"])
    res_sets = _residual_sets(sample, cfg, specs)
    if cfg["export_residuals"]:
        _export_residuals(res_sets, cfg["export_residuals"])
    kernel = Kernel(cfg["kernel"])
    rule = BandwidthRule(cfg["bandwidth"], cfg["bandwidth_exponent"])
    h = bandwidth(rule, sample.v)
    grid = _parse_grid(cfg["grid"]) if cfg["grid"] else default_grid(sample.v)
    z = gaussian_quantile(1.0 - alpha / 2.0)
    rows = []
    points = []
    for v in grid:
        v = float(v)
        try:
            ests = [estimate_het(res, v, h, kernel) for res in res_sets]
        except (NotEstimableError, IrrelevantInstrumentError) as exc:
            rows.append({"v": v, "beta": "", "se": "", "ci_lo": "", "ci_hi": "",
                         "robust_shape": "", "robust_b1": "", "robust_b2": "",
                         "estimable": 0})
            points.append({"v": v, "estimable": False, "message": str(exc)})
            continue
        agg = aggregate_point([(e.beta_hat_v, e.sigma2_hat_v) for e in ests],
                              float(cfg["deviation_scale"]))
        se = math.sqrt(agg.sigma2_star / (sample.n * h))
        lo, hi = agg.beta_star - z * se, agg.beta_star + z * se
        if len(ests) == 1:
            robust = robust_set_het(ests[0].qcoef, alpha)
        else:
            halfwidth = 10.0 * max(
                math.sqrt(e.sigma2_hat_v / (sample.n * h)) for e in ests
            )
            robust = aggregated_robust_set([e.qcoef for e in ests], alpha,
                                           center=agg.beta_star, halfwidth=halfwidth)
        rows.append({
            "v": v, "beta": agg.beta_star, "se": se, "ci_lo": lo, "ci_hi": hi,
            "robust_shape": robust.shape,
            "robust_b1": robust.bounds[0] if robust.bounds else "",
            "robust_b2": robust.bounds[1] if robust.bounds else "",
            "estimable": 1,
        })
        points.append({
            "v": v, "estimable": True, "beta": agg.beta_star, "se": se,
            "ci": [lo, hi], "robust": robust.to_json_dict(),
        })
    payload = {
        "h": h,
        "alpha": alpha,
        "n": sample.n,
        "points": points,
        "config": _config_json(cfg, specs, "fit_het"),
    }
    if cfg["out_csv"]:
        _write_csv(rows, cfg["out_csv"])
    _write_or_print(_json_text(payload), cfg["out_json"])
    return 0


_SIM_DEFAULTS = {
    "dgp": "hom,z_lin", "n": 1000, "reps": 200, "s_reps": 10, "k": 5,
    "strength": 1.0, "methods": None, "targets": "0,1.5", "alpha": 0.05,
    "seed": 0, "kernel": "epanechnikov", "bandwidth": "undersmooth",
    "bandwidth_exponent": None, "learner": "spline", "learner_l": None,
    "learner_phi1": None, "learner_f": None, "learner_phi2": None,
    "learner_mu": None, "deviation_scale": 1.0, "threads": None,
    "out_json": None, "out_csv": None,
}

_DGP_TOKENS = {
    "hom": ("beta_kind", "hom"), "het": ("beta_kind", "het"),
    "z_lin": ("f_kind", "z_lin"), "z_nonlin": ("f_kind", "z_nonlin"),
    "one_d": ("dimension", "one_d"), "five_d": ("dimension", "five_d"),
    "baseline": ("endogeneity_variant", "baseline"),
    "strong": ("endogeneity_variant", "strong"),
}


def _parse_dgp(text: str, n: int, strength: float) -> DgpSpec:
    fields = {"n": int(n), "strength": float(strength)}
    for token in str(text).split(","):
        token = token.strip()
        if token not in _DGP_TOKENS:
            raise CliError(
                f"unknown process token {token!r}; expected one of {sorted(_DGP_TOKENS)}"
            )
        key, val = _DGP_TOKENS[token]
        fields[key] = val
    return DgpSpec(**fields)


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _SIM_DEFAULTS)
    specs = _learner_map(cfg)
    dgp = _parse_dgp(cfg["dgp"], cfg["n"], cfg["strength"])
    if cfg["methods"] is None:
        cfg["methods"] = ("het_mlIV,het_linearIV" if dgp.beta_kind == "het"
                          else "hom_mlIV,hom_linearIV")
    methods = [m.strip() for m in str(cfg["methods"]).split(",")]
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise CliError(f"unknown methods {sorted(unknown)}; expected subset of {METHODS}")
    targets = list(_parse_float_list(cfg["targets"]))
    threads = int(cfg["threads"]) if cfg["threads"] is not None else _default_threads()
    report = run_experiment(
        [dgp], methods, targets, int(cfg["reps"]), float(cfg["alpha"]), specs,
        int(cfg["seed"]), k_folds=int(cfg["k"]), s_repetitions=int(cfg["s_reps"]),
        kernel=Kernel(cfg["kernel"]),
        rule=BandwidthRule(cfg["bandwidth"], cfg["bandwidth_exponent"]),
        deviation_scale=float(cfg["deviation_scale"]), threads=threads,
    )
    payload = report.to_json_dict()
    payload["config"]["cli"] = _config_json(cfg, specs, "simulate")
    if cfg["out_csv"]:
        _write_csv(report.to_csv_rows(), cfg["out_csv"])
    _write_or_print(_json_text(payload), cfg["out_json"])
    return 0


def _cmd_check_kernel(args: argparse.Namespace) -> int:
    cfg = _resolve(args, {"kernel": "epanechnikov", "out": None})
    report = check_kernel(Kernel(cfg["kernel"]))
    payload = report.to_json_dict()
    payload["kernel"] = cfg["kernel"]
    payload["config"] = {"command": "check_kernel", "kernel": cfg["kernel"]}
    _write_or_print(_json_text(payload), cfg["out"])
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="ivdml", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="homogeneous effect on a CSV dataset")
    _add_fit_flags(p_fit, het=False)
    p_fit.set_defaults(func=_cmd_fit)

    p_het = sub.add_parser("fit-het", help="heterogeneous effect curve on a CSV dataset")
    _add_fit_flags(p_het, het=True)
    p_het.set_defaults(func=_cmd_fit_het)

    p_sim = sub.add_parser("simulate", help="seeded Monte-Carlo coverage study")
    p_sim.add_argument("--config")
    p_sim.add_argument("--dgp", help="comma tokens: hom|het, z_lin|z_nonlin, "
                                     "one_d|five_d, baseline|strong")
    p_sim.add_argument("--n", type=int, help="sample size per replication")
    p_sim.add_argument("--reps", type=int, help="number of Monte-Carlo replications")
    p_sim.add_argument("--s-reps", dest="s_reps", type=int,
                       help="repeated cross-fit partitions per replication")
    p_sim.add_argument("--k", type=int, help="number of folds")
    p_sim.add_argument("--strength", type=float, help="instrument strength multiplier")
    p_sim.add_argument("--methods", help="comma list from " + ",".join(METHODS))
    p_sim.add_argument("--targets", help="comma list of evaluation points v")
    p_sim.add_argument("--alpha", type=float)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--kernel", choices=("epanechnikov", "gaussian"))
    p_sim.add_argument("--bandwidth", choices=("silverman", "undersmooth"))
    p_sim.add_argument("--bandwidth-exponent", dest="bandwidth_exponent", type=float)
    p_sim.add_argument("--learner", help="learner for every nuisance (name or JSON)")
    for name in _NUISANCES:
        p_sim.add_argument(f"--learner-{name.replace('_', '-')}",
                           dest=f"learner_{name}")
    p_sim.add_argument("--deviation-scale", dest="deviation_scale", type=float)
    p_sim.add_argument("--threads", type=int,
                       help="worker threads (default: IVDML_THREADS or 1)")
    p_sim.add_argument("--out-json", dest="out_json")
    p_sim.add_argument("--out-csv", dest="out_csv")
    p_sim.set_defaults(func=_cmd_simulate)

    p_ck = sub.add_parser("check-kernel", help="numeric verification of a kernel")
    p_ck.add_argument("--config")
    p_ck.add_argument("--kernel", choices=("epanechnikov", "gaussian"))
    p_ck.add_argument("--out")
    p_ck.set_defaults(func=_cmd_check_kernel)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, DataError, ValueError, OSError, json.JSONDecodeError,
            NotEstimableError, IrrelevantInstrumentError) as exc:
        sys.stderr.write(_json_text(
            {"error": {"type": type(exc).__name__, "message": str(exc)}}
        ))
        return 2


if __name__ == "__main__":
    sys.exit(main())
