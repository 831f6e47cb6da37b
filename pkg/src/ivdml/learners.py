"""Pluggable regression learners for the nuisance functions.

Three built-in learners, all deterministic given (spec, X, y):

* ``ols``             -- least squares with a minimum-norm fallback,
* ``additive_spline`` -- per-coordinate natural cubic splines with a ridge
                         penalty (a generalized-additive-model surrogate),
* ``boosted_trees``   -- histogram-based gradient-boosted regression trees
                         with deterministic tie-breaking.

Hyperparameters are tuned once on the full sample (:func:`tune`) and then
kept fixed across folds and repetitions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import make_folds

LEARNER_KINDS = ("ols", "additive_spline", "boosted_trees")

_DEFAULTS: dict[str, dict[str, float | int]] = {
    "ols": {},
    "additive_spline": {"knots": 8, "ridge": 1e-4},
    "boosted_trees": {
        "depth": 3,
        "learning_rate": 0.1,
        "rounds": 200,
        "min_leaf": 5,
        "max_bins": 64,
    },
}


@dataclass(frozen=True)
class LearnerSpec:
    """A learner kind plus its hyperparameters (defaults filled in)."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}, expected {LEARNER_KINDS}")
        merged = dict(_DEFAULTS[self.kind])
        for key, val in self.params.items():
            if key not in merged:
                raise ValueError(f"unknown parameter {key!r} for learner {self.kind!r}")
            merged[key] = val
        _validate_params(self.kind, merged)
        object.__setattr__(self, "params", merged)

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @staticmethod
    def from_json_dict(obj: Mapping) -> "LearnerSpec":
        return LearnerSpec(kind=obj["kind"], params=dict(obj.get("params", {})))


def _validate_params(kind: str, p: Mapping) -> None:
    if kind == "additive_spline":
        if not (isinstance(p["knots"], int) and p["knots"] >= 0):
            raise ValueError(f"knots must be a non-negative integer, got {p['knots']}")
        if p["ridge"] < 0:
            raise ValueError(f"ridge penalty must be >= 0, got {p['ridge']}")
    elif kind == "boosted_trees":
        if not (isinstance(p["depth"], int) and p["depth"] >= 1):
            raise ValueError(f"depth must be a positive integer, got {p['depth']}")
        if not 0.0 <= p["learning_rate"] <= 1.0:
            raise ValueError(f"learning_rate must lie in [0,1], got {p['learning_rate']}")
        if not (isinstance(p["rounds"], int) and p["rounds"] >= 0):
            raise ValueError(f"rounds must be a non-negative integer, got {p['rounds']}")
        if not (isinstance(p["min_leaf"], int) and p["min_leaf"] >= 1):
            raise ValueError(f"min_leaf must be a positive integer, got {p['min_leaf']}")
        if not (isinstance(p["max_bins"], int) and p["max_bins"] >= 2):
            raise ValueError(f"max_bins must be an integer >= 2, got {p['max_bins']}")


@dataclass(frozen=True)
class FittedModel:
    """An immutable fitted learner; predict only accepts the training width."""

    spec: LearnerSpec
    n_features: int
    _impl: object
    flags: tuple[str, ...] = ()

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"model was trained on {self.n_features} features, got {X.shape[1]}"
            )
        return self._impl.predict(X)


def _as_matrix(X) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got ndim={arr.ndim}")
    return arr


# ---------------------------------------------------------------------------
# ols


class _OlsImpl:
    def __init__(self, coef: np.ndarray):
        self.coef = coef

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.coef[0] + X @ self.coef[1:]


def _fit_ols(X: np.ndarray, y: np.ndarray) -> tuple[_OlsImpl, tuple[str, ...]]:
    design = np.column_stack([np.ones(len(X)), X])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    flags = () if rank == design.shape[1] else ("rank_deficient",)
    return _OlsImpl(coef), flags


# ---------------------------------------------------------------------------
# additive natural cubic splines with ridge penalty


def _natural_spline_basis(col: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Columns [x, n_1(x), ..., n_m(x)] of a natural cubic spline basis.

    Linear beyond the boundary knots, so extrapolation on held-out folds
    stays tame.  With fewer than 3 distinct knots only the linear column
    remains.
    """
    kk = len(knots)
    if kk < 3:
        return col[:, None]
    cube = np.maximum(col[:, None] - knots[None, :], 0.0) ** 3
    d = (cube[:, :-1] - cube[:, -1:]) / (knots[-1] - knots[:-1])
    return np.column_stack([col, d[:, :-1] - d[:, -1:]])


class _SplineImpl:
    def __init__(self, knots_per_col, centers, scales, coef, intercept):
        self.knots_per_col = knots_per_col
        self.centers = centers
        self.scales = scales
        self.coef = coef
        self.intercept = intercept

    def basis(self, X: np.ndarray) -> np.ndarray:
        parts = [
            _natural_spline_basis(X[:, j], self.knots_per_col[j]) for j in range(X.shape[1])
        ]
        raw = np.column_stack(parts)
        return (raw - self.centers) / self.scales

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + self.basis(X) @ self.coef


def _fit_spline(X: np.ndarray, y: np.ndarray, knots: int, ridge: float) -> _SplineImpl:
    knots_per_col = []
    for j in range(X.shape[1]):
        levels = np.quantile(X[:, j], np.linspace(0.0, 1.0, knots + 2))
        knots_per_col.append(np.unique(levels))
    parts = [_natural_spline_basis(X[:, j], knots_per_col[j]) for j in range(X.shape[1])]
    raw = np.column_stack(parts)
    centers = raw.mean(axis=0)
    scales = raw.std(axis=0)
    scales[scales == 0.0] = np.inf  # constant columns contribute nothing
    basis = (raw - centers) / scales
    y_mean = float(np.mean(y))
    yc = y - y_mean
    gram = basis.T @ basis
    penalty = len(y) * ridge * np.eye(gram.shape[0])
    try:
        coef = np.linalg.solve(gram + penalty, basis.T @ yc)
    except np.linalg.LinAlgError:
        coef, *_ = np.linalg.lstsq(basis, yc, rcond=None)
    return _SplineImpl(knots_per_col, centers, scales, coef, y_mean)


# ---------------------------------------------------------------------------
# histogram gradient-boosted trees


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add_leaf(self, value: float) -> int:
        nid = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return nid

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        stack = [(0, np.arange(len(X)))]
        while stack:
            nid, idx = stack.pop()
            if idx.size == 0:
                continue
            if self.feature[nid] < 0:
                out[idx] = self.value[nid]
                continue
            mask = X[idx, self.feature[nid]] <= self.threshold[nid]
            stack.append((self.left[nid], idx[mask]))
            stack.append((self.right[nid], idx[~mask]))
        return out


def _grow_tree(tree, codes, edges, grads, rows, depth, max_depth, min_leaf, nbins):
    node = tree.add_leaf(float(np.mean(grads[rows])))
    if depth >= max_depth or rows.size < 2 * min_leaf:
        return node
    total_sum = float(np.sum(grads[rows]))
    total_cnt = rows.size
    parent_score = total_sum * total_sum / total_cnt
    best_gain = 1e-12
    best = None
    for j in range(codes.shape[1]):
        c = codes[rows, j]
        cnt = np.bincount(c, minlength=nbins)
        sm = np.bincount(c, weights=grads[rows], minlength=nbins)
        nl = np.cumsum(cnt)[:-1]
        sl = np.cumsum(sm)[:-1]
        nr = total_cnt - nl
        sr = total_sum - sl
        valid = (nl >= min_leaf) & (nr >= min_leaf)
        if not np.any(valid):
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = np.where(valid, sl * sl / nl + sr * sr / nr - parent_score, -np.inf)
        b = int(np.argmax(gains))  # first maximum: deterministic tie-break
        if gains[b] > best_gain:
            best_gain = float(gains[b])
            best = (j, b)
    if best is None:
        return node
    j, b = best
    thr = float(edges[j][b])
    go_left = codes[rows, j] <= b
    tree.feature[node] = j
    tree.threshold[node] = thr
    tree.left[node] = _grow_tree(
        tree, codes, edges, grads, rows[go_left], depth + 1, max_depth, min_leaf, nbins
    )
    tree.right[node] = _grow_tree(
        tree, codes, edges, grads, rows[~go_left], depth + 1, max_depth, min_leaf, nbins
    )
    return node


class _BoostImpl:
    def __init__(self, base: float, trees: list[_Tree], learning_rate: float):
        self.base = base
        self.trees = trees
        self.learning_rate = learning_rate

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.full(len(X), self.base)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def _fit_trees(X: np.ndarray, y: np.ndarray, p: Mapping) -> _BoostImpl:
    m, q = X.shape
    nbins = int(p["max_bins"])
    edges = []
    codes = np.empty((m, q), dtype=np.intp)
    for j in range(q):
        cand = np.unique(np.quantile(X[:, j], np.linspace(0.0, 1.0, nbins + 1)[1:-1]))
        edges.append(cand)
        codes[:, j] = np.searchsorted(cand, X[:, j], side="left")
    base = float(np.mean(y))
    pred = np.full(m, base)
    trees: list[_Tree] = []
    rows = np.arange(m)
    lr = float(p["learning_rate"])
    for _ in range(int(p["rounds"])):
        grads = y - pred
        tree = _Tree()
        _grow_tree(tree, codes, edges, grads, rows, 0, int(p["depth"]), int(p["min_leaf"]),
                   nbins)
        if lr != 0.0:
            pred += lr * tree.predict(X)
        trees.append(tree)
    return _BoostImpl(base, trees, lr)


# ---------------------------------------------------------------------------
# public operations


def fit(spec: LearnerSpec, X, y) -> FittedModel:
    """Fit the learner described by spec; pure in (spec, X, y)."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) != len(X):
        raise ValueError("y must be a vector aligned with the rows of X")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")
    m, q = X.shape
    if spec.kind == "ols":
        if m < q + 1:
            raise ValueError(f"ols needs at least {q + 1} rows for {q} features, got {m}")
        impl, flags = _fit_ols(X, y)
    else:
        if m < 2:
            raise ValueError(f"need at least 2 training rows, got {m}")
        if spec.kind == "additive_spline":
            impl = _fit_spline(X, y, int(spec.params["knots"]), float(spec.params["ridge"]))
            flags = ()
        else:
            impl = _fit_trees(X, y, spec.params)
            flags = ()
    if np.ptp(y) == 0.0:
        flags = flags + ("constant_response",)
    model = FittedModel(spec=spec, n_features=q, _impl=impl, flags=flags)
    if not np.all(np.isfinite(model.predict(X))):
        raise ArithmeticError("fit produced non-finite training predictions")
    return model


def predict(model: FittedModel, X) -> np.ndarray:
    """Predictions of a fitted model on new rows (same feature width)."""
    return model.predict(X)


def tune(grid: Sequence[LearnerSpec], X, y, folds: int, seed: int) -> LearnerSpec:
    """Pick the grid element with the smallest cross-validated MSE.

    Ties break towards the earlier grid element; the fold split is seeded,
    so the selection is deterministic.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("tuning grid must be non-empty")
    if folds < 2:
        raise ValueError(f"need at least 2 CV folds, got {folds}")
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if np.ptp(y) == 0.0:
        warnings.warn("response has zero variance; returning first grid element")
        return grid[0]
    partition = make_folds(len(y), folds, seed)
    best_spec = None
    best_mse = np.inf
    for spec in grid:
        sse = 0.0
        for j in range(partition.k):
            train = partition.complement(j)
            test = partition.folds[j]
            model = fit(spec, X[train], y[train])
            resid = y[test] - model.predict(X[test])
            sse += float(np.sum(resid * resid))
        mse = sse / len(y)
        if mse < best_mse:
            best_mse = mse
            best_spec = spec
    return best_spec
