"""Dataset representation, CSV ingestion, and fold partitioning.

A :class:`Sample` holds one aligned dataset (response, treatment,
instruments, covariates) with a designated effect-modifier column inside
the covariate block.  :func:`make_folds` produces the seeded random
partition used for cross-fitting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .prng import make_generator, shuffled_indices


class DataError(ValueError):
    """Base class for dataset construction problems."""


class MissingColumnError(DataError):
    """A schema role points at a column the file does not have."""


class UnparsableNumericError(DataError):
    """A cell could not be parsed as a finite float."""


class RoleConflictError(DataError):
    """Two schema roles claim the same column in an incompatible way."""


class TooFewRowsError(DataError):
    """A dataset needs at least two observations."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Sample:
    """One dataset of N observations.

    y : response vector, shape (N,)
    d : treatment vector, shape (N,)
    z : instrument matrix, shape (N, d_z)
    x : covariate matrix, shape (N, p)
    v_col : index of the covariate column acting as the effect modifier
    """

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    x: np.ndarray
    v_col: int

    def __post_init__(self) -> None:
        y = _readonly(np.atleast_1d(self.y))
        d = _readonly(np.atleast_1d(self.d))
        z = _readonly(np.atleast_2d(self.z).T if np.ndim(self.z) == 1 else self.z)
        x = _readonly(np.atleast_2d(self.x).T if np.ndim(self.x) == 1 else self.x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        n = y.shape[0]
        if n < 2:
            raise TooFewRowsError(f"need at least 2 observations, got {n}")
        if d.shape != (n,) or z.shape[0] != n or x.shape[0] != n:
            raise DataError("y, d, z, x must have the same number of rows")
        if z.ndim != 2 or z.shape[1] < 1:
            raise DataError("z must be an N x d_z matrix with d_z >= 1")
        if x.ndim != 2 or x.shape[1] < 1:
            raise DataError("x must be an N x p matrix with p >= 1")
        if not (0 <= self.v_col < x.shape[1]):
            raise DataError(f"v_col {self.v_col} out of range for {x.shape[1]} covariates")
        for name, arr in (("y", y), ("d", d), ("z", z), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite entries in {name}")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def v(self) -> np.ndarray:
        """Effect-modifier values V_i (a column of x)."""
        return self.x[:, self.v_col]


@dataclass(frozen=True)
class ColumnRoles:
    """Zero-based column indices for each role in a CSV file."""

    y: int
    d: int
    z: tuple[int, ...]
    x: tuple[int, ...]
    v: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", tuple(int(c) for c in self.z))
        object.__setattr__(self, "x", tuple(int(c) for c in self.x))
        if len(self.z) < 1:
            raise RoleConflictError("at least one instrument column is required")
        if len(self.x) < 1:
            raise RoleConflictError("at least one covariate column is required")
        single = [("y", self.y), ("d", self.d)]
        seen: dict[int, str] = {}
        for role, col in single + [("z", c) for c in self.z] + [("x", c) for c in self.x]:
            if col in seen:
                raise RoleConflictError(
                    f"column {col} assigned to both '{seen[col]}' and '{role}'"
                )
            seen[col] = role
        if self.v in (self.y, self.d) or self.v in self.z:
            raise RoleConflictError(
                f"effect-modifier column {self.v} must be a covariate, "
                f"not the '{seen[self.v]}' column"
            )


def load_csv(path: str, roles: ColumnRoles) -> Sample:
    """Read an RFC-4180-style CSV (header required, '.' decimals) into a Sample.

    The effect-modifier column must either be one of the covariate columns
    or it is appended to the covariate block, so that it is always a
    function of the covariates.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file (header row required)") from None
        ncol = len(header)
        needed = {roles.y, roles.d, roles.v, *roles.z, *roles.x}
        for col in sorted(needed):
            if not (0 <= col < ncol):
                raise MissingColumnError(
                    f"{path}: schema uses column {col} but file has {ncol} columns"
                )
        rows: list[list[float]] = []
        for r, rec in enumerate(reader, start=1):
            if len(rec) != ncol:
                raise DataError(f"{path}: row {r} has {len(rec)} fields, expected {ncol}")
            parsed = []
            for c in sorted(needed):
                try:
                    val = float(rec[c])
                except ValueError:
                    raise UnparsableNumericError(
                        f"unparsable numeric at row {r}, column {c}"
                    ) from None
                if not np.isfinite(val):
                    raise UnparsableNumericError(
                        f"unparsable numeric at row {r}, column {c}"
                    )
                parsed.append(val)
            rows.append(parsed)
    if len(rows) < 2:
        raise TooFewRowsError(f"{path}: need at least 2 data rows, got {len(rows)}")
    cols = sorted(needed)
    pos = {c: i for i, c in enumerate(cols)}
    mat = np.asarray(rows, dtype=float)
    x_cols = list(roles.x)
    if roles.v in x_cols:
        v_col = x_cols.index(roles.v)
    else:
        x_cols.append(roles.v)
        v_col = len(x_cols) - 1
    return Sample(
        y=mat[:, pos[roles.y]],
        d=mat[:, pos[roles.d]],
        z=mat[:, [pos[c] for c in roles.z]],
        x=mat[:, [pos[c] for c in x_cols]],
        v_col=v_col,
    )


def write_csv(path: str, sample: Sample, header_prefix: str = "col") -> None:
    """Write a Sample back to CSV (column order: y, d, z block, x block).

    Uses shortest round-trip float formatting, so finite doubles survive a
    load/write/load cycle bit-exactly.
    """
    mat = np.column_stack([sample.y, sample.d, sample.z, sample.x])
    names = (
        ["y", "d"]
        + [f"z{i}" for i in range(sample.z.shape[1])]
        + [f"x{i}" for i in range(sample.x.shape[1])]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in mat:
            writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class FoldPartition:
    """Disjoint exhaustive folds over 0..n-1, sizes differing by at most 1."""

    folds: tuple[np.ndarray, ...]
    k: int
    seed: int
    n: int
    fold_of: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        folds = tuple(_readonly(f).astype(int) for f in self.folds)
        object.__setattr__(self, "folds", folds)
        sizes = [len(f) for f in folds]
        if len(folds) != self.k or self.k < 2:
            raise ValueError("partition must have K >= 2 folds")
        if max(sizes) - min(sizes) > 1:
            raise ValueError(f"fold sizes {sizes} differ by more than 1")
        allidx = np.concatenate(folds)
        if len(allidx) != self.n or len(np.unique(allidx)) != self.n:
            raise ValueError("folds must partition 0..n-1 exactly")
        fold_of = np.empty(self.n, dtype=int)
        for j, f in enumerate(folds):
            fold_of[f] = j
        fold_of.setflags(write=False)
        object.__setattr__(self, "fold_of", fold_of)

    def complement(self, j: int) -> np.ndarray:
        """Indices outside fold j (the training set for fold j)."""
        return np.concatenate([f for i, f in enumerate(self.folds) if i != j])


def make_folds(n: int, k: int, seed: int) -> FoldPartition:
    """Seeded random partition of 0..n-1 into k near-equal folds.

    Deterministic in (n, k, seed): the index shuffle is a Fisher-Yates pass
    driven by the package's counter-based generator.
    """
    if k < 2:
        raise ValueError(f"need at least 2 folds, got k={k}")
    if k > n:
        raise ValueError(f"cannot split {n} observations into {k} folds")
    perm = shuffled_indices(n, make_generator(seed))
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for j in range(k):
        size = base + (1 if j < extra else 0)
        folds.append(np.sort(perm[start : start + size]))
        start += size
    return FoldPartition(folds=tuple(folds), k=k, seed=seed, n=n)
