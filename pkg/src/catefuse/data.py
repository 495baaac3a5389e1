"""Fused-sample container, fold plans, and schema-checked CSV I/O.

A :class:`Dataset` holds one fused sample: covariates ``x``, source indicator
``s`` (1 = randomized trial, 0 = external), treatment ``a``, outcome ``y``,
and the per-row treatment probability ``e``. ``e`` is the known randomization
probability and is therefore validated only on trial rows; external rows may
carry anything (commonly the trial constant, or NaN when unknown).

Rows are the unit everywhere: all arrays share length n, and validation
errors name the first offending row index (0-based, header excluded for CSV
input).
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass

import numpy as np

from .rng import stream
from .validation import as_matrix, as_vector, check_binary, check_lengths

__all__ = [
    "DataError",
    "Dataset",
    "FoldPlan",
    "make_folds",
    "concat_datasets",
    "CsvSchema",
    "load_csv",
    "load_canonical_csv",
    "save_csv",
]


class DataError(ValueError):
    """Malformed dataset or CSV input."""


@dataclass(frozen=True)
class Dataset:
    """One fused trial + external sample.

    Attributes
    ----------
    x : ndarray of shape (n, d)
        Covariates.
    s : ndarray of shape (n,)
        Source indicator, 1 for trial rows, 0 for external rows.
    a : ndarray of shape (n,)
        Treatment indicator.
    y : ndarray of shape (n,)
        Observed outcome.
    e : ndarray of shape (n,)
        Treatment probability. Must lie strictly inside (0, 1) on trial rows.
    feature_names : tuple of str, optional
        Column names, when the dataset came from a named source.
    """

    x: np.ndarray
    s: np.ndarray
    a: np.ndarray
    y: np.ndarray
    e: np.ndarray
    feature_names: tuple | None = dataclasses.field(default=None, compare=False)

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        s = check_binary(np.asarray(self.s), "s")
        a = check_binary(np.asarray(self.a), "a")
        y = as_vector(self.y, "y")
        e = as_vector(self.e, "e")
        n = check_lengths(("x", x), ("s", s), ("a", a), ("y", y), ("e", e))
        if n < 1:
            raise DataError("dataset must contain at least one row")
        bad = ~np.isfinite(x).all(axis=1)
        if np.any(bad):
            raise DataError(f"x row {int(np.flatnonzero(bad)[0])} is not finite")
        bad = ~np.isfinite(y)
        if np.any(bad):
            raise DataError(f"y row {int(np.flatnonzero(bad)[0])} is not finite")
        trial = s == 1
        bad = trial & ~(np.isfinite(e) & (e > 0.0) & (e < 1.0))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DataError(f"e must lie in (0, 1) on trial rows; row {i} has {e[i]!r}")
        if self.feature_names is not None and len(self.feature_names) != x.shape[1]:
            raise DataError(
                f"feature_names has {len(self.feature_names)} entries for {x.shape[1]} columns"
            )
        for name, arr in (("x", x), ("s", s), ("a", a), ("y", y), ("e", e)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def n_trial(self) -> int:
        return int(np.sum(self.s == 1))

    @property
    def n_external(self) -> int:
        return int(np.sum(self.s == 0))

    def subset(self, idx) -> "Dataset":
        """Row subset by boolean mask or index array, preserving order."""
        idx = np.asarray(idx)
        return Dataset(
            self.x[idx], self.s[idx], self.a[idx], self.y[idx], self.e[idx],
            feature_names=self.feature_names,
        )

    def trial(self) -> "Dataset":
        return self.subset(self.s == 1)

    def external(self) -> "Dataset":
        return self.subset(self.s == 0)


def concat_datasets(first: Dataset, second: Dataset) -> Dataset:
    if first.d != second.d:
        raise DataError(f"cannot concat datasets with d={first.d} and d={second.d}")
    return Dataset(
        np.vstack([first.x, second.x]),
        np.concatenate([first.s, second.s]),
        np.concatenate([first.a, second.a]),
        np.concatenate([first.y, second.y]),
        np.concatenate([first.e, second.e]),
        feature_names=first.feature_names,
    )


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of rows to k cross-fitting folds, stratified by source.

    ``assignments[i]`` is the fold id of row i. Within each source stratum
    the fold sizes differ by at most one, and every fold id in ``range(k)``
    is occupied.
    """

    assignments: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def heldout(self, fold: int) -> np.ndarray:
        """Boolean mask of the rows held out by ``fold``."""
        self._check_fold(fold)
        return self.assignments == fold

    def training(self, fold: int) -> np.ndarray:
        """Boolean mask of the rows available for fitting against ``fold``."""
        self._check_fold(fold)
        return self.assignments != fold

    def _check_fold(self, fold: int) -> None:
        if not 0 <= fold < self.k:
            raise ValueError(f"fold must lie in [0, {self.k}), got {fold}")


def make_folds(data, k: int, seed: int) -> FoldPlan:
    """Randomly assign rows to k folds, stratified by the source indicator.

    The assignment is a pure function of (the s vector, k, seed): shuffling
    happens inside each stratum, so editing covariates or outcomes of other
    rows never moves a row to a different fold. A stratum that is entirely
    absent is fine (e.g. trial-only data); a nonempty stratum smaller than k
    is an error because its rows could not occupy every fold.
    """
    s = np.asarray(data.s if hasattr(data, "s") else data)
    s = check_binary(s, "s")
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    assignments = np.empty(len(s), dtype=np.int64)
    for stratum in (1, 0):
        positions = np.flatnonzero(s == stratum)
        m = len(positions)
        if m == 0:
            continue
        if m < k:
            raise DataError(f"stratum s={stratum} has {m} rows, fewer than k={k}")
        perm = stream(seed, "folds", stratum).permutation(m)
        assignments[positions[perm]] = np.arange(m) % k
    return FoldPlan(assignments=assignments, k=int(k))


# ---------------------------------------------------------------------------
# CSV input and output


@dataclass(frozen=True)
class CsvSchema:
    """How to read a fused-sample CSV.

    ``x`` lists covariate columns in order. Columns named in ``categorical``
    are one-hot encoded: one output column per observed level, levels sorted
    lexicographically, none dropped. ``e`` is either a column name or a float
    constant applied to every row.
    """

    x: tuple
    s: str = "s"
    a: str = "a"
    y: str = "y"
    e: object = "e"
    categorical: tuple = ()


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    return header, body


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataError(
            f"row {row}, column {col!r}: cannot parse {cell!r} as a number"
        ) from None


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a fused-sample CSV under ``schema``.

    Raises :class:`DataError` naming the missing column, or the (row, column)
    of the first unparsable cell. Row indices are 0-based data rows.
    """
    header, body = _read_rows(path)
    index = {name: i for i, name in enumerate(header)}
    needed = list(schema.x) + [schema.s, schema.a, schema.y]
    if isinstance(schema.e, str):
        needed.append(schema.e)
    for name in needed:
        if name not in index:
            raise DataError(f"{path}: missing column {name!r}")
    for name in schema.categorical:
        if name not in schema.x:
            raise DataError(f"categorical column {name!r} is not an x column")

    columns = []
    names = []
    for name in schema.x:
        raw = [row[index[name]] for row in body]
        if name in schema.categorical:
            levels = sorted(set(raw))
            for level in levels:
                columns.append([1.0 if cell == level else 0.0 for cell in raw])
                names.append(f"{name}={level}")
        else:
            columns.append([_parse_float(c, i, name) for i, c in enumerate(raw)])
            names.append(name)
    x = np.array(columns, dtype=float).T

    def numeric(name):
        return np.array(
            [_parse_float(row[index[name]], i, name) for i, row in enumerate(body)]
        )

    s = numeric(schema.s)
    a = numeric(schema.a)
    y = numeric(schema.y)
    if isinstance(schema.e, str):
        e = numeric(schema.e)
    else:
        e = np.full(len(body), float(schema.e))
    try:
        return Dataset(x, s, a, y, e, feature_names=tuple(names))
    except ValueError as err:
        raise DataError(f"{path}: {err}") from None


def load_canonical_csv(path) -> Dataset:
    """Read a CSV written by :func:`save_csv` (columns x0..x{d-1}, s, a, y, e)."""
    header, _ = _read_rows(path)
    x_cols = sorted(
        (name for name in header if name.startswith("x") and name[1:].isdigit()),
        key=lambda name: int(name[1:]),
    )
    if not x_cols:
        raise DataError(f"{path}: no covariate columns x0, x1, ... found")
    if [int(c[1:]) for c in x_cols] != list(range(len(x_cols))):
        raise DataError(f"{path}: covariate columns are not contiguous from x0")
    return load_csv(path, CsvSchema(x=tuple(x_cols)))


def _fmt(value: float) -> str:
    return repr(float(value))


def save_csv(data: Dataset, path) -> None:
    """Write canonical columns x0..x{d-1}, s, a, y, e.

    Floats are written with shortest round-trip precision, so a
    load_canonical_csv of the output reproduces the dataset bit for bit.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(data.d)] + ["s", "a", "y", "e"])
        for i in range(data.n):
            row = [_fmt(v) for v in data.x[i]]
            row += [str(int(data.s[i])), str(int(data.a[i]))]
            row += [_fmt(data.y[i]), _fmt(data.e[i])]
            writer.writerow(row)
