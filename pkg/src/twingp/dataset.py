"""Tabular data: CSV ingestion, min-max/standard scaling, and random splits."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Bad or unusable input data."""


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    feature_names: tuple[str, ...] | None = None
    target_name: str | None = None

    def __post_init__(self):
        X = np.array(self.inputs, dtype=float)
        y = np.array(self.outputs, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"inputs must be an n x d array with n, d >= 1, got {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise DataError(f"{X.shape[0]} input rows but {y.shape[0]} outputs")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains NaN or infinite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.inputs[idx], self.outputs[idx], self.feature_names, self.target_name)


def load_csv(path, target_column: str | int = -1) -> Dataset:
    """Read a comma-separated file with a header row.

    ``target_column`` is a header name or a (possibly negative) column index.
    Every other column becomes an input feature.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        ncol = len(header)
        if isinstance(target_column, str) and target_column not in header:
            try:
                target_column = int(target_column)
            except ValueError:
                raise DataError(f"{path}: target column {target_column!r} not found in header {header}") from None
        if isinstance(target_column, str):
            target = header.index(target_column)
        else:
            target = int(target_column)
            if not -ncol <= target < ncol:
                raise DataError(f"{path}: target column index {target} out of range for {ncol} columns")
            target %= ncol
        if ncol < 2:
            raise DataError(f"{path}: need at least one feature column besides the target")

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != ncol:
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {ncol}")
            values = []
            for col, cell in enumerate(row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {lineno}, column {header[col]!r}"
                    ) from None
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows)
    features = [j for j in range(ncol) if j != target]
    return Dataset(table[:, features], table[:, target],
                   tuple(header[j] for j in features), header[target])


def write_csv(data: Dataset, path) -> None:
    names = list(data.feature_names or (f"x{i + 1}" for i in range(data.d)))
    target = data.target_name or "y"
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + [target])
        for x, y in zip(data.inputs, data.outputs):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])


@dataclass(frozen=True)
class ScalerParams:
    input_min: np.ndarray
    input_max: np.ndarray
    output_mean: float
    output_sd: float

    @property
    def constant_columns(self) -> np.ndarray:
        return self.input_max == self.input_min

    @property
    def d(self) -> int:
        return self.input_min.size

    def scale_inputs(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise DataError(f"expected {self.d} input columns, got {X.shape[1]}")
        span = self.input_max - self.input_min
        const = span == 0
        out = (X - self.input_min) / np.where(const, 1.0, span)
        out[:, const] = 0.5
        return out

    def unscale_inputs(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        span = self.input_max - self.input_min
        out = self.input_min + Z * span
        out[:, span == 0] = self.input_min[span == 0]
        return out

    def scale_outputs(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.output_mean) / self.output_sd

    def unscale_outputs(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.output_sd + self.output_mean

    def to_dict(self) -> dict:
        return {
            "input_min": self.input_min.tolist(),
            "input_max": self.input_max.tolist(),
            "output_mean": self.output_mean,
            "output_sd": self.output_sd,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(np.asarray(d["input_min"], dtype=float), np.asarray(d["input_max"], dtype=float),
                   float(d["output_mean"]), float(d["output_sd"]))


def fit_scaler(data: Dataset) -> ScalerParams:
    """Per-column extrema for inputs; mean and unbiased sd for outputs.

    A constant (or single) output gets sd 1 so the transform stays defined.
    """
    y = data.outputs
    sd = float(np.std(y, ddof=1)) if data.n > 1 else 1.0
    if sd == 0.0:
        sd = 1.0
    return ScalerParams(data.inputs.min(axis=0).copy(), data.inputs.max(axis=0).copy(),
                        float(np.mean(y)), sd)


def apply_scaler(data: Dataset, s: ScalerParams) -> Dataset:
    if data.d != s.d:
        raise DataError(f"dataset has {data.d} inputs, scaler was fit on {s.d}")
    return Dataset(s.scale_inputs(data.inputs), s.scale_outputs(data.outputs),
                   data.feature_names, data.target_name)


def invert_scaler(data: Dataset, s: ScalerParams) -> Dataset:
    if data.d != s.d:
        raise DataError(f"dataset has {data.d} inputs, scaler was fit on {s.d}")
    return Dataset(s.unscale_inputs(data.inputs), s.unscale_outputs(data.outputs),
                   data.feature_names, data.target_name)


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test fraction must lie in (0, 1), got {test_fraction}")
    n_test = int(np.floor(n * test_fraction + 0.5))
    if n_test < 1 or n_test > n - 1:
        raise DataError(f"a {test_fraction} split of {n} rows leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def random_split(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(data.n, test_fraction, seed)
    return data.subset(train_idx), data.subset(test_idx)


def split_to_json(test_indices) -> str:
    return json.dumps({"test_indices": [int(i) for i in test_indices]})


def load_inputs_csv(path, expected_d: int | None = None, drop: str | None = None):
    """Read a query file: header plus zero or more rows of numeric inputs.

    Returns ``(column_names, array)``; ``drop`` names a column (e.g. a
    target) to ignore if present.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        keep = [j for j, h in enumerate(header) if h != drop]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(row[j]) for j in keep])
            except ValueError:
                bad = next(j for j in keep if not _is_float(row[j]))
                raise DataError(f"{path}: non-numeric value {row[bad]!r} at row {lineno}, "
                                f"column {header[bad]!r}") from None
    names = [header[j] for j in keep]
    X = np.array(rows, dtype=float).reshape(len(rows), len(names))
    if expected_d is not None and len(names) != expected_d:
        raise DataError(f"{path}: {len(names)} input columns, model expects {expected_d}")
    return names, X


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
