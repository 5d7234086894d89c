"""Synthetic regression benchmarks, CSV io, splitting, and standardization.

Two generators reproduce the simulation designs: a 2-2-1 sigmoid teacher
network on U([-1,1]^2) inputs with 5-percent relative Gaussian noise, and the
five-covariate nonlinear surface y = 7 x2 / (1 + x1^2) + sin(x3 x4) + 2 x5
with standard-normal covariates and unit noise.

CSV files use '.' decimals, ',' separators, '\\n' line ends, UTF-8, a
mandatory header row, and shortest round-trip float formatting, so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import sigmoid
from .numerics import RandomStream, sample_standard_normal, sample_uniform

__all__ = [
    "DataFormatError",
    "Dataset",
    "Standardization",
    "gen_sim1",
    "gen_sim2",
    "load_csv",
    "save_csv",
    "sim1_teacher_matrices",
    "sim1_teacher_predict",
    "split",
    "standardize",
]

# Teacher weights of the 2-2-1 generator network. Hidden row j is
# (bias v0_j | W0 row j); the output row is (v1 | W1).
SIM1_W0 = np.array([[10.0, 15.0], [-15.0, 10.0]])
SIM1_V0 = np.array([-5.0, 5.0])
SIM1_W1 = np.array([-3.0, 3.0])
SIM1_V1 = 4.0


class DataFormatError(ValueError):
    """A data file violates the expected CSV structure."""


@dataclass
class Standardization:
    """Train-set statistics used to z-score features (and regression targets)."""

    feature_mean: np.ndarray
    feature_scale: np.ndarray
    target_mean: float | None = None
    target_scale: float | None = None

    def targets_to_original(self, y):
        """Undo target z-scoring; identity when targets were not scaled."""
        if self.target_scale is None:
            return np.asarray(y, dtype=np.float64)
        return np.asarray(y, dtype=np.float64) * self.target_scale + self.target_mean

    def to_dict(self) -> dict:
        return {
            "feature_mean": [float(v) for v in self.feature_mean],
            "feature_scale": [float(v) for v in self.feature_scale],
            "target_mean": self.target_mean,
            "target_scale": self.target_scale,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Standardization":
        return cls(
            feature_mean=np.asarray(doc["feature_mean"], dtype=np.float64),
            feature_scale=np.asarray(doc["feature_scale"], dtype=np.float64),
            target_mean=doc.get("target_mean"),
            target_scale=doc.get("target_scale"),
        )

    def apply(self, ds: "Dataset") -> "Dataset":
        """Transform a raw dataset with these train statistics."""
        targets = ds.targets
        if ds.task == "regression" and self.target_scale is not None:
            targets = (targets - self.target_mean) / self.target_scale
        return Dataset(
            features=(ds.features - self.feature_mean) / self.feature_scale,
            targets=targets,
            feature_names=ds.feature_names,
            standardization=self,
            task=ds.task,
            meta=ds.meta,
        )


@dataclass
class Dataset:
    """Feature matrix plus targets; regression targets are float, class
    labels are integer indices."""

    features: np.ndarray
    targets: np.ndarray
    feature_names: list | None = None
    standardization: Standardization | None = None
    task: str = "regression"
    meta: dict | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.task == "regression":
            self.targets = np.ascontiguousarray(self.targets, dtype=np.float64)
        else:
            self.targets = np.ascontiguousarray(self.targets, dtype=np.int64)
        if self.targets.shape[0] != self.features.shape[0]:
            raise ValueError("feature and target row counts differ")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


def sim1_teacher_matrices() -> list:
    """Teacher weights as bias-in-column-0 layer matrices."""
    hidden = np.concatenate([SIM1_V0[:, None], SIM1_W0], axis=1)
    out = np.concatenate([[SIM1_V1], SIM1_W1])[None, :]
    return [hidden, out]


def sim1_teacher_predict(x: np.ndarray) -> np.ndarray:
    """Noiseless teacher response, straight-line evaluation of the 2-2-1 net."""
    x = np.asarray(x, dtype=np.float64)
    h = sigmoid(x @ SIM1_W0.T + SIM1_V0)
    return SIM1_V1 + h @ SIM1_W1


def gen_sim1(n: int, seed: int, noise_scale: float = 0.05) -> Dataset:
    """Teacher-network data: X ~ U([-1,1]^2), y = teacher(X) + N(0, sigma^2)
    with sigma = noise_scale * sqrt(Var(y0)).

    Draw order from stream (seed, 10): the n x 2 uniforms row-major, then n
    noise normals (drawn even when noise_scale = 0, where y = y0 exactly).
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    stream = RandomStream(seed, 10)
    x = (2.0 * sample_uniform(stream, 2 * n) - 1.0).reshape(n, 2)
    y0 = sim1_teacher_predict(x)
    sigma = noise_scale * math.sqrt(float(np.var(y0)))
    y = y0 + sigma * sample_standard_normal(stream, n)
    return Dataset(
        features=x,
        targets=y,
        feature_names=["x1", "x2"],
        meta={
            "source": "sim1",
            "seed": int(seed),
            "noise_sigma": sigma,
            "teacher": {
                "W0": SIM1_W0.tolist(),
                "v0": SIM1_V0.tolist(),
                "W1": SIM1_W1.tolist(),
                "v1": SIM1_V1,
            },
        },
    )


def gen_sim2(n: int, seed: int) -> Dataset:
    """Nonlinear benchmark y = 7 x2/(1+x1^2) + sin(x3 x4) + 2 x5 + N(0,1)
    with five i.i.d. standard-normal covariates.

    Draw order from stream (seed, 10): the n x 5 covariates row-major, then
    the n noise normals.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    stream = RandomStream(seed, 10)
    x = sample_standard_normal(stream, 5 * n).reshape(n, 5)
    eps = sample_standard_normal(stream, n)
    y = 7.0 * x[:, 1] / (1.0 + x[:, 0] ** 2) + np.sin(x[:, 2] * x[:, 3]) + 2.0 * x[:, 4] + eps
    return Dataset(
        features=x,
        targets=y,
        feature_names=[f"x{i}" for i in range(1, 6)],
        meta={"source": "sim2", "seed": int(seed)},
    )


def _format_value(v, task: str, is_target: bool) -> str:
    if is_target and task == "classification":
        return str(int(v))
    return repr(float(v))


def save_csv(ds: Dataset, path) -> None:
    """Write a dataset as headered CSV with canonical float formatting."""
    names = ds.feature_names or [f"x{i}" for i in range(1, ds.p + 1)]
    target_name = "y" if ds.task == "regression" else "label"
    lines = [",".join(list(names) + [target_name])]
    for i in range(ds.n):
        cells = [repr(float(v)) for v in ds.features[i]]
        cells.append(_format_value(ds.targets[i], ds.task, True))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path, target_column: str | None = None, task: str = "regression") -> Dataset:
    """Parse a headered numeric CSV; the target defaults to the last column.

    Raises DataFormatError on a missing header (an all-numeric first row), an
    unknown target column, or any malformed cell, naming its location.
    """
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln != ""]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if _all_numeric(header):
        raise DataFormatError(f"{path}: missing header row")
    if len(lines) < 2:
        raise DataFormatError(f"{path}: no data rows")
    if target_column is None:
        target_idx = len(header) - 1
    else:
        if target_column not in header:
            raise DataFormatError(f"{path}: no column named {target_column!r}")
        target_idx = header.index(target_column)
    rows = []
    for i, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        if len(cells) != len(header):
            raise DataFormatError(
                f"{path}: data row {i} has {len(cells)} cells, expected {len(header)}"
            )
        parsed = []
        for j, cell in enumerate(cells):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DataFormatError(
                    f"{path}: data row {i}, column {header[j]!r}: "
                    f"not numeric: {cell.strip()!r}"
                ) from None
        rows.append(parsed)
    table = np.asarray(rows, dtype=np.float64)
    targets = table[:, target_idx]
    features = np.delete(table, target_idx, axis=1)
    names = [h for j, h in enumerate(header) if j != target_idx]
    if task == "classification":
        if np.any(targets != np.round(targets)) or np.any(targets < 0):
            raise DataFormatError(
                f"{path}: classification targets must be nonnegative integers"
            )
        targets = targets.astype(np.int64)
    return Dataset(features=features, targets=targets, feature_names=names, task=task)


def _all_numeric(cells) -> bool:
    for c in cells:
        try:
            float(c)
        except ValueError:
            return False
    return True


def split(ds: Dataset, train_fraction: float, seed: int):
    """Random permutation split into ceil(fraction * n) train rows and the
    rest; the permutation comes from stream (seed, 11)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if ds.n < 2:
        raise ValueError("need at least 2 rows to split")
    perm = RandomStream(seed, 11).generator().permutation(ds.n)
    n_train = math.ceil(train_fraction * ds.n)
    tr, te = perm[:n_train], perm[n_train:]
    make = lambda idx: Dataset(
        features=ds.features[idx],
        targets=ds.targets[idx],
        feature_names=ds.feature_names,
        task=ds.task,
        meta=ds.meta,
    )
    return make(tr), make(te)


def standardize(train: Dataset, test: Dataset | None = None):
    """Z-score features (and regression targets) by train statistics.

    Constant columns pass through untouched (mean 0, scale 1). The test set,
    when given, is transformed with the train statistics. Returns
    (train', test', stats); test' is None when no test set was given.
    """
    if train.n < 2:
        raise ValueError("need at least 2 train rows to standardize")
    fmean = train.features.mean(axis=0)
    fscale = train.features.std(axis=0)
    constant = fscale < 1e-12
    fmean = np.where(constant, 0.0, fmean)
    fscale = np.where(constant, 1.0, fscale)
    if train.task == "regression":
        tmean = float(train.targets.mean())
        tscale = float(train.targets.std())
        if tscale < 1e-12:
            tmean, tscale = 0.0, 1.0
    else:
        tmean = tscale = None
    stats = Standardization(fmean, fscale, tmean, tscale)
    test_out = stats.apply(test) if test is not None else None
    return stats.apply(train), test_out, stats
