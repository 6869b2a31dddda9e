"""Tabular data container, CSV ingestion, and train/calibration splitting."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["DataError", "Dataset", "SplitPair", "load_csv", "save_csv", "split_train_cal"]


class DataError(Exception):
    """Raised when a data file cannot be ingested or fails validation."""


@dataclass(frozen=True)
class Dataset:
    """Immutable n x d table of finite real numbers with named columns."""

    values: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if values.ndim != 2:
            raise DataError(f"expected a 2-d table, got shape {values.shape}")
        n, d = values.shape
        if n < 1 or d < 1:
            raise DataError(f"dataset must have n >= 1 and d >= 1, got {n}x{d}")
        if len(self.feature_names) != d:
            raise DataError(
                f"{len(self.feature_names)} feature names for {d} columns"
            )
        if len(set(self.feature_names)) != d:
            raise DataError("feature names must be unique")
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {i}, column {j}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"no feature named {name!r}") from None


@dataclass(frozen=True)
class SplitPair:
    """Disjoint proper-training / calibration partition of a source dataset."""

    proper_train: Dataset
    calibration: Dataset
    ratio: float
    seed: int


def default_names(d: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(d))


def load_csv(path: str | Path, has_header: bool = True) -> Dataset:
    """Read a comma-separated numeric table.

    Lines starting with '#' are ignored.  With ``has_header`` the first
    remaining line supplies feature names, otherwise names are generated
    as ``x0..x{d-1}``.  Every cell must parse as a finite real number;
    the error for a bad cell names its row and column.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    rows: list[list[float]] = []
    names: tuple[str, ...] | None = None
    width: int | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if names is None and has_header:
                names = tuple(c.strip() for c in cells)
                width = len(names)
                continue
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataError(
                    f"{path}: ragged row at line {lineno}: "
                    f"expected {width} columns, got {len(cells)}"
                )
            parsed = []
            for col, cell in enumerate(cells):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse cell at line {lineno}, column {col}: {cell.strip()!r}"
                    ) from None
                if not np.isfinite(value):
                    raise DataError(
                        f"{path}: non-finite value at line {lineno}, column {col}: {cell.strip()!r}"
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.array(rows, dtype=float)
    if names is None:
        names = default_names(values.shape[1])
    return Dataset(values, names)


def save_csv(ds: Dataset, path: str | Path, header: bool = True) -> None:
    """Write a dataset as CSV using shortest round-trippable float text."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        if header:
            fh.write(",".join(ds.feature_names) + "\n")
        for row in ds.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def split_train_cal(ds: Dataset, ratio: float, seed: int) -> SplitPair:
    """Partition rows into proper-training and calibration sets.

    The calibration set receives ``floor(ratio * n)`` rows chosen by a
    seeded uniform shuffle without replacement; the partition is
    deterministic given ``(ds, ratio, seed)``.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n_cal = int(np.floor(ratio * ds.n))
    n_train = ds.n - n_cal
    if n_cal < 1 or n_train < 1:
        raise ValueError(
            f"cannot split n={ds.n} rows with ratio={ratio}: "
            f"both parts must be non-empty"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    cal_idx = np.sort(perm[:n_cal])
    train_idx = np.sort(perm[n_cal:])
    return SplitPair(
        proper_train=Dataset(ds.values[train_idx], ds.feature_names),
        calibration=Dataset(ds.values[cal_idx], ds.feature_names),
        ratio=ratio,
        seed=seed,
    )
