"""Day-by-minute matrices, CSV I/O and the stacked matrix of all consumers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError, RangeError, ShapeError

KW = "kW"
PU_VOLT = "pu"
UNITS = (KW, PU_VOLT)

# Analysis window used throughout: 10:00 to 17:00.
WINDOW_START = 600
WINDOW_END = 1020


@dataclass(frozen=True)
class DayMatrix:
    """An m-days by n-minutes matrix of net power or voltage."""

    values: np.ndarray
    unit: str = KW

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeError(f"DayMatrix needs a 2-D array, got ndim={values.ndim}")
        m, n = values.shape
        if m < 1 or n < 2:
            raise ShapeError(f"DayMatrix needs m >= 1 and n >= 2, got {values.shape}")
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise ShapeError(f"non-finite entry at day {i}, minute {j}")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}; expected one of {UNITS}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)


@dataclass(frozen=True)
class StackedMatrix:
    """Per-consumer blocks appended row-wise; ``block_offsets[k]`` is ``(start, stop)``."""

    values: np.ndarray
    block_offsets: tuple = field(default_factory=tuple)
    unit: str = KW

    @property
    def N(self) -> int:
        return len(self.block_offsets)

    @property
    def shape(self):
        return self.values.shape

    def block(self, k: int) -> np.ndarray:
        start, stop = self.block_offsets[k]
        return self.values[start:stop]

    def locate(self, row: int) -> tuple[int, int]:
        """Map a stacked row index to ``(consumer, day)``."""
        for k, (start, stop) in enumerate(self.block_offsets):
            if start <= row < stop:
                return k, row - start
        raise IndexError(f"row {row} outside stacked matrix with {self.values.shape[0]} rows")

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)


def format_value(x: float) -> str:
    # 17 significant digits in positional notation round-trips every double.
    return np.format_float_positional(x, precision=17, unique=False, fractional=False, trim="k")


def save_day_matrix(path, matrix) -> None:
    values = np.asarray(matrix, dtype=float)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for row in values:
            fh.write(",".join(format_value(v) for v in row))
            fh.write("\n")


def load_day_matrix(path, expected_minutes: int, unit: str = KW, samples_per_minute: int = 1) -> DayMatrix:
    """Read a header-less CSV of days by minutes.

    With ``samples_per_minute > 1`` each row holds sub-minute readings and
    every minute keeps the largest of its readings.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    expected_cols = expected_minutes * samples_per_minute
    rows = []
    with open(path, newline="") as fh:
        for i, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != expected_cols:
                raise ShapeError(
                    f"{path.name}: row {i} has {len(record)} columns, expected {expected_cols}"
                )
            row = []
            for j, cell in enumerate(record, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"{path.name}: cannot parse {cell!r}", row=i, column=j) from None
                if not math.isfinite(value):
                    raise ParseError(f"{path.name}: non-finite value {cell!r}", row=i, column=j)
                row.append(value)
            rows.append(row)
    if not rows:
        raise ShapeError(f"{path.name}: no data rows")
    values = np.array(rows)
    if samples_per_minute > 1:
        values = values.reshape(len(rows), expected_minutes, samples_per_minute).max(axis=2)
    return DayMatrix(values, unit)


def stack(matrices: Sequence) -> StackedMatrix:
    if not matrices:
        raise ShapeError("nothing to stack")
    arrays = [np.asarray(m, dtype=float) for m in matrices]
    n = arrays[0].shape[1]
    units = {getattr(m, "unit", KW) for m in matrices}
    if len(units) > 1:
        raise ShapeError(f"cannot stack matrices with mixed units {sorted(units)}")
    offsets = []
    start = 0
    for k, a in enumerate(arrays):
        if a.shape[1] != n:
            raise ShapeError(f"block {k} has {a.shape[1]} columns, expected {n}")
        offsets.append((start, start + a.shape[0]))
        start += a.shape[0]
    values = np.vstack(arrays)
    values.setflags(write=False)
    return StackedMatrix(values, tuple(offsets), units.pop())


def restrict_to_window(matrix, start_minute: int = WINDOW_START, end_minute: int = WINDOW_END) -> DayMatrix:
    values = np.asarray(matrix, dtype=float)
    n = values.shape[1]
    if not (0 <= start_minute < end_minute <= n):
        raise RangeError(f"window [{start_minute}, {end_minute}) invalid for {n} minutes")
    return DayMatrix(values[:, start_minute:end_minute], getattr(matrix, "unit", KW))
