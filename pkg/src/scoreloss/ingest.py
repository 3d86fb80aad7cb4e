"""Tabular data loading and preprocessing.

Covers CSV parsing with missing-value sentinels, dropping and indicator
mapping of named columns, one-hot encoding of categoricals, standardization
with statistics fitted on a chosen portion, future-level labeling of time
series, and sliding train/test windows.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

__all__ = [
    "DataError",
    "TabularDataset",
    "PreprocessPlan",
    "Standardizer",
    "column_stats",
    "read_csv",
    "clean_and_encode",
    "encode_features",
    "label_by_future_level",
    "WindowPlan",
    "make_windows",
]

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class DataError(ValueError):
    """Input data does not satisfy what the requested operation needs."""


@dataclass(eq=False)
class TabularDataset:
    """A rectangular table with a kind ('numeric' or 'categorical') per column.

    Values live in a pandas DataFrame; categorical columns hold strings,
    numeric columns floats. Missing values are NaN/None until cleaned.
    """

    frame: pd.DataFrame
    kinds: dict[str, str]
    label: str | None = None

    def __post_init__(self):
        missing = [c for c in self.frame.columns if c not in self.kinds]
        if missing:
            raise DataError(f"no kind recorded for columns {missing}")
        if self.label is not None and self.label not in self.frame.columns:
            raise DataError(f"label column {self.label!r} not in table")

    @property
    def columns(self) -> list[str]:
        return list(self.frame.columns)

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    def cardinalities(self) -> dict[str, int]:
        return {c: int(self.frame[c].nunique(dropna=True)) for c in self.columns if self.kinds[c] == CATEGORICAL}

    def feature_columns(self) -> list[str]:
        return [c for c in self.columns if c != self.label]

    def features(self) -> np.ndarray:
        cols = self.feature_columns()
        bad = [c for c in cols if self.kinds[c] != NUMERIC]
        if bad:
            raise DataError(f"columns {bad} are not numeric; encode first")
        return self.frame[cols].to_numpy(dtype=float)

    def labels(self) -> np.ndarray:
        if self.label is None:
            raise DataError("dataset has no label column")
        return self.frame[self.label].to_numpy().astype(int)

    def to_csv(self) -> str:
        buf = io.StringIO()
        # repr-exact floats so a re-read reproduces the table bit for bit
        self.frame.to_csv(buf, index=False, lineterminator="\n", float_format=None)
        return buf.getvalue()


def _infer_kind(values: pd.Series) -> str:
    present = values.dropna()
    if present.empty:
        return NUMERIC
    converted = pd.to_numeric(present, errors="coerce")
    return NUMERIC if converted.notna().all() else CATEGORICAL


def read_csv(
    source: str | Path | io.TextIOBase,
    missing_tokens: Sequence[str] = ("", "?"),
    label: str | None = None,
    kinds: dict[str, str] | None = None,
) -> TabularDataset:
    """Parse a header-row CSV (RFC 4180 quoting) into a TabularDataset.

    Cells are whitespace-stripped; cells equal to any of ``missing_tokens``
    become missing. Column kinds are inferred unless given in ``kinds``.
    """
    try:
        frame = pd.read_csv(
            source,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            quotechar='"',
            header=None,  # pandas would silently rename duplicate names
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"could not parse CSV: {exc}") from exc
    header = [str(c).strip() for c in frame.iloc[0]]
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    frame = frame.iloc[1:].reset_index(drop=True)
    frame.columns = header
    tokens = set(missing_tokens)
    frame = frame.apply(lambda col: col.str.strip()).astype(object)
    frame = frame.where(~frame.isin(tokens), None)

    out_kinds: dict[str, str] = {}
    for col in frame.columns:
        kind = (kinds or {}).get(col) or _infer_kind(frame[col])
        if kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"unknown column kind {kind!r} for {col!r}")
        if kind == NUMERIC:
            converted = pd.to_numeric(frame[col], errors="coerce")
            bad = converted.isna() & frame[col].notna()
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                raise DataError(f"row {row + 2}, column {col!r}: {frame[col].iloc[row]!r} is not numeric")
            # to_numeric's fast parser is not round-trip exact; Python's float() is
            frame[col] = frame[col].astype(float)
        out_kinds[col] = kind
    return TabularDataset(frame.reset_index(drop=True), out_kinds, label)


@dataclass(frozen=True)
class PreprocessPlan:
    """Declarative preprocessing steps, applied in field order.

    ``label_positive`` maps the label column to 1 where it equals that value
    (0 elsewhere); when None the label column must already be 0/1.
    ``indicators`` maps a column to the value that becomes 1 (all else 0).
    ``standardize`` is one of "all", "numeric" (original numeric columns
    only) or "none".
    """

    label: str | None = None
    label_positive: str | None = None
    drop_missing: bool = True
    drop_columns: tuple[str, ...] = ()
    indicators: dict[str, str] = field(default_factory=dict)
    one_hot: bool = True
    standardize: str = "all"

    def __post_init__(self):
        object.__setattr__(self, "drop_columns", tuple(self.drop_columns))
        if self.standardize not in ("all", "numeric", "none"):
            raise ValueError(f"standardize must be all/numeric/none, got {self.standardize!r}")

    @classmethod
    def from_config(cls, cfg: dict[str, Any] | None) -> "PreprocessPlan":
        cfg = dict(cfg or {})
        known = {f for f in cls.__dataclass_fields__}
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown preprocessing keys: {sorted(extra)}")
        if "label_positive" in cfg and cfg["label_positive"] is not None:
            cfg["label_positive"] = str(cfg["label_positive"])
        if "indicators" in cfg:
            cfg["indicators"] = {str(k): str(v) for k, v in (cfg["indicators"] or {}).items()}
        return cls(**cfg)


def column_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and scales (population std) for standardization.

    Columns whose spread is at rounding level are treated as constant and
    only centered; dividing by a std of 1e-16 would turn rounding noise
    into unit-sized features.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] == 0:
        raise DataError("cannot fit standardization on zero rows")
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    floor = 64 * np.finfo(float).eps * np.max(np.abs(values), axis=0, initial=0.0)
    return mean, np.where(std > floor, std, 1.0)


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine map fitted on one portion and applied to any other."""

    columns: tuple[str, ...]
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, frame: pd.DataFrame, columns: Sequence[str]) -> "Standardizer":
        mean, scale = column_stats(frame[list(columns)].to_numpy(dtype=float))
        return cls(tuple(columns), mean, scale)

    def transform(self, frame: pd.DataFrame) -> pd.DataFrame:
        out = frame.copy()
        if self.columns:
            out[list(self.columns)] = (frame[list(self.columns)].to_numpy(dtype=float) - self.mean) / self.scale
        return out

    def transform_array(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale


def encode_features(raw: TabularDataset, plan: PreprocessPlan) -> tuple[TabularDataset, list[str]]:
    """All steps except standardization.

    Returns the encoded dataset and the names of columns eligible for
    standardization under ``plan.standardize``.
    """
    frame = raw.frame.copy()
    kinds = dict(raw.kinds)
    label = plan.label if plan.label is not None else raw.label

    referenced = list(plan.drop_columns) + list(plan.indicators) + ([label] if label else [])
    unknown = [c for c in referenced if c not in frame.columns]
    if unknown:
        raise DataError(f"unknown columns in plan: {unknown}")

    if plan.drop_missing:
        frame = frame.dropna(axis=0, how="any").reset_index(drop=True)
    elif frame.isna().any().any():
        raise DataError("missing values present and drop_missing is off")
    if len(frame) == 0:
        raise DataError("no rows left after removing missing values")

    frame = frame.drop(columns=list(plan.drop_columns))
    for col in plan.drop_columns:
        kinds.pop(col)

    if label is not None:
        if plan.label_positive is not None:
            frame[label] = (frame[label].astype(str) == plan.label_positive).astype(int)
        else:
            values = pd.to_numeric(frame[label], errors="coerce")
            if values.isna().any() or not values.isin([0, 1]).all():
                raise DataError(f"label column {label!r} is not 0/1; set label_positive")
            frame[label] = values.astype(int)
        kinds[label] = NUMERIC

    for col, value in plan.indicators.items():
        if kinds[col] == NUMERIC:
            hit = frame[col].astype(float) == float(value)
        else:
            hit = frame[col].astype(str) == value
        frame[col] = hit.astype(float)
        kinds[col] = NUMERIC

    numeric_orig = [c for c in frame.columns if c != label and kinds[c] == NUMERIC and c not in plan.indicators]
    blocks = []
    for col in list(frame.columns):
        if col == label:
            continue
        if kinds[col] == CATEGORICAL:
            if not plan.one_hot:
                raise DataError(f"categorical column {col!r} left unencoded")
            levels = sorted(frame[col].astype(str).unique())
            for level in levels:
                blocks.append((f"{col}={level}", (frame[col].astype(str) == level).astype(float), col))
        else:
            blocks.append((col, frame[col].astype(float), None))

    data = {name: series.to_numpy() for name, series, _ in blocks}
    out = pd.DataFrame(data, columns=[name for name, _, _ in blocks])
    out_kinds = {name: NUMERIC for name, _, _ in blocks}
    if label is not None:
        out[label] = frame[label].to_numpy().astype(int)
        out_kinds[label] = NUMERIC

    if plan.standardize == "all":
        to_scale = [name for name, _, _ in blocks]
    elif plan.standardize == "numeric":
        to_scale = [c for c in numeric_orig]
    else:
        to_scale = []
    return TabularDataset(out, out_kinds, label), to_scale


def clean_and_encode(
    raw: TabularDataset,
    plan: PreprocessPlan,
    fit_rows: Sequence[int] | np.ndarray | slice | None = None,
) -> TabularDataset:
    """Apply the plan; standardization statistics come from ``fit_rows`` only.

    ``fit_rows`` indexes rows of the cleaned table (after missing-value
    removal). By default every row is used.
    """
    encoded, to_scale = encode_features(raw, plan)
    if not to_scale:
        return encoded
    frame = encoded.frame
    fit_part = frame.iloc[fit_rows] if fit_rows is not None else frame
    scaler = Standardizer.fit(fit_part, to_scale)
    return TabularDataset(scaler.transform(frame), encoded.kinds, encoded.label)


def label_by_future_level(series, level: float) -> np.ndarray:
    """Label step t with 1 when the next value exceeds ``level``; drops the last step."""
    s = np.asarray(series, dtype=float).ravel()
    if s.size < 2:
        raise DataError("need at least two time steps")
    if np.any(np.isnan(s)):
        raise DataError("series contains missing values")
    return (s[1:] > level).astype(int)


@dataclass(frozen=True)
class WindowPlan:
    train_length: int
    test_length: int
    shift: int
    repeats: int

    def __post_init__(self):
        if self.train_length < 1 or self.test_length < 1:
            raise ValueError("train and test lengths must be positive")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")
        if self.repeats < 1:
            raise ValueError("repeats must be positive")

    @property
    def span(self) -> int:
        return self.train_length + self.test_length + self.shift * (self.repeats - 1)


def make_windows(n_rows: int, plan: WindowPlan) -> list[tuple[slice, slice]]:
    """Chronological (train, test) row slices; the test block starts where training ends."""
    if plan.span > n_rows:
        raise DataError(f"window plan needs {plan.span} rows, dataset has {n_rows}")
    out = []
    for r in range(plan.repeats):
        start = r * plan.shift
        mid = start + plan.train_length
        out.append((slice(start, mid), slice(mid, mid + plan.test_length)))
    return out
