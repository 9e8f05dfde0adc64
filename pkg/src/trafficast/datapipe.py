"""Ingestion and preprocessing for the hourly Metro Interstate traffic CSV.

Pipeline stages, each a pure function: parse -> encode -> outlier filter ->
chronological split -> min-max scale -> gap-aware sliding windows. Outlier
filtering and scaler fitting see training rows only; test rows pass through
untouched. Row removal leaves timestamp gaps, and the window builder never
stitches across a gap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

CSV_HEADER = [
    "holiday", "temp", "rain_1h", "snow_1h", "clouds_all",
    "weather_main", "weather_description", "date_time", "traffic_volume",
]
TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
REDUCED_COLUMNS = ["temp", "rain_1h", "clouds_all", "traffic_volume"]
DEFAULT_OUTLIER_COLUMNS = ("temp", "rain_1h")
FEATURE_SETS = ("all", "reduced")


class DataError(ValueError):
    """Input data violates the pipeline's contract."""


class CsvError(DataError):
    """CSV file is missing, malformed or has the wrong schema."""


class EmptyDatasetError(DataError):
    """A pipeline stage produced no usable rows or windows."""


@dataclass
class RawRecord:
    holiday: str
    temp: float
    rain_1h: float
    snow_1h: float
    clouds_all: float
    weather_main: str
    weather_description: str
    date_time: datetime
    traffic_volume: float


@dataclass
class FeatureFrame:
    """Timestamped numeric feature table; values has one row per record."""

    column_names: list[str]
    timestamps: list[datetime]
    values: np.ndarray
    target_col: int

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.column_names.index(name)]
        except ValueError:
            raise KeyError(f"no column {name!r}, have {self.column_names}") from None


@dataclass
class ScalerParams:
    """Per-column min/max fitted on training rows only."""

    columns: list[str]
    mins: np.ndarray
    maxs: np.ndarray
    target_col: int


@dataclass
class WindowConfig:
    lookback: int
    horizon: int = 1
    feature_set: str = "all"
    max_gap: int = 1

    def validate(self) -> None:
        if self.lookback < 1 or self.horizon < 1:
            raise ValueError(f"lookback and horizon must be >= 1, got {self.lookback}, {self.horizon}")
        if self.feature_set not in FEATURE_SETS:
            raise ValueError(f"feature_set must be one of {FEATURE_SETS}, got {self.feature_set!r}")
        if self.max_gap < 1:
            raise ValueError(f"max_gap must be >= 1, got {self.max_gap}")


@dataclass
class WindowedDataset:
    """inputs: (samples, lookback, features); targets: (samples, horizon)."""

    inputs: np.ndarray
    targets: np.ndarray
    target_timestamps: list[datetime]

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]


def read_records(path) -> list[RawRecord]:
    """Parse every CSV row in file order; no dedup, no sorting."""
    path = Path(path)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise CsvError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise CsvError(f"{path}: bad header {header}, expected {CSV_HEADER}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise CsvError(f"{path}, line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                rec = RawRecord(
                    holiday=row[0],
                    temp=float(row[1]),
                    rain_1h=float(row[2]),
                    snow_1h=float(row[3]),
                    clouds_all=float(row[4]),
                    weather_main=row[5],
                    weather_description=row[6],
                    date_time=datetime.strptime(row[7], TIMESTAMP_FORMAT),
                    traffic_volume=float(row[8]),
                )
            except ValueError as exc:
                raise CsvError(f"{path}, line {lineno}: {exc}") from None
            if rec.traffic_volume < 0:
                raise CsvError(f"{path}, line {lineno}: negative traffic_volume {rec.traffic_volume}")
            records.append(rec)
    if not records:
        raise CsvError(f"{path}: no data rows")
    return records


def dedup_sort(records: list[RawRecord]) -> list[RawRecord]:
    """Keep the first record per timestamp, then sort chronologically."""
    seen: dict[datetime, RawRecord] = {}
    for rec in records:
        seen.setdefault(rec.date_time, rec)
    return sorted(seen.values(), key=lambda r: r.date_time)


def parse_csv(path) -> list[RawRecord]:
    """Read, dedup (first occurrence wins) and chronologically sort the CSV."""
    return dedup_sort(read_records(path))


def encode(records: list[RawRecord], feature_set: str) -> FeatureFrame:
    """Turn records into a numeric frame; traffic_volume is always the last column.

    "reduced" keeps temp, rain_1h, clouds_all and the target. "all" adds
    snow_1h, a 0/1 holiday flag, a one-hot of weather_main (categories taken
    from the data, alphabetical) and cyclical hour-of-day / day-of-week
    encodings. weather_description is dropped either way.
    """
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"unknown feature_set {feature_set!r}, expected one of {FEATURE_SETS}")
    if not records:
        raise EmptyDatasetError("encode: no records")
    timestamps = [r.date_time for r in records]
    if feature_set == "reduced":
        values = np.array(
            [[r.temp, r.rain_1h, r.clouds_all, r.traffic_volume] for r in records], dtype=np.float64)
        return FeatureFrame(list(REDUCED_COLUMNS), timestamps, values, target_col=3)
    categories = sorted({r.weather_main for r in records})
    names = ["temp", "rain_1h", "snow_1h", "clouds_all", "holiday_flag"]
    names += [f"weather_{c}" for c in categories]
    names += ["hour_sin", "hour_cos", "dow_sin", "dow_cos", "traffic_volume"]
    values = np.zeros((len(records), len(names)))
    cat_index = {c: 5 + k for k, c in enumerate(categories)}
    tail = 5 + len(categories)
    for i, r in enumerate(records):
        values[i, 0:4] = (r.temp, r.rain_1h, r.snow_1h, r.clouds_all)
        values[i, 4] = 0.0 if r.holiday == "None" else 1.0
        values[i, cat_index[r.weather_main]] = 1.0
        hour_angle = 2.0 * math.pi * r.date_time.hour / 24.0
        dow_angle = 2.0 * math.pi * r.date_time.weekday() / 7.0
        values[i, tail:tail + 4] = (
            math.sin(hour_angle), math.cos(hour_angle), math.sin(dow_angle), math.cos(dow_angle))
        values[i, -1] = r.traffic_volume
    return FeatureFrame(names, timestamps, values, target_col=len(names) - 1)


def quantile(sorted_values, q: float) -> float:
    """Linear-interpolation quantile at position q * (n - 1) of ascending values."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("quantile: empty input")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile: q must be in [0, 1], got {q}")
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(sorted_values[lo]) + frac * (float(sorted_values[hi]) - float(sorted_values[lo]))


def describe(frame: FeatureFrame) -> list[dict]:
    """Per-column count, mean, population std, min and quartiles."""
    if frame.n_rows == 0:
        raise EmptyDatasetError("describe: empty frame")
    out = []
    for j, name in enumerate(frame.column_names):
        col = np.sort(frame.values[:, j])
        out.append({
            "column": name,
            "count": int(col.size),
            "mean": float(col.mean()),
            "std": float(col.std()),  # population: divide by n
            "min": float(col[0]),
            "q25": quantile(col, 0.25),
            "q50": quantile(col, 0.50),
            "q75": quantile(col, 0.75),
            "max": float(col[-1]),
        })
    return out


def iqr_bounds(values) -> tuple[float, float]:
    """[Q1 - 1.5 IQR, Q3 + 1.5 IQR] from the values as given."""
    s = np.sort(np.asarray(values, dtype=np.float64))
    q1 = quantile(s, 0.25)
    q3 = quantile(s, 0.75)
    iqr = q3 - q1
    return q1 - 1.5 * iqr, q3 + 1.5 * iqr


def take_rows(frame: FeatureFrame, index) -> FeatureFrame:
    """New frame holding the selected rows, order preserved."""
    idx = np.asarray(index)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    return FeatureFrame(
        column_names=list(frame.column_names),
        timestamps=[frame.timestamps[i] for i in idx],
        values=frame.values[idx].copy(),
        target_col=frame.target_col,
    )


def iqr_filter(
    frame: FeatureFrame, columns=DEFAULT_OUTLIER_COLUMNS
) -> tuple[FeatureFrame, dict[str, int]]:
    """Drop every row outside the IQR bounds of any named column.

    Bounds are computed once, on the frame as given, before any removal.
    Per-column counts report how many rows violated that column's bounds
    (a row can be counted under several columns).
    """
    keep = np.ones(frame.n_rows, dtype=bool)
    removed: dict[str, int] = {}
    for name in columns:
        col = frame.column(name)
        lo, hi = iqr_bounds(col)
        outside = (col < lo) | (col > hi)
        removed[name] = int(outside.sum())
        keep &= ~outside
    return take_rows(frame, keep), removed


def split_by_year(frame: FeatureFrame, train_end_year: int) -> tuple[FeatureFrame, FeatureFrame]:
    """(rows with year <= train_end_year, rows after it); both chronological."""
    years = np.array([ts.year for ts in frame.timestamps])
    return take_rows(frame, years <= train_end_year), take_rows(frame, years > train_end_year)


def split_tail(frame: FeatureFrame, fraction: float) -> tuple[FeatureFrame, FeatureFrame]:
    """(head, chronological tail holding floor(n * fraction) rows)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    n_tail = int(frame.n_rows * fraction)
    cut = frame.n_rows - n_tail
    return take_rows(frame, np.arange(cut)), take_rows(frame, np.arange(cut, frame.n_rows))


def split(
    frame: FeatureFrame, train_end_year: int = 2017, val_fraction: float = 0.2
) -> tuple[FeatureFrame, FeatureFrame, FeatureFrame]:
    """Chronological (train, val, test): test is everything after train_end_year,
    val is the last val_fraction of the remaining rows. No shuffling."""
    trainval, test = split_by_year(frame, train_end_year)
    train, val = split_tail(trainval, val_fraction)
    for name, part in (("train", train), ("val", val), ("test", test)):
        if part.n_rows == 0:
            raise EmptyDatasetError(f"split: empty {name} split (boundary year {train_end_year})")
    return train, val, test


def fit_scaler(frame: FeatureFrame) -> ScalerParams:
    """Per-column min/max of the given (training) frame."""
    if frame.n_rows == 0:
        raise EmptyDatasetError("fit_scaler: empty frame")
    return ScalerParams(
        columns=list(frame.column_names),
        mins=frame.values.min(axis=0),
        maxs=frame.values.max(axis=0),
        target_col=frame.target_col,
    )


def transform(frame: FeatureFrame, params: ScalerParams) -> FeatureFrame:
    """Map each column through (x - min) / (max - min); constant columns go to 0."""
    if frame.column_names != params.columns:
        raise ValueError(
            f"transform: frame columns {frame.column_names} do not match scaler columns {params.columns}")
    span = params.maxs - params.mins
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (frame.values - params.mins) / safe, 0.0)
    return FeatureFrame(list(frame.column_names), list(frame.timestamps), scaled, frame.target_col)


def inverse_target(values, params: ScalerParams):
    """Undo the target-column scaling: x = x' * (max - min) + min."""
    if not 0 <= params.target_col < len(params.columns):
        raise ValueError(f"scaler has no target column (index {params.target_col})")
    lo = params.mins[params.target_col]
    hi = params.maxs[params.target_col]
    return np.asarray(values, dtype=np.float64) * (hi - lo) + lo


def consecutive_runs(timestamps: list[datetime], max_gap: int = 1) -> list[tuple[int, int]]:
    """Half-open index ranges [start, end) of runs with gaps <= max_gap hours."""
    if not timestamps:
        return []
    allowed = timedelta(hours=max_gap)
    runs = []
    start = 0
    for i in range(1, len(timestamps)):
        if timestamps[i] - timestamps[i - 1] > allowed:
            runs.append((start, i))
            start = i
    runs.append((start, len(timestamps)))
    return runs


def make_windows(frame: FeatureFrame, cfg: WindowConfig) -> WindowedDataset:
    """Slide over every contiguous run; a run of m rows yields m - l - f + 1 windows.

    Inputs are l consecutive scaled feature rows; targets are the next f
    values of the target column; the stored timestamp is the first target's.
    """
    cfg.validate()
    l, f = cfg.lookback, cfg.horizon
    runs = consecutive_runs(frame.timestamps, cfg.max_gap)
    counts = [max(0, (b - a) - l - f + 1) for a, b in runs]
    total = sum(counts)
    if total == 0:
        longest = max((b - a for a, b in runs), default=0)
        raise EmptyDatasetError(
            f"make_windows: lookback + horizon = {l + f} rows exceeds every contiguous run "
            f"(longest run has {longest})")
    inputs = np.empty((total, l, len(frame.column_names)))
    targets = np.empty((total, f))
    stamps: list[datetime] = []
    k = 0
    for (a, b), c in zip(runs, counts):
        for s in range(a, a + c):
            inputs[k] = frame.values[s:s + l]
            targets[k] = frame.values[s + l:s + l + f, frame.target_col]
            stamps.append(frame.timestamps[s + l])
            k += 1
    return WindowedDataset(inputs=inputs, targets=targets, target_timestamps=stamps)


@dataclass
class PreparedData:
    """Everything a training or evaluation run needs, derived from one CSV."""

    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset
    scaler: ScalerParams
    feature_columns: list[str]
    removed_outliers: dict[str, int]
    split_rows: dict[str, int]


def prepare_datasets(
    records: list[RawRecord],
    cfg: WindowConfig,
    *,
    train_end_year: int = 2017,
    val_fraction: float = 0.2,
    outlier_columns=DEFAULT_OUTLIER_COLUMNS,
    scale_fraction: float | None = None,
) -> PreparedData:
    """Full deterministic pipeline from parsed records to windowed splits.

    Outlier rows are removed from train+val only (bounds computed on
    train+val), the scaler is fitted on the training rows after filtering,
    and scale_fraction (when given) keeps only the chronological tail of
    train+val and the adjacent head of the test year, for desk-scale runs.
    """
    frame = encode(records, cfg.feature_set)
    trainval, test = split_by_year(frame, train_end_year)
    if scale_fraction is not None:
        _, trainval = split_tail(trainval, scale_fraction)
        test, _ = split_tail(test, 1.0 - scale_fraction)
    if trainval.n_rows == 0 or test.n_rows == 0:
        raise EmptyDatasetError(
            f"prepare_datasets: empty train+val or test rows around boundary year {train_end_year}")
    trainval, removed = iqr_filter(trainval, outlier_columns)
    train_frame, val_frame = split_tail(trainval, val_fraction)
    if train_frame.n_rows == 0 or val_frame.n_rows == 0:
        raise EmptyDatasetError("prepare_datasets: empty train or val rows after filtering")
    scaler = fit_scaler(train_frame)
    sets = {}
    for name, part in (("train", train_frame), ("val", val_frame), ("test", test)):
        sets[name] = make_windows(transform(part, scaler), cfg)
    return PreparedData(
        train=sets["train"],
        val=sets["val"],
        test=sets["test"],
        scaler=scaler,
        feature_columns=list(frame.column_names),
        removed_outliers=removed,
        split_rows={"train": train_frame.n_rows, "val": val_frame.n_rows, "test": test.n_rows},
    )
