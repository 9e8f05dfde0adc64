"""Deterministic synthetic traffic CSVs with the Metro Interstate schema.

The real dataset is a public UCI file; this module fabricates a stand-in
with the same contract so the full pipeline can be exercised offline:
hourly rows from 2012-10-02 09:00 to 2018-09-30 23:00, 48204 raw rows
including duplicated timestamps (second weather reading for an hour), a
long sensor outage plus scattered missing hours, a handful of impossible
sensor readings (0 K temperatures, absurd rainfall) and occasional
zero-volume hours. Volumes follow commute-shaped daily profiles with
weekday/weekend/holiday structure, weather dampening and mild noise.

Everything is a pure function of the seed.
"""

from __future__ import annotations

import csv
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from .datapipe import CSV_HEADER, TIMESTAMP_FORMAT

SPAN_START = datetime(2012, 10, 2, 9)
SPAN_END = datetime(2018, 9, 30, 23)
TWIN_ROW_COUNT = 48204
_OUTAGE_START = datetime(2014, 8, 8, 0)
_OUTAGE_HOURS = 7000
_DUPLICATE_ROWS = 7000
_PROTECTED_TAIL_HOURS = 2600  # kept contiguous and glitch-free for desk-scale runs

_WEEKDAY_PROFILE = [
    0.10, 0.07, 0.05, 0.06, 0.10, 0.25, 0.55, 0.85, 0.95, 0.75, 0.65, 0.68,
    0.72, 0.74, 0.78, 0.88, 1.00, 0.98, 0.80, 0.60, 0.45, 0.35, 0.25, 0.15,
]
_WEEKEND_PROFILE = [
    0.18, 0.12, 0.08, 0.06, 0.06, 0.08, 0.12, 0.20, 0.32, 0.45, 0.58, 0.68,
    0.72, 0.73, 0.72, 0.70, 0.66, 0.62, 0.58, 0.50, 0.42, 0.35, 0.30, 0.24,
]
_PEAK_VOLUME = 6600.0

_DESCRIPTIONS = {
    "Clear": ["sky is clear", "Sky is Clear"],
    "Clouds": ["few clouds", "scattered clouds", "broken clouds", "overcast clouds"],
    "Rain": ["light rain", "moderate rain", "heavy intensity rain"],
    "Drizzle": ["light intensity drizzle", "drizzle"],
    "Snow": ["light snow", "snow", "heavy snow"],
    "Mist": ["mist"],
    "Fog": ["fog"],
    "Haze": ["haze"],
    "Thunderstorm": ["thunderstorm with light rain", "proximity thunderstorm"],
}


def _nth_weekday(year: int, month: int, weekday: int, n: int) -> date:
    """n-th (1-based) weekday of a month; n = -1 means the last one."""
    if n > 0:
        d = date(year, month, 1)
        offset = (weekday - d.weekday()) % 7 + (n - 1) * 7
        return d + timedelta(days=offset)
    d = date(year, month + 1, 1) - timedelta(days=1) if month < 12 else date(year, 12, 31)
    return d - timedelta(days=(d.weekday() - weekday) % 7)


def holidays_for_year(year: int) -> dict[date, str]:
    return {
        date(year, 1, 1): "New Years Day",
        _nth_weekday(year, 1, 0, 3): "Martin Luther King Jr Day",
        _nth_weekday(year, 2, 0, 3): "Washingtons Birthday",
        _nth_weekday(year, 5, 0, -1): "Memorial Day",
        date(year, 7, 4): "Independence Day",
        date(year, 8, 23): "State Fair",
        _nth_weekday(year, 9, 0, 1): "Labor Day",
        _nth_weekday(year, 10, 0, 2): "Columbus Day",
        date(year, 11, 11): "Veterans Day",
        _nth_weekday(year, 11, 3, 4): "Thanksgiving Day",
        date(year, 12, 25): "Christmas Day",
    }


def _holiday_lookup(start: datetime, end: datetime) -> dict[date, str]:
    table: dict[date, str] = {}
    for year in range(start.year, end.year + 1):
        table.update(holidays_for_year(year))
    return table


def _weather(dt: datetime, rng: np.random.Generator) -> tuple[float, float, float, int, str]:
    doy = dt.timetuple().tm_yday
    seasonal = 283.0 + 17.0 * np.sin(2.0 * np.pi * (doy - 110) / 365.25)
    diurnal = 4.0 * np.sin(2.0 * np.pi * (dt.hour - 8) / 24.0)
    temp = seasonal + diurnal + rng.normal(0.0, 1.5)
    rain = 0.0
    snow = 0.0
    wet = rng.random()
    if temp < 272.0 and wet < 0.06:
        snow = round(float(rng.uniform(0.02, 0.6)), 2)
    elif temp >= 272.0 and wet < 0.08:
        rain = round(float(np.exp(rng.normal(0.0, 1.0)) * 1.1), 2)
    clouds = int(np.clip(rng.normal(55.0, 32.0), 0, 100))
    if snow > 0:
        main = "Snow"
        clouds = max(clouds, 75)
    elif rain > 8.0:
        main = "Thunderstorm"
        clouds = max(clouds, 80)
    elif rain > 0:
        main = "Rain" if rain >= 0.4 else "Drizzle"
        clouds = max(clouds, 60)
    else:
        spare = rng.random()
        if spare < 0.03:
            main = "Mist"
        elif spare < 0.045:
            main = "Fog"
        elif spare < 0.06:
            main = "Haze"
        else:
            main = "Clouds" if clouds >= 25 else "Clear"
    return float(temp), rain, snow, clouds, main


def _volume(dt: datetime, is_holiday: bool, rain: float, snow: float, rng: np.random.Generator) -> int:
    if dt.weekday() == 6 and dt.hour == 3:
        return 0  # weekly counter reset leaves an empty hour
    profile = _WEEKEND_PROFILE if (dt.weekday() >= 5 or is_holiday) else _WEEKDAY_PROFILE
    v = _PEAK_VOLUME * profile[dt.hour]
    if rain > 0:
        v *= 1.0 - min(0.25, 0.04 + 0.02 * rain)
    if snow > 0:
        v *= 0.82
    v *= 1.0 + rng.normal(0.0, 0.05)
    return int(np.clip(v, 0.0, 7280.0))


def _row(dt: datetime, holidays: dict[date, str], rng: np.random.Generator) -> list[str]:
    temp, rain, snow, clouds, main = _weather(dt, rng)
    holiday = holidays.get(dt.date(), "None") if dt.hour == 0 else "None"
    descriptions = _DESCRIPTIONS[main]
    desc = descriptions[int(rng.integers(len(descriptions)))]
    vol = _volume(dt, holiday != "None", rain, snow, rng)
    return [
        holiday, f"{temp:.2f}", f"{rain:.2f}", f"{snow:.2f}", str(clouds),
        main, desc, dt.strftime(TIMESTAMP_FORMAT), str(vol),
    ]


def _alternate_description(row: list[str], rng: np.random.Generator) -> list[str]:
    options = [d for d in _DESCRIPTIONS[row[5]] if d != row[6]] or _DESCRIPTIONS[row[5]]
    dup = list(row)
    dup[6] = options[int(rng.integers(len(options)))]
    return dup


def continuous_rows(start: datetime, n_hours: int, seed: int = 0) -> list[list[str]]:
    """n_hours of gap-free, duplicate-free rows starting at start."""
    rng = np.random.default_rng(seed)
    hours = [start + timedelta(hours=i) for i in range(n_hours)]
    holidays = _holiday_lookup(hours[0], hours[-1])
    return [_row(dt, holidays, rng) for dt in hours]


def metro_twin_rows(seed: int = 0) -> list[list[str]]:
    """The full 48204-row stand-in for the real file, raw duplicates included."""
    total = int((SPAN_END - SPAN_START) / timedelta(hours=1)) + 1
    all_hours = [SPAN_START + timedelta(hours=i) for i in range(total)]
    outage_end = _OUTAGE_START + timedelta(hours=_OUTAGE_HOURS)
    tail_start = total - _PROTECTED_TAIL_HOURS

    in_outage = np.array([_OUTAGE_START <= dt < outage_end for dt in all_hours])
    assert int(in_outage.sum()) == _OUTAGE_HOURS
    eligible = np.flatnonzero(~in_outage)
    eligible = eligible[(eligible > 0) & (eligible < tail_start)]

    unique_rows = TWIN_ROW_COUNT - _DUPLICATE_ROWS
    n_scatter = total - _OUTAGE_HOURS - unique_rows
    rng = np.random.default_rng(seed)
    scattered = set(rng.choice(eligible, size=n_scatter, replace=False).tolist())
    present = [i for i in range(total) if not in_outage[i] and i not in scattered]
    assert len(present) == unique_rows

    dup_positions = set(rng.choice(len(present), size=_DUPLICATE_ROWS, replace=False).tolist())

    holidays = _holiday_lookup(SPAN_START, SPAN_END)
    row_rng = np.random.default_rng(seed + 1)
    rows: list[list[str]] = []
    glitch_candidates: list[int] = []
    for k, i in enumerate(present):
        dt = all_hours[i]
        row = _row(dt, holidays, row_rng)
        rows.append(row)
        if dt.year < 2018 and i < tail_start:
            glitch_candidates.append(len(rows) - 1)
        if k in dup_positions:
            rows.append(_alternate_description(row, row_rng))
            if dt.year < 2018 and i < tail_start:
                glitch_candidates.append(len(rows) - 1)

    # impossible sensor readings, pre-2018 only: 0 K temperatures and broken rain gauges
    glitch_rng = np.random.default_rng(seed + 2)
    picks = glitch_rng.choice(len(glitch_candidates), size=18, replace=False)
    for j in picks[:10]:
        rows[glitch_candidates[j]][1] = "0.00"
    for j in picks[10:]:
        rows[glitch_candidates[j]][2] = f"{glitch_rng.uniform(60.0, 9831.0):.2f}"

    assert len(rows) == TWIN_ROW_COUNT
    return rows


def write_csv(path, rows: list[list[str]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)


def write_metro_twin(path, seed: int = 0) -> None:
    write_csv(path, metro_twin_rows(seed))
