"""Seeded synthetic stand-ins for the census-income and hourly-pollution tasks.

Both generators are small enough for desk-scale experiments and mimic the
column structure (and, for pollution, the strong class imbalance) of the
original data so the same preprocessing code paths are exercised.
"""

from __future__ import annotations

import io
import math

import numpy as np
import pandas as pd

from .ingest import CATEGORICAL, NUMERIC, PreprocessPlan, TabularDataset, label_by_future_level

__all__ = ["adult_like_csv", "adult_like_plan", "pollution_like", "POLLUTION_POSITIVE_RATE"]

POLLUTION_POSITIVE_RATE = 0.014

_WORKCLASS = ["Private", "Self-emp", "Government"]
_EDUCATION = [("HS-grad", 9), ("Some-college", 10), ("Bachelors", 13), ("Masters", 14), ("Doctorate", 16)]
_MARITAL = ["Married", "Never-married", "Divorced"]
_SEX = ["Male", "Female"]
_COUNTRIES = ["United-States", "Mexico", "India", "Germany"]


def adult_like_csv(n: int = 2000, seed: int = 0, missing_rate: float = 0.03) -> str:
    """CSV text shaped like the census-income file, '?' marking missing cells.

    The income label depends on a noisy linear score of age, education,
    hours, marital status and sex, calibrated to roughly 25% positives.
    """
    rng = np.random.default_rng(seed)
    age = rng.integers(18, 70, n)
    workclass = rng.choice(_WORKCLASS, n, p=[0.7, 0.12, 0.18])
    edu_idx = rng.choice(len(_EDUCATION), n, p=[0.35, 0.3, 0.2, 0.1, 0.05])
    education = np.array([_EDUCATION[i][0] for i in edu_idx])
    education_num = np.array([_EDUCATION[i][1] for i in edu_idx])
    marital = rng.choice(_MARITAL, n, p=[0.47, 0.33, 0.2])
    sex = rng.choice(_SEX, n, p=[0.67, 0.33])
    hours = np.clip(np.round(rng.normal(40, 11, n)), 1, 99).astype(int)
    country = rng.choice(_COUNTRIES, n, p=[0.9, 0.04, 0.03, 0.03])
    capital_gain = np.where(rng.random(n) < 0.08, np.round(rng.exponential(5000, n)), 0).astype(int)

    score = (
        0.045 * (age - 40)
        - 0.0007 * (age - 45) ** 2
        + 0.45 * (education_num - 10)
        + 0.035 * (hours - 40)
        + 1.3 * (marital == "Married")
        + 0.35 * (sex == "Male")
        + 0.00012 * capital_gain
        + 0.2 * (country == "United-States")
        + rng.logistic(0.0, 0.8, n)
    )
    income = np.where(score > np.quantile(score, 0.75), ">50K", "<=50K")

    frame = pd.DataFrame(
        {
            "age": age,
            "workclass": workclass,
            "education": education,
            "education-num": education_num,
            "marital-status": marital,
            "sex": sex,
            "capital-gain": capital_gain,
            "hours-per-week": hours,
            "native-country": country,
            "income": income,
        }
    ).astype(object)
    for col in ("workclass", "native-country"):
        holes = rng.random(n) < missing_rate
        frame.loc[holes, col] = "?"
    buf = io.StringIO()
    frame.to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue()


def adult_like_plan() -> PreprocessPlan:
    """Missing rows out, education dropped, native country as a US indicator, one-hot, standardize."""
    return PreprocessPlan(
        label="income",
        label_positive=">50K",
        drop_columns=("education",),
        indicators={"native-country": "United-States"},
    )


def pollution_like(n_hours: int = 2800, seed: int = 0, positive_rate: float = POLLUTION_POSITIVE_RATE) -> TabularDataset:
    """Hourly meteorology plus PM2.5 with a next-hour exceedance label.

    PM2.5 follows a log-AR(1) process driven by dew point, pressure, wind
    and rain; the exceedance level is set to the ``1 - positive_rate``
    quantile of the next-hour concentration so the label has the requested
    rate. The table has ``n_hours - 1`` rows (the last hour has no future).
    """
    if not 0.0 < positive_rate < 0.5:
        raise ValueError("positive_rate must lie in (0, 0.5)")
    rng = np.random.default_rng(seed)
    t = np.arange(n_hours)
    day = 2 * math.pi * t / 24.0
    year = 2 * math.pi * t / (24.0 * 365.0)
    temp = 12 - 14 * np.cos(year) + 5 * np.sin(day - 1.0) + rng.normal(0, 2.0, n_hours)
    dew = temp - 8 + 4 * np.cos(year) + _ar1(rng, n_hours, 0.95, 1.5)
    pres = 1016 + 10 * np.cos(year) + _ar1(rng, n_hours, 0.98, 1.0)
    wind_dir = rng.choice(["NE", "NW", "SE", "cv"], n_hours, p=[0.12, 0.32, 0.35, 0.21])
    wind_speed = np.abs(_ar1(rng, n_hours, 0.9, 3.0)) + np.where(wind_dir == "NW", 4.0, 0.5)
    rain = rng.random(n_hours) < 0.04
    snow = rng.random(n_hours) < 0.01
    rain_hours = _run_lengths(rain)
    snow_hours = _run_lengths(snow)

    log_pm = np.empty(n_hours)
    log_pm[0] = 4.0
    for k in range(1, n_hours):
        drive = (
            0.06 * (dew[k] - temp[k] + 8)
            - 0.02 * (pres[k] - 1016)
            - 0.05 * wind_speed[k]
            - 0.25 * (wind_dir[k] == "NW")
            - 0.1 * rain[k]
        )
        log_pm[k] = 0.9 * log_pm[k - 1] + 0.1 * 4.0 + drive + rng.normal(0, 0.7)
    pm25 = np.exp(log_pm)

    level = float(np.quantile(pm25[1:], 1.0 - positive_rate))
    labels = label_by_future_level(pm25, level)
    frame = pd.DataFrame(
        {
            "pm2.5": pm25[:-1],
            "dew": dew[:-1],
            "temp": temp[:-1],
            "pres": pres[:-1],
            "wind_dir": wind_dir[:-1],
            "wind_speed": wind_speed[:-1],
            "snow_hours": snow_hours[:-1].astype(float),
            "rain_hours": rain_hours[:-1].astype(float),
            "label": labels,
        }
    )
    kinds = {c: NUMERIC for c in frame.columns}
    kinds["wind_dir"] = CATEGORICAL
    return TabularDataset(frame, kinds, label="label")


def _ar1(rng, n, phi, sigma):
    x = np.empty(n)
    x[0] = rng.normal(0, sigma / math.sqrt(1 - phi**2))
    noise = rng.normal(0, sigma, n)
    for k in range(1, n):
        x[k] = phi * x[k - 1] + noise[k]
    return x


def _run_lengths(flags: np.ndarray) -> np.ndarray:
    """Cumulative count of consecutive flagged hours, reset at each unflagged hour."""
    out = np.zeros(flags.size, dtype=int)
    run = 0
    for k, f in enumerate(flags):
        run = run + 1 if f else 0
        out[k] = run
    return out
