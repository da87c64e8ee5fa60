"""Monthly-index preprocessing: detrend, deseasonalize, standardize, smooth.

The pipeline order is fixed: (1) remove the ordinary-least-squares linear
trend per column, (2) subtract the per-calendar-month mean, (3) divide by
the per-calendar-month population standard deviation, (4) apply a centered
moving average whose ends truncate to the available samples.  The output is
a dimensionless anomaly trajectory at one-month sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    NonUniformSamplingError,
    TooShortError,
    TrajectoryParseError,
    ZeroMonthlyVarianceError,
)
from .simulate import Trajectory


@dataclass
class MonthlySeries:
    """Gap-free monthly multivariate series starting at (start_year, start_month)."""

    start_year: int
    start_month: int
    values: np.ndarray
    names: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D array (months x columns)")
        if not 1 <= self.start_month <= 12:
            raise ValueError("start_month must be in 1..12")
        if len(self.names) != self.values.shape[1]:
            raise ValueError("one name per column required")

    @property
    def n_months(self) -> int:
        return self.values.shape[0]

    def month_index(self) -> np.ndarray:
        """Calendar month (0-based, January = 0) of every sample."""
        return (self.start_month - 1 + np.arange(self.n_months)) % 12


def load_monthly_csv(path) -> MonthlySeries:
    """Read a monthly CSV with header `date,<name>,...` and YYYY-MM dates."""
    rows = []
    names = None
    start = None
    prev = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if names is None:
                if parts[0] != "date" or len(parts) < 2:
                    raise TrajectoryParseError("header must be 'date,<name>,...'", line=lineno)
                names = tuple(parts[1:])
                continue
            if len(parts) != len(names) + 1:
                raise TrajectoryParseError(
                    f"expected {len(names) + 1} fields, got {len(parts)}", line=lineno
                )
            try:
                year, month = parts[0].split("-")
                ym = int(year) * 12 + (int(month) - 1)
            except ValueError as exc:
                raise TrajectoryParseError(f"bad date {parts[0]!r}", line=lineno) from exc
            if prev is not None and ym != prev + 1:
                raise NonUniformSamplingError(len(rows), f"month gap before {parts[0]}")
            prev = ym
            if start is None:
                start = (int(year), int(month))
            try:
                rows.append([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise TrajectoryParseError(f"bad value in {parts[1:]!r}", line=lineno) from exc
    if names is None or not rows:
        raise TrajectoryParseError("empty monthly file")
    return MonthlySeries(start_year=start[0], start_month=start[1], values=np.array(rows), names=names)


def save_monthly_csv(path, series: MonthlySeries):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date," + ",".join(series.names) + "\n")
        ym0 = series.start_year * 12 + (series.start_month - 1)
        for i, row in enumerate(series.values):
            ym = ym0 + i
            fh.write(f"{ym // 12:04d}-{ym % 12 + 1:02d}," + ",".join(repr(float(v)) for v in row) + "\n")


def sliding_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; the ends average whatever samples exist."""
    if window == 1:
        return x.copy()
    half = window // 2
    out = np.empty_like(x)
    N = x.shape[0]
    for i in range(N):
        lo = max(0, i - half)
        hi = min(N, i + half + 1)
        out[i] = x[lo:hi].mean(axis=0)
    return out


def monthly_anomalies(series: MonthlySeries, window: int = 3) -> Trajectory:
    """Standardized anomalies of a monthly series (the fixed pipeline above).

    A calendar month with (numerically) zero variance in some column makes
    the z-score undefined and raises; the caller sees which month and column.
    """
    if series.n_months < 24:
        raise TooShortError("need at least 24 months")
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    x = series.values.copy()
    N, ncol = x.shape
    t = np.arange(N, dtype=float)

    # (1) linear trend
    for c in range(ncol):
        coef = np.polyfit(t, x[:, c], 1)
        x[:, c] -= np.polyval(coef, t)

    # (2)-(3) per-calendar-month standardization
    months = series.month_index()
    for c in range(ncol):
        scale = max(1.0, float(np.std(x[:, c])))
        for mi in range(12):
            sel = months == mi
            if not np.any(sel):
                continue
            mu = x[sel, c].mean()
            x[sel, c] -= mu
            sd = float(np.sqrt(np.mean(x[sel, c] ** 2)))
            if sd <= 1e-12 * scale:
                raise ZeroMonthlyVarianceError(mi + 1, series.names[c])
            x[sel, c] /= sd

    # (4) smoothing
    x = sliding_average(x, window)
    return Trajectory(dt_out=1.0, values=x)
