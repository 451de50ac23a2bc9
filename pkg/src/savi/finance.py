"""High-volatility-day randomness pipeline over daily closing prices.

From a CSV of (date, close) rows: log-returns R_t = log(Y_t / Y_{t-1}),
volatility V_t = |R_t|, and the binary high-volatility indicator
X_t = 1{V_t >= c}.  The threshold c is an order statistic of the
volatilities in a calibration window (the k-th smallest with k = ceil(q n),
so about a (1-q) fraction of calibration days exceed it).

The indicator sequence then feeds three evidence columns per day: the
universal-inference e-process, the mix-adjusted running maximum of a simple
jumper conformal martingale, and their 50/50 combination, which is the
anytime-valid monitor of whether high-volatility days occur at random.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from datetime import date

import numpy as np

from .adjust import AdjusterSpec
from .evidence import ConformalMartingale, UiExchStream
from .lift import CombinedStream, LiftedStream

__all__ = [
    "PriceSeries",
    "VolSeries",
    "FinanceTable",
    "ingest_csv",
    "to_volatility",
    "calibrate_threshold",
    "run_volatility_pipeline",
]


@dataclass
class PriceSeries:
    dates: list[date]
    closes: list[float]

    def __len__(self) -> int:
        return len(self.dates)


@dataclass
class VolSeries:
    """Per-day return data; entry t describes the day pair (t-1, t)."""

    dates: list[date]
    log_returns: list[float]

    @property
    def vols(self) -> list[float]:
        return [abs(r) for r in self.log_returns]

    def window(self, start: date, end: date) -> "VolSeries":
        idx = [i for i, d in enumerate(self.dates) if start <= d <= end]
        return VolSeries([self.dates[i] for i in idx], [self.log_returns[i] for i in idx])

    def after(self, cutoff: date) -> "VolSeries":
        idx = [i for i, d in enumerate(self.dates) if d > cutoff]
        return VolSeries([self.dates[i] for i in idx], [self.log_returns[i] for i in idx])

    def indicators(self, c: float) -> list[int]:
        return [1 if v >= c else 0 for v in self.vols]

    def __len__(self) -> int:
        return len(self.dates)


def ingest_csv(path, date_column: str = "date", close_column: str = "close") -> PriceSeries:
    """Read and validate (date, close) rows; UTF-8 CSV with a header.

    Dates must be ISO days, closes positive numbers; duplicate dates and
    non-positive closes are hard errors naming the row.  Unsorted input is
    sorted with a warning.  Calendar gaps are kept as-is.
    """
    rows: list[tuple[date, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or date_column not in reader.fieldnames \
                or close_column not in reader.fieldnames:
            raise ValueError(
                f"{path}: need columns {date_column!r} and {close_column!r}, "
                f"found {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                d = date.fromisoformat(row[date_column].strip())
            except (ValueError, AttributeError) as exc:
                raise ValueError(f"{path} row {lineno}: bad date {row[date_column]!r}: {exc}")
            try:
                close = float(row[close_column])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path} row {lineno}: bad close {row[close_column]!r}: {exc}")
            if not math.isfinite(close) or close <= 0.0:
                raise ValueError(f"{path} row {lineno}: close must be positive, got {close}")
            rows.append((d, close))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    seen: dict[date, int] = {}
    for lineno, (d, _) in enumerate(rows, start=2):
        if d in seen:
            raise ValueError(f"{path} row {lineno}: duplicate date {d} (first at row {seen[d]})")
        seen[d] = lineno
    if any(rows[i][0] >= rows[i + 1][0] for i in range(len(rows) - 1)):
        warnings.warn(f"{path}: rows were not in date order; sorting")
        rows.sort(key=lambda r: r[0])
    return PriceSeries([d for d, _ in rows], [c for _, c in rows])


def to_volatility(prices: PriceSeries) -> VolSeries:
    if len(prices) < 2:
        raise ValueError("need at least two price rows for a return")
    rets = [math.log(prices.closes[i] / prices.closes[i - 1]) for i in range(1, len(prices))]
    return VolSeries(prices.dates[1:], rets)


def calibrate_threshold(vols, q: float = 0.8) -> float:
    """The ceil(q*n)-th smallest volatility of the calibration window."""
    vols = sorted(vols)
    if not vols:
        raise ValueError("empty calibration window")
    if not (0.0 < q <= 1.0):
        raise ValueError("q must lie in (0, 1]")
    k = math.ceil(q * len(vols))
    return vols[k - 1]


@dataclass
class FinanceTable:
    dates: list[date]
    x: list[int]
    log_e_ui: list[float]
    log_e_conf_lifted: list[float]
    log_e_combined: list[float]

    COLUMNS = ("date", "x", "e_ui", "e_conf_lifted", "e_combined",
               "log_e_ui", "log_e_conf_lifted", "log_e_combined")

    @staticmethod
    def _lin(v: float) -> float:
        return math.exp(v) if v < 709.0 else math.inf

    def rows(self):
        for i in range(len(self.dates)):
            yield {
                "date": self.dates[i].isoformat(),
                "x": self.x[i],
                "e_ui": repr(self._lin(self.log_e_ui[i])),
                "e_conf_lifted": repr(self._lin(self.log_e_conf_lifted[i])),
                "e_combined": repr(self._lin(self.log_e_combined[i])),
                "log_e_ui": repr(self.log_e_ui[i]),
                "log_e_conf_lifted": repr(self.log_e_conf_lifted[i]),
                "log_e_combined": repr(self.log_e_combined[i]),
            }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            writer.writeheader()
            for row in self.rows():
                writer.writerow(row)


def run_volatility_pipeline(series: VolSeries, threshold: float,
                            rng: np.random.Generator, *,
                            adjuster: AdjusterSpec = AdjusterSpec("mix"),
                            jumper_eps: float = 0.01) -> FinanceTable:
    """Stream the high-volatility indicators through the three monitors.

    Per day: the UI e-process, the adjusted simple-jumper conformal
    martingale (equal weights, the given rebalance fraction), and their
    exact 50/50 arithmetic mean.  The rng drives the conformal tie-breaks;
    a fixed seed reproduces every column.
    """
    xs = series.indicators(threshold)
    ui = UiExchStream()
    lifted = LiftedStream(ConformalMartingale(jumper=True, eps=jumper_eps), adjuster)
    combined = CombinedStream([(0.5, ui), (0.5, lifted)])
    combined.reset(rng)
    log_ui, log_lift, log_comb = [], [], []
    for x in xs:
        log_comb.append(combined.step_log(x))
        log_ui.append(ui.log_current)
        log_lift.append(lifted.log_current)
    return FinanceTable(list(series.dates), xs, log_ui, log_lift, log_comb)
