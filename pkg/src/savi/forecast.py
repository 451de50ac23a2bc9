"""Comparing two h-step-ahead probability forecasters.

At each step t forecasters p and q announce probabilities for a binary
outcome realized h-1 steps later, scored by the Brier loss (f - y)^2.
Because intermediate outcomes are unseen at forecast time, evidence can
only be accumulated separately per time offset: records at steps
k, k+h, k+2h, ... form the offset-k stream, each a betting martingale on
the score differences

    d = brier(p, y) - brier(q, y)  in [-1, 1],
    wealth *= 1 + lam * d,   lam in [0, 1) predictable,

which is a nonnegative supermartingale whenever q is at least as good as p
on that offset (conditional mean of d <= 0), and grows when q outperforms.

The harness routes settled records to their offset streams and emits five
combined measures per step:

    e_bar    mean_k A(max e^[k])    adjusted mean; an e-process
    p_tilde  harmonic-mean merged p-value of the offsets; a p-process
    m_tilde  scaled mean; rejects identically to p_tilde but NOT an e-process
    e_tilde  C(p_tilde); an e-process (weaker than e_bar)
    m_bar    plain mean of raw wealth; valid only h-1 steps after stopping
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .adjust import AdjusterSpec, CalibratorSpec
from .evidence import EvidenceStream
from .lift import (adjusted_mean_log, calibrated_harmonic_log, harmonic_mean_p,
                   lagged_mean, scaled_mean)

__all__ = [
    "ForecastRecord",
    "offset_of",
    "OffsetBettingStream",
    "ForecastTable",
    "MEASURE_FLAGS",
    "compare_forecasters",
    "read_records_csv",
    "write_records_csv",
    "synthetic_drift_records",
    "brier",
]


def brier(forecast: float, outcome: int) -> float:
    return (forecast - outcome) ** 2


@dataclass(frozen=True)
class ForecastRecord:
    """Forecasts made at step t for the outcome realized at step t+h-1."""

    t: int
    p: float
    q: float
    y: int

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ValueError(f"forecasts must lie in [0,1] (record t={self.t})")
        if self.y not in (0, 1):
            raise ValueError(f"outcome must be binary (record t={self.t})")

    @property
    def score_diff(self) -> float:
        return brier(self.p, self.y) - brier(self.q, self.y)


def offset_of(t: int, h: int) -> int:
    """Offset k in 1..h owning step t."""
    return (t - 1) % h + 1


class OffsetBettingStream(EvidenceStream):
    """Betting martingale on the score differences of one offset."""

    f_valid = False  # valid only within its own offset sub-filtration

    def __init__(self, offset: int, h: int, lam: float = 0.5):
        super().__init__()
        if not (0.0 <= lam < 1.0):
            raise ValueError("lam must lie in [0, 1)")
        self.offset = offset
        self.h = h
        self.lam = lam

    def observe_record(self, record: ForecastRecord) -> float:
        if offset_of(record.t, self.h) != self.offset:
            raise ValueError(
                f"record at step {record.t} belongs to offset "
                f"{offset_of(record.t, self.h)}, not {self.offset}")
        return self.step_log(record.score_diff)

    def _update(self, d) -> float:
        d = float(d)
        if not (-1.0 <= d <= 1.0):
            raise ValueError("Brier score differences lie in [-1, 1]")
        return self.log_current + math.log1p(self.lam * d)


MEASURE_FLAGS = {
    "e_bar": {"e_process": True, "note": "mean of adjusted running maxima"},
    "p_tilde": {"e_process": False, "p_process": True,
                "note": "harmonic-mean merged p-value"},
    "m_tilde": {"e_process": False, "not_an_eprocess": True,
                "note": "scaled mean; test statistic only"},
    "e_tilde": {"e_process": True, "note": "calibrated harmonic-mean p"},
    "m_bar": {"e_process": False, "not_an_eprocess": True,
              "note": "raw mean; valid h-1 steps after stopping"},
}


@dataclass
class ForecastTable:
    h: int
    steps: list[int]
    e_bar: list[float]        # log domain
    p_tilde: list[float]
    m_tilde: list[float]
    e_tilde: list[float]      # log domain
    m_bar: list[float]

    COLUMNS = ("t", "e_bar", "p_tilde", "m_tilde", "e_tilde", "m_bar",
               "log_e_bar", "log_e_tilde")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            writer.writeheader()
            for i, t in enumerate(self.steps):
                writer.writerow({
                    "t": t,
                    "e_bar": repr(math.exp(self.e_bar[i]) if self.e_bar[i] < 709 else math.inf),
                    "p_tilde": repr(self.p_tilde[i]),
                    "m_tilde": repr(self.m_tilde[i]),
                    "e_tilde": repr(math.exp(self.e_tilde[i]) if self.e_tilde[i] < 709 else math.inf),
                    "m_bar": repr(self.m_bar[i]),
                    "log_e_bar": repr(self.e_bar[i]),
                    "log_e_tilde": repr(self.e_tilde[i]),
                })


def compare_forecasters(records: list[ForecastRecord], h: int, *,
                        adjuster: AdjusterSpec = AdjusterSpec("mix"),
                        calibrator: CalibratorSpec = CalibratorSpec("mix"),
                        lam: float = 0.5) -> ForecastTable:
    """Route each settled record to its offset stream and emit the five
    combined measures at every step from h to the last settlement."""
    if h < 1:
        raise ValueError("h must be >= 1")
    for i, rec in enumerate(records):
        if rec.t != i + 1:
            raise ValueError(f"records must arrive in step order; got t={rec.t} at index {i}")
    streams = {k: OffsetBettingStream(k, h, lam) for k in range(1, h + 1)}
    for s in streams.values():
        s.reset()
    table = ForecastTable(h, [], [], [], [], [], [])
    last = len(records) + h - 1
    for g in range(1, last + 1):
        i = g - h + 1  # record settling at global step g
        if 1 <= i <= len(records):
            rec = records[i - 1]
            streams[offset_of(rec.t, h)].observe_record(rec)
        if g < h:
            continue  # nothing settled yet
        peaks = [streams[k].log_peak for k in range(1, h + 1)]
        currents = [streams[k].log_current for k in range(1, h + 1)]
        table.steps.append(g)
        table.e_bar.append(adjusted_mean_log(peaks, adjuster))
        if h >= 2:
            p = harmonic_mean_p(peaks)
            table.p_tilde.append(p)
            table.m_tilde.append(scaled_mean(peaks))
            table.e_tilde.append(calibrated_harmonic_log(peaks, calibrator))
        else:
            table.p_tilde.append(math.nan)
            table.m_tilde.append(math.nan)
            table.e_tilde.append(math.nan)
        table.m_bar.append(lagged_mean(currents))
    return table


def read_records_csv(path) -> tuple[list[ForecastRecord], int | None]:
    """records CSV: columns t, p, q, y (optional h as a '# h=3' first line)."""
    h = None
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for token in first[1:].replace(",", " ").split():
                key, _, val = token.partition("=")
                if key.strip() == "h":
                    h = int(val)
        else:
            fh.seek(0)
        reader = csv.DictReader(fh)
        records = []
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(ForecastRecord(int(row["t"]), float(row["p"]),
                                              float(row["q"]), int(row["y"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path} row {lineno}: {exc}")
    return records, h


def write_records_csv(path, records: list[ForecastRecord], h: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# h={h}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "p", "q", "y"])
        for rec in records:
            writer.writerow([rec.t, repr(rec.p), repr(rec.q), rec.y])


def synthetic_drift_records(steps: int, h: int = 3, gap: float = 0.3,
                            seed: int = 0) -> list[ForecastRecord]:
    """Versioned synthetic scenario: the truth rate drifts linearly from 1/2
    to 1/2 + gap; forecaster p stays at the stale 1/2 while q tracks the
    truth, so q's Brier advantage grows from zero to gap^2."""
    if not (0.0 <= gap <= 0.5):
        raise ValueError("gap must lie in [0, 0.5]")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(9, 0)))
    u = rng.random(steps)
    records = []
    for t in range(1, steps + 1):
        theta = 0.5 + gap * (t - 1) / max(steps - 1, 1)
        records.append(ForecastRecord(t, 0.5, theta, int(u[t - 1] < theta)))
    return records
