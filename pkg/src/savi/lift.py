"""Lifting evidence across filtrations, and combining it.

A stream that is only anytime-valid in a coarse filtration (conformal
martingales, the scale-invariant Gaussian mixture, per-offset forecast
streams) cannot be averaged directly with a data-filtration stream: its
expectation bound fails at stopping rules that read information outside its
own filtration.  Applying an increasing admissible adjuster to the running
maximum repairs this: A(sup_{i<=t} e_i) is anytime-valid in any finer
filtration, at a logarithmic evidence cost.

p-processes need no repair: a [0,1]-valued process whose sub-alpha
probability bound holds at stopping times of its own filtration keeps that
bound at stopping times of any finer filtration.  ``p_lift`` is therefore
the identity on values and exists to mark the step in a pipeline.

The running maximum convention: the maximum is taken over the values the
inner process takes at observed steps t >= 1.  The adjusters' formulas are
extended monotonically below 1 for inner processes that have not yet
reached their starting level (see adjust.adjuster_log_eval_extended).

The forecast-comparison combiners at the bottom operate on K per-offset
streams: the adjusted mean (an e-process), the harmonic-mean p-value, the
rescaled mean test statistic, its calibrated e-process, and the plain
lagged mean (not an e-process; valid only h-1 steps after a stopping time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .adjust import (AdjusterSpec, CalibratorSpec, Evidence,
                     adjuster_log_eval_extended, calibrator_log_eval, spine_eval)
from .evidence import EvidenceStream

__all__ = [
    "LiftedStream",
    "SpineAdjustedStream",
    "CombinedStream",
    "PProcessView",
    "CalibratedStream",
    "e_lift",
    "p_lift",
    "combine",
    "calibrate_p_to_e",
    "adjusted_mean_log",
    "harmonic_mean_p",
    "scaled_mean",
    "calibrated_harmonic_log",
    "lagged_mean",
]


class LiftedStream(EvidenceStream):
    """A(running max of inner) - anytime-valid in any finer filtration."""

    f_valid = True

    def __init__(self, inner: EvidenceStream, adjuster: AdjusterSpec):
        if adjuster.is_spine:
            raise ValueError(
                "spine adjusters do not lift: the adjusted process stays "
                "invalid at data-filtration stopping times")
        super().__init__()
        self.inner = inner
        self.adjuster = adjuster
        self.needs_rng = inner.needs_rng
        self._inner_peak = -math.inf

    def reset(self, rng=None) -> None:
        super().reset(rng)
        self.inner.reset(rng)
        self._inner_peak = -math.inf

    def _update(self, x) -> float:
        le = self.inner.step_log(x)
        if le > self._inner_peak:
            self._inner_peak = le
        return adjuster_log_eval_extended(self.adjuster, self._inner_peak)


class SpineAdjustedStream(EvidenceStream):
    """Two-argument spine adjustment of (running max, current value).

    NOT a lifter: its mean at data-filtration stopping rules exceeds 1.
    Shipped only as the negative control.
    """

    f_valid = False

    def __init__(self, inner: EvidenceStream, kappa: float):
        super().__init__()
        if not (0.0 <= kappa <= 1.0):
            raise ValueError("spine kappa must lie in [0, 1]")
        self.inner = inner
        self.kappa = kappa
        self.needs_rng = inner.needs_rng

    def reset(self, rng=None) -> None:
        super().reset(rng)
        self.inner.reset(rng)

    def _update(self, x) -> float:
        self.inner.step_log(x)
        # spine domain needs the max >= 1; the inner floored peak provides it
        return spine_eval(self.kappa, Evidence(self.inner.log_peak),
                          Evidence(self.inner.log_current)).log_value


class CombinedStream(EvidenceStream):
    """Fixed-weight average of component streams.

    The result is an e-process in the data filtration only when every
    component is; construction trusts the caller (validity flags are
    carried, not enforced) because filtrations are semantics, not values.
    """

    def __init__(self, components: list[tuple[float, EvidenceStream]]):
        super().__init__()
        if not components:
            raise ValueError("combine needs at least one component")
        weights = [w for w, _ in components]
        if min(weights) < 0.0:
            raise ValueError("combination weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"combination weights must sum to 1, got {sum(weights)!r}")
        self.components = [(float(w), s) for w, s in components]
        self.f_valid = all(s.f_valid for _, s in self.components)
        self.needs_rng = any(s.needs_rng for _, s in self.components)
        self._logw = [math.log(w) if w > 0.0 else -math.inf for w, _ in self.components]

    def reset(self, rng=None) -> None:
        super().reset(rng)
        for _, s in self.components:
            s.reset(rng)

    def _update(self, x) -> float:
        best = -math.inf
        terms = []
        for (w, s), lw in zip(self.components, self._logw):
            le = s.step_log(x) + lw
            terms.append(le)
            if le > best:
                best = le
        if best == -math.inf:
            return -math.inf
        if best == math.inf:
            return math.inf
        return best + math.log(sum(math.exp(t - best) for t in terms))


@dataclass
class PProcessView:
    """[0, 1]-valued view of an evidence stream.

    mode "reciprocal": 1/e_t, clipped at 1.   mode "reciprocal-max": 1/e*_t,
    which is pointwise smaller (more powerful) since e*_t >= e_t.
    """

    source: EvidenceStream
    mode: str = "reciprocal-max"

    def __post_init__(self):
        if self.mode not in ("reciprocal", "reciprocal-max"):
            raise ValueError(f"unknown p-view mode {self.mode!r}")

    def log_p(self) -> float:
        if self.mode == "reciprocal":
            return min(-self.source.log_current, 0.0)
        return -self.source.log_peak  # peak >= 1, so already <= 0

    def p(self) -> float:
        return math.exp(self.log_p())


def p_lift(view: PProcessView) -> PProcessView:
    """Identity on values: a p-process in a coarse filtration is already a
    p-process in any finer one.  Marks the lifting step in pipelines."""
    return view


class CalibratedStream(EvidenceStream):
    """C(p_t) for a reciprocal p-view of the inner stream."""

    f_valid = True

    def __init__(self, inner: EvidenceStream, calibrator: CalibratorSpec,
                 mode: str = "reciprocal-max"):
        super().__init__()
        self.inner = inner
        self.calibrator = calibrator
        self.view = PProcessView(inner, mode)
        self.needs_rng = inner.needs_rng

    def reset(self, rng=None) -> None:
        super().reset(rng)
        self.inner.reset(rng)

    def _update(self, x) -> float:
        self.inner.step_log(x)
        return calibrator_log_eval(self.calibrator, self.view.log_p())


def e_lift(stream: EvidenceStream, adjuster: AdjusterSpec) -> LiftedStream:
    return LiftedStream(stream, adjuster)


def combine(components: list[tuple[float, EvidenceStream]]) -> CombinedStream:
    return CombinedStream(components)


def calibrate_p_to_e(view: PProcessView, calibrator: CalibratorSpec) -> CalibratedStream:
    return CalibratedStream(view.source, calibrator, view.mode)


# ---------------------------------------------------------------------------
# Forecast-comparison combiners over K per-offset streams
# ---------------------------------------------------------------------------

def adjusted_mean_log(log_peaks: list[float], adjuster: AdjusterSpec) -> float:
    """log of (1/K) sum_k A(e*_k): the adjust-then-combine e-process."""
    terms = [adjuster_log_eval_extended(adjuster, lp) for lp in log_peaks]
    best = max(terms)
    if best == -math.inf:
        return -math.inf
    if best == math.inf:
        return math.inf
    return best - math.log(len(terms)) + math.log(
        sum(math.exp(t - best) for t in terms))


def _log_mean_peak(log_peaks: list[float]) -> float:
    best = max(log_peaks)
    if best == math.inf:
        return math.inf
    return best - math.log(len(log_peaks)) + math.log(
        sum(math.exp(t - best) for t in log_peaks))


def harmonic_mean_p(log_peaks: list[float]) -> float:
    """Harmonic-mean merge of the reciprocal-max p-values, clipped to [0,1]:

        p = e log(K) / ((1/K) sum_k e*_k)

    Needs K >= 2 (the merge constant vanishes at K = 1).
    """
    k = len(log_peaks)
    if k < 2:
        raise ValueError("harmonic-mean p-merging needs at least 2 streams")
    log_p = 1.0 + math.log(math.log(k)) - _log_mean_peak(log_peaks)
    return math.exp(min(log_p, 0.0))


def scaled_mean(log_peaks: list[float]) -> float:
    """(e log K)^-1 (1/K) sum_k e*_k: the test statistic whose >= 1/alpha
    rejection is exactly the harmonic-mean p-value's <= alpha rejection.
    Not an e-process."""
    k = len(log_peaks)
    if k < 2:
        raise ValueError("scaled mean needs at least 2 streams")
    return math.exp(_log_mean_peak(log_peaks) - 1.0 - math.log(math.log(k)))


def calibrated_harmonic_log(log_peaks: list[float], calibrator: CalibratorSpec) -> float:
    """log C(harmonic-mean p): an e-process, but a suboptimal one (the
    harmonic merge already embeds a calibration, so this calibrates twice)."""
    p = harmonic_mean_p(log_peaks)
    return calibrator_log_eval(calibrator, math.log(p) if p > 0.0 else -math.inf)


def lagged_mean(log_currents: list[float]) -> float:
    """(1/K) sum_k e_k of the raw current values.  Not an e-process: its
    expectation bound holds only h-1 steps after a stopping time."""
    best = max(log_currents)
    if best == -math.inf:
        return 0.0
    if best > 700.0:
        return math.inf
    return sum(math.exp(t) for t in log_currents) / len(log_currents)
