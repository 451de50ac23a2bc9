"""Externally randomized sequential procedures.

A uniform variable U drawn *once, at the stopping time only*, and
independently of everything the stopping rule can see, sharpens a stopped
test: comparing evidence against U/alpha instead of 1/alpha rejects at an
almost-surely lower bar while keeping level alpha.

Three procedures:

  lift-then-randomize   p-value min(U / A(e*_tau), 1) from the adjusted
                        running maximum; level-alpha at any data-filtration
                        stopping time.
  randomized Ville test monitor the raw coarse-filtration evidence against
                        1/alpha while running, and at the stopping time fall
                        back to the randomized comparison of the *adjusted*
                        maximum; level-alpha in the data filtration.
  randomize-then-lift   the tempting wrong order: randomize the raw stopped
                        value U/e_tau and hope lifting is free.  Its type-I
                        error is bounded only by alpha*(1 + log(1/alpha)),
                        and coarse-filtration streams really do exceed alpha
                        (the violation experiment estimates the rate).

The u draw comes from its own seed stream so that independence from the
data and tie-break draws is structural, not incidental.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .adjust import AdjusterSpec, adjuster_log_eval_extended
from .pipeline import build_pipeline
from .sim import (DEFAULT_HORIZON, STREAM_CONF, STREAM_DATA, STREAM_STOP,
                  GeneratorSpec, StopRule, _chunks, _linear, _parallel,
                  parse_generator, parse_rule, run_rng)

__all__ = [
    "RandomizedDecision",
    "ltr_pvalue",
    "randomized_ville_run",
    "randomized_ville_type1",
    "rtl_violation_experiment",
    "RtlReport",
    "rtl_bound",
]

UDraw = Callable[[np.random.Generator], float]


def _uniform(rng: np.random.Generator) -> float:
    return float(rng.random())


def ltr_pvalue(lifted_value_at_stop: float, u: float) -> float:
    """min(u / A(e*_tau), 1): the randomized p-value of a lifted e-value."""
    if not (0.0 <= u <= 1.0):
        raise ValueError("u must lie in [0, 1]")
    if lifted_value_at_stop < 0.0:
        raise ValueError("evidence must be nonnegative")
    if lifted_value_at_stop == 0.0:
        return 1.0
    return min(u / lifted_value_at_stop, 1.0)


@dataclass
class RandomizedDecision:
    stopped_at: int
    via_threshold: bool       # rejected by e_t >= 1/alpha before the rule fired
    u: float | None           # drawn only when the randomized comparison ran
    final_evidence: float     # e_t at threshold crossing, else A(e*_tau)
    reject: bool
    truncated: bool = False


def randomized_ville_run(stream, adjuster: AdjusterSpec, rule: StopRule,
                         alpha: float, data_source, stop_rng: np.random.Generator,
                         *, horizon: int = DEFAULT_HORIZON,
                         monitor_threshold: bool = True,
                         u_draw: UDraw = _uniform) -> RandomizedDecision:
    """One run of the randomized sequential test on an already-reset stream.

    With monitor_threshold (the lifted randomized Ville procedure), the raw
    evidence is monitored against 1/alpha while running; otherwise only the
    stopped comparison runs (the plain lift-then-randomize test).  At the
    stopping rule's firing time, u is drawn and the run rejects when
    A(e*_tau) >= u/alpha.  A run that exhausts the horizon is decided by the
    same randomized comparison and flagged.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if adjuster.is_spine:
        raise ValueError("spine adjusters do not lift")
    log_thresh = -math.log(alpha)
    rule.reset()
    peak = -math.inf
    t = 0
    truncated = True
    while t < horizon:
        t += 1
        x = data_source.next()
        le = stream.step_log(x)
        if le > peak:
            peak = le
        if monitor_threshold and le >= log_thresh:
            return RandomizedDecision(t, True, None, _linear(le), True)
        if rule.fired(t, x, le):
            truncated = False
            break
    u = u_draw(stop_rng)
    log_adj = adjuster_log_eval_extended(adjuster, peak)
    reject = log_adj >= math.log(u) - math.log(alpha) if u > 0.0 else (log_adj == math.inf)
    return RandomizedDecision(t, False, u, _linear(log_adj), reject, truncated)


def _ville_chunk(args):
    pipeline_s, adj_s, gen_s, rule_s, alpha, seed, horizon, monitor, lo, hi = args
    from .adjust import parse_adjuster
    stream = build_pipeline(pipeline_s)
    adjuster = parse_adjuster(adj_s)
    gen = parse_generator(gen_s)
    rule = parse_rule(rule_s)
    out = []
    for r in range(lo, hi):
        source = gen.source(run_rng(seed, STREAM_DATA, r))
        stream.reset(run_rng(seed, STREAM_CONF, r) if stream.needs_rng else None)
        dec = randomized_ville_run(stream, adjuster, rule, alpha, source,
                                   run_rng(seed, STREAM_STOP, r), horizon=horizon,
                                   monitor_threshold=monitor)
        out.append((dec.reject, dec.via_threshold, dec.truncated))
    return out


@dataclass
class VilleReport:
    runs: int
    rejection_rate: float
    se: float
    via_threshold: int
    truncated: int

    def to_dict(self) -> dict:
        return {"runs": self.runs, "rejection_rate": self.rejection_rate, "se": self.se,
                "via_threshold": self.via_threshold, "truncated": self.truncated}


def randomized_ville_type1(pipeline: str, adjuster: str, generator: GeneratorSpec | str,
                           rule: StopRule | str, alpha: float, runs: int, seed: int,
                           *, horizon: int = DEFAULT_HORIZON, workers: int = 1,
                           monitor_threshold: bool = True) -> VilleReport:
    """Monte Carlo rejection rate of the randomized sequential test.
    monitor_threshold=False gives the plain lift-then-randomize test."""
    gen_s = generator if isinstance(generator, str) else generator.spec_string()
    rule_s = rule if isinstance(rule, str) else rule.spec_string()
    base = (pipeline, adjuster, gen_s, rule_s, alpha, seed, horizon, monitor_threshold)
    if workers <= 1:
        rows = _ville_chunk(base + (0, runs))
    else:
        rows = _parallel(_ville_chunk, [base + c for c in _chunks(runs, workers)])
    rate = sum(1 for rej, _, _ in rows if rej) / runs
    se = math.sqrt(rate * (1.0 - rate) / runs)
    return VilleReport(runs, rate, se,
                       sum(1 for _, v, _ in rows if v),
                       sum(1 for *_, tr in rows if tr))


def rtl_bound(alpha: float) -> float:
    """alpha * (1 + log(1/alpha)): the type-I ceiling of randomize-then-lift."""
    return alpha * (1.0 + math.log(1.0 / alpha))


def _rtl_chunk(args):
    pipeline_s, gen_s, rule_s, alpha, seed, horizon, lo, hi = args
    stream = build_pipeline(pipeline_s)
    gen = parse_generator(gen_s)
    rule = parse_rule(rule_s)
    log_alpha = math.log(alpha)
    out = []
    for r in range(lo, hi):
        source = gen.source(run_rng(seed, STREAM_DATA, r))
        stream.reset(run_rng(seed, STREAM_CONF, r) if stream.needs_rng else None)
        rule.reset()
        t = 0
        le = 0.0
        truncated = True
        while t < horizon:
            t += 1
            x = source.next()
            le = stream.step_log(x)
            if rule.fired(t, x, le):
                truncated = False
                break
        u = run_rng(seed, STREAM_STOP, r).random()
        out.append((le >= math.log(u) - log_alpha, truncated))
    return out


@dataclass
class RtlReport:
    runs: int
    phat: float
    se: float
    bound: float
    truncated: int

    def to_dict(self) -> dict:
        return {"runs": self.runs, "phat": self.phat, "se": self.se,
                "bound": self.bound, "truncated": self.truncated}


def rtl_violation_experiment(pipeline: str, generator: GeneratorSpec | str,
                             rule: StopRule | str, alpha: float, runs: int, seed: int,
                             *, horizon: int = DEFAULT_HORIZON, workers: int = 1) -> RtlReport:
    """Estimate P(e_tau >= U/alpha) for the *raw* stopped process, alongside
    the alpha*(1+log(1/alpha)) ceiling.  For a coarse-filtration stream at a
    data-dependent rule the estimate exceeds alpha: randomize-then-lift is
    not anytime-valid."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    gen_s = generator if isinstance(generator, str) else generator.spec_string()
    rule_s = rule if isinstance(rule, str) else rule.spec_string()
    base = (pipeline, gen_s, rule_s, alpha, seed, horizon)
    if workers <= 1:
        rows = _rtl_chunk(base + (0, runs))
    else:
        rows = _parallel(_rtl_chunk, [base + c for c in _chunks(runs, workers)])
    phat = sum(1 for rej, _ in rows if rej) / runs
    se = math.sqrt(phat * (1.0 - phat) / runs)
    return RtlReport(runs, phat, se, rtl_bound(alpha), sum(1 for _, tr in rows if tr))
