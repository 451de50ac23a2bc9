"""Data generators, stopping rules, and the Monte Carlo engine.

Randomness discipline: every run r of an experiment with master seed S
derives its generators from SeedSequence(S, spawn_key=(stream_id, r)).
Distinct stream ids keep the data draws, the conformal tie-break uniforms,
and the stopping-time randomization variable structurally independent, and
make every run reproducible in isolation - which is also what lets worker
counts vary without changing any result: runs are computed independently
and reduced in run-index order with exact summation.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .pipeline import build_pipeline

__all__ = [
    "STREAM_DATA", "STREAM_CONF", "STREAM_STOP",
    "run_rng",
    "IidBernoulli", "Markov2", "PiecewiseBernoulli", "PeriodicSwitch", "GaussianIid",
    "parse_generator", "generate", "family_generator",
    "ConsecutiveRun", "FixedTime", "CountThreshold", "EvidenceThreshold", "GaussWindow",
    "parse_rule",
    "McReport", "PowerRow", "PowerReport", "TrajectoryReport",
    "stopped_mean", "power_study", "mean_trajectory",
    "DEFAULT_HORIZON",
]

STREAM_DATA = 0
STREAM_CONF = 1
STREAM_STOP = 2

DEFAULT_HORIZON = 1_000_000


def run_rng(seed: int, stream_id: int, run_index: int) -> np.random.Generator:
    """Counter-derived generator for one (stream, run) cell of an experiment."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream_id, run_index)))


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

class _Uniforms:
    __slots__ = ("_rng", "_buf", "_i")

    def __init__(self, rng: np.random.Generator, block: int = 256):
        self._rng = rng
        self._buf = rng.random(block)
        self._i = 0

    def next(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self._rng.random(len(self._buf))
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


def _check_prob(p: float, name: str) -> float:
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"{name} must be a probability in [0, 1], got {p}")
    return float(p)


@dataclass(frozen=True)
class IidBernoulli:
    p: float

    def __post_init__(self):
        _check_prob(self.p, "p")

    def source(self, rng: np.random.Generator) -> "_BinarySource":
        return _BinarySource(rng, lambda t, prev: self.p)

    def spec_string(self) -> str:
        return f"ber:{self.p:g}"


@dataclass(frozen=True)
class Markov2:
    """First-order binary Markov chain; initial state 0 or 1 equiprobably."""

    p01: float
    p11: float

    def __post_init__(self):
        _check_prob(self.p01, "p01")
        _check_prob(self.p11, "p11")

    def source(self, rng):
        def prob(t, prev):
            if prev is None:
                return 0.5  # uniform initial state
            return self.p11 if prev == 1 else self.p01
        return _BinarySource(rng, prob)

    def spec_string(self) -> str:
        return f"markov:p01={self.p01:g},p11={self.p11:g}"


@dataclass(frozen=True)
class PiecewiseBernoulli:
    """Blocks of IID Bernoulli; the last block's rate persists past the end."""

    schedule: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.schedule:
            raise ValueError("empty schedule")
        for length, p in self.schedule:
            if length <= 0:
                raise ValueError(f"schedule lengths must be positive, got {length}")
            _check_prob(p, "schedule rate")

    def rate_at(self, t: int) -> float:
        pos = t
        for length, p in self.schedule:
            if pos <= length:
                return p
            pos -= length
        return self.schedule[-1][1]

    def source(self, rng):
        return _BinarySource(rng, lambda t, prev: self.rate_at(t))

    def spec_string(self) -> str:
        blocks = ",".join(f"{n}x{p:g}" for n, p in self.schedule)
        return f"piecewise:{blocks}"


@dataclass(frozen=True)
class PeriodicSwitch:
    """Alternates IID Ber(mu) and Ber(mu+delta) every `period` steps."""

    mu: float
    delta: float
    period: int

    def __post_init__(self):
        _check_prob(self.mu, "mu")
        _check_prob(self.mu + self.delta, "mu+delta")
        if self.period <= 0:
            raise ValueError("period must be positive")

    def rate_at(self, t: int) -> float:
        block = (t - 1) // self.period
        return self.mu if block % 2 == 0 else self.mu + self.delta

    def source(self, rng):
        return _BinarySource(rng, lambda t, prev: self.rate_at(t))

    def spec_string(self) -> str:
        return f"switch:mu={self.mu:g},delta={self.delta:g},period={self.period}"


@dataclass(frozen=True)
class GaussianIid:
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")

    def source(self, rng):
        return _GaussSource(rng, self.mu, self.sigma)

    def spec_string(self) -> str:
        return f"gauss:mu={self.mu:g},sigma={self.sigma:g}"


class _BinarySource:
    __slots__ = ("_u", "_prob", "t", "prev")

    def __init__(self, rng, prob):
        self._u = _Uniforms(rng)
        self._prob = prob
        self.t = 0
        self.prev: int | None = None

    def next(self) -> int:
        self.t += 1
        x = 1 if self._u.next() < self._prob(self.t, self.prev) else 0
        self.prev = x
        return x


class _GaussSource:
    __slots__ = ("_rng", "_buf", "_i", "mu", "sigma")

    def __init__(self, rng, mu, sigma):
        self._rng = rng
        self._buf = rng.standard_normal(256)
        self._i = 0
        self.mu = mu
        self.sigma = sigma

    def next(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self._rng.standard_normal(len(self._buf))
            self._i = 0
        z = self._buf[self._i]
        self._i += 1
        return self.mu + self.sigma * z


GeneratorSpec = IidBernoulli | Markov2 | PiecewiseBernoulli | PeriodicSwitch | GaussianIid


def _opts(arg: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for part in arg.split(","):
        part = part.strip()
        if not part:
            continue
        k, eq, v = part.partition("=")
        out[k.strip()] = v.strip() if eq else ""
    return out


def parse_generator(text: str) -> GeneratorSpec:
    """ber:0.3 | markov:p01=0.5,p11=0.4 | piecewise:500x0.5,100x0.2
    | switch:mu=0.3,delta=0.2,period=100 | gauss:mu=0,sigma=1"""
    name, _, arg = text.strip().partition(":")
    name = name.strip().lower()
    if name == "ber":
        return IidBernoulli(float(arg))
    if name == "markov":
        o = _opts(arg)
        return Markov2(float(o["p01"]), float(o["p11"]))
    if name == "piecewise":
        blocks = []
        for part in arg.split(","):
            n, _, p = part.strip().partition("x")
            blocks.append((int(n), float(p)))
        return PiecewiseBernoulli(tuple(blocks))
    if name == "switch":
        o = _opts(arg)
        return PeriodicSwitch(float(o["mu"]), float(o["delta"]), int(o.get("period", "100")))
    if name == "gauss":
        o = _opts(arg)
        return GaussianIid(float(o.get("mu", "0")), float(o.get("sigma", "1")))
    raise ValueError(f"unknown generator spec {text!r}")


def generate(spec: GeneratorSpec | str, length: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one sequence of the given length; deterministic given the rng state."""
    if isinstance(spec, str):
        spec = parse_generator(spec)
    if length < 1:
        raise ValueError("length must be >= 1")
    src = spec.source(rng)
    dtype = float if isinstance(spec, GaussianIid) else int
    return np.array([src.next() for _ in range(length)], dtype=dtype)


def family_generator(kind: str, mu: float, delta: float, period: int = 100) -> GeneratorSpec:
    """Alternative families for power studies, indexed by a deviation delta.

    "switch": IID Ber(mu) alternating with Ber(mu+delta) every `period` steps.
    "markov": first-order chain with transition rates (mu, mu+delta).
    Either family is IID exactly when delta = 0.
    """
    if kind == "switch":
        return PeriodicSwitch(mu, delta, period)
    if kind == "markov":
        return Markov2(mu, mu + delta)
    raise ValueError(f"unknown power family {kind!r}")


# ---------------------------------------------------------------------------
# Stopping rules (functions of the observed data prefix, or of the monitored
# evidence for threshold tests)
# ---------------------------------------------------------------------------

class ConsecutiveRun:
    """Fires at the first t >= k whose last k observations all fall in targets."""

    def __init__(self, k: int, targets: tuple[int, ...] = (0,)):
        if k < 1:
            raise ValueError("k must be >= 1")
        if not targets or not set(targets) <= {0, 1}:
            raise ValueError("targets must be a nonempty subset of {0, 1}")
        self.k = k
        self.targets = tuple(sorted(set(targets)))
        self._run = 0

    def reset(self):
        self._run = 0

    def fired(self, t, x, log_e) -> bool:
        self._run = self._run + 1 if x in self.targets else 0
        return self._run >= self.k

    def spec_string(self) -> str:
        return f"run:k={self.k},target={'|'.join(map(str, self.targets))}"


class FixedTime:
    def __init__(self, t: int):
        if t < 1:
            raise ValueError("fixed time must be >= 1")
        self.t = t

    def reset(self):
        pass

    def fired(self, t, x, log_e) -> bool:
        return t >= self.t

    def spec_string(self) -> str:
        return f"fixed:t={self.t}"


class CountThreshold:
    """Fires once the cumulative count of the target symbol reaches m."""

    def __init__(self, m: int, target: int = 1):
        if m < 1:
            raise ValueError("m must be >= 1")
        self.m = m
        self.target = target
        self._count = 0

    def reset(self):
        self._count = 0

    def fired(self, t, x, log_e) -> bool:
        if x == self.target:
            self._count += 1
        return self._count >= self.m

    def spec_string(self) -> str:
        return f"count:m={self.m},target={self.target}"


class EvidenceThreshold:
    """Fires when the monitored evidence reaches 1/alpha."""

    def __init__(self, alpha: float):
        if not (0.0 < alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        self.alpha = alpha
        self._log_thresh = -math.log(alpha)

    def reset(self):
        pass

    def fired(self, t, x, log_e) -> bool:
        return log_e >= self._log_thresh

    def spec_string(self) -> str:
        return f"evidence:alpha={self.alpha:g}"


class GaussWindow:
    """Stop at t=1 unless |x_1| lies in [a, b]; then stop at t=2."""

    def __init__(self, a: float, b: float):
        if not (0.0 < a < b):
            raise ValueError("need 0 < a < b")
        self.a = a
        self.b = b
        self._second = False

    def reset(self):
        self._second = False

    def fired(self, t, x, log_e) -> bool:
        if t == 1:
            self._second = self.a <= abs(x) <= self.b
            return not self._second
        return True

    def spec_string(self) -> str:
        return f"window:a={self.a:g},b={self.b:g}"


StopRule = ConsecutiveRun | FixedTime | CountThreshold | EvidenceThreshold | GaussWindow


def parse_rule(text: str) -> StopRule:
    """run:k=5,target=0 | fixed:t=100 | count:m=15,target=1
    | evidence:alpha=0.1 | window:a=0.44,b=1.7"""
    name, _, arg = text.strip().partition(":")
    name = name.strip().lower()
    if name == "run":
        o = _opts(arg)
        targets = tuple(int(s) for s in o.get("target", "0").split("|"))
        return ConsecutiveRun(int(o["k"]), targets)
    if name == "fixed":
        o = _opts(arg)
        return FixedTime(int(o["t"]) if "t" in o else int(arg))
    if name == "count":
        o = _opts(arg)
        return CountThreshold(int(o["m"]), int(o.get("target", "1")))
    if name == "evidence":
        o = _opts(arg)
        return EvidenceThreshold(float(o["alpha"]))
    if name == "window":
        o = _opts(arg)
        return GaussWindow(float(o["a"]), float(o["b"]))
    raise ValueError(f"unknown stop rule spec {text!r}")


# ---------------------------------------------------------------------------
# Monte Carlo engine
# ---------------------------------------------------------------------------

def _linear(log_e: float) -> float:
    if log_e > 709.0:
        return math.inf
    if log_e == -math.inf:
        return 0.0
    return math.exp(log_e)


def _mean_se(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2 or not math.isfinite(mean):
        return mean, math.nan if not math.isfinite(mean) else 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def _chunks(runs: int, workers: int) -> list[tuple[int, int]]:
    size, extra = divmod(runs, workers)
    bounds = []
    lo = 0
    for i in range(workers):
        hi = lo + size + (1 if i < extra else 0)
        if hi > lo:
            bounds.append((lo, hi))
        lo = hi
    return bounds


def _parallel(fn, payloads: list) -> list:
    with ProcessPoolExecutor(max_workers=len(payloads)) as ex:
        return [r for part in ex.map(fn, payloads) for r in part]


def _stopped_chunk(args) -> list[tuple[float, int, bool]]:
    pipeline_s, gen_s, rule_s, seed, lo, hi, horizon = args
    pipeline = build_pipeline(pipeline_s)
    gen = parse_generator(gen_s)
    rule = parse_rule(rule_s)
    out = []
    for r in range(lo, hi):
        source = gen.source(run_rng(seed, STREAM_DATA, r))
        pipeline.reset(run_rng(seed, STREAM_CONF, r) if pipeline.needs_rng else None)
        rule.reset()
        t = 0
        truncated = True
        le = 0.0
        while t < horizon:
            t += 1
            x = source.next()
            le = pipeline.step_log(x)
            if rule.fired(t, x, le):
                truncated = False
                break
        out.append((_linear(le), t, truncated))
    return out


@dataclass
class McReport:
    """Monte Carlo summary of a stopped-evidence experiment."""

    runs: int
    mean: float
    se: float
    truncated: int
    mean_stop_time: float
    samples: list[float] | None = None

    def to_dict(self) -> dict:
        d = {"runs": self.runs, "mean": self.mean, "se": self.se,
             "truncated": self.truncated, "mean_stop_time": self.mean_stop_time}
        if self.samples is not None:
            d["samples"] = self.samples
        return d


def stopped_mean(pipeline: str, generator: GeneratorSpec | str, rule: StopRule | str,
                 runs: int, seed: int, *, horizon: int = DEFAULT_HORIZON,
                 workers: int = 1, keep_samples: bool = False) -> McReport:
    """Stream each run into the pipeline until the rule fires; aggregate the
    stopped values.  Runs hitting the horizon contribute their final value
    and are counted in `truncated`."""
    gen_s = generator if isinstance(generator, str) else generator.spec_string()
    rule_s = rule if isinstance(rule, str) else rule.spec_string()
    if workers <= 1:
        rows = _stopped_chunk((pipeline, gen_s, rule_s, seed, 0, runs, horizon))
    else:
        payloads = [(pipeline, gen_s, rule_s, seed, lo, hi, horizon)
                    for lo, hi in _chunks(runs, workers)]
        rows = _parallel(_stopped_chunk, payloads)
    values = [v for v, _, _ in rows]
    mean, se = _mean_se(values)
    taus = math.fsum(t for _, t, _ in rows) / runs
    return McReport(runs, mean, se, sum(1 for _, _, tr in rows if tr), taus,
                    values if keep_samples else None)


def _power_chunk(args) -> list[tuple[int, list[float]]]:
    pipeline_s, gen_s, alpha, T, checkpoints, seed, lo, hi = args
    pipeline = build_pipeline(pipeline_s)
    gen = parse_generator(gen_s)
    log_thresh = -math.log(alpha)
    out = []
    for r in range(lo, hi):
        source = gen.source(run_rng(seed, STREAM_DATA, r))
        pipeline.reset(run_rng(seed, STREAM_CONF, r) if pipeline.needs_rng else None)
        tau = T + 1
        logs = []
        ci = 0
        for t in range(1, T + 1):
            le = pipeline.step_log(source.next())
            if tau > T and le >= log_thresh:
                tau = t
            if ci < len(checkpoints) and t == checkpoints[ci]:
                logs.append(le)
                ci += 1
        out.append((tau, logs))
    return out


@dataclass
class PowerRow:
    delta: float
    rejection_rate: float
    rate_se: float
    mean_rejection_time: float
    epower: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"delta": self.delta, "rejection_rate": self.rejection_rate,
                "rate_se": self.rate_se, "mean_rejection_time": self.mean_rejection_time,
                "epower": {str(k): v for k, v in self.epower.items()}}


@dataclass
class PowerReport:
    pipeline: str
    family: str
    alpha: float
    horizon: int
    runs: int
    rows: list[PowerRow]

    def to_dict(self) -> dict:
        return {"pipeline": self.pipeline, "family": self.family, "alpha": self.alpha,
                "horizon": self.horizon, "runs": self.runs,
                "rows": [r.to_dict() for r in self.rows]}


def power_study(pipeline: str, family: str, mu: float, deltas: list[float],
                alpha: float, T: int, runs: int, seed: int, *,
                period: int = 100, checkpoints: tuple[int, ...] = (),
                workers: int = 1) -> PowerReport:
    """Rejection rate and time of the level-alpha test e >= 1/alpha
    against the family's alternatives; rejection time is T+1 when the run
    never rejects.  Optional e-power curve E[log e_t] at checkpoints."""
    checkpoints = tuple(sorted(checkpoints))
    rows = []
    for delta in deltas:
        gen = family_generator(family, mu, delta, period)
        args_base = (pipeline, gen.spec_string(), alpha, T, checkpoints, seed)
        if workers <= 1:
            recs = _power_chunk(args_base + (0, runs))
        else:
            payloads = [args_base + (lo, hi) for lo, hi in _chunks(runs, workers)]
            recs = _parallel(_power_chunk, payloads)
        taus = [tau for tau, _ in recs]
        rate = sum(1 for tau in taus if tau <= T) / runs
        rate_se = math.sqrt(rate * (1.0 - rate) / runs)
        epower = {}
        for i, cp in enumerate(checkpoints):
            epower[cp] = math.fsum(logs[i] for _, logs in recs) / runs
        rows.append(PowerRow(delta, rate, rate_se, math.fsum(taus) / runs, epower))
    return PowerReport(pipeline, family, alpha, T, runs, rows)


def _trajectory_chunk(args) -> list[list[float]]:
    pipeline_s, gen_s, checkpoints, seed, lo, hi, statistic = args
    pipeline = build_pipeline(pipeline_s)
    gen = parse_generator(gen_s)
    peak = statistic == "peak"
    out = []
    for r in range(lo, hi):
        source = gen.source(run_rng(seed, STREAM_DATA, r))
        pipeline.reset(run_rng(seed, STREAM_CONF, r) if pipeline.needs_rng else None)
        logs = []
        ci = 0
        for t in range(1, checkpoints[-1] + 1):
            le = pipeline.step_log(source.next())
            if ci < len(checkpoints) and t == checkpoints[ci]:
                logs.append(pipeline.log_peak if peak else le)
                ci += 1
        out.append(logs)
    return out


@dataclass
class TrajectoryReport:
    pipeline: str
    generator: str
    runs: int
    statistic: str
    checkpoints: list[int]
    mean_e: list[float]
    mean_log_e: list[float]
    se_e: list[float]

    def to_dict(self) -> dict:
        return {"pipeline": self.pipeline, "generator": self.generator, "runs": self.runs,
                "statistic": self.statistic, "checkpoints": self.checkpoints,
                "mean_e": self.mean_e, "mean_log_e": self.mean_log_e, "se_e": self.se_e}


def mean_trajectory(pipeline: str, generator: GeneratorSpec | str, T: int,
                    runs: int, seed: int, *, checkpoints: tuple[int, ...] = (),
                    statistic: str = "current", workers: int = 1) -> TrajectoryReport:
    """Monte Carlo mean of the evidence (linear and log) at checkpoints.
    statistic="peak" averages the running maximum instead of the value."""
    if statistic not in ("current", "peak"):
        raise ValueError("statistic must be 'current' or 'peak'")
    gen_s = generator if isinstance(generator, str) else generator.spec_string()
    if not checkpoints:
        checkpoints = tuple(sorted({max(1, (i + 1) * T // 20) for i in range(20)}))
    checkpoints = tuple(sorted(checkpoints))
    if checkpoints[-1] > T:
        raise ValueError("checkpoints must not exceed the horizon")
    args_base = (pipeline, gen_s, checkpoints, seed)
    if workers <= 1:
        recs = _trajectory_chunk(args_base + (0, runs, statistic))
    else:
        payloads = [args_base + (lo, hi, statistic) for lo, hi in _chunks(runs, workers)]
        recs = _parallel(_trajectory_chunk, payloads)
    mean_e = []
    mean_log = []
    se_e = []
    for i in range(len(checkpoints)):
        m, se = _mean_se([_linear(logs[i]) for logs in recs])
        mean_e.append(m)
        se_e.append(se)
        mean_log.append(math.fsum(logs[i] for logs in recs) / runs)
    return TrajectoryReport(pipeline, gen_s, runs, statistic, list(checkpoints),
                            mean_e, mean_log, se_e)
