"""Sequential evidence streams.

Every stream consumes one observation per step and emits the current
evidence value (log domain internally).  A stream also tracks the running
maximum of the values it has emitted, floored at the initial value 1, which
is what the reciprocal p-process views divide by.

Streams over binary data:

    UiExchStream        universal-inference e-process for the IID/exchangeable
                        null, powerful against first-order Markov alternatives;
                        valid at arbitrary data-filtration stopping times.
    ConformalMartingale test martingale over conformal p-values, either a
                        fixed bet or the "simple jumper" portfolio; valid only
                        in the coarser filtration generated by the p-values.
    BoundedMeanStream   betting martingale for a bounded mean.

Streams over real data:

    GaussianUiTTestStream   universal-inference t-test e-process (mean zero,
                            unknown variance), data-filtration valid.
    GaussianMaxInvStream    scale-invariant likelihood-ratio mixture, valid
                            only in the scale-invariant coarsening.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .adjust import Evidence

__all__ = [
    "EvidenceStream",
    "UiExchStream",
    "ConformalCounter",
    "conformal_pvalue",
    "ConformalMartingale",
    "BoundedMeanStream",
    "GaussianUiTTestStream",
    "GaussianMaxInvStream",
    "parse_stream",
]

_LGAMMA_HALF = math.lgamma(0.5)


class _UniformBuffer:
    """Blocked scalar draws from a numpy Generator (single draws are slow)."""

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


class EvidenceStream:
    """Base class: stateful sequential evidence.

    Subclasses implement ``_update(x) -> float`` returning the new log
    evidence.  ``f_valid`` declares whether the stream is anytime-valid in
    the data filtration (as opposed to a coarsening only); the combination
    layer relies on this flag.
    """

    f_valid: bool = False
    needs_rng: bool = False

    def __init__(self):
        self.t = 0
        self.log_current = 0.0
        self.log_peak = 0.0  # running max of emitted values, floored at e0 = 1

    def reset(self, rng: np.random.Generator | None = None) -> None:
        self.t = 0
        self.log_current = 0.0
        self.log_peak = 0.0

    def step_log(self, x) -> float:
        self.t += 1
        le = self._update(x)
        self.log_current = le
        if le > self.log_peak:
            self.log_peak = le
        return le

    def step(self, x) -> Evidence:
        return Evidence(self.step_log(x))

    def current(self) -> Evidence:
        return Evidence(self.log_current)

    def running_max(self) -> Evidence:
        return Evidence(self.log_peak)

    def _update(self, x) -> float:
        raise NotImplementedError


class UiExchStream(EvidenceStream):
    """Universal-inference e-process for binary exchangeability.

    Running value (log domain, via lgamma):

        num = G(n00+1/2) G(n10+1/2) G(n01+1/2) G(n11+1/2)
              / (2 G(1/2)^4 G(n00+n01+1) G(n10+n11+1))
        den = (n1/t)^n1 (n0/t)^n0        (0^0 = 1)

    where n_j counts symbol j and n_jk counts j->k transitions.  The
    numerator is a mixture over first-order Markov alternatives, the
    denominator the maximum IID Bernoulli likelihood.
    """

    f_valid = True

    def __init__(self):
        super().__init__()
        self.n0 = self.n1 = 0
        self.n00 = self.n01 = self.n10 = self.n11 = 0
        self.prev: int | None = None

    def reset(self, rng=None) -> None:
        super().reset(rng)
        self.n0 = self.n1 = 0
        self.n00 = self.n01 = self.n10 = self.n11 = 0
        self.prev = None

    def _update(self, x) -> float:
        x = int(x)
        if x == 0:
            self.n0 += 1
        else:
            self.n1 += 1
        if self.prev is not None:
            if self.prev == 0:
                if x == 0:
                    self.n00 += 1
                else:
                    self.n01 += 1
            else:
                if x == 0:
                    self.n10 += 1
                else:
                    self.n11 += 1
        self.prev = x
        return self.closed_form_log(self.n0, self.n1, self.n00, self.n01,
                                    self.n10, self.n11)

    @staticmethod
    def closed_form_log(n0: int, n1: int, n00: int, n01: int, n10: int, n11: int) -> float:
        t = n0 + n1
        num = (math.lgamma(n00 + 0.5) + math.lgamma(n10 + 0.5)
               + math.lgamma(n01 + 0.5) + math.lgamma(n11 + 0.5)
               - math.log(2.0) - 4.0 * _LGAMMA_HALF
               - math.lgamma(n00 + n01 + 1.0) - math.lgamma(n10 + n11 + 1.0))
        den = 0.0
        if n1 > 0:
            den += n1 * math.log(n1 / t)
        if n0 > 0:
            den += n0 * math.log(n0 / t)
        return num - den


class ConformalCounter:
    """Occurrence counts backing binary conformal p-values."""

    __slots__ = ("t", "n1")

    def __init__(self):
        self.t = 0
        self.n1 = 0

    def observe(self, x: int) -> None:
        self.t += 1
        self.n1 += x


def conformal_pvalue(counter: ConformalCounter, x: int, u: float) -> float:
    """Binary conformal p-value; counts include the current observation.

    s_t = u * f1(t)        when x = 1
        = f1(t) + u * f0(t) when x = 0

    with f_k(t) the empirical frequency of symbol k among the first t
    observations.  The tie-break variable u must be Uniform[0,1] and
    independent of the data for s_t to be IID uniform under the null.
    """
    counter.observe(int(x))
    f1 = counter.n1 / counter.t
    if x == 1:
        return u * f1
    f0 = (counter.t - counter.n1) / counter.t
    return f1 + u * f0


class ConformalMartingale(EvidenceStream):
    """Test martingale over conformal p-values.

    Fixed-bet mode multiplies wealth by 1 + lam*(s - 1/2) each round.  The
    simple jumper hedges over lam in {-1, 0, 1}: each round a fraction eps
    of the previous total is redistributed across the three accounts by
    weight before the bets settle, so the total stays a martingale.

    Only valid in the filtration generated by the p-values themselves, not
    at stopping rules that read the raw data.
    """

    f_valid = False
    needs_rng = True

    LAMBDAS = (-1.0, 0.0, 1.0)

    def __init__(self, lam: float | None = 1.0, *, jumper: bool = False,
                 eps: float = 0.01, weights: tuple[float, float, float] = (1/3, 1/3, 1/3)):
        super().__init__()
        self.jumper = jumper
        if jumper:
            if not (0.0 < eps < 1.0):
                raise ValueError("jumper eps must lie in (0, 1)")
            if abs(sum(weights) - 1.0) > 1e-12 or min(weights) < 0.0:
                raise ValueError("jumper weights must be nonnegative and sum to 1")
            self.eps = eps
            self.weights = tuple(float(w) for w in weights)
        else:
            if lam is None or abs(lam) > 2.0:
                raise ValueError("fixed bet needs lam in [-2, 2] to keep wealth nonnegative")
            self.lam = float(lam)
        self._counter = ConformalCounter()
        self._u = None
        self._alive = True
        # jumper state: normalized accounts m, log scale so total = exp(scale)
        self._m = list(self.weights) if jumper else None
        self._scale = 0.0

    def reset(self, rng=None) -> None:
        super().reset(rng)
        self._counter = ConformalCounter()
        if rng is None:
            raise ValueError("conformal streams need an injected rng for tie-breaking")
        self._u = _UniformBuffer(rng)
        self._alive = True
        if self.jumper:
            self._m = list(self.weights)
            self._scale = 0.0

    def _update(self, x) -> float:
        u = self._u.next()
        s = conformal_pvalue(self._counter, int(x), u)
        return self.wager_log(s)

    def wager_log(self, s: float) -> float:
        """Settle one round against the conformal p-value s (already drawn)."""
        if not self.jumper:
            if not self._alive:
                return -math.inf
            factor = 1.0 + self.lam * (s - 0.5)
            if factor <= 0.0:
                self._alive = False
                return -math.inf
            return self.log_current + math.log(factor)
        eps = self.eps
        m = self._m
        total = 0.0
        for k, lam in enumerate(self.LAMBDAS):
            mk = (1.0 - eps) * m[k] + eps * self.weights[k]
            mk *= 1.0 + lam * (s - 0.5)
            m[k] = mk
            total += mk
        self._scale += math.log(total)
        inv = 1.0 / total
        for k in range(3):
            m[k] *= inv
        return self._scale


class BoundedMeanStream(EvidenceStream):
    """Betting martingale for the null 'mean of [0,1] data equals mu'.

    Wealth multiplies by 1 + lam_t (x_t - mu), with the predictable bet
    lam_t in (0, 1/mu].  Strategies: a constant bet, or a decaying bet
    proportional to 1/sqrt(var_{t-1} * t * log(t+1)).
    """

    f_valid = True
    _LAM_CAP = 1e6  # cap for 1/mu when mu = 0

    def __init__(self, mu: float, lam: float | None = 1.0, *, decay: bool = False):
        super().__init__()
        if not (0.0 <= mu <= 1.0):
            raise ValueError("mu must lie in [0, 1]")
        self.mu = mu
        self.decay = decay
        lam_max = 1.0 / mu if mu > 0.0 else self._LAM_CAP
        if not decay:
            if lam is None or not (0.0 < lam <= lam_max):
                raise ValueError(f"constant bet needs lam in (0, {lam_max:g}]")
            self.lam = float(lam)
        self._s = 0.0
        self._ss = 0.0

    def reset(self, rng=None) -> None:
        super().reset(rng)
        self._s = 0.0
        self._ss = 0.0

    def _bet(self) -> float:
        if not self.decay:
            return self.lam
        n = self.t - 1  # points observed before the current one
        if n >= 2:
            mean = self._s / n
            var = max(self._ss / n - mean * mean, 1e-2)
        else:
            var = 0.25
        lam = 1.0 / math.sqrt(var * self.t * math.log(self.t + 1.0))
        lam_max = 1.0 / self.mu if self.mu > 0.0 else self._LAM_CAP
        return min(lam, lam_max)

    def _update(self, x) -> float:
        x = float(x)
        if not (0.0 <= x <= 1.0):
            raise ValueError("bounded-mean observations must lie in [0, 1]")
        lam = self._bet()
        factor = 1.0 + lam * (x - self.mu)
        self._s += x
        self._ss += x * x
        if factor <= 0.0:
            return -math.inf
        return self.log_current + math.log(factor)


class GaussianUiTTestStream(EvidenceStream):
    """Universal-inference t-test e-process: null mean 0, unknown variance.

    log e_t = (t/2) log(mean(x^2)) + t/2
              + sum_i [ -log sd_{i-1} - ((x_i - mean_{i-1}) / sd_{i-1})^2 / 2 ]

    with mean_{i-1}, sd_{i-1} the empirical moments of the first i-1 points
    (1/n variance convention).  Factors with sd_{i-1} = 0 contribute 1, and
    the evidence is 1 outright until the first well-defined factor exists.
    """

    f_valid = True

    def __init__(self):
        super().__init__()
        self._s = 0.0
        self._ss = 0.0
        self._log_prod = 0.0
        self._started = False

    def reset(self, rng=None) -> None:
        super().reset(rng)
        self._s = 0.0
        self._ss = 0.0
        self._log_prod = 0.0
        self._started = False

    def _update(self, x) -> float:
        x = float(x)
        n = self.t - 1
        if n >= 2:
            mean = self._s / n
            var = self._ss / n - mean * mean
            if var > 0.0:
                sd = math.sqrt(var)
                z = (x - mean) / sd
                self._log_prod += -math.log(sd) - 0.5 * z * z
                self._started = True
        self._s += x
        self._ss += x * x
        if not self._started:
            return 0.0
        t = self.t
        xbar2 = self._ss / t
        return 0.5 * t * math.log(xbar2) + 0.5 * t + self._log_prod


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(400)
_GL_LOG_WEIGHTS = np.log(_GL_WEIGHTS)


class GaussianMaxInvStream(EvidenceStream):
    """Scale-invariant Gaussian e-process: ratio of likelihood mixtures.

    Tests mean/sd = d0 against mean/sd = d1; each side integrates

        integral_{sd>0} sd^-t exp(-(t/2) [ (mean_t/sd - d)^2 + var_t/sd^2 ]) d sd

    by 400-point Gauss-Legendre on log sd over a shared +-12 window centred
    at log sqrt(mean(x^2)), accumulated with log-sum-exp; sharing the grid
    between numerator and denominator cancels discretization bias.  Defined
    for t >= 2 (1 before).  Only valid in the scale-invariant coarsening of
    the data filtration.
    """

    f_valid = False
    HALF_WIDTH = 12.0

    def __init__(self, d0: float, d1: float):
        super().__init__()
        self.d0 = float(d0)
        self.d1 = float(d1)
        self._s = 0.0
        self._ss = 0.0

    def reset(self, rng=None) -> None:
        super().reset(rng)
        self._s = 0.0
        self._ss = 0.0

    @staticmethod
    def _log_mixture(u: np.ndarray, t: int, mu: float, var: float, d: float) -> float:
        v = np.exp(-u)
        g = (1.0 - t) * u - 0.5 * t * ((mu * v - d) ** 2 + var * v * v) + _GL_LOG_WEIGHTS
        m = g.max()
        return m + math.log(np.exp(g - m).sum())

    def _update(self, x) -> float:
        x = float(x)
        self._s += x
        self._ss += x * x
        t = self.t
        if t < 2:
            return 0.0
        if self.d0 == self.d1:
            return 0.0
        xbar2 = self._ss / t
        if xbar2 <= 0.0:
            # all-zero data: integrands share sd^-t exactly
            return -0.5 * t * (self.d1 ** 2 - self.d0 ** 2)
        mu = self._s / t
        var = max(xbar2 - mu * mu, 0.0)
        center = 0.5 * math.log(xbar2)
        u = center + self.HALF_WIDTH * _GL_NODES
        num = self._log_mixture(u, t, mu, var, self.d1)
        den = self._log_mixture(u, t, mu, var, self.d0)
        return num - den


# ---------------------------------------------------------------------------
# Spec strings:  ui-exch | conf:lambda=1 | conf:jumper,eps=0.01
#                | bounded-mean:mu=0.5,lambda=1 | gauss-ui | gauss-maxinv:d0=0,d1=1
# ---------------------------------------------------------------------------

def _parse_opts(arg: str) -> dict[str, str]:
    opts: dict[str, str] = {}
    for part in arg.split(","):
        part = part.strip()
        if not part:
            continue
        key, eq, val = part.partition("=")
        opts[key.strip()] = val.strip() if eq else ""
    return opts


def parse_stream(text: str) -> EvidenceStream:
    """Build a fresh (un-reset) stream from its config string."""
    name, _, arg = text.strip().partition(":")
    name = name.strip().lower()
    if name == "ui-exch":
        if arg:
            raise ValueError("ui-exch takes no options")
        return UiExchStream()
    if name == "conf":
        opts = _parse_opts(arg)
        if "jumper" in opts:
            eps = float(opts.pop("eps", "0.01"))
            opts.pop("jumper")
            if opts:
                raise ValueError(f"unknown conf options: {sorted(opts)}")
            return ConformalMartingale(jumper=True, eps=eps)
        lam = float(opts.pop("lambda", "1"))
        if opts:
            raise ValueError(f"unknown conf options: {sorted(opts)}")
        return ConformalMartingale(lam)
    if name == "bounded-mean":
        opts = _parse_opts(arg)
        mu = float(opts.pop("mu"))
        if opts.pop("decay", None) is not None:
            stream = BoundedMeanStream(mu, decay=True)
        else:
            stream = BoundedMeanStream(mu, float(opts.pop("lambda", "1")))
        if opts:
            raise ValueError(f"unknown bounded-mean options: {sorted(opts)}")
        return stream
    if name == "gauss-ui":
        if arg:
            raise ValueError("gauss-ui takes no options")
        return GaussianUiTTestStream()
    if name == "gauss-maxinv":
        opts = _parse_opts(arg)
        d0 = float(opts.pop("d0"))
        d1 = float(opts.pop("d1"))
        if opts:
            raise ValueError(f"unknown gauss-maxinv options: {sorted(opts)}")
        return GaussianMaxInvStream(d0, d1)
    raise ValueError(f"unknown stream spec {text!r}")
