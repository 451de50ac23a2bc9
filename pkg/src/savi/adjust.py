"""Adjusters and p-to-e calibrators.

An adjuster is an increasing function A: [1, inf] -> [0, inf] with

    integral_1^inf A(e) / e^2 de <= 1,

admissible when the integral equals 1, A is right-continuous and A(inf) = inf.
A p-to-e calibrator is a decreasing function C: [0, 1] -> [0, inf] with
integral_0^1 C(p) dp <= 1.  The two families are in one-to-one correspondence
through A(e) = C(1/e) (with 1/inf = 0 and 1/0 = inf).

Implemented families:

    power(k):  A(e) = k * e^(1-k),              k in (0, 1)
    mix:       A(e) = (e - 1 - log e) / log^2 e, A(1) = 1/2
    kv:        A(e) = e^2 log 2 / ((1+e) log^2(1+e))
    sqrt:      A(e) = sqrt(e) - 1
    zero(k):   A(e) = k (1+k)^k e / log^(1+k) e  for e >= exp(1+k), else 0
    spine(k):  two-argument A(emax, e) = k emax^(1-k) + (1-k) emax^(-k) e

The spine family is *not* a valid lifter; it exists only as a negative
control and is rejected wherever a single-argument adjuster is required.

Everything evaluates in the natural-log domain so that evidence values far
beyond double range (products of thousands of betting factors) survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

__all__ = [
    "Evidence",
    "AdjusterSpec",
    "CalibratorSpec",
    "AdjusterView",
    "CalibratorView",
    "AdmissibilityReport",
    "adjuster_eval",
    "adjuster_log_eval",
    "adjuster_log_eval_extended",
    "calibrator_eval",
    "calibrator_log_eval",
    "spine_eval",
    "check_adjuster_admissibility",
    "admissibility_integral",
    "adjuster_log_cp",
    "adjuster_from_calibrator",
    "calibrator_from_adjuster",
    "parse_adjuster",
    "parse_calibrator",
    "mix_kv_crossover",
    "SHIPPED_ADJUSTERS",
]

LOG2 = math.log(2.0)


class Evidence:
    """An extended nonnegative real stored in natural-log domain.

    ``log_value`` lives in [-inf, +inf]; the linear ``value`` in [0, inf].
    """

    __slots__ = ("log_value",)

    def __init__(self, log_value: float):
        self.log_value = float(log_value)

    @classmethod
    def from_value(cls, value: float) -> "Evidence":
        if value < 0:
            raise ValueError(f"evidence must be nonnegative, got {value}")
        return cls(math.log(value) if value > 0 else -math.inf)

    @property
    def value(self) -> float:
        lv = self.log_value
        if lv == math.inf:
            return math.inf
        if lv == -math.inf:
            return 0.0
        if lv > 709.0:  # exp overflow; extended-real semantics
            return math.inf
        return math.exp(lv)

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"Evidence(log_value={self.log_value!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Evidence) and self.log_value == other.log_value


@dataclass(frozen=True)
class AdjusterSpec:
    """Tagged descriptor of an adjuster family.

    kind is one of {"power", "mix", "kv", "sqrt", "zero", "spine"}; kappa is
    the family parameter (unused for mix/kv/sqrt).
    """

    kind: str
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in ("power", "mix", "kv", "sqrt", "zero", "spine"):
            raise ValueError(f"unknown adjuster kind: {self.kind!r}")
        if self.kind == "power" and not (0.0 < self.kappa < 1.0):
            raise ValueError("power adjuster needs kappa in (0, 1)")
        if self.kind == "zero" and not self.kappa > 0.0:
            raise ValueError("zero adjuster needs kappa > 0")
        if self.kind == "spine" and not (0.0 <= self.kappa <= 1.0):
            raise ValueError("spine adjuster needs kappa in [0, 1]")

    @property
    def is_spine(self) -> bool:
        return self.kind == "spine"

    def spec_string(self) -> str:
        if self.kind in ("mix", "kv", "sqrt"):
            return self.kind
        return f"{self.kind}:{self.kappa:g}"


@dataclass(frozen=True)
class CalibratorSpec:
    """Tagged descriptor of a p-to-e calibrator: power(kappa) or mix."""

    kind: str
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in ("power", "mix"):
            raise ValueError(f"unknown calibrator kind: {self.kind!r}")
        if self.kind == "power" and not (0.0 < self.kappa < 1.0):
            raise ValueError("power calibrator needs kappa in (0, 1)")

    def spec_string(self) -> str:
        return self.kind if self.kind == "mix" else f"power:{self.kappa:g}"


# ---------------------------------------------------------------------------
# Log-domain cores.  Each takes L = log(e) and returns log(A(e)).
# ---------------------------------------------------------------------------

def _log_mix(L: float) -> float:
    """log A_mix(e) for L = log e >= some negative range; monotone on all L."""
    if L == math.inf:
        return math.inf
    if abs(L) < 1e-4:
        # (e^L - 1 - L)/L^2 = 1/2 + L/6 + L^2/24 + L^3/120 + ...
        a = 0.5 + L / 6.0 + L * L / 24.0 + L * L * L / 120.0
        return math.log(a)
    if L < 700.0:
        return math.log((math.expm1(L) - L)) - 2.0 * math.log(abs(L))
    # huge e: A = e/log^2 e * (1 - (1+L)e^-L); the correction underflows
    return L - 2.0 * math.log(L)


def _log_kv(L: float) -> float:
    if L == math.inf:
        return math.inf
    # log(1+e) computed as L + log1p(exp(-L)) without forming e
    if L > 0:
        log1pe = L + math.log1p(math.exp(-L))
    else:
        log1pe = math.log1p(math.exp(L))
    return 2.0 * L + math.log(LOG2) - log1pe - 2.0 * math.log(log1pe)


def _log_sqrt(L: float) -> float:
    if L == math.inf:
        return math.inf
    if L <= 0.0:
        return -math.inf  # sqrt(e) - 1 <= 0; clamp extended values at 0
    return math.log(math.expm1(0.5 * L))


def _log_power(L: float, kappa: float) -> float:
    if L == math.inf:
        return math.inf
    return math.log(kappa) + (1.0 - kappa) * L


def _log_zero(L: float, kappa: float) -> float:
    if L == math.inf:
        return math.inf
    if L < 1.0 + kappa:
        return -math.inf
    return math.log(kappa) + kappa * math.log1p(kappa) + L - (1.0 + kappa) * math.log(L)


def adjuster_log_eval_extended(spec: AdjusterSpec, log_e: float) -> float:
    """log A(e) with the family formula extended monotonically below e = 1.

    The adjuster proper is defined on [1, inf]; the extension is what a
    lifted stream evaluates while the inner running maximum still sits below
    1 (negative branches clamp to 0).  Spine specs are rejected.
    """
    if spec.is_spine:
        raise ValueError("spine adjusters take two arguments; see spine_eval")
    if math.isnan(log_e):
        raise ValueError("log_e is NaN")
    if spec.kind == "mix":
        return _log_mix(log_e)
    if spec.kind == "kv":
        return _log_kv(log_e)
    if spec.kind == "sqrt":
        return _log_sqrt(log_e)
    if spec.kind == "power":
        return _log_power(log_e, spec.kappa)
    return _log_zero(log_e, spec.kappa)


def adjuster_log_eval(spec: AdjusterSpec, log_e: float) -> float:
    """log A(e) for log_e >= 0; raises on inputs below the domain [1, inf]."""
    if log_e < 0.0:
        raise ValueError(f"adjuster domain is [1, inf]; got log e = {log_e}")
    return adjuster_log_eval_extended(spec, log_e)


def adjuster_eval(spec: AdjusterSpec, e: Evidence | float) -> Evidence:
    """Evaluate A(e) for e >= 1.  A(inf) = inf for every non-spine kind."""
    log_e = e.log_value if isinstance(e, Evidence) else Evidence.from_value(e).log_value
    return Evidence(adjuster_log_eval(spec, log_e))


def calibrator_log_eval(spec: CalibratorSpec, log_p: float) -> float:
    """log C(p) from log p in [-inf, 0].  C(0) = inf; decreasing in p."""
    if log_p > 0.0:
        raise ValueError(f"calibrator domain is [0, 1]; got log p = {log_p}")
    # C(p) = A(1/p) pointwise for the matching family
    if spec.kind == "mix":
        return _log_mix(-log_p)
    return _log_power(-log_p, spec.kappa)


def calibrator_eval(spec: CalibratorSpec, p: float) -> Evidence:
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"calibrator domain is [0, 1]; got p = {p}")
    log_p = math.log(p) if p > 0.0 else -math.inf
    return Evidence(calibrator_log_eval(spec, log_p))


def spine_eval(kappa: float, e_max: Evidence | float, e_cur: Evidence | float) -> Evidence:
    """Two-argument spine adjustment k*emax^(1-k) + (1-k)*emax^(-k)*ecur.

    Admissible among spine-based adjusters but not a valid lifter; kept for
    the negative control only.
    """
    if not (0.0 <= kappa <= 1.0):
        raise ValueError("spine kappa must lie in [0, 1]")
    lmax = e_max.log_value if isinstance(e_max, Evidence) else math.log(e_max)
    lcur = e_cur.log_value if isinstance(e_cur, Evidence) else (
        math.log(e_cur) if e_cur > 0 else -math.inf)
    if lmax < 0.0:
        raise ValueError("spine running maximum must be >= 1")
    terms = []
    if kappa > 0.0:
        terms.append(math.log(kappa) + (1.0 - kappa) * lmax)
    if kappa < 1.0 and lcur > -math.inf:
        terms.append(math.log1p(-kappa) - kappa * lmax + lcur)
    if not terms:
        return Evidence(-math.inf)
    m = max(terms)
    if m == math.inf:
        return Evidence(math.inf)
    return Evidence(m + math.log(sum(math.exp(t - m) for t in terms)))


# ---------------------------------------------------------------------------
# Correspondence views
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdjusterView:
    """Adjuster induced by a calibrator through A(e) = C(1/e)."""

    source: CalibratorSpec

    def log_eval(self, log_e: float) -> float:
        return calibrator_log_eval(self.source, -log_e)

    def __call__(self, e: float) -> float:
        return Evidence(self.log_eval(math.log(e) if e < math.inf else math.inf)).value


@dataclass(frozen=True)
class CalibratorView:
    """Calibrator induced by an adjuster through C(p) = A(1/p)."""

    source: AdjusterSpec

    def log_eval(self, log_p: float) -> float:
        return adjuster_log_eval_extended(self.source, -log_p)

    def __call__(self, p: float) -> float:
        log_p = math.log(p) if p > 0.0 else -math.inf
        return Evidence(self.log_eval(log_p)).value


def adjuster_from_calibrator(c: CalibratorSpec) -> AdjusterView:
    return AdjusterView(c)


def calibrator_from_adjuster(a: AdjusterSpec) -> CalibratorView:
    if a.is_spine:
        raise ValueError("spine adjusters have no calibrator correspondent")
    return CalibratorView(a)


# ---------------------------------------------------------------------------
# Admissibility quadrature
# ---------------------------------------------------------------------------

def _adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                      tol: float, max_depth: int = 60) -> tuple[float, float]:
    """Adaptive Simpson on [a, b]; returns (integral, error estimate)."""

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, eps, depth):
        xm = 0.5 * (x0 + x2)
        xl = 0.5 * (x0 + xm)
        xr = 0.5 * (xm + x2)
        fl = f(xl)
        fr = f(xr)
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= max(15.0 * eps, 1e-16 * (abs(whole) + 1.0)):
            return left + right + delta / 15.0, abs(delta) / 15.0
        lv, le = recurse(x0, xm, f0, fl, f1, left, eps / 2.0, depth + 1)
        rv, re = recurse(xm, x2, f1, fr, f2, right, eps / 2.0, depth + 1)
        return lv + rv, le + re

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)


# Boundary between the substituted small-p segment and the direct segment.
_P_SPLIT = 0.5
_W_SPLIT = -1.0 / math.log(_P_SPLIT)  # = 1/log 2


def adjuster_log_cp(spec: AdjusterSpec) -> Callable[[float], float]:
    """Stable log of A(e)/e as a function of L = log e.

    Equals log(C(p) * p) at p = 1/e.  Forming log C + log p from the two
    halves cancels catastrophically once L exceeds ~1e15 (the tail of the
    admissibility integral lives at such e), so each family gets a direct
    algebraic form here.
    """
    if spec.is_spine:
        raise ValueError("spine adjusters are two-argument")
    kind, kappa = spec.kind, spec.kappa

    def log_cp(L: float) -> float:
        if kind == "power":
            return math.log(kappa) - kappa * L
        if kind == "zero":
            if L < 1.0 + kappa:
                return -math.inf
            return math.log(kappa) + kappa * math.log1p(kappa) - (1.0 + kappa) * math.log(L)
        if kind == "sqrt":
            if L <= 0.0:
                return -math.inf
            if L < 1400.0:
                return math.log(math.expm1(0.5 * L)) - L
            return -0.5 * L
        if kind == "kv":
            log1pe = L + math.log1p(math.exp(-L)) if L > 0 else math.log1p(math.exp(L))
            return math.log(LOG2) - math.log1p(math.exp(-L)) - 2.0 * math.log(log1pe)
        # mix
        if abs(L) < 1e-4:
            return math.log(0.5 + L / 6.0 + L * L / 24.0 + L * L * L / 120.0) - L
        if L < 700.0:
            return math.log(math.expm1(L) - L) - 2.0 * math.log(abs(L)) - L
        return -2.0 * math.log(L) + math.log1p(-(1.0 + L) * math.exp(-L) if L < 745 else 0.0)

    return log_cp


def admissibility_integral(log_cp: Callable[[float], float], *,
                           breakpoints: tuple[float, ...] = (),
                           tol: float = 1e-9) -> tuple[float, float]:
    """integral_1^inf A(e)/e^2 de, from log_cp: L = log e  ->  log(A(e)/e).

    Substituting p = 1/e turns the target into integral_0^1 C(p) dp with
    C(p) = A(1/p).  The singular region near p = 0 is handled with a second
    substitution w = -1/log p = 1/L, which maps the far tail (e beyond any
    double) onto an ordinary interval:

        integral_0^p0 C(p) dp = integral_0^w0 exp(log_cp(1/w) - 2 log w) dw.

    The remainder [p0, 1] is integrated directly in p.  ``breakpoints`` are
    w-domain split locations (e.g. a support cutoff).  Returns
    (value, error estimate).
    """

    def h(w: float) -> float:
        if w < 1e-300:
            w = 1e-300
        le = log_cp(1.0 / w) - 2.0 * math.log(w)
        return math.exp(le) if le < 700.0 else math.inf

    knots = sorted({0.0, _W_SPLIT, *(b for b in breakpoints if 0.0 < b < _W_SPLIT)})
    total = 0.0
    err = 0.0
    for lo, hi in zip(knots, knots[1:]):
        v, e = _adaptive_simpson(h, lo, hi, tol / 2.0)
        total += v
        err += e

    def c_lin(p: float) -> float:
        L = -math.log(p)
        le = log_cp(L) + L
        return math.exp(le) if le < 700.0 else math.inf

    v, e = _adaptive_simpson(c_lin, _P_SPLIT, 1.0, tol / 2.0)
    return total + v, err + e


def _zero_adjuster_integral(kappa: float, tol: float) -> tuple[float, float]:
    """Quadrature for the zero family, whose w-domain integrand is
    c * w^(kappa-1) on (0, 1/(1+kappa)]: dyadic panels toward the endpoint
    singularity (kappa < 1), with an explicit truncation bound."""
    spec = AdjusterSpec("zero", kappa)
    log_cp = adjuster_log_cp(spec)

    def h(w: float) -> float:
        return math.exp(log_cp(1.0 / w) - 2.0 * math.log(w))

    wb = 1.0 / (1.0 + kappa)
    c = kappa * (1.0 + kappa) ** kappa
    total = 0.0
    err = 0.0
    hi = wb
    while True:
        lo = hi / 2.0
        v, e = _adaptive_simpson(h, lo, hi, tol / 8.0)
        total += v
        err += e
        hi = lo
        tail = c * hi ** kappa / kappa  # exact mass remaining below hi
        if tail <= tol / 8.0:
            return total + tail, err + tail


@dataclass(frozen=True)
class AdmissibilityReport:
    spec: AdjusterSpec
    integral: float
    admissible: bool
    error_estimate: float


def check_adjuster_admissibility(spec: AdjusterSpec, tol: float = 1e-6) -> AdmissibilityReport:
    """Verify integral_1^inf A(e)/e^2 de = 1 by quadrature in the p = 1/e domain."""
    if spec.is_spine:
        raise ValueError("spine adjusters are two-argument; admissibility check not applicable")
    inner_tol = min(tol, 1e-7) / 10.0
    if spec.kind == "zero":
        value, err = _zero_adjuster_integral(spec.kappa, inner_tol)
    else:
        value, err = admissibility_integral(adjuster_log_cp(spec), tol=inner_tol)
    if err > tol:
        raise ArithmeticError(
            f"admissibility quadrature for {spec.spec_string()} did not converge: "
            f"estimated error {err:.3g} exceeds tol {tol:.3g}")
    return AdmissibilityReport(spec, value, abs(value - 1.0) <= tol, err)


def mix_kv_crossover(lo: float = 2.0, hi: float = 10.0, tol: float = 1e-9) -> float:
    """Bisect for the point past which the mix adjuster dominates the kv one."""
    mix = AdjusterSpec("mix")
    kv = AdjusterSpec("kv")

    def diff(e: float) -> float:
        return adjuster_eval(mix, e).value - adjuster_eval(kv, e).value

    if not (diff(lo) < 0.0 < diff(hi)):
        raise ValueError(f"crossover not bracketed by [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if diff(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Spec-string parsing:  mix | kv | sqrt | power:0.5 | zero:1 | spine:0.5
# ---------------------------------------------------------------------------

def parse_adjuster(text: str) -> AdjusterSpec:
    name, _, arg = text.strip().partition(":")
    name = name.strip().lower()
    if name in ("mix", "kv", "sqrt"):
        if arg:
            raise ValueError(f"adjuster {name!r} takes no parameter")
        return AdjusterSpec(name)
    if name in ("power", "zero", "spine"):
        if not arg:
            raise ValueError(f"adjuster {name!r} needs a parameter, e.g. {name}:0.5")
        return AdjusterSpec(name, float(arg))
    raise ValueError(f"unknown adjuster spec {text!r}")


def parse_calibrator(text: str) -> CalibratorSpec:
    name, _, arg = text.strip().partition(":")
    name = name.strip().lower()
    if name == "mix":
        if arg:
            raise ValueError("calibrator 'mix' takes no parameter")
        return CalibratorSpec("mix")
    if name == "power":
        if not arg:
            raise ValueError("calibrator 'power' needs a parameter, e.g. power:0.5")
        return CalibratorSpec("power", float(arg))
    raise ValueError(f"unknown calibrator spec {text!r}")


#: Non-spine adjusters exercised by the verification command.
SHIPPED_ADJUSTERS: tuple[AdjusterSpec, ...] = (
    AdjusterSpec("mix"),
    AdjusterSpec("kv"),
    AdjusterSpec("sqrt"),
    AdjusterSpec("power", 0.1),
    AdjusterSpec("power", 0.5),
    AdjusterSpec("power", 0.9),
    AdjusterSpec("zero", 1.0),
)
