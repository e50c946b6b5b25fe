"""Constant ledger, stability margin sigma and smallness thresholds.

All constants depend on x = ||f||_{F^{1,1}} and on |A_mu|.  C5 carries a
1/x factor and is only ever used multiplied by x, so the ledger stores the
product c5x instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDomain

BISECT_TOL = 1e-8
_SCAN_STEP = 1e-3


@dataclass(frozen=True)
class FluidParams:
    a_mu: float
    a_rho: float = 1.0
    nu: float = 0.0

    def __post_init__(self):
        if not -1.0 <= self.a_mu <= 1.0:
            raise ValueError("a_mu outside [-1, 1]")
        if not math.isfinite(self.a_rho):
            raise ValueError("a_rho must be finite")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")

    @property
    def stable(self) -> bool:
        return self.a_rho > 0

    def flipped(self) -> "FluidParams":
        return FluidParams(self.a_mu, -self.a_rho, self.nu)


@dataclass(frozen=True)
class ConstantLedger:
    x: float
    a_mu_abs: float
    s1: float
    s2: float
    c1: float
    c2: float
    c3: float
    c4: float
    b1: float
    b2: float
    c5x: float
    valid: bool
    failed_denominator: str | None = None


def _div(num: float, den: float) -> float:
    return num / den if den != 0 else float("nan")


def ledger(x: float, a_mu_abs: float) -> ConstantLedger:
    """Evaluate S1, S2, C1..C4, B1, B2 and C5*x at x = ||f||_{F^{1,1}}.

    Every field is computed wherever the arithmetic is defined; ``valid``
    records whether all denominators are positive and names the first that
    is not.
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    a = abs(a_mu_abs)
    omx2 = 1.0 - x * x
    s1 = _div(x, omx2)
    s2 = _div(s1, 1 - a * s1)
    den = {
        "1-x^2": omx2,
        "1-|A|S1": 1 - a * s1,
        "1-5|A|S1": 1 - 5 * a * s1,
        "1-8|A|S1": 1 - 8 * a * s1,
        "1-2|A|S1": 1 - 2 * a * s1,
        "1-3|A|S2(1+|A|S2)": 1 - 3 * a * s2 * (1 + a * s2),
        "1-6|A|S2(1+|A|S2)": 1 - 6 * a * s2 * (1 + a * s2),
    }
    failed = next((name for name, v in den.items() if not v > 0), None)

    c1 = _div(1 - a * s1, den["1-5|A|S1"])
    c2 = _div(c1, den["1-2|A|S1"] * omx2)
    b1 = _div(den["1-2|A|S1"], den["1-8|A|S1"])
    c3 = _div(1 + x * x, omx2) * (
        1 + a * _div(6 * x * (1 - a * s1), omx2 * den["1-2|A|S1"] * den["1-5|A|S1"])
    )
    q = c3 + c1 + 4 * s1 * c1 * x
    d3 = den["1-3|A|S2(1+|A|S2)"]
    c4 = _div(1 + s2 * s2 * a * a * q, d3)
    c5x = _div(s2 * (3 + a * s2 * (3 + q)), d3)
    b2 = _div(1 + 2 * s2 * s2 * a * q, den["1-6|A|S2(1+|A|S2)"])
    return ConstantLedger(x, a, s1, s2, c1, c2, c3, c4, b1, b2, c5x, failed is None, failed)


def sigma3d(x: float, a_mu_abs: float, a_rho: float = 1.0, nu: float = 0.0) -> float:
    """Margin sigma of the F^{1,1} decay inequality (3D); the condition is sigma > 0."""
    led = ledger(x, a_mu_abs)
    if not led.valid:
        raise InvalidDomain(led.failed_denominator or "unknown")
    a = led.a_mu_abs
    d = (1 - x * x) ** 2
    # x^3 C5 = x^2 c5x, so no division by x is needed
    return (
        -nu
        + a_rho
        - 2 * a_rho * a * led.c5x
        - 2 * a_rho * x * x * (2 * led.b1 + led.b2 - led.b2 * x * x) / d
        - a * a_rho * (12 * led.c2 * x**3 + 2 * led.c5x * x * x * (1 - x * x)) / d
    )


def sigma2d(x: float, a_mu_abs: float, a_rho: float = 1.0, nu: float = 0.0) -> float:
    """Margin for the 2D (one-dimensional interface) problem, same sign convention as 3D."""
    a = abs(a_mu_abs)
    if not x < 1:
        raise InvalidDomain("1-x^2")
    omx2 = 1 - x * x
    dm = omx2 - 2 * a * x
    if not dm > 0:
        raise InvalidDomain("1-x^2-2|A|x")
    poly = 2 * a * x**5 - 6 * x**4 - 8 * a * x**3 + 4 * x * x - 2 * a * x + 2
    bracket = 1 - 2 * x * x * (3 - x * x) / omx2**2 - a * 2 * x * poly / (omx2**2 * dm**2)
    return a_rho * bracket - nu


def sigma(model: str, x: float, a_mu_abs: float, a_rho: float = 1.0, nu: float = 0.0) -> float:
    if model == "3d":
        return sigma3d(x, a_mu_abs, a_rho, nu)
    if model == "2d":
        return sigma2d(x, a_mu_abs, a_rho, nu)
    raise ValueError("model must be '2d' or '3d'")


def _admissible(x: float, a: float, model: str) -> bool:
    try:
        return sigma(model, x, a, 1.0, 0.0) > 0
    except InvalidDomain:
        return False


def threshold(a_mu_abs: float, model: str = "3d") -> float:
    """First x at which sigma (nu = 0, A_rho = 1) stops being positive or the ledger fails.

    Scans upward from 0 and bisects the first bracket to 1e-8.
    """
    a = abs(a_mu_abs)
    if a > 1:
        raise ValueError("|a_mu| must be <= 1")
    lo = 0.0
    hi = None
    x = _SCAN_STEP
    while x < 1.0:
        if not _admissible(x, a, model):
            hi = x
            break
        lo = x
        x += _SCAN_STEP
    if hi is None:
        hi = 1.0
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if _admissible(mid, a, model):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def threshold_curve(samples: int, model: str = "3d") -> list[tuple[float, float]]:
    if samples < 2:
        raise ValueError("samples must be >= 2")
    grid = [i / (samples - 1) for i in range(samples)]
    return [(a, threshold(a, model)) for a in grid]


# ---- a priori bounds on the vorticity ------------------------------------------

@dataclass
class BoundCheck:
    name: str
    measured: float
    bound: float
    ratio: float
    passed: bool


@dataclass
class BoundsReport:
    checks: list[BoundCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_ratio(self) -> float:
        return max((c.ratio for c in self.checks), default=0.0)

    def failures(self) -> list[BoundCheck]:
        return [c for c in self.checks if not c.passed]


def _check_one(name: str, measured: float, bound: float, slack: float = 0.0) -> BoundCheck:
    # slack: roundoff floor of the measurement, removed before comparing
    m = max(measured - slack, 0.0)
    if bound > 0:
        ratio = m / bound
    else:
        ratio = 0.0 if m <= 1e-14 else math.inf
    passed = m <= bound * (1 + 1e-12) + 1e-14
    return BoundCheck(name, measured, bound, ratio, passed)


def vorticity_bounds(led: ConstantLedger, a_rho: float, x: float, norms: dict,
                     slack: dict | None = None) -> BoundsReport:
    """Compare measured norms against the F^{0,1} and F^{1,1} vorticity bounds.

    ``norms`` keys (missing keys are skipped):
      omega1_f01, omega2_f01, omega3_f01, dD_f01 (max over i), omega_f11 (max over i=1,2),
      omega3_f11, dD_f11, Omega_f11, Omega_f21, f21.
    ``slack`` optionally maps the same keys to roundoff floors of the measurements.
    """
    if not led.valid:
        raise InvalidDomain(led.failed_denominator or "unknown")
    ar = abs(a_rho)
    a = led.a_mu_abs
    rep = BoundsReport()
    get = norms.get
    slack = slack or {}

    def _check(name, measured, bound):
        return _check_one(name, measured, bound, slack.get(name, 0.0))

    for key in ("omega1_f01", "omega2_f01"):
        if get(key) is not None:
            rep.checks.append(_check(key, get(key), 2 * led.c1 * ar * x))
    if get("omega3_f01") is not None:
        rep.checks.append(_check("omega3_f01", get("omega3_f01"), 12 * a * ar * led.c2 * x**3))
    if get("dD_f01") is not None:
        rep.checks.append(_check("dD_f01", get("dD_f01"), 6 * ar * led.c2 * x * x))
    if get("Omega_f11") is not None:
        rep.checks.append(_check("Omega_f11", get("Omega_f11"), 2 * ar * led.b1 * x))
    f21 = get("f21")
    if f21 is not None:
        if get("omega_f11") is not None:
            rep.checks.append(_check("omega_f11", get("omega_f11"), 2 * ar * led.c4 * f21))
        if get("omega3_f11") is not None:
            # x^2 C5 = x c5x
            b = 4 * a * ar * f21 * (x * led.c5x + 3 * led.c2 * x * x)
            rep.checks.append(_check("omega3_f11", get("omega3_f11"), b))
        if get("dD_f11") is not None:
            rep.checks.append(_check("dD_f11", get("dD_f11"), 2 * ar * led.c5x * f21))
        if get("Omega_f21") is not None:
            rep.checks.append(_check("Omega_f21", get("Omega_f21"), 2 * ar * led.b2 * f21))
    return rep


def half_threshold_sigma(a_mu_abs: float, model: str) -> tuple[float, float]:
    k = threshold(a_mu_abs, model)
    return k, sigma(model, 0.5 * k, a_mu_abs, 1.0, 0.0)


def series_sigma_amu0(x: float, a_rho: float = 1.0, nu: float = 0.0) -> float:
    """A_mu = 0 margin by direct summation of A_rho(1 - 2 sum_{n>=1} (2n+1) x^{2n}) - nu."""
    total = 0.0
    n = 1
    while True:
        term = (2 * n + 1) * x ** (2 * n)
        total += term
        if term < 1e-16 * max(total, 1e-300) or n > 100000:
            break
        n += 1
    return a_rho * (1 - 2 * total) - nu


def curve_table(samples: int, model: str) -> np.ndarray:
    rows = []
    for a, k in threshold_curve(samples, model):
        rows.append((a, k, sigma(model, 0.5 * k, a, 1.0, 0.0)))
    return np.array(rows)
