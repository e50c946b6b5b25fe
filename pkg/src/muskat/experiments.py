"""Monitors and experiment drivers built on trajectories of the contour equation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy import stats

from .constants import FluidParams
from .dynamics import StepperConfig, choose_dt, run, step
from .errors import BlowUpDetected, ConstraintViolated, EmptyWindow
from .interface_ops import QuadratureScheme
from .record import TrajectoryRecord
from .spectral import (
    SpectralInterface,
    get_lattice,
    sobolev_norm,
    strip_estimate,  # noqa: F401  (part of this module's public surface)
    wiener_norm,
)

TOL_REL = 1e-6


@dataclass
class MonitorResult:
    name: str
    passed: bool
    measured: float
    bound: float
    tolerance: float
    series: np.ndarray = field(default_factory=lambda: np.zeros(0))
    note: str = ""

    def summary(self) -> dict:
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "measured": float(self.measured),
            "bound": float(self.bound),
            "tolerance": float(self.tolerance),
        }


def nonincreasing(y: np.ndarray, tol_rel: float = TOL_REL) -> tuple[bool, float]:
    """(verdict, worst relative increase) for y_{i+1} <= y_i (1 + tol_rel)."""
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        return True, 0.0
    prev, nxt = y[:-1], y[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(prev > 0, (nxt - prev) / prev, np.where(nxt > 0, np.inf, 0.0))
    worst = float(np.max(rel))
    ok = bool(np.all(nxt <= prev * (1 + tol_rel))) and bool(np.all(np.isfinite(y)))
    return ok, worst


def _usable(rec: TrajectoryRecord) -> list[dict]:
    return [r for r in rec.rows if "blowup" not in r["flags"].split("|")]


def _annotate(rec: TrajectoryRecord) -> str:
    if not rec.metadata.get("inside", True):
        return "outside-hypothesis"
    if any("unstable" in r["flags"] for r in rec.rows):
        return "unstable-regime (informational)"
    return ""


def energy_monitor(rec: TrajectoryRecord, sigma: float | None = None, nu: float | None = None,
                   tol_rel: float = TOL_REL) -> MonitorResult:
    """E(t) = ||f||_{F11_nu} + sigma int_0^t ||f||_{F21_nu} nonincreasing.

    With sigma None the recorded energy column (step-level quadrature) is
    used; otherwise E is rebuilt from the sampled rows by the trapezoid rule.
    """
    rows = _usable(rec)
    if nu is not None and "nu" in rec.metadata and not math.isclose(nu, rec.metadata["nu"], rel_tol=1e-12, abs_tol=1e-15):
        raise ValueError("nu differs from the weight used to record the trajectory")
    if sigma is None:
        e = np.array([r["energy_E"] for r in rows])
    else:
        t = np.array([r["t"] for r in rows])
        a = np.array([r["f11_nu"] for r in rows])
        b = np.array([r["f21_nu"] for r in rows])
        integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (b[1:] + b[:-1]))])
        e = a + sigma * integral
    ok, worst = nonincreasing(e, tol_rel)
    return MonitorResult("energy", ok, worst, 0.0, tol_rel, e, _annotate(rec))


def l2_monitor(rec: TrajectoryRecord, tol_rel: float = TOL_REL) -> MonitorResult:
    y = np.array([r["l2"] for r in _usable(rec)])
    ok, worst = nonincreasing(y, tol_rel)
    return MonitorResult("l2", ok, worst, 0.0, tol_rel, y, _annotate(rec))


def hs_nu_monitor(rec: TrajectoryRecord, s: float = 1.0, exp_margin: float = 1.0,
                  tol_rel: float = TOL_REL) -> MonitorResult:
    """||f||_{H^s_nu} nonincreasing and ||f||_{L2_nu} <= ||f0||_{L2} * exp_margin."""
    if not 0.5 <= s <= 1.5:
        raise ValueError("s must lie in [1/2, 3/2]")
    key = {0.5: "h_half_nu", 1.0: "h1_nu", 1.5: "h3half_nu"}.get(float(s))
    diags = [d for d in rec.diagnostics]
    if key is not None and diags and key in diags[0]:
        y = np.array([d[key] for d in diags])
    elif len(rec.snapshots) == len(rec.diagnostics) and rec.snapshots:
        nu = rec.metadata.get("nu", 0.0)
        y = np.array([math.sqrt(f.period**f.dims) * sobolev_norm(f, s, nu) for f in rec.snapshots])
    else:
        raise ValueError("record carries neither the H^s_nu column nor per-row snapshots")
    ok, worst = nonincreasing(y, tol_rel)
    l2nu = np.array([d["l2_nu"] for d in diags]) if diags else np.zeros(0)
    l20 = rec.rows[0]["l2"] if rec.rows else 0.0
    within = bool(np.all(l2nu <= l20 * exp_margin * (1 + tol_rel))) if l2nu.size else True
    return MonitorResult(f"hs_nu(s={s:g})", ok and within, worst, exp_margin, tol_rel, y, _annotate(rec))


# ---- lockstep co-evolution ------------------------------------------------------

def evolve_together(states: list[SpectralInterface], params: FluidParams, stepper: StepperConfig,
                    quad: QuadratureScheme | None = None, sample=None) -> list[SpectralInterface]:
    """Advance several states with a common dt; sample(states) at every sample time."""
    quad = quad or QuadratureScheme()
    if sample is not None:
        sample(states)
    while states[0].time < stepper.t_end:
        t = states[0].time
        t_stop = stepper.t_end
        if stepper.sample_dt > 0:
            t_stop = min(t_stop, (math.floor(t / stepper.sample_dt + 1e-9) + 1) * stepper.sample_dt)
        dt = min(choose_dt(s, stepper, t_stop) for s in states)
        landing = t + dt >= t_stop * (1 - 1e-15)
        states = [step(s, params, stepper, quad, dt) for s in states]
        if landing:
            states = [s.replace(time=t_stop) for s in states]
        if sample is not None and (landing or stepper.sample_dt == 0):
            sample(states)
    return states


def contraction_monitor(f0: SpectralInterface, g0: SpectralInterface, params: FluidParams,
                        stepper: StepperConfig, quad: QuadratureScheme | None = None,
                        tol_rel: float = TOL_REL) -> MonitorResult:
    """||f - g||_{F01}(t) for two co-evolved solutions; pass iff nonincreasing."""
    times, diffs = [], []

    def sample(states):
        times.append(states[0].time)
        diffs.append(wiener_norm(states[0] - states[1], 0.0, 0.0, 0.0))

    evolve_together([f0, g0], params, stepper, quad, sample)
    y = np.array(diffs)
    ok, worst = nonincreasing(y, tol_rel)
    return MonitorResult("contraction", ok, worst, 0.0, tol_rel, np.stack([times, y], axis=1))


# ---- fits -----------------------------------------------------------------------

@dataclass
class DecayFit:
    window: tuple[float, float]
    exponent: float
    stderr: float
    r_squared: float
    samples: int


def fit_decay(t, y, window: tuple[float, float], min_samples: int = 10) -> DecayFit:
    """Least-squares slope of log y against log t inside the window."""
    t1, t2 = window
    if not t2 > t1:
        raise ValueError("window must satisfy t2 > t1")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (t >= t1) & (t <= t2)
    if m.sum() < min_samples:
        raise EmptyWindow(f"{int(m.sum())} samples in [{t1}, {t2}], need {min_samples}")
    if np.any(y[m] <= 0) or np.any(t[m] <= 0):
        raise ValueError("fit needs positive t and y")
    res = stats.linregress(np.log(t[m]), np.log(y[m]))
    return DecayFit((t1, t2), float(res.slope), float(res.stderr), float(res.rvalue**2), int(m.sum()))


# ---- decay experiment -------------------------------------------------------------

def decay_initial(modes: int, period: float, power: float = -0.45, xi_cut: float = 4.0,
                  f11: float = 0.05, seed: int = 0) -> SpectralInterface:
    """One-dimensional data with |f_hat(xi)| ~ |xi|^power e^{-|xi|/xi_cut}, random phases."""
    lat = get_lattice(1, modes, period)
    rng = np.random.default_rng(seed)
    xi = np.abs(lat.xi[0])
    amp = np.zeros(modes)
    nz = xi > 0
    amp[nz] = xi[nz] ** power * np.exp(-xi[nz] / xi_cut)
    amp[modes // 2] = 0.0
    phase = rng.uniform(0, 2 * np.pi, modes)
    k = lat.kint[0].astype(int)
    c = amp * np.exp(1j * phase)
    # Hermitian: c(-k) = conj c(k)
    neg = k < 0
    c[neg] = np.conj(c[(-k[neg]) % modes])
    f = SpectralInterface(1, period, modes, c)
    return f.scaled(f11 / wiener_norm(f, 1.0, 0.0, 0.0))


@dataclass
class DecayReport:
    f11: DecayFit
    h1: DecayFit
    record: TrajectoryRecord


def decay_experiment(f0: SpectralInterface, params: FluidParams, stepper: StepperConfig,
                     window=(5.0, 50.0), quad: QuadratureScheme | None = None) -> DecayReport:
    rec = run(f0, params, stepper, quad)
    t = rec.times
    return DecayReport(fit_decay(t, rec.series("f11"), window), fit_decay(t, rec.series("h1"), window), rec)


# ---- time reversal ---------------------------------------------------------------

@dataclass
class ReversalReport:
    recovery_error: float
    growth_h1: float
    growth_h2: float
    mode_k: np.ndarray
    mode_rate: np.ndarray
    linear_rate: np.ndarray
    max_rate_error: float
    blowup: bool = False
    note: str = ""


def time_reversal_illposedness(f0: SpectralInterface, params: FluidParams, stepper: StepperConfig,
                               delta: float, quad: QuadratureScheme | None = None,
                               kmax: int | None = None, floor: float = 1e-8) -> ReversalReport:
    """Forward delta with A_rho, then forward delta with -A_rho starting from f(delta).

    The second leg is f(delta - t), a solution of the unstable problem.  Rates
    are compared for 0 < |k| <= kmax (default N/8) on modes above floor * max.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if params.a_rho <= 0:
        raise ValueError("the forward leg needs the stable sign A_rho > 0")
    quad = quad or QuadratureScheme()
    leg = replace(stepper, t_end=delta, sample_dt=0.0)
    fwd = _evolve(f0.replace(time=0.0), params, leg, quad)
    g0 = fwd.replace(time=0.0)
    lat = f0.lattice
    kmax = lat.modes // 8 if kmax is None else kmax
    note = ""
    blow = False
    try:
        back = _evolve(g0, params.flipped(), leg, quad)
    except BlowUpDetected as exc:
        return ReversalReport(math.inf, math.inf, math.inf, np.zeros(0), np.zeros(0), np.zeros(0),
                              math.inf, True, f"blow-up at t={exc.t:g}")
    err = wiener_norm(back.replace(time=0.0) - f0.replace(time=0.0), 0.0, 0.0, 0.0)
    h = [sobolev_norm(back, s, 0, 0) / sobolev_norm(g0, s, 0, 0) for s in (1.0, 2.0)]
    a0, a1 = np.abs(g0.coeffs), np.abs(back.coeffs)
    kabs = lat.abskint
    sel = (kabs > 0) & (kabs <= kmax) & (a0 > floor * a0.max())
    with np.errstate(divide="ignore"):
        rate = np.log(a1[sel] / a0[sel]) / delta
    lin = abs(params.a_rho) * lat.absxi[sel]
    rel = np.abs(rate - lin) / lin
    return ReversalReport(err, h[0], h[1], kabs[sel], rate, lin, float(rel.max()) if rel.size else math.nan,
                          blow, note)


def _evolve(f: SpectralInterface, params: FluidParams, stepper: StepperConfig,
            quad: QuadratureScheme) -> SpectralInterface:
    while f.time < stepper.t_end:
        dt = choose_dt(f, stepper, stepper.t_end)
        landing = f.time + dt >= stepper.t_end * (1 - 1e-15)
        f = step(f, params, stepper, quad, dt)
        if landing:
            f = f.replace(time=stepper.t_end)
    return f


# ---- staircase counterexample ---------------------------------------------------------

def _exact(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class StaircaseSpec:
    sigma_exp: float
    delta_exp: float
    gamma_exp: float
    s_target: float
    n_shells: int = 1_000_000

    def __post_init__(self):
        ok, why = staircase_constraints(self.sigma_exp, self.delta_exp, self.gamma_exp, self.s_target)
        if not ok:
            raise ConstraintViolated(why)
        if self.n_shells < 2:
            raise ValueError("n_shells must be >= 2")


def staircase_constraints(sigma, delta, gamma, s) -> tuple[bool, str]:
    """Exact rational check of sigma + delta - gamma < -1 and 2 sigma + delta (2s - 1) - gamma = -1."""
    sg, d, g, ss = (_exact(v) for v in (sigma, delta, gamma, s))
    a = sg + d - g
    b = 2 * sg + d * (2 * ss - 1) - g
    if not a < -1:
        return False, f"sigma + delta - gamma = {a} is not < -1"
    if b != -1:
        return False, f"2 sigma + delta (2s - 1) - gamma = {b} is not -1"
    return True, ""


SHELL_CONSTANT = 2 * np.pi


@dataclass
class StaircaseReport:
    spec: StaircaseSpec
    shells: np.ndarray
    f11_partial: np.ndarray
    l2_partial: np.ndarray
    hs_partial: np.ndarray
    f11_tail_fraction: float
    l2_tail_fraction: float
    hs_growth: float


def shell_terms(spec: StaircaseSpec, n: np.ndarray):
    """Per-shell contributions for radial shells r in [n^delta, n^delta + n^-gamma], r|f_hat| = n^sigma."""
    sg, d, g, s = spec.sigma_exp, spec.delta_exp, spec.gamma_exp, spec.s_target
    n = n.astype(float)
    f11 = 2 * np.pi * n ** (sg + d - g) + np.pi * n ** (sg - 2 * g)
    rel = np.log1p(n ** (-g - d))
    l2 = 2 * np.pi * n ** (2 * sg) * rel
    if s == 0:
        hs = l2
    else:
        hs = 2 * np.pi * n ** (2 * sg) * n ** (2 * d * s) * np.expm1(2 * s * rel) / (2 * s)
    return f11, l2, hs


def _power_tail(coef: float, p: float, n: float) -> float:
    """sum_{m > n} coef m^p for p < -1, by the integral from n + 1/2."""
    return coef * (n + 0.5) ** (p + 1) / (-(p + 1))


def staircase(spec: StaircaseSpec, checkpoints: tuple[int, int] = (1000, 1_000_000)) -> StaircaseReport:
    n = np.arange(1, spec.n_shells + 1)
    f11, l2, hs = shell_terms(spec, n)
    cf, cl, ch = np.cumsum(f11), np.cumsum(l2), np.cumsum(hs)
    lo, hi = checkpoints
    lo = min(lo, spec.n_shells)
    hi = min(hi, spec.n_shells)
    sg, d, g = spec.sigma_exp, spec.delta_exp, spec.gamma_exp
    # totals: partial sum plus the asymptotic remainder beyond n_shells
    f11_total = cf[-1] + _power_tail(2 * np.pi, sg + d - g, spec.n_shells)
    l2_total = cl[-1] + _power_tail(2 * np.pi, 2 * sg - g - d, spec.n_shells)
    return StaircaseReport(
        spec, n, cf, cl, ch,
        float((f11_total - cf[lo - 1]) / f11_total),
        float((l2_total - cl[lo - 1]) / l2_total),
        float(ch[hi - 1] - ch[lo - 1]),
    )


# ---- mollifier Cauchy rate ------------------------------------------------------------

@dataclass
class MollifierReport:
    eps: np.ndarray
    differences: np.ndarray
    slope: float
    monotone: bool


def mollified_initial(f0: SpectralInterface, eps: float) -> SpectralInterface:
    z = np.exp(-4 * np.pi**2 * eps * f0.lattice.absxi**2)
    return f0.replace(z * f0.coeffs)


def mollifier_cauchy_rate(f0: SpectralInterface, params: FluidParams, stepper: StepperConfig,
                          eps_list, quad: QuadratureScheme | None = None) -> MollifierReport:
    """||f^eps - f^{eps/2}||_{F01}(T) along eps_list and the slope against eps."""
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    if eps.size < 3:
        raise ValueError("eps_list needs at least three values")
    if np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    quad = quad or QuadratureScheme()
    finals = {}

    def final(e):
        if e not in finals:
            st = replace(stepper, mollifier_eps=float(e), sample_dt=0.0)
            finals[e] = _evolve(mollified_initial(f0, e).replace(time=0.0), params, st, quad)
        return finals[e]

    diffs = np.array([wiener_norm(final(e) - final(e / 2), 0.0, 0.0, 0.0) for e in eps])
    slope = float(np.polyfit(np.log(eps), np.log(diffs), 1)[0])
    monotone = bool(np.all(np.diff(diffs) < 0))
    return MollifierReport(eps, diffs, slope, monotone)
