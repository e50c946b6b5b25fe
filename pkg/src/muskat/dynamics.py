"""Right-hand side of the contour equation and integrating-factor RK4 time stepping.

    f_t = -A_rho Lambda f + N1 + N2 (+ N3 on two-dimensional interfaces)

N1 = (A_mu/2) Lambda D(Omega) is spectral; N2 and N3 are quadratures from
:mod:`muskat.interface_ops`.  The stiff linear part is integrated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import constants as cst
from .constants import FluidParams
from .errors import (
    BlowUpDetected,
    InsufficientDecades,
    InvalidDomain,
    NoConvergence,
    SlopeTooLarge,
    WeightOverflow,
)
from .interface_ops import (
    DoubleLayer,
    PotentialJump,
    QuadratureScheme,
    n2_term,
    n3_term,
    solve_potential_jump,
    vorticity,
)
from .record import COLUMNS, TrajectoryRecord
from .spectral import (
    SpectralInterface,
    field_wiener,
    field_roundoff,
    l2_norm,
    sobolev_norm,
    strip_estimate,
    wiener_norm,
)


@dataclass
class RhsBreakdown:
    linear: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    n3: np.ndarray | None
    total: np.ndarray
    potential: PotentialJump | None = None
    d_omega: np.ndarray | None = None


@dataclass(frozen=True)
class StepperConfig:
    dt_max: float = 0.01
    cfl_c: float = 0.25
    t_end: float = 1.0
    mollifier_eps: float = 0.0
    blowup_threshold: float = 1.0
    mollifier_linear: str = "half"
    nonlinear: bool = True
    sample_dt: float = 0.0
    tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        for name in ("dt_max", "cfl_c", "blowup_threshold", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.t_end < 0 or self.mollifier_eps < 0 or self.sample_dt < 0:
            raise ValueError("t_end, mollifier_eps and sample_dt must be nonnegative")
        if self.mollifier_linear not in ("half", "full"):
            raise ValueError("mollifier_linear must be 'half' or 'full'")


def _hermitian(c: np.ndarray) -> np.ndarray:
    axes = tuple(range(c.ndim))
    flipped = np.conj(np.roll(np.flip(c, axes), 1, axis=axes))
    return 0.5 * (c + flipped)


def _finish(lat, c: np.ndarray, mask: np.ndarray) -> np.ndarray:
    c = _hermitian(c) * mask
    c.flat[0] = 0.0
    return c


def rhs(
    f: SpectralInterface,
    params: FluidParams,
    quad: QuadratureScheme | None = None,
    nonlinear: bool = True,
    want_d: bool = False,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> RhsBreakdown:
    """Spectral breakdown of f_t at the state f."""
    quad = quad or QuadratureScheme()
    lat = f.lattice
    linear = -params.a_rho * lat.absxi * f.coeffs
    zeros = np.zeros(lat.shape, complex)
    n3 = zeros.copy() if f.dims == 2 else None
    if not nonlinear:
        return RhsBreakdown(linear, zeros.copy(), zeros.copy(), n3, linear.copy())
    pj = solve_potential_jump(f, params, quad, tol, max_iter)
    d = None
    if params.a_mu != 0 or want_d:
        d = DoubleLayer(f, quad)(pj.field)
    mask = lat.dealias_mask(quad.dealias_fraction)
    n1 = zeros.copy()
    if params.a_mu != 0:
        n1 = _finish(lat, 0.5 * params.a_mu * lat.absxi * lat.fft(d), mask)
    n2 = _finish(lat, lat.fft(n2_term(f, pj.field, quad)), mask)
    total = linear + n1 + n2
    if f.dims == 2 and params.a_mu != 0:
        n3 = _finish(lat, lat.fft(n3_term(f, d, params.a_mu, quad)), mask)
        total = total + n3
    if not np.all(np.isfinite(total)):
        raise BlowUpDetected(f.time, float("nan"))
    return RhsBreakdown(linear, n1, n2, n3, total, pj, d)


def mollifier_symbol(f: SpectralInterface, eps: float) -> np.ndarray:
    """Heat-kernel multiplier exp(-4 pi^2 eps |xi|^2)."""
    return np.exp(-4 * np.pi**2 * eps * f.lattice.absxi**2)


def linear_symbol(f: SpectralInterface, params: FluidParams, eps: float = 0.0, mode: str = "half") -> np.ndarray:
    """lambda(xi) of the mollified system, f_t = -lambda f + nonlinear."""
    c = 0.5 if mode == "half" else 1.0
    return c * params.a_rho * f.lattice.absxi * mollifier_symbol(f, eps) ** 2


def mollified_rhs(
    f: SpectralInterface,
    params: FluidParams,
    eps: float,
    quad: QuadratureScheme | None = None,
    linear_mode: str = "half",
    nonlinear: bool = True,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> RhsBreakdown:
    """-(c A_rho) Lambda(z^2 f) + z N(z^2 f), z the heat-kernel multiplier, c = 1/2 or 1."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    z = mollifier_symbol(f, eps)
    g = f.replace(z * z * f.coeffs)
    inner = rhs(g, params, quad, nonlinear, tol=tol, max_iter=max_iter)
    linear = -linear_symbol(f, params, eps, linear_mode) * f.coeffs
    n1, n2 = z * inner.n1, z * inner.n2
    n3 = None if inner.n3 is None else z * inner.n3
    total = linear + n1 + n2 + (0 if n3 is None else n3)
    return RhsBreakdown(linear, n1, n2, n3, total, inner.potential, inner.d_omega)


class _System:
    """Binds the evolution law selected by a stepper configuration."""

    def __init__(self, params: FluidParams, stepper: StepperConfig, quad: QuadratureScheme):
        self.params, self.stepper, self.quad = params, stepper, quad

    def symbol(self, f: SpectralInterface) -> np.ndarray:
        eps = self.stepper.mollifier_eps
        if eps == 0:
            return self.params.a_rho * f.lattice.absxi
        return linear_symbol(f, self.params, eps, self.stepper.mollifier_linear)

    def breakdown(self, f: SpectralInterface, want_d: bool = False) -> RhsBreakdown:
        s = self.stepper
        if s.mollifier_eps == 0:
            return rhs(f, self.params, self.quad, s.nonlinear, want_d, s.tol, s.max_iter)
        return mollified_rhs(
            f, self.params, s.mollifier_eps, self.quad, s.mollifier_linear, s.nonlinear, s.tol, s.max_iter
        )

    def nonlinear(self, f: SpectralInterface, bd: RhsBreakdown | None = None) -> np.ndarray:
        bd = bd or self.breakdown(f)
        return bd.total - bd.linear


def choose_dt(f: SpectralInterface, stepper: StepperConfig, t_stop: float) -> float:
    f21 = wiener_norm(f, 2.0, 0.0, 0.0)
    dt = stepper.dt_max
    if f21 > 0:
        dt = min(dt, stepper.cfl_c / f21)
    return min(dt, t_stop - f.time)


def step(
    f: SpectralInterface,
    params: FluidParams,
    stepper: StepperConfig,
    quad: QuadratureScheme | None = None,
    dt: float | None = None,
    first: RhsBreakdown | None = None,
) -> SpectralInterface:
    """One integrating-factor RK4 step; dt defaults to the CFL rule."""
    quad = quad or QuadratureScheme()
    sysm = _System(params, stepper, quad)
    if dt is None:
        dt = choose_dt(f, stepper, max(stepper.t_end, f.time + stepper.dt_max))
    if not dt > 0:
        raise ValueError("dt must be positive")
    c0 = f.coeffs
    e = np.exp(-0.5 * dt * sysm.symbol(f))
    t = f.time

    def at(c, tt):
        return sysm.nonlinear(f.replace(c, tt))

    try:
        k1 = sysm.nonlinear(f, first)
        k2 = at(e * (c0 + 0.5 * dt * k1), t + 0.5 * dt)
        k3 = at(e * c0 + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = at(e * e * c0 + dt * e * k3, t + dt)
    except (SlopeTooLarge, NoConvergence) as exc:
        raise BlowUpDetected(t, float("nan")) from exc
    c = e * e * c0 + dt / 6.0 * (e * e * k1 + 2.0 * e * (k2 + k3) + k4)
    c = _hermitian(c)
    c.flat[0] = 0.0
    if not np.all(np.isfinite(c)):
        raise BlowUpDetected(t + dt, float("nan"))
    out = f.replace(c, t + dt)
    x = wiener_norm(out, 1.0, 0.0, 0.0)
    if x > stepper.blowup_threshold:
        raise BlowUpDetected(t + dt, x)
    return out


# ---- trajectories ------------------------------------------------------------------

@dataclass
class RunState:
    """Everything needed to continue a run bit-for-bit."""

    f: SpectralInterface
    step: int = 0
    energy_integral: float = 0.0
    nu: float = 0.0
    sigma: float = 0.0
    last_f21_nu: float = 0.0
    extra: dict = field(default_factory=dict)


def model_of(f: SpectralInterface) -> str:
    return "2d" if f.dims == 1 else "3d"


def choose_nu(f0: SpectralInterface, params: FluidParams, nu_fraction: float) -> tuple[float, float, bool]:
    """(nu, sigma, inside) with nu = nu_fraction * sigma_model(||f0||, |A_mu|, A_rho, 0).

    sigma is the margin with the analytic weight included (sigma_0 - nu);
    inside is False when the data lie outside the stable small-data regime.
    """
    x0 = wiener_norm(f0, 1.0, 0.0, 0.0)
    try:
        s0 = cst.sigma(model_of(f0), x0, abs(params.a_mu), params.a_rho, 0.0)
    except InvalidDomain:
        return 0.0, 0.0, False
    if not s0 > 0:
        return 0.0, 0.0, False
    nu = nu_fraction * s0
    return nu, s0 - nu, True


def _safe(fn, *args, **kw) -> float:
    try:
        return float(fn(*args, **kw))
    except (WeightOverflow, InsufficientDecades):
        return float("nan")


def _hs_phys(f: SpectralInterface, s: float, nu: float) -> float:
    return math.sqrt(f.period**f.dims) * sobolev_norm(f, s, nu)


def measure(
    f: SpectralInterface,
    bd: RhsBreakdown | None,
    params: FluidParams,
    state: RunState,
) -> tuple[dict, dict, cst.BoundsReport | None]:
    """Monitor row, diagnostics row and bound report for the state f."""
    nu = state.nu
    lat = f.lattice
    flags = []
    f11 = wiener_norm(f, 1.0)
    row = {
        "t": f.time,
        "f11": f11,
        "f21": wiener_norm(f, 2.0),
        "f11_nu": _safe(wiener_norm, f, 1.0, nu),
        "f21_nu": _safe(wiener_norm, f, 2.0, nu),
        "l2": l2_norm(f),
        "h_half": _hs_phys(f, 0.5, 0.0),
        "energy_E": float("nan"),
        "strip_nu_hat": _safe(strip_estimate, f),
        "omega1_f01": float("nan"),
        "omega3_f01": float("nan"),
    }
    row["energy_E"] = row["f11_nu"] + state.sigma * state.energy_integral
    diag = {
        "t": f.time,
        "dt": float("nan"),
        "f01": wiener_norm(f, 0.0),
        "h1": _hs_phys(f, 1.0, 0.0),
        "h_half_nu": _safe(_hs_phys, f, 0.5, nu),
        "h1_nu": _safe(_hs_phys, f, 1.0, nu),
        "h3half_nu": _safe(_hs_phys, f, 1.5, nu),
        "l2_nu": _safe(_hs_phys, f, 0.0, nu),
        "iterations": 0,
        "contraction_ratio": float("nan"),
        "residual": float("nan"),
        "bound_max_ratio": float("nan"),
        "bounds_pass": 1,
    }
    report = None
    if bd is not None and bd.potential is not None:
        pj = bd.potential
        diag["iterations"] = pj.iterations
        diag["contraction_ratio"] = pj.contraction_ratio
        diag["residual"] = pj.residual
        w = vorticity(f, pj)
        if f.dims == 1:
            row["omega1_f01"] = field_wiener(w.omega, lat)
            row["omega3_f01"] = 0.0
        else:
            row["omega1_f01"] = field_wiener(w.omega1, lat)
            row["omega3_f01"] = field_wiener(w.omega3, lat)
        report = _bounds(f, pj, w, bd.d_omega, params, f11)
        if report is None:
            flags.append("outside_hypothesis")
        else:
            diag["bound_max_ratio"] = report.max_ratio
            diag["bounds_pass"] = int(report.passed)
            if not report.passed:
                flags.append("bounds_fail")
    if params.a_rho < 0:
        flags.append("unstable")
    row["flags"] = "|".join(flags) if flags else "ok"
    return row, diag, report


def _bounds(f, pj, w, d, params, x):
    led = cst.ledger(x, abs(params.a_mu))
    if not led.valid:
        return None
    lat = f.lattice
    om = pj.field
    norms, slack = {"f21": wiener_norm(f, 2.0, 0.0, 0.0)}, {}

    def put(key, fields, s):
        norms[key] = max(field_wiener(v, lat, s) for v in fields)
        slack[key] = max(field_roundoff(v, lat, s) for v in fields)

    put("Omega_f11", [om], 1.0)
    put("Omega_f21", [om], 2.0)
    if f.dims == 1:
        # one-dimensional interface: omega1 = dOmega, omega3 = 0, dD = D'
        put("omega1_f01", [w.omega], 0.0)
        put("omega_f11", [w.omega], 1.0)
        norms["omega3_f01"] = norms["omega3_f11"] = 0.0
        grads_d = [lat.deriv(d)] if d is not None else []
    else:
        put("omega1_f01", [w.omega1], 0.0)
        put("omega2_f01", [w.omega2], 0.0)
        put("omega3_f01", [w.omega3], 0.0)
        put("omega_f11", [w.omega1, w.omega2], 1.0)
        put("omega3_f11", [w.omega3], 1.0)
        grads_d = lat.grad(d) if d is not None else []
    if grads_d:
        put("dD_f01", grads_d, 0.0)
        put("dD_f11", grads_d, 1.0)
    return cst.vorticity_bounds(led, params.a_rho, x, norms, slack)


def run(
    f0: SpectralInterface,
    params: FluidParams,
    stepper: StepperConfig,
    quad: QuadratureScheme | None = None,
    nu_fraction: float = 0.1,
    snapshot_stride: int = 0,
    resume: RunState | None = None,
    on_sample=None,
    measure_every_step: bool = False,
) -> TrajectoryRecord:
    """Evolve to stepper.t_end, recording monitors at every sample time.

    Sample times are multiples of stepper.sample_dt (every step when 0).
    ``resume`` continues from a saved RunState without re-recording its row;
    ``on_sample(state)`` is called after each recorded row.
    """
    quad = quad or QuadratureScheme()
    sysm = _System(params, stepper, quad)
    rec = TrajectoryRecord()
    if resume is None:
        nu, sigma, inside = choose_nu(f0, params, nu_fraction)
        state = RunState(f0, 0, 0.0, nu, sigma, _safe(wiener_norm, f0, 2.0, nu), {"inside": inside})
    else:
        state = replace(resume)
    rec.metadata.update(nu=state.nu, sigma=state.sigma, inside=state.extra.get("inside", True))
    f = state.f
    bd = None
    n_samples = 0

    def record(f, bd, dt):
        nonlocal n_samples
        row, diag, report = measure(f, bd, params, state)
        diag["dt"] = dt
        if not state.extra.get("inside", True) and "outside_hypothesis" not in row["flags"]:
            row["flags"] = row["flags"] + "|outside_hypothesis" if row["flags"] != "ok" else "outside_hypothesis"
        rec.append(row, diag)
        if report is not None:
            for c in report.failures():
                rec.bound_failures.append((f.time, c.name, c.ratio))
        if snapshot_stride and n_samples % snapshot_stride == 0:
            rec.snapshots.append(f)
        n_samples += 1
        if on_sample is not None:
            on_sample(state)

    try:
        if resume is None:
            bd = sysm.breakdown(f, want_d=True) if stepper.nonlinear else None
            record(f, bd, float("nan"))
        while f.time < stepper.t_end:
            t_stop = stepper.t_end
            sample_hit = True
            if stepper.sample_dt > 0:
                nxt = (math.floor(f.time / stepper.sample_dt + 1e-9) + 1) * stepper.sample_dt
                t_stop = min(t_stop, nxt)
            dt = choose_dt(f, stepper, t_stop)
            landing = f.time + dt >= t_stop * (1 - 1e-15)
            new = step(f, params, stepper, quad, dt, bd)
            if landing:
                new = new.replace(time=t_stop)
            else:
                sample_hit = stepper.sample_dt == 0
            f21_new = _safe(wiener_norm, new, 2.0, state.nu)
            state.energy_integral += 0.5 * (new.time - f.time) * (state.last_f21_nu + f21_new)
            state.last_f21_nu = f21_new
            state.step += 1
            state.f = f = new
            if stepper.nonlinear and (sample_hit or measure_every_step):
                bd = sysm.breakdown(f, want_d=True)
            else:
                bd = None
            if sample_hit:
                record(f, bd, dt)
    except BlowUpDetected as exc:
        t_fail = float(exc.t)
        if rec.rows and not t_fail > rec.rows[-1]["t"]:
            t_fail = float(np.nextafter(rec.rows[-1]["t"], np.inf))
        row = {k: float("nan") for k in COLUMNS}
        row.update(t=t_fail, f11=exc.value, flags="blowup")
        rec.append(row, None)
        rec.metadata["blowup"] = {"t": t_fail, "value": exc.value}
    rec.metadata["final_state"] = state
    return rec
