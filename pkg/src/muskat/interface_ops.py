"""Nonlocal interface operators: double layer, potential jump, vorticity, Birkhoff-Rott.

Notation: d = dimension of the interface (1 or 2), beta the integration
variable, r = |beta|, u = beta/r, Delta = (f(alpha) - f(alpha-beta))/beta in
1D and (f(alpha) - f(alpha-beta))/r in 2D.  Subscript a marks a value at
the target alpha, s a value at the source alpha - beta.

Every integral is evaluated with the split of :mod:`muskat.quadrature`:
near-field lattice sum plus the exact far-field integral of the kernel's
part that is linear in f.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quadrature as qd
from .constants import FluidParams
from .errors import GridMismatch, NoConvergence, SlopeTooLarge
from .spectral import Lattice, SpectralInterface, field_wiener, to_grid, wiener_norm

# Coefficient caches of the double layer are kept when smaller than this
_STORE_ELEMENTS = 8_000_000


@dataclass(frozen=True)
class QuadratureScheme:
    window_periods: int = 1
    singular_fill: bool = True
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if int(self.window_periods) != self.window_periods or self.window_periods < 1:
            raise ValueError("window_periods must be an integer >= 1")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must be in (0, 1]")


@dataclass
class PotentialJump:
    field: np.ndarray
    iterations: int
    contraction_ratio: float
    residual: float


@dataclass
class VorticityAmplitude:
    omega: np.ndarray | None = None
    omega1: np.ndarray | None = None
    omega2: np.ndarray | None = None
    omega3: np.ndarray | None = None

    @property
    def is_3d(self) -> bool:
        return self.omega1 is not None


def check_slope(f: SpectralInterface) -> float:
    x = wiener_norm(f, 1.0, 0.0, 0.0)
    if not x < 1.0:
        raise SlopeTooLarge(f"||f||_F11 = {x:.6g} >= 1: Delta f is not controlled")
    return x


def _check_field(f: SpectralInterface, values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape != f.lattice.shape:
        raise GridMismatch(f"field shape {v.shape} does not match lattice {f.lattice.shape}")
    return v


class _Geometry:
    """Grid samples of f and its derivatives shared by all kernels."""

    def __init__(self, f: SpectralInterface):
        lat = f.lattice
        self.lattice = lat
        self.f = to_grid(f)
        c = f.coeffs
        self.grad = [lat.ifft(1j * x * c) for x in lat.xi_odd]
        self.fields = {"f": self.f}
        for i, g in enumerate(self.grad, 1):
            self.fields[f"fx{i}"] = g
        if lat.dims == 1:
            self.fxx = lat.ifft(-lat.xi[0] ** 2 * c)


# ---- kernels ------------------------------------------------------------------
# Each kernel returns G(alpha, beta) without quadrature weights.  Limits as
# beta -> 0 (1D):
#   double layer:  Delta - f'_s ~ beta f''/2, so G -> f'' Omega / (2 pi (1 + f'^2))
#   N2:            Delta - f'_a ~ -beta f''/2, so G -> -f'' f' Omega' / (4 pi (1 + f'^2))
# In 2D every kernel is (odd)/r^2 + (even)/r + bounded; the odd part cancels
# between +beta and -beta and the even 1/r part is handled by the lattice
# correction.

def _delta(ctx):
    if ctx.dims == 1:
        return (ctx.a("f") - ctx.s("f")) / ctx.beta[0]
    return (ctx.a("f") - ctx.s("f")) / ctx.r


def _dl_coef(ctx):
    d = _delta(ctx)
    if ctx.dims == 1:
        return (d - ctx.s("fx1")) / (1 + d * d) / (np.pi * ctx.beta[0])
    u1, u2 = ctx.u
    num = d - u1 * ctx.s("fx1") - u2 * ctx.s("fx2")
    return num / ((1 + d * d) ** 1.5 * 2 * np.pi * ctx.r**2)


def _dl_kernel(ctx):
    return _dl_coef(ctx) * ctx.s("Om")


def _n2_kernel(ctx):
    d = _delta(ctx)
    if ctx.dims == 1:
        b = ctx.beta[0]
        return (d - ctx.a("fx1")) / (1 + d * d) * d * ctx.s("Omx1") / (2 * np.pi * b)
    u1, u2 = ctx.u
    p = (1 + d * d) ** -1.5
    c1 = (u1 + d * ctx.a("fx1")) * p - u1
    c2 = (u2 + d * ctx.a("fx2")) * p - u2
    return (c1 * ctx.s("Omx1") + c2 * ctx.s("Omx2")) / (4 * np.pi * ctx.r**2)


def _n3_kernel(ctx):
    # (beta . grad_perp f_a)(grad D_s . grad_perp f_s) / ((1 + Delta^2)^{3/2} r^3) / (4 pi)
    d = _delta(ctx)
    b1, b2 = ctx.beta
    lead = -b1 * ctx.a("fx2") + b2 * ctx.a("fx1")
    src = -ctx.s("Dx1") * ctx.s("fx2") + ctx.s("Dx2") * ctx.s("fx1")
    return lead * src / ((1 + d * d) ** 1.5 * 4 * np.pi * ctx.r**3)


def _br_kernel(ctx):
    d = _delta(ctx)
    u1, u2 = ctx.u
    den = -1.0 / ((1 + d * d) ** 1.5 * 4 * np.pi * ctx.r**2)
    w1, w2, w3 = ctx.s("w1"), ctx.s("w2"), ctx.s("w3")
    return (
        (u2 * w3 - d * w2) * den,
        (d * w1 - u1 * w3) * den,
        (u1 * w2 - u2 * w1) * den,
    )


def _integrate(lat: Lattice, scheme: QuadratureScheme, kernel, fields: dict, fill=None):
    """Near sum + singular handling; far field is added by the caller."""
    st = qd.get_stencil(lat, scheme.window_periods)
    out = list(qd.near_sum(st, kernel, fields))
    if scheme.singular_fill:
        if lat.dims == 1:
            if fill is not None:
                vals = fill if isinstance(fill, tuple) else (fill,)
                out = [o + lat.spacing * v for o, v in zip(out, vals)]
        else:
            corr = qd.lattice_correction(lat, kernel, fields)
            out = [o + c for o, c in zip(out, corr)]
    return out


# ---- double layer ---------------------------------------------------------------

class DoubleLayer:
    """The linear map Omega -> D(Omega) for a fixed interface f."""

    def __init__(self, f: SpectralInterface, scheme: QuadratureScheme | None = None):
        self.scheme = scheme or QuadratureScheme()
        check_slope(f)
        self.geo = _Geometry(f)
        self.lattice = f.lattice
        self.far = qd.FarField(self.lattice, self.scheme.window_periods)
        self.stencil = qd.get_stencil(self.lattice, self.scheme.window_periods)
        self._store = None
        p = self.lattice.modes**self.lattice.dims
        if self.stencil.size * p <= _STORE_ELEMENTS:
            self._store = self._coefficients()
        self._local = self._local_terms()

    def _coefficients(self):
        st = self.stencil
        out = []
        for start, stop in st.batches():
            ctx = qd.LatticeContext(st, self.geo.fields, start, stop)
            coef = st.weights[start:stop, None] * _dl_coef(ctx)
            out.append((st.source_index(start, stop), coef))
        return out

    def _local_terms(self):
        """Pointwise (A, B1, B2) with local(Omega) = A Omega + sum_j B_j d_j Omega."""
        lat = self.lattice
        if not self.scheme.singular_fill:
            return None
        g = self.geo
        if lat.dims == 1:
            return (lat.spacing * g.fxx / (2 * np.pi * (1 + g.grad[0] ** 2)),)
        one, zero = np.ones(lat.shape), np.zeros(lat.shape)
        terms = []
        for om, gr in ((one, (zero, zero)), (zero, (one, zero)), (zero, (zero, one))):
            fields = dict(g.fields, Om=om)
            terms.append(qd.lattice_correction(lat, _dl_kernel, fields, {"Om": gr})[0])
        return tuple(terms)

    def near(self, omega: np.ndarray) -> np.ndarray:
        if self._store is None:
            fields = dict(self.geo.fields, Om=omega)
            return qd.near_sum(self.stencil, _dl_kernel, fields)[0]
        flat = omega.ravel()
        acc = np.zeros(flat.size)
        for idx, coef in self._store:
            acc += np.sum(coef * flat[idx], axis=0)
        return acc.reshape(self.lattice.shape)

    def far_part(self, omega: np.ndarray) -> np.ndarray:
        g, far = self.geo, self.far
        if self.lattice.dims == 1:
            val = g.f * far("E2", omega) - far("E2", g.f * omega) - far("O1", g.grad[0] * omega)
            return val / np.pi
        val = g.f * far("E3", omega) - far("E3", g.f * omega)
        for j in (1, 2):
            val = val - far(f"O{j}", g.grad[j - 1] * omega)
        return val / (2 * np.pi)

    def __call__(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if omega.shape != self.lattice.shape:
            raise GridMismatch("omega field does not match the interface lattice")
        out = self.near(omega) + self.far_part(omega)
        if self._local is not None:
            if self.lattice.dims == 1:
                out = out + self._local[0] * omega
            else:
                g1, g2 = self.lattice.grad(omega)
                a, b1, b2 = self._local
                out = out + a * omega + b1 * g1 + b2 * g2
        return out


def double_layer(f: SpectralInterface, omega_field, scheme: QuadratureScheme | None = None) -> np.ndarray:
    """Real samples of D(Omega) for the graph f."""
    omega = _check_field(f, omega_field)
    return DoubleLayer(f, scheme)(omega)


def solve_potential_jump(
    f: SpectralInterface,
    params: FluidParams,
    scheme: QuadratureScheme | None = None,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> PotentialJump:
    """Fixed-point solve of Omega = A_mu D(Omega) - 2 A_rho f."""
    lat = f.lattice
    rhs = -2.0 * params.a_rho * to_grid(f)
    if params.a_mu == 0:
        check_slope(f)
        return PotentialJump(rhs, 1, 0.0, 0.0)
    op = DoubleLayer(f, scheme)
    omega = rhs
    residuals = []
    for it in range(1, max_iter + 1):
        new = params.a_mu * op(omega) + rhs
        res = field_wiener(new - omega, lat)
        size = field_wiener(omega, lat)
        residuals.append(res)
        omega = new
        if not np.isfinite(res):
            break
        if res < tol * (1 + size):
            return PotentialJump(omega, it, _ratio(residuals), res)
    raise NoConvergence(max_iter, residuals[-1] if residuals else float("nan"))


def _ratio(residuals: list[float]) -> float:
    pos = [r for r in residuals if r > 0]
    if len(pos) < 2:
        return 0.0
    return float((pos[-1] / pos[0]) ** (1.0 / (len(pos) - 1)))


def vorticity(f: SpectralInterface, omega_jump: PotentialJump) -> VorticityAmplitude:
    lat = f.lattice
    om = _check_field(f, omega_jump.field)
    if lat.dims == 1:
        return VorticityAmplitude(omega=lat.deriv(om, 1))
    d1, d2 = lat.grad(om)
    f1, f2 = lat.grad(to_grid(f))
    return VorticityAmplitude(omega1=d2, omega2=-d1, omega3=d2 * f1 - d1 * f2)


def birkhoff_rott(
    f: SpectralInterface, w: VorticityAmplitude, scheme: QuadratureScheme | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(BR1, BR2, BR3) on a two-dimensional interface."""
    if f.dims != 2 or not w.is_3d:
        raise ValueError("birkhoff_rott needs a two-dimensional interface")
    scheme = scheme or QuadratureScheme()
    check_slope(f)
    lat = f.lattice
    g = _Geometry(f)
    fields = dict(g.fields, w1=w.omega1, w2=w.omega2, w3=w.omega3)
    for v in (w.omega1, w.omega2, w.omega3):
        _check_field(f, v)
    br = _integrate(lat, scheme, _br_kernel, fields)
    far = qd.FarField(lat, scheme.window_periods)
    ff = g.f
    k = -1.0 / (4 * np.pi)
    br[0] = br[0] + k * (far("O2", w.omega3) - (ff * far("E3", w.omega2) - far("E3", ff * w.omega2)))
    br[1] = br[1] + k * ((ff * far("E3", w.omega1) - far("E3", ff * w.omega1)) - far("O1", w.omega3))
    br[2] = br[2] + k * (far("O1", w.omega2) - far("O2", w.omega1))
    return br[0], br[1], br[2]


# ---- nonlinear terms of the contour equation ------------------------------------

def n2_term(f: SpectralInterface, omega: np.ndarray, scheme: QuadratureScheme | None = None) -> np.ndarray:
    """N2 (real samples) for the potential jump Omega."""
    scheme = scheme or QuadratureScheme()
    check_slope(f)
    lat = f.lattice
    g = _Geometry(f)
    om_grad = lat.grad(_check_field(f, omega))
    fields = dict(g.fields)
    for i, v in enumerate(om_grad, 1):
        fields[f"Omx{i}"] = v
    far = qd.FarField(lat, scheme.window_periods)
    ff = g.f
    if lat.dims == 1:
        fx, om1 = g.grad[0], om_grad[0]
        fill = -g.fxx * fx * om1 / (4 * np.pi * (1 + fx * fx))
        near = _integrate(lat, scheme, _n2_kernel, fields, fill)[0]
        cubic = ff * ff * far("O3", om1) - 2 * ff * far("O3", ff * om1) + far("O3", ff * ff * om1)
        lin = fx * (ff * far("E2", om1) - far("E2", ff * om1))
        return near + (cubic - lin) / (2 * np.pi)
    near = _integrate(lat, scheme, _n2_kernel, fields)[0]
    tail = 0.0
    for j in (0, 1):
        tail = tail + g.grad[j] * (ff * far("E3", om_grad[j]) - far("E3", ff * om_grad[j]))
    return near + tail / (4 * np.pi)


def n3_term(
    f: SpectralInterface, d_omega: np.ndarray, a_mu: float, scheme: QuadratureScheme | None = None
) -> np.ndarray:
    """N3 on a two-dimensional interface, given D(Omega) samples."""
    scheme = scheme or QuadratureScheme()
    lat = f.lattice
    if lat.dims != 2:
        raise ValueError("N3 exists only for two-dimensional interfaces")
    if a_mu == 0:
        return np.zeros(lat.shape)
    check_slope(f)
    g = _Geometry(f)
    dx1, dx2 = lat.grad(_check_field(f, d_omega))
    fields = dict(g.fields, Dx1=dx1, Dx2=dx2)
    near = _integrate(lat, scheme, _n3_kernel, fields)[0]
    far = qd.FarField(lat, scheme.window_periods)
    perp = (-g.grad[1], g.grad[0])
    src = dx1 * perp[0] + dx2 * perp[1]
    tail = perp[0] * far("O1", src) + perp[1] * far("O2", src)
    return a_mu * (near + tail / (4 * np.pi))
