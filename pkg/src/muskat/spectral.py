"""Periodic Fourier representation of interface graphs.

A graph f on the torus [0, L)^d (d = 1 or 2) is stored through its Fourier
series coefficients f_hat(k), normalised so that

    f(alpha) = sum_k f_hat(k) exp(i * xi_k . alpha),   xi_k = 2*pi*k / L.

Coefficients are kept in numpy FFT order (index j holds k = j for j < N/2 and
k = j - N otherwise).  The continuum frequency xi of the whole-space theory is
realised by the lattice xi_k, so every norm below is a lattice sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import GridMismatch, InsufficientDecades, WeightOverflow

# exp() overflows just above this
_LOG_MAX = 709.0


@dataclass(frozen=True)
class Lattice:
    """Wavenumber lattice and FFT helpers for an N^d periodic grid."""

    dims: int
    modes: int
    period: float

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise ValueError("dims must be 1 or 2")
        n = self.modes
        if n < 4 or n & (n - 1):
            raise ValueError("modes must be a power of two >= 4")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.modes,) * self.dims

    @property
    def spacing(self) -> float:
        return self.period / self.modes

    @cached_property
    def kint(self) -> tuple[np.ndarray, ...]:
        k = np.fft.fftfreq(self.modes, 1.0 / self.modes)
        if self.dims == 1:
            return (k,)
        return tuple(np.meshgrid(k, k, indexing="ij"))

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        return tuple(2.0 * np.pi * k / self.period for k in self.kint)

    @cached_property
    def xi_odd(self) -> tuple[np.ndarray, ...]:
        # Odd multipliers cannot keep a real field real on the Nyquist row
        out = []
        for axis, x in enumerate(self.xi):
            x = x.copy()
            x[np.abs(self.kint[axis]) == self.modes // 2] = 0.0
            out.append(x)
        return tuple(out)

    @cached_property
    def absxi(self) -> np.ndarray:
        return np.sqrt(sum(x * x for x in self.xi))

    @cached_property
    def abskint(self) -> np.ndarray:
        return np.sqrt(sum(k * k for k in self.kint))

    @cached_property
    def grid(self) -> tuple[np.ndarray, ...]:
        a = np.arange(self.modes) * self.spacing
        if self.dims == 1:
            return (a,)
        return tuple(np.meshgrid(a, a, indexing="ij"))

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values) / self.modes**self.dims

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(coeffs * self.modes**self.dims).real

    def multiply(self, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        return self.ifft(symbol * self.fft(values))

    def deriv(self, values: np.ndarray, axis: int = 1) -> np.ndarray:
        return self.multiply(values, 1j * self.xi_odd[axis - 1])

    def grad(self, values: np.ndarray) -> list[np.ndarray]:
        c = self.fft(values)
        return [self.ifft(1j * x * c) for x in self.xi_odd]

    def hessian(self, values: np.ndarray) -> list[list[np.ndarray]]:
        c = self.fft(values)
        h = [[None] * self.dims for _ in range(self.dims)]
        for i in range(self.dims):
            for j in range(i, self.dims):
                xi = self.xi[i] if i == j else self.xi_odd[i]
                xj = self.xi[j] if i == j else self.xi_odd[j]
                h[i][j] = h[j][i] = self.ifft(-xi * xj * c)
        return h

    def lam(self, values: np.ndarray) -> np.ndarray:
        return self.multiply(values, self.absxi)

    @cached_property
    def _absxi_safe(self) -> np.ndarray:
        a = self.absxi.copy()
        a.flat[0] = 1.0
        return a

    def riesz_symbol(self, axis: int) -> np.ndarray:
        return -1j * self.xi_odd[axis - 1] / self._absxi_safe

    def riesz(self, values: np.ndarray, axis: int = 1) -> np.ndarray:
        return self.multiply(values, self.riesz_symbol(axis))

    def dealias_mask(self, fraction: float) -> np.ndarray:
        cut = fraction * self.modes / 2
        m = np.ones(self.shape, dtype=bool)
        for k in self.kint:
            m &= np.abs(k) <= cut
        return m

    def same_as(self, other: "Lattice") -> bool:
        return (self.dims, self.modes, self.period) == (other.dims, other.modes, other.period)


@lru_cache(maxsize=64)
def get_lattice(dims: int, modes: int, period: float) -> Lattice:
    return Lattice(int(dims), int(modes), float(period))


@dataclass(frozen=True, eq=False)
class SpectralInterface:
    """Fourier coefficients of a real, zero-mean periodic graph."""

    dims: int
    period: float
    modes: int
    coeffs: np.ndarray
    time: float = 0.0
    lattice: Lattice = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lat = get_lattice(self.dims, self.modes, self.period)
        object.__setattr__(self, "lattice", lat)
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != lat.shape:
            raise GridMismatch(f"coefficient shape {c.shape} does not match {lat.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite Fourier coefficients")
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, dims: int, modes: int, period: float = 2 * np.pi, time: float = 0.0):
        return cls(dims, period, modes, np.zeros((modes,) * dims, complex), time)

    def replace(self, coeffs=None, time=None) -> "SpectralInterface":
        return SpectralInterface(
            self.dims,
            self.period,
            self.modes,
            self.coeffs if coeffs is None else coeffs,
            self.time if time is None else time,
        )

    def __add__(self, other: "SpectralInterface") -> "SpectralInterface":
        _check_same(self, other)
        return self.replace(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralInterface") -> "SpectralInterface":
        _check_same(self, other)
        return self.replace(self.coeffs - other.coeffs)

    def scaled(self, a: float) -> "SpectralInterface":
        return self.replace(a * self.coeffs)

    def hermitian_defect(self) -> float:
        c = self.coeffs
        flipped = np.conj(np.roll(np.flip(c), 1, axis=tuple(range(self.dims))))
        return float(np.max(np.abs(c - flipped))) if c.size else 0.0

    def grid(self) -> np.ndarray:
        return to_grid(self)


def _check_same(a: SpectralInterface, b: SpectralInterface) -> None:
    if not a.lattice.same_as(b.lattice):
        raise GridMismatch("interfaces live on different lattices")


def to_grid(f: SpectralInterface) -> np.ndarray:
    """Real-space samples on the uniform grid alpha_j = j*L/N."""
    return f.lattice.ifft(f.coeffs)


def from_grid(values, period: float = 2 * np.pi, time: float = 0.0) -> SpectralInterface:
    """Spectrum of uniform real samples; the mean is removed."""
    v = np.asarray(values, dtype=float)
    lat = get_lattice(v.ndim, v.shape[0], period)
    if v.shape != lat.shape:
        raise GridMismatch("samples must be N or N x N")
    c = lat.fft(v)
    c.flat[0] = 0.0
    return SpectralInterface(lat.dims, lat.period, lat.modes, c, time)


@dataclass(frozen=True)
class NormSpec:
    s: float
    p: int = 1
    nu: float = 0.0
    t: float | None = None

    def evaluate(self, f: SpectralInterface) -> float:
        if self.p == 1:
            return wiener_norm(f, self.s, self.nu, self.t)
        if self.p == 2:
            return sobolev_norm(f, self.s, self.nu, self.t)
        raise ValueError("p must be 1 or 2")


def weighted_sum(
    coeffs: np.ndarray,
    lattice: Lattice,
    s: float,
    nut: float = 0.0,
    p: int = 1,
    include_zero: bool = False,
) -> float:
    """sum_k |xi|^(p s) e^(p nut |xi|) |c_k|^p over k != 0 (k = 0 optional).

    The exponent is assembled in log form first so that overflow is detected
    instead of silently producing inf.
    """
    mag = np.abs(coeffs)
    nz = mag > 0
    if not include_zero:
        nz.flat[0] = False
    if not nz.any():
        return 0.0
    a = lattice.absxi[nz]
    logw = p * nut * a
    if s != 0:
        zero_xi = a == 0
        with np.errstate(divide="ignore"):
            la = np.log(np.where(zero_xi, 1.0, a))
        logw = logw + p * s * la
        if s < 0 and zero_xi.any():
            raise ValueError("negative order with a nonzero k=0 mode")
    logt = logw + p * np.log(mag[nz])
    worst = int(np.argmax(logt))
    if logt[worst] > _LOG_MAX:
        raise WeightOverflow(float(lattice.abskint[nz][worst]), float(logw[worst]))
    return float(np.sum(np.exp(logt)))


def wiener_norm(f: SpectralInterface, s: float = 1.0, nu: float = 0.0, t: float | None = None) -> float:
    """Lattice Wiener norm sum_{k != 0} |xi|^s e^{nu t |xi|} |f_hat(k)|."""
    t = f.time if t is None else t
    return weighted_sum(f.coeffs, f.lattice, s, nu * t, 1)


def sobolev_norm(f: SpectralInterface, s: float = 1.0, nu: float = 0.0, t: float | None = None) -> float:
    """Coefficient-level homogeneous Sobolev norm with analytic weight."""
    t = f.time if t is None else t
    return math.sqrt(weighted_sum(f.coeffs, f.lattice, s, nu * t, 2))


def l2_norm(f: SpectralInterface, nu: float = 0.0, t: float | None = None) -> float:
    """Physical L^2 norm over one period cell: sqrt(L^d) times the coefficient l2 norm."""
    return math.sqrt(f.period**f.dims) * sobolev_norm(f, 0.0, nu, t)


def field_wiener(values: np.ndarray, lattice: Lattice, s: float = 0.0, nut: float = 0.0) -> float:
    """Wiener norm of real samples; s = 0 includes the mean (inhomogeneous F^{0,1})."""
    return weighted_sum(lattice.fft(values), lattice, s, nut, 1, include_zero=(s == 0))


def field_roundoff(values: np.ndarray, lattice: Lattice, s: float = 0.0) -> float:
    """Upper estimate of the FFT roundoff carried by field_wiener(values, lattice, s).

    Each transformed coefficient carries an error of about eps log2(size) max|c|;
    the weighted sum amplifies it by the total weight.
    """
    c = np.abs(lattice.fft(values))
    w = lattice.absxi ** s if s != 0 else np.ones(lattice.shape)
    if s != 0:
        w.flat[0] = 0.0
    return float(np.finfo(float).eps * math.log2(c.size) * c.max() * w.sum())


def apply_lambda(f: SpectralInterface) -> SpectralInterface:
    return f.replace(f.lattice.absxi * f.coeffs)


def apply_riesz(f: SpectralInterface, axis: int = 1) -> SpectralInterface:
    if axis > f.dims:
        raise ValueError("axis 2 needs a two-dimensional interface")
    return f.replace(f.lattice.riesz_symbol(axis) * f.coeffs)


def derivative(f: SpectralInterface, axis: int = 1) -> SpectralInterface:
    if axis > f.dims:
        raise ValueError("axis 2 needs a two-dimensional interface")
    return f.replace(1j * f.lattice.xi_odd[axis - 1] * f.coeffs)


def mode(dims: int, modes: int, period: float, k, amplitude: float, phase: str = "cos") -> SpectralInterface:
    """amplitude * cos(xi_k . alpha) (or sin) as a spectrum."""
    k = tuple(np.atleast_1d(k).astype(int))
    c = np.zeros((modes,) * dims, complex)
    pos = tuple(ki % modes for ki in k)
    neg = tuple((-ki) % modes for ki in k)
    if phase == "cos":
        c[pos] += amplitude / 2
        c[neg] += amplitude / 2
    else:
        c[pos] += amplitude / 2j
        c[neg] -= amplitude / 2j
    return SpectralInterface(dims, period, modes, c)


def hermitian_random(lattice: Lattice, rng: np.random.Generator, kmax: float, decay: float = 0.0) -> np.ndarray:
    """Random Hermitian zero-mean coefficients supported on 0 < |k| <= kmax."""
    v = rng.standard_normal(lattice.shape)
    c = lattice.fft(v)
    k = lattice.abskint
    w = np.where((k > 0) & (k <= kmax), np.exp(-decay * k), 0.0)
    return c * w


def random_interface(
    dims: int,
    modes: int,
    period: float = 2 * np.pi,
    kmax: float = 4,
    f11: float = 0.1,
    seed: int = 0,
    decay: float = 0.0,
) -> SpectralInterface:
    """Band-limited random graph rescaled to a prescribed F^{1,1} norm."""
    lat = get_lattice(dims, modes, period)
    c = hermitian_random(lat, np.random.default_rng(seed), kmax, decay)
    f = SpectralInterface(dims, period, modes, c)
    n = wiener_norm(f, 1.0)
    return f.scaled(f11 / n) if n > 0 else f


# ---- snapshot (de)serialisation -------------------------------------------------

def _row_major_index(modes: int) -> np.ndarray:
    k = np.arange(-modes // 2 + 1, modes // 2 + 1)
    return k % modes


def snapshot_dict(f: SpectralInterface) -> dict:
    idx = _row_major_index(f.modes)
    c = f.coeffs[np.ix_(*([idx] * f.dims))]
    return {
        "dims": f.dims,
        "period": float(f.period),
        "modes": f.modes,
        "time": float(f.time),
        "re": [float(x) for x in c.real.ravel()],
        "im": [float(x) for x in c.imag.ravel()],
    }


def from_snapshot_dict(d: dict) -> SpectralInterface:
    dims, modes = int(d["dims"]), int(d["modes"])
    shape = (modes,) * dims
    re = np.asarray(d["re"], dtype=float)
    im = np.asarray(d["im"], dtype=float)
    if re.size != modes**dims or im.size != modes**dims:
        raise GridMismatch("snapshot coefficient count does not match modes**dims")
    rm = (re + 1j * im).reshape(shape)
    c = np.empty(shape, complex)
    idx = _row_major_index(modes)
    c[np.ix_(*([idx] * dims))] = rm
    return SpectralInterface(dims, float(d["period"]), modes, c, float(d["time"]))


# ---- analyticity strip ---------------------------------------------------------

def shell_maxima(f: SpectralInterface) -> tuple[np.ndarray, np.ndarray]:
    """Shell index n = round(|k|) >= 1 and max |f_hat| on each shell."""
    n = np.rint(f.lattice.abskint).astype(int).ravel()
    mag = np.abs(f.coeffs).ravel()
    top = int(n.max())
    out = np.zeros(top + 1)
    np.maximum.at(out, n, mag)
    shells = np.arange(1, top + 1)
    return shells, out[1:]


def strip_estimate(f: SpectralInterface, floor: float = 1e-13, min_shells: int = 8) -> float:
    """Width nu*t of the analyticity band from the decay of shell maxima.

    Fits -log max|f_hat| = w |xi| + p log|xi| + c over shells whose maximum is
    above floor * (largest maximum); the algebraic prefactor is absorbed by p
    and w is returned.
    """
    shells, peak = shell_maxima(f)
    top = peak.max() if peak.size else 0.0
    keep = peak > floor * top if top > 0 else np.zeros_like(peak, dtype=bool)
    if keep.sum() < min_shells:
        raise InsufficientDecades(f"{int(keep.sum())} usable shells, need {min_shells}")
    xi = 2 * np.pi * shells[keep] / f.period
    y = -np.log(peak[keep] / top)
    a = np.stack([xi, np.log(xi), np.ones_like(xi)], axis=1)
    coef = np.linalg.lstsq(a, y, rcond=None)[0]
    return float(coef[0])
