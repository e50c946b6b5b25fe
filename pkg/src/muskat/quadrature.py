"""Lattice quadrature for principal-value integrals over R^d of periodic data.

An integral  I(alpha) = p.v. int_{R^d} G(alpha, beta) dbeta  is split with a
smooth radial cutoff chi(|beta|/R), R = M*L/2:

* near field  int chi G: trapezoid sum over the lattice beta = h*j, j != 0,
  with the removable singularity at beta = 0 handled per dimension
  (1D: the analytic limit of G is added as the j = 0 node; 2D: odd leading
  parts cancel between +beta and -beta, and the first-order punctured-lattice
  error is removed with square-lattice zeta constants);
* far field  int (1-chi) G: for the flat part of each kernel the integral is
  a Fourier multiplier, evaluated exactly here; higher-order remainders decay
  like |beta|^-4 and are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import special

from .spectral import Lattice

RHO0 = 0.5  # chi = 1 on [0, RHO0*R], smooth transition to 0 at R
N_THETA = 64
N_HARMONICS = 14
TAYLOR_STEP = 1e-4  # in units of h
_BATCH_ELEMENTS = 1 << 21


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def cutoff(rho):
    """chi(rho): 1 for rho <= RHO0, 0 for rho >= 1, C-infinity in between."""
    return 1.0 - _smoothstep((np.asarray(rho, dtype=float) - RHO0) / (1.0 - RHO0))


@lru_cache(maxsize=1)
def zeta_constants(radius: int = 96) -> np.ndarray:
    """Z_p = lim [int - sum'] of chi cos(4 p theta)/|x| over the unit square lattice.

    Punctured trapezoid sums of a(theta)/|beta| (times a smooth factor equal
    to 1 at the origin) undershoot the integral by h * sum_p Z_p c_p, where
    c_p are the cos(4 p theta) coefficients of a.  Other harmonics give zero
    by the symmetries of the square lattice.
    """
    j = np.arange(-radius - 1, radius + 2)
    j1, j2 = np.meshgrid(j, j, indexing="ij")
    r = np.hypot(j1, j2)
    m = r > 0
    th = np.arctan2(j2[m], j1[m])
    w = cutoff(r[m] / radius) / r[m]
    # int_0^R chi(r/R) dr by Gauss-Legendre on the transition
    x, wx = np.polynomial.legendre.leggauss(200)
    t = 0.5 * (x + 1) * (1 - RHO0) + RHO0
    radial = radius * (RHO0 + 0.5 * (1 - RHO0) * np.sum(wx * cutoff(t)))
    out = np.empty(N_HARMONICS)
    out[0] = 2 * np.pi * radial - np.sum(w)
    for p in range(1, N_HARMONICS):
        out[p] = -np.sum(w * np.cos(4 * p * th))
    return out


@dataclass(frozen=True)
class Stencil:
    lattice: Lattice
    window_periods: int = 1

    @property
    def radius(self) -> float:
        return self.window_periods * self.lattice.period / 2

    @cached_property
    def _geometry(self):
        lat = self.lattice
        n = self.window_periods * lat.modes // 2
        j = np.arange(-n, n + 1)
        if lat.dims == 1:
            offs = j[j != 0][:, None]
        else:
            j1, j2 = np.meshgrid(j, j, indexing="ij")
            offs = np.stack([j1.ravel(), j2.ravel()], axis=1)
            offs = offs[np.any(offs != 0, axis=1)]
        h = lat.spacing
        r = h * np.sqrt(np.sum(offs.astype(float) ** 2, axis=1))
        keep = r < self.radius
        offs, r = offs[keep], r[keep]
        w = h**lat.dims * cutoff(r / self.radius)
        keep = w > 0
        return offs[keep], r[keep], w[keep]

    @property
    def offsets(self) -> np.ndarray:
        return self._geometry[0]

    @property
    def r(self) -> np.ndarray:
        return self._geometry[1]

    @property
    def weights(self) -> np.ndarray:
        return self._geometry[2]

    @property
    def size(self) -> int:
        return len(self.weights)

    def source_index(self, start: int, stop: int) -> np.ndarray:
        """Flat source indices (alpha - beta) for offsets[start:stop], shape (b, N^d)."""
        lat = self.lattice
        n = lat.modes
        o = self.offsets[start:stop]
        i = np.arange(n)
        if lat.dims == 1:
            return (i[None, :] - o[:, 0:1]) % n
        i1 = (i[None, :, None] - o[:, 0, None, None]) % n
        i2 = (i[None, None, :] - o[:, 1, None, None]) % n
        return (i1 * n + i2).reshape(len(o), n * n)

    def batches(self):
        p = self.lattice.modes**self.lattice.dims
        step = max(1, _BATCH_ELEMENTS // p)
        for s in range(0, self.size, step):
            yield s, min(s + step, self.size)

    def beta(self, start: int, stop: int) -> list[np.ndarray]:
        h = self.lattice.spacing
        return [h * self.offsets[start:stop, i : i + 1].astype(float) for i in range(self.lattice.dims)]


@lru_cache(maxsize=32)
def get_stencil(lattice: Lattice, window_periods: int) -> Stencil:
    return Stencil(lattice, int(window_periods))


class LatticeContext:
    """Kernel evaluation context on a batch of lattice offsets."""

    def __init__(self, stencil: Stencil, fields: dict, start: int, stop: int):
        self.dims = stencil.lattice.dims
        self.beta = stencil.beta(start, stop)
        self.r = stencil.r[start:stop, None]
        self.u = [b / self.r for b in self.beta]
        self._fields = fields
        self._idx = stencil.source_index(start, stop)
        self._cache = {}

    def a(self, name: str) -> np.ndarray:
        return self._fields[name].reshape(1, -1)

    def s(self, name: str) -> np.ndarray:
        v = self._cache.get(name)
        if v is None:
            v = self._fields[name].ravel()[self._idx]
            self._cache[name] = v
        return v


class TaylorContext:
    """Kernel evaluation at beta = +-rho*u(theta) using local Taylor models of the fields."""

    def __init__(self, lattice: Lattice, fields: dict, rho: float, thetas: np.ndarray, grads=None):
        self.dims = 2
        c, s = np.cos(thetas), np.sin(thetas)
        u1 = np.concatenate([c, -c])[:, None]
        u2 = np.concatenate([s, -s])[:, None]
        self.u = [u1, u2]
        self.beta = [rho * u1, rho * u2]
        self.r = np.full_like(u1, rho)
        self._lat = lattice
        self._fields = fields
        self._grads = grads or {}
        self._cache = {}

    def a(self, name: str) -> np.ndarray:
        return self._fields[name].reshape(1, -1)

    def s(self, name: str) -> np.ndarray:
        v = self._cache.get(name)
        if v is not None:
            return v
        val = self._fields[name]
        b1, b2 = self.beta
        g1, g2 = self._grads[name] if name in self._grads else self._lat.grad(val)
        v = val.reshape(1, -1) - b1 * g1.reshape(1, -1) - b2 * g2.reshape(1, -1)
        if name == "f":
            h = self._lat.hessian(val)
            v = v + 0.5 * (
                b1 * b1 * h[0][0].reshape(1, -1)
                + 2 * b1 * b2 * h[0][1].reshape(1, -1)
                + b2 * b2 * h[1][1].reshape(1, -1)
            )
        self._cache[name] = v
        return v


def _as_tuple(x):
    return x if isinstance(x, tuple) else (x,)


def near_sum(stencil: Stencil, kernel, fields: dict) -> tuple[np.ndarray, ...]:
    """sum_j w_j G(beta_j) at every target point (fixed summation order)."""
    acc = None
    w = stencil.weights
    for start, stop in stencil.batches():
        ctx = LatticeContext(stencil, fields, start, stop)
        vals = _as_tuple(kernel(ctx))
        ws = w[start:stop, None]
        part = [np.sum(ws * v, axis=0) for v in vals]
        acc = part if acc is None else [a + p for a, p in zip(acc, part)]
    shape = stencil.lattice.shape
    return tuple(a.reshape(shape) for a in acc)


def lattice_correction(lattice: Lattice, kernel, fields: dict, grads=None) -> tuple[np.ndarray, ...]:
    """First-order punctured-lattice correction h * sum_p Z_p c_p (2D only).

    ``grads`` optionally prescribes the gradient used in a field's Taylor model.
    """
    h = lattice.spacing
    rho = TAYLOR_STEP * h
    thetas = np.pi * np.arange(N_THETA) / N_THETA
    ctx = TaylorContext(lattice, fields, rho, thetas, grads)
    z = zeta_constants()
    cosm = np.cos(4 * np.outer(np.arange(N_HARMONICS), thetas))
    coef = np.full(N_HARMONICS, 2.0 / N_THETA)
    coef[0] = 1.0 / N_THETA
    proj = ((z * coef)[:, None] * cosm).sum(axis=0)  # c_p extraction folded with Z_p
    out = []
    for g in _as_tuple(kernel(ctx)):
        # 1/r coefficient of the part even in beta
        a1 = rho * 0.5 * (g[:N_THETA] + g[N_THETA:])
        out.append((h * (proj @ a1)).reshape(lattice.shape))
    return tuple(out)


# ---- far-field multipliers ---------------------------------------------------------

def _gauss_transition(radius: float, phase_max: float):
    """Composite 16-point Gauss-Legendre nodes/weights for (1 - chi) on [RHO0 R, R]."""
    panels = max(8, int(np.ceil(phase_max / 2)))
    x, w = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(RHO0 * radius, radius, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wr = (half[:, None] * w[None, :]).ravel()
    return r, wr * (1.0 - cutoff(r / radius))


def _tail_1d(xi: np.ndarray, radius: float, p: int, kind: str) -> np.ndarray:
    """int_R^inf cos(xi b) b^-p db (kind 'c') or sin(...) (kind 's'), xi >= 0."""
    pos = xi > 0
    a = np.where(pos, xi * radius, 1.0)
    si, ci = special.sici(a)
    ic = np.where(pos, -ci, 0.0)
    is_ = np.where(pos, np.pi / 2 - si, 0.0)
    for q in range(2, p + 1):
        c_prev, s_prev = ic, is_
        ic = radius ** (1 - q) * np.cos(a) / (q - 1) - xi / (q - 1) * s_prev
        is_ = radius ** (1 - q) * np.sin(a) / (q - 1) + xi / (q - 1) * c_prev
    # xi = 0: only the cosine integral survives
    if kind == "c":
        return np.where(pos, ic, radius ** (1 - p) / (p - 1) if p > 1 else np.inf)
    return np.where(pos, is_, 0.0)


def _int_j1_over_s(a: np.ndarray) -> np.ndarray:
    """int_a^inf J1(s)/s ds."""
    # int_0^a J0 through Struve functions; scipy's itj0y0 loses all accuracy for a >~ 20
    j0, j1 = special.j0(a), special.j1(a)
    ij0 = a * j0 + 0.5 * np.pi * a * (j1 * special.struve(0, a) - j0 * special.struve(1, a))
    return 1.0 - (ij0 - j1)


def _far_radial(lattice: Lattice, radius: float, kind: str) -> np.ndarray:
    """Radial far-field integral on the distinct |xi| values of a 2D lattice.

    kind 'E3': int (1-chi) r^-2 J0(|xi| r) dr ;  kind 'O2': int (1-chi) r^-1 J1(|xi| r) dr
    """
    axi = lattice.absxi
    vals, inv = np.unique(axi, return_inverse=True)
    r, w = _gauss_transition(radius, vals.max() * radius)
    out = np.empty_like(vals)
    step = max(1, _BATCH_ELEMENTS // len(r))
    for s in range(0, len(vals), step):
        v = vals[s : s + step, None]
        if kind == "E3":
            trans = np.sum(w * special.j0(v * r) / r**2, axis=1)
        else:
            trans = np.sum(w * special.j1(v * r) / r, axis=1)
        out[s : s + step] = trans
    a = vals * radius
    pos = vals > 0
    if kind == "E3":
        aa = np.where(pos, a, 1.0)
        tail = np.where(pos, vals * (special.j0(aa) / aa - _int_j1_over_s(aa)), 1.0 / radius)
    else:
        tail = np.where(pos, _int_j1_over_s(np.where(pos, a, 1.0)), 0.0)
    out = out + tail
    return out[inv].reshape(axi.shape)


@lru_cache(maxsize=64)
def far_symbols(lattice: Lattice, window_periods: int) -> dict:
    """Multipliers of g -> int (1-chi(|beta|/R)) K(beta) g(alpha - beta) dbeta.

    1D keys: 'E2' (K = 1/beta^2), 'O1' (1/beta), 'O3' (1/beta^3).
    2D keys: 'E3' (1/|beta|^3), 'O1', 'O2' (beta_j/|beta|^3).
    """
    radius = window_periods * lattice.period / 2
    out = {}
    if lattice.dims == 1:
        xi = lattice.xi[0]
        ax = np.abs(xi)
        r, w = _gauss_transition(radius, ax.max() * radius)
        arg = ax[:, None] * r[None, :]
        cos_t = lambda p: np.sum(w * np.cos(arg) / r**p, axis=1)
        sin_t = lambda p: np.sum(w * np.sin(arg) / r**p, axis=1)
        sgn = np.sign(xi)
        out["E2"] = 2 * (cos_t(2) + _tail_1d(ax, radius, 2, "c"))
        out["O1"] = -2j * sgn * (sin_t(1) + _tail_1d(ax, radius, 1, "s"))
        out["O3"] = -2j * sgn * (sin_t(3) + _tail_1d(ax, radius, 3, "s"))
    else:
        e3 = _far_radial(lattice, radius, "E3")
        o2 = _far_radial(lattice, radius, "O2")
        out["E3"] = 2 * np.pi * e3
        axs = lattice.absxi.copy()
        axs.flat[0] = 1.0
        for i in (1, 2):
            out[f"O{i}"] = -2j * np.pi * lattice.xi_odd[i - 1] / axs * o2
    for v in out.values():
        v.setflags(write=False)
    return out


class FarField:
    """Applies the far-field multipliers to real fields."""

    def __init__(self, lattice: Lattice, window_periods: int):
        self.lattice = lattice
        self.sym = far_symbols(lattice, window_periods)

    def __call__(self, key: str, values: np.ndarray) -> np.ndarray:
        return self.lattice.multiply(values, self.sym[key])
