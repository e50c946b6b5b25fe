import math

import mpmath as mp
import numpy as np
import pytest

from muskat import quadrature as qd
from muskat.spectral import get_lattice

TWO_PI = 2 * math.pi


def test_cutoff_shape():
    rho = np.linspace(0, 1.2, 121)
    chi = qd.cutoff(rho)
    assert np.all(chi[rho <= qd.RHO0] == 1.0)
    assert np.all(chi[rho >= 1.0] == 0.0)
    assert np.all(np.diff(chi) <= 0)


def test_square_lattice_constant():
    # punctured-lattice defect of 1/|x| is minus the Epstein zeta value Z(1/2) = 4 zeta(1/2) beta(1/2)
    mp.mp.dps = 30
    ref = -4 * mp.zeta(0.5) * mp.dirichlet(0.5, [0, 1, 0, -1])
    assert qd.zeta_constants()[0] == pytest.approx(float(ref), rel=1e-7)


def test_harmonic_constants_match_direct_sum():
    # for p >= 1 the integral vanishes, leaving minus the cutoff lattice sum
    radius = 40
    j = np.arange(-radius, radius + 1)
    j1, j2 = np.meshgrid(j, j, indexing="ij")
    r = np.hypot(j1, j2)
    m = r > 0
    th = np.arctan2(j2[m], j1[m])
    w = qd.cutoff(r[m] / radius) / r[m]
    z = qd.zeta_constants()
    assert np.all(np.isfinite(z))
    for p in (1, 2, 5):
        assert z[p] == pytest.approx(-np.sum(w * np.cos(4 * p * th)), abs=1e-6)


@pytest.mark.parametrize("a", [0.5, 7.0, 30.0, 400.0, 5000.0])
def test_bessel_tail_integral(a):
    # int_0^a J1(s)/s ds = (a/2) 1F2(1/2; 3/2, 2; -a^2/4)
    mp.mp.dps = 40
    ref = 1 - mp.mpf(a) / 2 * mp.hyp1f2(0.5, 1.5, 2, -mp.mpf(a) ** 2 / 4)
    got = float(qd._int_j1_over_s(np.array([a]))[0])
    assert got == pytest.approx(float(ref), abs=1e-10)


def _chi(b, radius):
    return float(qd.cutoff(np.array([float(b) / radius]))[0])


def _mp_far_1d(xi, radius, p, kind):
    trig = mp.cos if kind == "c" else mp.sin
    f = lambda b: (1 - _chi(b, radius)) * trig(xi * b) / b**p
    near = mp.quad(f, mp.linspace(qd.RHO0 * radius, radius, 9))
    tail = mp.quadosc(lambda b: trig(xi * b) / b**p, [radius, mp.inf], omega=xi)
    return near + tail


@pytest.mark.parametrize("k", [1, 3, 10])
def test_far_symbols_1d(k):
    mp.mp.dps = 20
    lat = get_lattice(1, 32, TWO_PI)
    sym = qd.far_symbols(lat, 1)
    radius = lat.period / 2
    xi = lat.xi[0][k]
    assert sym["E2"][k].real == pytest.approx(2 * float(_mp_far_1d(xi, radius, 2, "c")), abs=1e-10)
    assert sym["O1"][k].imag == pytest.approx(-2 * float(_mp_far_1d(xi, radius, 1, "s")), abs=1e-10)
    assert sym["O3"][k].imag == pytest.approx(-2 * float(_mp_far_1d(xi, radius, 3, "s")), abs=1e-10)


def test_far_symbol_1d_zero_mode():
    lat = get_lattice(1, 32, TWO_PI)
    radius = lat.period / 2
    mp.mp.dps = 20
    ref = 2 * (mp.quad(lambda b: (1 - _chi(b, radius)) / b**2, mp.linspace(qd.RHO0 * radius, radius, 9)) + 1 / radius)
    sym = qd.far_symbols(lat, 1)
    assert sym["E2"][0].real == pytest.approx(float(ref), rel=1e-10)
    assert sym["O1"][0] == 0 and sym["O3"][0] == 0


@pytest.mark.parametrize("kk", [(1, 0), (2, 3), (5, 1)])
def test_far_symbols_2d(kk):
    mp.mp.dps = 20
    lat = get_lattice(2, 16, TWO_PI)
    sym = qd.far_symbols(lat, 1)
    radius = lat.period / 2
    idx = kk
    k = float(lat.absxi[idx])
    e3 = mp.quad(lambda r: (1 - _chi(r, radius)) * mp.besselj(0, k * r) / r**2,
                 mp.linspace(qd.RHO0 * radius, radius, 9))
    e3 += mp.quadosc(lambda r: mp.besselj(0, k * r) / r**2, [radius, mp.inf], omega=k)
    o2 = mp.quad(lambda r: (1 - _chi(r, radius)) * mp.besselj(1, k * r) / r,
                 mp.linspace(qd.RHO0 * radius, radius, 9))
    o2 += mp.quadosc(lambda r: mp.besselj(1, k * r) / r, [radius, mp.inf], omega=k)
    assert sym["E3"][idx].real == pytest.approx(2 * math.pi * float(e3), abs=1e-10)
    xi1 = lat.xi_odd[0][idx]
    assert sym["O1"][idx].imag == pytest.approx(-2 * math.pi * xi1 / k * float(o2), abs=1e-10)


def test_far_symbols_window_scaling():
    # the far field of M periods is the M = 1 far field of an M-times larger radius
    lat = get_lattice(1, 32, TWO_PI)
    s1 = qd.far_symbols(lat, 1)["E2"]
    s3 = qd.far_symbols(lat, 3)["E2"]
    assert np.all(np.abs(s3) < np.abs(s1))


def test_stencil_weights_symmetric():
    lat = get_lattice(2, 16, TWO_PI)
    st = qd.get_stencil(lat, 1)
    assert np.all(st.r > 0)
    key = {tuple(o): w for o, w in zip(st.offsets, st.weights)}
    for o, w in key.items():
        assert key[tuple(-np.array(o))] == w
