import math

import numpy as np
import pytest

from muskat.constants import FluidParams, threshold
from muskat.dynamics import (
    RunState,
    StepperConfig,
    choose_nu,
    linear_symbol,
    mollified_rhs,
    mollifier_symbol,
    rhs,
    run,
    step,
)
from muskat.experiments import mollified_initial
from muskat.spectral import SpectralInterface, from_grid, mode, random_interface, wiener_norm

TWO_PI = 2 * math.pi


def f01(c, like):
    return wiener_norm(like.replace(c), 0.0)


def stable_data(n=64, a_mu=0.5, frac=0.5, seed=1, dims=1):
    model = "2d" if dims == 1 else "3d"
    return random_interface(dims, n, TWO_PI, 4, frac * threshold(a_mu, model), seed)


def advance(f, params, stepper, dt, t_end):
    while f.time < t_end - 1e-14:
        f = step(f, params, stepper, dt=min(dt, t_end - f.time))
    return f


# ---- right-hand side ----------------------------------------------------------------

@pytest.mark.parametrize("dims", [1, 2])
def test_rhs_flat(dims):
    bd = rhs(SpectralInterface.zeros(dims, 16), FluidParams(0.5))
    assert np.all(bd.total == 0)


@pytest.mark.parametrize("dims,n", [(1, 64), (2, 16)])
def test_rhs_additive_and_hermitian(dims, n):
    f = stable_data(n, dims=dims)
    bd = rhs(f, FluidParams(0.5))
    parts = bd.linear + bd.n1 + bd.n2 + (bd.n3 if bd.n3 is not None else 0)
    assert np.array_equal(bd.total, parts)
    assert f.replace(bd.total).hermitian_defect() <= 1e-15 * np.abs(bd.total).max()
    assert bd.total.flat[0] == 0


@pytest.mark.parametrize("a_mu,order", [(0.5, 2.0), (0.0, 3.0)])
def test_rhs_linearization_order(a_mu, order):
    # with equal viscosities the quadratic part cancels and the remainder is cubic
    errs = []
    for eps in (1e-4, 5e-5, 2.5e-5):
        f = mode(1, 64, TWO_PI, 1, eps) + mode(1, 64, TWO_PI, 2, 0.5 * eps, "sin")
        bd = rhs(f, FluidParams(a_mu))
        errs.append(f01(bd.total + f.lattice.absxi * f.coeffs, f))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - order) < 0.2)


@pytest.mark.parametrize("dims,n", [(1, 64), (2, 16)])
def test_rhs_antisymmetric_in_a_rho(dims, n):
    f = stable_data(n, dims=dims)
    a = rhs(f, FluidParams(0.5, 1.0)).total
    b = rhs(f, FluidParams(0.5, -1.0)).total
    assert np.max(np.abs(a + b)) <= 1e-15 * np.abs(a).max()


def test_rhs_even_parity():
    n = 64
    x = np.arange(n) * TWO_PI / n
    f = from_grid(0.05 * np.cos(x) + 0.02 * np.cos(3 * x))
    tot = rhs(f, FluidParams(0.7)).total
    assert np.max(np.abs(tot.imag)) <= 1e-14 * np.abs(tot).max()


# ---- mollified system -----------------------------------------------------------------

def test_mollified_rhs_identity_mollifier():
    f = stable_data()
    p = FluidParams(0.5)
    full = mollified_rhs(f, p, 0.0, linear_mode="full")
    base = rhs(f, p)
    np.testing.assert_allclose(full.total, base.total, rtol=0, atol=1e-15 * np.abs(base.total).max())
    half = mollified_rhs(f, p, 0.0, linear_mode="half")
    np.testing.assert_allclose(half.linear, 0.5 * base.linear, rtol=0, atol=1e-16)


def test_mollifier_symbol_bound():
    f = stable_data()
    eps = 1e-3
    z = mollifier_symbol(f, eps)
    bd = mollified_rhs(f, FluidParams(0.5), eps)
    k2 = f.lattice.absxi ** 2
    assert np.all(z <= np.exp(-4 * np.pi**2 * eps * k2) * (1 + 1e-15))
    mag_in = np.abs(rhs(f.replace(z * z * f.coeffs), FluidParams(0.5)).n2)
    assert np.all(np.abs(bd.n2) <= z * mag_in * (1 + 1e-12) + 1e-300)
    assert np.allclose(linear_symbol(f, FluidParams(0.5), eps, "half"), 0.5 * f.lattice.absxi * z**2)


def test_mollified_initial_data_rate():
    f = stable_data(256)
    errs = [wiener_norm(mollified_initial(f, e) - f, 0.0) for e in (1e-4, 5e-5, 2.5e-5)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.5)


# ---- stepping -------------------------------------------------------------------------

@pytest.mark.parametrize("dims", [1, 2])
def test_pure_linear_step_is_exact(dims):
    f = random_interface(dims, 32, TWO_PI, 8, 0.3, 2)
    st = StepperConfig(nonlinear=False, t_end=1.0)
    g = advance(f, FluidParams(0.0, 1.3), st, 0.1, 1.0)
    exact = np.exp(-1.3 * f.lattice.absxi * 1.0) * f.coeffs
    assert np.max(np.abs(g.coeffs - exact)) <= 1e-12 * np.abs(exact).max()


def test_rk4_order():
    f = stable_data(64, frac=0.5)
    p = FluidParams(0.5)
    st = StepperConfig(t_end=0.2)
    finals = [advance(f, p, st, dt, 0.2) for dt in (0.04, 0.02, 0.01, 0.005)]
    diffs = [wiener_norm(finals[i] - finals[i + 1], 0.0) for i in range(3)]
    orders = np.log2(np.array(diffs[:-1]) / np.array(diffs[1:]))
    assert np.all(np.abs(orders - 4) < 0.5)


def test_time_reversal_identity():
    f = random_interface(1, 64, TWO_PI, 6, 1e-3, 3)
    p = FluidParams(0.5)
    st = StepperConfig(dt_max=0.005)
    g = advance(f, p, st, 0.005, 0.1).replace(time=0.0)
    back = advance(g, p.flipped(), st, 0.005, 0.1)
    assert wiener_norm(back - f.replace(time=back.time), 0.0) <= 1e-6


def test_step_preserves_mean_and_symmetry():
    f = stable_data(dims=2, n=16)
    g = step(f, FluidParams(-0.5), StepperConfig(), dt=0.01)
    assert g.coeffs.flat[0] == 0
    assert g.hermitian_defect() == 0
    assert g.time == pytest.approx(0.01)


def test_resolution_robustness():
    finals = []
    for n in (32, 64, 128):
        f = random_interface(1, 32, TWO_PI, 3, 0.1, 5)
        c = np.zeros(n, complex)
        k = np.fft.fftfreq(32, 1 / 32).astype(int)
        c[k % n] = f.coeffs
        g = SpectralInterface(1, TWO_PI, n, c)
        finals.append(advance(g, FluidParams(0.5), StepperConfig(), 0.01, 0.2))

    def restrict(h):
        k = np.fft.fftfreq(32, 1 / 32).astype(int)
        return SpectralInterface(1, TWO_PI, 32, h.coeffs[k % h.modes])

    d1 = wiener_norm(restrict(finals[0]) - restrict(finals[1]), 0.0)
    d2 = wiener_norm(restrict(finals[1]) - restrict(finals[2]), 0.0)
    assert d2 < d1


# ---- runs ---------------------------------------------------------------------------

def test_run_from_flat_data():
    f0 = SpectralInterface.zeros(1, 32)
    rec = run(f0, FluidParams(0.5), StepperConfig(t_end=0.1, sample_dt=0.05))
    assert len(rec) == 3
    for r in rec.rows:
        assert r["f11"] == 0 and r["l2"] == 0 and r["energy_E"] == 0


def test_run_stable_monotone_and_bounds():
    f0 = stable_data(64, frac=0.8)
    rec = run(f0, FluidParams(0.5), StepperConfig(t_end=0.5, sample_dt=0.05))
    f11 = rec.series("f11")
    assert np.all(np.diff(f11) <= 1e-12 * f11[:-1])
    assert not rec.bound_failures
    assert all(d["bounds_pass"] == 1 for d in rec.diagnostics)
    assert np.allclose(rec.times, np.arange(11) * 0.05, atol=1e-15)
    for d in rec.diagnostics:
        assert d["contraction_ratio"] < 1


def test_run_unstable_grows_then_blows_up():
    f0 = random_interface(1, 64, TWO_PI, 4, 0.05, 0)
    rec = run(f0, FluidParams(0.0, -1.0), StepperConfig(t_end=20.0, sample_dt=0.1, blowup_threshold=0.5))
    assert rec.blew_up
    f11 = rec.series("f11")[:-1]
    assert np.all(np.diff(f11) > 0)
    assert all("unstable" in r["flags"] for r in rec.rows[:-1])
    assert rec.rows[-1]["f11"] > 0.5


def test_run_mean_stays_zero():
    f0 = stable_data(32)
    rec = run(f0, FluidParams(0.5), StepperConfig(t_end=0.2, sample_dt=0.1), snapshot_stride=1)
    assert all(s.coeffs.flat[0] == 0 for s in rec.snapshots)


def test_choose_nu():
    f0 = stable_data(64, frac=0.8)
    nu, sig, inside = choose_nu(f0, FluidParams(0.5), 0.1)
    assert inside and nu > 0 and sig == pytest.approx(9 * nu)
    big = stable_data(64, frac=1.5)
    assert choose_nu(big, FluidParams(0.5), 0.1)[2] is False


def test_run_resume_matches():
    f0 = stable_data(32)
    p = FluidParams(0.5)
    st = StepperConfig(t_end=0.4, sample_dt=0.1)
    full = run(f0, p, st)
    saved = {}

    def keep(state):
        if abs(state.f.time - 0.2) < 1e-12:
            saved["s"] = RunState(state.f, state.step, state.energy_integral, state.nu, state.sigma,
                                  state.last_f21_nu, dict(state.extra))

    run(f0, p, StepperConfig(t_end=0.2, sample_dt=0.1), on_sample=keep)
    rest = run(f0, p, st, resume=saved["s"])
    for a, b in zip(full.rows[3:], rest.rows):
        for key in ("t", "f11", "l2", "energy_E", "f21_nu"):
            assert a[key] == pytest.approx(b[key], rel=1e-12, abs=1e-15)
