import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muskat.errors import GridMismatch, InsufficientDecades, WeightOverflow
from muskat.spectral import (
    SpectralInterface,
    apply_lambda,
    apply_riesz,
    derivative,
    field_roundoff,
    field_wiener,
    from_grid,
    from_snapshot_dict,
    get_lattice,
    l2_norm,
    mode,
    random_interface,
    snapshot_dict,
    sobolev_norm,
    strip_estimate,
    to_grid,
    wiener_norm,
)

TWO_PI = 2 * math.pi


def alpha(n, period=TWO_PI):
    return np.arange(n) * period / n


def rand(dims, n, seed, f11=0.3, kmax=None, period=TWO_PI):
    return random_interface(dims, n, period, kmax or n // 3, f11, seed)


# ---- norms ----------------------------------------------------------------------

def test_wiener_single_mode():
    f = mode(1, 32, TWO_PI, 1, 0.3)
    assert wiener_norm(f, 1.0) == pytest.approx(0.3, rel=1e-15)


def test_wiener_two_modes_hand_sum():
    a1, a2 = 0.37, -0.11
    f = mode(1, 32, TWO_PI, 1, a1) + mode(1, 32, TWO_PI, 2, a2)
    assert wiener_norm(f, 1.0) == pytest.approx(abs(a1) + 2 * abs(a2), rel=1e-15)


def test_wiener_analytic_weight():
    f = mode(1, 32, TWO_PI, 1, 0.3)
    assert wiener_norm(f, 1.0, nu=0.1, t=1.0) == pytest.approx(0.3 * math.exp(0.1), rel=1e-15)


def test_wiener_weight_overflow():
    f = mode(1, 32, TWO_PI, 3, 0.3)
    with pytest.raises(WeightOverflow):
        wiener_norm(f, 1.0, nu=1e4, t=1.0)


def test_sobolev_single_mode_and_zero():
    f = mode(1, 32, TWO_PI, 1, 0.3)
    assert sobolev_norm(f, 0.0) == pytest.approx(0.15 * math.sqrt(2), rel=1e-15)
    assert sobolev_norm(SpectralInterface.zeros(1, 32), 1.0) == 0.0
    assert l2_norm(f) == pytest.approx(math.sqrt(TWO_PI) * 0.15 * math.sqrt(2), rel=1e-14)


@pytest.mark.parametrize("dims", [1, 2])
def test_norms_match_extended_precision_sum(dims):
    f = rand(dims, 16, 7)
    lat = f.lattice
    mp.mp.dps = 40
    ref1 = mp.mpf(0)
    ref2 = mp.mpf(0)
    for c, k in zip(f.coeffs.ravel(), lat.absxi.ravel()):
        a = mp.sqrt(mp.mpf(float(c.real)) ** 2 + mp.mpf(float(c.imag)) ** 2)
        w = mp.mpf(float(k)) ** mp.mpf("1.5") * mp.e ** (mp.mpf("0.2") * mp.mpf(float(k)))
        ref1 += a * w
        ref2 += (a * w) ** 2
    assert wiener_norm(f, 1.5, 0.2, 1.0) == pytest.approx(float(ref1), rel=1e-12)
    assert sobolev_norm(f, 1.5, 0.2, 1.0) == pytest.approx(float(mp.sqrt(ref2)), rel=1e-12)


# ---- multipliers ------------------------------------------------------------------

def test_lambda_examples():
    a = alpha(32)
    f1 = from_grid(np.cos(a))
    f2 = from_grid(np.cos(2 * a))
    np.testing.assert_allclose(to_grid(apply_lambda(f1)), np.cos(a), atol=1e-14)
    np.testing.assert_allclose(to_grid(apply_lambda(f2)), 2 * np.cos(2 * a), atol=1e-14)


@pytest.mark.parametrize("dims", [1, 2])
def test_lambda_semigroup(dims):
    f = rand(dims, 32, 3)
    lhs = apply_lambda(apply_lambda(f)).coeffs
    rhs = f.lattice.absxi ** 2 * f.coeffs
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-13 * np.abs(rhs).max())


def test_riesz_examples():
    a = alpha(32)
    f = from_grid(np.cos(a))
    np.testing.assert_allclose(to_grid(apply_riesz(f)), np.sin(a), atol=1e-14)
    z = SpectralInterface.zeros(2, 16)
    assert np.all(apply_riesz(z, 2).coeffs == 0)


def test_riesz_derivative_identity():
    f = rand(2, 32, 11)
    lhs = apply_riesz(derivative(f, 1), 1).coeffs + apply_riesz(derivative(f, 2), 2).coeffs
    rhs = apply_lambda(f).coeffs
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-13 * np.abs(rhs).max())


def test_riesz_axis_two_needs_2d():
    with pytest.raises(ValueError):
        apply_riesz(mode(1, 16, TWO_PI, 1, 1.0), 2)


def test_derivative_examples():
    a = alpha(64)
    f = from_grid(np.cos(a))
    d = to_grid(derivative(f))
    np.testing.assert_allclose(d, -np.sin(a), atol=1e-14)
    assert abs(d.mean()) < 1e-16


def test_derivative_respects_period():
    L = 3.0
    a = alpha(64, L)
    f = from_grid(np.sin(2 * np.pi * 2 * a / L), L)
    np.testing.assert_allclose(to_grid(derivative(f)), 4 * np.pi / L * np.cos(4 * np.pi * a / L), atol=1e-12)


@pytest.mark.parametrize("dims", [1, 2])
def test_grid_round_trip(dims):
    rng = np.random.default_rng(5)
    v = rng.standard_normal((32,) * dims)
    v -= v.mean()
    back = to_grid(from_grid(v))
    assert np.max(np.abs(back - v)) <= 1e-13 * np.max(np.abs(v))


def test_from_grid_rejects_non_square():
    with pytest.raises(GridMismatch):
        from_grid(np.zeros((16, 8)))


def test_mismatched_lattices():
    with pytest.raises(GridMismatch):
        mode(1, 16, TWO_PI, 1, 1.0) + mode(1, 32, TWO_PI, 1, 1.0)


def test_lattice_validation():
    with pytest.raises(ValueError):
        get_lattice(1, 12, TWO_PI)
    with pytest.raises(ValueError):
        get_lattice(3, 16, TWO_PI)


# ---- snapshots ------------------------------------------------------------------

@pytest.mark.parametrize("dims", [1, 2])
def test_snapshot_round_trip_bit_exact(dims):
    f = rand(dims, 16, 2).replace(time=0.123456789)
    text = json.dumps(snapshot_dict(f))
    g = from_snapshot_dict(json.loads(text))
    assert np.array_equal(f.coeffs, g.coeffs)
    assert g.time == f.time and g.period == f.period


def test_snapshot_row_major_order():
    f = mode(1, 8, TWO_PI, 1, 2.0, "sin")
    d = snapshot_dict(f)
    # k runs -3..4, so k=-1 sits at index 2 and k=1 at index 4
    assert d["im"][2] == pytest.approx(1.0)
    assert d["im"][4] == pytest.approx(-1.0)


# ---- strip estimate --------------------------------------------------------------

def test_strip_estimate_synthetic():
    lat = get_lattice(1, 256, TWO_PI)
    k = lat.absxi
    c = np.exp(-0.3 * k) / (1 + k**2)
    c[0] = 0.0
    f = SpectralInterface(1, TWO_PI, 256, c.astype(complex))
    assert strip_estimate(f) == pytest.approx(0.3, abs=0.02)


def test_strip_estimate_needs_decades():
    with pytest.raises(InsufficientDecades):
        strip_estimate(mode(1, 32, TWO_PI, 1, 1.0))


# ---- properties -------------------------------------------------------------------

seeds = st.integers(0, 2**31 - 1)
dims_st = st.sampled_from([1, 2])


@settings(max_examples=40, deadline=None)
@given(dims_st, seeds, seeds, st.floats(0, 2), st.floats(0, 0.5))
def test_wiener_subadditive(dims, s1, s2, s, nu):
    f, g = rand(dims, 16, s1), rand(dims, 16, s2, f11=0.7)
    lhs = wiener_norm(f + g, s, nu, 1.0)
    assert lhs <= (wiener_norm(f, s, nu, 1.0) + wiener_norm(g, s, nu, 1.0)) * (1 + 1e-14)


@settings(max_examples=40, deadline=None)
@given(dims_st, seeds, st.floats(-5, 5), st.floats(0, 2))
def test_wiener_homogeneous(dims, seed, lam, s):
    f = rand(dims, 16, seed)
    assert wiener_norm(f.scaled(lam), s) == pytest.approx(abs(lam) * wiener_norm(f, s), rel=1e-13, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(dims_st, seeds, st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 3))
def test_wiener_monotone_in_nu(dims, seed, a, b, t):
    f = rand(dims, 16, seed)
    lo, hi = sorted((a, b))
    assert wiener_norm(f, 1.0, lo, t) <= wiener_norm(f, 1.0, hi, t) * (1 + 1e-15)
    assert wiener_norm(f, 1.0) <= wiener_norm(f, 1.0, hi, t) * (1 + 1e-15)


@settings(max_examples=30, deadline=None)
@given(dims_st, seeds)
def test_operators_preserve_hermitian_and_mean(dims, seed):
    f = rand(dims, 16, seed)
    outs = [apply_lambda(f), derivative(f, 1), apply_riesz(f, 1)]
    if dims == 2:
        outs += [derivative(f, 2), apply_riesz(f, 2)]
    for g in outs:
        assert g.hermitian_defect() <= 1e-15 * max(1.0, np.abs(g.coeffs).max())
        assert g.coeffs.flat[0] == 0


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.05, 1.0), st.floats(1e-3, 1e3))
def test_strip_estimate_amplitude_invariant(seed, w, amp):
    lat = get_lattice(1, 128, TWO_PI)
    rng = np.random.default_rng(seed)
    k = lat.absxi
    c = np.exp(-w * k) * (1 + 0.1 * rng.random(k.shape))
    c[0] = 0.0
    f = SpectralInterface(1, TWO_PI, 128, c.astype(complex))
    assert strip_estimate(f.scaled(amp)) == pytest.approx(strip_estimate(f), rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([(1, 128), (2, 32)]), st.sampled_from([0.0, 1.0, 2.0]))
def test_field_roundoff_covers_grid_round_trip(seed, shape, s):
    dims, n = shape
    f = random_interface(dims, n, TWO_PI, n // 4, 1.0, seed)
    v = to_grid(f)
    exact = wiener_norm(f, s) + (abs(f.coeffs.flat[0]) if s == 0 else 0.0)
    assert abs(field_wiener(v, f.lattice, s) - exact) <= field_roundoff(v, f.lattice, s)
    assert field_roundoff(v, f.lattice, s) <= 1e-9 * exact
