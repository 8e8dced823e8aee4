import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from necl.errors import DomainError
from necl.gle import noise_kernel
from necl.spectral import (
    GAUSS_LEGENDRE,
    MIDPOINT,
    ModeSet,
    SpectralDensity,
    discretize,
    evaluate_J,
    evaluate_K,
    integrate_J,
    squeezed_densities,
)


def test_ohmic_value_at_cutoff():
    assert evaluate_J(SpectralDensity.ohmic(1.0, 1.0), 1.0) == pytest.approx(math.exp(-1), rel=1e-15)


@given(st.floats(0, 10))
def test_ohmic_vanishes_at_zero(eta):
    assert evaluate_J(SpectralDensity.ohmic(eta, 2.0), 0.0) == 0.0


def test_single_mode_point_weight():
    spec = SpectralDensity.single_mode(1.0, 2.0, 1.0)
    assert evaluate_J(spec, 2.0) == pytest.approx(math.pi / 4)
    assert evaluate_J(spec, 1.9) == 0.0


def test_negative_frequency_rejected():
    with pytest.raises(DomainError):
        evaluate_J(SpectralDensity.ohmic(), -0.1)


def test_tabulated_interpolates_and_vanishes_outside(tmp_path):
    f = tmp_path / "j.csv"
    f.write_text("omega,J\n0,0\n1,2\n2,0\n")
    spec = SpectralDensity.from_csv(f)
    assert evaluate_J(spec, 0.5) == pytest.approx(1.0)
    assert evaluate_J(spec, 3.0) == 0.0
    assert integrate_J(spec, 0, 2) == pytest.approx(2.0)


def test_tabulated_rejects_decreasing_frequencies():
    with pytest.raises(DomainError):
        SpectralDensity.from_table([(1, 1), (0.5, 1)])


@pytest.mark.parametrize(
    "c, L, r, expected",
    [(1.0, 2.0, 0.0, math.pi), (1.0, 0.0, 0.0, 0.0), (1.0, 2.0, math.log(2), math.pi / 4)],
)
def test_displacement_density(c, L, r, expected):
    modes = ModeSet.single(c=c, L=L, r=r, omega=1.5)
    assert evaluate_K(modes, 1.5) == pytest.approx(expected, abs=1e-15)


def test_squeezed_density_values():
    calj, dcalj = squeezed_densities(ModeSet.single(r=math.log(2)), 1.0)
    assert calj == pytest.approx(math.pi / 8)
    assert dcalj == pytest.approx(15 * math.pi / 8)


@given(st.floats(-2, 2).filter(lambda r: r != 0))
def test_squeezed_density_sign(r):
    _, d = squeezed_densities(ModeSet.single(r=r))
    n = d / squeezed_densities(ModeSet.single(r=r))[0]
    if r > 0:
        assert np.all(d > 0)
    else:
        assert np.all((-1 < n) & (n < 0))


@given(
    st.lists(st.floats(0.1, 5), min_size=1, max_size=6),
    st.floats(0.1, 3),
)
def test_unsqueezed_densities_equal_j_weights(omegas, c):
    modes = ModeSet(np.ones(len(omegas)), omegas, np.full(len(omegas), c))
    calj, dcalj = squeezed_densities(modes)
    assert np.array_equal(calj, modes.j_weights())
    assert np.all(dcalj == 0)


@pytest.mark.parametrize("count", [1, 5, 40])
def test_single_mode_discretizes_to_itself(count):
    modes = discretize(SpectralDensity.single_mode(2.0, 1.5, 0.7), count)
    assert len(modes) == 1
    assert (modes.m[0], modes.omega[0], modes.c[0]) == (2.0, 1.5, 0.7)


def test_gauss_legendre_total_weight():
    spec = SpectralDensity.ohmic(0.8, 1.3)
    modes = discretize(spec, 256, omega_max=8.0, scheme=GAUSS_LEGENDRE)
    exact, _ = integrate.quad(lambda w: 0.8 * w * math.exp(-w / 1.3), 0, 8.0)
    assert abs(modes.j_weights().sum() - exact) < 1e-6


@settings(max_examples=30)
@given(
    st.floats(0.01, 5),
    st.floats(0.2, 5),
    st.integers(1, 200),
    st.sampled_from([GAUSS_LEGENDRE, MIDPOINT]),
)
def test_discrete_density_nonnegative(eta, wc, count, scheme):
    modes = discretize(SpectralDensity.ohmic(eta, wc), count, scheme=scheme)
    assert np.all(modes.j_weights() >= 0)
    assert np.all(modes.omega > 0)


def _continuous_c2(eta, wc, wmax, beta, s):
    # (2 / (pi beta)) int_0^wmax J(w)/w cos(w s) dw with J = eta w exp(-w/wc)
    val, _ = integrate.quad(lambda w: eta * math.exp(-w / wc), 0, wmax, weight="cos", wvar=s)
    return 2.0 / (math.pi * beta) * val


def test_kernel_converges_with_mode_count():
    eta, wc, wmax, beta = 0.5, 1.0, 10.0, 0.7
    t = np.linspace(0, 5 / wc, 26)
    ref = np.array([_continuous_c2(eta, wc, wmax, beta, s) for s in t])
    errs = []
    for K in (64, 256, 1024):
        modes = discretize(SpectralDensity.ohmic(eta, wc), K, omega_max=wmax, scheme=MIDPOINT)
        errs.append(np.max(np.abs(noise_kernel(modes, t, 0.0, beta) - ref)) / np.max(np.abs(ref)))
    assert errs[0] > errs[1] > errs[2]
    # close to second order in the cell width
    assert errs[0] / errs[1] > 8 and errs[1] / errs[2] > 8


def test_gauss_legendre_kernel_is_accurate():
    modes = discretize(SpectralDensity.ohmic(0.5, 1.0), 64, omega_max=10.0)
    t = np.linspace(0, 5, 11)
    ref = np.array([_continuous_c2(0.5, 1.0, 10.0, 1.0, s) for s in t])
    assert np.max(np.abs(noise_kernel(modes, t, 0.0, 1.0) - ref)) < 1e-10


def test_with_quench_broadcasts():
    modes = discretize(SpectralDensity.ohmic(), 4).with_quench(r=0.2, L=[0, 1, 2, 3])
    assert np.all(modes.r == 0.2)
    assert modes.L.tolist() == [0, 1, 2, 3]
    assert modes.has_quench
