import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from necl.gle import (
    HISTORY,
    RECURSION,
    KernelSet,
    dissipation_kernel,
    dissipation_kernel_continuous,
    integrate_gle,
    mean_force,
    noise_kernel,
    noise_kernel_continuous,
    noise_kernel_dt,
    sample_noise,
    simulate_trajectory_gle,
)
from necl.microdyn import THERMAL, Experiment, SystemSpec, simulate_trajectory
from necl.reservoir import PhaseSample, ReservoirSpec, SwitchingProtocol
from necl.spectral import ModeSet, SpectralDensity, discretize


def test_noise_kernel_values():
    assert noise_kernel(ModeSet.single(), 0.3, 0.3, 1.0) == pytest.approx(1.0)
    assert noise_kernel(ModeSet.single(r=math.log(2)), 0.0, 0.0, 1.0, squeezed=True) == pytest.approx(4.0)


def test_dissipation_kernel_values():
    assert dissipation_kernel(ModeSet.single(), 0.0) == 0.0
    assert dissipation_kernel(ModeSet.single(), math.pi / 2) == pytest.approx(1.0)


def test_classical_fdr():
    modes = discretize(SpectralDensity.ohmic(0.7, 1.2), 20)
    beta = 0.6
    s = np.linspace(-4, 4, 81)
    lhs = noise_kernel_dt(modes, s, 0.0, beta)
    assert np.max(np.abs(lhs + dissipation_kernel(modes, s) / beta)) < 1e-10


def test_squeezed_kernel_violates_fdr():
    modes = discretize(SpectralDensity.ohmic(0.7, 1.2), 20).with_quench(r=0.3)
    beta = 0.6
    T, T2 = np.meshgrid(np.linspace(0, 4, 21), np.linspace(0, 4, 21), indexing="ij")
    r = noise_kernel_dt(modes, T, T2, beta, squeezed=True) + dissipation_kernel(modes, T - T2) / beta
    assert np.max(np.abs(r)) > 1e-3


@given(st.lists(st.just(0.0) | st.floats(0.05, 1) | st.floats(-1, -0.05), min_size=3, max_size=3))
def test_stationary_iff_unsqueezed(rs):
    modes = ModeSet([1, 1, 1], [0.7, 1.1, 1.9], [0.4, 0.5, 0.3], rs)
    T, T2 = np.meshgrid(np.linspace(0, 3, 7), np.linspace(0, 3, 7), indexing="ij")
    K = noise_kernel(modes, T, T2, 1.0, squeezed=True)
    shifted = noise_kernel(modes, T + 0.7, T2 + 0.7, 1.0, squeezed=True)
    stationary = np.max(np.abs(K - shifted)) < 1e-12
    assert stationary == all(r == 0 for r in rs)


def test_mean_force_values():
    assert mean_force(ModeSet.single(L=0.0), 1.3) == 0.0
    assert mean_force(ModeSet.single(c=1.0, L=2.0), 0.0) == pytest.approx(-2.0)


def test_sample_noise_examples():
    t = np.linspace(0, 5, 11)
    modes = ModeSet([1, 2], [1.0, 1.5], [0.3, 0.7])
    assert np.all(sample_noise(modes, PhaseSample(np.zeros((1, 2)), np.zeros((1, 2))), t) == 0)
    xi = sample_noise(ModeSet.single(), PhaseSample([[1.0]], [[0.0]]), t)
    assert np.allclose(xi[0], np.cos(t), atol=1e-15)


def test_sample_noise_derivative():
    modes = ModeSet([1, 2], [1.0, 1.5], [0.3, 0.7])
    s = PhaseSample([[0.2, -0.4]], [[0.5, 0.1]])
    t = np.linspace(0, 3, 7)
    h = 1e-6
    _, d = sample_noise(modes, s, t, derivative=True)
    fd = (sample_noise(modes, s, t + h) - sample_noise(modes, s, t - h)) / (2 * h)
    assert np.allclose(d, fd, atol=1e-8)


def test_kernel_set_continuous_matches_discrete():
    spec = SpectralDensity.ohmic(0.5, 1.0)
    modes = discretize(spec, 128, omega_max=10.0)
    disc = KernelSet(modes, 0.8)
    cont = KernelSet(modes, 0.8, "quadrature-of-density", spec)
    s = np.array([0.0, 0.5, 2.0, 4.0])
    assert np.allclose(disc.C2(s), cont.C2(s), atol=1e-9)
    assert np.allclose(disc.C1(s), cont.C1(s), atol=1e-9)
    assert np.allclose(noise_kernel_continuous(spec, s, 0.8), cont.C2(s))
    assert np.allclose(dissipation_kernel_continuous(spec, s), cont.C1(s))


def experiment(seed, n_modes=16, tau=5.0, dt=1e-3, r=0.0, L=0.0, ramp=False):
    modes = discretize(SpectralDensity.ohmic(0.5, 1.0), n_modes, omega_max=5.0).with_quench(r=r, L=L)
    sw = SwitchingProtocol.ramp(0.8, 0.0, tau, 1.0) if ramp else SwitchingProtocol.constant(1.0, 0.0, tau)
    return Experiment(SystemSpec(initial=THERMAL), (ReservoirSpec(1.0, modes, sw),), tau, dt, seed=seed)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10**6), st.floats(-0.5, 0.5), st.floats(-1, 1), st.booleans())
def test_gle_reproduces_full_dynamics(seed, r, L, ramp):
    exp = experiment(seed, r=r, L=L, ramp=ramp, tau=3.0, dt=2e-3)
    full = simulate_trajectory(exp, 0, decimate=1)
    red = simulate_trajectory_gle(exp, 0, decimate=1)
    assert np.max(np.abs(full.x - red.x)) < 1e-9
    assert np.max(np.abs(full.p - red.p)) < 1e-9
    assert np.allclose(red.dE_res, full.dE_res, atol=1e-9)
    assert np.allclose(red.work, full.work, atol=1e-9)
    assert np.allclose(red.dE_sq + red.dE_dp, full.dE_sq + full.dE_dp, atol=1e-12)


def test_gle_keystone_64_modes():
    exp = experiment(1, n_modes=64, tau=10.0, dt=1e-3)
    full = simulate_trajectory(exp, 2, decimate=1)
    red = simulate_trajectory_gle(exp, 2, decimate=1)
    assert np.max(np.abs(full.x - red.x)) < 1e-6
    assert abs(full.dE_res[0] - red.dE_res[0]) < 1e-6


def test_history_and_recursion_agree():
    exp = experiment(4, tau=2.0, dt=1e-2)
    a = simulate_trajectory_gle(exp, 0, method=HISTORY, decimate=1)
    b = simulate_trajectory_gle(exp, 0, method=RECURSION, decimate=1)
    assert np.max(np.abs(a.x - b.x)) < 1e-11


def test_free_motion_without_noise_or_coupling():
    sys_ = SystemSpec(omega=1.3, x0=0.8, p0=0.0)
    res = ReservoirSpec(1.0, ModeSet.single(), SwitchingProtocol.off())
    n = 500
    rec = integrate_gle(sys_, [res], np.zeros(n + 1), np.zeros(n + 1), 1e-2, 5.0, decimate=1)
    # the Strang step is exact up to O(dt^2) phase error for the harmonic oscillator
    assert np.max(np.abs(rec.x - 0.8 * np.cos(1.3 * rec.times))) < 1e-3
    assert rec.dE_res[0] == 0.0
