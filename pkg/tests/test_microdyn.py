import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from necl.errors import ConfigurationError, DomainError
from necl.microdyn import (
    THERMAL,
    Experiment,
    SystemSpec,
    energy_flows,
    initial_states,
    integrate_full,
    reverse_experiment,
    run_ensemble,
    simulate_trajectory,
)
from necl.reservoir import PhaseSample, ReservoirSpec, SwitchingProtocol
from necl.spectral import ModeSet


def one_mode(chi=0.6, c=0.8, w=1.4, tau=10.0, M=1.0):
    return ReservoirSpec(1.0, ModeSet.single(m=M, omega=w, c=c), SwitchingProtocol.constant(chi, 0.0, tau))


def normal_mode_solution(t, y0, m, Om, M, w, g):
    """Closed-form motion of H = p^2/2m + m Om^2 x^2/2 + P^2/2M + M w^2 X^2/2 + g x X."""
    mass = np.array([m, M])
    K = np.array([[m * Om**2, g], [g, M * w**2]])
    s = 1 / np.sqrt(mass)
    lam, U = np.linalg.eigh(s[:, None] * K * s[None, :])
    nu = np.sqrt(lam)
    q0 = U.T @ (np.sqrt(mass) * y0[:2])
    v0 = U.T @ (y0[2:] / np.sqrt(mass))
    q = q0[:, None] * np.cos(nu[:, None] * t) + (v0 / nu)[:, None] * np.sin(nu[:, None] * t)
    v = -(q0 * nu)[:, None] * np.sin(nu[:, None] * t) + v0[:, None] * np.cos(nu[:, None] * t)
    pos = (U @ q) / np.sqrt(mass)[:, None]
    mom = (U @ v) * np.sqrt(mass)[:, None]
    return pos[0], mom[0]


def run_pair(dt, tau=10.0):
    sys_ = SystemSpec(mass=1.3, omega=0.9, x0=0.7, p0=-0.2)
    res = one_mode(tau=tau, M=0.8)
    bath = [PhaseSample(np.array([0.4]), np.array([0.3]))]
    rec = integrate_full(sys_, [res], bath, dt, tau, decimate=1)
    x, p = normal_mode_solution(rec.times, np.array([0.7, 0.4, -0.2, 0.3]), 1.3, 0.9, 0.8, 1.4, 0.6 * 0.8)
    return max(np.max(np.abs(rec.x - x)), np.max(np.abs(rec.p - p)))


def test_matches_normal_mode_solution():
    assert run_pair(1e-3) < 1e-6


def test_second_order_convergence():
    e1, e2 = run_pair(4e-3), run_pair(2e-3)
    assert 3.5 < e1 / e2 < 4.5


def test_uncoupled_energies_are_constant():
    sys_ = SystemSpec(omega=1.1, x0=0.5, p0=0.1)
    res = ReservoirSpec(1.0, ModeSet([1, 2], [0.7, 1.3], [0.5, 0.5]))
    rec = integrate_full(sys_, [res], [PhaseSample(np.array([0.3, -0.2]), np.array([0.1, 0.4]))], 1e-2, 5.0, decimate=1)
    assert np.ptp(rec.E_res[:, 0]) < 1e-12
    # the Strang step shadows the harmonic energy to O(dt^2)
    assert np.ptp(rec.E_S) < 1e-4
    assert np.all(np.abs(rec.dE_res) < 1e-12) and np.all(rec.work == 0)


def test_time_reversal():
    sys_ = SystemSpec(potential="quartic", omega=1.0, quartic=0.3, x0=0.5, p0=0.2)
    res = one_mode(tau=1.0)
    bath = [PhaseSample(np.array([0.4]), np.array([-0.3]))]
    fw = integrate_full(sys_, [res], bath, 1e-3, 1.0)
    f = fw.state_final
    back_bath = [PhaseSample(f["X"], -f["P"])]
    bw = integrate_full(sys_, [res], back_bath, 1e-3, 1.0, f["x"], -f["p"])
    g = bw.state_final
    assert abs(g["x"] - 0.5) < 1e-10 and abs(-g["p"] - 0.2) < 1e-10
    assert np.allclose(g["X"], [0.4], atol=1e-10) and np.allclose(-g["P"], [-0.3], atol=1e-10)


def test_hard_switching_work_is_boundary_jumps():
    sys_ = SystemSpec(x0=0.6, p0=0.0)
    res = ReservoirSpec(1.0, ModeSet([1, 1], [0.8, 1.5], [0.3, 0.5]), SwitchingProtocol.constant(0.7, 0.0, 3.0))
    X0 = np.array([0.2, -0.5])
    rec = integrate_full(sys_, [res], [PhaseSample(X0, np.array([0.1, 0.2]))], 1e-3, 3.0)
    f = rec.state_final
    jump_on = 0.7 * 0.6 * np.dot([0.3, 0.5], X0)
    jump_off = -0.7 * f["x"] * np.dot([0.3, 0.5], f["X"])
    assert rec.work[0] == pytest.approx(jump_on + jump_off, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(
    st.floats(-1, 1),
    st.floats(-1, 1),
    st.floats(0.05, 1.0),
    st.sampled_from(["harmonic", "quartic"]),
    st.booleans(),
)
def test_first_law_closes_within_drift(x0, p0, chi, pot, ramp):
    sys_ = SystemSpec(potential=pot, quartic=0.2, x0=x0, p0=p0, couplings=((0.0, 1.0, 0.2),) if pot == "quartic" else ())
    sw = SwitchingProtocol.ramp(chi, 0.0, 3.0, 0.7) if ramp else SwitchingProtocol.constant(chi, 0.0, 3.0)
    res = ReservoirSpec(1.0, ModeSet([1, 1], [0.8, 1.5], [0.3, 0.5]), sw)
    rec = integrate_full(sys_, [res], [PhaseSample(np.array([0.2, -0.5]), np.array([0.1, 0.2]))], 5e-3, 3.0)
    assert abs(rec.audit_residual) <= 10 * rec.drift + 1e-13


def test_drift_is_not_secular():
    sys_ = SystemSpec(x0=1.0)
    d = []
    for tau in (10.0, 40.0):
        res = one_mode(tau=tau)
        rec = integrate_full(sys_, [res], [PhaseSample(np.array([0.5]), np.array([0.0]))], 0.02, tau)
        d.append(rec.drift)
    assert d[1] < 2 * d[0]


def test_energy_flows_tuple():
    exp = Experiment(SystemSpec(initial=THERMAL), (one_mode(tau=2.0),), 2.0, 0.01, seed=4)
    rec = simulate_trajectory(exp, 3)
    dS, dE, W = energy_flows(rec)
    assert dS == rec.dE_S and np.array_equal(dE, rec.dE_res) and np.array_equal(W, rec.work)


def test_ensemble_matches_single_trajectories():
    modes = ModeSet([1, 1], [0.8, 1.5], [0.3, 0.5], 0.2, 0.4)
    exp = Experiment(SystemSpec(initial=THERMAL), (ReservoirSpec(1.0, modes, SwitchingProtocol.constant(1, 0, 2)),), 2.0, 0.01, seed=9)
    lin = run_ensemble(exp, 5, start=10, method="linear")
    bat = run_ensemble(exp, 5, start=10, method="batch")
    for k in range(5):
        rec = simulate_trajectory(exp, 10 + k)
        for res in (lin, bat):
            assert res.dE_S[k] == pytest.approx(rec.dE_S, abs=1e-10)
            assert res.Q[k, 0] == pytest.approx(rec.Q[0], abs=1e-10)
            assert res.work[k, 0] == pytest.approx(rec.work[0], abs=1e-10)
    assert np.isnan(lin.drift).all() and np.all(bat.drift >= 0)


def test_trajectory_reproducible_in_any_order():
    exp = Experiment(SystemSpec(initial=THERMAL), (one_mode(tau=1.0),), 1.0, 0.01, seed=11)
    a = run_ensemble(exp, 20)
    b = run_ensemble(exp, 10, start=10)
    assert np.array_equal(a.dE_S[10:], b.dE_S)


def test_equilibrium_heat_vanishes_on_average():
    sw = SwitchingProtocol.constant(0.4, 0.0, 5.0)
    res = ReservoirSpec(1.0, ModeSet([1, 1], [0.8, 1.4], [0.5, 0.4]), sw)
    exp = Experiment(SystemSpec(initial=THERMAL, beta=1.0), (res,), 5.0, 0.01, seed=3)
    q = run_ensemble(exp, 200_000).dE_res[:, 0]
    assert abs(q.mean()) < 3 * q.std() / np.sqrt(q.size)


def test_stability_limit():
    with pytest.raises(ConfigurationError):
        Experiment(SystemSpec(), (one_mode(w=30.0, tau=1.0),), 1.0, 0.01)


def test_rejects_empty_reservoirs_and_bad_grid():
    with pytest.raises(DomainError):
        Experiment(SystemSpec(), (), 1.0, 0.01)
    with pytest.raises(DomainError):
        Experiment(SystemSpec(), (one_mode(tau=1.0),), 1.0, 0.003)


def test_reverse_experiment_mirrors_protocol():
    sw = SwitchingProtocol.ramp(1.0, 0.0, 3.0, 0.5, 1.0)
    exp = Experiment(SystemSpec(initial=THERMAL), (ReservoirSpec(1.0, ModeSet.single(r=0.2), sw),), 4.0, 0.01)
    rev = reverse_experiment(exp, seed=5)
    assert rev.quench_timing == "final" and rev.seed == 5
    assert rev.reservoirs[0].switching.value(1.5) == pytest.approx(sw.value(2.5))


def test_quench_energies_recorded():
    modes = ModeSet([1, 1], [0.8, 1.5], [0.3, 0.5], [0.1, 0.3], [0.5, -0.2])
    exp = Experiment(SystemSpec(initial=THERMAL), (ReservoirSpec(1.0, modes, SwitchingProtocol.constant(1, 0, 1)),), 1.0, 0.01, seed=2)
    _, _, pre, post = initial_states(exp, [0])
    rec = simulate_trajectory(exp, 0)
    e = lambda s: np.sum(0.5 * s.p**2 / modes.m + 0.5 * modes.m * modes.omega**2 * s.x**2)
    assert rec.dE_sq[0] + rec.dE_dp[0] == pytest.approx(e(post[0]) - e(pre[0]), abs=1e-13)


def test_path_csv(tmp_path):
    exp = Experiment(SystemSpec(initial=THERMAL), (one_mode(tau=1.0),), 1.0, 0.01)
    rec = simulate_trajectory(exp, 0, decimate=10)
    rec.write_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0].startswith("t,x,p,E_S") and len(lines) == 12
