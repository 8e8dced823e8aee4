import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from necl.errors import DomainError
from necl.heatstats import (
    EXCHANGED,
    TOTAL,
    CountingFields,
    as_grid,
    cumulants,
    estimate_mgf,
    sample_means,
    shift_invariance_check,
    verify_ft,
)
from necl.microdyn import THERMAL, Experiment, SystemSpec, reverse_experiment, run_ensemble
from necl.reservoir import ReservoirSpec, SwitchingProtocol
from necl.spectral import ModeSet


def two_bath(chi=1.0, r=(0.0, 0.0), L=(0.0, 0.0), betas=(1.0, 1.0), beta_S=1.0, tau=3.0, seed=0, ramp=False):
    sw = SwitchingProtocol.ramp(chi, 0.0, tau, 0.5) if ramp else SwitchingProtocol.constant(chi, 0.0, tau)
    m1 = ModeSet([1, 1], [0.7, 1.3], [0.3, 0.25], r[0], L[0])
    m2 = ModeSet([1, 1], [0.9, 1.6], [0.25, 0.3], r[1], L[1])
    return Experiment(
        SystemSpec(initial=THERMAL, beta=beta_S),
        (ReservoirSpec(betas[0], m1, sw), ReservoirSpec(betas[1], m2, sw)),
        tau,
        0.01,
        seed=seed,
    )


@pytest.fixture(scope="module")
def quenched():
    return run_ensemble(two_bath(r=(0.0, 0.3), L=(0.5, 0.0), seed=3), 50_000)


def test_origin_is_exactly_one(quenched):
    est = estimate_mgf(quenched, [[0, 0, 0], [0.1, -0.2, 0.3]])
    assert est.values[0] == 1.0 and est.stderr[0] == 0.0


def test_no_coupling_no_quench_gives_unit_mgf():
    # only the free system evolves, so the sole deviation is integrator drift
    est = estimate_mgf(two_bath(chi=0.0), [[0, 0.4, -0.7], [0, -1, 2], [0.3, 0, 0]], n=1000)
    assert np.allclose(est.values[:2], 1.0, atol=1e-12)
    assert abs(est.values[2] - 1) < 1e-6


def test_displacement_only_closed_form():
    m, w, L, beta = 1.5, 0.8, 0.6, 1.2
    modes = ModeSet.single(m=m, omega=w, c=0.3, L=L)
    exp = Experiment(SystemSpec(x0=0.0), (ReservoirSpec(beta, modes, SwitchingProtocol.off()),), 1.0, 0.01, seed=8)
    lams = np.array([-0.8, -0.3, 0.2, 0.5])
    est = estimate_mgf(exp, np.column_stack([np.zeros_like(lams), lams]), n=200_000, flavor=TOTAL)
    # dE = k (x L + L^2/2) with x ~ N(0, 1/(beta k)), k = m w^2
    k = m * w**2
    exact = np.exp(lams * k * L**2 / 2 + lams**2 * k * L**2 / (2 * beta))
    assert np.all(np.abs(est.values - exact) < 3 * est.stderr)


def test_cumulants_match_sample_means(quenched):
    h = 1e-3
    grid = [[0, 0, 0]] + [list(s * h * e) for e in np.eye(3) for s in (1, -1)]
    est = estimate_mgf(quenched, grid)
    cum = cumulants(est)
    mean, se = sample_means(quenched)
    assert np.all(np.abs(cum.first - mean) < se)
    assert np.all(cum.second > -3 * cum.second_err)


def test_cumulants_need_stencil(quenched):
    with pytest.raises(DomainError):
        cumulants(estimate_mgf(quenched, [[0, 0, 0], [0.1, 0, 0]]))


def test_first_law_on_average():
    res = run_ensemble(two_bath(betas=(0.5, 2.0), seed=5), 20_000, method="batch")
    total = res.dE_S + res.Q.sum(1) + res.dE_coupling - res.work.sum(1)
    # closes per trajectory up to the shadow-energy drift of the integrator
    assert np.all(np.abs(total) <= 10 * res.drift + 1e-12)
    assert abs(total.mean()) < 1e-3 * np.abs(res.Q).mean()


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_jensen_bound(lam):
    res = _small()
    est = estimate_mgf(res, [lam])
    mean, _ = sample_means(res)
    assert est.log_values[0] >= np.dot(lam, mean) - 1e-12


_cache = {}


def _small():
    if "r" not in _cache:
        _cache["r"] = run_ensemble(two_bath(r=(0.0, 0.3), L=(0.5, 0.0), seed=1), 5000)
    return _cache["r"]


def test_ft_at_symmetric_midpoint():
    exp = two_bath(betas=(0.7, 1.4), beta_S=1.0, seed=11)
    tab = verify_ft(exp, None, [[-0.5, -0.35, -0.7]], n=100_000)
    assert abs(tab.z[0]) < 3


def test_ft_trivial_without_coupling():
    tab = verify_ft(two_bath(chi=0.0), None, [[-0.3, -0.2, -0.4], [0.1, 0.2, -0.1]], n=500)
    assert np.allclose(tab.lhs, 1, atol=1e-6) and np.allclose(tab.rhs, 1, atol=1e-6)


def test_ft_total_flavor_with_quench():
    exp = two_bath(r=(0.0, 0.3), L=(0.5, 0.0), betas=(1.0, 0.5), seed=21)
    grid = [[-0.5, a, b] for a in (-0.7, -0.3) for b in (-0.4, -0.1)]
    tab = verify_ft(exp, None, grid, n=200_000, flavor=TOTAL)
    assert tab.pass_fraction(3.0) >= 0.75


def test_exchanged_flavor_fails_with_squeezing():
    exp = two_bath(r=(0.0, 1.0), L=(0.5, 0.0), betas=(1.0, 0.5), seed=22)
    grid = [[-0.5, a, b] for a in (-0.7, -0.3) for b in (-0.4, -0.1)]
    tab = verify_ft(exp, None, grid, n=100_000, flavor=EXCHANGED)
    assert np.max(np.abs(tab.z)) >= 5


def test_ft_needs_thermal_system():
    exp = Experiment(SystemSpec(), two_bath().reservoirs, 3.0, 0.01)
    with pytest.raises(Exception):
        verify_ft(exp, None, [[0, 0, 0]], n=10)


def test_reverse_run_uses_mirrored_grid_width(quenched):
    rev = run_ensemble(reverse_experiment(two_bath(r=(0.0, 0.3), L=(0.5, 0.0))), 100)
    assert rev.dE_sq.shape == (100, 2)


@pytest.fixture(scope="module")
def audited():
    return run_ensemble(two_bath(r=(0.0, 0.3), L=(0.5, 0.0), ramp=True, seed=6), 3000, method="batch")


class TestShift:
    def test_zero_shift_is_identity(self, audited):
        rep = shift_invariance_check(audited, [[0.1, -0.2, 0.3]], [0.0])
        assert rep.naive[0, 0] == 0.0 and rep.corrected[0, 0] == 0.0

    @pytest.mark.parametrize("flavor", [EXCHANGED, TOTAL])
    def test_corrected_within_audit(self, audited, flavor):
        rep = shift_invariance_check(audited, [[0.1, -0.2, 0.3], [0, 0, 0]], [0.2, -0.3], flavor=flavor)
        assert np.all(np.abs(rep.corrected) <= 2 * rep.audit_max + 1e-14)
        assert np.any(np.abs(rep.naive) > 1e-3)

    def test_closed_audit_per_trajectory(self, audited):
        a = audited.audit_residual
        assert np.all(np.abs(a) <= 10 * audited.drift + 1e-13)

    def test_quench_breaks_invariance_by_quench_energy(self, audited):
        total = audited.dE_S + audited.Q.sum(1)
        boundary = audited.work.sum(1) - audited.dE_coupling
        q = (audited.dE_sq + audited.dE_dp).sum(1)
        leftover = total - boundary - audited.audit_residual
        assert np.allclose(leftover, q, atol=1e-12)
        assert np.max(np.abs(q)) > 0.1


def test_counting_fields_and_grid():
    cf = CountingFields(0.1, (0.2, -0.3))
    assert as_grid([cf]).tolist() == [[0.1, 0.2, -0.3]]
    with pytest.raises(DomainError):
        as_grid([[0.1, 0.2], [0.1]])


def test_outputs(tmp_path, quenched):
    est = estimate_mgf(quenched, [[0, 0, 0], [0.1, 0.1, 0.1]])
    est.write_csv(tmp_path / "m.csv")
    est.write_json(tmp_path / "m.json")
    assert (tmp_path / "m.csv").read_text().count("\n") == 3
