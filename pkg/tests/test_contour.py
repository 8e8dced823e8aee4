import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from necl import contour as ct
from necl.contour import (
    BRANCHES,
    DOWN,
    EXPECTED_REMAINDER_ORDER,
    MATSUBARA,
    MINUS,
    PLUS,
    UP,
    ContourPoint,
    GfParams,
    classical_limit_check,
    component,
    fdr_residual,
    gf,
    influence_action,
    keldysh_rotate,
    rotate,
    rotated_closed_form,
    squeezed_correction,
    squeezed_rotated,
    symmetry_residuals,
    unrotate,
)
from necl.errors import DomainError, UnsupportedError, ValidityError
from necl.reservoir import ReservoirSpec, SwitchingProtocol
from necl.spectral import ModeSet

P = GfParams(1.3, 0.8, 0.4, 0.7, tau=2.0)
P0 = GfParams(1.3, 0.8, 0.0, 0.7, tau=2.0)


def sample(p, branch, rng):
    lo, hi = sorted(ct._Geometry.of(p).interval(branch))
    return rng.uniform(lo, hi)


@pytest.mark.parametrize("p", [P, GfParams(0.9, 1.7, -0.5, 1.0, tau=3.0)])
def test_definition_matches_closed_forms(p):
    rng = np.random.default_rng(0)
    for i, j in itertools.product(BRANCHES, BRANCHES):
        for _ in range(15):
            a, b = sample(p, i, rng), sample(p, j, rng)
            assert abs(component(i, j, a, b, p) - gf(ContourPoint(i, a), ContourPoint(j, b), p)) < 1e-12


def test_kms_boundary():
    rng = np.random.default_rng(1)
    for j in BRANCHES:
        z2 = ContourPoint(j, sample(P, j, rng))
        start = gf(ContourPoint(MINUS, 0.0), z2, P)
        end = gf(ContourPoint(MATSUBARA, -P.hbar * P.beta), z2, P)
        assert abs(start - end) < 1e-12


def test_equal_time_value():
    for t in (0.0, 0.7, 1.9):
        assert component(MINUS, MINUS, t, t, P) == pytest.approx(0.5j * P.coth, abs=1e-14)


def test_junction_continuity():
    h = P.hbar * P.lam
    for t in (0.2, 1.1):
        # plus ends where down starts, down ends where matsubara starts
        assert abs(component(MINUS, DOWN, t, h, P) - component(MINUS, PLUS, t, 0.0, P)) < 1e-14
        assert abs(component(MINUS, DOWN, t, 0.0, P) - component(MINUS, MATSUBARA, t, 0.0, P)) < 1e-14
        # minus(0) and down(0) share a complex coordinate but not a contour position
        jump = component(MINUS, MINUS, t, 0.0, P) - component(MINUS, DOWN, t, 0.0, P)
        assert jump == pytest.approx(math.sin(P.omega * t), abs=1e-14)


def test_equation_of_motion_is_second_order():
    hs = np.array([2e-2, 1e-2, 5e-3])
    res = []
    for h in hs:
        g = lambda s: component(PLUS, MINUS, s, 0.4, P)
        res.append(abs((g(1.3 + h) - 2 * g(1.3) + g(1.3 - h)) / h**2 + P.omega**2 * g(1.3)))
    assert abs(np.polyfit(np.log(hs), np.log(res), 1)[0] - 2) < 0.1


def test_unit_jump_of_derivative():
    # d/dt G jumps by omega across t = t' on the forward branch
    e = 1e-9
    d = ct.component_dt(MINUS, MINUS, 0.5 + e, 0.5, P) - ct.component_dt(MINUS, MINUS, 0.5 - e, 0.5, P)
    assert d == pytest.approx(P.omega, abs=1e-7)


def test_rotated_against_closed_form():
    for t, t2 in ((0.3, 1.1), (1.4, 0.2)):
        r, c = keldysh_rotate(t, t2, P), rotated_closed_form(t, t2, P)
        assert all(abs(r[k] - c[k]) < 1e-14 for k in r)


def test_no_measurement_limit():
    t, t2 = 0.3, 1.1
    r = keldysh_rotate(t, t2, P0)
    assert abs(r["cl,cl"]) < 1e-15
    assert r["q,q"] == pytest.approx(0.5j * P0.coth * math.cos(P0.omega * (t - t2)), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False), min_size=4, max_size=4))
def test_rotation_round_trip(g):
    back = unrotate(rotate(*g))
    assert np.allclose(back, g, atol=1e-12)


def test_fdr_holds_and_printed_coefficient_fails():
    for t, t2 in ((0.3, 1.1), (1.7, 0.2)):
        assert abs(fdr_residual(t, t2, P0)) < 1e-12
        assert abs(fdr_residual(t, t2, P0, printed_coefficient=True)) > 0.1
    with pytest.raises(DomainError):
        fdr_residual(0.3, 1.1, P)


def test_symmetries():
    assert abs(symmetry_residuals(P0).probability) < 1e-14
    assert abs(symmetry_residuals(P).probability) > 1e-2
    periodic = GfParams(1.3, 0.8, 0.4, 0.7, tau=2 * math.pi / 1.3)
    assert abs(symmetry_residuals(periodic).periodic) < 1e-12
    assert abs(symmetry_residuals(P).periodic) > 1e-2


@pytest.mark.parametrize("comp", sorted(EXPECTED_REMAINDER_ORDER))
def test_classical_limit_orders(comp):
    rep = classical_limit_check(comp, 0.3, 1.1, 0.4, 0.8, omega=1.3)
    assert rep.consistent, rep


def test_squeezed_reduces_to_equilibrium():
    p = GfParams(1.3, 0.8, 0.3, 0.7, r=0.0, tau=2.0)
    z1, z2 = ContourPoint(MINUS, 0.4), ContourPoint(PLUS, 1.2)
    assert squeezed_correction(z1, z2, p) == pytest.approx(gf(z1, z2, p), abs=1e-14)


def test_squeezing_breaks_fdr():
    assert abs(fdr_residual(0.3, 1.1, GfParams(1.3, 0.8, 0.0, 0.7, r=0.05, tau=2.0))) > 1e-3


def test_squeezed_classical_kernel_second_order_in_r():
    w, b, h, t, t2 = 1.3, 0.8, 1e-3, 0.3, 1.1
    errs = []
    for r in (0.05, 0.025):
        qq = squeezed_rotated(t, t2, GfParams(w, b, 0.0, h, r=r))["q,q"]
        classical = math.exp(-2 * r) / (w**2 * b) * (
            math.cos(w * (t - t2)) + math.expm1(4 * r) * math.cos(w * t) * math.cos(w * t2)
        )
        errs.append(abs(h * qq / (1j * w) - classical))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_squeeze_guard():
    with pytest.raises(ValidityError):
        squeezed_correction(ContourPoint(MINUS, 0.1), ContourPoint(MINUS, 0.2), GfParams(1, 1, r=0.2))


def test_squeezed_track_integral_matches_quadrature():
    p = GfParams(1.3, 0.8, 0.3, 0.7, r=0.05, tau=2.0)
    g = ct._Geometry.quenched(p)
    x, wt = np.polynomial.legendre.leggauss(400)
    rng = np.random.default_rng(4)
    for b1, b2 in ((MINUS, PLUS), (DOWN, MATSUBARA), (UP, MINUS)):
        c1, c2 = sample_geo(g, b1, rng), sample_geo(g, b2, rng)
        for track in (DOWN, MATSUBARA):
            s, e = g.interval(track)
            cuts = sorted({s, e, *([c1] if b1 == track else []), *([c2] if b2 == track else [])}, reverse=s > e)
            quad = 0j
            for u0, u1 in zip(cuts[:-1], cuts[1:]):
                u = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * x
                f = g.g(b1, c1, track, u) * g.g(track, u, b2, c2)
                quad += np.sum(wt * f) * (g.z(track, u1) - g.z(track, u0)) / 2
            assert abs(ct._track_integral(g, b1, c1, b2, c2, track) - quad) < 1e-12


def sample_geo(g, branch, rng):
    lo, hi = sorted(g.interval(branch))
    return rng.uniform(lo, hi)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(BRANCHES), st.sampled_from(BRANCHES), st.floats(0, 1), st.floats(0, 1))
def test_step_function_antisymmetry(b1, b2, u1, u2):
    g = ct._Geometry.of(P)
    lo1, hi1 = sorted(g.interval(b1))
    lo2, hi2 = sorted(g.interval(b2))
    z1 = ContourPoint(b1, lo1 + u1 * (hi1 - lo1))
    z2 = ContourPoint(b2, lo2 + u2 * (hi2 - lo2))
    if ct.embed(z1, P) == ct.embed(z2, P) and b1 == b2:
        return
    assert ct.theta(z1, z2, P) + ct.theta(z2, z1, P) == 1.0


def test_branch_range_checks():
    with pytest.raises(DomainError):
        component(MINUS, MINUS, 3.0, 0.1, P)
    with pytest.raises(DomainError):
        ContourPoint("sideways", 0.0)


class TestInfluence:
    t = np.linspace(0, 2, 201)
    sw = SwitchingProtocol.ramp(1.0, 0, 2, 0.5)
    modes = ModeSet([1.0, 1.5], [1.1, 1.7], [0.4, 0.3])
    res = ReservoirSpec(0.9, modes, sw)
    x = 0.3 + 0.5 * t - 0.2 * t**2

    def test_identical_paths_give_zero(self):
        assert influence_action(self.x, self.x, self.res, 0.0, 0.5, self.t) == 0

    def test_noise_and_dissipation_kernels(self):
        t, x, hbar = self.t, self.x, 0.5
        q = 0.1 * np.cos(t)
        S = influence_action(x + q / 2, x - q / 2, self.res, 0.0, hbar, t)
        chi = self.sw.value(t)
        vq, vc = chi * q, chi * x
        w = ct._trapezoid_weights(t)
        T, T2 = np.meshgrid(t, t, indexing="ij")
        im = re = 0.0
        for m, om, c in zip(self.modes.m, self.modes.omega, self.modes.c):
            coth = 1 / math.tanh(0.5 * hbar * om * self.res.beta)
            im += c**2 / (4 * m * om) * coth * ((w * vq) @ np.cos(om * (T - T2)) @ (w * vq))
            re += c**2 / (2 * m * om) * ((w * vq) @ ((np.sign(T - T2) + 1) * np.sin(om * (T - T2))) @ (w * vc))
        assert S.real == pytest.approx(re, rel=1e-10)
        assert S.imag == pytest.approx(im, rel=1e-10)

    def test_displaced_vacuum_term(self):
        L = np.array([0.8, -0.5])
        res = ReservoirSpec(0.9, ModeSet(self.modes.m, self.modes.omega, self.modes.c, L=L), self.sw)
        lam = 0.3
        expected = np.sum(self.modes.m * self.modes.omega**2 * L**2 / 2) * (lam + lam**2 / 0.9)
        z = np.zeros_like(self.t)
        vals = [influence_action(z, z, res, lam, h, self.t) / h for h in (1e-2, 1e-3)]
        errs = [abs(v + 1j * expected) for v in vals]
        assert errs[1] < errs[0] / 50

    def test_squeezed_rejected(self):
        res = ReservoirSpec(0.9, ModeSet(self.modes.m, self.modes.omega, self.modes.c, r=0.1), self.sw)
        with pytest.raises(UnsupportedError):
            influence_action(self.x, self.x, res, 0.0, 0.5, self.t)
