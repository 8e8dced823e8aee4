"""Reduced description: noise, memory kernels and the generalized Langevin equation.

Eliminating the reservoir modes from the Hamilton equations gives

    m x'' = -V'(x) - sum_nu chi_nu V_nu'(x) [xi_nu(t) + R_nu(t)],
    R_nu(t) = -int_0^t chi_nu(s) C1_nu(t - s) V_nu(x(s)) ds,

with the free reservoir force ``xi_nu`` and the dissipation kernel
``C1(s) = sum_k c_k^2 sin(w_k s) / (m_k w_k)``. The memory integral is
discretized with trapezoid weights whose switching factor is taken at the
adjacent half-steps. These are exactly the impulses the kick-drift-kick
integrator of :mod:`necl.microdyn` hands to the bath, so for linear coupling
both descriptions agree to rounding for matched initial draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import DivergenceError, DomainError
from .microdyn import (
    INITIAL_QUENCH,
    Experiment,
    SystemSpec,
    TrajectoryRecord,
    _Layout,
    check_stability,
    initial_states,
)
from .reservoir import PhaseSample, ReservoirSpec, quench_energy
from .spectral import OHMIC, ModeSet, SpectralDensity, evaluate_J

HISTORY = "history"
RECURSION = "recursion"

MODE_SUM = "mode-sum"
QUADRATURE = "quadrature-of-density"


def noise_kernel(modes: ModeSet, t, t_prime, beta: float, squeezed: bool = False):
    """Classical noise covariance ``<xi(t) xi(t')>`` of a thermal reservoir.

    With ``squeezed=False`` this is the stationary kernel
    ``sum_k c_k^2 cos w_k (t - t') / (m_k w_k^2 beta)``. With ``squeezed=True``
    the quench of each mode enters through ``M_k = e^{-2 r_k} m_k`` and
    ``n_k = e^{4 r_k} - 1``:

        sum_k M_k c_k^2 / (m_k^2 w_k^2 beta) [cos w_k (t-t') + n_k cos w_k t cos w_k t'].

    Displacements do not enter the covariance.
    """
    t = np.asarray(t, float)[..., None]
    tp = np.asarray(t_prime, float)[..., None]
    w, m, c = modes.omega, modes.m, modes.c
    if not squeezed:
        val = (c**2 / (m * w**2 * beta) * np.cos(w * (t - tp))).sum(-1)
    else:
        M = np.exp(-2 * modes.r) * m
        n = np.expm1(4 * modes.r)
        amp = M * c**2 / (m**2 * w**2 * beta)
        val = (amp * (np.cos(w * (t - tp)) + n * np.cos(w * t) * np.cos(w * tp))).sum(-1)
    return float(val) if val.ndim == 0 else val


def noise_kernel_dt(modes: ModeSet, t, t_prime, beta: float, squeezed: bool = False):
    """Analytic derivative of :func:`noise_kernel` with respect to ``t``."""
    t = np.asarray(t, float)[..., None]
    tp = np.asarray(t_prime, float)[..., None]
    w, m, c = modes.omega, modes.m, modes.c
    if not squeezed:
        val = (-c**2 / (m * w * beta) * np.sin(w * (t - tp))).sum(-1)
    else:
        M = np.exp(-2 * modes.r) * m
        n = np.expm1(4 * modes.r)
        amp = M * c**2 / (m**2 * w * beta)
        val = (-amp * (np.sin(w * (t - tp)) + n * np.sin(w * t) * np.cos(w * tp))).sum(-1)
    return float(val) if val.ndim == 0 else val


def dissipation_kernel(modes: ModeSet, s):
    """``C1(s) = sum_k c_k^2 sin(w_k s) / (m_k w_k)``."""
    s = np.asarray(s, float)[..., None]
    val = (modes.c**2 / (modes.m * modes.omega) * np.sin(modes.omega * s)).sum(-1)
    return float(val) if val.ndim == 0 else val


def dissipation_kernel_ds(modes: ModeSet, s):
    """Derivative of :func:`dissipation_kernel`."""
    s = np.asarray(s, float)[..., None]
    val = (modes.c**2 / modes.m * np.cos(modes.omega * s)).sum(-1)
    return float(val) if val.ndim == 0 else val


def noise_kernel_continuous(spec: SpectralDensity, s, beta: float, omega_max: float | None = None):
    """``(2/pi) int_0^omega_max J(w) cos(w s) / (beta w) dw`` by adaptive quadrature."""
    wmax = omega_max or (10.0 * spec.omega_c if spec.kind == OHMIC else spec.table[-1][0])

    def one(sv):
        f = lambda w: evaluate_J(spec, w) / w if w > 0 else (spec.eta if spec.kind == OHMIC else 0.0)
        if sv == 0:
            val, _ = integrate.quad(f, 0.0, wmax, limit=400, epsabs=1e-14, epsrel=1e-12)
        else:
            val, _ = integrate.quad(f, 0.0, wmax, weight="cos", wvar=sv, limit=400, epsabs=1e-14, epsrel=1e-12)
        return 2.0 / (np.pi * beta) * val

    out = np.array([one(v) for v in np.ravel(s)]).reshape(np.shape(s))
    return float(out) if out.ndim == 0 else out


def dissipation_kernel_continuous(spec: SpectralDensity, s, omega_max: float | None = None):
    """``(2/pi) int_0^omega_max J(w) sin(w s) dw`` by adaptive quadrature."""
    wmax = omega_max or (10.0 * spec.omega_c if spec.kind == OHMIC else spec.table[-1][0])

    def one(sv):
        if sv == 0:
            return 0.0
        val, _ = integrate.quad(
            lambda w: evaluate_J(spec, w), 0.0, wmax, weight="sin", wvar=sv, limit=400, epsabs=1e-14, epsrel=1e-12
        )
        return 2.0 / np.pi * val

    out = np.array([one(v) for v in np.ravel(s)]).reshape(np.shape(s))
    return float(out) if out.ndim == 0 else out


def mean_force(modes: ModeSet, t):
    """Displacement mean force ``F_d(t) = -sum_k c_k L_k cos w_k t``.

    The noise average over displaced draws is ``<xi(t)> = -F_d(t)``.
    """
    t = np.asarray(t, float)[..., None]
    val = -(modes.c * modes.L * np.cos(modes.omega * t)).sum(-1)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class KernelSet:
    """Kernels of one reservoir bound to its mode set and temperature."""

    modes: ModeSet
    beta: float
    representation: str = MODE_SUM
    density: SpectralDensity | None = None

    def C1(self, s):
        if self.representation == QUADRATURE:
            return dissipation_kernel_continuous(self.density, s)
        return dissipation_kernel(self.modes, s)

    def C2(self, s):
        if self.representation == QUADRATURE:
            return noise_kernel_continuous(self.density, s, self.beta)
        return noise_kernel(self.modes, s, 0.0, self.beta)

    def C2sq(self, t, t_prime):
        return noise_kernel(self.modes, t, t_prime, self.beta, squeezed=True)

    def Fd(self, t):
        return mean_force(self.modes, t)


def sample_noise(modes: ModeSet, sample: PhaseSample, times, derivative: bool = False):
    """Free reservoir force ``xi(t) = sum_k c_k [x_k cos w_k t + p_k/(m_k w_k) sin w_k t]``.

    Parameters
    ----------
    modes : ModeSet
    sample : PhaseSample
        Post-quench state; batch dimensions are kept.
    times : array_like
    derivative : bool
        Also return ``d xi / dt``.

    Returns
    -------
    ndarray or (ndarray, ndarray)
        Shape ``sample.x.shape[:-1] + (len(times),)``.
    """
    t = np.asarray(times, float)
    wt = np.outer(modes.omega, t)
    cos, sin = np.cos(wt), np.sin(wt)
    a = sample.x * modes.c
    b = sample.p * modes.c / (modes.m * modes.omega)
    xi = a @ cos + b @ sin
    if not derivative:
        return xi
    dxi = (b * modes.omega) @ cos - (a * modes.omega) @ sin
    return xi, dxi


def integrate_gle(
    system: SystemSpec,
    reservoirs: Sequence[ReservoirSpec],
    xi: np.ndarray,
    dxi: np.ndarray,
    dt: float,
    tau: float,
    x0: float | None = None,
    p0: float | None = None,
    *,
    method: str = RECURSION,
    decimate: int | None = None,
    seed: int = 0,
    trajectory: int = 0,
) -> TrajectoryRecord:
    """Integrate the generalized Langevin equation for one noise realization.

    Parameters
    ----------
    system, reservoirs
        Model; only the mode sets enter, through the memory kernels.
    xi, dxi : ndarray, shape (n_steps + 1, n_reservoirs)
        Noise and its time derivative on the grid ``t_n = n dt``.
    method : {"recursion", "history"}
        ``history`` evaluates the memory convolution against the tabulated
        kernel (O(steps^2)); ``recursion`` carries one complex phasor per
        mode (O(steps * modes)). They agree to rounding.
    decimate : int, optional
        Store the path every ``decimate`` steps. ``E_res`` then holds the
        cumulative exchanged energy (its baseline is not known to the
        reduced description).

    Returns
    -------
    TrajectoryRecord
        ``dE_res`` is the exact energy the discrete impulses deliver to each
        reservoir: the trapezoid form of ``-int chi V_nu(x) d(xi + R)/dt``,
        which becomes the heat formula with the Sekimoto boundary terms
        after integrating by parts.
    """
    if method not in (HISTORY, RECURSION):
        raise DomainError(f"unknown memory method {method!r}")
    reservoirs = tuple(reservoirs)
    check_stability(system, reservoirs, dt)
    lay = _Layout(system, reservoirs, dt, tau)
    n, R, K = lay.n, lay.R, lay.K
    xi = np.asarray(xi, float).reshape(n + 1, R)
    dxi = np.asarray(dxi, float).reshape(n + 1, R)
    h = 0.5 * dt
    mass = system.mass
    S = lay.c**2 / lay.m @ lay.ind  # sum_k c_k^2/m_k per reservoir
    if method == HISTORY:
        lags = lay.times
        C1 = np.stack([dissipation_kernel(r.modes, lags) for r in reservoirs], axis=1).reshape(n + 1, R)
        dC1 = np.stack([dissipation_kernel_ds(r.modes, lags) for r in reservoirs], axis=1).reshape(n + 1, R)
        G = np.zeros((n + 1, R))
    else:
        phase = np.exp(1j * lay.w * dt)
        A = np.zeros(K, complex)
        a_im = lay.c**2 / (lay.m * lay.w)
        a_re = lay.c**2 / lay.m
        Wim = lay.ind * a_im[:, None]
        Wre = lay.ind * a_re[:, None]

    def shapes(xv):
        arr = np.array([xv])
        v, dv = lay.shapes(arr)
        return v[0], dv[0]

    x = float(system.x0 if x0 is None else x0)
    p = float(system.p0 if p0 is None else p0)
    hs0 = float(lay.system_energy(x, p))
    work = np.zeros(R)
    bath = np.zeros(R)
    drift = 0.0
    max_drift = 0.0
    e_prev = None
    path = [] if decimate else None

    def memory(k):
        if method == HISTORY:
            if k == 0:
                return np.zeros(R), np.zeros(R)
            Rk = -np.einsum("ij,ij->j", C1[k:0:-1], G[:k])
            dRk = -np.einsum("ij,ij->j", dC1[k:0:-1], G[:k])
            return Rk, dRk
        return A.imag @ Wim, A.real @ Wre

    Rm, dRm = memory(0)
    v, dv = shapes(x)
    for k in range(n + 1):
        Xk = xi[k] + Rm
        Pk = dxi[k] + dRm
        chi_b, chi_a = lay.chi_before(k), lay.chi_after(k)
        a_b = h * chi_b if k > 0 else np.zeros(R)
        a_a = h * chi_a if k < n else np.zeros(R)
        # second half-kick of the previous step
        if k > 0:
            p -= h * (lay.dV(x) + np.sum(chi_b * dv * Xk))
            g = a_b * v
            bath += -g * Pk + 0.5 * S * g * g
            Pk = Pk - g * S
        I = v * Xk
        hs = float(lay.system_energy(x, p))
        work += lay.wW[k] * I
        base = hs + bath.sum()
        if e_prev is not None:
            drift += base + I @ chi_b - e_prev
            max_drift = max(max_drift, abs(drift))
        e_prev = base + I @ chi_a
        if path is not None and (k % decimate == 0 or k == n):
            path.append((lay.times[k], x, p, hs, bath.copy()))
        if k == n:
            break
        # first half-kick of the next step, then drift
        p -= h * (lay.dV(x) + np.sum(chi_a * dv * Xk))
        g = a_a * v
        bath += -g * Pk + 0.5 * S * g * g
        total = (a_b + a_a) * v
        if method == HISTORY:
            G[k] = total
        else:
            A = (A - total[lay.res]) * phase
        x += dt * p / mass
        if not np.isfinite(x) or not np.isfinite(p):
            raise DivergenceError(lay.times[k + 1])
        Rm, dRm = memory(k + 1)
        v, dv = shapes(x)
    rec = TrajectoryRecord(
        seed=seed,
        trajectory=trajectory,
        dE_S=float(lay.system_energy(x, p)) - hs0,
        dE_res=bath,
        dE_sq=np.zeros(R),
        dE_dp=np.zeros(R),
        work=work,
        dE_coupling=float(I @ lay.chi_end),
        drift=max_drift,
        state_initial={"x": float(system.x0 if x0 is None else x0), "p": float(system.p0 if p0 is None else p0)},
        state_final={"x": x, "p": p},
        names=tuple(r.name or f"res{nu}" for nu, r in enumerate(reservoirs)),
    )
    if path:
        rec.times = np.array([e[0] for e in path])
        rec.x = np.array([e[1] for e in path])
        rec.p = np.array([e[2] for e in path])
        rec.E_S = np.array([e[3] for e in path])
        rec.E_res = np.array([e[4] for e in path])
    return rec


def simulate_trajectory_gle(
    exp: Experiment, index: int = 0, method: str = RECURSION, decimate: int | None = None
) -> TrajectoryRecord:
    """GLE counterpart of :func:`necl.microdyn.simulate_trajectory`.

    Uses the identical initial draw, so the two records can be compared
    trajectory by trajectory.
    """
    x, p, pre, post = initial_states(exp, [index])
    times = exp.times
    xs, dxs = [], []
    for res, s in zip(exp.reservoirs, post):
        a, b = sample_noise(res.modes, s, times, derivative=True)
        xs.append(a[0])
        dxs.append(b[0])
    rec = integrate_gle(
        exp.system,
        exp.reservoirs,
        np.stack(xs, axis=1),
        np.stack(dxs, axis=1),
        exp.dt,
        exp.tau,
        x[0],
        p[0],
        method=method,
        decimate=decimate,
        seed=exp.seed,
        trajectory=index,
    )
    if exp.quench_timing == INITIAL_QUENCH:
        for nu, res in enumerate(exp.reservoirs):
            sq, dp = quench_energy(pre[nu], post[nu], res.modes)
            rec.dE_sq[nu], rec.dE_dp[nu] = sq.sum(), dp.sum()
    return rec
