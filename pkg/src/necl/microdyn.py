"""Exact classical dynamics of a particle coupled to harmonic reservoirs.

The Hamiltonian is

    H = p^2/2m + V(x) + sum_nu chi_nu(t) V_nu(x) sum_k c_k x_k
        + sum_k [p_k^2/2m_k + m_k w_k^2 x_k^2/2].

Time stepping is the Strang splitting ``B(dt/2) A(dt) B(dt/2)`` where ``A``
advances the free particle and rotates every bath mode exactly, and ``B``
applies all potential and coupling forces. Within a step the switching
functions are frozen at their mid-step values, so each step is an exact
symplectic map for a time-independent Hamiltonian. The same stepping code
serves single trajectories and vectorized batches.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigurationError, DivergenceError, DomainError
from .reservoir import (
    PhaseSample,
    ReservoirSpec,
    apply_quench,
    quench_energy,
    sample_thermal,
)
from .rng import TAG_INITIAL, StreamSet, normals, uniforms

HARMONIC = "harmonic"
QUARTIC = "quartic"
POLYNOMIAL = "polynomial"
POTENTIALS = (HARMONIC, QUARTIC, POLYNOMIAL)

POINT = "point"
THERMAL = "thermal"

INITIAL_QUENCH = "initial"
FINAL_QUENCH = "final"

STABILITY_LIMIT = 0.2
LINEAR_COUPLING = (0.0, 1.0)


@dataclass(frozen=True)
class SystemSpec:
    """The system particle.

    Parameters
    ----------
    mass : float
    potential : {"harmonic", "quartic", "polynomial"}
        ``harmonic`` is ``m Omega^2 x^2 / 2``; ``quartic`` adds ``g x^4``;
        ``polynomial`` uses ``coefficients`` (ascending powers).
    omega, quartic, coefficients
        Parameters of the potential.
    couplings : tuple of coefficient tuples
        Coupling shape ``V_nu(x)`` per reservoir in ascending powers. An
        empty tuple means linear coupling ``V_nu(x) = x`` for every reservoir.
    initial : {"point", "thermal"}
    x0, p0 : float
        Initial point for ``initial="point"``.
    beta : float
        Inverse temperature for ``initial="thermal"``.
    """

    mass: float = 1.0
    potential: str = HARMONIC
    omega: float = 1.0
    quartic: float = 0.0
    coefficients: tuple[float, ...] = ()
    couplings: tuple[tuple[float, ...], ...] = ()
    initial: str = POINT
    x0: float = 0.0
    p0: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError("system mass must be positive")
        if self.potential not in POTENTIALS:
            raise DomainError(f"unknown potential {self.potential!r}")
        if self.initial not in (POINT, THERMAL):
            raise DomainError(f"unknown initial distribution {self.initial!r}")
        if self.initial == THERMAL and not self.beta > 0:
            raise DomainError("thermal system needs beta > 0")
        if self.potential == POLYNOMIAL and not self.coefficients:
            raise DomainError("polynomial potential needs coefficients")

    @property
    def V(self) -> Polynomial:
        if self.potential == POLYNOMIAL:
            return Polynomial(self.coefficients)
        coef = [0.0, 0.0, 0.5 * self.mass * self.omega**2]
        if self.potential == QUARTIC:
            coef += [0.0, self.quartic]
        return Polynomial(coef)

    @property
    def is_harmonic(self) -> bool:
        c = np.trim_zeros(self.V.coef, "b")
        return c.size == 3 and c[0] == 0 and c[1] == 0 and c[2] > 0

    def coupling(self, nu: int) -> Polynomial:
        if not self.couplings:
            return Polynomial(LINEAR_COUPLING)
        if nu >= len(self.couplings):
            raise DomainError(f"no coupling shape given for reservoir {nu}")
        return Polynomial(self.couplings[nu])

    def coupling_is_linear(self, nu: int) -> bool:
        c = np.trim_zeros(self.coupling(nu).coef, "b")
        return c.size == 2 and c[0] == 0 and c[1] == 1

    @property
    def curvature_frequency(self) -> float:
        k = self.V.deriv(2)(0.0)
        return float(np.sqrt(k / self.mass)) if k > 0 else 0.0

    def energy(self, x, p):
        return 0.5 * np.asarray(p) ** 2 / self.mass + self.V(np.asarray(x))

    def log_partition(self) -> float:
        """log Z_S at ``beta`` (harmonic closed form, quadrature otherwise)."""
        b, m = self.beta, self.mass
        if self.is_harmonic:
            return float(np.log(2 * np.pi / (b * self.omega)))
        from scipy import integrate

        V = self.V
        zx, _ = integrate.quad(lambda x: np.exp(-b * V(x)), -np.inf, np.inf)
        return float(np.log(zx * np.sqrt(2 * np.pi * m / b)))


@dataclass(frozen=True)
class Experiment:
    """A complete classical run: system, reservoirs, horizon and seed.

    ``quench_timing="initial"`` is the forward experiment (quench at 0^-);
    ``"final"`` applies the inverse quench after the dynamics, which is the
    classical image of the reversed experiment. Use
    :func:`reverse_experiment` to build the latter.
    """

    system: SystemSpec
    reservoirs: tuple[ReservoirSpec, ...]
    tau: float
    dt: float
    seed: int = 0
    quench_timing: str = INITIAL_QUENCH

    def __post_init__(self):
        object.__setattr__(self, "reservoirs", tuple(self.reservoirs))
        if not self.reservoirs:
            raise DomainError("an experiment needs at least one reservoir")
        if not (self.dt > 0 and self.tau >= 0):
            raise DomainError("need dt > 0 and tau >= 0")
        if self.quench_timing not in (INITIAL_QUENCH, FINAL_QUENCH):
            raise DomainError(f"unknown quench timing {self.quench_timing!r}")
        n = self.tau / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise DomainError("tau must be an integer multiple of dt")
        for nu, res in enumerate(self.reservoirs):
            if res.switching.support[1] > self.tau * (1 + 1e-12):
                raise DomainError(f"switching of reservoir {nu} extends beyond tau")
        check_stability(self.system, self.reservoirs, self.dt)

    @property
    def n_steps(self) -> int:
        return int(round(self.tau / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def channel_offsets(self) -> list[int]:
        """RNG channel of each reservoir's first mode (channel 0 is the system)."""
        out, acc = [], 1
        for res in self.reservoirs:
            out.append(acc)
            acc += len(res)
        return out

    @property
    def is_linear(self) -> bool:
        return self.system.is_harmonic and all(
            self.system.coupling_is_linear(nu) for nu in range(len(self.reservoirs))
        )


def check_stability(system: SystemSpec, reservoirs: Sequence[ReservoirSpec], dt: float):
    """Raise ConfigurationError unless ``dt * max frequency <= 0.2``."""
    wmax = max([system.curvature_frequency] + [float(np.max(r.modes.omega)) for r in reservoirs])
    if dt * wmax > STABILITY_LIMIT:
        raise ConfigurationError(
            f"stability guard violated: dt*max(omega) = {dt * wmax:.4g} > {STABILITY_LIMIT}"
        )


def reverse_experiment(exp: Experiment, seed: int | None = None) -> Experiment:
    """Time-reversed experiment.

    Switching functions are mirrored, ``chi_nu(tau - t)``, and the quench is
    moved to the end with inverted parameters (displace by ``-L`` then
    squeeze by ``-r``). Mode parameters keep their forward values; the
    inversion is carried by ``quench_timing``.
    """
    if exp.quench_timing != INITIAL_QUENCH:
        raise DomainError("only forward experiments can be reversed")
    res = tuple(
        ReservoirSpec(r.beta, r.modes, r.switching.mirrored(exp.tau), r.name) for r in exp.reservoirs
    )
    return Experiment(
        exp.system, res, exp.tau, exp.dt, exp.seed if seed is None else seed, FINAL_QUENCH
    )


def work_weights(protocol, times: np.ndarray) -> np.ndarray:
    """Quadrature weights ``w_n`` with ``W = sum_n w_n I(t_n)``.

    ``w_n = chi(t_{n+1/2}) - chi(t_{n-1/2})``, with ``chi(0^-)`` and
    ``chi(tau)`` closing the ends. This is the midpoint form of
    ``int chi_dot I dt``; it is second order on smooth stretches, books every
    jump at the grid point just before it, and matches the frozen mid-step
    switching of the integrator exactly, so the energy audit leaves only the
    splitting error.
    """
    times = np.asarray(times, float)
    half = np.atleast_1d(protocol.value(0.5 * (times[1:] + times[:-1])))
    before = np.concatenate([[protocol.left_value(times[0])], half])
    after = np.concatenate([half, [protocol.value(times[-1])]])
    return after - before


@dataclass
class TrajectoryRecord:
    """Energy functionals (and optionally the path) of one trajectory.

    Energies are per reservoir where indicated; ``Q = dE_res + dE_sq + dE_dp``.
    """

    seed: int
    trajectory: int
    dE_S: float
    dE_res: np.ndarray
    dE_sq: np.ndarray
    dE_dp: np.ndarray
    work: np.ndarray
    dE_coupling: float
    drift: float
    state_initial: dict
    state_final: dict
    times: np.ndarray | None = None
    x: np.ndarray | None = None
    p: np.ndarray | None = None
    E_S: np.ndarray | None = None
    E_res: np.ndarray | None = None
    names: tuple[str, ...] = ()

    @property
    def Q(self) -> np.ndarray:
        return self.dE_res + self.dE_sq + self.dE_dp

    @property
    def audit_residual(self) -> float:
        """``dE_S + sum dE_nu + dE_coupling - sum W`` (dynamics only)."""
        return float(self.dE_S + np.sum(self.dE_res) + self.dE_coupling - np.sum(self.work))

    def write_csv(self, path: str | Path):
        """Dump the stored path as CSV: ``t, x, p, E_S, E_<reservoir>...``."""
        if self.times is None:
            raise DomainError("trajectory was integrated without path storage")
        names = self.names or tuple(f"res{nu}" for nu in range(self.E_res.shape[1]))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "p", "E_S", *[f"E_{n}" for n in names]])
            for row in zip(self.times, self.x, self.p, self.E_S, self.E_res):
                t, x, p, es, er = row
                w.writerow([f"{v:.17g}" for v in (t, x, p, es, *er)])


@dataclass
class EnsembleResult:
    """Per-trajectory energy functionals of a batch, arrays of length N."""

    seed: int
    trajectories: np.ndarray
    dE_S: np.ndarray
    dE_res: np.ndarray
    dE_sq: np.ndarray
    dE_dp: np.ndarray
    work: np.ndarray
    dE_coupling: np.ndarray
    drift: np.ndarray
    beta_S: float | None = None
    betas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def Q(self) -> np.ndarray:
        return self.dE_res + self.dE_sq + self.dE_dp

    @property
    def n(self) -> int:
        return self.dE_S.size

    @property
    def audit_residual(self) -> np.ndarray:
        return self.dE_S + self.dE_res.sum(1) + self.dE_coupling - self.work.sum(1)

    @classmethod
    def concatenate(cls, parts: Sequence["EnsembleResult"]) -> "EnsembleResult":
        f = lambda name: np.concatenate([getattr(p, name) for p in parts])
        first = parts[0]
        return cls(
            first.seed,
            f("trajectories"),
            f("dE_S"),
            f("dE_res"),
            f("dE_sq"),
            f("dE_dp"),
            f("work"),
            f("dE_coupling"),
            f("drift"),
            first.beta_S,
            first.betas,
        )


def _horner(coef):
    """Fast evaluator for a short ascending coefficient list."""
    coef = [float(a) for a in np.trim_zeros(np.asarray(coef, float), "b")]
    if not coef:
        return lambda x: np.zeros_like(x)
    if len(coef) == 3 and coef[0] == 0 and coef[1] == 0:
        a = coef[2]
        return lambda x: a * x * x
    if len(coef) == 2 and coef[0] == 0:
        a = coef[1]
        return lambda x: a * x

    def f(x):
        out = np.full_like(x, coef[-1])
        for a in reversed(coef[:-1]):
            out = out * x + a
        return out

    return f


class _Layout:
    """Flattened mode arrays and per-step protocol tables of an experiment."""

    def __init__(self, system: SystemSpec, reservoirs: Sequence[ReservoirSpec], dt: float, tau: float):
        self.system = system
        self.R = len(reservoirs)
        self.m = np.concatenate([r.modes.m for r in reservoirs])
        self.w = np.concatenate([r.modes.omega for r in reservoirs])
        self.c = np.concatenate([r.modes.c for r in reservoirs])
        self.res = np.concatenate([np.full(len(r), nu) for nu, r in enumerate(reservoirs)])
        self.K = self.m.size
        self.ind = np.zeros((self.K, self.R))
        self.ind[np.arange(self.K), self.res] = 1.0
        self.cmat = self.ind * self.c[:, None]
        self.cw = np.cos(self.w * dt)
        self.sw_mw = np.sin(self.w * dt) / (self.m * self.w)
        self.mw_sw = self.m * self.w * np.sin(self.w * dt)
        self.dt = dt
        n = int(round(tau / dt))
        self.n = n
        self.times = np.arange(n + 1) * dt
        half = (np.arange(n) + 0.5) * dt
        self.chi_half = np.stack([r.switching.value(half) for r in reservoirs], axis=1).reshape(n, self.R)
        self.chi_start = np.array([r.switching.left_value(0.0) for r in reservoirs])
        self.chi_end = np.array([r.switching.value(self.times[-1]) for r in reservoirs])
        self.wW = np.stack([work_weights(r.switching, self.times) for r in reservoirs], axis=1)
        self.linear = all(system.coupling_is_linear(nu) for nu in range(self.R))
        self.vpolys = [_horner(system.coupling(nu).coef) for nu in range(self.R)]
        self.dvpolys = [_horner(system.coupling(nu).deriv().coef) for nu in range(self.R)]
        self.V = _horner(system.V.coef)
        self.dV = _horner(system.V.deriv().coef)
        self.inv_mass = 1.0 / system.mass

    def chi_before(self, n: int) -> np.ndarray:
        return self.chi_start if n == 0 else self.chi_half[n - 1]

    def chi_after(self, n: int) -> np.ndarray:
        return self.chi_end if n == self.n else self.chi_half[n]

    def shapes(self, x):
        """``V_nu(x)`` and ``V_nu'(x)`` as ``(N, R)`` arrays."""
        if self.linear:
            v = np.repeat(x[:, None], self.R, axis=1)
            return v, np.ones_like(v)
        v = np.stack([p(x) for p in self.vpolys], axis=1)
        dv = np.stack([p(x) for p in self.dvpolys], axis=1)
        return v, dv

    def system_energy(self, x, p):
        return 0.5 * self.inv_mass * p * p + self.V(x)

    def bath_energy(self, X, P) -> np.ndarray:
        return (0.5 * P**2 / self.m + 0.5 * self.m * self.w**2 * X**2) @ self.ind


def _evolve(lay: _Layout, x, p, X, P, *, track=True, decimate=None, t0_index=0):
    """Advance batched states through the whole grid.

    Returns final arrays and accumulated work, drift and (optionally) the
    decimated path. Arrays are modified in place.
    """
    N = x.shape[0]
    h = 0.5 * lay.dt
    work = np.zeros((N, lay.R))
    drift = np.zeros(N)
    max_drift = np.zeros(N)
    path = [] if decimate else None
    e_prev_after = None

    def observe(n, v, S):
        nonlocal e_prev_after
        I = v * S
        hs = lay.system_energy(x, p)
        hb = lay.bath_energy(X, P)
        if track:
            work[:] += lay.wW[n] * I
            base = hs + hb.sum(1)
            if e_prev_after is not None:
                e_after = base + I @ lay.chi_before(n)
                drift[:] += e_after - e_prev_after
                np.maximum(max_drift, np.abs(drift), out=max_drift)
            e_prev_after = base + I @ lay.chi_after(n)
        if path is not None and (n % decimate == 0 or n == lay.n):
            path.append((lay.times[n], x.copy(), p.copy(), hs, hb))

    def kick(chi, v, dv, S):
        if lay.linear:
            p[:] -= h * (lay.dV(x) + S @ chi)
            P[:] -= (h * chi[lay.res] * lay.c) * x[:, None]
        else:
            p[:] -= h * (lay.dV(x) + np.sum(chi * dv * S, axis=1))
            P[:] -= h * (chi * v)[:, lay.res] * lay.c

    v, dv = lay.shapes(x)
    S = X @ lay.cmat
    observe(0, v, S)
    for n in range(lay.n):
        chi = lay.chi_half[n]
        kick(chi, v, dv, S)
        x += lay.dt * p / lay.system.mass
        X_new = X * lay.cw + P * lay.sw_mw
        P[:] = P * lay.cw - X * lay.mw_sw
        X[:] = X_new
        v, dv = lay.shapes(x)
        S = X @ lay.cmat
        kick(chi, v, dv, S)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(lay.times[n + 1])
        observe(n + 1, v, S)
    I_end = v * S
    dE_c = I_end @ lay.chi_end
    return work, dE_c, max_drift, path


def _split(lay: _Layout, arr: np.ndarray, reservoirs) -> list[np.ndarray]:
    out, acc = [], 0
    for r in reservoirs:
        out.append(arr[..., acc : acc + len(r)])
        acc += len(r)
    return out


def integrate_full(
    system: SystemSpec,
    reservoirs: Sequence[ReservoirSpec],
    bath: Sequence[PhaseSample],
    dt: float,
    tau: float,
    x0: float | None = None,
    p0: float | None = None,
    *,
    decimate: int | None = None,
    pre_quench: Sequence[PhaseSample] | None = None,
    seed: int = 0,
    trajectory: int = 0,
) -> TrajectoryRecord:
    """Integrate one trajectory of the full Hamiltonian dynamics.

    Parameters
    ----------
    system, reservoirs
        The model being integrated.
    bath : sequence of PhaseSample
        Post-quench state of each reservoir at t=0 (1-D per reservoir).
    dt, tau : float
        Step and horizon; ``dt * max(omega) <= 0.2`` is enforced.
    x0, p0 : float, optional
        System initial point (defaults to ``system.x0``, ``system.p0``).
    decimate : int, optional
        Store every ``decimate``-th grid point of the path (and energies).
    pre_quench : sequence of PhaseSample, optional
        Pre-quench states; if given, the quench energies are recorded.

    Returns
    -------
    TrajectoryRecord
    """
    reservoirs = tuple(reservoirs)
    if len(bath) != len(reservoirs):
        raise DomainError("one bath sample per reservoir is required")
    check_stability(system, reservoirs, dt)
    lay = _Layout(system, reservoirs, dt, tau)
    x = np.array([system.x0 if x0 is None else x0], float)
    p = np.array([system.p0 if p0 is None else p0], float)
    X = np.concatenate([np.ravel(b.x) for b in bath])[None, :].copy()
    P = np.concatenate([np.ravel(b.p) for b in bath])[None, :].copy()
    if X.shape[1] != lay.K:
        raise DomainError("bath sample sizes do not match the mode sets")
    hs0 = system.energy(x, p)[0]
    hb0 = lay.bath_energy(X, P)[0]
    init = {"x": x[0], "p": p[0], "X": X[0].copy(), "P": P[0].copy()}
    work, dE_c, drift, path = _evolve(lay, x, p, X, P, decimate=decimate)
    hb1 = lay.bath_energy(X, P)[0]
    sq = np.zeros(lay.R)
    dp = np.zeros(lay.R)
    if pre_quench is not None:
        for nu, (pre, post, res) in enumerate(zip(pre_quench, bath, reservoirs)):
            s, d = quench_energy(pre, post, res.modes)
            sq[nu], dp[nu] = np.sum(s), np.sum(d)
    rec = TrajectoryRecord(
        seed=seed,
        trajectory=trajectory,
        dE_S=float(system.energy(x, p)[0] - hs0),
        dE_res=hb1 - hb0,
        dE_sq=sq,
        dE_dp=dp,
        work=work[0],
        dE_coupling=float(dE_c[0]),
        drift=float(drift[0]),
        state_initial=init,
        state_final={"x": x[0], "p": p[0], "X": X[0].copy(), "P": P[0].copy()},
        names=tuple(r.name or f"res{nu}" for nu, r in enumerate(reservoirs)),
    )
    if path:
        rec.times = np.array([e[0] for e in path])
        rec.x = np.array([e[1][0] for e in path])
        rec.p = np.array([e[2][0] for e in path])
        rec.E_S = np.array([e[3][0] for e in path])
        rec.E_res = np.array([e[4][0] for e in path])
    return rec


def energy_flows(record: TrajectoryRecord):
    """``(dE_S, dE_nu per reservoir, W_nu per reservoir)`` of a trajectory."""
    return record.dE_S, record.dE_res, record.work


def sample_system(system: SystemSpec, streams: StreamSet, trajectories) -> tuple[np.ndarray, np.ndarray]:
    """System initial points for a batch (RNG channel 0)."""
    traj = np.asarray(trajectories)
    if system.initial == POINT:
        return np.full(traj.shape, system.x0, float), np.full(traj.shape, system.p0, float)
    b, m = system.beta, system.mass
    key = streams.key
    tr = traj.astype(np.uint64)
    if system.is_harmonic:
        z = normals(key, tr, np.uint64(0), 0, TAG_INITIAL)
        return z[..., 0] / np.sqrt(b * m * system.omega**2), z[..., 1] * np.sqrt(m / b)
    # inverse-CDF draw from exp(-beta V) on a fine grid
    u = uniforms(key, tr, np.uint64(0), 0, TAG_INITIAL)[..., 0]
    z = normals(key, tr, np.uint64(0), 0, TAG_INITIAL)[..., 2]
    V = system.V
    span = 1.0
    while V(span) - V(0.0) < 60.0 / b or V(-span) - V(0.0) < 60.0 / b:
        span *= 2.0
    grid = np.linspace(-span, span, 20001)
    dens = np.exp(-b * (V(grid) - V(grid).min()))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]))])
    cdf /= cdf[-1]
    return np.interp(u, cdf, grid), z * np.sqrt(m / b)


def initial_states(exp: Experiment, trajectories):
    """Draw system points and pre/post-quench reservoir samples."""
    streams = StreamSet(exp.seed)
    x, p = sample_system(exp.system, streams, trajectories)
    pre, post = [], []
    for res, off in zip(exp.reservoirs, exp.channel_offsets):
        s = sample_thermal(res, streams, trajectories, off)
        pre.append(s)
        post.append(apply_quench(s, res.modes) if exp.quench_timing == INITIAL_QUENCH else s)
    return x, p, pre, post


def simulate_trajectory(exp: Experiment, index: int = 0, decimate: int | None = None) -> TrajectoryRecord:
    """One trajectory of an experiment, reproducible from ``(seed, index)``."""
    x, p, pre, post = initial_states(exp, [index])
    one = lambda s: PhaseSample(s.x[0], s.p[0], s.stage)
    pre1 = [one(s) for s in pre]
    post1 = [one(s) for s in post]
    rec = integrate_full(
        exp.system,
        exp.reservoirs,
        post1,
        exp.dt,
        exp.tau,
        x[0],
        p[0],
        decimate=decimate,
        pre_quench=pre1 if exp.quench_timing == INITIAL_QUENCH else None,
        seed=exp.seed,
        trajectory=index,
    )
    if exp.quench_timing == FINAL_QUENCH:
        fin = _split(None, rec.state_final["X"], exp.reservoirs)
        pfin = _split(None, rec.state_final["P"], exp.reservoirs)
        for nu, res in enumerate(exp.reservoirs):
            s, d = final_quench_energy(PhaseSample(fin[nu], pfin[nu]), res.modes)
            rec.dE_sq[nu], rec.dE_dp[nu] = np.sum(s), np.sum(d)
    return rec


def final_quench_energy(sample: PhaseSample, modes):
    """Energies of the inverse quench applied at the end of a reversed run.

    Displacement by ``-L`` then squeeze by ``-r``; the two parts sum to
    ``H(after) - H(before)``.
    """
    m, w, r, L = modes.m, modes.omega, modes.r, modes.L
    x, p = sample.x, sample.p
    dp = m * w**2 * (0.5 * L**2 - x * L)
    sq = 0.5 * np.expm1(-2 * r) * m * w**2 * (x - L) ** 2 + 0.5 * np.expm1(2 * r) * p**2 / m
    return sq, dp


def linear_step_matrix(lay: _Layout, chi: np.ndarray) -> np.ndarray:
    """One-step map ``y -> A y`` of the linear dynamics, ``y = (x, p, X, P)``.

    Obtained by pushing the identity through the same kick/drift code used
    for trajectories, so the two agree to rounding.
    """
    d = 2 + 2 * lay.K
    eye = np.eye(d)
    x, p = eye[:, 0].copy(), eye[:, 1].copy()
    X, P = eye[:, 2 : 2 + lay.K].copy(), eye[:, 2 + lay.K :].copy()
    h = 0.5 * lay.dt
    m = lay.system.mass
    k2 = lay.system.mass * lay.system.omega**2

    def kick():
        S = X @ lay.cmat
        p[:] += h * (-k2 * x - S @ chi)
        P[:] -= h * (chi[lay.res] * lay.c)[None, :] * x[:, None]

    kick()
    x[:] += lay.dt * p / m
    X_new = X * lay.cw + P * lay.sw_mw
    P[:] = P * lay.cw - X * lay.mw_sw
    X[:] = X_new
    kick()
    return np.column_stack([x, p, X, P]).T


def _linear_propagators(lay: _Layout):
    """Total map and the work quadratic forms for a linear experiment."""
    d = 2 + 2 * lay.K
    qI = []
    for nu in range(lay.R):
        q = np.zeros((d, d))
        q[0, 2 : 2 + lay.K] = 0.5 * lay.cmat[:, nu]
        qI.append(q + q.T)
    need = np.flatnonzero(np.any(lay.wW != 0, axis=1))
    MW = np.zeros((lay.R, d, d))

    def add(n, phi):
        for nu in range(lay.R):
            if lay.wW[n, nu] != 0:
                MW[nu] += lay.wW[n, nu] * (phi.T @ qI[nu] @ phi)

    if lay.n == 0:
        phi = np.eye(d)
        add(0, phi)
        return phi, MW, qI
    constant = np.all(lay.chi_half == lay.chi_half[0])
    if constant:
        A = linear_step_matrix(lay, lay.chi_half[0])
        for n in need:
            add(n, np.linalg.matrix_power(A, int(n)))
        phi = np.linalg.matrix_power(A, lay.n)
    else:
        phi = np.eye(d)
        add(0, phi)
        cache = {}
        for n in range(lay.n):
            key = tuple(lay.chi_half[n])
            if key not in cache:
                cache[key] = linear_step_matrix(lay, lay.chi_half[n])
            phi = cache[key] @ phi
            if lay.wW[n + 1].any():
                add(n + 1, phi)
    return phi, MW, qI


def run_ensemble(
    exp: Experiment,
    n_traj: int,
    start: int = 0,
    batch: int = 100_000,
    method: str = "auto",
) -> EnsembleResult:
    """Energy functionals for trajectories ``start .. start+n_traj-1``.

    ``method="linear"`` (the default for harmonic systems with linear
    couplings) propagates every trajectory with the exact product of the
    one-step matrices of the integrator; ``"batch"`` steps all trajectories
    together. Both yield the same numbers as :func:`simulate_trajectory` up to
    rounding. The linear path does not track the per-trajectory drift and
    reports NaN for it.
    """
    if n_traj < 1:
        raise DomainError("need at least one trajectory")
    if method == "auto":
        method = "linear" if exp.is_linear else "batch"
    if method == "linear" and not exp.is_linear:
        raise DomainError("linear propagation needs a harmonic system and linear couplings")
    lay = _Layout(exp.system, exp.reservoirs, exp.dt, exp.tau)
    prop = _linear_propagators(lay) if method == "linear" else None
    parts = []
    for s in range(start, start + n_traj, batch):
        idx = np.arange(s, min(s + batch, start + n_traj))
        parts.append(_run_chunk(exp, lay, idx, prop))
    return EnsembleResult.concatenate(parts)


def _run_chunk(exp: Experiment, lay: _Layout, idx: np.ndarray, prop) -> EnsembleResult:
    x, p, pre, post = initial_states(exp, idx)
    X = np.concatenate([s.x for s in post], axis=1)
    P = np.concatenate([s.p for s in post], axis=1)
    sys = exp.system
    hs0 = sys.energy(x, p)
    hb0 = lay.bath_energy(X, P)
    if prop is None:
        work, dE_c, drift, _ = _evolve(lay, x, p, X, P)
    else:
        phi, MW, qI = prop
        y0 = np.column_stack([x, p, X, P])
        y1 = y0 @ phi.T
        work = np.stack([np.einsum("ij,jk,ik->i", y0, MW[nu], y0) for nu in range(lay.R)], axis=1)
        dE_c = sum(lay.chi_end[nu] * np.einsum("ij,jk,ik->i", y1, qI[nu], y1) for nu in range(lay.R))
        dE_c = np.asarray(dE_c, float) * np.ones(idx.size)
        x, p = y1[:, 0], y1[:, 1]
        X, P = y1[:, 2 : 2 + lay.K], y1[:, 2 + lay.K :]
        drift = np.full(idx.size, np.nan)
    hb1 = lay.bath_energy(X, P)
    sq = np.zeros((idx.size, lay.R))
    dp = np.zeros((idx.size, lay.R))
    Xs, Ps = _split(lay, X, exp.reservoirs), _split(lay, P, exp.reservoirs)
    for nu, res in enumerate(exp.reservoirs):
        if exp.quench_timing == INITIAL_QUENCH:
            s, d = quench_energy(pre[nu], post[nu], res.modes)
        else:
            s, d = final_quench_energy(PhaseSample(Xs[nu], Ps[nu]), res.modes)
        sq[:, nu], dp[:, nu] = s.sum(1), d.sum(1)
    return EnsembleResult(
        seed=exp.seed,
        trajectories=idx,
        dE_S=sys.energy(x, p) - hs0,
        dE_res=hb1 - hb0,
        dE_sq=sq,
        dE_dp=dp,
        work=work,
        dE_coupling=np.asarray(dE_c, float),
        drift=drift,
        beta_S=sys.beta if sys.initial == THERMAL else None,
        betas=np.array([r.beta for r in exp.reservoirs]),
    )
