"""Reservoir specifications, classical initial states and quench energies.

A classical reservoir is prepared in three stages: a Gibbs draw at inverse
temperature ``beta``, a squeeze ``x -> e^r x, p -> e^-r p`` and a position
displacement ``x -> x + L``. The energy injected by the last two stages is
what distinguishes the total heat ``Q`` from the exchanged energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DomainError, StateError
from .rng import TAG_INITIAL, StreamSet
from .spectral import ModeSet

CONSTANT = "constant-on-window"
RAMP = "linear-ramp"
TABULATED = "tabulated"
PROTOCOL_KINDS = (CONSTANT, RAMP, TABULATED)

PRE_QUENCH = "pre-quench"
POST_QUENCH = "post-quench"


@dataclass(frozen=True)
class SwitchingProtocol:
    """Piecewise-linear switching function chi(t).

    The protocol is stored as knots ``(t_i, chi_i)`` with nondecreasing
    times. A repeated time encodes a jump, so hard on/off switching is exact
    and its work can be booked as explicit boundary terms. Outside the knot
    range chi vanishes.
    """

    kind: str
    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise DomainError(f"unknown switching kind {self.kind!r}")
        t = np.asarray(self.times, float)
        v = np.asarray(self.values, float)
        if t.shape != v.shape or t.size < 2:
            raise DomainError("switching knots need matching times and values")
        if np.any(np.diff(t) < 0) or not np.all(np.isfinite(t)) or not np.all(np.isfinite(v)):
            raise DomainError("switching times must be finite and nondecreasing")
        if t[0] < 0:
            raise DomainError("switching cannot start before t=0")
        if v[0] != 0 or v[-1] != 0:
            raise DomainError("switching must vanish at both ends of its support")

    @classmethod
    def constant(cls, amplitude: float, start: float, stop: float) -> "SwitchingProtocol":
        if stop < start:
            raise DomainError("stop precedes start")
        return cls(CONSTANT, (start, start, stop, stop), (0.0, amplitude, amplitude, 0.0))

    @classmethod
    def ramp(cls, amplitude: float, start: float, stop: float, ramp_up: float, ramp_down: float | None = None):
        ramp_down = ramp_up if ramp_down is None else ramp_down
        if ramp_up < 0 or ramp_down < 0 or start + ramp_up > stop - ramp_down:
            raise DomainError("ramps do not fit inside the switching window")
        ts = (start, start + ramp_up, stop - ramp_down, stop)
        return cls(RAMP, ts, (0.0, amplitude, amplitude, 0.0))

    @classmethod
    def tabulated(cls, times: Sequence[float], values: Sequence[float]) -> "SwitchingProtocol":
        t = [float(x) for x in times]
        v = [float(x) for x in values]
        return cls(TABULATED, (t[0], *t, t[-1]), (0.0, *v, 0.0))

    @classmethod
    def off(cls) -> "SwitchingProtocol":
        return cls.constant(0.0, 0.0, 0.0)

    @property
    def support(self) -> tuple[float, float]:
        return self.times[0], self.times[-1]

    @property
    def is_zero(self) -> bool:
        return not any(self.values)

    def _eval(self, t, side: str):
        ts = np.asarray(self.times)
        vs = np.asarray(self.values)
        t = np.asarray(t, float)
        i = np.searchsorted(ts, t, side=side)
        inside = (i > 0) & (i < ts.size)
        i = np.clip(i, 1, ts.size - 1)
        t0, t1, v0, v1 = ts[i - 1], ts[i], vs[i - 1], vs[i]
        span = t1 - t0
        with np.errstate(invalid="ignore", divide="ignore"):
            slope = np.where(span > 0, (v1 - v0) / np.where(span > 0, span, 1.0), 0.0)
        val = np.where(inside, v0 + slope * (t - t0), 0.0)
        if side == "left":
            # the left limit at a knot is the value of the segment ending there
            val = np.where(inside & (t == t1), v1, val)
        return val, np.where(inside, slope, 0.0)

    def value(self, t):
        """chi(t), right-continuous at jumps."""
        v, _ = self._eval(t, "right")
        return float(v) if v.ndim == 0 else v

    def left_value(self, t):
        """Left limit chi(t^-)."""
        v, _ = self._eval(t, "left")
        return float(v) if v.ndim == 0 else v

    def derivative(self, t):
        """Regular part of d chi/dt (jumps are reported by :meth:`jumps`)."""
        _, d = self._eval(t, "right")
        return float(d) if d.ndim == 0 else d

    def jumps(self) -> list[tuple[float, float]]:
        """Hard switching events as ``(time, chi(t+) - chi(t-))``."""
        out = []
        for k in range(1, len(self.times)):
            if self.times[k] == self.times[k - 1] and self.values[k] != self.values[k - 1]:
                out.append((self.times[k], self.values[k] - self.values[k - 1]))
        return out

    def mirrored(self, tau: float) -> "SwitchingProtocol":
        """The time-reversed protocol chi(tau - t)."""
        if self.times[-1] > tau:
            raise DomainError("protocol extends beyond the mirror time")
        ts = tuple(tau - t for t in reversed(self.times))
        return SwitchingProtocol(self.kind, ts, tuple(reversed(self.values)))


@dataclass(frozen=True)
class ReservoirSpec:
    """One reservoir: temperature, modes and switching protocol."""

    beta: float
    modes: ModeSet
    switching: SwitchingProtocol = field(default_factory=SwitchingProtocol.off)
    name: str = ""

    def __post_init__(self):
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise DomainError("reservoir beta must be positive and finite")

    def __len__(self) -> int:
        return len(self.modes)

    def with_modes(self, modes: ModeSet) -> "ReservoirSpec":
        return replace(self, modes=modes)


@dataclass(frozen=True, eq=False)
class PhaseSample:
    """Positions and momenta of reservoir modes, shape ``(..., n_modes)``."""

    x: np.ndarray
    p: np.ndarray
    stage: str = PRE_QUENCH

    def __post_init__(self):
        x = np.asarray(self.x, float)
        p = np.asarray(self.p, float)
        if x.shape != p.shape:
            raise DomainError("x and p shapes differ")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise DomainError("phase sample has non-finite entries")
        if self.stage not in (PRE_QUENCH, POST_QUENCH):
            raise DomainError(f"unknown stage {self.stage!r}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def n_modes(self) -> int:
        return self.x.shape[-1]


def energy(sample: PhaseSample, modes: ModeSet) -> np.ndarray:
    """Free reservoir energy per mode."""
    return 0.5 * sample.p**2 / modes.m + 0.5 * modes.m * modes.omega**2 * sample.x**2


def sample_thermal(
    spec: ReservoirSpec,
    streams: StreamSet | int,
    trajectories=1,
    channel_offset: int = 1,
) -> PhaseSample:
    """Gibbs draw of every mode for a batch of trajectories.

    Parameters
    ----------
    spec : ReservoirSpec
    streams : StreamSet or int
        Random source (an int is taken as the master seed).
    trajectories : int or array of int
        Trajectory indices, or a count meaning ``0..count-1``.
    channel_offset : int
        Channel of this reservoir's first mode; mode ``k`` uses
        ``channel_offset + k`` so reservoirs never share a stream.

    Returns
    -------
    PhaseSample
        Pre-quench sample of shape ``(n_traj, n_modes)``.
    """
    if not isinstance(streams, StreamSet):
        streams = StreamSet(int(streams))
    traj = np.arange(trajectories) if np.ndim(trajectories) == 0 else np.asarray(trajectories)
    m, w = spec.modes.m, spec.modes.omega
    z = streams.draw_pairs(traj, channel_offset + np.arange(len(m)), TAG_INITIAL)
    x = z[..., 0] / np.sqrt(spec.beta * m * w**2)
    p = z[..., 1] * np.sqrt(m / spec.beta)
    return PhaseSample(x, p, PRE_QUENCH)


def _check(sample: PhaseSample, modes: ModeSet):
    if sample.n_modes != len(modes):
        raise DomainError(f"sample has {sample.n_modes} modes, mode set has {len(modes)}")


def apply_quench(sample: PhaseSample, modes: ModeSet) -> PhaseSample:
    """Squeeze then displace: ``x -> e^r x + L``, ``p -> e^-r p``."""
    _check(sample, modes)
    if sample.stage != PRE_QUENCH:
        raise StateError("quench already applied to this sample")
    return PhaseSample(
        np.exp(modes.r) * sample.x + modes.L,
        np.exp(-modes.r) * sample.p,
        POST_QUENCH,
    )


def apply_inverse_quench(sample: PhaseSample, modes: ModeSet) -> PhaseSample:
    """Undo :func:`apply_quench`: ``x -> e^-r (x - L)``, ``p -> e^r p``.

    This is the final operation of a time-reversed experiment. The returned
    sample is tagged pre-quench because it lives in the unquenched frame.
    """
    _check(sample, modes)
    return PhaseSample(
        np.exp(-modes.r) * (sample.x - modes.L),
        np.exp(modes.r) * sample.p,
        PRE_QUENCH,
    )


def quench_energy(pre: PhaseSample, post: PhaseSample, modes: ModeSet):
    """Squeeze and displacement energies injected per mode.

    Both are written in terms of the post-quench coordinates ``x(0), p(0)``:

        dE_sq = (1 - e^{-2r}) m w^2 x(0)^2 / 2 + (1 - e^{2r}) p(0)^2 / (2m)
        dE_dp = e^{-2r} m w^2 [x(0) L - L^2 / 2]

    so that their sum equals ``H(post) - H(pre)`` identically.

    Returns
    -------
    (ndarray, ndarray)
        Per-mode squeeze and displacement energies.
    """
    _check(pre, modes)
    _check(post, modes)
    if pre.x.shape != post.x.shape:
        raise DomainError("pre and post samples have different shapes")
    m, w, r, L = modes.m, modes.omega, modes.r, modes.L
    x0, p0 = post.x, post.p
    sq = -0.5 * np.expm1(-2 * r) * m * w**2 * x0**2 - 0.5 * np.expm1(2 * r) * p0**2 / m
    dp = np.exp(-2 * r) * m * w**2 * (x0 * L - 0.5 * L**2)
    return sq, dp
