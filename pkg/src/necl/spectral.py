"""Spectral densities and their discretization into finite mode sets.

A reservoir is a collection of harmonic modes with masses ``m_k``, frequencies
``omega_k`` and couplings ``c_k``. Its coupling-weighted density of states is

    J(omega) = (pi/2) sum_k c_k^2 / (m_k omega_k) delta(omega - omega_k),

and the displacement-weighted analogue is

    K(omega) = (pi/2) sum_k c_k L_k exp(-2 r_k) delta(omega - omega_k).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError

OHMIC = "ohmic-exponential-cutoff"
SINGLE_MODE = "single-mode-delta"
TABULATED = "tabulated"
KINDS = (OHMIC, SINGLE_MODE, TABULATED)

MIDPOINT = "midpoint"
GAUSS_LEGENDRE = "gauss-legendre"
SCHEMES = (MIDPOINT, GAUSS_LEGENDRE)


@dataclass(frozen=True)
class SpectralDensity:
    """A continuous (or point-mass) spectral density.

    Parameters
    ----------
    kind : str
        One of ``"ohmic-exponential-cutoff"``, ``"single-mode-delta"`` or
        ``"tabulated"``.
    eta, omega_c : float
        Coupling strength and cutoff of the ohmic form ``eta w exp(-w/omega_c)``.
    table : tuple of (omega, J) pairs, optional
        Samples of a tabulated density, linearly interpolated and zero
        outside the sampled range.
    mass, omega0, coupling : float
        Parameters of the single-mode kind.
    """

    kind: str = OHMIC
    eta: float = 1.0
    omega_c: float = 1.0
    table: tuple[tuple[float, float], ...] | None = None
    mass: float = 1.0
    omega0: float = 1.0
    coupling: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown spectral density kind {self.kind!r}")
        if self.kind == OHMIC and (self.eta < 0 or self.omega_c <= 0):
            raise DomainError("ohmic density needs eta >= 0 and omega_c > 0")
        if self.kind == SINGLE_MODE and (self.mass <= 0 or self.omega0 <= 0):
            raise DomainError("single mode needs positive mass and frequency")
        if self.kind == TABULATED:
            if not self.table or len(self.table) < 2:
                raise DomainError("tabulated density needs at least two samples")
            w = np.array([p[0] for p in self.table], dtype=float)
            j = np.array([p[1] for p in self.table], dtype=float)
            if np.any(np.diff(w) <= 0):
                raise DomainError("tabulated frequencies must be strictly increasing")
            if np.any(w < 0) or np.any(j < 0):
                raise DomainError("tabulated density must be nonnegative on w >= 0")

    @classmethod
    def ohmic(cls, eta: float = 1.0, omega_c: float = 1.0) -> "SpectralDensity":
        return cls(OHMIC, eta=eta, omega_c=omega_c)

    @classmethod
    def single_mode(cls, mass: float, omega0: float, coupling: float) -> "SpectralDensity":
        return cls(SINGLE_MODE, mass=mass, omega0=omega0, coupling=coupling)

    @classmethod
    def from_table(cls, pairs: Iterable[Sequence[float]]) -> "SpectralDensity":
        return cls(TABULATED, table=tuple((float(a), float(b)) for a, b in pairs))

    @classmethod
    def from_csv(cls, path: str | Path) -> "SpectralDensity":
        """Read a two-column ``omega, J`` CSV file (a header row is allowed)."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise DomainError(f"malformed row {row!r} in {path}")
        return cls.from_table(rows)

    @property
    def point_weight(self) -> float:
        """Weight (pi/2) c^2 / (m omega0) of the single-mode kind."""
        return 0.5 * np.pi * self.coupling**2 / (self.mass * self.omega0)


def evaluate_J(spec: SpectralDensity, omega):
    """Evaluate the spectral density.

    For the single-mode kind the point weight is returned at ``omega0`` and
    zero elsewhere; callers treat it as the mass of a delta function.

    Raises
    ------
    DomainError
        If any frequency is negative.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise DomainError("spectral density evaluated at negative frequency")
    if spec.kind == OHMIC:
        out = spec.eta * w * np.exp(-w / spec.omega_c)
    elif spec.kind == SINGLE_MODE:
        out = np.where(np.isclose(w, spec.omega0, rtol=1e-12, atol=0.0), spec.point_weight, 0.0)
    else:
        tw = np.array([p[0] for p in spec.table])
        tj = np.array([p[1] for p in spec.table])
        out = np.interp(w, tw, tj, left=0.0, right=0.0)
    return float(out) if out.ndim == 0 else out


def integrate_J(spec: SpectralDensity, a: float, b: float) -> float:
    """Integral of J over ``[a, b]`` (exact for ohmic and single-mode kinds)."""
    if a < 0 or b < a:
        raise DomainError("integration interval must satisfy 0 <= a <= b")
    if spec.kind == OHMIC:
        wc = spec.omega_c

        def prim(w):
            return -spec.eta * wc * np.exp(-w / wc) * (w + wc)

        return float(prim(b) - prim(a))
    if spec.kind == SINGLE_MODE:
        return spec.point_weight if a <= spec.omega0 <= b else 0.0
    tw = np.array([p[0] for p in spec.table])
    pts = [w for w in tw if a < w < b]
    val, _ = integrate.quad(lambda w: evaluate_J(spec, w), a, b, points=pts or None, limit=500)
    return float(val)


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Discrete reservoir modes.

    All arrays share one length. ``r`` is the real squeeze parameter and
    ``L`` the real position displacement applied to each mode.
    """

    m: np.ndarray
    omega: np.ndarray
    c: np.ndarray
    r: np.ndarray = field(default=None)
    L: np.ndarray = field(default=None)

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        n = m.size
        arrays = {"m": m}
        for name in ("omega", "c", "r", "L"):
            val = getattr(self, name)
            arr = np.zeros(n) if val is None else np.atleast_1d(np.asarray(val, dtype=float))
            if arr.size == 1 and n > 1:
                arr = np.full(n, float(arr[0]))
            if arr.shape != (n,):
                raise DomainError(f"mode field {name} has shape {arr.shape}, expected ({n},)")
            arrays[name] = arr
        if n == 0:
            raise DomainError("a mode set needs at least one mode")
        if np.any(arrays["m"] <= 0) or np.any(arrays["omega"] <= 0):
            raise DomainError("mode masses and frequencies must be positive")
        for name, arr in arrays.items():
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"mode field {name} is not finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.m.size

    @classmethod
    def single(cls, m=1.0, omega=1.0, c=1.0, r=0.0, L=0.0) -> "ModeSet":
        return cls([m], [omega], [c], [r], [L])

    def with_quench(self, r=None, L=None) -> "ModeSet":
        """Copy with new squeeze and/or displacement parameters."""
        return replace(
            self,
            r=self.r if r is None else np.broadcast_to(np.asarray(r, float), self.m.shape).copy(),
            L=self.L if L is None else np.broadcast_to(np.asarray(L, float), self.m.shape).copy(),
        )

    def j_weights(self) -> np.ndarray:
        """Point weights (pi/2) c^2/(m omega) of the discrete J."""
        return 0.5 * np.pi * self.c**2 / (self.m * self.omega)

    @property
    def has_quench(self) -> bool:
        return bool(np.any(self.r != 0) or np.any(self.L != 0))


def _select(modes: ModeSet, weights: np.ndarray, omega):
    if omega is None:
        return weights
    if omega < 0:
        raise DomainError("negative frequency")
    hit = np.isclose(modes.omega, omega, rtol=1e-12, atol=0.0)
    return float(np.sum(weights[hit]))


def evaluate_K(modes: ModeSet, omega: float | None = None):
    """Displacement density weights (pi/2) c L exp(-2r).

    With ``omega=None`` returns the per-mode weights, otherwise the total
    point weight sitting at that frequency.
    """
    w = 0.5 * np.pi * modes.c * modes.L * np.exp(-2.0 * modes.r)
    return _select(modes, w, omega)


def squeezed_densities(modes: ModeSet, omega: float | None = None):
    """Squeezed spectral weights.

    Returns
    -------
    (calJ, dcalJ)
        ``calJ = (pi/2) M c^2/(m^2 omega)`` with ``M = exp(-2r) m`` and
        ``dcalJ = n calJ`` with ``n = exp(4r) - 1``. Per mode if ``omega`` is
        None, else the summed weights at ``omega``.
    """
    M = np.exp(-2.0 * modes.r) * modes.m
    calj = 0.5 * np.pi * M * modes.c**2 / (modes.m**2 * modes.omega)
    n = np.expm1(4.0 * modes.r)
    return _select(modes, calj, omega), _select(modes, n * calj, omega)


def discretize(
    spec: SpectralDensity,
    count: int,
    omega_max: float | None = None,
    scheme: str = GAUSS_LEGENDRE,
) -> ModeSet:
    """Turn a continuous density into ``count`` unit-mass modes.

    Frequencies are Gauss-Legendre nodes (default) or cell midpoints on
    ``[0, omega_max]``; each coupling is chosen so that the mode's point weight
    equals the integral of J over its cell (the quadrature weight times J at
    the node for Gauss-Legendre). ``omega_max`` defaults to ``10 omega_c``.
    """
    if spec.kind == SINGLE_MODE:
        return ModeSet.single(spec.mass, spec.omega0, spec.coupling)
    if count is None or int(count) < 1:
        raise DomainError("mode count must be >= 1")
    count = int(count)
    if omega_max is None:
        omega_max = 10.0 * spec.omega_c if spec.kind == OHMIC else spec.table[-1][0]
    if not omega_max > 0:
        raise DomainError("omega_max must be positive")
    if scheme == GAUSS_LEGENDRE:
        x, w = np.polynomial.legendre.leggauss(count)
        omega = 0.5 * omega_max * (x + 1.0)
        cell = 0.5 * omega_max * w * evaluate_J(spec, omega)
    elif scheme == MIDPOINT:
        edges = np.linspace(0.0, omega_max, count + 1)
        omega = 0.5 * (edges[1:] + edges[:-1])
        cell = np.array([integrate_J(spec, a, b) for a, b in zip(edges[:-1], edges[1:])])
    else:
        raise DomainError(f"unknown discretization scheme {scheme!r}")
    cell = np.clip(cell, 0.0, None)
    m = np.ones(count)
    c = np.sqrt(2.0 / np.pi * m * omega * cell)
    return ModeSet(m, omega, c)
