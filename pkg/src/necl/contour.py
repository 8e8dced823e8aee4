"""Green's functions on the measurement-augmented Keldysh contour.

The contour of one reservoir is traversed as

    minus:     z = t,                 t from 0 to tau
    up:        z = tau + i zeta,      zeta from 0 to hbar*lam
    plus:      z = t + i hbar lam,    t from tau back to 0
    down:      z = i zeta,            zeta from hbar*lam back to 0
    matsubara: z = i zeta,            zeta from 0 to -hbar*beta

and the free Green's function of a mode of frequency ``omega`` is

    G(z, z') = (i/2) coth(hbar omega beta / 2) cos w(z - z')
               + [Theta(z - z') - 1/2] sin w(z - z')

with ``Theta`` the step function of the contour order above. ``gf`` evaluates
this definition from the embedding, while ``component`` uses the closed form
of each branch pair; the two are independent and cross-checked in the tests.

Vertical-branch integrals are done in closed form. Every integrand is a
combination of ``cos`` and ``sin`` of arguments linear in the contour
coordinate, so no quadrature on complex segments is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnsupportedError, ValidityError
from .reservoir import ReservoirSpec

MINUS = "minus"
UP = "up"
PLUS = "plus"
DOWN = "down"
MATSUBARA = "matsubara"
BRANCHES = (MINUS, UP, PLUS, DOWN, MATSUBARA)
VERTICAL = (UP, DOWN, MATSUBARA)
_RANK = {b: k for k, b in enumerate(BRANCHES)}
_TOL = 1e-12

SQUEEZE_GUARD = 0.5


@dataclass(frozen=True)
class GfParams:
    """Parameters of one reservoir mode on the contour.

    ``tau`` is only needed when a point sits on the ``up`` branch (or when
    real times should be range-checked against the protocol duration).
    """

    omega: float
    beta: float
    lam: float = 0.0
    hbar: float = 1.0
    r: float = 0.0
    tau: float | None = None

    def __post_init__(self):
        for name in ("omega", "beta", "hbar"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive and finite")
        if not (np.isfinite(self.lam) and np.isfinite(self.r)):
            raise DomainError("lam and r must be finite")
        if self.tau is not None and not (np.isfinite(self.tau) and self.tau >= 0):
            raise DomainError("tau must be non-negative")

    @property
    def coth(self) -> float:
        return 1.0 / math.tanh(0.5 * self.hbar * self.omega * self.beta)

    @property
    def A(self) -> complex:
        return 0.5j * self.coth


@dataclass(frozen=True)
class ContourPoint:
    """A point on the contour: branch name plus real coordinate (t or zeta)."""

    branch: str
    coordinate: float

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise DomainError(f"unknown branch {self.branch!r}")
        if not np.isfinite(self.coordinate):
            raise DomainError("coordinate must be finite")


class _Geometry:
    """Shape of a (possibly quenched) contour.

    ``lam_up`` and ``lam_down`` are the heights of the two measurement
    tracks and ``beta_m`` the length of the Matsubara track. On the ordinary
    contour both heights equal ``lam``; the quenched contour used for
    squeezing dilates the down and Matsubara tracks.
    """

    def __init__(self, omega, hbar, lam_up, lam_down, beta_m, tau):
        self.omega = omega
        self.hbar = hbar
        self.lam_up = lam_up
        self.lam_down = lam_down
        self.beta_m = beta_m
        self.tau = tau
        self.beta_eff = beta_m + lam_down - lam_up
        if self.beta_eff <= 0:
            raise DomainError("contour has non-positive total imaginary extent")
        self.A = 0.5j / math.tanh(0.5 * hbar * omega * self.beta_eff)
        # imaginary offset where the down track ends and the Matsubara track starts
        self.base = hbar * (lam_up - lam_down)

    @classmethod
    def of(cls, p: GfParams) -> "_Geometry":
        return cls(p.omega, p.hbar, p.lam, p.lam, p.beta, p.tau)

    @classmethod
    def quenched(cls, p: GfParams) -> "_Geometry":
        e = math.exp(2 * p.r)
        return cls(p.omega, p.hbar, p.lam, p.lam * e, p.beta * e, p.tau)

    def interval(self, branch: str) -> tuple[float, float]:
        """Coordinate range of a branch in traversal order."""
        h = self.hbar
        if branch == MINUS:
            return 0.0, self._need_tau()
        if branch == PLUS:
            return self._need_tau(), 0.0
        if branch == UP:
            return 0.0, h * self.lam_up
        if branch == DOWN:
            return h * self.lam_down, 0.0
        return 0.0, -h * self.beta_m

    def _need_tau(self) -> float:
        if self.tau is None:
            return np.inf
        return self.tau

    def check(self, branch: str, coord):
        lo, hi = sorted(self.interval(branch))
        c = np.asarray(coord, float)
        scale = _TOL * max(1.0, abs(lo), abs(hi) if np.isfinite(hi) else 1.0)
        if branch == UP and self.tau is None:
            raise DomainError("tau is required for points on the up branch")
        if np.any(c < lo - scale) or np.any(c > hi + scale):
            raise DomainError(f"coordinate outside the {branch} branch range [{lo}, {hi}]")

    def z(self, branch: str, coord):
        c = np.asarray(coord, float)
        if branch == MINUS:
            return c + 0j
        if branch == PLUS:
            return c + 1j * self.hbar * self.lam_up
        if branch == UP:
            return self.tau + 1j * c
        if branch == DOWN:
            return 1j * (self.base + c)
        return 1j * (self.base + c)

    def progress(self, branch: str, coord):
        """Monotone path parameter along a branch."""
        c = np.asarray(coord, float)
        if branch == MINUS:
            return c
        if branch == PLUS:
            return -c
        if branch == UP:
            return c * np.sign(self.lam_up)
        if branch == DOWN:
            return -c * np.sign(self.lam_down)
        return -c

    def theta(self, b1, c1, b2, c2):
        """Contour step Theta(z1 - z2), with 1/2 at coincident points."""
        if b1 != b2:
            return np.full(np.broadcast(np.asarray(c1), np.asarray(c2)).shape, float(_RANK[b1] > _RANK[b2]))
        return np.heaviside(self.progress(b1, c1) - self.progress(b2, c2), 0.5)

    def g(self, b1, c1, b2, c2):
        dz = self.z(b1, c1) - self.z(b2, c2)
        w = self.omega * dz
        return self.A * np.cos(w) + (self.theta(b1, c1, b2, c2) - 0.5) * np.sin(w)


def _scalar(v):
    v = np.asarray(v)
    return complex(v) if v.ndim == 0 else v


def embed(point: ContourPoint, p: GfParams) -> complex:
    """Complex contour coordinate of a point."""
    geo = _Geometry.of(p)
    geo.check(point.branch, point.coordinate)
    return complex(geo.z(point.branch, point.coordinate))


def theta(z1: ContourPoint, z2: ContourPoint, p: GfParams) -> float:
    """Contour-order step function Theta(z1 - z2)."""
    geo = _Geometry.of(p)
    return float(geo.theta(z1.branch, z1.coordinate, z2.branch, z2.coordinate))


def gf(z1: ContourPoint, z2: ContourPoint, p: GfParams) -> complex:
    """Contour Green's function from the branch embedding.

    Raises
    ------
    UnsupportedError
        If ``p.r`` is nonzero; use :func:`squeezed_correction` instead.
    """
    if p.r != 0:
        raise UnsupportedError("squeezed contour: use squeezed_correction")
    geo = _Geometry.of(p)
    for pt in (z1, z2):
        geo.check(pt.branch, pt.coordinate)
    return complex(geo.g(z1.branch, z1.coordinate, z2.branch, z2.coordinate))


def _step(x):
    return np.heaviside(x, 0.5) - 0.5


def _closed_form(i: str, j: str, a, b, hl: float, tau, sgn: float):
    """Argument and sine prefactor of component (i, j).

    Each component reads ``A cos w*arg + s sin w*arg``. Pairs not involving
    the measurement tracks are the textbook Keldysh-Matsubara components;
    the remaining ones follow from the ordering of the up and down tracks.
    """
    I = 1j
    if (i in (UP,) or j in (UP,)) and tau is None:
        raise DomainError("tau is required for components on the up branch")
    forms = {
        (MINUS, MINUS): lambda: (a - b, _step(a - b)),
        (PLUS, PLUS): lambda: (a - b, _step(b - a)),
        (PLUS, MINUS): lambda: (a - b + I * hl, 0.5),
        (MINUS, PLUS): lambda: (a - b - I * hl, -0.5),
        (MINUS, MATSUBARA): lambda: (a - I * b, -0.5),
        (MATSUBARA, MINUS): lambda: (I * a - b, 0.5),
        (PLUS, MATSUBARA): lambda: (a + I * hl - I * b, -0.5),
        (MATSUBARA, PLUS): lambda: (I * a - b - I * hl, 0.5),
        (MATSUBARA, MATSUBARA): lambda: (I * a - I * b, _step(b - a)),
        (MATSUBARA, UP): lambda: (I * a - I * b - tau, 0.5),
        (UP, MATSUBARA): lambda: (tau + I * a - I * b, -0.5),
        (UP, UP): lambda: (I * a - I * b, _step(sgn * (a - b))),
        (MINUS, UP): lambda: (a - tau - I * b, -0.5),
        (UP, MINUS): lambda: (tau + I * a - b, 0.5),
        (PLUS, UP): lambda: (a + I * hl - tau - I * b, 0.5),
        (UP, PLUS): lambda: (tau + I * a - b - I * hl, -0.5),
        (MINUS, DOWN): lambda: (a - I * b, -0.5),
        (DOWN, MINUS): lambda: (I * a - b, 0.5),
        (PLUS, DOWN): lambda: (a + I * hl - I * b, -0.5),
        (DOWN, PLUS): lambda: (I * a - b - I * hl, 0.5),
        (DOWN, DOWN): lambda: (I * a - I * b, _step(sgn * (b - a))),
        (DOWN, UP): lambda: (I * a - tau - I * b, 0.5),
        (UP, DOWN): lambda: (tau + I * a - I * b, -0.5),
        (MATSUBARA, DOWN): lambda: (I * a - I * b, 0.5),
        (DOWN, MATSUBARA): lambda: (I * a - I * b, -0.5),
    }
    return forms[(i, j)]()


def component(i: str, j: str, a, b, p: GfParams):
    """Closed-form component ``G^{i,j}`` at coordinates ``(a, b)``.

    Parameters
    ----------
    i, j : str
        Branch names from :data:`BRANCHES`.
    a, b : float or array_like
        Real time on ``minus``/``plus``, zeta on the vertical branches.
        Arrays broadcast.
    p : GfParams

    Notes
    -----
    On the measurement tracks the step function follows the traversal
    direction, so for ``lam < 0`` the roles of ``zeta > zeta'`` and
    ``zeta < zeta'`` swap relative to the ``lam > 0`` case.
    """
    if i not in BRANCHES or j not in BRANCHES:
        raise DomainError(f"unknown branch pair ({i!r}, {j!r})")
    geo = _Geometry.of(p)
    geo.check(i, a)
    geo.check(j, b)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    arg, s = _closed_form(i, j, a, b, p.hbar * p.lam, p.tau, float(np.sign(p.lam)))
    w = p.omega * arg
    return _scalar(p.A * np.cos(w) + s * np.sin(w))


def component_dt(i: str, j: str, a, b, p: GfParams):
    """Derivative of ``G^{i,j}`` with respect to a real-time first argument."""
    if i not in (MINUS, PLUS):
        raise DomainError("time derivative needs a real-time first branch")
    geo = _Geometry.of(p)
    geo.check(i, a)
    geo.check(j, b)
    arg, s = _closed_form(i, j, np.asarray(a, float), np.asarray(b, float), p.hbar * p.lam, p.tau, float(np.sign(p.lam)))
    w = p.omega * arg
    return _scalar(p.omega * (-p.A * np.sin(w) + s * np.cos(w)))


_ROT = np.array(
    [
        [1.0, 1.0, -1.0, -1.0],
        [0.5, -0.5, -0.5, 0.5],
        [0.5, -0.5, 0.5, -0.5],
        [0.25, 0.25, 0.25, 0.25],
    ]
)
_UNROT = np.linalg.inv(_ROT)
ROTATED = ("cl,cl", "cl,q", "q,cl", "q,q")


def rotate(gmm, gpp, gpm, gmp) -> dict:
    """Keldysh rotation of ``(G^{--}, G^{++}, G^{+-}, G^{-+})``."""
    stack = np.stack(np.broadcast_arrays(*map(np.asarray, (gmm, gpp, gpm, gmp))))
    out = np.tensordot(_ROT, stack, axes=1)
    return {k: _scalar(v) for k, v in zip(ROTATED, out)}


def unrotate(rotated: dict) -> tuple:
    """Inverse of :func:`rotate`, returning ``(G^{--}, G^{++}, G^{+-}, G^{-+})``."""
    stack = np.stack(np.broadcast_arrays(*[np.asarray(rotated[k]) for k in ROTATED]))
    out = np.tensordot(_UNROT, stack, axes=1)
    return tuple(_scalar(v) for v in out)


def keldysh_rotate(t, t2, p: GfParams, vertical: dict | None = None) -> dict:
    """Rotated components at real times ``(t, t2)``.

    Parameters
    ----------
    t, t2 : float or array_like
    p : GfParams
    vertical : dict, optional
        Maps a vertical branch name to a coordinate ``zeta``. For each entry
        the pair ``G^{cl,j} = G^{-,j} - G^{+,j}`` and
        ``G^{q,j} = (G^{-,j} + G^{+,j}) / 2`` is added under the keys
        ``"cl,<j>"`` and ``"q,<j>"``.
    """
    out = rotate(
        component(MINUS, MINUS, t, t2, p),
        component(PLUS, PLUS, t, t2, p),
        component(PLUS, MINUS, t, t2, p),
        component(MINUS, PLUS, t, t2, p),
    )
    for j, zeta in (vertical or {}).items():
        if j not in VERTICAL:
            raise DomainError(f"{j!r} is not a vertical branch")
        gm = component(MINUS, j, t, zeta, p)
        gp = component(PLUS, j, t, zeta, p)
        out[f"cl,{j}"] = _scalar(np.asarray(gm) - np.asarray(gp))
        out[f"q,{j}"] = _scalar(0.5 * (np.asarray(gm) + np.asarray(gp)))
    return out


def rotated_closed_form(t, t2, p: GfParams) -> dict:
    """Closed forms of the four rotated real-time components."""
    D = p.omega * (np.asarray(t, float) - np.asarray(t2, float))
    x = 1j * p.omega * p.hbar * p.lam
    C = p.coth
    sg = np.sign(D)
    cx, sx = np.cos(x), np.sin(x)
    return {
        "cl,cl": _scalar(1j * C * np.cos(D) * (1 - cx) - np.cos(D) * sx),
        "cl,q": _scalar((0.5 * sg - 0.5 * cx) * np.sin(D) + 0.5j * C * np.sin(D) * sx),
        "q,cl": _scalar((0.5 * sg + 0.5 * cx) * np.sin(D) - 0.5j * C * np.sin(D) * sx),
        "q,q": _scalar(0.25j * C * np.cos(D) * (1 + cx) + 0.25 * np.cos(D) * sx),
    }


def classical_expansion(t, t2, p: GfParams) -> dict:
    """Leading small-hbar terms of the rotated components."""
    w, b, lam, h = p.omega, p.beta, p.lam, p.hbar
    D = w * (np.asarray(t, float) - np.asarray(t2, float))
    sg = np.sign(D)
    return {
        "q,q": _scalar(1j * np.cos(D) / (h * w * b)),
        "cl,cl": _scalar(-1j * h * w * (lam**2 / b + lam) * np.cos(D)),
        "cl,q": _scalar((0.5 * sg - 0.5) * np.sin(D) - lam / b * np.sin(D)),
        "q,cl": _scalar((0.5 * sg + 0.5) * np.sin(D) + lam / b * np.sin(D)),
    }


EXPECTED_REMAINDER_ORDER = {"q,q": 1, "cl,cl": 3, "cl,q": 2, "q,cl": 2}


@dataclass(frozen=True)
class ClassicalLimitReport:
    """Remainder of a rotated component after its leading small-hbar term."""

    component: str
    hbars: tuple[float, ...]
    exact: tuple[complex, ...]
    leading: tuple[complex, ...]
    remainder: tuple[float, ...]
    fitted_order: float
    expected_order: int

    @property
    def consistent(self) -> bool:
        """Fitted order within 0.1 of the expected one (or remainder exactly 0)."""
        if not np.isfinite(self.fitted_order):
            return max(self.remainder) == 0.0
        return abs(self.fitted_order - self.expected_order) < 0.1


def classical_limit_check(
    component_id: str,
    t: float,
    t2: float,
    lam: float,
    beta: float,
    omega: float = 1.0,
    hbars=(1e-1, 1e-2, 1e-3),
) -> ClassicalLimitReport:
    """Fit the order in hbar of ``|exact - leading|`` across a ladder.

    The exact value is obtained by rotating the branch components, the
    leading term from :func:`classical_expansion`. The order is the
    least-squares slope of ``log|remainder|`` against ``log hbar``.
    """
    if component_id not in EXPECTED_REMAINDER_ORDER:
        raise DomainError(f"unknown rotated component {component_id!r}")
    ex, le, rem = [], [], []
    for h in hbars:
        p = GfParams(omega, beta, lam, h)
        e = keldysh_rotate(t, t2, p)[component_id]
        l = classical_expansion(t, t2, p)[component_id]
        ex.append(complex(e))
        le.append(complex(l))
        rem.append(abs(e - l))
    r = np.asarray(rem)
    if np.all(r > 0):
        order = float(np.polyfit(np.log(hbars), np.log(r), 1)[0])
    else:
        order = math.inf
    return ClassicalLimitReport(
        component_id, tuple(hbars), tuple(ex), tuple(le), tuple(rem), order, EXPECTED_REMAINDER_ORDER[component_id]
    )


def fdr_residual(t: float, t2: float, p: GfParams, printed_coefficient: bool = False, step: float = 1e-5) -> complex:
    """Residual of the quantum fluctuation-dissipation relation at lam = 0.

    Returns ``dG^{q,q}/dt + (i/2) w coth(hbar beta w / 2) [G^{q,cl} - G^{cl,q}]``,
    which vanishes identically for an equilibrium or displaced reservoir.
    ``printed_coefficient=True`` uses ``i w coth`` instead of ``(i/2) w coth``
    and leaves a nonzero residual; it exists to document that variant.

    For ``p.r != 0`` the squeezed first-order Green's function replaces the
    equilibrium one, with ``beta e^{2r}`` in the coth, and the time
    derivative is a central difference of size ``step``.
    """
    if p.lam != 0:
        raise DomainError("the fluctuation-dissipation relation is stated at lam = 0")
    k = 1.0 if printed_coefficient else 0.5
    if p.r == 0:
        pairs = ((MINUS, MINUS), (PLUS, PLUS), (PLUS, MINUS), (MINUS, PLUS))
        dqq = 0.25 * sum(complex(component_dt(i, j, t, t2, p)) for i, j in pairs)
        rot = keldysh_rotate(t, t2, p)
        coth = p.coth
    else:

        def qq_at(tt):
            return _squeezed_rotated(tt, t2, p)["q,q"]

        dqq = (qq_at(t + step) - qq_at(t - step)) / (2 * step)
        rot = _squeezed_rotated(t, t2, p)
        coth = 1.0 / math.tanh(0.5 * p.hbar * p.omega * p.beta * math.exp(2 * p.r))
    return complex(dqq + 1j * k * p.omega * coth * (rot["q,cl"] - rot["cl,q"]))


@dataclass(frozen=True)
class SymmetryResiduals:
    probability: complex
    periodic: complex


def symmetry_residuals(p: GfParams, times=None, zetas=None) -> SymmetryResiduals:
    """Probability-conservation and periodic-protocol residuals.

    ``probability`` is ``G^{++} + G^{--} - G^{+-} - G^{-+}`` at ``times``; it
    vanishes when ``p.lam == 0``. ``periodic`` is
    ``G^{up,up} + G^{down,down} - G^{down,up} - G^{up,down}`` at ``zetas``;
    it vanishes when ``p.tau`` is a multiple of ``2 pi / omega``.
    """
    if p.tau is None:
        raise DomainError("symmetry_residuals needs p.tau")
    t, t2 = times if times is not None else (0.37 * p.tau, 0.81 * p.tau)
    h = p.hbar * p.lam
    z, z2 = zetas if zetas is not None else (0.3 * h, 0.7 * h)
    prob = (
        component(PLUS, PLUS, t, t2, p)
        + component(MINUS, MINUS, t, t2, p)
        - component(PLUS, MINUS, t, t2, p)
        - component(MINUS, PLUS, t, t2, p)
    )
    per = (
        component(UP, UP, z, z2, p)
        + component(DOWN, DOWN, z, z2, p)
        - component(DOWN, UP, z, z2, p)
        - component(UP, DOWN, z, z2, p)
    )
    return SymmetryResiduals(complex(prob), complex(per))


# closed-form contour integrals -------------------------------------------


def _cos_rect(z0, z1, w0, w1, omega):
    """Double integral of cos w(z - z') over two straight segments."""

    def F(z, w):
        return np.cos(omega * (z - w)) / omega**2

    return F(z1, w1) - F(z1, w0) - F(z0, w1) + F(z0, w0)


def _sin_rect(z0, z1, w0, w1, omega):
    def F(z, w):
        return np.sin(omega * (z - w)) / omega**2

    return F(z1, w1) - F(z1, w0) - F(z0, w1) + F(z0, w0)


def _g_rect(z0, z1, w0, w1, A, s, omega):
    """Double integral of G over two segments with a fixed order between them."""
    return A * _cos_rect(z0, z1, w0, w1, omega) + s * _sin_rect(z0, z1, w0, w1, omega)


def _g_self(z0, z1, A, omega):
    """Double integral of G over one segment against itself."""
    ell = z1 - z0
    return A * _cos_rect(z0, z1, z0, z1, omega) + ell / omega - np.sin(omega * ell) / omega**2


def _g_line(z, w0, w1, A, s, omega):
    """Integral of G(z, w) over w along a segment not containing z."""
    return (-A * np.sin(omega * (z - w1)) + s * np.cos(omega * (z - w1))) / omega - (
        -A * np.sin(omega * (z - w0)) + s * np.cos(omega * (z - w0))
    ) / omega


def _trapezoid_weights(t: np.ndarray) -> np.ndarray:
    dt = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def influence_action(x_minus, x_plus, reservoir: ReservoirSpec, lam: float, hbar: float, times) -> complex:
    """Influence action of one reservoir on a pair of system paths.

    The reservoir modes are integrated out exactly, leaving

        S = sum_k 1/(2 m w) [ sum_{l,j=+-} l j int int c^2 v_l v_j G^{lj} dt dt'
                              + cross terms with the down/Matsubara tracks
                              + the down/Matsubara self term ]
            + i hbar (beta + lam) m w^2 L^2 / 2

    with ``v = chi(t) x(t)`` on the real branches and the constant potential
    ``-m w^2 L`` on the down and Matsubara tracks (the up track carries none).
    The real-time double integral uses the 2-D trapezoid rule on ``times``
    (O(h^2)); every integral touching a vertical track is analytic.

    Parameters
    ----------
    x_minus, x_plus : array_like
        Forward and backward paths sampled on ``times``.
    reservoir : ReservoirSpec
        Must not be squeezed.
    lam, hbar : float
    times : array_like
        Increasing grid starting at 0.

    Returns
    -------
    complex
    """
    modes = reservoir.modes
    if np.any(modes.r != 0):
        raise UnsupportedError("influence_action supports equilibrium and displaced reservoirs only")
    t = np.asarray(times, float)
    xm = np.asarray(x_minus, float)
    xp = np.asarray(x_plus, float)
    if xm.shape != t.shape or xp.shape != t.shape or t.ndim != 1 or t.size < 2:
        raise DomainError("paths and time grid must be 1-D arrays of equal length")
    if np.any(np.diff(t) <= 0):
        raise DomainError("time grid must be increasing")
    chi = np.asarray(reservoir.switching.value(t), float)
    v = {MINUS: chi * xm, PLUS: chi * xp}
    sgn = {MINUS: 1.0, PLUS: -1.0}
    w = _trapezoid_weights(t)
    T, T2 = np.meshgrid(t, t, indexing="ij")
    beta = reservoir.beta
    total = 0j
    for m, om, c, L in zip(modes.m, modes.omega, modes.c, modes.L):
        p = GfParams(om, beta, lam, hbar, tau=float(t[-1]))
        A = p.A
        real = 0j
        for i in (MINUS, PLUS):
            for j in (MINUS, PLUS):
                G = np.asarray(component(i, j, T, T2, p))
                real += sgn[i] * sgn[j] * ((w * v[i]) @ G @ (w * v[j]))
        total += c**2 / (2 * m * om) * real
        if L == 0:
            continue
        geo = _Geometry.of(p)
        top, mid, bot = 1j * hbar * lam, 0j, -1j * hbar * beta
        # the real branches precede both tracks, hence the fixed -1/2
        cross = 0j
        for i in (MINUS, PLUS):
            z = geo.z(i, t)
            line = _g_line(z, top, bot, A, -0.5, om)
            cross += sgn[i] * np.sum(w * v[i] * line)
        total += -om * L * c * cross
        vv = _g_self(top, mid, A, om) + _g_self(mid, bot, A, om) + 2 * _g_rect(mid, bot, top, mid, A, 0.5, om)
        U = m * om**2 * L
        total += U**2 / (2 * m * om) * vv
        total += 1j * hbar * (beta + lam) * 0.5 * m * om**2 * L**2
    return complex(total)


# squeezed first-order correction -----------------------------------------


def _track_integral(geo: _Geometry, b1, c1, b2, c2, track: str):
    """Integral of G(z1, zb) G(zb, z2) over zb along one vertical track."""
    start, end = geo.interval(track)
    cuts = [start, end]
    for b, c in ((b1, c1), (b2, c2)):
        if b == track:
            cuts.append(float(c))
    lo, hi = min(start, end), max(start, end)
    cuts = sorted(set(min(max(x, lo), hi) for x in cuts), reverse=start > end)
    om, A = geo.omega, geo.A
    z1 = complex(geo.z(b1, c1))
    z2 = complex(geo.z(b2, c2))
    S = om * (z1 - z2)
    total = 0j
    for u0, u1 in zip(cuts[:-1], cuts[1:]):
        if u0 == u1:
            continue
        um = 0.5 * (u0 + u1)
        s1 = float(geo.theta(b1, c1, track, um)) - 0.5
        s2 = float(geo.theta(track, um, b2, c2)) - 0.5
        Z0 = complex(geo.z(track, u0))
        Z1 = complex(geo.z(track, u1))
        D0 = om * (z1 + z2 - 2 * Z0)
        D1 = om * (z1 + z2 - 2 * Z1)
        const = 0.5 * np.cos(S) * (A * A - s1 * s2) + 0.5 * np.sin(S) * A * (s1 + s2)
        total += const * (Z1 - Z0)
        total += 0.5 * (A * A + s1 * s2) * (np.sin(D1) - np.sin(D0)) / (-2 * om)
        total += 0.5 * A * (s1 - s2) * (np.cos(D1) - np.cos(D0)) / (2 * om)
    return total


def squeezed_correction(z1: ContourPoint, z2: ContourPoint, p: GfParams) -> complex:
    """First-order Green's function of a squeezed mode.

    Squeezing is represented as a frequency quench ``w -> W = w e^{-2r}`` on
    the down and Matsubara tracks, which are dilated by ``e^{2r}`` (the up
    track belongs to the final measurement and keeps ``w``). Writing
    ``eps = W^2 - w^2``,

        G_sq = G + eps * G1,   G1(z, z') = -(1/w) int_{down*, M*} G(z, zb) G(zb, z') dzb

    where ``G`` is the free function on the quenched contour, whose total
    imaginary extent is ``hbar [beta e^{2r} + lam (e^{2r} - 1)]``. Vertical
    coordinates refer to the dilated tracks.

    Raises
    ------
    ValidityError
        If ``|e^{4r} - 1| > 0.5``, where first order is not trustworthy.
    """
    if abs(math.expm1(4 * p.r)) > SQUEEZE_GUARD:
        raise ValidityError(f"|e^(4r) - 1| = {abs(math.expm1(4 * p.r)):.3g} exceeds {SQUEEZE_GUARD}")
    geo = _Geometry.quenched(p)
    for pt in (z1, z2):
        geo.check(pt.branch, pt.coordinate)
    b1, c1, b2, c2 = z1.branch, z1.coordinate, z2.branch, z2.coordinate
    g0 = complex(geo.g(b1, c1, b2, c2))
    if p.r == 0:
        return g0
    eps = p.omega**2 * math.expm1(-4 * p.r)
    g1 = -(_track_integral(geo, b1, c1, b2, c2, DOWN) + _track_integral(geo, b1, c1, b2, c2, MATSUBARA)) / p.omega
    return complex(g0 + eps * g1)


def _squeezed_rotated(t, t2, p: GfParams) -> dict:
    def G(i, j):
        return squeezed_correction(ContourPoint(i, t), ContourPoint(j, t2), p)

    return rotate(G(MINUS, MINUS), G(PLUS, PLUS), G(PLUS, MINUS), G(MINUS, PLUS))


def squeezed_rotated(t: float, t2: float, p: GfParams) -> dict:
    """Keldysh-rotated real-time components of the squeezed first-order function."""
    return _squeezed_rotated(t, t2, p)
