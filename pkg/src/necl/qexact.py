"""Dense truncated-Fock-space quantum oracle.

Every oscillator (the system's reference oscillator and each reservoir
mode) is truncated to its lowest ``cutoff`` number states and the full
problem lives on the tensor product. Ladder operators follow

    a = sqrt(m w / 2 hbar) (X + i P / (m w)),
    S(r) = exp((r* a^2 - r a^dag^2) / 2),   D(a) = exp(a a^dag - a* a),

and a quenched reservoir mode starts in ``D^dag S^dag rho_th S D`` so that
its mean position is ``L = -sqrt(2 hbar / m w) Re alpha``. Coupling is
switched on hard at ``t=0`` and off at ``t=tau``; the propagator on the
window is a single exponential of a time-independent Hamiltonian.

Truncated generators are exponentiated exactly, so quench operators and
the propagator are unitary on the truncated space. Truncation bias is
controlled by :func:`ladder_check`, which repeats a computation with every
cutoff raised by a fixed step.

Operator dumps use :func:`dump_operator`: two little-endian ``int64`` words
(rows, columns) followed by row-major little-endian ``float64`` pairs
``(real, imag)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.hermite_e import hermegauss

from .errors import (
    DomainError,
    NumericalStateError,
    PreconditionError,
    PrecisionError,
    UnsupportedError,
)
from .microdyn import THERMAL, SystemSpec
from .reservoir import ReservoirSpec
from .spectral import ModeSet

DEFAULT_BUDGET = 4096
TAG_TOLERANCE = 1e-10
EIGEN_FLOOR = -1e-12
LADDER_STEP = 4
LADDER_TOLERANCE = 1e-6
EDGE_TOLERANCE = 1e-8

# Fourth-order commutator-free Magnus coefficients (two exponentials per step).
_CF4_NODES = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)
_CF4_A = ((3 - 2 * np.sqrt(3)) / 12, (3 + 2 * np.sqrt(3)) / 12)


# ---------------------------------------------------------------------------
# spaces and operators


@dataclass(frozen=True)
class Mode:
    """One truncated oscillator."""

    mass: float
    omega: float
    cutoff: int

    def __post_init__(self):
        if self.cutoff < 2:
            raise DomainError("Fock cutoff must be at least 2")
        if not (self.mass > 0 and self.omega > 0):
            raise DomainError("mode mass and frequency must be positive")


@dataclass(frozen=True)
class FockSpace:
    """Tensor product of truncated oscillators; mode 0 is the system."""

    modes: tuple[Mode, ...]
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise DomainError("a Fock space needs at least one mode")
        if self.dim > self.budget:
            raise DomainError(f"tensor dimension {self.dim} exceeds the budget {self.budget}")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.cutoff for m in self.modes)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def enlarged(self, step: int = LADDER_STEP) -> "FockSpace":
        return replace(self, modes=tuple(replace(m, cutoff=m.cutoff + step) for m in self.modes))


@dataclass
class DenseOperator:
    """A dense matrix with optional hermiticity and unitarity tags.

    Tags are verified on construction to ``1e-10`` in max-norm.
    """

    matrix: np.ndarray
    hermitian: bool = False
    unitary: bool = False

    def __post_init__(self):
        A = np.asarray(self.matrix)
        if self.hermitian and np.max(np.abs(A - A.conj().T), initial=0.0) > TAG_TOLERANCE:
            raise NumericalStateError("operator tagged hermitian is not")
        if self.unitary:
            err = np.max(np.abs(A.conj().T @ A - np.eye(A.shape[0])), initial=0.0)
            if err > TAG_TOLERANCE:
                raise NumericalStateError(f"operator tagged unitary deviates by {err:.2e}")
        self.matrix = A

    @property
    def H(self) -> np.ndarray:
        return self.matrix.conj().T


@dataclass(frozen=True)
class LocalOperators:
    """Truncated single-mode matrices."""

    a: np.ndarray
    X: np.ndarray
    P: np.ndarray
    H: np.ndarray
    number: np.ndarray

    @property
    def adag(self) -> np.ndarray:
        return self.a.conj().T


def annihilation(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1)


def quadratures(n: int, mass: float, omega: float, hbar: float) -> tuple[np.ndarray, np.ndarray]:
    """Real-symmetric X and Hermitian P on ``n`` number states."""
    a = annihilation(n)
    X = np.sqrt(hbar / (2 * mass * omega)) * (a + a.T)
    P = 1j * np.sqrt(hbar * mass * omega / 2) * (a.T - a)
    return X, P


def mode_operators(mode: Mode, hbar: float = 1.0) -> LocalOperators:
    n = mode.cutoff
    a = annihilation(n).astype(complex)
    X, P = quadratures(n, mode.mass, mode.omega, hbar)
    num = np.arange(n, dtype=float)
    H = np.diag(hbar * mode.omega * (num + 0.5))
    return LocalOperators(a=a, X=X.astype(complex), P=P, H=H.astype(complex), number=np.diag(num))


def build_operators(space: FockSpace, hbar: float = 1.0) -> list[LocalOperators]:
    """Ladder, position, momentum and free Hamiltonian of every mode.

    The matrices act on a single factor; use :func:`embed` for the full
    space. ``[X, P] = i hbar`` holds exactly below the top number state.
    """
    return [mode_operators(m, hbar) for m in space.modes]


def embed(ops: dict[int, np.ndarray], dims: Sequence[int]) -> np.ndarray:
    """Tensor product with identities on the factors not listed in ``ops``."""
    out = np.ones((1, 1))
    for k, d in enumerate(dims):
        out = np.kron(out, ops.get(k, np.eye(d)))
    return out


def polynomial_operator(poly: Polynomial, mode: Mode, hbar: float = 1.0, kinetic: bool = False) -> np.ndarray:
    """Exact matrix elements of ``poly(X)`` (plus ``P^2/2m``) in the truncated basis.

    Powers are formed on an enlarged basis and then projected, which avoids
    the spurious edge terms of powers of truncated matrices.
    """
    deg = max(poly.degree(), 2)
    X, P = quadratures(mode.cutoff + deg, mode.mass, mode.omega, hbar)
    out = np.zeros_like(X)
    power = np.eye(X.shape[0])
    for coef in poly.coef:
        out = out + coef * power
        power = power @ X
    if kinetic:
        out = out + np.real(P @ P) / (2 * mode.mass)
    n = mode.cutoff
    return out[:n, :n]


# ---------------------------------------------------------------------------
# matrix functions


def hermitian_function(A: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    w, V = np.linalg.eigh(A)
    return (V * f(w)) @ V.conj().T


def expm_hermitian(A: np.ndarray, factor: complex) -> np.ndarray:
    """``exp(factor * A)`` for Hermitian ``A``."""
    return hermitian_function(A, lambda w: np.exp(factor * w))


def _expm_antihermitian(G: np.ndarray) -> np.ndarray:
    # exp(G) with G = -iK, K Hermitian
    return expm_hermitian(1j * G, -1j)


def displacement_and_squeeze(
    alpha: complex, r: complex, mode: Mode, hbar: float = 1.0
) -> tuple[DenseOperator, DenseOperator]:
    """Truncated ``D(alpha)`` and ``S(r)`` on one mode.

    Both are exact exponentials of the truncated anti-Hermitian generators,
    hence exactly unitary on the truncated space. Accuracy on low-lying
    states is a cutoff question; see :func:`ladder_check`.
    """
    a = annihilation(mode.cutoff).astype(complex)
    ad = a.T
    G_D = alpha * ad - np.conj(alpha) * a
    G_S = 0.5 * (np.conj(r) * a @ a - r * ad @ ad)
    D = _expm_antihermitian(G_D) if alpha != 0 else np.eye(mode.cutoff, dtype=complex)
    S = _expm_antihermitian(G_S) if r != 0 else np.eye(mode.cutoff, dtype=complex)
    return DenseOperator(D, unitary=True), DenseOperator(S, unitary=True)


def alpha_from_displacement(L: float, mass: float, omega: float, hbar: float = 1.0) -> float:
    """Real ``alpha`` giving mean position ``L`` after ``D^dag``."""
    return -L * np.sqrt(mass * omega / (2 * hbar))


# ---------------------------------------------------------------------------
# states and entropies


def _eigvals_checked(rho: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(rho)
    if w.min() < EIGEN_FLOOR:
        raise NumericalStateError(f"density matrix eigenvalue {w.min():.3e} below {EIGEN_FLOOR}")
    return np.clip(w, 0.0, None)


def von_neumann_entropy(rho: np.ndarray) -> float:
    w = _eigvals_checked(rho)
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))


def log_state(rho: np.ndarray) -> np.ndarray:
    """Matrix logarithm of a full-rank state; tiny eigenvalues are floored."""
    w, V = np.linalg.eigh(rho)
    if w.min() < EIGEN_FLOOR:
        raise NumericalStateError(f"density matrix eigenvalue {w.min():.3e} below {EIGEN_FLOOR}")
    w = np.maximum(w, np.finfo(float).tiny)
    return (V * np.log(w)) @ V.conj().T


def relative_entropy(rho: np.ndarray, log_sigma: np.ndarray) -> float:
    """``D(rho || sigma) = Tr rho (log rho - log sigma)`` given ``log sigma``."""
    cross = np.real(np.einsum("ij,ji->", rho, log_sigma))
    return float(-von_neumann_entropy(rho) - cross)


def thermal_state(H: np.ndarray, beta: float) -> np.ndarray:
    w, V = np.linalg.eigh(H)
    p = np.exp(-beta * (w - w.min()))
    p /= p.sum()
    return (V * p) @ V.conj().T


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    n = len(dims)
    keep = sorted(keep)
    r = rho.reshape(tuple(dims) * 2)
    rows = list(range(n))
    cols = [n + k if k in keep else k for k in range(n)]
    out = [k for k in keep] + [n + k for k in keep]
    d = int(np.prod([dims[k] for k in keep]))
    return np.einsum(r, rows + cols, out).reshape(d, d)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(a - b))))


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class QuantumModel:
    """System plus reservoirs on a truncated Fock space.

    Parameters
    ----------
    system : SystemSpec
        The system; its curvature frequency sets the reference oscillator
        (unit frequency for flat potentials). ``initial="thermal"`` gives a
        Gibbs state at ``system.beta``; ``"point"`` a coherent state
        centred on ``(x0, p0)``.
    reservoirs : sequence of ReservoirSpec
        Switching must be hard: constant on ``[0, tau]`` or off.
    tau, hbar : float
    system_cutoff, mode_cutoff : int
        Number states kept for the system and for every reservoir mode.
    alphas, squeezes : complex sequences, optional
        Quench parameters per reservoir mode, flattened in reservoir order.
        By default ``alpha`` follows from each mode's ``L`` and ``r`` from
        its squeeze parameter.
    """

    system: SystemSpec
    reservoirs: tuple[ReservoirSpec, ...]
    tau: float
    hbar: float = 1.0
    system_cutoff: int = 10
    mode_cutoff: int = 10
    alphas: tuple[complex, ...] | None = None
    squeezes: tuple[complex, ...] | None = None
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "reservoirs", tuple(self.reservoirs))
        if not (self.tau >= 0 and self.hbar > 0):
            raise DomainError("need tau >= 0 and hbar > 0")
        n = self.n_modes
        for name in ("alphas", "squeezes"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(complex(x) for x in v)
                if len(v) != n:
                    raise DomainError(f"{name} needs one entry per reservoir mode ({n})")
                object.__setattr__(self, name, v)
        for nu, res in enumerate(self.reservoirs):
            sw = res.switching
            if sw.is_zero:
                continue
            hard = (
                len(sw.times) == 4
                and np.allclose(sw.times, (0.0, 0.0, self.tau, self.tau), atol=1e-12)
                and sw.values[1] == sw.values[2]
            )
            if not hard:
                raise UnsupportedError(f"reservoir {nu}: only hard switching on [0, tau] is supported")
        self.space  # validates the budget

    @property
    def n_modes(self) -> int:
        return sum(len(r) for r in self.reservoirs)

    @property
    def chis(self) -> tuple[float, ...]:
        return tuple(0.0 if r.switching.is_zero else float(r.switching.values[1]) for r in self.reservoirs)

    @property
    def system_mode(self) -> Mode:
        w = self.system.curvature_frequency or 1.0
        return Mode(self.system.mass, w, self.system_cutoff)

    @property
    def space(self) -> FockSpace:
        modes = [self.system_mode]
        for res in self.reservoirs:
            modes += [Mode(float(m), float(w), self.mode_cutoff) for m, w in zip(res.modes.m, res.modes.omega)]
        return FockSpace(tuple(modes), self.budget)

    @property
    def groups(self) -> list[list[int]]:
        """Factor indices of each reservoir's modes."""
        out, k = [], 1
        for res in self.reservoirs:
            out.append(list(range(k, k + len(res))))
            k += len(res)
        return out

    def quench_parameters(self) -> list[tuple[complex, complex]]:
        out = []
        j = 0
        for res in self.reservoirs:
            ms = res.modes
            for k in range(len(ms)):
                a = (
                    self.alphas[j]
                    if self.alphas is not None
                    else alpha_from_displacement(ms.L[k], ms.m[k], ms.omega[k], self.hbar)
                )
                r = self.squeezes[j] if self.squeezes is not None else ms.r[k]
                out.append((complex(a), complex(r)))
                j += 1
        return out

    def with_cutoffs(self, step: int = LADDER_STEP) -> "QuantumModel":
        return replace(self, system_cutoff=self.system_cutoff + step, mode_cutoff=self.mode_cutoff + step)

    def with_quench(self, alphas, squeezes) -> "QuantumModel":
        return replace(self, alphas=tuple(alphas), squeezes=tuple(squeezes))


class DenseModel:
    """Matrices of a :class:`QuantumModel`, built lazily and cached."""

    def __init__(self, model: QuantumModel):
        self.model = model
        self.space = model.space
        self.dims = self.space.dims
        self.local = build_operators(self.space, model.hbar)

    @cached_property
    def H_S(self) -> np.ndarray:
        s = self.model.system
        return polynomial_operator(s.V, self.space.modes[0], self.model.hbar, kinetic=True)

    def coupling_operator(self, nu: int) -> np.ndarray:
        return polynomial_operator(self.model.system.coupling(nu), self.space.modes[0], self.model.hbar)

    def bath_operator(self, nu: int) -> np.ndarray:
        """``sum_k c_k X_k`` of reservoir ``nu`` on the full space."""
        res = self.model.reservoirs[nu]
        out = 0.0
        for c, k in zip(res.modes.c, self.model.groups[nu]):
            out = out + c * embed({k: self.local[k].X.real}, self.dims)
        return out

    def reservoir_hamiltonian(self, nu: int) -> np.ndarray:
        """``H_nu`` on the reservoir's own factors."""
        ks = self.model.groups[nu]
        d = [self.dims[k] for k in ks]
        out = 0.0
        for j, k in enumerate(ks):
            out = out + embed({j: self.local[k].H.real}, d)
        return out

    @cached_property
    def hamiltonian(self) -> np.ndarray:
        """Real-symmetric total Hamiltonian while the coupling is on."""
        H = embed({0: self.H_S}, self.dims)
        for k in range(1, len(self.dims)):
            H = H + embed({k: self.local[k].H.real}, self.dims)
        for nu, chi in enumerate(self.model.chis):
            if chi != 0:
                H = H + chi * embed({0: self.coupling_operator(nu)}, self.dims) @ self.bath_operator(nu)
        return H

    @cached_property
    def propagator(self) -> np.ndarray:
        m = self.model
        if m.tau == 0 or not any(m.chis):
            # free evolution is diagonal in the product basis of free Hamiltonians
            return self._free_propagator()
        return expm_hermitian(self.hamiltonian, -1j * m.tau / m.hbar)

    def _free_propagator(self) -> np.ndarray:
        f = -1j * self.model.tau / self.model.hbar
        ops = {0: expm_hermitian(self.H_S, f)}
        for k in range(1, len(self.dims)):
            ops[k] = np.diag(np.exp(f * np.diag(self.local[k].H).real))
        return embed(ops, self.dims)

    @cached_property
    def system_state(self) -> np.ndarray:
        s = self.model.system
        if s.initial == THERMAL:
            return thermal_state(self.H_S, s.beta)
        mode = self.space.modes[0]
        gamma = np.sqrt(mode.mass * mode.omega / (2 * self.model.hbar)) * (s.x0 + 1j * s.p0 / (mode.mass * mode.omega))
        D, _ = displacement_and_squeeze(gamma, 0.0, mode, self.model.hbar)
        psi = D.matrix[:, 0]
        return np.outer(psi, psi.conj())

    def mode_beta(self, k: int) -> float:
        for nu, ks in enumerate(self.model.groups):
            if k in ks:
                return self.model.reservoirs[nu].beta
        raise DomainError(f"factor {k} is not a reservoir mode")

    @cached_property
    def thermal_modes(self) -> list[np.ndarray]:
        return [thermal_state(self.local[k].H.real, self.mode_beta(k)) for k in range(1, len(self.dims))]

    @cached_property
    def quench_operators(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(D(alpha), S(r))`` per reservoir mode."""
        out = []
        for k, (a, r) in enumerate(self.model.quench_parameters(), start=1):
            D, S = displacement_and_squeeze(a, r, self.space.modes[k], self.model.hbar)
            out.append((D.matrix, S.matrix))
        return out

    def quenched_modes(self) -> list[np.ndarray]:
        out = []
        for th, (D, S) in zip(self.thermal_modes, self.quench_operators):
            Q = D.conj().T @ S.conj().T
            out.append(Q @ th @ Q.conj().T)
        return out

    def initial_factors(self) -> list[np.ndarray]:
        """Post-quench factors ``rho_S, rho_1, ...`` of the product initial state."""
        return [self.system_state, *self.quenched_modes()]

    def check_edges(self, tol: float = EDGE_TOLERANCE):
        """Raise if any initial factor populates its top number state."""
        for k, f in enumerate(self.initial_factors()):
            top = float(np.real(f[-1, -1]))
            if top > tol:
                raise PrecisionError(
                    f"factor {k} puts weight {top:.2e} on its top number state; raise the cutoff"
                )

    def evolve(self) -> tuple[np.ndarray, np.ndarray]:
        """Full ``rho(0)`` (after the quench) and ``rho(tau)``."""
        rho0 = embed(dict(enumerate(self.initial_factors())), self.dims)
        U = self.propagator
        return rho0, U @ rho0 @ U.conj().T


# ---------------------------------------------------------------------------
# generating function and fluctuation theorem


def _diag_or_exp(H: np.ndarray, factor: float) -> np.ndarray:
    if np.count_nonzero(H - np.diag(np.diag(H))) == 0:
        return np.diag(np.exp(factor * np.diag(H).real)).astype(complex)
    return expm_hermitian(H, factor)


def _kron_right(M: np.ndarray, factors: Sequence[np.ndarray], dims: Sequence[int]) -> np.ndarray:
    """``M @ kron(factors)`` without forming the Kronecker product."""
    R = M.shape[0]
    T = M.reshape((R, *dims))
    for k, F in enumerate(factors):
        if F is None:
            continue
        T = np.moveaxis(np.tensordot(T, F, axes=([k + 1], [0])), -1, k + 1)
    return T.reshape(R, -1)


def _kron_left(factors: Sequence[np.ndarray], M: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """``kron(factors) @ M``."""
    return _kron_right(M.T, [None if F is None else F.T for F in factors], dims).T


def _is_diagonal(A: np.ndarray) -> bool:
    return np.count_nonzero(A - np.diag(np.diag(A))) == 0


def _mgf(
    dm: DenseModel,
    lam_S: float,
    lam_B: Sequence[float],
    before: Sequence[np.ndarray] | None,
    after: Sequence[np.ndarray] | None,
) -> complex:
    m = dm.model
    dims = dm.dims
    lam_B = np.broadcast_to(np.asarray(lam_B, float), (len(m.reservoirs),))
    lam_mode = [lam_B[nu] for nu, ks in enumerate(m.groups) for _ in ks]
    tilted = [_diag_or_exp(dm.H_S, -lam_S) @ dm.system_state]
    for k, (th, lam) in enumerate(zip(dm.thermal_modes, lam_mode)):
        f = _diag_or_exp(dm.local[k + 1].H.real, -lam) @ th
        if before is not None:
            f = before[k] @ f @ before[k].conj().T
        tilted.append(f)
    U = dm.propagator
    if after is not None:
        U = _kron_left([None, *after], U, dims)
    B = _kron_right(U, tilted, dims)
    E = [_diag_or_exp(dm.H_S, lam_S)] + [
        _diag_or_exp(dm.local[k + 1].H.real, lam) for k, lam in enumerate(lam_mode)
    ]
    if all(_is_diagonal(F) for F in E):
        e = np.ones(1)
        for F in E:
            e = np.kron(e, np.diag(F))
        # Tr[E B U^dag] with diagonal E
        return complex(np.sum(e * np.einsum("ij,ij->i", B, U.conj())))
    A = B @ U.conj().T
    return complex(np.trace(_kron_left(E, A, dims)))


def tpem_mgf(
    model: QuantumModel | DenseModel,
    lam_S: float,
    lam_B: float | Sequence[float],
    edge_tol: float = EDGE_TOLERANCE,
) -> complex:
    """Two-point-measurement generating function of system and reservoir energies.

    Evaluates

        Tr[e^{lam_S H_S + lam_B.H_B} U Q e^{-lam_S H_S - lam_B.H_B} rho(0^-) Q^dag U^dag],

    with ``Q = prod D^dag(alpha) S^dag(r)`` and ``rho(0^-)`` the product of
    the system state and the reservoir Gibbs states. The first measurement
    precedes the quench, so reservoir derivatives give the total heat.

    Raises
    ------
    PrecisionError
        If any initial factor populates its top number state above
        ``edge_tol``.
    """
    dm = model if isinstance(model, DenseModel) else DenseModel(model)
    dm.check_edges(edge_tol)
    before = [D.conj().T @ S.conj().T for D, S in dm.quench_operators]
    return _mgf(dm, lam_S, lam_B, before, None)


def reversed_mgf(
    model: QuantumModel | DenseModel,
    lam_S: float,
    lam_B: float | Sequence[float],
    alphas: Sequence[complex],
    squeezes: Sequence[complex],
) -> complex:
    """Generating function of the reversed protocol.

    The reservoirs start thermal, evolve under the (time-independent, real)
    Hamiltonian and are then quenched by ``prod S^dag(r') D^dag(alpha')``
    before the final measurement.
    """
    dm = model if isinstance(model, DenseModel) else DenseModel(model)
    after = []
    for k, (a, r) in enumerate(zip(alphas, squeezes), start=1):
        D, S = displacement_and_squeeze(complex(a), complex(r), dm.space.modes[k], dm.model.hbar)
        after.append(S.H @ D.H)
    return _mgf(dm, lam_S, lam_B, None, after)


@dataclass(frozen=True)
class QuantumFtRow:
    lam_S: float
    lam_B: tuple[float, ...]
    forward: complex
    reverse: complex
    residual: float
    control_residual: float


@dataclass(frozen=True)
class QuantumFtTable:
    rows: tuple[QuantumFtRow, ...]

    @property
    def max_residual(self) -> float:
        return max(r.residual for r in self.rows)

    @property
    def max_control_residual(self) -> float:
        return max(r.control_residual for r in self.rows)

    def passes(self, tol: float = 1e-8, control_gap: float = 1e-3) -> bool:
        return self.max_residual < tol and self.max_control_residual > control_gap


def quantum_ft_check(
    model: QuantumModel, grid: Sequence[tuple[float, Sequence[float]]]
) -> QuantumFtTable:
    """Both sides of the quantum fluctuation theorem on a grid of counting fields.

    The forward side is ``(Z_S(0)/Z_S(tau)) M(lam)``; the system Hamiltonian
    is time independent so the ratio is one. The reverse side is the
    reversed generating function at ``(-lam_S - beta_S, -lam_B - beta_B)``
    with quench ``(-alpha*, -r*)``. The control column repeats the reverse
    side with ``(alpha*, r*)``, the inversion with the wrong sign.
    """
    if model.system.initial != THERMAL:
        raise PreconditionError("the fluctuation theorem needs a thermal initial system")
    dm = DenseModel(model)
    pars = model.quench_parameters()
    right = ([-np.conj(a) for a, _ in pars], [-np.conj(r) for _, r in pars])
    wrong = ([np.conj(a) for a, _ in pars], [np.conj(r) for _, r in pars])
    betas = np.array([r.beta for r in model.reservoirs])
    beta_S = model.system.beta
    rows = []
    for lam_S, lam_B in grid:
        lam_B = np.broadcast_to(np.asarray(lam_B, float), betas.shape)
        fwd = tpem_mgf(dm, lam_S, lam_B, edge_tol=np.inf)
        args = (-lam_S - beta_S, -lam_B - betas)
        rev = reversed_mgf(dm, *args, *right)
        ctl = reversed_mgf(dm, *args, *wrong)
        rows.append(
            QuantumFtRow(
                lam_S=float(lam_S),
                lam_B=tuple(float(x) for x in lam_B),
                forward=fwd,
                reverse=rev,
                residual=abs(fwd - rev),
                control_residual=abs(fwd - ctl),
            )
        )
    return QuantumFtTable(tuple(rows))


# ---------------------------------------------------------------------------
# average thermodynamics


@dataclass(frozen=True)
class Thermodynamics:
    """Average energetics and entropy balance of one dense run.

    ``sigma`` and ``mutual_information`` are evaluated directly as relative
    entropies; ``sigma_balance`` and ``mutual_balance`` are the same
    quantities assembled from entropy changes and heats.
    """

    delta_E_S: float
    Q: tuple[float, ...]
    W: tuple[float, ...]
    delta_E: tuple[float, ...]
    W_chi: tuple[float, ...]
    delta_S_S: float
    delta_S: tuple[float, ...]
    D: tuple[float, ...]
    sigma: float
    sigma_balance: float
    mutual_information: float
    mutual_balance: float
    delta_F_S: float
    delta_F: tuple[float, ...]
    first_law_residual: float

    @property
    def split_residual(self) -> float:
        """``Sigma - I - sum D``."""
        return self.sigma - self.mutual_information - sum(self.D)

    def to_dict(self) -> dict:
        return asdict(self)


def _group_log_thermal(dm: DenseModel, nu: int) -> np.ndarray:
    ks = dm.model.groups[nu]
    d = [dm.dims[k] for k in ks]
    out = 0.0
    for j, k in enumerate(ks):
        out = out + embed({j: log_state(dm.thermal_modes[k - 1])}, d)
    return out


def average_thermodynamics(
    model: QuantumModel | DenseModel,
    rho0: np.ndarray | None = None,
    rhot: np.ndarray | None = None,
) -> Thermodynamics:
    """Energy, entropy and information balance between ``0`` (post-quench) and ``tau``.

    Parameters
    ----------
    model : QuantumModel or DenseModel
    rho0, rhot : ndarray, optional
        Full states; computed with :meth:`DenseModel.evolve` when omitted.

    Raises
    ------
    NumericalStateError
        If a state has an eigenvalue below ``-1e-12``.
    """
    dm = model if isinstance(model, DenseModel) else DenseModel(model)
    m = dm.model
    if rho0 is None or rhot is None:
        rho0, rhot = dm.evolve()
    dims = dm.dims
    nres = len(m.reservoirs)
    rs0, rst = (partial_trace(r, dims, [0]) for r in (rho0, rhot))
    E = lambda H, r: float(np.real(np.einsum("ij,ji->", H, r)))
    dE_S = E(dm.H_S, rst) - E(dm.H_S, rs0)
    dS_S = von_neumann_entropy(rst) - von_neumann_entropy(rs0)

    Q, W, dE, dS, D, dF, W_chi = [], [], [], [], [], [], []
    log_prod_th = embed({0: log_state(rst)}, dims)
    log_prod_t = log_prod_th.copy()
    for nu in range(nres):
        ks = m.groups[nu]
        beta = m.reservoirs[nu].beta
        H = dm.reservoir_hamiltonian(nu)
        r0 = partial_trace(rho0, dims, ks)
        rt = partial_trace(rhot, dims, ks)
        th = embed({j: dm.thermal_modes[k - 1] for j, k in enumerate(ks)}, [dims[k] for k in ks])
        log_th = _group_log_thermal(dm, nu)
        W.append(E(H, r0) - E(H, th))
        Q.append(E(H, rt) - E(H, th))
        dE.append(Q[-1] - W[-1])
        dS.append(von_neumann_entropy(rt) - von_neumann_entropy(r0))
        D.append(relative_entropy(rt, log_th))
        dF.append(dE[-1] - dS[-1] / beta)
        log_prod_th = log_prod_th + _lift(log_th, ks, dims)
        log_prod_t = log_prod_t + _lift(log_state(rt), ks, dims)
        chi = m.chis[nu]
        if chi == 0:
            W_chi.append(0.0)
        else:
            VB = embed({0: dm.coupling_operator(nu)}, dims) @ dm.bath_operator(nu)
            W_chi.append(chi * (E(VB, rho0) - E(VB, rhot)))

    betas = [r.beta for r in m.reservoirs]
    sigma = relative_entropy(rhot, log_prod_th)
    mutual = relative_entropy(rhot, log_prod_t)
    beta1 = betas[0]
    return Thermodynamics(
        delta_E_S=dE_S,
        Q=tuple(Q),
        W=tuple(W),
        delta_E=tuple(dE),
        W_chi=tuple(W_chi),
        delta_S_S=dS_S,
        delta_S=tuple(dS),
        D=tuple(D),
        sigma=sigma,
        sigma_balance=dS_S + sum(b * q for b, q in zip(betas, Q)),
        mutual_information=mutual,
        mutual_balance=dS_S + sum(dS),
        delta_F_S=dE_S - dS_S / beta1,
        delta_F=tuple(dF),
        first_law_residual=dE_S - (sum(W_chi) - sum(dE)),
    )


def _lift(op: np.ndarray, ks: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Place an operator on contiguous factors ``ks`` into the full space."""
    left = int(np.prod(dims[: ks[0]]))
    right = int(np.prod(dims[ks[-1] + 1 :]))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


# ---------------------------------------------------------------------------
# cutoff ladder


def _flatten(value) -> np.ndarray:
    if isinstance(value, dict):
        return np.concatenate([_flatten(v) for v in value.values()]) if value else np.zeros(0)
    if hasattr(value, "__dataclass_fields__"):
        return _flatten(asdict(value))
    arr = np.asarray(value, dtype=complex).ravel()
    return arr


def ladder_check(
    fn: Callable[[QuantumModel], object],
    model: QuantumModel,
    step: int = LADDER_STEP,
    tol: float = LADDER_TOLERANCE,
):
    """Run ``fn`` at the model's cutoffs and again with every cutoff raised by ``step``.

    Returns the first result. Every scalar must move by less than ``tol``.

    Raises
    ------
    PrecisionError
    """
    a = fn(model)
    b = fn(model.with_cutoffs(step))
    fa, fb = _flatten(a), _flatten(b)
    if fa.shape != fb.shape:
        raise PrecisionError("cutoff ladder changed the shape of the result")
    diff = np.abs(fa - fb)
    if diff.size and not np.all(diff < tol):
        raise PrecisionError(f"cutoff ladder moved a scalar by {diff.max():.3e} (tolerance {tol:g})")
    return a


# ---------------------------------------------------------------------------
# time-dependent propagation


def _propagate(
    H0: np.ndarray,
    drives: Sequence[tuple[np.ndarray, Callable[[float], float]]],
    rho: np.ndarray,
    tau: float,
    dt: float,
    hbar: float,
) -> np.ndarray:
    """Evolve ``rho`` under ``H0 + sum_j f_j(t) B_j`` with a fourth-order Magnus scheme."""
    n = max(1, int(np.ceil(tau / dt - 1e-12)))
    h = tau / n
    (c1, c2), (a1, a2) = _CF4_NODES, _CF4_A

    def H(t):
        out = H0.astype(complex)
        for B, f in drives:
            out = out + f(t) * B
        return out

    for i in range(n):
        t = i * h
        H1, H2 = H(t + c1 * h), H(t + c2 * h)
        U = expm_hermitian(a1 * H1 + a2 * H2, -1j * h / hbar) @ expm_hermitian(
            a2 * H1 + a1 * H2, -1j * h / hbar
        )
        rho = U @ rho @ U.conj().T
    return rho


# ---------------------------------------------------------------------------
# work-source limits


@dataclass(frozen=True)
class WorkSourceRow:
    """One rung of a work-source ladder.

    ``power_reference`` is the integrated phenomenological power
    ``int Tr[dH_eff/dt rho_eff] dt`` and ``power_mismatch`` is
    ``|Delta E_B + power_reference|``: the energy the reservoir gains equals
    the work the effective drive does on the system with opposite sign.
    """

    chi: float
    trace_distance: float
    delta_S_S: float
    delta_S_B: float
    beta_delta_S_B: float
    delta_E_B: float
    power_reference: float
    power_mismatch: float


@dataclass(frozen=True)
class WorkSourceReport:
    kind: str
    rows: tuple[WorkSourceRow, ...]
    drive_residual: float = float("nan")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def trace_distance_decreasing(self) -> bool:
        d = self.column("trace_distance")
        return bool(np.all(np.diff(d) < 0))

    @property
    def power_mismatch_decreasing(self) -> bool:
        d = self.column("power_mismatch")
        return bool(np.all(np.diff(d) < 0))

    def to_dict(self) -> dict:
        return asdict(self)


def _single_mode_setup(system: SystemSpec, mass, omega, beta, hbar, system_cutoff, mode_cutoff):
    res = ReservoirSpec(beta=beta, modes=ModeSet.single(m=mass, omega=omega, c=1.0))
    qm = QuantumModel(system, (res,), tau=0.0, hbar=hbar, system_cutoff=system_cutoff, mode_cutoff=mode_cutoff)
    dm = DenseModel(qm)
    sys_mode = dm.space.modes[0]
    V = polynomial_operator(system.coupling(0), sys_mode, hbar)
    return dm, V


def _frame_run(dm, V, chi, drive_x, drive_p, mode_energy, tau, dt):
    """Exact run in the interaction picture of the free reservoir mode.

    The mode is thermal in this frame; its free motion and the quench are
    folded into the coupling ``chi V (drive_x(t) + drive_p(t))``.
    """
    hbar = dm.model.hbar
    dims = dm.dims
    rho_m = dm.thermal_modes[0]
    rho0 = np.kron(dm.system_state, rho_m)
    H0 = embed({0: dm.H_S}, dims)
    drives = []
    if chi != 0:
        for op, f in (drive_x, drive_p):
            drives.append((chi * np.kron(V, op), f))
    rhot = _propagate(H0, drives, rho0, tau, dt, hbar) if tau > 0 else rho0
    rs = partial_trace(rhot, dims, [0])
    rm = partial_trace(rhot, dims, [1])
    E = lambda H, r: float(np.real(np.einsum("ij,ji->", H, r)))
    dE_B = E(mode_energy, rm) - E(mode_energy, rho_m)
    dS_B = von_neumann_entropy(rm) - von_neumann_entropy(rho_m)
    return rs, dE_B, dS_B


def displaced_worksource_check(
    system: SystemSpec,
    chi_L: float = 0.5,
    chis: Sequence[float] = (1e-1, 1e-2, 1e-3),
    mass: float = 1.0,
    omega: float = 1.3,
    beta: float = 1.0,
    tau: float = 3.0,
    dt: float = 0.01,
    hbar: float = 1.0,
    system_cutoff: int = 10,
    mode_cutoff: int = 16,
) -> WorkSourceReport:
    """Displaced mode as a deterministic work source.

    For each ``chi`` the mode is displaced by ``L = chi_L / chi`` and the
    exact reduced system state at ``tau`` is compared with the unitary
    evolution under ``H_S + chi_L V(X) cos(omega t)``. ``chi = 0`` switches
    the coupling off in both evolutions.
    """
    dm, V = _single_mode_setup(system, mass, omega, beta, hbar, system_cutoff, mode_cutoff)
    ops = dm.local[1]
    X, P = ops.X.real, ops.P
    rows = []
    for chi in chis:
        L = chi_L / chi if chi != 0 else 0.0
        drive_x = (X + L * np.eye(X.shape[0]), lambda t: np.cos(omega * t))
        drive_p = (P / (mass * omega), lambda t: np.sin(omega * t))
        # reservoir energy with the displacement folded in
        H_mode = 0.5 * mass * omega**2 * (X + L * np.eye(X.shape[0])) @ (X + L * np.eye(X.shape[0])) + np.real(P @ P) / (2 * mass)
        rs, dE_B, dS_B = _frame_run(dm, V, chi, drive_x, drive_p, H_mode, tau, dt)
        g = chi_L if chi != 0 else 0.0
        drive = [(g * V, lambda t: np.cos(omega * t))] if g else []
        rs_eff = _propagate(dm.H_S, drive, dm.system_state, tau, dt, hbar) if tau > 0 else dm.system_state
        E = lambda H, r: float(np.real(np.einsum("ij,ji->", H, r)))
        H_eff = lambda t: dm.H_S + g * np.cos(omega * t) * V
        w_phen = E(H_eff(tau), rs_eff) - E(H_eff(0.0), dm.system_state)
        rows.append(
            WorkSourceRow(
                chi=float(chi),
                trace_distance=trace_distance(rs, rs_eff),
                delta_S_S=von_neumann_entropy(rs) - von_neumann_entropy(dm.system_state),
                delta_S_B=dS_B,
                beta_delta_S_B=beta * dS_B,
                delta_E_B=dE_B,
                power_reference=w_phen,
                power_mismatch=abs(dE_B + w_phen),
            )
        )
    return WorkSourceReport("displaced", tuple(rows))


def squeezed_worksource_check(
    system: SystemSpec,
    chi_er: float = 0.5,
    chis: Sequence[float] = (1e-1, 1e-2, 1e-3),
    n_xi: int = 40,
    mass: float = 1.0,
    omega: float = 1.3,
    beta: float = 1.0,
    tau: float = 3.0,
    dt: float = 0.01,
    hbar: float = 1.0,
    system_cutoff: int = 10,
    mode_cutoff: int = 16,
    drive_alphas: Sequence[complex] = (0.3 + 0.1j, -0.2j),
) -> WorkSourceReport:
    """Squeezed mode as a stochastic work source.

    For each ``chi`` the mode is squeezed with ``r = log(chi_er / chi)``.
    The exact reduced state is compared with the average of the unitary
    evolutions under ``H_S + xi chi_er V(X) cos(omega t)`` over Gaussian
    ``xi`` of variance ``hbar coth(beta hbar omega / 2) / (2 m omega)``,
    computed with ``n_xi`` Gauss-Hermite nodes. The report also carries
    the largest deviation of :func:`engineered_drive` from the exact mean
    force of free displaced modes with quench parameters ``drive_alphas``.
    """
    dm, V = _single_mode_setup(system, mass, omega, beta, hbar, system_cutoff, mode_cutoff)
    ops = dm.local[1]
    X, P = ops.X.real, ops.P
    var = hbar / (2 * mass * omega) / np.tanh(beta * hbar * omega / 2)
    nodes, weights = hermegauss(n_xi)
    weights = weights / weights.sum()
    xis = np.sqrt(var) * nodes
    rows = []
    for chi in chis:
        r = np.log(chi_er / chi)
        drive_x = (np.exp(r) * X, lambda t: np.cos(omega * t))
        drive_p = (np.exp(-r) * P / (mass * omega), lambda t: np.sin(omega * t))
        H_mode = 0.5 * mass * omega**2 * np.exp(2 * r) * X @ X + np.exp(-2 * r) * np.real(P @ P) / (2 * mass)
        rs, dE_B, dS_B = _frame_run(dm, V, chi, drive_x, drive_p, H_mode, tau, dt)
        rs_eff = np.zeros_like(rs)
        for w, xi in zip(weights, xis):
            drive = [(xi * chi_er * V, lambda t: np.cos(omega * t))]
            rs_eff = rs_eff + w * _propagate(dm.H_S, drive, dm.system_state, tau, dt, hbar)
        rows.append(
            WorkSourceRow(
                chi=float(chi),
                trace_distance=trace_distance(rs, rs_eff),
                delta_S_S=von_neumann_entropy(rs) - von_neumann_entropy(dm.system_state),
                delta_S_B=dS_B,
                beta_delta_S_B=beta * dS_B,
                delta_E_B=dE_B,
                power_reference=float("nan"),
                power_mismatch=float("nan"),
            )
        )
    drive = multimode_drive_check(drive_alphas, hbar=hbar)
    return WorkSourceReport("squeezed", tuple(rows), drive_residual=drive)


def engineered_drive(t, chi: float, c, omegas, masses, alphas, hbar: float = 1.0):
    """Mean force ``chi sum_k c_k <X_k(t)>`` of free modes prepared with ``D^dag(alpha_k)``.

    Equals ``-chi sum_k c_k A_k cos(omega_k t - phi_k)`` with
    ``A_k = sqrt(2 hbar / m_k omega_k) |alpha_k|`` and ``phi_k`` the
    argument of ``alpha_k``.
    """
    t = np.asarray(t, float)[..., None]
    alphas = np.asarray(alphas, complex)
    A = np.sqrt(2 * hbar / (np.asarray(masses) * np.asarray(omegas))) * np.abs(alphas)
    phi = np.angle(alphas)
    return -chi * np.sum(np.asarray(c) * A * np.cos(np.asarray(omegas) * t - phi), axis=-1)


def multimode_drive_check(
    alphas: Sequence[complex],
    omegas: Sequence[float] | None = None,
    c: Sequence[float] | None = None,
    chi: float = 1.0,
    hbar: float = 1.0,
    cutoff: int = 24,
    times: Sequence[float] | None = None,
) -> float:
    """Largest deviation of :func:`engineered_drive` from dense free-mode evolution."""
    alphas = [complex(a) for a in alphas]
    n = len(alphas)
    omegas = np.linspace(0.9, 1.7, n) if omegas is None else np.asarray(omegas, float)
    c = np.ones(n) if c is None else np.asarray(c, float)
    masses = np.ones(n)
    times = np.linspace(0.0, 6.0, 13) if times is None else np.asarray(times, float)
    exact = np.zeros(times.size)
    for k in range(n):
        mode = Mode(1.0, float(omegas[k]), cutoff)
        ops = mode_operators(mode, hbar)
        D, _ = displacement_and_squeeze(alphas[k], 0.0, mode, hbar)
        psi = D.H[:, 0]
        for i, t in enumerate(times):
            phase = np.exp(-1j * np.diag(ops.H).real * t / hbar)
            pt = phase * psi
            exact[i] += chi * c[k] * float(np.real(pt.conj() @ ops.X @ pt))
    model = engineered_drive(times, chi, c, omegas, masses, alphas, hbar)
    return float(np.max(np.abs(exact - model)))


# ---------------------------------------------------------------------------
# output


def dump_operator(path: str | Path, matrix: np.ndarray):
    """Write a matrix as ``<i8 rows, <i8 cols`` then row-major ``<f8`` (re, im) pairs."""
    A = np.ascontiguousarray(np.asarray(matrix, dtype=complex))
    with open(path, "wb") as fh:
        fh.write(np.array(A.shape, dtype="<i8").tobytes())
        fh.write(A.astype("<c16").tobytes())


def load_operator(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    rows, cols = np.frombuffer(raw[:16], dtype="<i8")
    return np.frombuffer(raw[16:], dtype="<c16").reshape(int(rows), int(cols)).copy()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def to_json(result) -> str:
    """JSON text of a result dataclass (complex numbers as ``{re, im}``)."""
    data = asdict(result) if hasattr(result, "__dataclass_fields__") else result
    return json.dumps(_jsonable(data), indent=2)
