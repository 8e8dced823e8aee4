"""Monte-Carlo statistics of energy exchanges.

Moment generating functions are exponential means, which are heavy-tailed:
every estimate carries its standard error and the effective sample size
``(sum w)^2 / sum w^2`` of the exponential weights, and grid points whose
exponent would overflow are flagged as saturated rather than aborting.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, PreconditionError
from .microdyn import THERMAL, EnsembleResult, Experiment, reverse_experiment, run_ensemble

EXCHANGED = "exchanged"
TOTAL = "total"
FLAVORS = (EXCHANGED, TOTAL)

ESS_FLOOR = 100.0
_EXP_MAX = 709.0


@dataclass(frozen=True)
class CountingFields:
    """Counting fields ``(lambda_S, lambda_1, ..., lambda_R)``."""

    lam_S: float
    lam_B: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lam_B", tuple(float(v) for v in self.lam_B))
        if not all(np.isfinite([self.lam_S, *self.lam_B])):
            raise DomainError("counting fields must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.lam_S, *self.lam_B])


def as_grid(grid) -> np.ndarray:
    """Normalize a grid to an array of shape ``(G, 1 + R)``."""
    if isinstance(grid, CountingFields):
        grid = [grid]
    rows = [g.as_array() if isinstance(g, CountingFields) else np.asarray(g, float) for g in grid]
    try:
        arr = np.atleast_2d(np.array(rows, float))
    except ValueError as exc:
        raise DomainError(f"ragged counting-field grid: {exc}") from None
    if not np.all(np.isfinite(arr)):
        raise DomainError("counting fields must be finite")
    return arr


@dataclass
class MgfEstimate:
    """MGF values on a grid of counting fields.

    ``values`` holds ``M``; ``log_values`` and ``log_stderr`` are kept
    separately so that saturated points can still be compared on a log scale.
    """

    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    log_values: np.ndarray
    log_stderr: np.ndarray
    ess: np.ndarray
    saturated: np.ndarray
    n: int
    flavor: str
    samples: dict = field(default_factory=dict, repr=False)

    @property
    def low_ess(self) -> np.ndarray:
        return self.ess < ESS_FLOOR

    def at(self, point) -> int:
        """Index of a grid point (exact match)."""
        hit = np.flatnonzero(np.all(self.grid == np.asarray(point, float), axis=1))
        if hit.size == 0:
            raise DomainError(f"grid has no point {point}")
        return int(hit[0])

    def to_dict(self) -> dict:
        return {
            "flavor": self.flavor,
            "n": self.n,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "stderr": self.stderr.tolist(),
            "log_values": self.log_values.tolist(),
            "log_stderr": self.log_stderr.tolist(),
            "ess": self.ess.tolist(),
            "saturated": self.saturated.tolist(),
            "low_ess": self.low_ess.tolist(),
        }

    def write_json(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_csv(self, path: str | Path):
        cols = ["lambda_S"] + [f"lambda_{i + 1}" for i in range(self.grid.shape[1] - 1)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols + ["M", "stderr", "logM", "logM_stderr", "ess", "saturated"])
            for g, v, s, lv, ls, e, sat in zip(
                self.grid, self.values, self.stderr, self.log_values, self.log_stderr, self.ess, self.saturated
            ):
                w.writerow([f"{a:.17g}" for a in (*g, v, s, lv, ls, e)] + [int(sat)])


def _energies(result: EnsembleResult, flavor: str) -> np.ndarray:
    if flavor not in FLAVORS:
        raise DomainError(f"unknown flavor {flavor!r}")
    X = result.Q if flavor == TOTAL else result.dE_res
    return np.column_stack([result.dE_S, X])


def exponential_mean(a: np.ndarray):
    """Scaled estimate of ``<exp(a)>``.

    Returns
    -------
    (log_mean, log_stderr, ess, mean, stderr, saturated)
    """
    a = np.asarray(a, float)
    n = a.size
    amax = float(np.max(a))
    w = np.exp(a - amax)
    s1 = math.fsum(w)
    s2 = math.fsum(w * w)
    mean_w = s1 / n
    var_w = max(s2 / n - mean_w**2, 0.0) * n / (n - 1)
    se_w = math.sqrt(var_w / n)
    log_mean = amax + math.log(mean_w)
    log_se = se_w / mean_w
    ess = s1 * s1 / s2
    saturated = log_mean > _EXP_MAX
    mean = math.exp(log_mean) if not saturated else math.inf
    se = mean * log_se if not saturated else math.inf
    return log_mean, log_se, ess, mean, se, saturated


def estimate_mgf(
    source: Experiment | EnsembleResult,
    grid,
    n: int | None = None,
    flavor: str = TOTAL,
) -> MgfEstimate:
    """Estimate ``M(lambda) = <exp(lambda_S dE_S + sum_nu lambda_nu X_nu)>``.

    Parameters
    ----------
    source : Experiment or EnsembleResult
        An experiment is run for ``n`` trajectories first.
    grid : sequence of CountingFields or array of shape (G, 1 + R)
    n : int, optional
        Trajectory count when ``source`` is an experiment.
    flavor : {"total", "exchanged"}
        ``X = Q`` (quench energies included) or ``X = dE_nu``.
    """
    if isinstance(source, Experiment):
        if n is None or n < 2:
            raise DomainError("an MGF estimate needs at least two trajectories")
        source = run_ensemble(source, n)
    if source.n < 2:
        raise DomainError("an MGF estimate needs at least two trajectories")
    g = as_grid(grid)
    E = _energies(source, flavor)
    if g.shape[1] != E.shape[1]:
        raise DomainError(f"grid has {g.shape[1]} fields, experiment needs {E.shape[1]}")
    out = np.array([exponential_mean(E @ lam) for lam in g], dtype=object)
    est = MgfEstimate(
        grid=g,
        values=out[:, 3].astype(float),
        stderr=out[:, 4].astype(float),
        log_values=out[:, 0].astype(float),
        log_stderr=out[:, 1].astype(float),
        ess=out[:, 2].astype(float),
        saturated=out[:, 5].astype(bool),
        n=source.n,
        flavor=flavor,
    )
    est.samples = {"energies": E}
    return est


def sample_means(source: EnsembleResult, flavor: str = TOTAL):
    """Direct sample means and standard errors of ``(dE_S, X_1, ..., X_R)``."""
    E = _energies(source, flavor)
    mean = np.array([math.fsum(col) / col.size for col in E.T])
    se = E.std(axis=0, ddof=1) / np.sqrt(E.shape[0])
    return mean, se


@dataclass
class Cumulants:
    first: np.ndarray
    first_err: np.ndarray
    second: np.ndarray
    second_err: np.ndarray
    step: np.ndarray


def cumulants(estimate: MgfEstimate) -> Cumulants:
    """First and second cumulants by central differences of ``log M``.

    The grid must contain 0 and a symmetric pair ``+-h e_j`` along every
    field axis. Errors combine the per-point standard errors in quadrature
    (the three stencil points share samples, so this is an estimate).
    """
    d = estimate.grid.shape[1]
    first, first_err, second, second_err, steps = [], [], [], [], []
    i0 = estimate.at(np.zeros(d))
    for j in range(d):
        on_axis = [
            i
            for i, g in enumerate(estimate.grid)
            if g[j] > 0 and np.all(np.delete(g, j) == 0) and np.any(np.all(estimate.grid == -g, axis=1))
        ]
        if not on_axis:
            raise DomainError(f"grid lacks a symmetric stencil along field {j}")
        ip = min(on_axis, key=lambda i: estimate.grid[i, j])
        h = estimate.grid[ip, j]
        im = estimate.at(-estimate.grid[ip])
        lp, lm, l0 = estimate.log_values[ip], estimate.log_values[im], estimate.log_values[i0]
        sp, sm = estimate.log_stderr[ip], estimate.log_stderr[im]
        first.append((lp - lm) / (2 * h))
        first_err.append(math.hypot(sp, sm) / (2 * h))
        second.append((lp - 2 * l0 + lm) / h**2)
        second_err.append(math.hypot(sp, sm) / h**2)
        steps.append(h)
    return Cumulants(*(np.array(v) for v in (first, first_err, second, second_err, steps)))


def _zs_log_ratio(exp: Experiment) -> float:
    """``log Z_S(0) - log Z_S(tau)``; the system potential is static here."""
    return 0.0


@dataclass
class FtTable:
    """Fluctuation-theorem residuals on a grid.

    ``lhs = M(lambda) Z_S(0)/Z_S(tau)`` and ``rhs = M^R(-lambda - beta)``;
    ``z = (lhs - rhs) / sqrt(se_lhs^2 + se_rhs^2)``.
    """

    grid: np.ndarray
    lhs: np.ndarray
    lhs_err: np.ndarray
    rhs: np.ndarray
    rhs_err: np.ndarray
    residual: np.ndarray
    z: np.ndarray
    ess_forward: np.ndarray
    ess_reversed: np.ndarray
    flavor: str

    def pass_fraction(self, sigma: float = 3.0) -> float:
        return float(np.mean(np.abs(self.z) <= sigma))

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def verify_ft(
    forward: Experiment | EnsembleResult,
    reversed_: Experiment | EnsembleResult | None,
    grid,
    n: int | None = None,
    flavor: str = TOTAL,
    betas: Sequence[float] | None = None,
    beta_S: float | None = None,
) -> FtTable:
    """Compare ``M(lambda) Z_S(0)/Z_S(tau)`` with ``M^R(-lambda - beta)``.

    Parameters
    ----------
    forward : Experiment or EnsembleResult
    reversed_ : Experiment, EnsembleResult or None
        ``None`` builds :func:`necl.microdyn.reverse_experiment` of the
        forward experiment with seed ``forward.seed + 1``.
    grid : counting-field grid for the forward process.
    n : int
        Trajectories per side when experiments are given.
    """
    log_z = 0.0
    if isinstance(forward, Experiment):
        if forward.system.initial != THERMAL:
            raise PreconditionError("the fluctuation theorem needs a thermal system")
        log_z = _zs_log_ratio(forward)
        if reversed_ is None:
            reversed_ = reverse_experiment(forward, seed=forward.seed + 1)
        beta_S = forward.system.beta
        betas = [r.beta for r in forward.reservoirs]
        if n is None:
            raise DomainError("trajectory count required")
        forward = run_ensemble(forward, n)
    if isinstance(reversed_, Experiment):
        reversed_ = run_ensemble(reversed_, n)
    if beta_S is None:
        beta_S = forward.beta_S
    if beta_S is None:
        raise PreconditionError("the fluctuation theorem needs a thermal system")
    if betas is None:
        betas = forward.betas
    beta = np.array([beta_S, *betas])
    g = as_grid(grid)
    fwd = estimate_mgf(forward, g, flavor=flavor)
    rev = estimate_mgf(reversed_, -g - beta, flavor=flavor)
    lhs = fwd.values * math.exp(log_z)
    lhs_err = fwd.stderr * math.exp(log_z)
    res = lhs - rev.values
    comb = np.hypot(lhs_err, rev.stderr)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(comb > 0, res / comb, np.where(res == 0, 0.0, np.inf))
    return FtTable(g, lhs, lhs_err, rev.values, rev.stderr, res, z, fwd.ess, rev.ess, flavor)


@dataclass
class ShiftReport:
    """Shift-symmetry diagnostics for each (grid point, shift) pair."""

    grid: np.ndarray
    shifts: np.ndarray
    naive: np.ndarray
    corrected: np.ndarray
    boundary_log_factor: np.ndarray
    audit_max: float
    quench_log_factor_max: float


def shift_invariance_check(result: EnsembleResult, grid, shifts, flavor: str = EXCHANGED) -> ShiftReport:
    """Translate every counting field by ``lambda_bar`` and account for it.

    Per trajectory, ``dE_S + sum_nu X_nu = sum W - dE_c + q + a`` where ``q``
    is the total quench energy (zero for the exchanged flavor) and ``a`` the
    audit residual of the integrator. Shifting all fields therefore
    multiplies each weight by ``exp(lambda_bar (sum W - dE_c + q + a))``.

    ``naive`` is ``M(lambda + lambda_bar) / M(lambda) - 1``, which is
    nonzero because of the boundary (switching) work; ``corrected`` divides
    out the recorded work, coupling and quench factors per trajectory, leaving
    only the audit residual. ``audit_max`` is ``max |lambda_bar a|`` and
    ``quench_log_factor_max`` is ``max |lambda_bar q|``.
    """
    g = as_grid(grid)
    E = _energies(result, flavor)
    boundary = result.work.sum(1) - result.dE_coupling
    q = (result.dE_sq + result.dE_dp).sum(1) if flavor == TOTAL else np.zeros(result.n)
    shifts = np.atleast_1d(np.asarray(shifts, float))
    naive = np.zeros((g.shape[0], shifts.size))
    corrected = np.zeros_like(naive)
    blog = np.zeros_like(naive)
    for i, lam in enumerate(g):
        a = E @ lam
        base = exponential_mean(a)[0]
        for j, lb in enumerate(shifts):
            shifted = exponential_mean(a + lb * E.sum(1))[0]
            with_factor = exponential_mean(a + lb * (boundary + q))[0]
            naive[i, j] = math.expm1(shifted - base)
            corrected[i, j] = math.expm1(shifted - with_factor)
            blog[i, j] = with_factor - base
    audit = result.audit_residual
    return ShiftReport(
        g,
        shifts,
        naive,
        corrected,
        blog,
        float(np.max(np.abs(shifts)) * np.max(np.abs(audit))),
        float(np.max(np.abs(shifts)) * np.max(np.abs(q))),
    )
