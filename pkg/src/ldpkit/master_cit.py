"""Irreversible thermodynamics of a finite-state master equation.

``dp_i/dt = sum_j (p_j q_ji - p_i q_ij)`` with one-way fluxes ``J_ij = p_i q_ij``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .determlimit import NumericalError, rk4_step

P_FLOOR = 1e-300


class ChainError(ValueError):
    pass


@dataclass(frozen=True)
class MasterEquationSpec:
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 2:
            raise ChainError("rate matrix must be square with at least two states")
        np.fill_diagonal(q, 0.0)
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ChainError("off-diagonal rates must be finite and >= 0")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        n_comp, _ = connected_components(q > 0, directed=True, connection="strong")
        if n_comp > 1:
            warnings.warn(f"rate matrix has {n_comp} communicating classes", stacklevel=2)

    @property
    def n_states(self):
        return self.q.shape[0]

    @property
    def generator(self):
        """Row-sum-zero generator ``Q`` with ``dp/dt = p Q``."""
        Q = self.q.copy()
        np.fill_diagonal(Q, -self.q.sum(axis=1))
        return Q

    def rhs(self, p):
        return p @ self.q - p * self.q.sum(axis=1)

    @classmethod
    def from_csv(cls, path):
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))


def _check_prob(p, n):
    p = np.asarray(p, dtype=float)
    if p.shape != (n,):
        raise ChainError(f"probability vector must have {n} entries")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ChainError("probability vector must be non-negative and sum to 1 (within 1e-12)")
    return p


def _check_positive(p):
    if np.any(p <= P_FLOOR):
        raise ChainError("entropy balance needs strictly positive probabilities")


@dataclass
class MasterTrajectory:
    times: np.ndarray
    p: np.ndarray
    max_normalization_drift: float


def evolve_master(spec: MasterEquationSpec, p0, t_end: float, dt: float) -> MasterTrajectory:
    """RK4 for the master equation; normalisation drift is reported, never corrected."""
    p = _check_prob(p0, spec.n_states).copy()
    n_steps = max(int(np.ceil(t_end / dt - 1e-9)), 1)
    times = [0.0]
    ps = [p.copy()]
    t = 0.0
    for step in range(1, n_steps + 1):
        h = t_end - t if step == n_steps else dt
        p = rk4_step(spec.rhs, p, h)
        if np.any(p < -1e-10):
            raise NumericalError(f"probability went negative ({p.min():.3g}) at t={t + h:.6g}; reduce dt")
        t = t_end if step == n_steps else step * dt
        times.append(t)
        ps.append(p.copy())
    P = np.array(ps)
    return MasterTrajectory(np.array(times), P, float(np.max(np.abs(P.sum(axis=1) - 1.0))))


def stationary_distribution(spec: MasterEquationSpec) -> np.ndarray:
    """Solve ``pi Q = 0``, ``sum(pi) = 1``; reducible chains are an error."""
    n_comp, labels = connected_components(spec.q > 0, directed=True, connection="strong")
    if n_comp > 1:
        classes = [np.flatnonzero(labels == c).tolist() for c in range(n_comp)]
        raise ChainError(f"chain is reducible; communicating classes {classes}")
    Q = spec.generator
    n = spec.n_states
    M = np.vstack([Q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, b, rcond=None)
    # one refinement pass tightens normalisation to round-off
    r = b - M @ pi
    pi += np.linalg.lstsq(M, r, rcond=None)[0]
    return pi


@dataclass
class EntropyLedger:
    production: np.ndarray
    exchange: np.ndarray

    @property
    def per_state(self):
        return self.production + self.exchange

    @property
    def total_production(self):
        return float(self.production.sum())

    @property
    def total_exchange(self):
        return float(self.exchange.sum())

    @property
    def total(self):
        return float(self.per_state.sum())


def _net_flux(spec, p):
    J = p[:, None] * spec.q
    return J - J.T


def entropy_balance(spec: MasterEquationSpec, p) -> EntropyLedger:
    """Per-state split of ``d/dt (-p_i ln p_i)`` into force-times-flux and exchange parts."""
    p = _check_prob(p, spec.n_states)
    _check_positive(p)
    f = _net_flux(spec, p)
    lp = np.log(p)
    force = lp[:, None] - lp[None, :]
    exch = lp[:, None] + lp[None, :] + 2.0
    return EntropyLedger(0.5 * np.sum(f * force, axis=1), 0.5 * np.sum(f * exch, axis=1))


def free_energy_balance(spec: MasterEquationSpec, p, pi=None) -> EntropyLedger:
    """Same split for ``-p_i ln(p_i / pi_i)``."""
    p = _check_prob(p, spec.n_states)
    _check_positive(p)
    pi = stationary_distribution(spec) if pi is None else np.asarray(pi, dtype=float)
    _check_positive(pi)
    f = _net_flux(spec, p)
    lr = np.log(p) - np.log(pi)
    force = lr[:, None] - lr[None, :]
    exch = lr[:, None] + lr[None, :] + 2.0
    return EntropyLedger(0.5 * np.sum(f * force, axis=1), 0.5 * np.sum(f * exch, axis=1))


def relative_entropy(p, pi) -> float:
    p = np.asarray(p, dtype=float)
    pi = np.asarray(pi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0) / pi), 0.0)
    return float(terms.sum())


@dataclass
class AffinityCoefficients:
    """Force/flux ratios per edge.

    ``NaN`` marks pairs with no transitions either way, or with both force
    and net flux zero.  ``flagged`` marks a zero net flux against a nonzero
    force.
    """

    M: np.ndarray
    M_tilde: np.ndarray
    flagged: np.ndarray
    flagged_tilde: np.ndarray

    @staticmethod
    def _positive(M, flagged):
        defined = ~np.isnan(M)
        return bool(not flagged.any() and np.all(M[defined] > 0))

    @property
    def M_positive(self):
        return self._positive(self.M, self.flagged)

    @property
    def M_tilde_positive(self):
        return self._positive(self.M_tilde, self.flagged_tilde)


def _ratio(force, flux, edge, rtol=1e-14):
    scale = np.max(np.abs(flux)) if flux.size else 1.0
    zero_flux = np.abs(flux) <= rtol * max(scale, 1e-300)
    zero_force = np.abs(force) <= rtol
    with np.errstate(divide="ignore", invalid="ignore"):
        M = np.where(zero_flux, np.nan, force / flux)
    M[~edge] = np.nan
    flagged = edge & zero_flux & ~zero_force
    return M, flagged


def affinity_coefficients(spec: MasterEquationSpec, p, pi=None) -> AffinityCoefficients:
    p = _check_prob(p, spec.n_states)
    _check_positive(p)
    pi = stationary_distribution(spec) if pi is None else np.asarray(pi, dtype=float)
    f = _net_flux(spec, p)
    edge = (spec.q > 0) | (spec.q.T > 0)
    np.fill_diagonal(edge, False)
    lp = np.log(p)
    lr = lp - np.log(pi)
    M, flagged = _ratio(lp[:, None] - lp[None, :], f, edge)
    Mt, flagged_t = _ratio(lr[:, None] - lr[None, :], f, edge)
    return AffinityCoefficients(M, Mt, flagged, flagged_t)


def is_detailed_balanced(spec: MasterEquationSpec, pi=None, tol=1e-12) -> bool:
    pi = stationary_distribution(spec) if pi is None else np.asarray(pi, dtype=float)
    J = pi[:, None] * spec.q
    return bool(np.max(np.abs(J - J.T)) <= tol * max(1.0, np.max(J)))
