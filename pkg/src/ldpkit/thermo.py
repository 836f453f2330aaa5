"""Entropy balances of the deterministic limit.

Channel sums run over unordered pairs ``(l, -l)``; each pair appears once.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .determlimit import vector_field
from .model import GeneratorSpec, ModelError, channel_rates, evaluate_drift
from .quasipotential import RateFunction

POTENTIAL_TOL = 1e-8


class ThermoDomainError(ValueError):
    """A logarithm of a vanishing rate, or a singular diffusion with nonzero drift."""


@dataclass
class EntropyBalanceTerms:
    entropy_change: float
    entropy_production: float
    mechanical_drive: float
    chemical_drive: float
    chemomechanical_exchange: float

    @property
    def identity_residual(self):
        return self.entropy_change - (
            self.entropy_production - self.mechanical_drive - self.chemical_drive + self.chemomechanical_exchange
        )

    def as_dict(self):
        return asdict(self)


@dataclass
class PotentialPair:
    """Mechanical potential ``U`` and chemical (Gibbs) potential ``G``."""

    U: RateFunction | None
    G: RateFunction | None


def _log_ratio(fwd, bwd, z):
    if np.any(fwd <= 0) or np.any(bwd <= 0):
        raise ThermoDomainError(f"vanishing channel rate at z={np.asarray(z).tolist()}; log ratio undefined")
    return np.log(fwd / bwd)


def _mechanical_quadratic(D, x):
    """``x.D^{-1}.x``; defined for singular ``D`` only when ``x`` vanishes."""
    if not np.any(x):
        return 0.0
    try:
        if np.linalg.cond(D) > 1e14:
            raise np.linalg.LinAlgError
        return float(x @ np.linalg.solve(D, x))
    except np.linalg.LinAlgError as exc:
        raise ThermoDomainError("diffusion matrix is singular while the drift is nonzero") from exc


def entropy_decomposition(spec: GeneratorSpec, candidate: RateFunction, z) -> EntropyBalanceTerms:
    z = np.asarray(z, dtype=float)
    g = candidate.gradient(z)
    dd = spec.drift_diffusion
    A = evaluate_drift(dd, z)
    D = np.asarray(dd.D)
    production = _mechanical_quadratic(D, A)
    mech = _mechanical_quadratic(D, A + D @ g)
    exchange = float(A @ g + g @ D @ g)
    chem = 0.0
    if spec.channels:
        fwd, bwd = channel_rates(spec, z)
        net = fwd - bwd
        lr = _log_ratio(fwd, bwd, z)
        production += float(np.sum(net * lr))
        chem = float(np.sum(net * (lr + spec.nu @ g)))
    change = float(-vector_field(spec, z) @ g)
    return EntropyBalanceTerms(change, production, mech, chem, exchange)


def check_potential_conditions(spec: GeneratorSpec, pair: PotentialPair, z):
    """Residuals of ``A = -D grad U`` (sup norm) and ``ln(R_l/R_-l) = -nu_l.grad G`` per channel."""
    z = np.asarray(z, dtype=float)
    dd = spec.drift_diffusion
    A = evaluate_drift(dd, z)
    if pair.U is None:
        mech = float(np.max(np.abs(A)))
    else:
        mech = float(np.max(np.abs(A + dd.D @ pair.U.gradient(z))))
    chem = np.zeros(spec.n_pairs)
    if spec.channels:
        if pair.G is None:
            raise ModelError("a chemical potential G is required for specs with jump channels")
        fwd, bwd = channel_rates(spec, z)
        chem = np.abs(_log_ratio(fwd, bwd, z) + spec.nu @ pair.G.gradient(z))
    return mech, chem


def detailed_balance_field(spec: GeneratorSpec, pair: PotentialPair, z) -> np.ndarray:
    """``-(D grad U + sum_l 2 nu_l Rhat_l sinh(nu_l.grad G / 2))`` with ``Rhat_l = sqrt(R_l R_-l)``.

    Refuses (``ThermoDomainError``) unless both potential conditions hold to 1e-8.
    """
    z = np.asarray(z, dtype=float)
    mech, chem = check_potential_conditions(spec, pair, z)
    if mech > POTENTIAL_TOL or np.any(chem > POTENTIAL_TOL):
        raise ThermoDomainError(
            f"potential conditions violated at z={z.tolist()} (mechanical {mech:.3g}, chemical {np.max(chem, initial=0):.3g})"
        )
    dd = spec.drift_diffusion
    out = np.zeros(spec.dimension)
    if pair.U is not None:
        out += dd.D @ pair.U.gradient(z)
    if spec.channels:
        fwd, bwd = channel_rates(spec, z)
        rhat = np.sqrt(fwd * bwd)
        nu = spec.nu
        out += (2.0 * rhat * np.sinh(0.5 * (nu @ pair.G.gradient(z)))) @ nu
    return -out


def cit_sigma(spec: GeneratorSpec, candidate: RateFunction, z, zdot=None):
    """Split ``dphi/dt = zdot.grad phi`` into ``-sigma1 - sigma2``.

    ``sigma1`` sums ``R(e^{nu.g} - nu.g - 1)`` over both directions of every
    channel (non-negative); ``sigma2`` is the remainder.  ``zdot`` defaults to
    the deterministic field.  The split is exact only when ``phi`` solves the
    stationary Hamilton-Jacobi equation.
    """
    z = np.asarray(z, dtype=float)
    g = candidate.gradient(z)
    F = vector_field(spec, z)
    zdot = F if zdot is None else np.asarray(zdot, dtype=float)
    dd = spec.drift_diffusion
    sigma1 = 0.0
    if spec.channels:
        fwd, bwd = channel_rates(spec, z)
        a = spec.nu @ g
        # expm1(a) - a avoids cancellation for small |a|
        sigma1 = float(np.sum(fwd * (np.expm1(a) - a) + bwd * (np.expm1(-a) + a)))
    sigma2 = float(-(zdot - F - g @ dd.D) @ g)
    return sigma1, sigma2


def cit_extension_field(spec: GeneratorSpec, candidate: RateFunction, M, z) -> np.ndarray:
    """``F(z) + (D - M)^T grad phi(z)``; ``M = D`` returns ``F`` itself."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = spec.dimension
    if M.shape != (n, n):
        raise ValueError(f"M must be {n}x{n}")
    if np.max(np.abs(M - M.T)) > 1e-12 or np.linalg.eigvalsh(0.5 * (M + M.T)).min() < -1e-10:
        raise ValueError("M must be symmetric positive semidefinite")
    z = np.asarray(z, dtype=float)
    F = vector_field(spec, z)
    K = np.asarray(spec.drift_diffusion.D) - M
    if not np.any(K):
        return F
    return F + K.T @ candidate.gradient(z)
