"""Closed-form stationary rate functions and Hamilton-Jacobi checks.

Sign convention: ``phi`` is the rate function (zero at the attractor,
decreasing along the deterministic flow).  The corresponding entropy is
``-phi``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .determlimit import vector_field
from .ldp import hamiltonian
from .model import GeneratorSpec
from .trajectory import Trajectory

RELENT_FLOOR = 1e-6


class CandidateDomainError(ValueError):
    """Rate-function gradient requested outside its admissible domain."""


class RateFunction:
    """Base class: a scalar ``phi(z)`` with gradient."""

    kind = "abstract"

    def value(self, z) -> float:
        raise NotImplementedError

    def gradient(self, z) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, z):
        return self.value(z)


@dataclass
class QuadraticRate(RateFunction):
    """``phi(z) = (z - c).P.(z - c) / 2`` with a symmetric positive-definite precision ``P``."""

    precision: np.ndarray
    center: np.ndarray

    kind = "quadratic"

    def __post_init__(self):
        self.precision = np.atleast_2d(np.asarray(self.precision, dtype=float))
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))

    def value(self, z):
        d = np.asarray(z, dtype=float) - self.center
        return float(0.5 * d @ self.precision @ d)

    def gradient(self, z):
        return self.precision @ (np.asarray(z, dtype=float) - self.center)


def ou_quadratic(a: float, D: float) -> QuadraticRate:
    """Stationary OU rate function ``a z^2 / (2 D)``."""
    if a <= 0 or D <= 0:
        raise ValueError("a and D must be > 0")
    return QuadraticRate([[a / D]], [0.0])


def gaussian_quadratic(spec: GeneratorSpec) -> QuadraticRate:
    """Quadratic quasi-potential of a linear drift-diffusion spec without jumps.

    The stationary covariance ``S`` solves ``A1 S + S A1^T + 2 D = 0`` and
    the rate function is ``(z - c).S^{-1}.(z - c) / 2`` around the fixed
    point ``c``.
    """
    if spec.channels:
        raise ValueError("gaussian_quadratic needs a spec without jump channels")
    dd = spec.drift_diffusion
    A1 = np.asarray(dd.A1)
    if np.max(np.linalg.eigvals(A1).real) >= 0:
        raise ValueError("drift matrix must be Hurwitz (all eigenvalues with negative real part)")
    center = np.linalg.solve(A1, -dd.A0)
    S = solve_continuous_lyapunov(A1, -2.0 * np.asarray(dd.D))
    P = np.linalg.inv(S)
    return QuadraticRate(0.5 * (P + P.T), center)


@dataclass
class RelativeEntropyRate(RateFunction):
    """``phi(z) = sum_i z_i ln(z_i / zss_i) - z_i + zss_i``."""

    z_ss: np.ndarray
    floor: float = RELENT_FLOOR

    kind = "relative_entropy"

    def __post_init__(self):
        self.z_ss = np.atleast_1d(np.asarray(self.z_ss, dtype=float))
        if np.any(self.z_ss <= 0):
            raise ValueError("relative entropy needs a strictly positive reference state")

    @property
    def center(self):
        return self.z_ss

    def value(self, z):
        return crn_relative_entropy(z, self.z_ss)

    def gradient(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < self.floor):
            raise CandidateDomainError(f"relative-entropy gradient undefined below z_i = {self.floor} (z={z.tolist()})")
        return np.log(z / self.z_ss)


@dataclass
class TabulatedRate(RateFunction):
    """1-D rate function given on a grid; gradient by finite differences.  Verification only."""

    grid: np.ndarray
    values: np.ndarray

    kind = "tabulated"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape or self.grid.size < 3:
            raise ValueError("tabulated rate needs matching 1-D grid and values (>= 3 points)")
        self._slope = np.gradient(self.values, self.grid)

    def _check(self, z):
        z = float(np.atleast_1d(z)[0])
        if not self.grid[0] <= z <= self.grid[-1]:
            raise CandidateDomainError(f"z={z} outside tabulated range")
        return z

    def value(self, z):
        return float(np.interp(self._check(z), self.grid, self.values))

    def gradient(self, z):
        return np.array([np.interp(self._check(z), self.grid, self._slope)])


class FunctionRate(RateFunction):
    """Wrap user callables (handy for negative controls)."""

    kind = "function"

    def __init__(self, value: Callable, gradient: Callable, name: str = "custom"):
        self._value = value
        self._gradient = gradient
        self.name = name

    def value(self, z):
        return float(self._value(np.asarray(z, dtype=float)))

    def gradient(self, z):
        return np.atleast_1d(np.asarray(self._gradient(np.asarray(z, dtype=float)), dtype=float))


# --------------------------------------------------------------------------


def ou_rate_function(a: float, D: float, z, t: float | None = None) -> float:
    """OU rate function; ``t=None`` gives the stationary limit ``a z^2/(2D)``."""
    if a <= 0 or D <= 0:
        raise ValueError("a and D must be > 0")
    z = np.asarray(z, dtype=float)
    if t is None:
        return a * z**2 / (2.0 * D)
    if t <= 0:
        raise ValueError("t must be > 0 for the transient rate function")
    return a * z**2 / (2.0 * D * -np.expm1(-2.0 * a * t))


def crn_relative_entropy(z, z_ss) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    z_ss = np.atleast_1d(np.asarray(z_ss, dtype=float))
    if np.any(z_ss <= 0):
        raise ValueError("z_ss must be strictly positive")
    if np.any(z < 0):
        raise ValueError("relative entropy needs z >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = np.where(z > 0, z * (np.log(np.where(z > 0, z, 1.0)) - np.log(z_ss)), 0.0)
    return float(np.sum(xlogx - z + z_ss))


def stationary_hje_residual(spec: GeneratorSpec, candidate: RateFunction, z) -> float:
    """``H(z, grad phi(z))``; zero when ``phi`` solves the stationary HJE."""
    return hamiltonian(spec, z, candidate.gradient(z))


def transient_hje_residual(a: float, D: float, z, t: float) -> float:
    """``dphi/dt + A dphi/dz + D (dphi/dz)^2`` for the transient OU rate function."""
    if t <= 0:
        raise ValueError("t must be > 0")
    z = np.asarray(z, dtype=float)
    s = -np.expm1(-2.0 * a * t)
    c = a / (D * s)
    phi_t = -(a * a) * np.exp(-2.0 * a * t) * z**2 / (D * s * s)
    grad = c * z
    return phi_t + (-a * z) * grad + D * grad * grad


@dataclass
class LyapunovScan:
    times: np.ndarray
    phi: np.ndarray
    dphi_dt: np.ndarray

    @property
    def max_dphi_dt(self):
        return float(np.max(self.dphi_dt))


def lyapunov_scan(spec: GeneratorSpec, candidate: RateFunction, trajectory: Trajectory) -> LyapunovScan:
    """``dphi/dt = F(z(t)).grad phi(z(t))`` along a deterministic trajectory."""
    phi = np.array([candidate.value(z) for z in trajectory.states])
    rate = np.array([vector_field(spec, z) @ candidate.gradient(z) for z in trajectory.states])
    return LyapunovScan(trajectory.times, phi, rate)


def residual_scan(spec: GeneratorSpec, candidate: RateFunction, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return np.array([stationary_hje_residual(spec, candidate, z) for z in points])
