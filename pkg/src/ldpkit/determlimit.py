"""Deterministic limit ``dy/dt = F(y)`` of a generator spec."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GeneratorSpec, channel_rates, evaluate_drift
from .trajectory import Trajectory


class NumericalError(RuntimeError):
    """A numerical procedure failed (blow-up, no convergence, singular system)."""


class BlowUpError(NumericalError):
    def __init__(self, message, last_time, last_state):
        super().__init__(message)
        self.last_time = last_time
        self.last_state = last_state


@dataclass(frozen=True)
class OdeConfig:
    t_end: float
    dt: float
    record_stride: int = 1

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be > 0")
        if not 0 < self.dt <= self.t_end:
            raise ValueError("dt must satisfy 0 < dt <= t_end")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


def vector_field(spec: GeneratorSpec, z) -> np.ndarray:
    """``F(z) = A(z) + sum_l nu_l (R_l(z) - R_-l(z))``."""
    z = np.asarray(z, dtype=float)
    F = evaluate_drift(spec.drift_diffusion, z)
    if spec.channels:
        fwd, bwd = channel_rates(spec, z)
        F = F + (fwd - bwd) @ spec.nu
    return F


def rk4_step(f, z, dt):
    k1 = f(z)
    k2 = f(z + 0.5 * dt * k1)
    k3 = f(z + 0.5 * dt * k2)
    k4 = f(z + dt * k3)
    return z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _n_steps(t_end, dt):
    # tolerate t_end / dt landing a hair off an integer
    n = int(np.ceil(t_end / dt - 1e-9))
    return max(n, 1)


def integrate_rk4(f, z0, t_end, dt, record_stride=1):
    """Fixed-step RK4 for ``dz/dt = f(z)``; the last step is shortened to hit ``t_end``.

    Returns ``(times, states)``.  Raises :class:`BlowUpError` on a non-finite state.
    """
    z = np.array(z0, dtype=float)
    n_steps = _n_steps(t_end, dt)
    times = [0.0]
    states = [z.copy()]
    t = 0.0
    for step in range(1, n_steps + 1):
        h = min(dt, t_end - t) if step == n_steps else dt
        try:
            with np.errstate(over="raise", invalid="raise"):
                z_new = rk4_step(f, z, h)
        except FloatingPointError:
            z_new = np.full_like(z, np.nan)
        if not np.all(np.isfinite(z_new)):
            raise BlowUpError(f"non-finite state after t={t:.6g}", t, z)
        z = z_new
        t = t_end if step == n_steps else step * dt
        if step % record_stride == 0 or step == n_steps:
            times.append(t)
            states.append(z.copy())
    return np.array(times), np.array(states)


def integrate_ode(spec: GeneratorSpec, z0, cfg: OdeConfig) -> Trajectory:
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (spec.dimension,):
        raise ValueError(f"z0 must have {spec.dimension} entries")
    times, states = integrate_rk4(lambda z: vector_field(spec, z), z0, cfg.t_end, cfg.dt, cfg.record_stride)
    return Trajectory(times, states)


def fd_jacobian(f, z, f0=None):
    """Forward-difference Jacobian with step ``1e-6 (1 + |z_i|)``."""
    z = np.asarray(z, dtype=float)
    f0 = f(z) if f0 is None else f0
    J = np.empty((f0.size, z.size))
    for i in range(z.size):
        h = 1e-6 * (1.0 + abs(z[i]))
        zp = z.copy()
        zp[i] += h
        J[:, i] = (f(zp) - f0) / h
    return J


def find_fixed_point(spec: GeneratorSpec, guess, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Newton iteration on ``F`` with a finite-difference Jacobian."""
    z = np.array(guess, dtype=float)
    f = lambda x: vector_field(spec, x)
    for _ in range(max_iter + 1):
        Fz = f(z)
        if np.max(np.abs(Fz)) <= tol:
            return z
        J = fd_jacobian(f, z, Fz)
        try:
            if np.linalg.cond(J) > 1e14:
                raise np.linalg.LinAlgError
            step = np.linalg.solve(J, -Fz)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular Jacobian at z={z.tolist()}") from exc
        # halve the step while it leaves a mass-action domain or fails to reduce |F|
        lam = 1.0
        norm0 = np.max(np.abs(Fz))
        while lam >= 1e-3:
            try:
                if np.max(np.abs(f(z + lam * step))) < norm0:
                    break
            except ValueError:
                pass
            lam *= 0.5
        z = z + lam * step
    raise NumericalError(f"Newton did not converge in {max_iter} iterations (last z={z.tolist()})")
