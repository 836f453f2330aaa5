"""Fluctuation Hamiltonian, its Legendre-dual Lagrangian, and least-action paths.

For a spec with affine drift ``A``, constant diffusion ``D`` and channel
pairs ``(nu_l, R_l, R_-l)`` the Hamiltonian is

    H(z, y) = A(z).y + y.D.y + sum_l [R_l(z)(e^{nu_l.y} - 1) + R_-l(z)(e^{-nu_l.y} - 1)]

``H(z, 0) = 0`` and ``dH/dy(z, 0) = F(z)``, so the ``y = 0`` slice of
Hamilton's equations is the deterministic limit.  The Lagrangian is the
Legendre transform in ``y``; the action of a path is its time integral.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .determlimit import BlowUpError, NumericalError, integrate_rk4
from .model import GeneratorSpec, RateDomainError, channel_rates, evaluate_drift, rate_gradient, rate_vector

EXP_LIMIT = 700.0


class MomentumOverflowError(NumericalError):
    """``|nu.y|`` exceeded the exponential range."""


class UnattainableVelocityError(NumericalError):
    """No finite momentum produces the requested velocity."""


@dataclass
class PhasePoint:
    z: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.z = np.atleast_1d(np.asarray(self.z, dtype=float))
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if self.z.shape != self.y.shape:
            raise ValueError("z and y must have the same shape")
        if not (np.all(np.isfinite(self.z)) and np.all(np.isfinite(self.y))):
            raise ValueError("phase point must be finite")


@dataclass
class DiscretePath:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if self.times.size < 2 or self.times.size != self.states.shape[0]:
            raise ValueError("path needs matching times/states with at least two nodes")
        steps = np.diff(self.times)
        if self.times[0] != 0.0 or np.any(steps <= 0) or np.ptp(steps) > 1e-9 * self.times[-1]:
            raise ValueError("path times must form a uniform grid starting at 0")

    @classmethod
    def uniform(cls, states, T):
        states = np.asarray(states, dtype=float)
        return cls(np.linspace(0.0, T, states.shape[0]), states)

    @property
    def dt(self):
        return self.times[-1] / (self.times.size - 1)


def _check_exponent(a):
    if np.any(np.abs(a) > EXP_LIMIT):
        raise MomentumOverflowError(f"|nu.y| = {np.max(np.abs(a)):.3g} exceeds {EXP_LIMIT}; momentum out of range")


def hamiltonian(spec: GeneratorSpec, z, y) -> float:
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    dd = spec.drift_diffusion
    H = evaluate_drift(dd, z) @ y + y @ dd.D @ y
    if spec.channels:
        a = spec.nu @ y
        _check_exponent(a)
        fwd, bwd = channel_rates(spec, z)
        H += np.sum(fwd * np.expm1(a) + bwd * np.expm1(-a))
    return float(H)


def _rhs(spec, z, y):
    dd = spec.drift_diffusion
    dz = evaluate_drift(dd, z) + 2.0 * dd.D @ y
    dy = -(dd.A1.T @ y)
    if spec.channels:
        nu = spec.nu
        a = nu @ y
        _check_exponent(a)
        fwd, bwd = channel_rates(spec, z)
        ep, em = np.exp(a), np.exp(-a)
        dz = dz + (fwd * ep - bwd * em) @ nu
        for ch, xp, xm in zip(spec.channels, np.expm1(a), np.expm1(-a)):
            dy = dy - rate_gradient(ch.forward, z) * xp - rate_gradient(ch.backward, z) * xm
    return dz, dy


def hamilton_rhs(spec: GeneratorSpec, p: PhasePoint):
    """``(dz/dt, dy/dt) = (dH/dy, -dH/dz)`` with analytic derivatives."""
    return _rhs(spec, p.z, p.y)


@dataclass
class HamiltonFlow:
    times: np.ndarray
    z: np.ndarray
    y: np.ndarray
    energy: np.ndarray
    max_energy_drift: float


def integrate_hamilton(spec: GeneratorSpec, p0: PhasePoint, T: float, dt: float, record_stride: int = 1) -> HamiltonFlow:
    """RK4 on the 2n-dimensional Hamiltonian system.

    ``max_energy_drift`` is ``max_t |H(t) - H(0)|`` over every step (not just
    the recorded ones).  Raises :class:`BlowUpError` if momenta run away.
    """
    n = spec.dimension

    def f(u):
        dz, dy = _rhs(spec, u[:n], u[n:])
        return np.concatenate([dz, dy])

    u0 = np.concatenate([p0.z, p0.y])
    try:
        times, U = integrate_rk4(f, u0, T, dt, 1)
    except MomentumOverflowError as exc:
        raise BlowUpError(f"Hamiltonian flow left the exponential range: {exc}", np.nan, None) from exc
    except RateDomainError as exc:
        raise BlowUpError(f"Hamiltonian flow left the rate domain: {exc}", np.nan, None) from exc
    energy = np.array([hamiltonian(spec, u[:n], u[n:]) for u in U])
    drift = float(np.max(np.abs(energy - energy[0])))
    keep = np.zeros(times.size, dtype=bool)
    keep[::record_stride] = True
    keep[-1] = True
    return HamiltonFlow(times[keep], U[keep, :n], U[keep, n:], energy[keep], drift)


# --------------------------------------------------------------------------
# batched Legendre transform


def _batch_rates(spec, Z):
    """Forward/backward rates for states ``Z`` of shape (m, n); negative coordinates are out of domain."""
    for ch in spec.channels:
        for law in (ch.forward, ch.backward):
            if law.kind == "mass_action" and np.any(Z[:, law.order > 0] < 0):
                raise RateDomainError("negative coordinate in mass-action rate along path")
    fwd = np.stack([rate_vector(c.forward, Z) for c in spec.channels], axis=1)
    bwd = np.stack([rate_vector(c.backward, Z) for c in spec.channels], axis=1)
    return fwd, bwd


def _batch_legendre(spec, Z, V, tol=1e-10, max_iter=50):
    """Solve ``dH/dy(z, y) = v`` row-wise; returns ``(Y, H(Z, Y))``.

    Newton's method on the convex objective ``H(z, y) - y.v`` with
    per-row backtracking, started from ``y = 0``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    m, n = Z.shape
    dd = spec.drift_diffusion
    A = dd.A0 + Z @ dd.A1.T
    D = dd.D
    if spec.channels:
        nu = spec.nu
        fwd, bwd = _batch_rates(spec, Z)

    def parts(Y):
        H = np.einsum("ij,ij->i", A, Y) + np.einsum("ij,jk,ik->i", Y, D, Y)
        grad = A + 2.0 * Y @ D
        hess = np.broadcast_to(2.0 * D, (m, n, n)).copy()
        if spec.channels:
            a = Y @ nu.T
            _check_exponent(a)
            ep, em = np.exp(a), np.exp(-a)
            H = H + np.sum(fwd * np.expm1(a) + bwd * np.expm1(-a), axis=1)
            grad = grad + (fwd * ep - bwd * em) @ nu
            w = fwd * ep + bwd * em
            hess = hess + np.einsum("il,lj,lk->ijk", w, nu, nu)
        return H, grad, hess

    Y = np.zeros((m, n))
    scale = 1.0 + np.max(np.abs(V), axis=1)
    H, grad, hess = parts(Y)
    for _ in range(max_iter):
        resid = grad - V
        done = np.max(np.abs(resid), axis=1) <= tol * scale
        if np.all(done):
            return Y, H
        try:
            step = -np.linalg.solve(hess, resid[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise UnattainableVelocityError("singular momentum Hessian; velocity outside the reachable span") from exc
        step[done] = 0.0
        obj = H - np.einsum("ij,ij->i", Y, V)
        lam = np.ones(m)
        Y_new = Y + step
        for _ in range(40):
            try:
                H_new, grad_new, hess_new = parts(Y_new)
                bad = H_new - np.einsum("ij,ij->i", Y_new, V) > obj + 1e-13 * (1.0 + np.abs(obj))
            except MomentumOverflowError:
                H_new = None
                bad = np.max(np.abs(Y_new @ spec.nu.T), axis=1) > EXP_LIMIT if spec.channels else np.zeros(m, bool)
            if H_new is not None and not np.any(bad):
                break
            lam = np.where(bad, 0.5 * lam, lam)
            Y_new = Y + lam[:, None] * step
        else:
            raise UnattainableVelocityError("Legendre line search failed")
        Y = Y_new
        H, grad, hess = H_new, grad_new, hess_new
    resid = grad - V
    if np.all(np.max(np.abs(resid), axis=1) <= tol * scale):
        return Y, H
    raise UnattainableVelocityError(
        f"Legendre solve did not converge in {max_iter} iterations (residual {np.max(np.abs(resid)):.3g})"
    )


def legendre_momentum(spec: GeneratorSpec, z, zdot) -> np.ndarray:
    """Momentum ``y`` with ``dH/dy(z, y) = zdot``."""
    Y, _ = _batch_legendre(spec, np.atleast_1d(z)[None, :], np.atleast_1d(zdot)[None, :])
    return Y[0]


def lagrangian(spec: GeneratorSpec, z, zdot) -> float:
    """``L(z, zdot) = y.zdot - H(z, y)`` at the Legendre momentum; always >= 0."""
    zdot = np.atleast_1d(np.asarray(zdot, dtype=float))
    Y, H = _batch_legendre(spec, np.atleast_1d(z)[None, :], zdot[None, :])
    return float(Y[0] @ zdot - H[0])


def lagrangian_batch(spec: GeneratorSpec, Z, V) -> np.ndarray:
    Y, H = _batch_legendre(spec, Z, V)
    return np.einsum("ij,ij->i", Y, np.atleast_2d(V)) - H


# --------------------------------------------------------------------------
# actions

QUADRATURES = ("midpoint", "left")


def _segment_costs(spec, states, dt, rule):
    V = np.diff(states, axis=0) / dt
    if rule == "midpoint":
        Z = 0.5 * (states[:-1] + states[1:])
    elif rule == "left":
        Z = states[:-1]
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}; choose from {QUADRATURES}")
    return lagrangian_batch(spec, Z, V) * dt


def path_action(spec: GeneratorSpec, path: DiscretePath, rule: str = "midpoint") -> float:
    """Discrete action ``sum_k L(z_k*, (z_{k+1} - z_k)/dt) dt``.

    ``rule="left"`` evaluates ``L`` at the left node of each segment;
    ``"midpoint"`` (default) at the segment midpoint, which is second order
    in ``dt``.
    """
    return float(np.sum(_segment_costs(spec, path.states, path.dt, rule)))


@dataclass
class ActionOptions:
    gtol: float = 1e-8
    max_iters: int = 20000
    rule: str = "midpoint"
    fd_step: float = 1e-6


@dataclass
class ActionResult:
    path: DiscretePath
    action: float
    iters: int
    gnorm: float
    converged: bool
    history: list = field(default_factory=list, repr=False)

    def summary(self):
        return {"action": self.action, "iters": self.iters, "gnorm": self.gnorm, "converged": self.converged}


def _action_gradient(spec, states, dt, rule, h_rel):
    """Central finite-difference gradient of the action w.r.t. interior nodes.

    Nodes of equal parity share no segment, so each coordinate needs only
    two perturbed evaluations per parity class.
    """
    N = states.shape[0] - 1
    n = states.shape[1]
    grad = np.zeros_like(states)
    for parity in (1, 0):
        idx = np.arange(1, N)
        idx = idx[idx % 2 == parity]
        if idx.size == 0:
            continue
        for i in range(n):
            h = h_rel * (1.0 + np.abs(states[idx, i]))
            plus = states.copy()
            minus = states.copy()
            plus[idx, i] += h
            minus[idx, i] -= h
            diff = _segment_costs(spec, plus, dt, rule) - _segment_costs(spec, minus, dt, rule)
            grad[idx, i] = (diff[idx - 1] + diff[idx]) / (2.0 * h)
    return grad


def minimize_action(
    spec: GeneratorSpec, z_start, z_end, T: float, N: int, opts: ActionOptions | None = None
) -> ActionResult:
    """Minimise the discrete action over interior nodes with endpoints pinned.

    Steepest descent with an Armijo backtracking line search; the trial
    step length is the Barzilai-Borwein estimate from the previous
    iterate.  Trial paths with unattainable segment velocities are
    rejected and the step is shortened.
    """
    opts = opts or ActionOptions()
    z_start = np.atleast_1d(np.asarray(z_start, dtype=float))
    z_end = np.atleast_1d(np.asarray(z_end, dtype=float))
    if N < 1:
        raise ValueError("N must be >= 1")
    dt = T / N
    s = np.linspace(0.0, 1.0, N + 1)[:, None]
    states = (1.0 - s) * z_start + s * z_end

    def action(x):
        try:
            return float(np.sum(_segment_costs(spec, x, dt, opts.rule)))
        except (NumericalError, ValueError):
            return np.inf

    S = action(states)
    if not np.isfinite(S):
        raise UnattainableVelocityError("initial straight-line path has unattainable segment velocities")
    history = [S]
    step_len = 1e-3 * dt
    prev_x = prev_g = None
    it = 0
    gnorm = 0.0
    converged = False
    for it in range(opts.max_iters + 1):
        g = _action_gradient(spec, states, dt, opts.rule, opts.fd_step)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= opts.gtol:
            converged = True
            break
        if it == opts.max_iters:
            break
        if prev_g is not None:
            sx = (states - prev_x).ravel()
            sg = (g - prev_g).ravel()
            curv = sx @ sg
            if curv > 0:
                step_len = (sx @ sx) / curv
        gg = float(np.sum(g * g))
        lam = step_len
        for _ in range(60):
            trial = states - lam * g
            S_trial = action(trial)
            if S_trial <= S - 1e-4 * lam * gg:
                break
            lam *= 0.5
        else:
            break
        prev_x, prev_g = states, g
        states, S = trial, S_trial
        history.append(S)
    path = DiscretePath(np.linspace(0.0, T, N + 1), states)
    return ActionResult(path, S, it, gnorm, converged, history)
