"""Generator specifications: jump channels plus affine drift and constant diffusion.

A :class:`GeneratorSpec` bundles everything needed to describe the
epsilon-dependent Markov generator

    sum_l R_l(xi) [delta(xi - z + eps nu_l) - delta(xi - z)] / eps
      - A(xi) delta'(z - xi) + eps D delta''(z - xi)

with jump channels stored as forward/backward pairs (the backward
direction jumps along ``-nu``).  Specs are immutable once built and all
evaluation helpers are pure.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10

RATE_KINDS = ("constant", "mass_action")


class ModelError(ValueError):
    """Raised for malformed model configs or out-of-domain evaluations."""


class RateDomainError(ModelError):
    """Mass-action rate evaluated at a negative coordinate with positive order."""


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RateLaw:
    kind: str
    k: float
    order: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "k", float(self.k))
        if self.order is not None:
            object.__setattr__(self, "order", _frozen(self.order, dtype=int))

    @classmethod
    def constant(cls, k):
        return cls("constant", k)

    @classmethod
    def mass_action(cls, k, order):
        return cls("mass_action", k, order)

    def to_config(self):
        cfg = {"kind": self.kind, "k": self.k}
        if self.order is not None:
            cfg["order"] = [int(o) for o in self.order]
        return cfg


@dataclass(frozen=True)
class JumpChannelPair:
    nu: np.ndarray
    forward: RateLaw
    backward: RateLaw

    def __post_init__(self):
        object.__setattr__(self, "nu", _frozen(self.nu, dtype=int))

    def to_config(self):
        return {
            "nu": [int(v) for v in self.nu],
            "forward": self.forward.to_config(),
            "backward": self.backward.to_config(),
        }


@dataclass(frozen=True)
class DriftDiffusion:
    """Affine drift ``A(z) = A0 + A1 z`` and a constant diffusion matrix ``D``."""

    A0: np.ndarray
    A1: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A0", _frozen(np.atleast_1d(self.A0)))
        object.__setattr__(self, "A1", _frozen(np.atleast_2d(self.A1)))
        object.__setattr__(self, "D", _frozen(np.atleast_2d(self.D)))

    @classmethod
    def zero(cls, n):
        return cls(np.zeros(n), np.zeros((n, n)), np.zeros((n, n)))

    @property
    def has_drift(self):
        return bool(np.any(self.A0) or np.any(self.A1))

    @property
    def has_diffusion(self):
        return bool(np.any(self.D))

    @property
    def is_zero(self):
        return not (self.has_drift or self.has_diffusion)


@dataclass(frozen=True)
class GeneratorSpec:
    dimension: int
    channels: tuple[JumpChannelPair, ...] = ()
    drift_diffusion: DriftDiffusion | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.drift_diffusion is None:
            object.__setattr__(self, "drift_diffusion", DriftDiffusion.zero(self.dimension))

    @property
    def n_pairs(self):
        return len(self.channels)

    @property
    def nu(self):
        """Stoichiometry matrix of shape ``(n_pairs, dimension)``."""
        if not self.channels:
            return np.zeros((0, self.dimension))
        return np.array([c.nu for c in self.channels], dtype=float)

    def to_config(self):
        dd = self.drift_diffusion
        return {
            "dimension": self.dimension,
            "label": self.label,
            "drift": {"A0": dd.A0.tolist(), "A1": dd.A1.tolist()},
            "diffusion": dd.D.tolist(),
            "channels": [c.to_config() for c in self.channels],
        }


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok

    def raise_if_invalid(self):
        if self.violations:
            raise ModelError("invalid model: " + "; ".join(self.violations))


# --------------------------------------------------------------------------
# evaluation


def evaluate_rate(law: RateLaw, z) -> float:
    """Evaluate a rate law at a single state (``0**0 == 1``)."""
    if law.kind == "constant":
        return law.k
    z = np.asarray(z, dtype=float)
    order = law.order
    if np.any((z < 0) & (order > 0)):
        raise RateDomainError(f"negative coordinate in mass-action rate at z={z.tolist()}")
    out = law.k
    for zi, oi in zip(z, order):
        if oi:
            out *= zi**oi
    return float(out)


def rate_vector(law: RateLaw, Z) -> np.ndarray:
    """Vectorised rate evaluation over states ``Z`` of shape ``(..., n)``.

    Negative coordinates with positive order give a zero rate instead of an
    error, which is what the samplers need near the boundary.
    """
    Z = np.asarray(Z, dtype=float)
    if law.kind == "constant":
        return np.full(Z.shape[:-1], law.k)
    out = np.full(Z.shape[:-1], law.k)
    for i, oi in enumerate(law.order):
        if oi:
            out = out * np.maximum(Z[..., i], 0.0) ** oi
    return out


def rate_gradient(law: RateLaw, z) -> np.ndarray:
    """Gradient of a rate law, computed termwise so ``z_i = 0`` needs no division."""
    z = np.asarray(z, dtype=float)
    grad = np.zeros_like(z)
    if law.kind == "constant" or law.k == 0.0:
        return grad
    order = law.order
    for i, oi in enumerate(order):
        if oi == 0:
            continue
        term = law.k * oi * z[i] ** (oi - 1)
        for j, oj in enumerate(order):
            if j != i and oj:
                term *= z[j] ** oj
        grad[i] = term
    return grad


def evaluate_drift(dd: DriftDiffusion, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != dd.A0.shape[0]:
        raise ModelError(f"dimension mismatch: state has {z.shape[-1]} entries, drift expects {dd.A0.shape[0]}")
    return dd.A0 + z @ dd.A1.T


def channel_rates(spec: GeneratorSpec, z) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward rates of every channel pair at ``z``."""
    fwd = np.array([evaluate_rate(c.forward, z) for c in spec.channels])
    bwd = np.array([evaluate_rate(c.backward, z) for c in spec.channels])
    return fwd, bwd


# --------------------------------------------------------------------------
# validation


def validate_spec(spec: GeneratorSpec) -> ValidationReport:
    report = ValidationReport()
    v = report.violations
    n = spec.dimension
    if not isinstance(n, (int, np.integer)) or n < 1:
        v.append(f"dimension must be a positive integer, got {n!r}")
        return report
    dd = spec.drift_diffusion
    if dd.A0.shape != (n,):
        v.append(f"drift A0 has shape {dd.A0.shape}, expected ({n},)")
    if dd.A1.shape != (n, n):
        v.append(f"drift A1 has shape {dd.A1.shape}, expected ({n}, {n})")
    if dd.D.shape != (n, n):
        v.append(f"diffusion has shape {dd.D.shape}, expected ({n}, {n})")
    else:
        D = dd.D
        if not np.all(np.isfinite(D)):
            v.append("diffusion has non-finite entries")
        elif np.max(np.abs(D - D.T)) > SYMMETRY_TOL:
            v.append("diffusion matrix is not symmetric")
        else:
            lam = np.linalg.eigvalsh(D)
            if lam.min() < -PSD_TOL:
                v.append(f"diffusion matrix is not positive semidefinite (eigenvalue {lam.min():.6g})")
    if not (np.all(np.isfinite(dd.A0)) and np.all(np.isfinite(dd.A1))):
        v.append("drift has non-finite entries")
    for idx, ch in enumerate(spec.channels):
        if ch.nu.shape != (n,):
            v.append(f"channel {idx}: nu has length {ch.nu.size}, expected {n}")
        elif not np.any(ch.nu):
            v.append(f"channel {idx}: nu is all zero")
        for side, law in (("forward", ch.forward), ("backward", ch.backward)):
            if law.kind not in RATE_KINDS:
                v.append(f"channel {idx} {side}: unknown rate kind {law.kind!r}")
                continue
            if not math.isfinite(law.k) or law.k < 0:
                v.append(f"channel {idx} {side}: rate constant must be finite and >= 0, got {law.k}")
            if law.kind == "mass_action":
                if law.order is None or law.order.shape != (n,):
                    v.append(f"channel {idx} {side}: mass-action order must have length {n}")
                elif np.any(law.order < 0):
                    v.append(f"channel {idx} {side}: mass-action orders must be >= 0")
            elif law.order is not None:
                v.append(f"channel {idx} {side}: constant rate takes no order")
    return report


# --------------------------------------------------------------------------
# config round trip

_TOP_KEYS = {"dimension", "label", "drift", "diffusion", "channels"}
_DRIFT_KEYS = {"A0", "A1"}
_CHANNEL_KEYS = {"nu", "forward", "backward"}
_RATE_KEYS = {"kind", "k", "order"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ModelError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - allowed
    if unknown:
        raise ModelError(f"{where}: unknown field(s) {sorted(unknown)}")


def _rate_from_config(cfg, where):
    _check_keys(cfg, _RATE_KEYS, where)
    for key in ("kind", "k"):
        if key not in cfg:
            raise ModelError(f"{where}: missing field {key!r}")
    try:
        return RateLaw(cfg["kind"], cfg["k"], cfg.get("order"))
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{where}: malformed rate law ({exc})") from exc


def spec_from_config(cfg: dict, validate: bool = True) -> GeneratorSpec:
    """Build a spec from its JSON-style dict; unknown keys are hard errors."""
    _check_keys(cfg, _TOP_KEYS, "model")
    if "dimension" not in cfg:
        raise ModelError("model: missing field 'dimension'")
    n = cfg["dimension"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ModelError(f"model: dimension must be a positive integer, got {n!r}")
    drift = cfg.get("drift", {})
    _check_keys(drift, _DRIFT_KEYS, "drift")
    A0 = drift.get("A0", [0.0] * n)
    A1 = drift.get("A1", [[0.0] * n for _ in range(n)])
    D = cfg.get("diffusion", [[0.0] * n for _ in range(n)])
    channels = []
    for idx, ch in enumerate(cfg.get("channels", [])):
        where = f"channels[{idx}]"
        _check_keys(ch, _CHANNEL_KEYS, where)
        for key in _CHANNEL_KEYS:
            if key not in ch:
                raise ModelError(f"{where}: missing field {key!r}")
        try:
            pair = JumpChannelPair(
                ch["nu"],
                _rate_from_config(ch["forward"], where + ".forward"),
                _rate_from_config(ch["backward"], where + ".backward"),
            )
        except (TypeError, ValueError) as exc:
            raise ModelError(f"{where}: malformed channel ({exc})") from exc
        channels.append(pair)
    try:
        dd = DriftDiffusion(np.asarray(A0, float), np.asarray(A1, float), np.asarray(D, float))
    except ValueError as exc:
        raise ModelError(f"model: malformed drift/diffusion ({exc})") from exc
    spec = GeneratorSpec(n, tuple(channels), dd, str(cfg.get("label", "")))
    if validate:
        validate_spec(spec).raise_if_invalid()
    return spec


def load_model(path) -> GeneratorSpec:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON ({exc})") from exc
    return spec_from_config(cfg)


def save_model(spec: GeneratorSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_config(), indent=2) + "\n")


# --------------------------------------------------------------------------
# the two worked examples


def ou_spec(a=1.0, D=1.0, label="ornstein-uhlenbeck") -> GeneratorSpec:
    """1-D Ornstein-Uhlenbeck generator: drift ``-a z``, diffusion ``D``."""
    dd = DriftDiffusion(np.zeros(1), [[-float(a)]], [[float(D)]])
    return GeneratorSpec(1, (), dd, label)


def birth_death_spec(k_birth=2.0, k_death=1.0, label="birth-death") -> GeneratorSpec:
    """1-D birth-death network: 0 -> X at constant rate, X -> 0 by mass action."""
    pair = JumpChannelPair([1], RateLaw.constant(k_birth), RateLaw.mass_action(k_death, [1]))
    return GeneratorSpec(1, (pair,), None, label)


def hybrid_spec(a=1.0, D=1.0, k_birth=2.0, k_death=1.0, label="ou+birth-death") -> GeneratorSpec:
    """Birth-death jumps superposed on Ornstein-Uhlenbeck drift and diffusion."""
    pair = JumpChannelPair([1], RateLaw.constant(k_birth), RateLaw.mass_action(k_death, [1]))
    dd = DriftDiffusion(np.zeros(1), [[-float(a)]], [[float(D)]])
    return GeneratorSpec(1, (pair,), dd, label)


def make_spec(
    dimension: int,
    channels: Sequence[JumpChannelPair] = (),
    A0=None,
    A1=None,
    D=None,
    label: str = "",
) -> GeneratorSpec:
    n = dimension
    dd = DriftDiffusion(
        np.zeros(n) if A0 is None else A0,
        np.zeros((n, n)) if A1 is None else A1,
        np.zeros((n, n)) if D is None else D,
    )
    spec = GeneratorSpec(n, tuple(channels), dd, label)
    validate_spec(spec).raise_if_invalid()
    return spec
