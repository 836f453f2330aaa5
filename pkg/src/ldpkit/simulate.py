"""Monte Carlo sampling of the mesoscopic process and empirical rate functions.

Jumps fire with propensity ``R(z)/eps`` and move the state by ``eps*nu``;
the diffusion part is Euler-Maruyama with increment
``A(z) dt + sqrt(2 eps dt) C g`` where ``C C^T = D``.  Mixed specs use
Strang splitting per ``dt`` window (half diffusion step, exact SSA over
the window with the continuous part frozen, half diffusion step); the
splitting is first order in ``dt`` overall.

Paths are simulated in fixed-size blocks.  Each block owns an RNG
substream derived from ``(seed, block_index)`` and always draws for the
full block, so a path's trajectory depends only on the seed and its index.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import GeneratorSpec, rate_vector
from .trajectory import Trajectory

BLOCK_SIZE = 2048
DEFAULT_BINS = 64
DEFAULT_MIN_COUNT = 25
THREADS_ENV = "LDPKIT_THREADS"


@dataclass(frozen=True)
class SimConfig:
    epsilon: float
    t_end: float
    dt: float
    n_paths: int
    seed: int = 0
    record_stride: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.t_end > 0:
            raise ValueError("t_end must be > 0")
        if not 0 < self.dt <= self.t_end:
            raise ValueError("dt must satisfy 0 < dt <= t_end")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.epsilon > 1:
            warnings.warn(f"epsilon={self.epsilon} > 1: far from the small-noise regime", stacklevel=2)

    @property
    def n_windows(self):
        return max(int(math.ceil(self.t_end / self.dt - 1e-9)), 1)

    def window_times(self):
        t = np.arange(self.n_windows + 1) * self.dt
        t[-1] = self.t_end
        return t


def n_workers(threads=None):
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(int(threads), 1)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(block,))))


def _noise_factor(D):
    D = np.asarray(D, dtype=float)
    try:
        return np.linalg.cholesky(D)
    except np.linalg.LinAlgError:
        # semidefinite: symmetric square root from the eigen-decomposition
        lam, V = np.linalg.eigh(D)
        return V * np.sqrt(np.clip(lam, 0.0, None))


class _Stepper:
    """Advances a block of states ``Z`` (shape (B, n)) across one window."""

    def __init__(self, spec: GeneratorSpec, epsilon: float):
        self.eps = epsilon
        dd = spec.drift_diffusion
        self.A0 = np.asarray(dd.A0)
        self.A1T = np.asarray(dd.A1).T
        self.has_drift = dd.has_drift
        self.has_noise = dd.has_diffusion
        self.CT = _noise_factor(dd.D).T if self.has_noise else None
        self.continuous = self.has_drift or self.has_noise
        self.laws = []
        jumps = []
        for ch in spec.channels:
            self.laws += [ch.forward, ch.backward]
            jumps += [ch.nu, -ch.nu]
        self.jumps = epsilon * np.array(jumps, dtype=float) if jumps else None

    def diffuse(self, Z, h, rng):
        B, n = Z.shape
        if self.has_noise:
            g = rng.standard_normal((B, n))
        dZ = self.A0 + Z @ self.A1T if self.has_drift else 0.0
        Z += dZ * h
        if self.has_noise:
            Z += math.sqrt(2.0 * self.eps * h) * (g @ self.CT)
        return Z

    def propensities(self, Z):
        return np.stack([rate_vector(law, Z) for law in self.laws], axis=1) / self.eps

    def jump(self, Z, h, rng):
        """Exact SSA over a window of length ``h`` (memoryless restart at the window edge)."""
        B = Z.shape[0]
        remaining = np.full(B, h)
        active = np.arange(B)
        while active.size:
            e = rng.standard_exponential(B)[active]
            u = rng.random(B)[active]
            props = self.propensities(Z[active])
            cum = np.cumsum(props, axis=1)
            total = cum[:, -1]
            with np.errstate(divide="ignore"):
                tau = np.where(total > 0, e / total, np.inf)
            fire = tau < remaining[active]
            idx = active[fire]
            if idx.size:
                pick = np.sum(cum[fire] <= (u[fire] * total[fire])[:, None], axis=1)
                pick = np.minimum(pick, len(self.laws) - 1)
                Z[idx] += self.jumps[pick]
                remaining[idx] -= tau[fire]
            active = idx
        return Z

    def window(self, Z, h, rng):
        if self.jumps is None:
            return self.diffuse(Z, h, rng)
        if not self.continuous:
            return self.jump(Z, h, rng)
        Z = self.diffuse(Z, 0.5 * h, rng)
        Z = self.jump(Z, h, rng)
        return self.diffuse(Z, 0.5 * h, rng)


def _run_block(spec, z0, cfg: SimConfig, block: int, keep: np.ndarray):
    """Simulate one full block; return states at the window indices flagged in ``keep``."""
    rng = block_rng(cfg.seed, block)
    stepper = _Stepper(spec, cfg.epsilon)
    Z = np.tile(np.asarray(z0, dtype=float), (BLOCK_SIZE, 1))
    times = cfg.window_times()
    out = np.empty((int(keep.sum()), BLOCK_SIZE, spec.dimension))
    slot = 0
    if keep[0]:
        out[slot] = Z
        slot += 1
    for k in range(1, times.size):
        Z = stepper.window(Z, times[k] - times[k - 1], rng)
        if keep[k]:
            out[slot] = Z
            slot += 1
    return out


def _run_blocks(spec, z0, cfg, keep, threads=None):
    n_blocks = -(-cfg.n_paths // BLOCK_SIZE)
    workers = min(n_workers(threads), n_blocks)
    if workers == 1:
        chunks = [_run_block(spec, z0, cfg, b, keep) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda b: _run_block(spec, z0, cfg, b, keep), range(n_blocks)))
    return np.concatenate(chunks, axis=1)[:, : cfg.n_paths]


def _check_inputs(spec, z0):
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    if z0.shape != (spec.dimension,):
        raise ValueError(f"z0 must have {spec.dimension} entries")
    return z0


def simulate_paths(spec: GeneratorSpec, z0, cfg: SimConfig, threads=None) -> list[Trajectory]:
    """Full trajectories recorded every ``record_stride`` windows (and at ``t_end``)."""
    z0 = _check_inputs(spec, z0)
    times = cfg.window_times()
    keep = np.zeros(times.size, dtype=bool)
    keep[:: cfg.record_stride] = True
    keep[-1] = True
    states = _run_blocks(spec, z0, cfg, keep, threads)
    t = times[keep]
    return [Trajectory(t, states[:, i]) for i in range(cfg.n_paths)]


def sample_states(spec: GeneratorSpec, z0, cfg: SimConfig, times, threads=None) -> np.ndarray:
    """Ensemble states at the requested ``times``, shape ``(len(times), n_paths, n)``.

    Same sample paths as :func:`simulate_paths`, but only the window edges
    bracketing each requested time are stored (linear interpolation in
    between), so large ensembles stay cheap in memory.
    """
    z0 = _check_inputs(spec, z0)
    grid = cfg.window_times()
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(times > cfg.t_end + 1e-12):
        raise ValueError("requested times must lie in [0, t_end]")
    hi = np.clip(np.searchsorted(grid, times, side="left"), 0, grid.size - 1)
    lo = np.where(np.isclose(grid[hi], times, rtol=0, atol=1e-12), hi, np.maximum(hi - 1, 0))
    keep = np.zeros(grid.size, dtype=bool)
    keep[lo] = keep[hi] = True
    kept = np.flatnonzero(keep)
    states = _run_blocks(spec, z0, cfg, keep, threads)
    out = np.empty((times.size, cfg.n_paths, spec.dimension))
    for j, t in enumerate(times):
        a = np.searchsorted(kept, lo[j])
        b = np.searchsorted(kept, hi[j])
        if a == b:
            out[j] = states[a]
        else:
            w = (t - grid[lo[j]]) / (grid[hi[j]] - grid[lo[j]])
            out[j] = (1.0 - w) * states[a] + w * states[b]
    return out


def ensemble_mean(samples) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over paths for samples of shape ``(n_paths, n)``."""
    samples = np.asarray(samples, dtype=float)
    m = samples.shape[0]
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / math.sqrt(m)


# --------------------------------------------------------------------------
# histograms


def _same(a, b):
    return a == b or (math.isnan(a) and math.isnan(b))


@dataclass
class EnsembleHistogram:
    epsilon: float
    time: float
    edges: list
    counts: np.ndarray
    n_paths: int
    out_of_range: int = 0

    @property
    def dimension(self):
        return len(self.edges)

    @property
    def centers(self):
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges]

    @property
    def bin_volume(self):
        widths = [np.diff(e) for e in self.edges]
        vol = widths[0]
        for w in widths[1:]:
            vol = np.multiply.outer(vol, w)
        return vol

    def merge(self, other: "EnsembleHistogram") -> "EnsembleHistogram":
        if len(self.edges) != len(other.edges) or not all(np.array_equal(a, b) for a, b in zip(self.edges, other.edges)):
            raise ValueError("histograms use different bins")
        if not (_same(self.epsilon, other.epsilon) and _same(self.time, other.time)):
            raise ValueError("histograms belong to different (epsilon, time)")
        return EnsembleHistogram(
            self.epsilon,
            self.time,
            self.edges,
            self.counts + other.counts,
            self.n_paths + other.n_paths,
            self.out_of_range + other.out_of_range,
        )

    def table(self):
        """Rows ``(z1_center, ..., zn_center, count)``."""
        mesh = np.meshgrid(*self.centers, indexing="ij")
        cols = [m.ravel() for m in mesh] + [self.counts.ravel().astype(float)]
        return np.column_stack(cols)


def default_edges(samples, bins=DEFAULT_BINS, pad=0.05):
    samples = np.asarray(samples, dtype=float)
    edges = []
    for i in range(samples.shape[1]):
        lo, hi = samples[:, i].min(), samples[:, i].max()
        span = hi - lo
        if span == 0:
            span = max(abs(lo), 1.0) * 1e-3
            lo, hi = lo - span / 2, hi + span / 2
        edges.append(np.linspace(lo - pad * span, hi + pad * span, bins + 1))
    return edges


def ensemble_histogram(paths, time: float, bins=DEFAULT_BINS, ranges=None, epsilon: float | None = None) -> EnsembleHistogram:
    """Bin the ensemble at ``time``.

    ``paths`` is a sequence of :class:`Trajectory` (interpolated at ``time``)
    or an array of states already taken at ``time``.  ``bins`` is a count per
    dimension (or a list of explicit edge arrays); ``ranges`` fixes the span,
    otherwise the sample range padded by 5% is used.
    """
    if isinstance(paths, np.ndarray):
        samples = np.atleast_2d(paths.astype(float))
        if samples.shape[0] == 1 and paths.ndim == 1:
            samples = samples.T
    else:
        paths = list(paths)
        if not paths:
            raise ValueError("empty path set")
        samples = np.array([p.at(time) for p in paths])
    if samples.shape[0] == 0:
        raise ValueError("empty path set")
    n = samples.shape[1]
    if isinstance(bins, (list, tuple)) and bins and np.ndim(bins[0]) == 1:
        edges = [np.asarray(e, dtype=float) for e in bins]
    else:
        nb = [int(bins)] * n if np.ndim(bins) == 0 else [int(b) for b in bins]
        if ranges is None:
            auto = default_edges(samples, 1)
            ranges = [(e[0], e[-1]) for e in auto]
            edges = [np.linspace(lo, hi, k + 1) for (lo, hi), k in zip(ranges, nb)]
        else:
            edges = [np.linspace(lo, hi, k + 1) for (lo, hi), k in zip(ranges, nb)]
    counts, _ = np.histogramdd(samples, bins=edges)
    counts = counts.astype(np.int64)
    return EnsembleHistogram(
        float("nan") if epsilon is None else float(epsilon),
        float(time),
        edges,
        counts,
        samples.shape[0],
        int(samples.shape[0] - counts.sum()),
    )


@dataclass
class EmpiricalRateFunction:
    points: np.ndarray
    phi: np.ndarray
    counts: np.ndarray = field(repr=False)

    def table(self):
        return np.column_stack([self.points, self.phi])


def empirical_rate_function(hist: EnsembleHistogram, min_count: int = DEFAULT_MIN_COUNT) -> EmpiricalRateFunction:
    """``phi = -eps ln(count / (n_paths * volume))`` shifted to a zero minimum over kept bins."""
    if not np.isfinite(hist.epsilon):
        raise ValueError("histogram carries no epsilon")
    mask = hist.counts >= min_count
    if not mask.any():
        raise ValueError(f"no bin has at least {min_count} counts")
    density = hist.counts[mask] / (hist.n_paths * hist.bin_volume[mask])
    phi = -hist.epsilon * np.log(density)
    phi -= phi.min()
    mesh = np.meshgrid(*hist.centers, indexing="ij")
    points = np.column_stack([m[mask] for m in mesh])
    return EmpiricalRateFunction(points, phi, hist.counts[mask])
