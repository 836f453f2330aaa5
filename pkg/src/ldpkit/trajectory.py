from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Trajectory:
    """Sampled path: strictly increasing ``times`` starting at 0 and matching ``states``."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if self.times.ndim != 1 or self.times.size != self.states.shape[0]:
            raise ValueError("times and states must have the same length")
        if self.times.size == 0 or self.times[0] != 0.0:
            raise ValueError("trajectory must start at t=0")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def dimension(self):
        return self.states.shape[1]

    @property
    def final_state(self):
        return self.states[-1]

    def at(self, t: float) -> np.ndarray:
        """State at time ``t`` by linear interpolation between recorded points."""
        if t < self.times[0] or t > self.times[-1] + 1e-12 * max(1.0, self.times[-1]):
            raise ValueError(f"t={t} outside trajectory range [0, {self.times[-1]}]")
        t = min(t, self.times[-1])
        return np.array([np.interp(t, self.times, self.states[:, i]) for i in range(self.dimension)])
