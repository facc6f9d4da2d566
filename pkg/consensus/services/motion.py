"""
Agent motions P(t): callables returning the (k, 2) positions at a given time.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FixedMotion:
    positions: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


@dataclass(frozen=True)
class LinearMotion:
    """P(t) = start + (t - t0) * velocities; rows of zero velocity stay put."""
    start: np.ndarray
    velocities: np.ndarray
    t0: float = 0.0

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.start, dtype=float) + (t - self.t0) * np.asarray(self.velocities, dtype=float)

    @classmethod
    def single_agent(cls, start: np.ndarray, i: int, w: np.ndarray, t0: float = 0.0) -> 'LinearMotion':
        """Only agent i moves, at speed w; everybody else is held at `start`."""
        start = np.asarray(start, dtype=float)
        velocities = np.zeros_like(start)
        velocities[i] = w
        return cls(start, velocities, t0)


@dataclass(frozen=True)
class PiecewiseLinearMotion:
    """Interpolates recorded positions (n, k, 2) at strictly increasing times (n,)."""
    times: np.ndarray
    positions: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        times = np.asarray(self.times, dtype=float)
        positions = np.asarray(self.positions, dtype=float)
        if t <= times[0]:
            return positions[0].copy()
        if t >= times[-1]:
            return positions[-1].copy()
        j = int(np.searchsorted(times, t, side='right')) - 1
        theta = (t - times[j]) / (times[j + 1] - times[j])
        return (1.0 - theta) * positions[j] + theta * positions[j + 1]
