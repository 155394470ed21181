"""Discretized Brownian bridges pinned at ``(x, 0)`` and ``(y, t)``.

Each Cartesian component of the bridge is Gaussian with mean
``x_j + (y_j - x_j) s / t`` and covariance ``min(s, s') - s s' / t``.  Paths are
built from a standard Brownian path ``W`` by removing its linear drift,

    b(s_k) = x + (y - x) s_k / t + W(s_k) - (s_k / t) W(t),

which reproduces the pinned law exactly at the grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import STREAM_BRIDGE, standard_normals

__all__ = [
    "Box",
    "BridgeBatch",
    "BridgePath",
    "TimeGrid",
    "sample_bridge",
    "sample_bridges",
    "sojourn_time",
    "trapezoid_weights",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``s_k = k t / n_steps`` on ``[0, t]``."""

    t: float
    n_steps: int

    def __post_init__(self):
        if not np.isfinite(self.t) or self.t <= 0:
            raise ValueError(f"t must be positive and finite, got {self.t}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be an integer >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.t / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        s = np.arange(self.n_steps + 1) * self.dt
        s[-1] = self.t
        return s


def trapezoid_weights(grid: TimeGrid) -> np.ndarray:
    """Trapezoid weights on the nodes of ``grid``; they sum to ``t``."""
    w = np.full(grid.n_steps + 1, grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    return w


@dataclass(frozen=True)
class BridgePath:
    start: np.ndarray
    end: np.ndarray
    grid: TimeGrid
    positions: np.ndarray  # (n_steps + 1, d)

    @property
    def dim(self) -> int:
        return self.positions.shape[-1]

    def reversed(self) -> "BridgePath":
        """The same realization traversed from ``end`` back to ``start``."""
        return BridgePath(self.end, self.start, self.grid, self.positions[::-1].copy())


@dataclass(frozen=True)
class BridgeBatch:
    """A block of consecutive paths ``first_index .. first_index + n - 1``."""

    start: np.ndarray
    end: np.ndarray
    grid: TimeGrid
    positions: np.ndarray  # (n_paths, n_steps + 1, d)
    first_index: int = 0

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[-1]

    def path(self, i: int) -> BridgePath:
        return BridgePath(self.start, self.end, self.grid, self.positions[i])

    def reversed(self) -> "BridgeBatch":
        return BridgeBatch(
            self.end, self.start, self.grid, self.positions[:, ::-1].copy(), self.first_index
        )


def _as_points(start, end) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_1d(np.asarray(start, dtype=float))
    y = np.atleast_1d(np.asarray(end, dtype=float))
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"start and end must be points of equal dimension, got {x.shape} and {y.shape}")
    return x, y


def sample_bridges(
    seed: int,
    start,
    end,
    grid: TimeGrid,
    n_paths: int,
    first_index: int = 0,
    stream: int = STREAM_BRIDGE,
) -> BridgeBatch:
    """Sample paths ``first_index .. first_index + n_paths - 1``.

    Path ``i`` is a deterministic function of ``(seed, stream, i, grid, d)``
    only, so any partition of the index range yields identical paths.
    """
    x, y = _as_points(start, end)
    d = x.size
    n = grid.n_steps
    s = grid.nodes
    z = standard_normals(seed, stream, first_index, n_paths, n * d).reshape(n_paths, n, d)
    w = np.zeros((n_paths, n + 1, d))
    np.cumsum(z * np.sqrt(grid.dt), axis=1, out=w[:, 1:])
    frac = (s / grid.t)[None, :, None]
    pos = x + (y - x) * frac[0] + (w - frac * w[:, -1:, :])
    pos[:, 0, :] = x
    pos[:, -1, :] = y
    return BridgeBatch(x, y, grid, pos, first_index)


def sample_bridge(seed: int, start, end, grid: TimeGrid, index: int = 0) -> BridgePath:
    """Sample the single path with counter ``index``."""
    return sample_bridges(seed, start, end, grid, 1, first_index=index).path(0)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lower, upper]``; bounds may be infinite."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def everywhere(cls, d: int) -> "Box":
        return cls(np.full(d, -np.inf), np.full(d, np.inf))

    @property
    def is_empty(self) -> bool:
        return bool(np.any(np.asarray(self.lower) >= np.asarray(self.upper)))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        return np.all((pts >= lo) & (pts <= hi), axis=-1)


def sojourn_time(path: BridgePath | BridgeBatch, region: Box) -> float | np.ndarray:
    """Trapezoid approximation of the time spent in ``region``.

    A degenerate box is treated as the empty set and yields 0.
    """
    w = trapezoid_weights(path.grid)
    if region.is_empty:
        out = np.zeros(path.positions.shape[:-2])
    else:
        out = region.contains(path.positions).astype(float) @ w
    return float(out) if np.ndim(out) == 0 else out
