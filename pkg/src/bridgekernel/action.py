"""Euclidean action of a discretized path.

    S_t(A, V; b) = i int db . A(b) + (i/2) int (div A)(b) ds + int V(b) ds

The stochastic line integral is the left-endpoint (Ito) sum; both Lebesgue
integrals use the trapezoid rule on the path's own grid.  Every function
accepts a single :class:`BridgePath` or a :class:`BridgeBatch` and returns a
scalar or an array over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .brownian_bridge import BridgeBatch, BridgePath, trapezoid_weights
from .potentials import ScalarPotential, VectorPotential

__all__ = [
    "ActionError",
    "ActionValue",
    "action",
    "ito_line_integral",
    "stratonovich_line_integral",
    "time_integral",
]

Path = BridgePath | BridgeBatch


class ActionError(ValueError):
    """A potential evaluated to a non-finite value on a path node."""


@dataclass(frozen=True)
class ActionValue:
    ito_part: complex | np.ndarray
    divergence_part: complex | np.ndarray
    scalar_part: float | np.ndarray

    @property
    def value(self):
        return self.ito_part + self.divergence_part + self.scalar_part


def _scalarize(v):
    return v.item() if isinstance(v, np.ndarray) and v.ndim == 0 else v


def _check_finite(vals: np.ndarray, nodes: np.ndarray, what: str) -> None:
    ok = np.isfinite(vals)
    if ok.ndim == nodes.ndim:
        ok = np.all(ok, axis=-1)
    if np.all(ok):
        return
    bad = np.argwhere(~ok)[0]
    raise ActionError(f"{what} is not finite at node {tuple(int(i) for i in bad)}, point {nodes[tuple(bad)].tolist()}")


def _line_sum(path: Path, A: VectorPotential, points: np.ndarray) -> np.ndarray:
    pos = path.positions
    vals = A(points)
    _check_finite(vals, points, "vector potential")
    return np.einsum("...ki,...ki->...", vals, np.diff(pos, axis=-2))


def ito_line_integral(path: Path, A: VectorPotential):
    """Left-endpoint sum ``sum_k A(b_k) . (b_{k+1} - b_k)``."""
    if A.is_zero:
        return _scalarize(np.zeros(path.positions.shape[:-2]))
    return _scalarize(_line_sum(path, A, path.positions[..., :-1, :]))


def stratonovich_line_integral(path: Path, A: VectorPotential):
    """Midpoint sum ``sum_k A((b_k + b_{k+1}) / 2) . (b_{k+1} - b_k)``."""
    if A.is_zero:
        return _scalarize(np.zeros(path.positions.shape[:-2]))
    pos = path.positions
    mid = 0.5 * (pos[..., :-1, :] + pos[..., 1:, :])
    return _scalarize(_line_sum(path, A, mid))


def time_integral(path: Path, f: Callable[[np.ndarray], np.ndarray]):
    """Trapezoid rule for ``int_0^t f(b(s)) ds``."""
    vals = np.asarray(f(path.positions), dtype=float)
    _check_finite(vals, path.positions, "integrand")
    return _scalarize(vals @ trapezoid_weights(path.grid))


def action(path: Path, A: VectorPotential, V: ScalarPotential) -> ActionValue:
    scalar = time_integral(path, V)
    if A.is_zero:
        zero = _scalarize(np.zeros(np.shape(scalar), dtype=complex))
        return ActionValue(zero, zero, scalar)
    ito = 1j * np.asarray(ito_line_integral(path, A))
    div = 0.5j * np.asarray(time_integral(path, A.divergence))
    return ActionValue(_scalarize(ito), _scalarize(div), scalar)
