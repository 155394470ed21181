"""Closed-form heat kernels used as independent oracles."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["free_kernel", "landau_diagonal", "mehler_kernel"]


def free_kernel(x, y, t: float) -> float:
    """``exp(-|x - y|^2 / (2t)) / (2 pi t)^(d/2)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    r2 = float(np.sum((x - y) ** 2))
    return math.exp(-r2 / (2.0 * t)) / (2.0 * math.pi * t) ** (x.size / 2)


def mehler_kernel(x: float, y: float, t: float, omega: float = 1.0) -> float:
    """Kernel of ``exp(-t H)`` for ``H = -1/2 d^2/dx^2 + omega^2 x^2 / 2``."""
    sh = math.sinh(omega * t)
    ch = math.cosh(omega * t)
    pref = math.sqrt(omega / (2.0 * math.pi * sh))
    return pref * math.exp(-omega * ((x * x + y * y) * ch - 2.0 * x * y) / (2.0 * sh))


def landau_diagonal(B: float, t: float) -> float:
    """Diagonal ``k_t(x, x)`` for a constant field ``B`` in two dimensions."""
    if B == 0:
        return 1.0 / (2.0 * math.pi * t)
    b = abs(B)
    return b / (4.0 * math.pi * math.sinh(b * t / 2.0))
