"""Counter-based random streams.

Every random quantity in the package is addressed by ``(seed, stream, index)``.
A Philox generator keyed on ``(seed, stream)`` is positioned directly at the
counter block owned by ``index``, so a path (or field realization) can be
regenerated in isolation and results never depend on how work was split
across workers.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = [
    "STREAM_BRIDGE",
    "STREAM_FIELD",
    "STREAM_KATO",
    "STREAM_PROBE",
    "STREAM_WEIGHT",
    "standard_normals",
    "uniforms",
]

STREAM_BRIDGE = 0
STREAM_FIELD = 1
STREAM_KATO = 2
STREAM_PROBE = 3
STREAM_WEIGHT = 4

_MASK64 = (1 << 64) - 1
# Philox4x64 emits four 64-bit words per counter increment.
_WORDS_PER_BLOCK = 4


def _generator(seed: int, stream: int, block: int) -> np.random.Philox:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    counter = np.array([block & _MASK64, block >> 64, 0, 0], dtype=np.uint64)
    return np.random.Philox(key=key, counter=counter)


def _raw_rows(seed: int, stream: int, first: int, n_rows: int, width: int) -> np.ndarray:
    blocks = -(-width // _WORDS_PER_BLOCK)
    stride = blocks * _WORDS_PER_BLOCK
    bg = _generator(seed, stream, first * blocks)
    raw = bg.random_raw(n_rows * stride).reshape(n_rows, stride)
    return raw[:, :width]


def uniforms(seed: int, stream: int, first: int, n_rows: int, width: int) -> np.ndarray:
    """Open-interval uniforms, one row of ``width`` values per index.

    Row ``r`` depends only on ``(seed, stream, first + r, width)``.
    """
    raw = _raw_rows(seed, stream, first, n_rows, width)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def standard_normals(seed: int, stream: int, first: int, n_rows: int, width: int) -> np.ndarray:
    """Standard normal rows by inverse-CDF transform of :func:`uniforms`."""
    return ndtri(uniforms(seed, stream, first, n_rows, width))
