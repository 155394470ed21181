"""Homogeneous zero-mean Gaussian random potentials and disorder averages.

For a Gaussian field with covariance ``C`` the disorder average of the
semigroup kernel is again a bridge expectation,

    kbar_t(x, y) = free(x, y) E_{x,y}[ exp(-S_t(A, 0; b)) exp(1/2 int int C(b(s) - b(s')) ds ds') ],

which follows from ``E[exp(int zeta(dx) V(x))] = exp(1/2 int int zeta zeta C)``
with ``zeta`` the sojourn measure of the path.  Field values are only ever
needed at finitely many points and are sampled there exactly from the
covariance matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from .action import action
from .brownian_bridge import BridgeBatch, BridgePath, TimeGrid, sample_bridges, trapezoid_weights
from .closed_forms import free_kernel
from .kernel_estimator import (
    KernelEstimate,
    _check_overflow,
    _make_estimate,
    _validate,
    free_prefactor,
    map_paths,
    summarize,
)
from .potentials import VectorPotential, ZeroPotential, ZeroVectorPotential
from .rng import STREAM_FIELD, standard_normals

__all__ = [
    "AveragedBoundRow",
    "FieldFactorizationError",
    "FieldSampler",
    "GaussianFieldSpec",
    "GaussianIdentityReport",
    "averaged_bound_checks",
    "averaged_kernel",
    "double_time_integral",
    "field_spec_from_dict",
    "gaussian_identity_residual",
    "l_t",
    "sample_on_points",
    "two_stage_kernel",
]

MAX_POINTS = 4096
_JITTERS = (0.0, 1e-14, 1e-12, 1e-10)
# path streams for the two-stage estimate, kept apart from the direct estimator
_TWO_STAGE_STREAM = 10


class FieldFactorizationError(ValueError):
    """The covariance matrix could not be factorized even with maximal jitter."""


@dataclass(frozen=True, eq=False)
class GaussianFieldSpec:
    """Covariance of a homogeneous Gaussian field.

    ``squared_exponential``: ``C(r) = variance * exp(-|r|^2 / (2 length^2))``.
    ``tabulated_radial``: ``C`` linearly interpolated in ``|r|`` from
    ``(radii, values)`` and zero beyond the last radius.

    A zero variance is accepted as the deterministic limit ``V = 0``.
    """

    kind: str
    dim: int
    variance: float = 1.0
    length: float = 1.0
    radii: tuple[float, ...] = field(default=(), repr=False)
    values: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind == "squared_exponential":
            if self.variance < 0 or not self.length > 0:
                raise ValueError("squared-exponential field needs variance >= 0 and length > 0")
        elif self.kind == "tabulated_radial":
            r = np.asarray(self.radii, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if r.size < 2 or r.size != v.size or r[0] != 0 or np.any(np.diff(r) <= 0):
                raise ValueError("tabulated covariance needs increasing radii starting at 0, one value each")
            if v[0] < 0:
                raise ValueError("C(0) must be non-negative")
            object.__setattr__(self, "radii", tuple(map(float, r)))
            object.__setattr__(self, "values", tuple(map(float, v)))
        else:
            raise ValueError(f"unknown field kind {self.kind!r}")

    @classmethod
    def squared_exponential(cls, variance: float, length: float, dim: int = 1) -> "GaussianFieldSpec":
        return cls("squared_exponential", dim, float(variance), float(length))

    @classmethod
    def tabulated(cls, radii, values, dim: int = 1) -> "GaussianFieldSpec":
        return cls("tabulated_radial", dim, radii=tuple(radii), values=tuple(values))

    @property
    def c0(self) -> float:
        return self.variance if self.kind == "squared_exponential" else self.values[0]

    def covariance(self, r) -> np.ndarray:
        """``C`` at separation vectors ``r`` of shape ``(..., d)``."""
        r = np.asarray(r, dtype=float)
        r2 = np.einsum("...i,...i->...", r, r)
        if self.kind == "squared_exponential":
            return self.variance * np.exp(-r2 / (2.0 * self.length**2))
        return np.interp(np.sqrt(r2), self.radii, self.values, right=0.0)

    def to_dict(self) -> dict:
        if self.kind == "squared_exponential":
            return {"kind": self.kind, "dim": self.dim, "variance": self.variance, "length": self.length}
        return {"kind": self.kind, "dim": self.dim, "radii": list(self.radii), "values": list(self.values)}


def field_spec_from_dict(doc: dict) -> GaussianFieldSpec:
    kind = doc.get("kind")
    if kind == "squared_exponential":
        return GaussianFieldSpec.squared_exponential(doc["variance"], doc["length"], int(doc.get("dim", 1)))
    if kind == "tabulated_radial":
        return GaussianFieldSpec.tabulated(doc["radii"], doc["values"], int(doc.get("dim", 1)))
    raise ValueError(f"unknown field kind {kind!r}")


def l_t(spec: GaussianFieldSpec, t: float) -> float:
    """``sup_x E[exp(-t V(x))] = exp(t^2 C(0) / 2)`` for a homogeneous Gaussian field."""
    if not t > 0:
        raise ValueError("t must be positive")
    return math.exp(0.5 * t * t * spec.c0)


# ---------------------------------------------------------------------------
# sampling at points
# ---------------------------------------------------------------------------


class FieldSampler:
    """Exact joint sampler of the field at a fixed finite point set.

    Coincident points are merged before factorization, so they receive
    identical values.  The covariance matrix gets the smallest diagonal jitter
    from ``0, 1e-14, 1e-12, 1e-10`` (times ``C(0)``) that admits a Cholesky
    factor.
    """

    def __init__(self, points, spec: GaussianFieldSpec):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.spec = spec
        self.unique, self.inverse = np.unique(pts, axis=0, return_inverse=True)
        self.inverse = self.inverse.ravel()
        if self.unique.shape[0] > MAX_POINTS:
            raise ValueError(f"{self.unique.shape[0]} distinct points exceed the limit of {MAX_POINTS}")
        self.factor = self._factorize()

    def _factorize(self) -> np.ndarray:
        u = self.unique
        M = self.spec.covariance(u[:, None, :] - u[None, :, :])
        c0 = self.spec.c0
        if c0 == 0:
            return np.zeros_like(M)
        eye = np.eye(M.shape[0])
        for jitter in _JITTERS:
            try:
                return cholesky(M + jitter * c0 * eye, lower=True)
            except LinAlgError:
                continue
        raise FieldFactorizationError("covariance matrix is not positive definite within the jitter budget")

    def draw(self, seed: int, first: int = 0, n_draws: int = 1) -> np.ndarray:
        """Realizations ``first .. first + n_draws - 1``, shape ``(n_draws, n_points)``."""
        z = standard_normals(seed, STREAM_FIELD, first, n_draws, self.unique.shape[0])
        return (z @ self.factor.T)[:, self.inverse]


def sample_on_points(points, spec: GaussianFieldSpec, seed: int, index: int = 0, n_draws: int = 1) -> np.ndarray:
    out = FieldSampler(points, spec).draw(seed, index, n_draws)
    return out[0] if n_draws == 1 else out


# ---------------------------------------------------------------------------
# double time integral and the Gaussian identity
# ---------------------------------------------------------------------------


def double_time_integral(path: BridgePath | BridgeBatch, spec: GaussianFieldSpec, block_elems: int = 4_000_000):
    """Double trapezoid rule for ``int_0^t int_0^t C(b(s) - b(s')) ds ds'``."""
    w = trapezoid_weights(path.grid)
    pos = path.positions
    if pos.ndim == 2:
        M = spec.covariance(pos[:, None, :] - pos[None, :, :])
        return float(w @ M @ w)
    n_nodes = pos.shape[1]
    step = max(1, block_elems // (n_nodes * n_nodes))
    out = np.empty(pos.shape[0])
    for i in range(0, pos.shape[0], step):
        p = pos[i : i + step]
        M = spec.covariance(p[:, :, None, :] - p[:, None, :, :])
        out[i : i + step] = np.einsum("i,mij,j->m", w, M, w)
    return out


@dataclass(frozen=True)
class GaussianIdentityReport:
    mc_value: float
    closed_form: float
    residual: float
    stderr: float  # relative, same units as ``residual``

    @property
    def passed(self) -> bool:
        return self.residual <= 3.0 * self.stderr or self.residual <= 1e-12


def gaussian_identity_residual(
    path: BridgePath, spec: GaussianFieldSpec, n_field_samples: int = 100_000, seed: int = 0, chunk: int = 8192
) -> GaussianIdentityReport:
    """Compare ``E[exp(int V(b(s)) ds)]`` with ``exp(1/2 int int C)`` on one fixed path."""
    sampler = FieldSampler(path.positions, spec)
    w = trapezoid_weights(path.grid)
    vals = []
    for first in range(0, n_field_samples, chunk):
        V = sampler.draw(seed, first, min(chunk, n_field_samples - first))
        vals.append(np.exp(V @ w))
    vals = np.concatenate(vals)
    _check_overflow(vals, 0, seed)
    mean, err = summarize(vals)
    closed = math.exp(0.5 * double_time_integral(path, spec))
    return GaussianIdentityReport(float(mean), closed, abs(mean - closed) / closed, err / closed)


# ---------------------------------------------------------------------------
# disorder-averaged kernel
# ---------------------------------------------------------------------------


def averaged_kernel(
    x,
    y,
    t: float,
    A: VectorPotential | None,
    spec: GaussianFieldSpec,
    n_steps: int = 64,
    n_samples: int = 10_000,
    seed: int = 0,
    workers: int = 1,
) -> KernelEstimate:
    """Bridge estimate of the disorder-averaged kernel.

    Costs ``O(n_steps^2)`` per path for the double time integral.
    """
    _validate(t, n_samples)
    d = np.atleast_1d(x).size
    A = A if A is not None else ZeroVectorPotential(d)

    def fn(batch):
        S = action(batch, A, ZeroPotential())
        log_w = 0.5 * double_time_integral(batch, spec)
        if A.is_zero:
            w = np.exp(log_w)
        else:
            w = np.exp(log_w - np.asarray(S.value, dtype=complex))
        _check_overflow(w, batch.first_index, seed)
        return w

    w = map_paths(x, y, t, n_steps, n_samples, seed, fn, workers)
    return _make_estimate(w, x, y, t, n_steps, seed)


def two_stage_kernel(
    x,
    y,
    t: float,
    A: VectorPotential | None,
    spec: GaussianFieldSpec,
    n_fields: int = 2000,
    paths_per_field: int = 8,
    n_steps: int = 32,
    seed: int = 0,
) -> KernelEstimate:
    """Field-first estimate ``E_field[k_t(x, y; A, V)]``.

    For each field realization a fresh set of paths is drawn, the field is
    sampled jointly and exactly at all of their nodes, and the kernel is
    estimated with ``exp(-S_t(A, V; b))``.  The returned error is the spread of
    the per-realization estimates.
    """
    if n_fields < 2:
        raise ValueError("n_fields must be at least 2")
    d = np.atleast_1d(x).size
    A = A if A is not None else ZeroVectorPotential(d)
    grid = TimeGrid(t, n_steps)
    w_t = trapezoid_weights(grid)
    per_field = []
    for r in range(n_fields):
        batch = sample_bridges(seed, x, y, grid, paths_per_field, r * paths_per_field, _TWO_STAGE_STREAM)
        nodes = batch.positions.reshape(-1, d)
        V = FieldSampler(nodes, spec).draw(seed, r, 1)[0].reshape(paths_per_field, n_steps + 1)
        S = action(batch, A, ZeroPotential())
        w = np.exp(-(V @ w_t)) if A.is_zero else np.exp(-(V @ w_t) - np.asarray(S.value, dtype=complex))
        per_field.append(w.mean())
    per_field = np.asarray(per_field)
    est = _make_estimate(per_field, x, y, t, n_steps, seed)
    return KernelEstimate(
        est.mean, est.stderr, n_fields * paths_per_field, n_steps, est.t, est.x, est.y, est.prefactor, seed, est.heavy_tail
    )


@dataclass(frozen=True)
class AveragedBoundRow:
    x: tuple[float, ...]
    y: tuple[float, ...]
    kbar_abs: float
    stderr: float
    free_bound: float  # L_t * free kernel
    diagonal_bound: float  # exp(-|x-y|^2/(2t)) * kbar(0, 0)|_{A=0}
    diagonal_stderr: float

    @property
    def free_bound_holds(self) -> bool:
        return self.kbar_abs <= self.free_bound + 3.0 * self.stderr

    @property
    def diagonal_bound_holds(self) -> bool:
        return self.kbar_abs <= self.diagonal_bound + 3.0 * math.hypot(self.stderr, self.diagonal_stderr)


def averaged_bound_checks(
    pairs: Sequence[tuple],
    t: float,
    spec: GaussianFieldSpec,
    A: VectorPotential | None = None,
    n_steps: int = 64,
    n_samples: int = 10_000,
    seed: int = 0,
    workers: int = 1,
) -> list[AveragedBoundRow]:
    """Check ``|kbar| <= L_t free`` and ``|kbar| <= exp(-|x-y|^2/(2t)) kbar(0,0)|_{A=0}``."""
    d = np.atleast_1d(pairs[0][0]).size
    origin = np.zeros(d)
    ref = averaged_kernel(origin, origin, t, ZeroVectorPotential(d), spec, n_steps, n_samples, seed, workers)
    lt = l_t(spec, t)
    rows = []
    for x, y in pairs:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        est = averaged_kernel(x, y, t, A, spec, n_steps, n_samples, seed, workers)
        gauss = math.exp(-float(np.sum((x - y) ** 2)) / (2.0 * t))
        rows.append(
            AveragedBoundRow(
                tuple(map(float, x)),
                tuple(map(float, y)),
                abs(est.mean),
                est.stderr,
                lt * free_kernel(x, y, t),
                gauss * float(np.real(ref.mean)),
                gauss * ref.stderr,
            )
        )
    return rows
