"""Scalar and vector potentials.

Scalar potentials carry an explicit split ``V = V1 + V2``: ``V1`` is the part
that is bounded below / Kato decomposable and ``V2`` the part that may be
unbounded from below but grows sub-quadratically.  Truncation only touches
``V2``.  All specs are immutable and evaluate on arrays of shape ``(..., d)``.

Vector potentials supply their divergence analytically; it is never obtained
by numerical differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from .rng import STREAM_KATO, standard_normals

__all__ = [
    "ConstantField",
    "ConstantPotential",
    "CustomVectorPotential",
    "FieldSamplePotential",
    "HarmonicPotential",
    "KappaEstimate",
    "PowerLawPotential",
    "ScalarPotential",
    "SubquadraticReport",
    "SumPotential",
    "TruncatedPotential",
    "VectorPotential",
    "ZeroPotential",
    "ZeroVectorPotential",
    "check_subquadratic",
    "kato_kappa",
    "poincare_gauge",
    "scalar_potential_from_dict",
    "truncate",
    "upsilon",
    "vector_potential_from_dict",
]


def _points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None] if x.ndim == 1 else x


def _sq_norm(x: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", x, x)


# ---------------------------------------------------------------------------
# scalar potentials
# ---------------------------------------------------------------------------


class ScalarPotential:
    """Base class; subclasses implement :meth:`v1` and :meth:`v2`."""

    kind: str = ""

    def v1(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def v2(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.v1(x) + self.v2(x)

    @property
    def has_v2(self) -> bool:
        return True

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroPotential(ScalarPotential):
    kind = "zero"

    def v1(self, x):
        return np.zeros(np.shape(x)[:-1])

    v2 = v1

    @property
    def has_v2(self) -> bool:
        return False

    def to_dict(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class ConstantPotential(ScalarPotential):
    c: float
    kind = "constant"

    def v1(self, x):
        return np.full(np.shape(x)[:-1], float(self.c))

    def v2(self, x):
        return np.zeros(np.shape(x)[:-1])

    @property
    def has_v2(self) -> bool:
        return False

    def to_dict(self):
        return {"kind": "constant", "c": float(self.c)}


@dataclass(frozen=True)
class HarmonicPotential(ScalarPotential):
    """``V(x) = 1/2 sum_j omega_j^2 x_j^2``, entirely in ``V1``."""

    omega: tuple[float, ...]
    kind = "harmonic"

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in np.atleast_1d(self.omega)))

    def v1(self, x):
        w2 = np.square(np.asarray(self.omega))
        if np.shape(x)[-1] != w2.size:
            raise ValueError(f"harmonic potential is {w2.size}-dimensional, got points of dim {np.shape(x)[-1]}")
        return 0.5 * np.einsum("...i,i->...", np.square(x), w2)

    def v2(self, x):
        return np.zeros(np.shape(x)[:-1])

    @property
    def has_v2(self) -> bool:
        return False

    def to_dict(self):
        return {"kind": "harmonic", "omega": list(self.omega)}


@dataclass(frozen=True)
class PowerLawPotential(ScalarPotential):
    """``sign * coefficient * |x|**exponent`` assigned to ``V1`` or ``V2``.

    By default a negative sign goes to ``V2`` (unbounded below) and a positive
    sign to ``V1``.
    """

    sign: int
    exponent: float
    coefficient: float = 1.0
    part: str | None = None
    kind = "power_law"

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if self.exponent < 0:
            raise ValueError("exponent must be non-negative")
        part = self.part or ("v2" if self.sign < 0 else "v1")
        if part not in ("v1", "v2"):
            raise ValueError(f"part must be 'v1' or 'v2', got {part!r}")
        object.__setattr__(self, "part", part)

    def _value(self, x):
        r = np.sqrt(_sq_norm(np.asarray(x, dtype=float)))
        return self.sign * self.coefficient * r**self.exponent

    def v1(self, x):
        return self._value(x) if self.part == "v1" else np.zeros(np.shape(x)[:-1])

    def v2(self, x):
        return self._value(x) if self.part == "v2" else np.zeros(np.shape(x)[:-1])

    @property
    def has_v2(self) -> bool:
        return self.part == "v2" and self.coefficient != 0

    def to_dict(self):
        return {
            "kind": "power_law",
            "sign": int(self.sign),
            "exponent": float(self.exponent),
            "coefficient": float(self.coefficient),
            "part": self.part,
        }


@dataclass(frozen=True)
class SumPotential(ScalarPotential):
    terms: tuple[ScalarPotential, ...]
    kind = "sum"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def v1(self, x):
        out = np.zeros(np.shape(x)[:-1])
        for term in self.terms:
            out = out + term.v1(x)
        return out

    def v2(self, x):
        out = np.zeros(np.shape(x)[:-1])
        for term in self.terms:
            out = out + term.v2(x)
        return out

    @property
    def has_v2(self) -> bool:
        return any(term.has_v2 for term in self.terms)

    def to_dict(self):
        return {"kind": "sum", "terms": [t.to_dict() for t in self.terms]}


@dataclass(frozen=True)
class TruncatedPotential(ScalarPotential):
    """``V1(x) + Theta(R - |x|) V2(x)`` with ``Theta(0) = 0``."""

    inner: ScalarPotential
    R: float
    kind = "truncated"

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"truncation radius must be positive, got {self.R}")

    def v1(self, x):
        return self.inner.v1(x)

    def v2(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.sqrt(_sq_norm(x)) < self.R
        return np.where(inside, self.inner.v2(x), 0.0)

    @property
    def has_v2(self) -> bool:
        return self.inner.has_v2

    def to_dict(self):
        return {"kind": "truncated", "inner": self.inner.to_dict(), "R": float(self.R)}


@dataclass(frozen=True, eq=False)
class FieldSamplePotential(ScalarPotential):
    """A realization of a random field tabulated on a regular lattice.

    Values are interpolated multilinearly between lattice points; evaluation
    outside the tabulated box raises.  The whole realization counts as ``V2``.
    """

    origin: tuple[float, ...]
    spacing: float
    values: np.ndarray = field(repr=False)
    kind = "field_sample"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        origin = tuple(float(o) for o in np.atleast_1d(self.origin))
        if vals.ndim != len(origin):
            raise ValueError("values must have one axis per coordinate of origin")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", origin)

    def _interp(self):
        axes = [o + self.spacing * np.arange(n) for o, n in zip(self.origin, self.values.shape)]
        return RegularGridInterpolator(axes, self.values, method="linear", bounds_error=True)

    def v1(self, x):
        return np.zeros(np.shape(x)[:-1])

    def v2(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        return self._interp()(flat).reshape(x.shape[:-1])

    def to_dict(self):
        return {
            "kind": "field_sample",
            "origin": list(self.origin),
            "spacing": float(self.spacing),
            "shape": list(self.values.shape),
            "values": self.values.ravel().tolist(),
        }


def truncate(spec: ScalarPotential, R: float) -> ScalarPotential:
    """Regularized potential ``V_R = V1 + Theta(R - |x|) V2``."""
    return TruncatedPotential(spec, float(R))


def scalar_potential_from_dict(doc: dict) -> ScalarPotential:
    kind = doc.get("kind")
    if kind == "zero":
        return ZeroPotential()
    if kind == "constant":
        return ConstantPotential(float(doc["c"]))
    if kind == "harmonic":
        return HarmonicPotential(tuple(doc["omega"]))
    if kind == "power_law":
        return PowerLawPotential(
            int(doc["sign"]), float(doc["exponent"]), float(doc.get("coefficient", 1.0)), doc.get("part")
        )
    if kind == "sum":
        return SumPotential(tuple(scalar_potential_from_dict(t) for t in doc["terms"]))
    if kind == "truncated":
        return TruncatedPotential(scalar_potential_from_dict(doc["inner"]), float(doc["R"]))
    if kind == "field_sample":
        values = np.asarray(doc["values"], dtype=float).reshape(doc["shape"])
        return FieldSamplePotential(tuple(doc["origin"]), float(doc["spacing"]), values)
    raise ValueError(f"unknown scalar potential kind {kind!r}")


# ---------------------------------------------------------------------------
# vector potentials
# ---------------------------------------------------------------------------


class VectorPotential:
    kind: str = ""
    dim: int

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def divergence(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroVectorPotential(VectorPotential):
    dim: int
    kind = "zero"

    def __call__(self, x):
        return np.zeros(np.shape(x))

    def divergence(self, x):
        return np.zeros(np.shape(x)[:-1])

    @property
    def is_zero(self) -> bool:
        return True

    def to_dict(self):
        return {"kind": "zero", "dim": int(self.dim)}


@dataclass(frozen=True, eq=False)
class ConstantField(VectorPotential):
    """Constant magnetic field ``B`` in the Poincare gauge.

    ``A_k(x) = 1/2 sum_j x_j B_jk``; the divergence vanishes identically.
    """

    B: np.ndarray = field(repr=False)
    kind = "constant_field"

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError(f"B must be a square matrix, got shape {B.shape}")
        if not np.array_equal(B, -B.T):
            raise ValueError("B must be exactly skew-symmetric")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @property
    def dim(self) -> int:
        return self.B.shape[0]

    def __call__(self, x):
        return 0.5 * (np.asarray(x, dtype=float) @ self.B)

    def divergence(self, x):
        return np.zeros(np.shape(x)[:-1])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.B)

    def to_dict(self):
        return {"kind": "constant_field", "B": self.B.tolist()}


@dataclass(frozen=True, eq=False)
class CustomVectorPotential(VectorPotential):
    """User-supplied ``A`` with its analytic divergence (not serializable)."""

    func: Callable[[np.ndarray], np.ndarray]
    div: Callable[[np.ndarray], np.ndarray]
    dim: int
    kind = "custom"

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def divergence(self, x):
        return np.asarray(self.div(np.asarray(x, dtype=float)), dtype=float)

    def to_dict(self):
        raise TypeError("custom vector potentials hold Python callables and cannot be serialized")


def poincare_gauge(B) -> ConstantField:
    return ConstantField(np.asarray(B, dtype=float))


def vector_potential_from_dict(doc: dict) -> VectorPotential:
    kind = doc.get("kind")
    if kind == "zero":
        return ZeroVectorPotential(int(doc["dim"]))
    if kind == "constant_field":
        return ConstantField(np.asarray(doc["B"], dtype=float))
    raise ValueError(f"unknown vector potential kind {kind!r}")


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubquadraticReport:
    holds: bool
    v_eps_estimate: float
    box_scales: tuple[float, ...]
    estimates: tuple[float, ...]


def _probe_points(lower, upper, n_probe: int) -> np.ndarray:
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    d = lower.size
    per_axis = max(2, int(round(n_probe ** (1.0 / d))))
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(lower, upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def check_subquadratic(
    spec: ScalarPotential,
    eps: float,
    sample_box: tuple[Sequence[float], Sequence[float]],
    n_probe: int = 20001,
    scales: Sequence[float] = (1.0, 2.0, 4.0),
    rtol: float = 1e-6,
) -> SubquadraticReport:
    """Probe ``|V2(x)| <= eps |x|^2 + v_eps`` on nested boxes.

    ``v_eps`` is estimated as the maximum of ``|V2(x)| - eps |x|^2`` over probe
    points in ``sample_box`` scaled by each factor in ``scales``.  The property
    is reported to hold when the estimate is finite and stops growing between
    the two largest boxes; a quadratic ``V2`` keeps growing and fails.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    lower, upper = (np.asarray(b, dtype=float) for b in sample_box)
    estimates = []
    for scale in scales:
        pts = _probe_points(lower * scale, upper * scale, n_probe)
        vals = spec.v2(pts)
        if not np.all(np.isfinite(vals)):
            bad = pts[~np.isfinite(vals)][0]
            raise ValueError(f"V2 is not finite at probe point {bad.tolist()}")
        estimates.append(float(np.max(np.abs(vals) - eps * _sq_norm(pts))))
    last, prev = estimates[-1], estimates[-2] if len(estimates) > 1 else estimates[-1]
    stable = last <= prev + rtol * max(1.0, abs(prev))
    holds = bool(np.isfinite(last) and stable)
    return SubquadraticReport(holds, max(estimates), tuple(float(s) for s in scales), tuple(estimates))


@dataclass(frozen=True)
class KappaEstimate:
    value: float
    stderr: float
    probe_values: tuple[float, ...]
    probe_points: tuple[tuple[float, ...], ...]


def kato_kappa(
    f: Callable[[np.ndarray], np.ndarray],
    t: float,
    probe_points,
    n_s: int = 32,
    n_mc: int = 20000,
    seed: int = 0,
) -> KappaEstimate:
    """Kato-class diagnostic ``sup_x int_0^t ds int dxi e^{-|xi|^2} |f(x + xi sqrt(s))|``.

    The ``s`` integral uses Gauss-Legendre quadrature on ``[0, t]``; the
    Gaussian ``xi`` integral is sampled with ``xi ~ N(0, I/2)`` and weight
    ``pi^(d/2)``.  The supremum runs over the supplied probe points only, with
    the same ``xi`` samples at every point.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    probes = _points(probe_points)
    if probes.shape[0] == 0:
        raise ValueError("probe set is empty")
    d = probes.shape[1]
    nodes, weights = np.polynomial.legendre.leggauss(n_s)
    s = 0.5 * t * (nodes + 1.0)
    ws = 0.5 * t * weights
    xi = standard_normals(seed, STREAM_KATO, 0, n_mc, d) / math.sqrt(2.0)
    norm = math.pi ** (d / 2)
    values, errors = [], []
    for x in probes:
        pts = x[None, None, :] + xi[None, :, :] * np.sqrt(s)[:, None, None]
        vals = np.abs(np.asarray(f(pts), dtype=float))
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"f is not finite near probe point {x.tolist()}")
        per_sample = norm * (ws @ vals)
        values.append(float(per_sample.mean()))
        errors.append(float(per_sample.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0)
    i = int(np.argmax(values))
    return KappaEstimate(values[i], errors[i], tuple(values), tuple(tuple(map(float, p)) for p in probes))


def upsilon(xi: float, d: int) -> float:
    """``int_0^1 dsigma [1 - 4 xi sigma (1 - sigma)]^(-d/2)`` for ``0 <= xi < 1``."""
    if not 0.0 <= xi < 1.0:
        raise ValueError(f"xi must lie in [0, 1), got {xi}")
    if xi == 0.0:
        return 1.0
    val, _ = integrate.quad(
        lambda s: (1.0 - 4.0 * xi * s * (1.0 - s)) ** (-0.5 * d),
        0.0,
        1.0,
        epsabs=0.0,
        epsrel=1e-10,
        limit=200,
        points=[0.5],
    )
    return float(val)
