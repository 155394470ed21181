"""Monte Carlo estimation of semigroup kernels and kernel-level checks.

The kernel of ``exp(-t H(A, V))`` is

    k_t(x, y) = (2 pi t)^(-d/2) exp(-|x - y|^2 / (2t)) E_{x,y}[exp(-S_t(A, V; b))]

with the expectation over Brownian bridges from ``x`` to ``y`` in time ``t``.

Paths are processed in fixed-size chunks addressed by path index.  Chunk
results are concatenated in index order and reduced in fixed blocks, so the
output is bit-identical for any number of worker threads.  Comparisons
between two integrands (``A`` against ``0``, ``V`` against ``V_R``, ``(x, y)``
against ``(y, x)``) always evaluate both on the same paths.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .action import action, ito_line_integral, time_integral
from .brownian_bridge import BridgeBatch, TimeGrid, sample_bridges, trapezoid_weights
from .potentials import ScalarPotential, VectorPotential, ZeroVectorPotential
from .rng import STREAM_BRIDGE

__all__ = [
    "BoundEnvelopeReport",
    "DiamagneticReport",
    "HermiticityReport",
    "KernelEstimate",
    "KernelOverflowError",
    "QuadratureBoxError",
    "SemigroupReport",
    "TruncationReport",
    "bound_envelope",
    "diamagnetic_check",
    "estimate_kernel",
    "free_prefactor",
    "hermiticity_residual",
    "map_paths",
    "path_weights",
    "semigroup_residual",
    "summarize",
    "truncation_convergence",
]

CHUNK_SIZE = 2048
OVERFLOW_LIMIT = 1e300
HEAVY_TAIL_FRACTION = 1e-3


class KernelOverflowError(FloatingPointError):
    """A per-path weight exceeded the overflow limit; the run is aborted."""

    def __init__(self, path_index: int, seed: int, value: float):
        super().__init__(f"path {path_index} (seed {seed}) produced weight magnitude {value:.3e}")
        self.path_index = path_index
        self.seed = seed


class QuadratureBoxError(ValueError):
    """The semigroup quadrature box leaves too much Gaussian tail mass."""


def free_prefactor(x, y, t: float) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return math.exp(-float(np.sum((x - y) ** 2)) / (2.0 * t)) / (2.0 * math.pi * t) ** (x.size / 2)


# ---------------------------------------------------------------------------
# path machinery and reductions
# ---------------------------------------------------------------------------


def map_paths(
    x,
    y,
    t: float,
    n_steps: int,
    n_samples: int,
    seed: int,
    fn: Callable[[BridgeBatch], np.ndarray],
    workers: int = 1,
    stream: int = STREAM_BRIDGE,
    chunk_size: int = CHUNK_SIZE,
) -> np.ndarray:
    """Apply ``fn`` to consecutive chunks of bridge paths; results in path order."""
    grid = TimeGrid(t, n_steps)
    starts = range(0, n_samples, chunk_size)

    def job(first: int) -> np.ndarray:
        batch = sample_bridges(seed, x, y, grid, min(chunk_size, n_samples - first), first, stream)
        return np.asarray(fn(batch))

    if workers <= 1:
        parts = [job(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, starts))
    return np.concatenate(parts, axis=0)


def _block_moments(v: np.ndarray) -> tuple[int, complex, float]:
    if np.all(v == v[0]):
        return v.size, v[0], 0.0
    m = v.mean()
    return v.size, m, float(np.sum(np.abs(v - m) ** 2))


def summarize(values: np.ndarray, block: int = CHUNK_SIZE) -> tuple[complex | float, float]:
    """Mean and standard error of per-path values.

    Blocks are merged in order with the pairwise update of Chan et al., so an
    exactly constant sample has exactly zero spread.  For complex samples the
    error combines the real and imaginary variances.
    """
    values = np.asarray(values)
    n_tot, mean, m2 = 0, values.dtype.type(0), 0.0
    for i in range(0, values.size, block):
        n, m, s = _block_moments(values[i : i + block])
        if n_tot == 0:
            n_tot, mean, m2 = n, m, s
            continue
        delta = m - mean
        n_new = n_tot + n
        mean = mean + delta * (n / n_new)
        m2 = m2 + s + abs(delta) ** 2 * n_tot * n / n_new
        n_tot = n_new
    if n_tot < 2:
        return mean, float("nan")
    return (mean.item() if hasattr(mean, "item") else mean), math.sqrt(m2 / (n_tot - 1) / n_tot)


def path_weights(batch: BridgeBatch, A: VectorPotential, V: ScalarPotential, seed: int | None = None) -> np.ndarray:
    """Per-path ``exp(-S_t(A, V; b))``; real when ``A`` vanishes."""
    S = action(batch, A, V)
    # overflow is reported by _check_overflow with the offending path
    with np.errstate(over="ignore"):
        if A.is_zero:
            w = np.exp(-np.asarray(S.scalar_part, dtype=float))
        else:
            w = np.exp(-np.asarray(S.value, dtype=complex))
    _check_overflow(w, batch.first_index, seed)
    return w


def _check_overflow(w: np.ndarray, first_index: int, seed: int | None) -> None:
    mag = np.abs(w)
    bad = ~np.isfinite(mag) | (mag > OVERFLOW_LIMIT)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise KernelOverflowError(first_index + i, -1 if seed is None else seed, float(mag[i]))


def _heavy_tail(w: np.ndarray) -> bool:
    mag = np.sort(np.abs(w))[::-1]
    total = mag.sum()
    if total == 0:
        return False
    top = max(1, int(math.ceil(HEAVY_TAIL_FRACTION * mag.size)))
    return bool(mag[:top].sum() > 0.5 * total)


# ---------------------------------------------------------------------------
# kernel estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelEstimate:
    """Monte Carlo value of ``k_t(x, y)``.

    ``mean`` already includes the free Gaussian ``prefactor``; ``heavy_tail``
    flags runs where the largest 0.1% of weights carry more than half the mass.
    """

    mean: complex
    stderr: float
    n_samples: int
    n_steps: int
    t: float
    x: tuple[float, ...]
    y: tuple[float, ...]
    prefactor: float
    seed: int = 0
    heavy_tail: bool = False

    @property
    def real(self) -> float:
        return float(np.real(self.mean))

    def to_record(self) -> dict:
        return {
            "x": list(self.x),
            "y": list(self.y),
            "t": self.t,
            "mean_re": float(np.real(self.mean)),
            "mean_im": float(np.imag(self.mean)),
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "prefactor": self.prefactor,
            "heavy_tail": self.heavy_tail,
        }


def _make_estimate(w, x, y, t, n_steps, seed) -> KernelEstimate:
    pref = free_prefactor(x, y, t)
    mean, err = summarize(w)
    return KernelEstimate(
        mean=complex(pref * mean) if np.iscomplexobj(w) else pref * float(mean),
        stderr=pref * err,
        n_samples=int(w.size),
        n_steps=n_steps,
        t=float(t),
        x=tuple(float(v) for v in np.atleast_1d(x)),
        y=tuple(float(v) for v in np.atleast_1d(y)),
        prefactor=pref,
        seed=seed,
        heavy_tail=_heavy_tail(w),
    )


def _validate(t: float, n_samples: int) -> None:
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")


def estimate_kernel(
    x,
    y,
    t: float,
    A: VectorPotential,
    V: ScalarPotential,
    n_steps: int = 256,
    n_samples: int = 10_000,
    seed: int = 0,
    workers: int = 1,
    stream: int = STREAM_BRIDGE,
) -> KernelEstimate:
    """Estimate ``k_t(x, y)`` from ``n_samples`` bridge paths.

    Examples
    --------
    >>> from bridgekernel.potentials import ZeroPotential, ZeroVectorPotential
    >>> est = estimate_kernel([0.0], [0.0], 1.0, ZeroVectorPotential(1), ZeroPotential(), 8, 16)
    >>> round(est.real, 6), est.stderr
    (0.398942, 0.0)
    """
    _validate(t, n_samples)
    w = map_paths(x, y, t, n_steps, n_samples, seed, lambda b: path_weights(b, A, V, seed), workers, stream)
    return _make_estimate(w, x, y, t, n_steps, seed)


# ---------------------------------------------------------------------------
# Hermiticity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HermiticityReport:
    residual: float
    stderr: float
    forward: KernelEstimate
    backward: KernelEstimate

    @property
    def passed(self) -> bool:
        return self.residual <= 3.0 * self.stderr or self.residual <= 1e-12 * max(abs(self.forward.mean), 1e-300)


def hermiticity_residual(
    x, y, t, A, V, n_steps=256, n_samples=10_000, seed=0, workers=1
) -> HermiticityReport:
    """``|k_t(x, y) - conj(k_t(y, x))|`` with the ``(y, x)`` run on reversed paths."""
    _validate(t, n_samples)

    def fn(batch):
        fwd = path_weights(batch, A, V, seed).astype(complex)
        bwd = path_weights(batch.reversed(), A, V, seed).astype(complex)
        return np.stack([fwd, bwd], axis=1)

    w = map_paths(x, y, t, n_steps, n_samples, seed, fn, workers)
    forward = _make_estimate(w[:, 0], x, y, t, n_steps, seed)
    backward = _make_estimate(w[:, 1], y, x, t, n_steps, seed)
    pref = forward.prefactor
    diff_mean, diff_err = summarize(w[:, 0] - np.conj(w[:, 1]))
    return HermiticityReport(float(pref * abs(diff_mean)), pref * diff_err, forward, backward)


# ---------------------------------------------------------------------------
# semigroup property
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SemigroupReport:
    lhs: complex
    rhs: complex
    residual: float
    mc_error: float
    quadrature_error: float
    tail_error: float
    rounding_error: float

    @property
    def budget(self) -> float:
        return self.mc_error + self.quadrature_error + self.tail_error + self.rounding_error

    @property
    def passed(self) -> bool:
        return self.residual <= 3.0 * self.budget


def _trapezoid_nodes(lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = np.linspace(lo, hi, n)
    h = (hi - lo) / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return nodes, w


def _box_bounds(quad_box, d: int) -> tuple[np.ndarray, np.ndarray]:
    if np.isscalar(quad_box):
        return np.full(d, -float(quad_box)), np.full(d, float(quad_box))
    lo, hi = quad_box
    return np.broadcast_to(np.asarray(lo, float), (d,)).copy(), np.broadcast_to(np.asarray(hi, float), (d,)).copy()


def semigroup_residual(
    x,
    z,
    t: float,
    t2: float,
    A: VectorPotential,
    V: ScalarPotential,
    quad_box=6.0,
    quad_n: int = 41,
    n_steps: int = 128,
    n_samples: int = 10_000,
    seed: int = 0,
    workers: int = 1,
    tail_tol: float = 1e-3,
) -> SemigroupReport:
    """Compare ``k_{t+t2}(x, z)`` with ``int dy k_t(x, y) k_{t2}(y, z)``.

    The ``y`` integral is a tensor trapezoid rule on ``quad_box`` (a half-width
    or ``(lower, upper)`` pair) with ``quad_n`` nodes per axis, ``quad_n`` odd.
    The time step is kept equal on both sides (``n_steps`` for ``t``,
    proportionally more for ``t2`` and ``t + t2``), in which case the
    discretized estimator obeys the semigroup identity exactly and the residual
    is purely statistical plus quadrature error.

    The error budget has four parts: Monte Carlo error (independent streams per
    quadrature node), a trapezoid error estimated by halving the rule, the mass
    of a Gaussian envelope ``a exp(-|x - y|^2 / (4t))`` outside the box, with
    ``a`` fitted to the node values, and a floating-point allowance.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d = x.size
    if quad_n < 3 or quad_n % 2 == 0:
        raise ValueError("quad_n must be odd and at least 3")
    lo, hi = _box_bounds(quad_box, d)
    n2 = max(1, int(round(n_steps * t2 / t)))
    axes = [_trapezoid_nodes(a, b, quad_n) for a, b in zip(lo, hi)]
    ys = np.stack(np.meshgrid(*[a[0] for a in axes], indexing="ij"), axis=-1).reshape(-1, d)
    wq = np.ones(ys.shape[0])
    for ax in np.meshgrid(*[a[1] for a in axes], indexing="ij"):
        wq = wq * ax.ravel()

    total = estimate_kernel(x, z, t + t2, A, V, n_steps + n2, n_samples, seed, workers)
    k1 = np.empty(ys.shape[0], dtype=complex)
    k2 = np.empty(ys.shape[0], dtype=complex)
    e1 = np.empty(ys.shape[0])
    e2 = np.empty(ys.shape[0])
    for j, y in enumerate(ys):
        a = estimate_kernel(x, y, t, A, V, n_steps, n_samples, seed, workers, stream=100 + 2 * j)
        b = estimate_kernel(y, z, t2, A, V, n2, n_samples, seed, workers, stream=101 + 2 * j)
        k1[j], k2[j], e1[j], e2[j] = a.mean, b.mean, a.stderr, b.stderr

    terms = wq * k1 * k2
    rhs = terms.sum()
    mc = math.sqrt(float(np.sum(wq**2 * (np.abs(k2) ** 2 * e1**2 + np.abs(k1) ** 2 * e2**2))) + total.stderr**2)

    # coarse rule on every other node along each axis
    coarse_axes = [_trapezoid_nodes(a, b, (quad_n + 1) // 2)[1] for a, b in zip(lo, hi)]
    wc = np.ones(ys.shape[0])
    sel = np.ones(ys.shape[0], dtype=bool)
    idx = np.stack(np.meshgrid(*[np.arange(quad_n)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    for ax in range(d):
        even = idx[:, ax] % 2 == 0
        sel &= even
        wc = wc * np.where(even, coarse_axes[ax][np.minimum(idx[:, ax] // 2, len(coarse_axes[ax]) - 1)], 0.0)
    rhs_coarse = np.sum((wc * k1 * k2)[sel])
    quad_err = float(abs(rhs - rhs_coarse))

    amp1 = float(np.max(np.abs(k1) * np.exp(np.sum((x - ys) ** 2, axis=1) / (4.0 * t))))
    amp2 = float(np.max(np.abs(k2) * np.exp(np.sum((ys - z) ** 2, axis=1) / (4.0 * t2))))
    tau = t * t2 / (t + t2)
    centre = (t2 * x + t * z) / (t + t2)
    sd = math.sqrt(2.0 * tau)
    inside = np.prod(ndtr((hi - centre) / sd) - ndtr((lo - centre) / sd))
    tail = (
        amp1
        * amp2
        * math.exp(-float(np.sum((x - z) ** 2)) / (4.0 * (t + t2)))
        * (4.0 * math.pi * tau) ** (d / 2)
        * max(0.0, 1.0 - float(inside))
    )
    scale = max(abs(total.mean), 1e-300)
    if tail > tail_tol * scale:
        raise QuadratureBoxError(
            f"Gaussian tail mass {tail:.3e} outside the quadrature box exceeds {tail_tol:g} x |k_(t+t')| = {tail_tol * scale:.3e}"
        )
    rounding = 64 * np.finfo(float).eps * float(np.sum(np.abs(terms)) + abs(total.mean))
    return SemigroupReport(
        lhs=total.mean,
        rhs=complex(rhs),
        residual=float(abs(total.mean - rhs)),
        mc_error=mc,
        quadrature_error=quad_err,
        tail_error=tail,
        rounding_error=rounding,
    )


# ---------------------------------------------------------------------------
# Gaussian bound envelope
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundEnvelopeReport:
    """Observed values of ``log|k_t(x,y)| + |x-y|^2/(4t) - delta (|x|^2 + |y|^2)``."""

    delta: float
    samples: list[tuple[tuple[float, ...], tuple[float, ...], float]]
    max_observed: float
    argmax: int
    stat_errors: list[float] = field(default_factory=list)

    @property
    def a_t_estimate(self) -> float:
        return math.exp(self.max_observed)

    @property
    def bounded(self) -> bool:
        """Finite maximum, not exceeded on the outermost quarter of sample points."""
        if not np.isfinite(self.max_observed):
            return False
        radii = np.array([math.sqrt(sum(v * v for v in s[0]) + sum(v * v for v in s[1])) for s in self.samples])
        stats = np.array([s[2] for s in self.samples])
        errs = np.array(self.stat_errors) if self.stat_errors else np.zeros_like(stats)
        outer = radii >= np.quantile(radii, 0.75)
        if outer.all():
            return True
        inner_max = stats[~outer].max()
        return bool(np.all(stats[outer] <= inner_max + 3.0 * errs[outer]))


def bound_envelope(
    t: float,
    delta: float,
    A: VectorPotential,
    V: ScalarPotential,
    sample_points: Sequence[tuple],
    n_steps: int = 128,
    n_samples: int = 10_000,
    seed: int = 0,
    workers: int = 1,
) -> BoundEnvelopeReport:
    if not delta > 0:
        raise ValueError("delta must be positive")
    samples, errs = [], []
    for x, y in sample_points:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        est = estimate_kernel(x, y, t, A, V, n_steps, n_samples, seed, workers)
        mag = abs(est.mean)
        logk = math.log(mag) if mag > 0 else -math.inf
        stat = logk + float(np.sum((x - y) ** 2)) / (4.0 * t) - delta * float(np.sum(x**2) + np.sum(y**2))
        samples.append((tuple(map(float, x)), tuple(map(float, y)), stat))
        errs.append(est.stderr / mag if mag > 0 else math.inf)
    stats = [s[2] for s in samples]
    i = int(np.argmax(stats))
    return BoundEnvelopeReport(float(delta), samples, float(stats[i]), i, errs)


# ---------------------------------------------------------------------------
# diamagnetic inequality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiamagneticReport:
    lhs: float
    rhs: float
    combined_stderr: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + 3.0 * self.combined_stderr

    @property
    def strict(self) -> bool:
        return self.lhs < self.rhs - 3.0 * self.combined_stderr


def diamagnetic_check(x, y, t, A, V, n_steps=256, n_samples=10_000, seed=0, workers=1) -> DiamagneticReport:
    """``|k_t(x, y; A, V)|`` against ``k_t(x, y; 0, V)`` on common paths."""
    _validate(t, n_samples)
    zero = ZeroVectorPotential(np.atleast_1d(x).size)

    def fn(batch):
        return np.stack([path_weights(batch, A, V, seed).astype(complex), path_weights(batch, zero, V, seed)], axis=1)

    w = map_paths(x, y, t, n_steps, n_samples, seed, fn, workers)
    mag = _make_estimate(w[:, 0], x, y, t, n_steps, seed)
    ref = _make_estimate(w[:, 1].real, x, y, t, n_steps, seed)
    return DiamagneticReport(abs(mag.mean), float(ref.mean), math.hypot(mag.stderr, ref.stderr))


# ---------------------------------------------------------------------------
# truncation V -> V_R
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncationReport:
    R: tuple[float, ...]
    error: tuple[float, ...]
    noise: tuple[float, ...]
    slope: float | None
    fitted_R: tuple[float, ...]

    @property
    def status(self) -> str:
        return "ok" if self.slope is not None else "rate indistinguishable from noise"

    def rows(self) -> list[dict]:
        return [{"R": r, "error": e, "noise": n} for r, e, n in zip(self.R, self.error, self.noise)]


def truncation_convergence(
    x,
    y,
    t: float,
    A: VectorPotential,
    V: ScalarPotential,
    R_list: Sequence[float],
    rho: float = 0.0,
    rho_tilde: float = 0.0,
    n_steps: int = 256,
    n_samples: int = 10_000,
    seed: int = 0,
    workers: int = 1,
    signal_factor: float = 5.0,
) -> TruncationReport:
    """Weighted error ``exp(rho|x|^2 - rho_tilde|y|^2) |k_t - k_t^(R)|`` per radius.

    All radii share the same paths.  The log-log slope is fitted by least
    squares over the radii whose error exceeds ``signal_factor`` times its
    Monte Carlo standard error; fewer than two such radii give ``slope=None``.
    """
    R_arr = np.asarray(R_list, dtype=float)
    if R_arr.size == 0 or np.any(R_arr <= 1.0) or np.any(np.diff(R_arr) <= 0):
        raise ValueError("R_list must be increasing with every R > 1")
    _validate(t, n_samples)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    weight = math.exp(rho * float(np.sum(x**2)) - rho_tilde * float(np.sum(y**2)))
    pref = free_prefactor(x, y, t)

    def fn(batch):
        pos = batch.positions
        w_t = trapezoid_weights(batch.grid)
        v1 = np.asarray(V.v1(pos), dtype=float)
        v2 = np.asarray(V.v2(pos), dtype=float)
        if not (np.all(np.isfinite(v1)) and np.all(np.isfinite(v2))):
            raise ValueError("scalar potential is not finite on a path node")
        radius = np.sqrt(np.einsum("...i,...i->...", pos, pos))
        if A.is_zero:
            phase = np.zeros(len(batch), dtype=complex)
        else:
            phase = 1j * (np.asarray(ito_line_integral(batch, A)) + 0.5 * np.asarray(time_integral(batch, A.divergence)))
        full = np.exp(-(v1 + v2) @ w_t - phase)
        _check_overflow(full, batch.first_index, seed)
        cols = [full]
        for R in R_arr:
            cols.append(full - np.exp(-(v1 + np.where(radius < R, v2, 0.0)) @ w_t - phase))
        return np.stack(cols, axis=1)

    w = map_paths(x, y, t, n_steps, n_samples, seed, fn, workers)
    errors, noises = [], []
    for j in range(R_arr.size):
        m, e = summarize(w[:, j + 1])
        errors.append(weight * pref * abs(m))
        noises.append(weight * pref * e)
    sig = [i for i in range(R_arr.size) if noises[i] > 0 and errors[i] > signal_factor * noises[i]]
    slope = None
    if len(sig) >= 2:
        slope = float(np.polyfit(np.log(R_arr[sig]), np.log(np.asarray(errors)[sig]), 1)[0])
    return TruncationReport(
        tuple(map(float, R_arr)), tuple(errors), tuple(noises), slope, tuple(float(R_arr[i]) for i in sig)
    )
