"""Configuration-driven experiment runner.

Usage::

    bridgekernel [SUBCOMMAND] --config run.json [--out PATH] [--format csv|json]
                 [--workers N] [--seed S]

The config is a JSON document validated against ``schemas/config.schema.json``.
Every output embeds the effective config and a provenance block.  Exit codes:
0 all checks passed, 1 a check failed, 2 invalid configuration, 3 numerical
abort.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable

import jsonschema
import numpy as np
import scipy

from . import __version__
from .action import ActionError
from .brownian_bridge import TimeGrid, sample_bridge
from .closed_forms import free_kernel, landau_diagonal, mehler_kernel
from .kernel_estimator import (
    KernelOverflowError,
    QuadratureBoxError,
    bound_envelope,
    diamagnetic_check,
    estimate_kernel,
    hermiticity_residual,
    semigroup_residual,
    truncation_convergence,
)
from .potentials import (
    ConstantField,
    HarmonicPotential,
    ScalarPotential,
    VectorPotential,
    ZeroPotential,
    ZeroVectorPotential,
    kato_kappa,
    scalar_potential_from_dict,
    upsilon,
    vector_potential_from_dict,
)
from .random_fields import (
    FieldFactorizationError,
    averaged_bound_checks,
    averaged_kernel,
    field_spec_from_dict,
    gaussian_identity_residual,
    two_stage_kernel,
)
from . import spectral_oracle as so

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

# Fixed CSV column order per subcommand.
CSV_COLUMNS: dict[str, list[str]] = {
    "kernel": ["x", "y", "t", "mean_re", "mean_im", "stderr", "n_samples", "n_steps", "seed"],
    "hermiticity": ["residual", "stderr", "forward_re", "forward_im", "backward_re", "backward_im", "passed"],
    "semigroup": [
        "lhs_re", "lhs_im", "rhs_re", "rhs_im", "residual",
        "mc_error", "quadrature_error", "tail_error", "budget", "passed",
    ],
    "bound-envelope": ["x", "y", "statistic", "stat_error"],
    "diamagnetic": ["lhs", "rhs", "combined_stderr", "passed", "strict"],
    "truncation-rate": ["R", "error", "noise"],
    "gaussian-identity": ["mc_value", "closed_form", "residual", "stderr", "passed"],
    "averaged-kernel": [
        "direct_re", "direct_im", "direct_stderr", "two_stage_re", "two_stage_im", "two_stage_stderr",
        "difference", "combined_stderr", "passed",
    ],
    "averaged-bounds": [
        "x", "y", "kbar_abs", "stderr", "free_bound", "diagonal_bound", "free_bound_holds", "diagonal_bound_holds",
    ],
    "oracle-compare": [
        "mc_re", "mc_im", "mc_stderr", "closed_form", "grid_value", "grid_budget", "passed",
    ],
    "spectral-checks": ["check", "value", "tolerance", "passed"],
    "ids": ["E", "N_trace", "N_diag", "stderr"],
    "laplace": ["t", "heat_diagonal", "stieltjes", "stat_error", "grid_error", "residual", "passed"],
    "upsilon": ["xi", "d", "upsilon"],
    "kato-kappa": ["point", "value"],
}


class ConfigError(ValueError):
    """Configuration rejected before or during dispatch."""


@dataclass
class Outcome:
    result: dict
    rows: list[dict]
    passed: bool
    checks: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def load_schema() -> dict:
    text = resources.files("bridgekernel").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def provenance(cfg: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config_sha256": config_hash(cfg),
        "seed": cfg.get("seed", 0),
        "workers": cfg.get("workers", 1),
        "versions": {
            "bridgekernel": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _point(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float))


class _Ctx:
    """Typed accessors over a validated config."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.seed = int(cfg.get("seed", 0))
        self.workers = int(cfg.get("workers", 1))
        self.params = cfg.get("params", {})
        mc = cfg.get("mc", {})
        self.n_samples = int(mc.get("n_samples", 10_000))
        self.n_steps = int(mc.get("n_steps", 256))

    def param(self, name, default=None, required=False):
        if name in self.params:
            return self.params[name]
        if required:
            raise ConfigError(f"params.{name} is required for {self.cfg['subcommand']}")
        return default

    def x(self):
        return _point(self.cfg["x"])

    def y(self):
        return _point(self.cfg["y"])

    @property
    def t(self) -> float:
        if "t" not in self.cfg:
            raise ConfigError("t is required")
        return float(self.cfg["t"])

    def dim(self) -> int:
        if "vector_potential" in self.cfg:
            return vector_potential_from_dict(self.cfg["vector_potential"]).dim
        if "x" in self.cfg:
            return _point(self.cfg["x"]).size
        if "field" in self.cfg:
            return int(self.cfg["field"].get("dim", 1))
        return int(self.param("dim", 1))

    def V(self) -> ScalarPotential:
        doc = self.cfg.get("potential")
        return ZeroPotential() if doc is None else scalar_potential_from_dict(doc)

    def A(self, dim: int | None = None) -> VectorPotential:
        doc = self.cfg.get("vector_potential")
        if doc is None:
            return ZeroVectorPotential(dim if dim is not None else self.dim())
        A = vector_potential_from_dict(doc)
        if dim is not None and A.dim != dim:
            raise ConfigError(f"vector potential has dim {A.dim}, points have dim {dim}")
        return A

    def field(self):
        return field_spec_from_dict(self.cfg["field"])

    def grid(self) -> tuple[float, int]:
        g = self.cfg["grid"]
        return float(g["L"]), int(g["n_per_dim"])

    def mc(self, default_steps: int | None = None) -> dict:
        steps = self.n_steps
        if default_steps is not None and "n_steps" not in self.cfg.get("mc", {}):
            steps = default_steps
        return {"n_steps": steps, "n_samples": self.n_samples, "seed": self.seed, "workers": self.workers}


def _cplx(z) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _run_kernel(c: _Ctx) -> Outcome:
    x, y = c.x(), c.y()
    est = estimate_kernel(x, y, c.t, c.A(x.size), c.V(), **c.mc())
    rec = est.to_record()
    passed = True
    expected = c.param("expected")
    if expected is not None:
        tol = 3.0 * est.stderr + 1e-12 * abs(float(expected))
        passed = abs(est.mean - float(expected)) <= tol
        rec["expected"] = float(expected)
    return Outcome(rec, [{k: rec[k] for k in CSV_COLUMNS["kernel"]}], passed)


def _run_hermiticity(c: _Ctx) -> Outcome:
    x, y = c.x(), c.y()
    r = hermiticity_residual(x, y, c.t, c.A(x.size), c.V(), **c.mc())
    row = {
        "residual": r.residual,
        "stderr": r.stderr,
        "forward_re": float(np.real(r.forward.mean)),
        "forward_im": float(np.imag(r.forward.mean)),
        "backward_re": float(np.real(r.backward.mean)),
        "backward_im": float(np.imag(r.backward.mean)),
        "passed": r.passed,
    }
    return Outcome(row, [row], r.passed)


def _run_semigroup(c: _Ctx) -> Outcome:
    x, z = c.x(), c.y()
    mc = c.mc(default_steps=128)
    r = semigroup_residual(
        x,
        z,
        c.t,
        float(c.param("t2", c.t)),
        c.A(x.size),
        c.V(),
        quad_box=c.param("quad_box", 6.0),
        quad_n=int(c.param("quad_n", 41)),
        tail_tol=float(c.param("tail_tol", 1e-3)),
        **mc,
    )
    frac = c.param("max_budget_fraction")
    budget_ok = frac is None or r.budget <= float(frac) * abs(r.lhs)
    passed = bool(r.passed and budget_ok)
    row = {
        "lhs_re": float(np.real(r.lhs)),
        "lhs_im": float(np.imag(r.lhs)),
        "rhs_re": float(np.real(r.rhs)),
        "rhs_im": float(np.imag(r.rhs)),
        "residual": r.residual,
        "mc_error": r.mc_error,
        "quadrature_error": r.quadrature_error,
        "tail_error": r.tail_error,
        "budget": r.budget,
        "passed": passed,
    }
    return Outcome(dict(row, budget_fraction=r.budget / max(abs(r.lhs), 1e-300)), [row], passed)


def _run_bound_envelope(c: _Ctx) -> Outcome:
    points = c.param("points", required=True)
    pts = [(_point(p[0]), _point(p[1])) for p in points]
    d = pts[0][0].size
    r = bound_envelope(c.t, float(c.param("delta", 0.1)), c.A(d), c.V(), pts, **c.mc())
    rows = [
        {"x": list(s[0]), "y": list(s[1]), "statistic": s[2], "stat_error": e}
        for s, e in zip(r.samples, r.stat_errors)
    ]
    res = {"delta": r.delta, "max_observed": r.max_observed, "a_t_estimate": r.a_t_estimate, "bounded": r.bounded}
    return Outcome(res, rows, r.bounded)


def _run_diamagnetic(c: _Ctx) -> Outcome:
    x, y = c.x(), c.y()
    r = diamagnetic_check(x, y, c.t, c.A(x.size), c.V(), **c.mc())
    passed = r.passed and (r.strict or not c.param("require_strict", False))
    row = {"lhs": r.lhs, "rhs": r.rhs, "combined_stderr": r.combined_stderr, "passed": r.passed, "strict": r.strict}
    return Outcome(row, [row], bool(passed))


def _run_truncation(c: _Ctx) -> Outcome:
    x, y = c.x(), c.y()
    r = truncation_convergence(
        x,
        y,
        c.t,
        c.A(x.size),
        c.V(),
        c.param("R_list", [2, 4, 8, 16]),
        rho=float(c.param("rho", 0.0)),
        rho_tilde=float(c.param("rho_tilde", 0.0)),
        signal_factor=float(c.param("signal_factor", 5.0)),
        **c.mc(),
    )
    lo, hi = c.param("slope_range", [-math.inf, math.inf])
    passed = r.slope is None or lo <= r.slope <= hi
    res = {"slope": r.slope, "fitted_R": list(r.fitted_R), "status": r.status, "slope_range": [lo, hi]}
    return Outcome(res, r.rows(), passed)


def _run_gaussian_identity(c: _Ctx) -> Outcome:
    x, y = c.x(), c.y()
    path = sample_bridge(c.seed, x, y, TimeGrid(c.t, c.n_steps), int(c.param("path_index", 0)))
    r = gaussian_identity_residual(path, c.field(), int(c.param("n_field_samples", 100_000)), c.seed)
    row = {"mc_value": r.mc_value, "closed_form": r.closed_form, "residual": r.residual, "stderr": r.stderr, "passed": r.passed}
    return Outcome(row, [row], r.passed)


def _run_averaged_kernel(c: _Ctx) -> Outcome:
    x, y = c.x(), c.y()
    spec = c.field()
    A = c.A(x.size)
    direct = averaged_kernel(x, y, c.t, A, spec, **c.mc())
    staged = two_stage_kernel(
        x,
        y,
        c.t,
        A,
        spec,
        n_fields=int(c.param("n_fields", 2000)),
        paths_per_field=int(c.param("paths_per_field", 8)),
        n_steps=c.n_steps,
        seed=c.seed,
    )
    diff = abs(direct.mean - staged.mean)
    comb = math.hypot(direct.stderr, staged.stderr)
    passed = diff <= 3.0 * comb
    row = {
        "direct_re": float(np.real(direct.mean)),
        "direct_im": float(np.imag(direct.mean)),
        "direct_stderr": direct.stderr,
        "two_stage_re": float(np.real(staged.mean)),
        "two_stage_im": float(np.imag(staged.mean)),
        "two_stage_stderr": staged.stderr,
        "difference": diff,
        "combined_stderr": comb,
        "passed": passed,
    }
    return Outcome(row, [row], passed)


def _run_averaged_bounds(c: _Ctx) -> Outcome:
    pairs = [(_point(p[0]), _point(p[1])) for p in c.param("pairs", required=True)]
    d = pairs[0][0].size
    rows_ = averaged_bound_checks(pairs, c.t, c.field(), c.A(d), **c.mc())
    rows = [
        {
            "x": list(r.x),
            "y": list(r.y),
            "kbar_abs": r.kbar_abs,
            "stderr": r.stderr,
            "free_bound": r.free_bound,
            "diagonal_bound": r.diagonal_bound,
            "free_bound_holds": r.free_bound_holds,
            "diagonal_bound_holds": r.diagonal_bound_holds,
        }
        for r in rows_
    ]
    passed = all(r["free_bound_holds"] and r["diagonal_bound_holds"] for r in rows)
    return Outcome({"n_pairs": len(rows), "all_hold": passed}, rows, passed)


def closed_form_for(x, y, t, A: VectorPotential, V: ScalarPotential) -> float | None:
    """Closed-form kernel when the configuration has one, else ``None``."""
    if A.is_zero and isinstance(V, ZeroPotential):
        return free_kernel(x, y, t)
    if A.is_zero and isinstance(V, HarmonicPotential) and x.size == 1 and len(V.omega) == 1:
        return mehler_kernel(float(x[0]), float(y[0]), t, V.omega[0])
    if isinstance(A, ConstantField) and isinstance(V, ZeroPotential) and x.size == 2 and np.array_equal(x, y):
        return landau_diagonal(float(A.B[0, 1]), t)
    return None


def _run_oracle_compare(c: _Ctx) -> Outcome:
    x, y = c.x(), c.y()
    A, V = c.A(x.size), c.V()
    est = estimate_kernel(x, y, c.t, A, V, **c.mc())
    closed = closed_form_for(x, y, c.t, A, V)
    res: dict[str, Any] = {"mc": _cplx(est.mean), "mc_stderr": est.stderr, "closed_form": closed}
    checks = {}
    if closed is not None:
        checks["mc_vs_closed_form"] = abs(est.mean - closed) <= 3.0 * est.stderr
    grid_value = grid_budget = None
    if "grid" in c.cfg:
        L, n = c.grid()
        g = so.grid_oracle(x, y, c.t, A, V, L, n)
        grid_value, grid_budget = float(np.real(g.value)), g.budget
        res["grid"] = {"value": _cplx(g.value), "boundary_budget": g.boundary_budget, "spacing_budget": g.spacing_budget}
        checks["mc_vs_grid"] = abs(est.mean - g.value) <= 3.0 * (est.stderr + g.budget)
        rel = c.param("grid_rel_tol")
        if rel is not None:
            checks["mc_vs_grid_relative"] = abs(est.mean - g.value) <= float(rel) * abs(g.value)
        if closed is not None:
            res["grid_minus_closed_form"] = abs(g.value - closed)
    passed = all(checks.values())
    res["checks"] = checks
    row = {
        "mc_re": float(np.real(est.mean)),
        "mc_im": float(np.imag(est.mean)),
        "mc_stderr": est.stderr,
        "closed_form": closed,
        "grid_value": grid_value,
        "grid_budget": grid_budget,
        "passed": passed,
    }
    return Outcome(res, [row], passed, checks)


def _bump(sites: np.ndarray, radius: float) -> np.ndarray:
    r2 = np.sum(sites**2, axis=1) / radius**2
    out = np.zeros(sites.shape[0])
    inside = r2 < 1
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def spectral_check_rows(
    H: so.GridHamiltonian,
    energy_cut: float = 1.0,
    t: float = 1.0,
    t_checks=(0.1, 0.3),
    tau: float = 1.0,
    dt: float = 0.1,
    bump_radius: float = 2.0,
    seed: int = 0,
    tol: float = 1e-8,
) -> list[dict]:
    """Machine-precision identities of the lattice functional calculus."""
    from .rng import STREAM_PROBE, uniforms

    rows = []

    def add(name, value, tolerance, ok=None):
        rows.append({"check": name, "value": float(value), "tolerance": float(tolerance), "passed": bool(value <= tolerance if ok is None else ok)})

    M = H.matrix
    add("hermiticity", np.max(np.abs(M - M.conj().T)) / np.max(np.abs(M)), 1e-12)
    dec = so.decompose(H)
    vol = dec.cell_volume
    phi = dec.eigenvectors
    E = dec.eigenvalues
    add("eigen_residual", np.max(np.linalg.norm(M @ phi - phi * E, axis=0) * math.sqrt(vol)) / np.max(np.abs(E)), 1e-8)
    add("orthonormality", np.max(np.abs(vol * phi.conj().T @ phi - np.eye(E.size))), 1e-10)

    I = so.EnergySet.below(energy_cut)
    w = uniforms(seed, STREAM_PROBE, 0, 1, H.n_sites)[0] * 2.0 - 1.0
    add("trace_formula", so.trace_formula_check(dec, I, w).residual, tol)

    def F(e):
        return np.minimum(1.0, np.exp(-e))

    add("hs_norm", so.hs_norm_check(dec, F, w).residual, tol)
    centre = H.site_index(np.zeros(H.dim)) if H.n_per_dim % 2 == 1 else H.n_sites // 2
    other = min(centre + 1, H.n_sites - 1)
    rep = so.bounded_function_kernel(dec, F, centre, other, t_checks, tau)
    add("function_kernel_t_independence", rep.max_rel_deviation, tol)
    b = so.projection_diagonal_bounds(dec, I, t)
    add("projection_lower_bound", -b.min_p, b.slack)
    add("projection_upper_bound", b.max_excess, b.slack)
    ratio = so.initial_value_ratio(H, dec, _bump(H.sites, bump_radius), t, dt)
    rows.append({"check": "initial_value_ratio", "value": ratio, "tolerance": 0.35, "passed": 0.2 <= ratio <= 0.35})
    if not H.is_real:
        chi = uniforms(seed, STREAM_PROBE, 1, 1, H.n_sites)[0] * 2 * math.pi
        add("gauge_spectrum_shift", so.gauge_spectrum_shift(H, chi), 1e-10)
    return rows


def _run_spectral_checks(c: _Ctx) -> Outcome:
    L, n = c.grid()
    dim = c.dim()
    V = c.V() if "potential" in c.cfg else HarmonicPotential((1.0,) * dim)
    H = so.build(L, n, c.A(dim), V, dim)
    rows = spectral_check_rows(
        H,
        energy_cut=float(c.param("energy_cut", 1.0)),
        t=float(c.param("t", c.cfg.get("t", 1.0))),
        t_checks=tuple(c.param("t_checks", [0.1, 0.3])),
        tau=float(c.param("tau", 1.0)),
        dt=float(c.param("dt", 0.1)),
        bump_radius=float(c.param("bump_radius", 2.0)),
        seed=c.seed,
        tol=float(c.param("tolerance", 1e-8)),
    )
    passed = all(r["passed"] for r in rows)
    return Outcome({"n_sites": H.n_sites, "checks": {r["check"]: r["passed"] for r in rows}}, rows, passed)


def _energy_grid(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return np.linspace(float(spec["min"]), float(spec["max"]), int(spec["n"]))
    return np.asarray(spec, dtype=float)


def _run_ids(c: _Ctx) -> Outcome:
    L, n = c.grid()
    spec = c.field()
    A = c.A(spec.dim) if "vector_potential" in c.cfg else None
    background = c.V() if "potential" in c.cfg else None
    window = c.param("window")
    r = so.ids_two_ways(
        A,
        spec,
        L,
        n,
        float(c.param("gamma", L / 4)),
        _energy_grid(c.param("E_grid", {"min": -2.0, "max": 10.0, "n": 241})),
        int(c.param("n_realizations", 200)),
        seed=c.seed,
        background=background,
        window=tuple(window) if window is not None else None,
        boundary_fraction=float(c.param("boundary_fraction", 0.05)),
    )
    res = {
        "max_gap": r.max_gap,
        "gap_stderr": r.gap_stderr,
        "boundary_budget": r.boundary_budget,
        "gamma_sensitivity": r.gamma_sensitivity,
        "window": list(r.window),
        "n_realizations": r.ids_trace.n_realizations,
        "notes": list(r.notes),
    }
    return Outcome(res, r.rows(), r.passed)


def _run_laplace(c: _Ctx) -> Outcome:
    L, n = c.grid()
    r = so.laplace_consistency(
        c.field(),
        L,
        n,
        float(c.param("gamma", L / 4)),
        c.param("t_list", [0.5, 1.0, 2.0]),
        int(c.param("n_realizations", 200)),
        seed=c.seed,
        n_energies=int(c.param("n_energies", 2001)),
        background=c.V() if "potential" in c.cfg else None,
    )
    rows = [
        {
            "t": row.t,
            "heat_diagonal": row.heat_diagonal,
            "stieltjes": row.stieltjes,
            "stat_error": row.stat_error,
            "grid_error": row.grid_error,
            "residual": row.residual,
            "passed": row.passed,
        }
        for row in r.rows
    ]
    return Outcome({"all_passed": r.passed}, rows, r.passed)


def _run_upsilon(c: _Ctx) -> Outcome:
    xi = c.param("xi", 0.0)
    xs = xi if isinstance(xi, list) else [xi]
    d = int(c.param("d", 1))
    rows = [{"xi": float(v), "d": d, "upsilon": upsilon(float(v), d)} for v in xs]
    vals = [r["upsilon"] for r in rows]
    monotone = all(b > a for a, b in zip(vals, vals[1:])) if sorted(xs) == list(xs) and len(set(xs)) == len(xs) else None
    return Outcome({"values": vals, "strictly_increasing": monotone}, rows, monotone is not False)


def _run_kato_kappa(c: _Ctx) -> Outcome:
    V = c.V()
    which = c.param("part", "v1")
    f = {"v1": V.v1, "v2": V.v2, "total": V}.get(which)
    if f is None:
        raise ConfigError("params.part must be v1, v2 or total")
    probes = c.param("probe_points", [[0.0] * c.dim()])
    r = kato_kappa(f, c.t, probes, n_s=int(c.param("n_s", 32)), n_mc=int(c.param("n_mc", 20000)), seed=c.seed)
    rows = [{"point": list(p), "value": v} for p, v in zip(r.probe_points, r.probe_values)]
    return Outcome({"value": r.value, "stderr": r.stderr}, rows, True)


SUBCOMMANDS: dict[str, Callable[[_Ctx], Outcome]] = {
    "kernel": _run_kernel,
    "hermiticity": _run_hermiticity,
    "semigroup": _run_semigroup,
    "bound-envelope": _run_bound_envelope,
    "diamagnetic": _run_diamagnetic,
    "truncation-rate": _run_truncation,
    "gaussian-identity": _run_gaussian_identity,
    "averaged-kernel": _run_averaged_kernel,
    "averaged-bounds": _run_averaged_bounds,
    "oracle-compare": _run_oracle_compare,
    "spectral-checks": _run_spectral_checks,
    "ids": _run_ids,
    "laplace": _run_laplace,
    "upsilon": _run_upsilon,
    "kato-kappa": _run_kato_kappa,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _jsonable(o):
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, complex):
        return _cplx(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _clean(o):
    """Recursively replace non-finite floats with strings so output stays strict JSON."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return str(float(o))
    return o


def render(cfg: dict, outcome: Outcome, fmt: str) -> str:
    prov = provenance(cfg)
    if fmt == "json":
        doc = {
            "provenance": prov,
            "config": cfg,
            "passed": outcome.passed,
            "result": outcome.result,
            "rows": outcome.rows,
        }
        return json.dumps(_clean(json.loads(json.dumps(doc, default=_jsonable))), indent=2) + "\n"
    cols = CSV_COLUMNS[cfg["subcommand"]]
    buf = io.StringIO()
    buf.write(f"# provenance: {json.dumps(prov, sort_keys=True)}\n")
    buf.write(f"# config: {json.dumps(cfg, sort_keys=True)}\n")
    buf.write(f"# passed: {str(bool(outcome.passed)).lower()}\n")
    writer = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in outcome.rows:
        writer.writerow({k: (" ".join(repr(float(v)) for v in row[k]) if isinstance(row.get(k), (list, tuple)) else row.get(k)) for k in cols})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------


def run(cfg: dict) -> Outcome:
    """Validate ``cfg`` and dispatch to its subcommand."""
    validate_config(cfg)
    return SUBCOMMANDS[cfg["subcommand"]](_Ctx(cfg))


_NUMERICAL = (
    KernelOverflowError,
    FieldFactorizationError,
    ActionError,
    QuadratureBoxError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bridgekernel", description=__doc__.split("\n\n")[0])
    p.add_argument("subcommand", nargs="?", choices=sorted(SUBCOMMANDS), help="overrides or supplies config.subcommand")
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", help="output file (default: config output.path, else stdout)")
    p.add_argument("--format", choices=["csv", "json"], help="output format (default json)")
    p.add_argument("--workers", type=int, help="worker pool size (default: CPU count)")
    p.add_argument("--seed", type=int, help="64-bit seed override")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        if args.subcommand:
            if cfg.get("subcommand", args.subcommand) != args.subcommand:
                raise ConfigError(f"subcommand {args.subcommand!r} conflicts with config {cfg['subcommand']!r}")
            cfg["subcommand"] = args.subcommand
        if args.seed is not None:
            cfg["seed"] = args.seed
        cfg["workers"] = args.workers if args.workers is not None else cfg.get("workers", os.cpu_count() or 1)
        cfg.setdefault("schema_version", SCHEMA_VERSION)
        out_cfg = cfg.get("output", {})
        fmt = args.format or out_cfg.get("format", "json")
        out_path = args.out or out_cfg.get("path")
        outcome = run(cfg)
    except _NUMERICAL as exc:
        print(f"numerical abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = render(cfg, outcome, fmt)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if outcome.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
