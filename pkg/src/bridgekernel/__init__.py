"""Brownian-bridge Monte Carlo for magnetic Schroedinger semigroup kernels.

The estimator samples ``k_t(x, y; A, V)`` as a free Gaussian prefactor times
the bridge average of ``exp(-S_t(A, V; b))``; a dense lattice discretization
of the same operator serves as an independent spectral oracle.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .brownian_bridge import BridgeBatch, BridgePath, Box, TimeGrid, sample_bridge, sample_bridges, sojourn_time
from .action import ActionError, ActionValue, action, ito_line_integral, stratonovich_line_integral, time_integral
from .potentials import (
    ConstantField,
    ConstantPotential,
    CustomVectorPotential,
    HarmonicPotential,
    PowerLawPotential,
    SumPotential,
    TruncatedPotential,
    ZeroPotential,
    ZeroVectorPotential,
    check_subquadratic,
    kato_kappa,
    poincare_gauge,
    truncate,
    upsilon,
)
from .kernel_estimator import (
    KernelEstimate,
    KernelOverflowError,
    bound_envelope,
    diamagnetic_check,
    estimate_kernel,
    hermiticity_residual,
    semigroup_residual,
    truncation_convergence,
)
from .random_fields import (
    GaussianFieldSpec,
    averaged_bound_checks,
    averaged_kernel,
    gaussian_identity_residual,
    l_t,
    two_stage_kernel,
)

__all__ = [
    "ActionError",
    "ActionValue",
    "Box",
    "BridgeBatch",
    "BridgePath",
    "ConstantField",
    "ConstantPotential",
    "CustomVectorPotential",
    "GaussianFieldSpec",
    "HarmonicPotential",
    "KernelEstimate",
    "KernelOverflowError",
    "PowerLawPotential",
    "SumPotential",
    "TimeGrid",
    "TruncatedPotential",
    "ZeroPotential",
    "ZeroVectorPotential",
    "action",
    "averaged_bound_checks",
    "averaged_kernel",
    "bound_envelope",
    "check_subquadratic",
    "diamagnetic_check",
    "estimate_kernel",
    "gaussian_identity_residual",
    "hermiticity_residual",
    "ito_line_integral",
    "kato_kappa",
    "l_t",
    "poincare_gauge",
    "sample_bridge",
    "sample_bridges",
    "semigroup_residual",
    "sojourn_time",
    "stratonovich_line_integral",
    "time_integral",
    "truncate",
    "truncation_convergence",
    "two_stage_kernel",
    "upsilon",
]
