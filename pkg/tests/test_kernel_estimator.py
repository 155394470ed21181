from __future__ import annotations

import doctest
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bridgekernel import kernel_estimator as ke
from bridgekernel.brownian_bridge import BridgeBatch, TimeGrid, sample_bridges
from bridgekernel.closed_forms import free_kernel, landau_diagonal, mehler_kernel
from bridgekernel.kernel_estimator import (
    KernelOverflowError,
    QuadratureBoxError,
    bound_envelope,
    diamagnetic_check,
    estimate_kernel,
    hermiticity_residual,
    path_weights,
    semigroup_residual,
    summarize,
    truncation_convergence,
)
from bridgekernel.potentials import (
    ConstantPotential,
    HarmonicPotential,
    PowerLawPotential,
    SumPotential,
    ZeroPotential,
    ZeroVectorPotential,
    poincare_gauge,
    truncate,
)

Z1 = ZeroVectorPotential(1)
Z2 = ZeroVectorPotential(2)
FIELD = poincare_gauge([[0.0, 1.0], [-1.0, 0.0]])
HARMONIC = HarmonicPotential((1.0,))


def test_doctests():
    assert doctest.testmod(ke).failed == 0


class TestSummarize:
    def test_constant_has_zero_error(self):
        m, e = summarize(np.full(10_001, 0.1))
        assert m == 0.1 and e == 0.0

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=300), st.integers(1, 50))
    def test_matches_two_pass(self, vals, block):
        v = np.array(vals)
        m, e = summarize(v, block)
        assert m == pytest.approx(v.mean(), rel=1e-9, abs=1e-9)
        assert e == pytest.approx(v.std(ddof=1) / math.sqrt(v.size), rel=1e-7, abs=1e-9)

    def test_complex(self):
        v = np.array([1 + 1j, 1 - 1j, 3 + 0j])
        m, e = summarize(v)
        assert m == pytest.approx(5 / 3)
        assert e == pytest.approx(math.sqrt(np.sum(np.abs(v - v.mean()) ** 2) / 2 / 3))


class TestEstimateKernel:
    def test_free_exact(self):
        est = estimate_kernel(0.0, 0.0, 1.0, Z1, ZeroPotential(), 16, 100)
        assert est.mean == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
        assert est.stderr == 0.0

    @given(c=st.floats(-2, 2), t=st.floats(0.1, 3))
    def test_constant_potential_exact(self, c, t):
        est = estimate_kernel([0.0, 0.5], [1.0, 0.0], t, Z2, ConstantPotential(c), 8, 50)
        assert est.mean == pytest.approx(math.exp(-c * t) * free_kernel([0.0, 0.5], [1.0, 0.0], t), rel=1e-12)
        assert est.stderr <= 1e-15 * est.mean

    def test_mehler(self):
        est = estimate_kernel(0.0, 0.0, 1.0, Z1, HARMONIC, 256, 40_000, seed=1)
        assert abs(est.mean - mehler_kernel(0, 0, 1)) <= 3 * est.stderr

    def test_mehler_off_diagonal(self):
        est = estimate_kernel(0.3, -0.8, 0.7, Z1, HARMONIC, 256, 40_000, seed=2)
        assert abs(est.mean - mehler_kernel(0.3, -0.8, 0.7)) <= 3 * est.stderr

    def test_landau(self):
        est = estimate_kernel([0.0, 0.0], [0.0, 0.0], 1.0, FIELD, ZeroPotential(), 128, 40_000, seed=3)
        assert abs(est.mean - landau_diagonal(1.0, 1.0)) <= 3 * est.stderr

    def test_positive_and_real_without_field(self):
        est = estimate_kernel(0.0, 1.0, 1.0, Z1, PowerLawPotential(-1, 1.5, 0.5), 32, 500)
        assert isinstance(est.mean, float) and est.mean > 0

    def test_scaling_by_constant(self):
        V = SumPotential((HARMONIC, PowerLawPotential(-1, 1.5, 0.2)))
        a = estimate_kernel(0.2, 0.4, 1.3, Z1, V, 64, 2000, seed=5)
        b = estimate_kernel(0.2, 0.4, 1.3, Z1, SumPotential((V, ConstantPotential(0.8))), 64, 2000, seed=5)
        assert b.mean == pytest.approx(math.exp(-0.8 * 1.3) * a.mean, rel=1e-12)

    def test_workers_bit_identical(self):
        kw = dict(n_steps=32, n_samples=10_000, seed=9)
        a = estimate_kernel([0.0, 0.0], [0.5, 0.5], 1.0, FIELD, HarmonicPotential((1.0, 1.0)), workers=1, **kw)
        b = estimate_kernel([0.0, 0.0], [0.5, 0.5], 1.0, FIELD, HarmonicPotential((1.0, 1.0)), workers=8, **kw)
        assert a.mean == b.mean and a.stderr == b.stderr

    def test_overflow_aborts_with_path(self):
        with pytest.raises(KernelOverflowError) as info:
            estimate_kernel(0.0, 0.0, 1.0, Z1, ConstantPotential(-1000.0), 4, 10, seed=77)
        assert info.value.path_index == 0 and info.value.seed == 77

    def test_heavy_tail_flag(self):
        w = np.ones(10_000)
        w[0] = 1e6
        assert ke._heavy_tail(w)
        assert not ke._heavy_tail(np.ones(10_000))

    @pytest.mark.parametrize("t,n", [(0.0, 10), (-1.0, 10), (1.0, 1)])
    def test_invalid(self, t, n):
        with pytest.raises(ValueError):
            estimate_kernel(0.0, 0.0, t, Z1, ZeroPotential(), 4, n)

    def test_record_fields(self):
        rec = estimate_kernel(0.0, 1.0, 1.0, Z1, ZeroPotential(), 4, 10).to_record()
        assert {"mean_re", "mean_im", "stderr", "n_samples", "n_steps", "seed"} <= set(rec)

    def test_grid_refinement(self):
        # m-step paths are the even nodes of 2m-step paths, so both share randomness
        gaps = []
        for m in (64, 256, 1024):
            fine = sample_bridges(13, 0.0, 0.0, TimeGrid(1.0, 2 * m), 5000)
            coarse = BridgeBatch(fine.start, fine.end, TimeGrid(1.0, m), fine.positions[:, ::2], 0)
            d = path_weights(fine, Z1, HARMONIC) - path_weights(coarse, Z1, HARMONIC)
            gaps.append((abs(d.mean()), d.std(ddof=1) / math.sqrt(d.size)))
        for (g0, e0), (g1, e1) in zip(gaps, gaps[1:]):
            assert g1 < g0 + 3 * math.hypot(e0, e1)
        assert gaps[-1][0] < gaps[0][0] / 4


class TestHermiticity:
    def test_zero_field_exact(self):
        r = hermiticity_residual(0.0, 1.0, 1.0, Z1, HARMONIC, 32, 2000)
        assert r.residual <= 1e-15 * abs(r.forward.mean)

    def test_constant_field(self):
        r = hermiticity_residual([0.0, 0.0], [1.0, 0.5], 1.0, FIELD, ZeroPotential(), 64, 20_000, seed=4)
        assert r.passed
        assert abs(r.forward.mean.imag) > 0

    def test_diagonal_real(self):
        est = estimate_kernel([0.3, 0.3], [0.3, 0.3], 1.0, FIELD, ZeroPotential(), 64, 20_000, seed=6)
        assert abs(est.mean.imag) <= 3 * est.stderr


class TestSemigroup:
    def test_free(self):
        r = semigroup_residual(0.0, 0.0, 0.5, 0.5, Z1, ZeroPotential(), quad_box=6.0, quad_n=41, n_samples=10)
        assert r.residual < 1e-3
        assert r.passed

    def test_constant_shift_keeps_ratio(self):
        kw = dict(quad_n=21, n_steps=16, n_samples=500, seed=2)
        a = semigroup_residual(0.0, 0.3, 0.5, 0.5, Z1, HARMONIC, **kw)
        b = semigroup_residual(0.0, 0.3, 0.5, 0.5, Z1, SumPotential((HARMONIC, ConstantPotential(0.4))), **kw)
        assert b.residual / abs(b.lhs) == pytest.approx(a.residual / abs(a.lhs), rel=1e-8)

    def test_harmonic(self):
        r = semigroup_residual(0.0, 0.0, 0.5, 0.5, Z1, HARMONIC, quad_n=41, n_steps=64, n_samples=4000, seed=3)
        assert r.passed
        assert abs(r.lhs - mehler_kernel(0, 0, 1)) <= 3 * r.mc_error + 1e-3

    def test_box_too_small(self):
        with pytest.raises(QuadratureBoxError):
            semigroup_residual(0.0, 0.0, 0.5, 0.5, Z1, ZeroPotential(), quad_box=0.5, quad_n=11, n_samples=10)

    def test_even_nodes_rejected(self):
        with pytest.raises(ValueError):
            semigroup_residual(0.0, 0.0, 0.5, 0.5, Z1, ZeroPotential(), quad_n=40, n_samples=10)


class TestBoundEnvelope:
    POINTS = [((r,), (r,)) for r in np.linspace(-6, 6, 13)] + [((0.0,), (2.0,)), ((1.0,), (-1.0,))]

    def test_free_maximum(self):
        r = bound_envelope(1.0, 0.1, Z1, ZeroPotential(), self.POINTS, n_steps=4, n_samples=10)
        assert r.max_observed == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-12)
        assert r.samples[r.argmax][0] == (0.0,)

    def test_monotone_in_delta(self):
        kw = dict(n_steps=16, n_samples=1000, seed=1)
        V = PowerLawPotential(-1, 1.5, 0.01)
        a = bound_envelope(1.0, 0.05, Z1, V, self.POINTS, **kw)
        b = bound_envelope(1.0, 0.2, Z1, V, self.POINTS, **kw)
        assert b.max_observed <= a.max_observed
        assert all(sb[2] <= sa[2] for sa, sb in zip(a.samples, b.samples))

    def test_subquadratic_interior_max(self):
        r = bound_envelope(1.0, 0.05, Z1, PowerLawPotential(-1, 1.5, 0.01), self.POINTS, n_steps=32, n_samples=4000)
        assert math.isfinite(r.max_observed)
        assert r.bounded
        assert abs(r.samples[r.argmax][0][0]) < 6

    def test_invalid_delta(self):
        with pytest.raises(ValueError):
            bound_envelope(1.0, 0.0, Z1, ZeroPotential(), self.POINTS)


class TestDiamagnetic:
    def test_zero_field_equal(self):
        r = diamagnetic_check([0.0, 0.0], [0.5, 0.0], 1.0, Z2, HarmonicPotential((1.0, 1.0)), 32, 2000)
        assert r.lhs == pytest.approx(r.rhs, rel=1e-14)

    def test_constant_field_strict(self):
        r = diamagnetic_check([0.0, 0.0], [0.0, 0.0], 1.0, FIELD, ZeroPotential(), 64, 20_000)
        assert r.passed and r.strict

    def test_constant_shift(self):
        kw = dict(n_steps=32, n_samples=5000, seed=3)
        a = diamagnetic_check([0.0, 0.0], [0.0, 0.0], 1.0, FIELD, ZeroPotential(), **kw)
        b = diamagnetic_check([0.0, 0.0], [0.0, 0.0], 1.0, FIELD, ConstantPotential(0.7), **kw)
        assert b.lhs / b.rhs == pytest.approx(a.lhs / a.rhs, rel=1e-12)
        assert (a.passed, a.strict) == (b.passed, b.strict)


class TestTruncation:
    V = SumPotential((HARMONIC, PowerLawPotential(-1, 1.9, 0.05)))

    def test_radius_beyond_paths_is_exact(self):
        r = truncation_convergence(0.0, 0.0, 1.0, Z1, self.V, [100.0, 1000.0], n_steps=32, n_samples=2000)
        assert r.error == (0.0, 0.0)
        assert r.slope is None and r.status == "rate indistinguishable from noise"

    def test_pure_v1(self):
        r = truncation_convergence(0.0, 0.0, 4.0, Z1, HARMONIC, [1.5, 2.0, 4.0], n_steps=32, n_samples=2000)
        assert all(e == 0.0 for e in r.error)

    def test_v2_free_spec_bit_identical(self):
        a = estimate_kernel(0.0, 0.5, 1.0, Z1, HARMONIC, 32, 1000, seed=8)
        for R in (1.5, 3.0):
            b = estimate_kernel(0.0, 0.5, 1.0, Z1, truncate(HARMONIC, R), 32, 1000, seed=8)
            assert a.mean == b.mean

    def test_error_vanishes_faster_than_inverse_square_eventually(self):
        r = truncation_convergence(0.0, 0.0, 4.0, Z1, self.V, [1.5, 2.0, 3.0, 4.0], n_steps=64, n_samples=40_000)
        scaled = [e * R**2 for e, R in zip(r.error, r.R)]
        assert scaled[-1] < scaled[0]
        assert all(b <= a for a, b in zip(r.error, r.error[1:]))

    @pytest.mark.parametrize("R", [[0.5, 2.0], [2.0, 2.0], [4.0, 2.0], []])
    def test_invalid_radii(self, R):
        with pytest.raises(ValueError):
            truncation_convergence(0.0, 0.0, 1.0, Z1, self.V, R, n_samples=10)
