from __future__ import annotations

import math

import numpy as np
import pytest

from bridgekernel.closed_forms import free_kernel, mehler_kernel
from bridgekernel.potentials import ConstantPotential, HarmonicPotential, ZeroVectorPotential, poincare_gauge
from bridgekernel.random_fields import GaussianFieldSpec
from bridgekernel.spectral_oracle import (
    MAX_SITES,
    EnergySet,
    bounded_function_kernel,
    build,
    decompose,
    function_kernel,
    gauge_spectrum_shift,
    grid_oracle,
    heat_kernel,
    hs_norm_check,
    ids_two_ways,
    initial_value_ratio,
    initial_value_residual,
    laplace_consistency,
    plaquette_phase,
    projection_diagonal_bounds,
    projection_kernel,
    trace_formula_check,
)

HARMONIC = HarmonicPotential((1.0,))


def field(b):
    return poincare_gauge([[0.0, b], [-b, 0.0]])


@pytest.fixture(scope="module")
def harmonic_dec():
    H = build(8.0, 64, None, HARMONIC)
    return H, decompose(H)


@pytest.fixture(scope="module")
def magnetic():
    H = build(6.0, 12, field(0.7), HarmonicPotential((0.5, 0.5)))
    return H, decompose(H)


class TestBuild:
    def test_unit_spacing_tridiagonal(self):
        M = build(5.0, 5).matrix
        expected = np.diag(np.ones(5)) - 0.5 * (np.eye(5, k=1) + np.eye(5, k=-1))
        assert np.array_equal(M, expected)

    def test_zero_field_is_real(self):
        H = build(4.0, 6, ZeroVectorPotential(2), ConstantPotential(0.3))
        assert H.is_real and H.matrix.dtype == float
        assert np.allclose(np.diag(H.matrix), 2 / (4 / 6) ** 2 + 0.3)

    def test_hermitian(self, magnetic):
        M = magnetic[0].matrix
        assert not magnetic[0].is_real
        assert np.array_equal(M, M.conj().T)

    @pytest.mark.parametrize("b,h", [(0.7, 0.5), (2.0, 0.25), (-1.3, 1.0)])
    def test_plaquette_flux(self, b, h):
        H = build(8 * h, 8, field(b))
        assert plaquette_phase(H, 0) == pytest.approx(np.exp(-1j * b * h * h), abs=1e-13)
        assert plaquette_phase(H, 27) == pytest.approx(np.exp(-1j * b * h * h), abs=1e-13)

    def test_plaquette_at_edge(self):
        with pytest.raises(ValueError):
            plaquette_phase(build(4.0, 4, field(1.0)), 15)

    def test_site_cap(self):
        n = int(round(MAX_SITES ** (1 / 2))) + 1
        with pytest.raises(ValueError, match="exceed"):
            build(10.0, n, ZeroVectorPotential(2))

    def test_non_finite_potential(self):
        V = np.zeros(5)
        V[2] = np.inf
        with pytest.raises(ValueError, match="site 2"):
            build(5.0, 5, V=V)

    def test_wrong_value_count(self):
        with pytest.raises(ValueError):
            build(5.0, 5, V=np.zeros(4))

    def test_site_lookup(self):
        H = build(4.0, 5)
        assert H.site_index(0.0) == 2
        with pytest.raises(ValueError):
            H.site_index(0.1)

    def test_dump(self):
        H = build(2.0, 2, field(1.0), ConstantPotential(0.5))
        lines = [ln for ln in H.dump_text().splitlines() if not ln.startswith("#")]
        assert len(lines) == H.n_sites + H.link_src.size
        first = lines[0].split()
        assert first[0] == "0" and [float(v) for v in first[1:]] == [-0.5, -0.5, 0.5]
        link = lines[H.n_sites].split()
        assert len(link) == 5 and abs(complex(float(link[3]), float(link[4]))) == pytest.approx(1.0)


class TestDecomposition:
    def test_eigen_residual(self, magnetic):
        H, dec = magnetic
        U = dec.eigenvectors * math.sqrt(dec.cell_volume)
        assert np.max(np.abs(H.matrix @ U - U * dec.eigenvalues)) < 1e-10

    def test_completeness(self, harmonic_dec):
        _, dec = harmonic_dec
        K = dec.kernel_matrix(np.ones_like)
        assert np.allclose(K, np.eye(64) / dec.cell_volume, atol=1e-10)

    def test_heat_kernel_symmetric(self, harmonic_dec):
        H, dec = harmonic_dec
        assert heat_kernel(dec, 1.0, 3, 40) == pytest.approx(heat_kernel(dec, 1.0, 40, 3), rel=1e-12)

    def test_magnetic_hermitian_kernel(self, magnetic):
        _, dec = magnetic
        assert heat_kernel(dec, 0.5, 5, 70) == pytest.approx(np.conj(heat_kernel(dec, 0.5, 70, 5)), rel=1e-12)

    def test_bad_site(self, harmonic_dec):
        with pytest.raises(IndexError):
            heat_kernel(harmonic_dec[1], 1.0, 0, 64)

    def test_bad_time(self, harmonic_dec):
        with pytest.raises(ValueError):
            heat_kernel(harmonic_dec[1], 0.0, 0, 0)


class TestContinuumOracle:
    def test_free(self):
        o = grid_oracle(0.0, 0.0, 1.0, None, None, 16.0, 255)
        assert abs(o.value - free_kernel(0, 0, 1)) <= o.budget + 1e-12
        assert abs(o.value - 0.3989422804014327) <= 0.02 * 0.3989422804014327

    def test_mehler(self):
        o = grid_oracle(0.0, 0.0, 1.0, None, HARMONIC, 16.0, 255)
        assert abs(o.value - mehler_kernel(0, 0, 1)) <= 0.01 * mehler_kernel(0, 0, 1)
        assert abs(o.value - mehler_kernel(0, 0, 1)) <= o.budget

    def test_non_site_point(self):
        with pytest.raises(ValueError):
            grid_oracle(0.0, 0.0, 1.0, None, None, 16.0, 64)


class TestProjection:
    def test_below_ground_state(self, harmonic_dec):
        _, dec = harmonic_dec
        I = EnergySet.below(dec.eigenvalues[0] - 1e-9)
        assert projection_kernel(dec, I, 30, 30) == 0

    def test_ground_state_only(self, harmonic_dec):
        _, dec = harmonic_dec
        I = EnergySet.interval(dec.eigenvalues[0], dec.eigenvalues[1])
        phi = dec.eigenvectors[:, 0]
        assert projection_kernel(dec, I, 31, 31).real == pytest.approx(abs(phi[31]) ** 2, rel=1e-12)

    def test_half_open(self, harmonic_dec):
        _, dec = harmonic_dec
        e1 = dec.eigenvalues[1]
        assert np.array_equal(EnergySet.interval(e1, e1 + 1e-9).indicator(dec.eigenvalues)[:3], [0, 1, 0])
        assert EnergySet.below(e1).indicator(dec.eigenvalues)[1] == 0

    def test_unbounded(self, harmonic_dec):
        with pytest.raises(ValueError):
            projection_kernel(harmonic_dec[1], EnergySet.interval(0.0, math.inf), 0, 0)

    @pytest.mark.parametrize("cut,t", [(0.0, 1.0), (1.5, 0.5), (3.0, 2.0), (100.0, 0.1)])
    def test_diagonal_bounds(self, harmonic_dec, cut, t):
        assert projection_diagonal_bounds(harmonic_dec[1], EnergySet.below(cut), t).passed

    def test_diagonal_bounds_magnetic(self, magnetic):
        r = projection_diagonal_bounds(magnetic[1], EnergySet.interval(0.5, 2.5), 0.7)
        assert r.passed and r.min_p >= 0


class TestFunctionalCalculus:
    def test_t_independence(self, harmonic_dec):
        r = bounded_function_kernel(harmonic_dec[1], lambda E: np.exp(-E), 30, 35, (0.05, 0.2, 0.45), tau=1.0)
        assert r.max_rel_deviation < 1e-9

    def test_projection_as_function(self, magnetic):
        _, dec = magnetic
        I = EnergySet.below(2.0)
        r = bounded_function_kernel(dec, I.indicator, 60, 61, (0.1, 0.3), tau=1.0)
        assert r.max_rel_deviation < 1e-9
        assert r.direct == pytest.approx(projection_kernel(dec, I, 60, 61), rel=1e-12)

    def test_t_check_range(self, harmonic_dec):
        with pytest.raises(ValueError):
            bounded_function_kernel(harmonic_dec[1], np.ones_like, 0, 0, (0.6,), tau=1.0)

    def test_function_kernel_heat(self, harmonic_dec):
        _, dec = harmonic_dec
        assert function_kernel(dec, lambda E: np.exp(-E), 2, 9) == heat_kernel(dec, 1.0, 2, 9)


class TestTraces:
    def test_zero_weight(self, harmonic_dec):
        r = trace_formula_check(harmonic_dec[1], EnergySet.below(5.0), np.zeros(64))
        assert r.lhs == 0 and r.rhs == 0 and r.residual == 0

    def test_unit_weight_counts_states(self, harmonic_dec):
        _, dec = harmonic_dec
        I = EnergySet.below(5.0)
        r = trace_formula_check(dec, I, np.ones(64))
        n = int(np.sum(dec.eigenvalues < 5.0))
        assert r.lhs == pytest.approx(n, rel=1e-12) and r.rhs == pytest.approx(n, rel=1e-12)

    def test_random_weight(self, magnetic, rng):
        _, dec = magnetic
        w = rng.normal(size=144) + 1j * rng.normal(size=144)
        assert trace_formula_check(dec, EnergySet.interval(0.5, 3.0), w).residual < 1e-11

    def test_non_finite_weight(self, harmonic_dec):
        w = np.ones(64)
        w[3] = np.nan
        with pytest.raises(ValueError):
            trace_formula_check(harmonic_dec[1], EnergySet.below(1.0), w)

    @pytest.mark.parametrize("F", [lambda E: np.exp(-E), lambda E: 1 / (1 + E**2), lambda E: (E < 2).astype(float)])
    def test_hs_norm(self, magnetic, rng, F):
        _, dec = magnetic
        w = np.exp(-np.sum(magnetic[0].sites ** 2, axis=1))
        assert hs_norm_check(dec, F, w).residual < 1e-11

    def test_hs_unit_weight_identity(self, harmonic_dec):
        _, dec = harmonic_dec
        r = hs_norm_check(dec, np.ones_like, np.ones(64))
        assert r.lhs == pytest.approx(64, rel=1e-12)


class TestInitialValue:
    def test_eigenvector_scalar_error(self, harmonic_dec):
        H, dec = harmonic_dec
        n, t, dt = 3, 1.0, 0.1
        E = dec.eigenvalues[n]
        expected = abs((math.exp(-(t + dt) * E) - math.exp(-(t - dt) * E)) / (2 * dt) + E * math.exp(-t * E))
        assert initial_value_residual(H, dec, dec.eigenvectors[:, n], t, dt) == pytest.approx(expected, rel=1e-8)

    def test_quarter_ratio(self, magnetic):
        H, dec = magnetic
        phi0 = np.exp(-np.sum((H.sites - 0.5) ** 2, axis=1))
        assert initial_value_ratio(H, dec, phi0, 1.0, 0.1) == pytest.approx(0.25, abs=0.01)

    def test_decays_at_large_time(self, harmonic_dec):
        H, dec = harmonic_dec
        phi0 = np.exp(-H.sites[:, 0] ** 2)
        assert initial_value_residual(H, dec, phi0, 50.0, 1.0) < 1e-10

    def test_dt_limit(self, harmonic_dec):
        H, dec = harmonic_dec
        with pytest.raises(ValueError):
            initial_value_residual(H, dec, np.ones(64), 1.0, 0.2)


class TestGauge:
    def test_spectrum_invariant(self, magnetic, rng):
        H, _ = magnetic
        assert gauge_spectrum_shift(H, rng.uniform(0, 2 * np.pi, H.n_sites)) < 1e-10

    def test_kernel_covariance(self, magnetic, rng):
        H, dec = magnetic
        chi = rng.uniform(0, 2 * np.pi, H.n_sites)
        dec2 = decompose(H.with_gauge(chi))
        k = heat_kernel(dec, 0.5, 20, 50)
        k2 = heat_kernel(dec2, 0.5, 20, 50)
        assert abs(k2) == pytest.approx(abs(k), rel=1e-10)
        ratio = k2 / k
        assert ratio == pytest.approx(np.exp(1j * (chi[50] - chi[20])), rel=1e-9) or ratio == pytest.approx(
            np.exp(-1j * (chi[50] - chi[20])), rel=1e-9
        )

    def test_plaquette_gauge_invariant(self, magnetic, rng):
        H, _ = magnetic
        chi = rng.uniform(0, 2 * np.pi, H.n_sites)
        assert plaquette_phase(H.with_gauge(chi), 13) == pytest.approx(plaquette_phase(H, 13), abs=1e-13)


class TestIDS:
    E = np.linspace(-1, 12, 53)

    def test_zero_variance_identical(self):
        spec = GaussianFieldSpec.squared_exponential(0.0, 1.0)
        r = ids_two_ways(None, spec, 16.0, 64, 4.0, self.E, 2)
        assert np.allclose(r.ids_trace.values, r.ids_diag.values, atol=1e-13)
        assert r.max_gap < 1e-13 and r.passed
        assert np.all(r.ids_trace.stderr == 0)

    def test_random_field(self):
        spec = GaussianFieldSpec.squared_exponential(0.5, 1.0)
        r = ids_two_ways(None, spec, 16.0, 64, 4.0, self.E, 10, seed=1, window=(-1.0, 8.0))
        assert r.passed
        assert np.all(np.diff(r.ids_trace.values) >= 0) and np.all(np.diff(r.ids_diag.values) >= 0)
        assert r.ids_trace.values[0] == 0.0
        assert len(r.rows()) == self.E.size
        assert any("Dirichlet" in n for n in r.notes)

    def test_magnetic_two_dim(self):
        spec = GaussianFieldSpec.squared_exponential(0.2, 1.0, dim=2)
        r = ids_two_ways(field(1.0), spec, 8.0, 12, 2.0, np.linspace(0, 6, 13), 3)
        assert r.max_gap < 1e-12 and r.passed

    def test_window_too_wide(self):
        with pytest.raises(ValueError):
            ids_two_ways(None, GaussianFieldSpec.squared_exponential(0.1, 1.0), 16.0, 32, 5.0, self.E, 2)

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            ids_two_ways(None, GaussianFieldSpec.squared_exponential(0.1, 1.0), 16.0, 32, 2.0, [1.0, 0.0], 2)


class TestLaplace:
    def test_zero_variance(self):
        r = laplace_consistency(GaussianFieldSpec.squared_exponential(0.0, 1.0), 16.0, 64, 4.0, (0.5, 1.0, 2.0), 2)
        assert r.passed
        for row in r.rows:
            assert row.stat_error == 0

    def test_random_field(self):
        r = laplace_consistency(GaussianFieldSpec.squared_exponential(0.5, 1.0), 16.0, 64, 4.0, (0.5, 1.0, 2.0), 8, seed=2)
        assert r.passed

    def test_grid_must_bracket(self):
        with pytest.raises(ValueError):
            laplace_consistency(
                GaussianFieldSpec.squared_exponential(0.1, 1.0), 16.0, 32, 2.0, (1.0,), 2, E_grid=np.linspace(0, 1, 5)
            )
