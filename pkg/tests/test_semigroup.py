import numpy as np
import pytest
from scipy.linalg import expm

from kinspec.discretize import assemble_Bhat
from kinspec.errors import PreconditionError
from kinspec.semigroup import (
    Propagator,
    build_y_quadrature,
    contour_semigroup,
    contraction_defect,
    decay_probe,
    duhamel_defect,
    evolve_A,
    fit_decay,
    generator_slope,
    growth_cap_check,
    lemma_constant,
    measure_lemma_constant,
    rho_alpha,
    semigroup_law_defect,
    weighted_A_decay_check,
    xspace_decay,
)

Y = np.array([0.05, 0.0, 0.0])


@pytest.fixture(scope="module")
def generator():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((6, 6))
    return -(a @ a.T) / 6.0 - 0.1 * np.eye(6) + 0.5j * np.diag(np.arange(6.0))


@pytest.fixture(scope="module")
def prop8(ops8):
    return Propagator(assemble_Bhat(ops8, Y))


@pytest.fixture(scope="module")
def u8(ops8):
    grid = ops8.grid
    u = np.exp(-0.3 * grid.speed**2) * (1.0 + 0.4 * grid.nodes[:, 0] + 0.1 * grid.nodes[:, 2] ** 2)
    return u / grid.norm(u)


class TestPropagator:
    def test_matches_expm(self, generator):
        prop = Propagator(generator)
        u = np.arange(1.0, 7.0)
        assert prop.method == "eig"
        assert np.allclose(prop.apply(u, 1.3), expm(1.3 * generator) @ u, rtol=1e-10, atol=1e-12)

    def test_apply_columns(self, generator):
        prop = Propagator(generator)
        u = np.eye(6)[:, :2]
        assert np.allclose(prop.apply(u, 0.7), expm(0.7 * generator)[:, :2], atol=1e-12)

    def test_time_zero_is_identity(self, generator):
        prop = Propagator(generator)
        u = np.ones(6)
        out = prop.evolve(u, np.array([0.0, 0.5]))
        assert np.array_equal(out[0], u.astype(complex))
        assert np.array_equal(prop.apply(u, 0.0), u.astype(complex))

    def test_expm_fallback(self, generator):
        prop = Propagator(generator, cond_max=0.5)
        u = np.ones(6)
        assert prop.method == "expm"
        out = prop.evolve(u, np.array([0.0, 0.5, 1.0]))
        assert np.allclose(out[2], expm(generator) @ u, atol=1e-12)

    def test_times_must_ascend(self, generator):
        with pytest.raises(PreconditionError):
            Propagator(generator).evolve(np.ones(6), np.array([1.0, 0.5]))

    def test_generator_slope_is_first_order(self, generator):
        slope, _ = generator_slope(Propagator(generator), np.ones(6), np.geomspace(1e-4, 1e-2, 5))
        assert slope == pytest.approx(1.0, abs=0.05)

    def test_contour_reconstruction(self, generator):
        prop = Propagator(generator)
        u = np.ones(6)
        rebuilt = contour_semigroup(prop, u, 1.0, a=0.5, cutoff=2000.0)
        exact = prop.apply(u, 1.0)
        assert np.linalg.norm(rebuilt - exact) <= 1e-2 * np.linalg.norm(exact)

    def test_contour_needs_positive_time(self, generator):
        with pytest.raises(PreconditionError):
            contour_semigroup(Propagator(generator), np.ones(6), 0.0)


class TestWeights:
    def test_rho_alpha(self):
        assert rho_alpha(np.array([0.5, 0.0, 0.0]), 1.0) == pytest.approx(4.0)
        assert rho_alpha(0.1, 0.5) == pytest.approx(0.1**-1.0 * np.log(10.0 + np.e))
        assert rho_alpha(2.0, 0.5, r3=1.0) == 0.0
        assert rho_alpha(0.0, 0.5) == float("inf")

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 2.0])
    def test_lemma_constant(self, alpha):
        assert measure_lemma_constant(0.8, alpha) == pytest.approx(lemma_constant(0.8, alpha), rel=1e-6)

    def test_fit_decay_recovers_exponent(self):
        t = np.geomspace(1.0, 1e3, 30)
        fit = fit_decay(t, 2.0 * t**-0.75, "L2_0")
        assert fit.exponent == pytest.approx(0.75, rel=1e-10)
        assert fit.window[1] == pytest.approx(1e3)
        assert fit.residual < 1e-10


class TestLinearSemigroup:
    def test_contraction(self, ops8, prop8, u8):
        vals = prop8.evolve(u8, np.linspace(0.0, 20.0, 21))
        assert contraction_defect(ops8, vals) <= 1e-8

    def test_semigroup_law(self, prop8, u8):
        assert semigroup_law_defect(prop8, u8, 0.7, 1.3) < 1e-10

    def test_duhamel(self, ops8, prop8, u8):
        assert duhamel_defect(ops8, Y, u8, 1.0, prop8) < 1e-5

    def test_growth_cap(self, ops8, prop8):
        assert growth_cap_check(ops8, prop8, 1.0, np.array([0.5, 1.0])).passed

    def test_evolve_A_is_pointwise(self, ops8, u8):
        vals = evolve_A(ops8.params, ops8.grid, Y, u8, np.array([0.0, 2.0]), ops8.nu)
        assert np.allclose(vals[0], u8)
        assert np.allclose(np.abs(vals[1]), np.abs(u8) * np.exp(-2.0 * ops8.nu))

    @pytest.mark.parametrize("alpha", [0.5, 1.0])
    def test_weighted_A_decay(self, ops8, u8, alpha):
        cert = weighted_A_decay_check(ops8, Y, alpha, 0.0, u8, np.geomspace(1e-2, 1e3, 40))
        assert cert.passed

    def test_decay_probe(self, ops8, prop8, u8):
        times = np.concatenate([[0.0], np.geomspace(1e-2, 1e2, 20)])
        probe, fit = decay_probe(ops8, Y, 0.5, 0.0, u8, times, prop8)
        assert probe.ratios.shape == times.shape
        assert not probe.resonance
        assert np.all(np.diff(probe.norms) <= 1e-12)
        assert np.isfinite(fit.exponent)

    def test_resonance_at_zero_frequency(self, ops8):
        root = ops8.basis.columns[:, 0]
        probe, _ = decay_probe(ops8, np.zeros(3), 0.5, 0.0, root, np.array([0.0, 1.0, 10.0]))
        assert probe.resonance
        assert probe.rho == 0.0
        assert probe.norms[-1] == pytest.approx(probe.norms[0], rel=1e-8)


class TestFrequencyQuadrature:
    def test_even_count_required(self):
        with pytest.raises(PreconditionError):
            build_y_quadrature(3, 40)

    def test_ball_volume(self):
        yq = build_y_quadrature(3, 201, 1e-4, 2.0, 6)
        assert yq.weights.sum() == pytest.approx(4.0 * np.pi / 3.0 * (8.0 - 1e-12), rel=1e-2)
        assert yq.points.shape == (201 * 3, 3)

    def test_coarsened_quadrature(self):
        yq = build_y_quadrature(3, 201, 1e-4, 2.0, 6)
        coarse = yq.coarsened()
        assert len(coarse.radii) == 101
        assert coarse.weights.sum() == pytest.approx(yq.weights.sum(), rel=2e-2)


class TestWholeSpace:
    def test_synthesis(self, ops6):
        grid = ops6.grid
        u = np.exp(-0.3 * grid.speed**2) * (1.0 + 0.4 * grid.nodes[:, 0])
        yq = build_y_quadrature(3, 5, 1e-2, 1.0, 6)
        times = np.array([0.0, 0.5, 1.0, 2.0, 4.0])

        def u_hat(y):
            return np.exp(-(y @ y)) * u

        result = xspace_decay(ops6, 0.75, 0.0, u_hat, yq, times, threads=1, rtol=1.0)
        mass = np.sum(yq.weights * np.exp(-2.0 * np.sum(yq.points**2, axis=1)))
        expected = np.sqrt(mass) * grid.norm_many(u[None, :], 0.0)[0]
        assert result.norms[0] == pytest.approx(expected, rel=1e-10)
        assert np.all(np.diff(result.norms) <= 1e-9 * result.norms[0])
        assert result.coarse_norms.shape == times.shape
        assert np.isnan(result.running_exponent[0])
