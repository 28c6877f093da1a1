import numpy as np
import pytest
from pydantic import ValidationError

from kinspec.errors import DivergenceError, NonContractionError, PreconditionError
from kinspec.kernel import KernelParams
from kinspec.nonlinear import (
    LINEARIZATION_TOL,
    CollisionIntegrator,
    DuhamelSolver,
    SolverConfig,
    duhamel_step,
    estimate_smallness,
    gamma_bilinear,
    gamma_bound_check,
    initial_state,
    kernel_state,
    lattice_modes,
    lemma_convolution_check,
    linearization_check,
    smooth_samples,
    solve_cauchy,
    trajectory_rows,
)

SHORT = dict(t_final=5.0, steps=6, first_step=0.1)


@pytest.fixture(scope="module")
def integrator(grid6, params):
    return CollisionIntegrator(grid6, params, sphere_points=6)


@pytest.fixture(scope="module")
def samples(grid6):
    return smooth_samples(grid6, 4, seed=11)


@pytest.fixture(scope="module")
def linear_solver(ops6):
    return DuhamelSolver(ops6, SolverConfig(nonlinear=False, **SHORT))


@pytest.fixture(scope="module")
def nonlinear_solver(ops6):
    return DuhamelSolver(ops6, SolverConfig(**SHORT))


class TestCollisionIntegrator:
    def test_symmetric(self, integrator, samples):
        f, g = samples[0], samples[1]
        assert np.allclose(integrator(f, g), integrator(g, f), rtol=0.0, atol=1e-15)

    def test_bilinear(self, integrator, samples):
        f, g, h = samples[0], samples[1], samples[2]
        combined = integrator(2.0 * f + h, g)
        separate = 2.0 * integrator(f, g) + integrator(h, g)
        assert np.allclose(combined, separate, rtol=1e-10, atol=1e-13)

    def test_columns_match_single_evaluations(self, integrator, samples):
        stacked = integrator(samples[:3].T, samples[1:].T)
        for k in range(3):
            assert np.allclose(stacked[:, k], integrator(samples[k], samples[k + 1]), rtol=1e-12, atol=1e-13)

    def test_one_off_evaluation(self, integrator, grid6, params, samples):
        f, g = samples[0], samples[3]
        assert np.allclose(gamma_bilinear(grid6, params, f, g, sphere_points=6), integrator(f, g), rtol=0.0, atol=1e-15)

    def test_conservative_output(self, integrator, samples):
        assert integrator.conservation_defect(samples.T) < 1e-12

    def test_raw_defect_recorded(self, grid6, params, samples):
        raw = CollisionIntegrator(grid6, params, sphere_points=6, conservative=False)
        out = raw(samples[0], samples[0])
        coefs = raw.basis.coefficients(out)
        assert raw.last_defect == pytest.approx(np.max(np.abs(coefs)) / grid6.norm(out))

    def test_leakage_is_a_fraction(self, integrator):
        assert 0.0 <= integrator.leakage < 1.0

    def test_shape_mismatch(self, integrator, grid6):
        with pytest.raises(PreconditionError):
            integrator(np.ones(grid6.n), np.ones(grid6.n - 1))

    def test_non_finite_input(self, integrator, grid6):
        f = np.ones(grid6.n)
        f[3] = np.nan
        with pytest.raises(PreconditionError, match="finite"):
            integrator(f, np.ones(grid6.n))

    def test_dimension_mismatch(self, grid6):
        with pytest.raises(PreconditionError):
            CollisionIntegrator(grid6, KernelParams(d=2, gamma=0.5), sphere_points=6)


class TestGammaProperties:
    def test_linearization_slope(self, integrator, samples):
        report, checks = linearization_check(integrator, samples[2])
        assert report.slope == pytest.approx(1.0, abs=0.05)
        assert all(c.passed for c in checks)

    @pytest.mark.slow
    def test_linearization_against_L(self, grid6, params, samples, ops6):
        fine = CollisionIntegrator(grid6, params, sphere_points=26)
        report, checks = linearization_check(fine, samples[2], ops=ops6)
        assert {c.tag for c in checks} == {"nonlinear.linearization_slope", "nonlinear.linearization_vs_L"}
        assert 0.0 < report.l_discrepancy <= LINEARIZATION_TOL
        assert all(c.passed for c in checks), [c for c in checks if not c.passed]

    def test_linearization_tolerance_is_declared(self, integrator, samples, ops6):
        report, checks = linearization_check(integrator, samples[2], ops=ops6, l_tolerance=1e-12)
        cert = next(c for c in checks if c.tag == "nonlinear.linearization_vs_L")
        assert cert.bound == 1e-12
        assert cert.measured == report.l_discrepancy
        assert not cert.passed

    def test_bound_check(self, integrator):
        report, checks = gamma_bound_check(integrator, beta=2.0, samples=10, seed=1)
        assert len(report.ratios) == 10
        assert report.median > 0.0
        assert report.spread < 0.2
        assert all(c.passed for c in checks)

    def test_bound_check_needs_beta_above_half_dimension(self, integrator):
        with pytest.raises(PreconditionError):
            gamma_bound_check(integrator, beta=1.5)

    def test_convolution_lemma(self):
        report, cert = lemma_convolution_check(0.5, 1.5)
        assert cert.passed
        assert cert.tag == "nonlinear.convolution[0.5,1.5]"
        assert report.constant > 0.0

    @pytest.mark.parametrize("alpha, alpha0", [(1.0, 1.5), (0.5, 1.0), (-0.1, 2.0)])
    def test_convolution_lemma_range(self, alpha, alpha0):
        with pytest.raises(PreconditionError):
            lemma_convolution_check(alpha, alpha0)


class TestSolverConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        times = cfg.times()
        assert times[0] == 0.0
        assert len(times) == cfg.steps + 1
        assert times[-1] == pytest.approx(cfg.t_final)

    def test_uniform_times(self):
        times = SolverConfig(spacing="uniform", t_final=2.0, steps=4).times()
        assert np.allclose(times, [0.0, 0.5, 1.0, 1.5, 2.0])

    @pytest.mark.parametrize(
        "update, message",
        [
            ({"alpha": 1.0}, "alpha must lie"),
            ({"beta": 1.5}, "beta must exceed"),
            ({"l": 1.0}, "l must exceed"),
            ({"first_step": 60.0}, "first_step"),
        ],
    )
    def test_rejects(self, update, message):
        with pytest.raises(ValidationError, match=message):
            SolverConfig(**update)


class TestTorusState:
    def test_lattice(self):
        modes = lattice_modes(3, 1)
        assert modes.shape == (27, 3)
        assert np.array_equal(modes[0], [0, 0, 0])
        assert {tuple(-k) for k in modes} == {tuple(k) for k in modes}

    def test_initial_state_is_real(self, grid6):
        state = initial_state(grid6, SolverConfig(), 1e-3)
        assert state.reality_defect() == 0.0
        assert np.count_nonzero(np.any(state.coeffs != 0.0, axis=1)) == 6

    def test_physical_samples(self, grid6, linear_solver):
        state = initial_state(grid6, linear_solver.config, 1e-3)
        phys = linear_solver.to_physical(state.coeffs)
        phi = state.coeffs[np.flatnonzero(np.any(state.coeffs != 0.0, axis=1))[0]].real * 2.0
        assert phys.shape == (27, grid6.n)
        assert np.allclose(phys[0], 3.0 * phi, atol=1e-16)

    def test_negation_pairs_share_propagators(self, linear_solver):
        assert len(linear_solver._owned) == 14


class TestCauchyProblem:
    def test_linear_run_matches_propagation(self, ops6, linear_solver):
        cfg = linear_solver.config
        f0 = initial_state(ops6.grid, cfg, 1e-3)
        result = solve_cauchy(ops6, f0, cfg, solver=linear_solver)
        expected = linear_solver.linear_trajectory(f0.coeffs.astype(complex), cfg.times())
        assert result.iterations == 1
        assert np.allclose(result.trajectory, expected, atol=1e-15)
        assert result.residual <= 2.0 * cfg.tol

    def test_linear_energy_decays(self, ops6, linear_solver):
        cfg = linear_solver.config
        result = solve_cauchy(ops6, initial_state(ops6.grid, cfg, 1e-3), cfg, solver=linear_solver)
        assert np.all(np.diff(result.energies) <= 1e-15)
        assert result.monotone_defect <= 1e-12

    def test_zero_data(self, ops6, linear_solver):
        cfg = linear_solver.config
        f0 = initial_state(ops6.grid, cfg, 0.0)
        result = solve_cauchy(ops6, f0, cfg, solver=linear_solver)
        assert result.iterations == 1
        assert result.residual == 0.0
        assert result.fit is None
        assert np.all(result.norms == 0.0)

    def test_kernel_state_is_stationary(self, ops6, linear_solver):
        cfg = linear_solver.config
        f0 = kernel_state(ops6, cfg, 1e-3)
        result = solve_cauchy(ops6, f0, cfg, solver=linear_solver)
        assert result.energies[-1] == pytest.approx(result.energies[0], rel=1e-8)

    def test_small_data_converges(self, ops6, nonlinear_solver):
        cfg = nonlinear_solver.config
        result = solve_cauchy(ops6, initial_state(ops6.grid, cfg, 1e-3), cfg, solver=nonlinear_solver)
        checks = {c.tag: c for c in result.checks(cfg.tol)}
        assert checks["nonlinear.contraction"].passed
        assert checks["nonlinear.fixed_point_residual"].passed
        assert checks["nonlinear.reality"].passed
        assert result.iterations >= 2
        assert result.abscissa < 0.0

    def test_trajectory_rows(self, ops6, linear_solver):
        cfg = linear_solver.config
        result = solve_cauchy(ops6, initial_state(ops6.grid, cfg, 1e-3), cfg, solver=linear_solver)
        rows = trajectory_rows(result, ops6.grid, cfg.beta)
        assert len(rows) == len(result.times) * 27
        assert rows[0]["k"] == "0 0 0"
        assert set(rows[0]) == {"t", "mode", "k", "norm"}

    def test_large_data_refused(self, ops6, linear_solver):
        cfg = linear_solver.config
        with pytest.raises(PreconditionError, match="smallness"):
            solve_cauchy(ops6, initial_state(ops6.grid, cfg, 10.0), cfg, solver=linear_solver)

    def test_wrong_lattice_refused(self, ops6, linear_solver):
        other = initial_state(ops6.grid, SolverConfig(modes=2), 1e-3)
        with pytest.raises(PreconditionError, match="lattice"):
            solve_cauchy(ops6, other, linear_solver.config, solver=linear_solver)

    def test_ceiling(self, ops6):
        cfg = SolverConfig(nonlinear=False, ceiling=1e-6, **SHORT)
        solver = DuhamelSolver(ops6, cfg)
        with pytest.raises(DivergenceError, match="ceiling"):
            solve_cauchy(ops6, initial_state(ops6.grid, cfg, 1e-3), cfg, solver=solver)

    def test_iteration_budget(self, ops6):
        cfg = SolverConfig(max_iter=1, **SHORT)
        solver = DuhamelSolver(ops6, cfg)
        with pytest.raises(NonContractionError):
            solve_cauchy(ops6, initial_state(ops6.grid, cfg, 1e-3), cfg, solver=solver)

    def test_duhamel_step(self, ops6, linear_solver):
        state = initial_state(ops6.grid, linear_solver.config, 1e-3)
        after = duhamel_step(linear_solver, state, 0.5)
        assert after.time == pytest.approx(0.5)
        assert np.allclose(after.coeffs, linear_solver.propagate(state.coeffs, 0.5), atol=1e-16)
        with pytest.raises(PreconditionError):
            duhamel_step(linear_solver, state, 0.0)

    def test_dimension_mismatch(self, ops6):
        with pytest.raises(PreconditionError):
            DuhamelSolver(ops6, SolverConfig(d=2, beta=1.5, l=1.5))

    @pytest.mark.slow
    def test_estimate_smallness(self, ops6, nonlinear_solver):
        value = estimate_smallness(ops6, nonlinear_solver.config, [1e-4, 1e-3], solver=nonlinear_solver)
        assert value == pytest.approx(0.5e-3)
