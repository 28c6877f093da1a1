import numpy as np
import pytest

from kinspec.discretize import (
    RAW_DEFECT_MAX,
    DiscreteOperator,
    analytic_basis,
    assemble_A,
    assemble_Bhat,
    assemble_K,
    assemble_L,
    bhat1_margin,
    build_grid,
    build_projection,
    hs_norm_check,
    hs_norm_truncated,
    kernel_cluster,
    kernel_row,
    mapping_bound_probe,
    mapping_norm,
    resolvent_A_bound_probe,
    structure_report,
)
from kinspec.errors import ClusterGapError, PreconditionError, ResolutionError


class TestBuildGrid:
    def test_hermite_grid(self, grid8):
        assert grid8.n == 512
        assert grid8.nodes.shape == (512, 3)
        assert grid8.shape == (8, 8, 8)
        assert grid8.weights @ grid8.maxwellian == pytest.approx(1.0, abs=1e-4)

    def test_hermite_nodes_are_symmetric(self, grid8):
        axis = grid8.axes[0]
        assert np.allclose(np.sort(axis), -np.sort(axis)[::-1])

    def test_uniform_grid(self):
        grid = build_grid(2, "uniform", 24, extent=6.0)
        assert grid.n == 576
        assert grid.weights @ grid.maxwellian == pytest.approx(1.0, abs=1e-4)

    def test_resolution_floor(self):
        with pytest.raises(PreconditionError, match="at least 4"):
            build_grid(3, "hermite", 3)

    def test_mass_check(self):
        with pytest.raises(ResolutionError) as exc:
            build_grid(3, "uniform", 4, extent=1.0)
        assert exc.value.measured == pytest.approx(0.325, abs=0.01)

    def test_uniform_needs_extent(self):
        with pytest.raises(PreconditionError):
            build_grid(3, "uniform", 8)

    def test_grid_hash_is_stable(self, grid8):
        assert grid8.grid_hash() == build_grid(3, "hermite", 8).grid_hash()
        assert grid8.grid_hash() != build_grid(3, "hermite", 6).grid_hash()

    def test_weighted_norms(self, grid6):
        f = np.exp(-0.25 * grid6.speed**2)
        stack = np.vstack([f, 2.0 * f])
        norms = grid6.norm_many(stack, beta=1.0)
        assert norms[0] == pytest.approx(grid6.norm(f, beta=1.0))
        assert norms[1] == pytest.approx(2.0 * norms[0])
        assert grid6.sup_norm(f, beta=0.0) == pytest.approx(f.max())


class TestProjectionBasis:
    def test_orthonormal(self, grid8):
        basis = analytic_basis(grid8)
        assert basis.columns.shape == (512, 5)
        assert basis.gram_residual < 1e-10

    def test_projection_is_idempotent(self, grid8):
        basis = analytic_basis(grid8)
        f = np.sin(grid8.nodes[:, 0]) * np.exp(-0.3 * grid8.speed**2)
        once = basis.project(f)
        assert np.allclose(basis.project(once), once, atol=1e-12)

    def test_first_column_is_root_maxwellian(self, grid8):
        basis = analytic_basis(grid8)
        root = np.sqrt(grid8.maxwellian)
        assert np.allclose(basis.columns[:, 0], root / grid8.norm(root), atol=1e-12)


class TestOperators:
    def test_K_is_weighted_symmetric(self, ops8):
        assert ops8.K.self_adjoint_defect() < 1e-12

    def test_L_annihilates_invariants(self, ops8):
        residual = ops8.L.entries @ ops8.basis.columns
        assert np.max(np.abs(residual)) < 1e-10 * np.max(np.abs(ops8.L.entries))

    def test_L_metadata(self, ops8):
        assert ops8.L.metadata["correct"] is True
        defects = ops8.L.metadata["raw_defects"]
        assert len(defects) == 5
        assert ops8.L.metadata["raw_defect"] == pytest.approx(max(defects))
        assert ops8.L.metadata["raw_defect"] <= RAW_DEFECT_MAX

    def test_diagonal_keeps_the_maxwellian_row_identity(self, ops8):
        root = np.sqrt(ops8.grid.maxwellian)
        assert np.allclose(ops8.K.apply(root), ops8.nu * root, rtol=1e-10, atol=1e-12)

    def test_raw_defect_vanishes_on_root_maxwellian(self, ops8):
        raw = assemble_L(ops8.grid, ops8.params, K=ops8.K, nu=ops8.nu, correct=False)
        assert raw.metadata["raw_defects"][0] < 1e-10

    def test_raw_cluster_enclosure(self, ops8):
        # d + 2 eigenvalues of the uncorrected operator lie within twice the
        # invariant residual of zero (residual bound for symmetric matrices)
        raw = assemble_L(ops8.grid, ops8.params, K=ops8.K, nu=ops8.nu, correct=False)
        s = raw.symmetrized()
        skew = np.linalg.norm(s - s.T, 2)
        eig = np.linalg.eigvalsh(0.5 * (s + s.T))
        residuals = ops8.grid.norm_many((raw.entries @ ops8.basis.columns).T)
        radius = 2.0 * (np.linalg.norm(residuals) + skew)
        slack = 1e-12 * np.max(np.abs(eig))
        assert np.sum(np.abs(eig) <= radius + slack) >= 5
        assert np.min(np.abs(eig)) <= residuals[0] + skew + slack

    def test_raw_defect_certificate_fails_below_measured(self, ops8):
        tiny = 0.5 * ops8.L.metadata["raw_defect"]
        cert = next(c for c in structure_report(ops8, tiny) if c.tag == "discretize.raw_invariant_defect")
        assert not cert.passed
        assert cert.bound == tiny

    def test_uncorrected_L_keeps_raw_defect(self, ops8):
        raw = assemble_L(ops8.grid, ops8.params, K=ops8.K, nu=ops8.nu, correct=False)
        assert raw.metadata["raw_defect"] == pytest.approx(ops8.L.metadata["raw_defect"])
        assert np.allclose(raw.entries, ops8.K.entries - np.diag(ops8.nu))

    def test_kernel_row_matches_matrix(self, ops8):
        row = kernel_row(ops8.grid, ops8.params, 17, nu_i=float(ops8.nu[17]))
        assert np.allclose(row, ops8.K.entries[17], rtol=1e-10, atol=1e-12)

    def test_cluster(self, ops8):
        report = kernel_cluster(ops8.L, expected=5)
        assert report.cluster_size == 5
        assert report.gap_ratio >= 10.0
        assert report.threshold < 0.0

    def test_build_projection(self, ops8):
        basis = build_projection(ops8.grid, ops8.L)
        assert np.allclose(basis.columns, ops8.basis.columns)

    def test_build_projection_needs_a_cluster(self, grid6):
        flat = DiscreteOperator(grid=grid6, entries=-np.eye(grid6.n), label="L")
        with pytest.raises(ClusterGapError) as exc:
            build_projection(grid6, flat)
        assert exc.value.gap_ratio == pytest.approx(1.0)
        with pytest.raises(ClusterGapError):
            build_projection(grid6, flat, min_gap=0.5)

    @pytest.mark.slow
    def test_assemble_K_standalone(self, grid6, params, ops6):
        K = assemble_K(grid6, params)
        assert K.label == "K"
        assert np.allclose(K.entries, ops6.K.entries, rtol=1e-13, atol=0.0)

    def test_structure_report(self, ops8):
        checks = structure_report(ops8)
        assert all(c.passed for c in checks), [c for c in checks if not c.passed]

    def test_nu0(self, ops8):
        assert 0.0 < ops8.nu0 <= ops8.nu.min() * (1.0 + ops8.grid.speed.min()) ** ops8.params.gamma + 1e-12

    def test_bhat_and_A(self, ops8):
        y = np.array([0.1, 0.0, 0.0])
        bhat = assemble_Bhat(ops8, y)
        a = assemble_A(ops8, y)
        assert np.allclose(np.diag(a.entries), -2j * np.pi * ops8.grid.nodes[:, 0] * 0.1 - ops8.nu)
        assert np.allclose(bhat.entries - ops8.L.entries, np.diag(-2j * np.pi * ops8.transport(y)))
        shifted = assemble_Bhat(ops8, y, subtract_P=True)
        assert np.allclose(bhat.entries - shifted.entries, ops8.P)


class TestBounds:
    def test_mapping_bound(self, ops8):
        cert = mapping_bound_probe(ops8, n_samples=20)
        assert cert.tag == "discretize.mapping_bound"
        assert cert.passed
        assert cert.measured <= mapping_norm(ops8) * (1.0 + 1e-10)
        assert cert.bound == pytest.approx(mapping_norm(ops8), rel=1e-9)

    def test_mapping_bound_with_declared_limit(self, ops8):
        assert not mapping_bound_probe(ops8, n_samples=20, bound=1e-6).passed
        generous = 2.0 * mapping_norm(ops8, beta=1.0)
        cert = mapping_bound_probe(ops8, n_samples=20, beta=1.0, bound=generous)
        assert cert.passed
        assert cert.bound == generous

    def test_bhat1_margin(self, ops8):
        # the abscissa is bounded by the top of the numerical range of L - P
        y = np.array([0.1, 0.0, 0.0])
        margin = bhat1_margin(ops8, y)
        shifted = DiscreteOperator(grid=ops8.grid, entries=ops8.L.entries - ops8.P, label="L").symmetrized()
        top = np.linalg.eigvalsh(0.5 * (shifted + shifted.T))[-1]
        assert top < 0.0
        assert margin >= -top - 1e-8

    def test_resolvent_bound(self, ops8):
        result = resolvent_A_bound_probe(ops8, np.array([0.1, 0.0, 0.0]), [0.0, 1.0, 2j, 0.5 + 3j])
        assert result.certificate.passed
        assert max(result.values) <= 1.0 / ops8.nu0 * (1.0 + 1e-12)

    def test_resolvent_restricted_constant(self, ops8):
        result = resolvent_A_bound_probe(ops8, np.array([0.1, 0.0, 0.0]), [0.0], restrict_radius=2.0)
        assert result.restricted_constant is not None
        assert result.restricted_constant > 0.0

    def test_resolvent_needs_right_half_plane(self, ops8):
        with pytest.raises(PreconditionError):
            resolvent_A_bound_probe(ops8, np.zeros(3), [-0.5])


class TestHilbertSchmidt:
    def test_cutoffs_must_be_positive(self, grid6, params):
        with pytest.raises(PreconditionError):
            hs_norm_truncated(grid6, params, 0.0, 2.0)
        with pytest.raises(PreconditionError):
            hs_norm_truncated(grid6, params, 0.1, -1.0)

    def test_empty_region(self, grid6, params):
        assert hs_norm_truncated(grid6, params, 2.0 + grid6.radius, 2.0) == 0.0

    @pytest.mark.slow
    def test_grows_with_the_region(self, grid6, params):
        small = hs_norm_truncated(grid6, params, 0.5, 1.0, order=4, theta_panels=4)
        larger_ball = hs_norm_truncated(grid6, params, 0.5, 2.0, order=4, theta_panels=4)
        smaller_hole = hs_norm_truncated(grid6, params, 0.1, 1.0, order=4, theta_panels=4)
        assert 0.0 < small < larger_ball
        assert small < smaller_hole

    @pytest.mark.slow
    def test_refinement_is_stable(self, grid6, params):
        coarse = hs_norm_truncated(grid6, params, 0.5, 1.0, order=4, theta_panels=4)
        refined = hs_norm_truncated(grid6, params, 0.5, 1.0, order=4, theta_panels=4, refine=True)
        assert refined == pytest.approx(coarse, rel=1e-3)

    @pytest.mark.slow
    def test_agrees_with_monte_carlo(self, grid6, params):
        cert = hs_norm_check(grid6, params, 0.5, 1.0, samples=100_000, seed=3)
        assert cert.tag == "discretize.hs_norm"
        assert cert.passed, cert.detail
