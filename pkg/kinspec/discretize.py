"""
Velocity grids and dense Nystrom operators on them.

Provides:
- VelocityGrid / build_grid: tensor Gauss-Hermite or uniform midpoint grids
- DiscreteOperator: a dense matrix tagged with the continuum operator it represents
- assemble_nu, assemble_K, assemble_L, assemble_operators: Nystrom assembly
- ProjectionBasis, analytic_basis, build_projection: the collision invariants
- OperatorSet: everything the spectral, semigroup and nonlinear modules need for one grid
- kernel_cluster, structure_report, mapping_bound_probe, mapping_norm, hs_norm_truncated, hs_norm_check,
  resolvent_A_bound_probe, spectral_abscissa, bhat1_margin: structural certifications

Inner products are weighted by the quadrature weights W, so "self-adjoint"
means W L is symmetric.
"""

import hashlib
import logging
import time
from functools import cached_property
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import roots_hermitenorm

from .errors import ClusterGapError, PreconditionError, ResolutionError, ToleranceError
from .kernel import (
    KernelParams,
    KernelQuad,
    kernel_batch,
    nu_batch,
)
from .quad_lib import axial_polar_rule, panel_rule, sphere_area
from .reports import Certificate, certify_at_most
from .types import Matrix, Vector
from .utils import parallel_map

logger = logging.getLogger(__name__)

GridScheme = Literal["hermite", "uniform"]
OperatorLabel = Literal["K", "L", "nu", "Bhat", "Bhat1", "A"]

MASS_TOLERANCE = 1e-4
# Bound on max_k ||(K - nu) psi_k|| / ||nu psi_k|| before compression
RAW_DEFECT_MAX = 0.15


class VelocityGrid(BaseModel):
    """Tensor quadrature grid on velocity space.

    Nodes are ordered like np.meshgrid(*axes, indexing="ij") flattened in C
    order, so `f.reshape(grid.shape)` is the tensor view of a grid vector.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d: int
    scheme: GridScheme
    resolution: int
    extent: float
    axes: list[np.ndarray]
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.d

    @cached_property
    def speed(self) -> Vector:
        """|xi_i| at every node."""
        return np.linalg.norm(self.nodes, axis=1)

    @cached_property
    def maxwellian(self) -> Vector:
        return (2.0 * np.pi) ** (-self.d / 2.0) * np.exp(-0.5 * self.speed**2)

    @cached_property
    def radius(self) -> float:
        """Largest node speed."""
        return float(self.speed.max())

    def weight(self, beta: float) -> Vector:
        """(1 + |xi|)^beta at every node."""
        return (1.0 + self.speed) ** beta

    def inner(self, f: Vector, g: Vector) -> complex:
        """Weighted L^2 inner product sum W f conj(g)."""
        return complex(np.sum(self.weights * f * np.conj(g)))

    def norm(self, f: Vector, beta: float = 0.0) -> float:
        """||(1 + |xi|)^beta f|| in the discrete L^2 norm."""
        f = np.asarray(f)
        return float(np.sqrt(np.sum(self.weights * self.weight(2.0 * beta) * np.abs(f) ** 2)))

    def norm_many(self, f: np.ndarray, beta: float = 0.0) -> np.ndarray:
        """Row-wise weighted norms of a stack of grid vectors, shape (..., n)."""
        w = self.weights * self.weight(2.0 * beta)
        return np.sqrt(np.sum(w * np.abs(f) ** 2, axis=-1))

    def sup_norm(self, f: Vector, beta: float = 0.0) -> float:
        return float(np.max(self.weight(beta) * np.abs(f)))

    def grid_hash(self) -> bytes:
        """sha256 digest of the scheme, resolution and node/weight bytes."""
        h = hashlib.sha256()
        h.update(f"{self.scheme}:{self.d}:{self.resolution}:{self.extent!r}".encode())
        h.update(np.ascontiguousarray(self.nodes, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.weights, dtype="<f8").tobytes())
        return h.digest()


def _hermite_axis(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_hermitenorm(resolution)
    # weights for plain dx instead of exp(-x^2/2) dx
    return x, w * np.exp(0.5 * x * x)


def _uniform_axis(resolution: int, extent: float) -> tuple[np.ndarray, np.ndarray]:
    h = 2.0 * extent / resolution
    x = -extent + h * (np.arange(resolution) + 0.5)
    return x, np.full(resolution, h)


def build_grid(
    d: int = 3,
    scheme: GridScheme = "hermite",
    resolution: int = 8,
    extent: float | None = None,
) -> VelocityGrid:
    """Tensor velocity grid with a checked Maxwellian mass.

    Args:
        d: Dimension
        scheme: "hermite" (Gauss-Hermite nodes, weights rescaled to dx) or
            "uniform" (midpoint rule on [-extent, extent]^d)
        resolution: Nodes per axis, at least 4
        extent: Half width of the uniform box; ignored for "hermite"

    Returns:
        VelocityGrid whose quadrature of M is 1 within 1e-4

    Raises:
        PreconditionError: resolution < 4, or uniform scheme without extent > 0
        ResolutionError: Maxwellian mass check failed

    Example:
        build_grid(3, "hermite", 8)  # 512 nodes
    """
    if resolution < 4:
        raise PreconditionError(f"resolution must be at least 4 per axis, got {resolution}")
    if scheme == "hermite":
        x, w = _hermite_axis(resolution)
    elif scheme == "uniform":
        if extent is None or extent <= 0.0:
            raise PreconditionError("the uniform scheme needs extent > 0")
        x, w = _uniform_axis(resolution, extent)
    else:
        raise PreconditionError(f"unknown grid scheme {scheme!r}")

    mesh = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.column_stack([m.ravel() for m in mesh])
    wmesh = np.meshgrid(*([w] * d), indexing="ij")
    weights = np.prod(np.column_stack([m.ravel() for m in wmesh]), axis=1)

    grid = VelocityGrid(
        d=d,
        scheme=scheme,
        resolution=resolution,
        extent=float(np.max(np.abs(x))) if scheme == "hermite" else float(extent),
        axes=[x.copy() for _ in range(d)],
        nodes=nodes,
        weights=weights,
    )
    mass = float(grid.weights @ grid.maxwellian)
    if abs(mass - 1.0) > MASS_TOLERANCE:
        raise ResolutionError(
            f"Maxwellian mass {mass:.8f} on a {scheme} grid with {resolution} nodes per axis",
            measured=mass,
        )
    logger.debug("built %s grid d=%d n=%d mass=%.12f", scheme, d, grid.n, mass)
    return grid


class DiscreteOperator(BaseModel):
    """Dense matrix of a continuum operator on a velocity grid.

    Entries are real for K, L and nu and complex once transport is added.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: VelocityGrid
    entries: Matrix
    label: OperatorLabel
    metadata: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _square(self) -> "DiscreteOperator":
        n = self.grid.n
        if self.entries.shape != (n, n):
            raise ValueError(f"{self.label} has shape {self.entries.shape}, grid has {n} nodes")
        return self

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.entries @ f

    def symmetrized(self) -> Matrix:
        """W^{1/2} A W^{-1/2}, Hermitian exactly when A is W-self-adjoint."""
        s = np.sqrt(self.grid.weights)
        return s[:, None] * self.entries / s[None, :]

    def self_adjoint_defect(self) -> float:
        """||S - S^H|| / ||S|| with S the symmetrized matrix (Frobenius)."""
        s = self.symmetrized()
        scale = np.linalg.norm(s)
        return float(np.linalg.norm(s - s.conj().T) / scale) if scale > 0 else 0.0


class ProjectionBasis(BaseModel):
    """W-orthonormal basis psi_0, psi_1..psi_d, psi_{d+1} of the collision invariants."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: VelocityGrid
    columns: np.ndarray
    gram_residual: float

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """(f, psi_k) for every k; f may carry trailing batch axes."""
        return self.columns.T @ (self.grid.weights[:, None] * f if f.ndim > 1 else self.grid.weights * f)

    def project(self, f: np.ndarray) -> np.ndarray:
        return self.columns @ self.coefficients(f)

    @cached_property
    def matrix(self) -> Matrix:
        """P as a dense matrix, P = Psi Psi^T W."""
        return self.columns @ (self.columns.T * self.grid.weights[None, :])


def _gram_schmidt(columns: np.ndarray, weights: np.ndarray) -> np.ndarray:
    q = columns.astype(float).copy()
    for _ in range(2):
        for k in range(q.shape[1]):
            for j in range(k):
                q[:, k] -= (weights * q[:, j]) @ q[:, k] * q[:, j]
            q[:, k] /= np.sqrt(weights @ (q[:, k] ** 2))
    return q


def analytic_basis(grid: VelocityGrid) -> ProjectionBasis:
    """Orthonormalized {M^{1/2}, xi_j M^{1/2}, (|xi|^2 - d) M^{1/2}} on the grid.

    The last column is normalized numerically; its continuum norm is sqrt(2d).
    """
    root = np.sqrt(grid.maxwellian)
    raw = np.column_stack(
        [root]
        + [grid.nodes[:, j] * root for j in range(grid.d)]
        + [(grid.speed**2 - grid.d) * root]
    )
    cols = _gram_schmidt(raw, grid.weights)
    gram = cols.T @ (grid.weights[:, None] * cols)
    residual = float(np.max(np.abs(gram - np.eye(grid.d + 2))))
    return ProjectionBasis(grid=grid, columns=cols, gram_residual=residual)


class ClusterReport(BaseModel):
    """Near-zero eigenvalue cluster of a W-self-adjoint operator."""

    eigenvalues: list[float]
    cluster_size: int
    gap_ratio: float
    threshold: float


def kernel_cluster(op: DiscreteOperator, expected: int | None = None) -> ClusterReport:
    """Locate the cluster of eigenvalues at 0.

    Eigenvalues of the symmetrized operator are sorted descending; the
    cluster ends at the largest relative jump in magnitude among the first
    d + 6 of them. `threshold` is the first eigenvalue below the cluster.
    """
    s = op.symmetrized()
    s = 0.5 * (s + s.conj().T)
    eig = np.sort(np.linalg.eigvalsh(s).real)[::-1]
    d = op.grid.d
    floor = 1e-14 * max(abs(eig[-1]), 1e-300)
    mags = np.maximum(np.abs(eig[: d + 6]), floor)
    ratios = mags[1:] / mags[:-1]
    k = int(np.argmax(ratios))
    size = k + 1
    if expected is not None and size != expected:
        logger.warning("near-zero cluster of %s has %d members, expected %d", op.label, size, expected)
    return ClusterReport(
        eigenvalues=eig.tolist(),
        cluster_size=size,
        gap_ratio=float(ratios[k]),
        threshold=float(eig[size]) if size < len(eig) else 0.0,
    )


def build_projection(grid: VelocityGrid, L_op: DiscreteOperator, min_gap: float = 10.0) -> ProjectionBasis:
    """Analytic projection basis after checking that L has a clean d + 2 cluster.

    Raises:
        ClusterGapError: cluster size differs from d + 2 or gap ratio < min_gap
    """
    report = kernel_cluster(L_op)
    if report.cluster_size != grid.d + 2 or report.gap_ratio < min_gap:
        raise ClusterGapError(
            f"near-zero cluster of L has {report.cluster_size} members "
            f"with gap ratio {report.gap_ratio:.3g}",
            gap_ratio=report.gap_ratio,
            cluster_size=report.cluster_size,
        )
    return analytic_basis(grid)


def assemble_nu(grid: VelocityGrid, params: KernelParams, quad: KernelQuad | None = None) -> DiscreteOperator:
    """Multiplication by nu(xi_i) as a diagonal DiscreteOperator."""
    nu = nu_batch(params, grid.nodes, quad)
    return DiscreteOperator(grid=grid, entries=np.diag(nu), label="nu", metadata={"gamma": params.gamma})


def _subtracted_diagonal(
    grid: VelocityGrid, off: Matrix, nu: Vector, rows: np.ndarray | None = None
) -> Vector:
    """Diagonal that makes K M^{1/2} = nu M^{1/2} hold exactly on the grid.

    `off` holds the Nystrom rows `rows` with their diagonal entries zeroed.
    """
    root = np.sqrt(grid.maxwellian)
    rows = np.arange(grid.n) if rows is None else rows
    return nu - (off @ root) / root[rows]


def kernel_row(
    grid: VelocityGrid,
    params: KernelParams,
    i: int,
    quad: KernelQuad | None = None,
    nu_i: float | None = None,
) -> Vector:
    """Row i of the Nystrom matrix of K without assembling the rest."""
    if nu_i is None:
        nu_i = float(nu_batch(params, grid.nodes[i : i + 1], quad)[0])
    quad = (quad or KernelQuad()).model_copy(update={"check": False})
    others = np.delete(np.arange(grid.n), i)
    row = np.zeros(grid.n)
    centre = np.broadcast_to(grid.nodes[i], (len(others), grid.d))
    row[others] = kernel_batch(params, centre, grid.nodes[others], quad) * grid.weights[others]
    row[i] = _subtracted_diagonal(grid, row[None, :], np.array([nu_i]), np.array([i]))[0]
    return row


def assemble_K(
    grid: VelocityGrid,
    params: KernelParams,
    quad: KernelQuad | None = None,
    threads: int | None = None,
    nu: Vector | None = None,
) -> DiscreteOperator:
    """Nystrom matrix K_ij = k(xi_i, xi_j) w_j with a singularity-subtracted diagonal.

    The kernel is evaluated once per unordered pair, in row blocks that run
    on the thread pool. The diagonal comes from the row identity
    K M^{1/2} = nu M^{1/2}: K_ii = nu_i - sum_{j != i} K_ij M_j^{1/2} / M_i^{1/2}.

    Raises:
        PreconditionError: kernel evaluation failed, with the row block
        ToleranceError: non-finite kernel value, with its (i, j) location
    """
    nu = nu_batch(params, grid.nodes, quad) if nu is None else np.asarray(nu, dtype=float)
    quad = (quad or KernelQuad()).model_copy(update={"check": False})
    n = grid.n
    start = time.perf_counter()
    blocks = np.array_split(np.arange(n - 1), max(1, min(n - 1, 64)))

    def upper_block(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ii = np.concatenate([np.full(n - 1 - r, r) for r in rows])
        jj = np.concatenate([np.arange(r + 1, n) for r in rows])
        try:
            vals = kernel_batch(params, grid.nodes[ii], grid.nodes[jj], quad)
        except PreconditionError as exc:
            raise PreconditionError(f"kernel evaluation failed in rows {rows[0]}..{rows[-1]}: {exc}") from exc
        return ii, jj, vals

    k = np.zeros((n, n))
    for ii, jj, vals in parallel_map(upper_block, [b for b in blocks if len(b)], threads):
        bad = ~np.isfinite(vals)
        if np.any(bad):
            at = int(np.flatnonzero(bad)[0])
            raise ToleranceError(f"non-finite kernel value at (i, j) = ({ii[at]}, {jj[at]})")
        k[ii, jj] = vals
        k[jj, ii] = vals

    entries = k * grid.weights[None, :]
    entries[np.diag_indices(n)] = _subtracted_diagonal(grid, entries, nu)
    logger.info("assembled K on %d nodes in %.2fs", n, time.perf_counter() - start)
    return DiscreteOperator(
        grid=grid,
        entries=entries,
        label="K",
        metadata={"d": params.d, "gamma": params.gamma, "q0": params.q0, "order": quad.order},
    )


def invariant_defects(grid: VelocityGrid, a: Matrix, nu: Vector, basis: ProjectionBasis) -> Vector:
    """||A psi_k|| / ||nu psi_k|| for every column of the invariant basis."""
    cols = basis.columns
    residual = a @ cols
    return grid.norm_many(residual.T) / grid.norm_many((nu[:, None] * cols).T)


def assemble_L(
    grid: VelocityGrid,
    params: KernelParams,
    K: DiscreteOperator | None = None,
    nu: Vector | None = None,
    correct: bool = True,
    quad: KernelQuad | None = None,
    threads: int | None = None,
) -> DiscreteOperator:
    """L = K - diag(nu), compressed to the complement of the invariants when `correct`.

    With `correct`, L = Q (K - nu) Q with Q = I - P, which makes the
    collision invariants an exact null space. The uncorrected defect
    max_k ||(K - nu) psi_k|| / ||nu psi_k|| is kept in metadata["raw_defect"].
    """
    nu = nu_batch(params, grid.nodes, quad) if nu is None else nu
    if K is None:
        K = assemble_K(grid, params, quad, threads, nu=nu)
    raw = K.entries - np.diag(nu)
    basis = analytic_basis(grid)
    defects = invariant_defects(grid, raw, nu, basis)
    defect = float(np.max(defects))
    if correct:
        q = np.eye(grid.n) - basis.matrix
        entries = q @ raw @ q
    else:
        entries = raw
    logger.info("assembled L (correct=%s), raw invariant defect %.3e", correct, defect)
    return DiscreteOperator(
        grid=grid,
        entries=entries,
        label="L",
        metadata={**K.metadata, "correct": correct, "raw_defect": defect, "raw_defects": defects.tolist()},
    )


class OperatorSet(BaseModel):
    """Assembled operators for one grid and one set of kernel parameters."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: VelocityGrid
    params: KernelParams
    nu: Vector
    K: DiscreteOperator
    L: DiscreteOperator
    basis: ProjectionBasis

    @property
    def d(self) -> int:
        return self.grid.d

    @cached_property
    def P(self) -> Matrix:
        return self.basis.matrix

    @cached_property
    def nu0(self) -> float:
        """min nu(xi)(1 + |xi|)^gamma over the grid."""
        return float(np.min(self.nu * self.grid.weight(self.params.gamma)))

    @cached_property
    def K_eff(self) -> Matrix:
        """L + diag(nu): the compact part as it acts inside the corrected L."""
        return self.L.entries + np.diag(self.nu)

    def transport(self, y: np.ndarray) -> Vector:
        """y . xi at every node."""
        return self.grid.nodes @ np.asarray(y, dtype=float)

    def a_hat(self, y: np.ndarray) -> Vector:
        """Diagonal of A(y) = -2 pi i y . xi - nu."""
        return -2j * np.pi * self.transport(y) - self.nu

    def bhat(self, y: np.ndarray, subtract_P: bool = False) -> DiscreteOperator:
        return assemble_Bhat(self, y, subtract_P)


def assemble_Bhat(ops: OperatorSet, y: np.ndarray, subtract_P: bool = False) -> DiscreteOperator:
    """B(y) = L - 2 pi i diag(y . xi), minus P when `subtract_P`."""
    y = np.asarray(y, dtype=float)
    entries = ops.L.entries - np.diag(2j * np.pi * ops.transport(y))
    if subtract_P:
        entries = entries - ops.P
    return DiscreteOperator(
        grid=ops.grid,
        entries=entries,
        label="Bhat1" if subtract_P else "Bhat",
        metadata={**ops.L.metadata, "y": y.tolist()},
    )


def assemble_A(ops: OperatorSet, y: np.ndarray) -> DiscreteOperator:
    """A(y) = -2 pi i y . xi - nu as a diagonal DiscreteOperator."""
    return DiscreteOperator(
        grid=ops.grid,
        entries=np.diag(ops.a_hat(y)),
        label="A",
        metadata={"y": np.asarray(y, dtype=float).tolist()},
    )


def assemble_operators(
    grid: VelocityGrid,
    params: KernelParams,
    quad: KernelQuad | None = None,
    correct: bool = True,
    threads: int | None = None,
) -> OperatorSet:
    """nu, K, L and the projection basis for one grid.

    Raises:
        ClusterGapError: L has no clean d + 2 cluster at 0
    """
    nu = nu_batch(params, grid.nodes, quad)
    K = assemble_K(grid, params, quad, threads, nu=nu)
    L = assemble_L(grid, params, K=K, nu=nu, correct=correct)
    basis = build_projection(grid, L)
    return OperatorSet(grid=grid, params=params, nu=nu, K=K, L=L, basis=basis)


def structure_report(ops: OperatorSet, raw_defect_max: float = RAW_DEFECT_MAX) -> list[Certificate]:
    """Self-adjointness, non-positivity and kernel dimension of L as certificates.

    The raw defect is the invariant residual of K - nu before the
    compression Q (K - nu) Q, relative to ||nu psi_k||.
    """
    L = ops.L
    cluster = kernel_cluster(L)
    eig = np.array(cluster.eigenvalues)
    root = ops.basis.columns[:, 0]
    invariant = ops.grid.norm(L.apply(root)) / ops.grid.norm(root)
    k_defect = ops.K.self_adjoint_defect()
    raw = L.metadata.get("raw_defects") or [float("nan")]
    checks = [
        certify_at_most("discretize.self_adjoint", max(L.self_adjoint_defect(), k_defect), 1e-8),
        certify_at_most("discretize.non_positive", float(eig[0]), 1e-6 * abs(eig[-1])),
        Certificate(
            tag="discretize.kernel_dimension",
            measured=float(cluster.cluster_size),
            bound=float(ops.d + 2),
            passed=cluster.cluster_size == ops.d + 2 and cluster.gap_ratio >= 10.0,
            detail=f"gap ratio {cluster.gap_ratio:.3e}, first eigenvalue below cluster {cluster.threshold:.6g}",
        ),
        certify_at_most("discretize.collision_invariant", invariant, 5e-3),
        certify_at_most(
            "discretize.raw_invariant_defect",
            float(max(raw)),
            raw_defect_max,
            "per invariant: " + ", ".join(f"{v:.3e}" for v in raw),
        ),
        certify_at_most("discretize.projection_gram", ops.basis.gram_residual, 1e-10),
    ]
    return checks


def mapping_norm(ops: OperatorSet, beta: float = 0.0) -> float:
    """Operator norm of K from L^2_beta to L^2_{beta + gamma + 2} on the grid."""
    grid = ops.grid
    root_w = np.sqrt(grid.weights)
    left = root_w * grid.weight(beta + ops.params.gamma + 2.0)
    right = 1.0 / (root_w * grid.weight(beta))
    return float(np.linalg.norm(left[:, None] * ops.K.entries * right[None, :], 2))


def mapping_bound_probe(
    ops: OperatorSet,
    n_samples: int = 100,
    beta: float = 0.0,
    seed: int = 0,
    bound: float | None = None,
) -> Certificate:
    """max over random f of ||K f||_{beta + gamma + 2} / ||f||_beta against a bound.

    Without an explicit `bound` the sampled ratio is compared with the
    discrete operator norm, which every sample must respect.
    """
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((ops.grid.n, n_samples))
    kf = ops.K.entries @ f
    target = beta + ops.params.gamma + 2.0
    ratios = ops.grid.norm_many(kf.T, target) / ops.grid.norm_many(f.T, beta)
    norm = mapping_norm(ops, beta)
    limit = norm * (1.0 + 1e-10) if bound is None else bound
    return certify_at_most(
        "discretize.mapping_bound",
        float(ratios.max()),
        limit,
        f"{n_samples} random samples, beta={beta}, operator norm {norm:.6g}",
    )


def spectral_abscissa(op: DiscreteOperator | Matrix) -> float:
    """max Re of the spectrum of a dense matrix."""
    entries = op.entries if isinstance(op, DiscreteOperator) else op
    return float(np.max(np.linalg.eigvals(entries).real))


def bhat1_margin(ops: OperatorSet, y: np.ndarray) -> float:
    """delta(grid) = -max Re spectrum of B(y) - P."""
    return -spectral_abscissa(assemble_Bhat(ops, y, subtract_P=True))


def _hs_integral(
    params: KernelParams,
    eps_cut: float,
    R_cut: float,
    alpha: float,
    beta: float,
    radius: float,
    order: int,
    theta_panels: int,
    kernel_quad: KernelQuad,
) -> float:
    d = params.d
    s_edges = np.linspace(0.0, R_cut, int(np.ceil(R_cut / 0.5)) + 1)
    s, ws = panel_rule(s_edges, order)
    ws = ws * sphere_area(d) * s ** (d - 1)
    top = R_cut + radius
    rho_edges = np.linspace(eps_cut, top, int(np.ceil((top - eps_cut) / 0.5)) + 1)
    rho_nodes, rho_w = panel_rule(rho_edges, order)
    rho, theta, w = axial_polar_rule(d, rho_nodes, rho_w, theta_panels, order)
    total = 0.0
    for sk, wk in zip(s, ws):
        star = np.zeros(d)
        star[0] = sk
        pts = np.zeros((len(rho), d))
        pts[:, 0] = sk + rho * np.cos(theta)
        pts[:, 1] = rho * np.sin(theta)
        inside = np.linalg.norm(pts, axis=1) <= radius
        if not np.any(inside):
            continue
        k = kernel_batch(params, pts[inside], np.broadcast_to(star, (int(inside.sum()), d)), kernel_quad)
        speed = np.linalg.norm(pts[inside], axis=1)
        vals = (1.0 + speed) ** (2.0 * alpha) * k * k * (1.0 + sk) ** (-2.0 * beta)
        total += wk * float(w[inside] @ vals)
    return total


def hs_norm_truncated(
    grid: VelocityGrid,
    params: KernelParams,
    eps_cut: float,
    R_cut: float,
    alpha: float = 1.0,
    beta: float = 0.0,
    order: int = 6,
    theta_panels: int = 8,
    refine: bool = False,
) -> float:
    """Weighted Hilbert-Schmidt norm of k cut to |xi - xi_*| >= eps, |xi_*| <= R.

    The double integral of (1 + |xi|)^{2 alpha} |k|^2 (1 + |xi_*|)^{-2 beta}
    runs over xi_* in the R-ball and xi in the grid's ball. By rotation
    invariance xi_* is placed on the first axis and xi is written in polar
    coordinates about it, so both cut-offs fall on panel edges.

    With `refine`, the value is recomputed with doubled order and angular
    panels and the refined value is returned; the pair is logged.

    Raises:
        PreconditionError: eps_cut <= 0 or R_cut <= 0
    """
    if eps_cut <= 0.0 or R_cut <= 0.0:
        raise PreconditionError("hs_norm_truncated needs eps_cut > 0 and R_cut > 0")
    radius = grid.radius
    if eps_cut >= R_cut + radius:
        return 0.0
    kq = KernelQuad(check=False)
    value = _hs_integral(params, eps_cut, R_cut, alpha, beta, radius, order, theta_panels, kq)
    if refine:
        finer = _hs_integral(params, eps_cut, R_cut, alpha, beta, radius, 2 * order, 2 * theta_panels, kq)
        logger.info("HS norm squared %.12g -> %.12g under refinement", value, finer)
        value = finer
    return float(np.sqrt(value))


def hs_norm_monte_carlo(
    grid: VelocityGrid,
    params: KernelParams,
    eps_cut: float,
    R_cut: float,
    alpha: float = 1.0,
    beta: float = 0.0,
    samples: int = 200_000,
    seed: int = 0,
    scale: float = 1.6,
) -> tuple[float, float]:
    """Monte-Carlo estimate of the squared truncated HS norm.

    xi_* uniform in the R-ball, xi = xi_* + scale * N(0, I).

    Returns:
        (estimate of the squared norm, standard error)
    """
    rng = np.random.default_rng(seed)
    d = params.d
    direction = rng.standard_normal((samples, d))
    direction /= np.linalg.norm(direction, axis=1)[:, None]
    star = direction * (R_cut * rng.random(samples) ** (1.0 / d))[:, None]
    ball = sphere_area(d) * R_cut**d / d
    step = scale * rng.standard_normal((samples, d))
    xi = star + step
    density = (2.0 * np.pi * scale * scale) ** (-d / 2.0) * np.exp(
        -0.5 * np.sum(step * step, axis=1) / (scale * scale)
    ) / ball
    keep = (np.linalg.norm(step, axis=1) >= eps_cut) & (np.linalg.norm(xi, axis=1) <= grid.radius)
    vals = np.zeros(samples)
    if np.any(keep):
        k = kernel_batch(params, xi[keep], star[keep], KernelQuad(check=False))
        vals[keep] = (
            (1.0 + np.linalg.norm(xi[keep], axis=1)) ** (2.0 * alpha)
            * k
            * k
            * (1.0 + np.linalg.norm(star[keep], axis=1)) ** (-2.0 * beta)
            / density[keep]
        )
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


def hs_norm_check(
    grid: VelocityGrid,
    params: KernelParams,
    eps_cut: float,
    R_cut: float,
    alpha: float = 1.0,
    beta: float = 0.0,
    samples: int = 200_000,
    seed: int = 0,
    order: int = 4,
    theta_panels: int = 4,
    z_max: float = 5.0,
) -> Certificate:
    """Refined hs_norm_truncated against hs_norm_monte_carlo.

    Measured is |quadrature^2 - estimate| in standard errors of the estimate.
    """
    value = hs_norm_truncated(grid, params, eps_cut, R_cut, alpha, beta, order, theta_panels, refine=True) ** 2
    estimate, se = hs_norm_monte_carlo(grid, params, eps_cut, R_cut, alpha, beta, samples, seed)
    if se > 0.0:
        score = abs(value - estimate) / se
    else:
        score = 0.0 if value == estimate else float("inf")
    return certify_at_most(
        "discretize.hs_norm",
        score,
        z_max,
        f"eps={eps_cut:g}, R={R_cut:g}: {value:.8g} vs {estimate:.8g} +- {se:.2g}",
    )


class ResolventProbe(BaseModel):
    """Bound on the diagonal resolvent (lambda - A(y))^{-1} from L^2_{beta+gamma} to L^2_beta."""

    lambdas_re: list[float]
    lambdas_im: list[float]
    values: list[float]
    nu0: float
    bound: float
    restricted_constant: float | None = None
    certificate: Certificate


def resolvent_A_bound_probe(
    ops: OperatorSet,
    y: np.ndarray,
    lambda_samples: list[complex],
    restrict_radius: float | None = None,
) -> ResolventProbe:
    """max_i (1 + |xi_i|)^{-gamma} / |lambda + nu_i + 2 pi i y . xi_i| against 1/nu0.

    With `restrict_radius` R, also measures C = max |lambda| * value over the
    nodes with |xi| <= R at lambda = 4 pi i |y| R.

    Raises:
        PreconditionError: some sample has Re lambda < 0
    """
    lambdas = np.asarray(lambda_samples, dtype=complex)
    if np.any(lambdas.real < 0.0):
        raise PreconditionError("resolvent probe needs Re lambda >= 0")
    y = np.asarray(y, dtype=float)
    damp = ops.grid.weight(-ops.params.gamma)
    shift = ops.nu + 2j * np.pi * ops.transport(y)
    values = np.array([np.max(damp / np.abs(lam + shift)) for lam in lambdas])
    bound = 1.0 / ops.nu0
    restricted = None
    if restrict_radius is not None:
        lam = 4j * np.pi * np.linalg.norm(y) * restrict_radius
        inside = ops.grid.speed <= restrict_radius
        restricted = float(abs(lam) * np.max(damp[inside] / np.abs(lam + shift[inside])))
    cert = certify_at_most(
        "discretize.resolvent_A",
        float(values.max()),
        bound * (1.0 + 1e-12),
        f"{len(lambdas)} samples, nu0={ops.nu0:.6g}",
    )
    return ResolventProbe(
        lambdas_re=lambdas.real.tolist(),
        lambdas_im=lambdas.imag.tolist(),
        values=values.tolist(),
        nu0=ops.nu0,
        bound=bound,
        restricted_constant=restricted,
        certificate=cert,
    )
