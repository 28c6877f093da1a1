"""
The quadratic collision term and the perturbative Cauchy solver on a torus.

Provides:
- CollisionIntegrator / gamma_bilinear: Gamma(f, g) by direct quadrature over (xi_*, omega)
- smooth_samples: random smooth velocity profiles for the Gamma checks
- gamma_bound_check, linearization_check, lemma_convolution_check: property checks
- SolverConfig / PerturbationState / DuhamelSolver: the mild-solution map on a mode lattice
- duhamel_step, solve_cauchy, estimate_smallness: stepping and Picard iteration
- trajectory_rows: per-mode weighted norms for CSV output
"""

import logging
import math
from functools import cached_property
from typing import Literal

import numpy as np
from chidian import grab, mapper
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import sparse
from scipy.integrate import quad
from scipy.interpolate import RegularGridInterpolator

from .discretize import OperatorSet, ProjectionBasis, VelocityGrid, analytic_basis
from .errors import DivergenceError, NonContractionError, PreconditionError
from .kernel import KernelParams
from .quad_lib import gauss_legendre, sphere_area, sphere_rule
from .reports import Certificate, certify_at_most, certify_finite
from .semigroup import DecayFit, Propagator, fit_decay
from .utils import parallel_map

logger = logging.getLogger(__name__)

LEAKAGE_WARN = 0.05
POINT_CHUNK = 8192
SNAP = 1e-9
CONTRACTION_MAX = 0.9
MONOTONE_SLACK = 1e-3
LINEARIZATION_TOL = 0.5


class CollisionIntegrator:
    """Gamma(f, g) on one velocity grid.

    Gamma(f, g)_i = 1/2 sum_{j, omega} c_ij(omega) [f'g'_* + f'_*g' - f_i g_j - f_j g_i]
    with c_ij(omega) = M_j^{1/2} W_j |xi_i - xi_j|^{-gamma} b(cos) |S^{d-1}| w_omega.
    The sphere rule is halved over antipodal pairs, which leaves (xi', xi'_*)
    unchanged. Post-collision values come from trilinear interpolation held
    as one sparse matrix; xi'_* for the pair (i, j) is xi' for (j, i), so
    only xi' is interpolated. Points that leave the grid box contribute 0
    and their share of the total weight is kept in `leakage`.

    Cost per output node is O(n N_omega) for the gain term plus O(n) for the
    loss term; inputs are batched one column per physical x point.
    """

    def __init__(
        self,
        grid: VelocityGrid,
        params: KernelParams,
        sphere_points: int = 26,
        conservative: bool = True,
        basis: ProjectionBasis | None = None,
        columns_per_chunk: int = 8,
        threads: int | None = None,
    ):
        if grid.d != params.d:
            raise PreconditionError(f"grid dimension {grid.d} does not match d = {params.d}")
        self.grid = grid
        self.params = params
        self.conservative = conservative
        self.basis = analytic_basis(grid) if basis is None else basis
        self.columns_per_chunk = max(int(columns_per_chunk), 1)
        self.threads = threads
        self.directions, direction_weights = sphere_rule(grid.d, sphere_points, half=True)

        nodes = grid.nodes
        rel = nodes[:, None, :] - nodes[None, :, :]
        h = np.linalg.norm(rel, axis=2)
        proj = rel @ self.directions.T
        off = h > 0.0
        safe = np.where(off, h, 1.0)
        pair = np.where(off, safe ** (-params.gamma), 0.0) * (np.sqrt(grid.maxwellian) * grid.weights)[None, :]
        angular = params.b(np.abs(proj) / safe[:, :, None])
        self.weights = pair[:, :, None] * angular * (sphere_area(grid.d) * direction_weights)[None, None, :]
        self.loss = self.weights.sum(axis=2)

        self.transfer, outside = self._post_collision(proj)
        total = float(self.weights.sum())
        self.leakage = float(self.weights[outside].sum()) / total if total > 0.0 else 0.0
        if self.leakage > LEAKAGE_WARN:
            logger.warning("post-collision leakage %.3f above %.2f; the grid box is too small", self.leakage, LEAKAGE_WARN)
        else:
            logger.debug("post-collision leakage %.3e", self.leakage)
        self.last_defect = 0.0

    def _post_collision(self, proj: np.ndarray) -> tuple[sparse.csr_matrix, np.ndarray]:
        grid = self.grid
        n, m, d = grid.n, len(self.directions), grid.d
        lo = np.array([axis[0] for axis in grid.axes])
        hi = np.array([axis[-1] for axis in grid.axes])
        interp = RegularGridInterpolator(
            tuple(grid.axes),
            np.eye(n).reshape(grid.shape + (n,)),
            method="linear",
            bounds_error=False,
            fill_value=0.0,
        )
        outside = np.zeros((n, n, m), dtype=bool)
        blocks = []
        rows = max(1, POINT_CHUNK // (n * m))
        for start in range(0, n, rows):
            stop = min(start + rows, n)
            pts = grid.nodes[start:stop, None, None, :] - proj[start:stop, :, :, None] * self.directions[None, None, :, :]
            # rounding can push a node coordinate just past the box
            pts = np.where((pts < lo) & (pts > lo - SNAP), lo, pts)
            pts = np.where((pts > hi) & (pts < hi + SNAP), hi, pts)
            outside[start:stop] = np.any((pts < lo) | (pts > hi), axis=-1)
            blocks.append(sparse.csr_matrix(interp(pts.reshape(-1, d))))
        transfer = sparse.vstack(blocks, format="csr")
        logger.debug("interpolation matrix %s with %d stored entries", transfer.shape, transfer.nnz)
        return transfer, outside

    def _evaluate(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        n, m = self.grid.n, len(self.directions)
        k = f.shape[1]
        fp = (self.transfer @ f).reshape(n, n, m, k)
        gp = (self.transfer @ g).reshape(n, n, m, k)
        swap = (1, 0, 2, 3)
        gain = 0.5 * np.einsum("ijm,ijmk->ik", self.weights, fp * gp.transpose(swap) + fp.transpose(swap) * gp)
        loss = 0.5 * (f * (self.loss @ g) + g * (self.loss @ f))
        return gain - loss

    def __call__(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Gamma(f, g) for grid vectors, or column-wise for (n, k) stacks."""
        f = np.asarray(f)
        g = np.asarray(g)
        if f.shape != g.shape or f.shape[0] != self.grid.n:
            raise PreconditionError(f"Gamma inputs must share a shape with {self.grid.n} rows")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise PreconditionError("Gamma inputs must be finite")
        single = f.ndim == 1
        F = f.reshape(self.grid.n, -1)
        G = g.reshape(self.grid.n, -1)
        step = self.columns_per_chunk
        chunks = [slice(start, start + step) for start in range(0, F.shape[1], step)]
        out = np.concatenate(parallel_map(lambda s: self._evaluate(F[:, s], G[:, s]), chunks, self.threads), axis=1)

        coefs = self.basis.coefficients(out)
        sizes = self.grid.norm_many(out.T)
        nonzero = sizes > 0.0
        self.last_defect = (
            float(np.max(np.max(np.abs(coefs[:, nonzero]), axis=0) / sizes[nonzero])) if np.any(nonzero) else 0.0
        )
        if self.conservative:
            out = out - self.basis.columns @ coefs
        return out[:, 0] if single else out

    def conservation_defect(self, f: np.ndarray, g: np.ndarray | None = None) -> float:
        """max_k |(Gamma(f, g), psi_k)| / ||Gamma(f, g)|| of the returned values."""
        out = self(f, f if g is None else g)
        size = self.grid.norm(out) if out.ndim == 1 else float(np.max(self.grid.norm_many(out.T)))
        if size == 0.0:
            return 0.0
        return float(np.max(np.abs(self.basis.coefficients(out)))) / size


def gamma_bilinear(
    grid: VelocityGrid,
    params: KernelParams,
    f: np.ndarray,
    g: np.ndarray,
    sphere_points: int = 26,
    conservative: bool = True,
) -> np.ndarray:
    """One-off Gamma(f, g); build a CollisionIntegrator to evaluate repeatedly."""
    return CollisionIntegrator(grid, params, sphere_points, conservative)(f, g)


def _base_profile(grid: VelocityGrid) -> np.ndarray:
    xi = grid.nodes
    return np.exp(-(grid.speed**2) / 3.0) * (1.0 + 0.3 * xi[:, 0] + 0.2 * (xi[:, 1] ** 2 - 1.0))


def smooth_samples(grid: VelocityGrid, count: int, seed: int = 0, spread: float = 0.05) -> np.ndarray:
    """Rows base(xi)(1 + spread p(xi)) with p a random quadratic, max |p| = 1 on the grid.

    base = exp(-|xi|^2/3)(1 + 0.3 xi_1 + 0.2(xi_2^2 - 1)).
    """
    rng = np.random.default_rng(seed)
    x = grid.nodes / grid.radius
    d = grid.d
    monomials = [np.ones(grid.n)] + [x[:, j] for j in range(d)]
    monomials += [x[:, j] * x[:, k] for j in range(d) for k in range(j, d)]
    basis = np.column_stack(monomials)
    p = rng.standard_normal((count, basis.shape[1])) @ basis.T
    p /= np.max(np.abs(p), axis=1, keepdims=True)
    return _base_profile(grid)[None, :] * (1.0 + spread * p)


class GammaBoundReport(BaseModel):
    """Ratios ||Gamma(f, g)||_{beta+gamma} / (||f||_beta ||g||_beta) over sample pairs."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    beta: float
    ratios: np.ndarray
    mixed_ratios: np.ndarray
    median: float
    spread: float
    maxwellian_ratio: float
    rough_ratio: float
    leakage: float


def _sup_ratio(grid: VelocityGrid, out: np.ndarray, f: np.ndarray, g: np.ndarray, beta: float, gamma: float) -> float:
    denom = grid.sup_norm(f, beta) * grid.sup_norm(g, beta)
    return grid.sup_norm(out, beta + gamma) / denom if denom > 0.0 else 0.0


def gamma_bound_check(
    integrator: CollisionIntegrator,
    beta: float,
    samples: int = 50,
    seed: int = 0,
    spread: float = 0.05,
) -> tuple[GammaBoundReport, list[Certificate]]:
    """Sup-weighted bound constant for Gamma on smooth pairs, with its mixed L^2 variant.

    Velocity-only samples: the H^l factor in x is the same on both sides.
    The rough (random-sign) ratio is informational and grows with the grid.
    """
    grid, params = integrator.grid, integrator.params
    if beta <= grid.d / 2.0:
        raise PreconditionError(f"beta = {beta} must exceed d/2 = {grid.d / 2.0}")
    profiles = smooth_samples(grid, 2 * samples, seed, spread)
    F, G = profiles[0::2].T, profiles[1::2].T
    out = integrator(F, G)

    ratios = np.array([_sup_ratio(grid, out[:, k], F[:, k], G[:, k], beta, params.gamma) for k in range(samples)])
    mixed = np.array(
        [
            grid.norm(out[:, k], beta + params.gamma) / (grid.sup_norm(F[:, k], beta) * grid.norm(G[:, k], beta))
            for k in range(samples)
        ]
    )
    median = float(np.median(ratios))
    spread_measured = float(np.max(np.abs(ratios / median - 1.0))) if median > 0.0 else float("inf")

    root = np.sqrt(grid.maxwellian)
    maxwellian_ratio = _sup_ratio(grid, integrator(root, root), root, root, beta, params.gamma)
    rng = np.random.default_rng(seed + 1)
    rough = _base_profile(grid) * rng.choice([-1.0, 1.0], size=grid.n)
    rough_ratio = _sup_ratio(grid, integrator(rough, rough), rough, rough, beta, params.gamma)

    report = GammaBoundReport(
        beta=beta,
        ratios=ratios,
        mixed_ratios=mixed,
        median=median,
        spread=spread_measured,
        maxwellian_ratio=maxwellian_ratio,
        rough_ratio=rough_ratio,
        leakage=integrator.leakage,
    )
    logger.info(
        "Gamma bound: median ratio %.4g, spread %.3f, rough %.4g (beta=%.2f)",
        median,
        spread_measured,
        rough_ratio,
        beta,
    )
    certs = [
        certify_finite("nonlinear.gamma_bound", float(np.max(ratios)), f"beta={beta}, {samples} smooth pairs"),
        certify_at_most("nonlinear.gamma_bound_stability", spread_measured, 0.2, f"median={median:.6g}"),
        certify_finite("nonlinear.gamma_mixed_bound", float(np.max(mixed)), f"beta={beta}"),
        certify_finite("nonlinear.gamma_maxwellian", maxwellian_ratio, "f = g = M^{1/2}"),
    ]
    return report, certs


class LinearizationReport(BaseModel):
    eps: list[float]
    errors: list[float]
    slope: float
    l_discrepancy: float | None = None


def linearization_check(
    integrator: CollisionIntegrator,
    h: np.ndarray,
    eps_list: tuple[float, ...] = (1e-1, 1e-2, 1e-3),
    ops: OperatorSet | None = None,
    l_tolerance: float = LINEARIZATION_TOL,
) -> tuple[LinearizationReport, list[Certificate]]:
    """Forward differences of Gamma(M^{1/2} + eps h, same) against 2 Gamma(M^{1/2}, h).

    The error is eps ||Gamma(h, h)|| for an exactly bilinear symmetric form,
    so the log-log slope is 1. With `ops`, the relative distance between
    2 Gamma(M^{1/2}, Q h) and the assembled L h is certified against
    `l_tolerance`; Q removes the collision invariants.
    """
    grid = integrator.grid
    root = np.sqrt(grid.maxwellian)
    base = integrator(root, root)
    linear = 2.0 * integrator(root, h)
    errors = []
    for eps in eps_list:
        shifted = root + eps * h
        errors.append(grid.norm((integrator(shifted, shifted) - base) / eps - linear))
    errors_arr = np.array(errors)
    if np.all(errors_arr > 0.0):
        slope = float(np.polyfit(np.log(eps_list), np.log(errors_arr), 1)[0])
    else:
        slope = float("nan")

    discrepancy = None
    if ops is not None:
        # invariant parts of h are annihilated by both operators
        hq = h - integrator.basis.project(h)
        lh = ops.L.apply(hq).real
        scale = grid.norm(lh)
        linear_q = 2.0 * integrator(root, hq)
        discrepancy = grid.norm(linear_q - lh) / scale if scale > 0.0 else 0.0
        logger.info("2 Gamma(M^1/2, h) vs assembled L h: relative difference %.3e", discrepancy)

    report = LinearizationReport(
        eps=[float(e) for e in eps_list], errors=[float(e) for e in errors], slope=slope, l_discrepancy=discrepancy
    )
    certs = [certify_at_most("nonlinear.linearization_slope", abs(slope - 1.0), 0.1, f"slope={slope:.6g}")]
    if discrepancy is not None:
        certs.append(
            certify_at_most(
                "nonlinear.linearization_vs_L",
                discrepancy,
                l_tolerance,
                "relative, on the complement of the invariants",
            )
        )
    return report, certs


class ConvolutionReport(BaseModel):
    alpha: float
    alpha0: float
    times: list[float]
    ratios: list[float]
    constant: float
    tail_growth: float


def lemma_convolution_check(
    alpha: float, alpha0: float, times: np.ndarray | None = None
) -> tuple[ConvolutionReport, Certificate]:
    """(1+t)^alpha int_0^t (1+t-s)^{-alpha}(1+s)^{-alpha0} ds stays bounded for 0 <= alpha < 1 < alpha0.

    Passes when the ratio over the second half of the times grows by at most
    10% over its maximum on the first half.
    """
    if not (0.0 <= alpha < 1.0 < alpha0):
        raise PreconditionError(f"need 0 <= alpha < 1 < alpha0, got alpha={alpha}, alpha0={alpha0}")
    times = np.geomspace(1.0, 1e4, 25) if times is None else np.asarray(times, dtype=float)

    def integral(t: float) -> float:
        value, _ = quad(lambda s: (1.0 + t - s) ** (-alpha) * (1.0 + s) ** (-alpha0), 0.0, t, limit=200, points=[t / 2.0])
        return value

    ratios = np.array([integral(t) * (1.0 + t) ** alpha for t in times])
    half = len(times) // 2
    growth = float(np.max(ratios[half:]) / np.max(ratios[: max(half, 1)]))
    report = ConvolutionReport(
        alpha=alpha,
        alpha0=alpha0,
        times=times.tolist(),
        ratios=ratios.tolist(),
        constant=float(np.max(ratios)),
        tail_growth=growth,
    )
    cert = certify_at_most(
        f"nonlinear.convolution[{alpha:g},{alpha0:g}]", growth, 1.1, f"C={report.constant:.6g}"
    )
    return report, cert


class SolverConfig(BaseModel):
    """Torus Cauchy problem: exponents, mode lattice, time grid and Picard controls.

    x-norms are taken on the unit-volume torus: H^l from the Fourier
    coefficients with weights (1 + |y|^2)^l, L^1 as the mean of |f|.
    """

    model_config = ConfigDict(frozen=True)

    d: int = Field(default=3, ge=2)
    alpha: float = 0.5
    beta: float = 2.0
    l: float = 2.0
    modes: int = Field(default=1, ge=1)
    period: float = Field(default=4.0, gt=0.0)
    t_final: float = Field(default=50.0, gt=0.0)
    steps: int = Field(default=40, ge=1)
    spacing: Literal["uniform", "geometric"] = "geometric"
    first_step: float = Field(default=0.05, gt=0.0)
    duhamel_order: int = Field(default=2, ge=1, le=8)
    tol: float = Field(default=1e-10, gt=0.0)
    max_iter: int = Field(default=30, ge=1)
    smallness: float = Field(default=0.05, gt=0.0)
    ceiling: float = Field(default=1e3, gt=0.0)
    sphere_points: int = 6
    nonlinear: bool = True
    conservative: bool = True
    transient: float = Field(default=1.0, ge=0.0)

    @model_validator(mode="after")
    def _exponents(self) -> "SolverConfig":
        if not (0.5 <= self.alpha < 1.0):
            raise ValueError(f"alpha must lie in [1/2, 1), got {self.alpha}")
        if self.beta <= self.d / 2.0:
            raise ValueError(f"beta must exceed d/2 = {self.d / 2.0}, got {self.beta}")
        if self.l <= self.d / 2.0:
            raise ValueError(f"l must exceed d/2 = {self.d / 2.0}, got {self.l}")
        if self.spacing == "geometric" and self.first_step >= self.t_final:
            raise ValueError("first_step must be below t_final for geometric spacing")
        return self

    def times(self) -> np.ndarray:
        if self.spacing == "uniform":
            return np.linspace(0.0, self.t_final, self.steps + 1)
        return np.concatenate([[0.0], np.geomspace(self.first_step, self.t_final, self.steps)])


def lattice_modes(d: int, modes: int) -> np.ndarray:
    """Integer frequencies {-K..K}^d in FFT order, shape ((2K+1)^d, d)."""
    points = 2 * modes + 1
    freqs = np.rint(np.fft.fftfreq(points, 1.0 / points)).astype(int)
    mesh = np.meshgrid(*([freqs] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _negation_index(modes: np.ndarray) -> np.ndarray:
    lookup = {tuple(k): i for i, k in enumerate(modes)}
    try:
        return np.array([lookup[tuple(-k)] for k in modes])
    except KeyError as e:
        raise PreconditionError(f"mode set is not closed under negation: missing {e.args[0]}") from e


class PerturbationState(BaseModel):
    """Fourier coefficients c_k(xi) of a real perturbation f(x, xi) = sum_k c_k(xi) e^{2 pi i y_k . x}."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mode_set: np.ndarray
    period: float
    coeffs: np.ndarray
    time: float = 0.0

    @model_validator(mode="after")
    def _shapes(self) -> "PerturbationState":
        if self.mode_set.ndim != 2 or self.coeffs.ndim != 2 or len(self.mode_set) != len(self.coeffs):
            raise ValueError("coeffs must be (modes, nodes) with one row per lattice mode")
        return self

    @property
    def ys(self) -> np.ndarray:
        return self.mode_set / self.period

    @cached_property
    def negation(self) -> np.ndarray:
        return _negation_index(self.mode_set)

    def reality_defect(self) -> float:
        """max |c_{-k} - conj(c_k)|."""
        return float(np.max(np.abs(self.coeffs[self.negation] - np.conj(self.coeffs)), initial=0.0))


def initial_state(
    grid: VelocityGrid, config: SolverConfig, amplitude: float, profile: np.ndarray | None = None
) -> PerturbationState:
    """f0(x, xi) = amplitude sum_j cos(2 pi x_j / period) phi(xi), max |phi| = 1."""
    modes = lattice_modes(grid.d, config.modes)
    phi = _base_profile(grid) if profile is None else np.asarray(profile, dtype=float)
    phi = phi / np.max(np.abs(phi))
    coeffs = np.zeros((len(modes), grid.n), dtype=complex)
    for j in range(grid.d):
        for sign in (1, -1):
            target = np.zeros(grid.d, dtype=int)
            target[j] = sign
            idx = int(np.flatnonzero(np.all(modes == target, axis=1))[0])
            coeffs[idx] = 0.5 * amplitude * phi
    return PerturbationState(mode_set=modes, period=config.period, coeffs=coeffs)


def kernel_state(ops: OperatorSet, config: SolverConfig, amplitude: float, k: int = 0) -> PerturbationState:
    """x-independent f0 = amplitude psi_k, a stationary point of the linear flow."""
    modes = lattice_modes(ops.d, config.modes)
    coeffs = np.zeros((len(modes), ops.grid.n), dtype=complex)
    coeffs[0] = amplitude * ops.basis.columns[:, k]
    return PerturbationState(mode_set=modes, period=config.period, coeffs=coeffs)


class DuhamelSolver:
    """The mild-solution map on the mode lattice.

    Each mode evolves by e^{t B(y_k)}; B(-y) is the complex conjugate of
    B(y), so only one propagator per conjugate pair is built. Gamma couples
    the modes pseudo-spectrally: coefficients go to the physical lattice,
    Gamma acts column-wise in x, and the result comes back by FFT.
    """

    def __init__(
        self,
        ops: OperatorSet,
        config: SolverConfig,
        integrator: CollisionIntegrator | None = None,
        threads: int | None = None,
    ):
        if config.d != ops.d:
            raise PreconditionError(f"solver configured for d = {config.d}, operators have d = {ops.d}")
        self.ops = ops
        self.config = config
        self.modes = lattice_modes(ops.d, config.modes)
        self.ys = self.modes / config.period
        self.negation = _negation_index(self.modes)
        self.points = 2 * config.modes + 1
        if integrator is None and config.nonlinear:
            integrator = CollisionIntegrator(
                ops.grid, ops.params, config.sphere_points, config.conservative, basis=ops.basis, threads=threads
            )
        self.integrator = integrator if config.nonlinear else None
        self.theta, self.theta_weights = gauss_legendre(config.duhamel_order, 0.0, 1.0)

        owners = [i for i in range(len(self.modes)) if self.negation[i] >= i]
        built = parallel_map(lambda i: Propagator(ops.bhat(self.ys[i])), owners, threads)
        self._owned = dict(zip(owners, built))
        self.reality_defect = 0.0
        logger.info("torus solver: %d modes, %d propagators", len(self.modes), len(owners))

    def _mode_apply(self, i: int, u: np.ndarray, t: float) -> np.ndarray:
        if i in self._owned:
            return self._owned[i].apply(u, t)
        return np.conj(self._owned[int(self.negation[i])].apply(np.conj(u), t))

    def propagate(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        """Every mode advanced by e^{t B(y_k)}."""
        return np.stack([self._mode_apply(i, coeffs[i], t) for i in range(len(self.modes))])

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        """Real samples on the x lattice, shape (points^d, n)."""
        d = self.ops.d
        arr = coeffs.reshape((self.points,) * d + (coeffs.shape[-1],))
        phys = np.fft.ifftn(arr, axes=tuple(range(d))) * self.points**d
        return phys.real.reshape(-1, coeffs.shape[-1])

    def to_modes(self, phys: np.ndarray) -> np.ndarray:
        d = self.ops.d
        arr = phys.reshape((self.points,) * d + (phys.shape[-1],))
        return (np.fft.fftn(arr, axes=tuple(range(d))) / self.points**d).reshape(-1, phys.shape[-1])

    def gamma_hat(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients of Gamma(f, f); zero when the nonlinear term is disabled."""
        if self.integrator is None:
            return np.zeros_like(coeffs, dtype=complex)
        phys = self.to_physical(coeffs).T
        return self.to_modes(self.integrator(phys, phys).T)

    def increment(self, source: np.ndarray, dt: float) -> np.ndarray:
        """Gauss rule for int_0^dt e^{(dt-s)B} Gamma(f(s), f(s)) ds with f(s) = e^{sB} source."""
        total = np.zeros_like(source, dtype=complex)
        if self.integrator is None:
            return total
        for theta, w in zip(self.theta, self.theta_weights):
            mid = self.propagate(source, theta * dt)
            total += w * dt * self.propagate(self.gamma_hat(mid), (1.0 - theta) * dt)
        return total

    def _hermitian(self, coeffs: np.ndarray) -> np.ndarray:
        mirrored = np.conj(coeffs[self.negation])
        self.reality_defect = max(self.reality_defect, float(np.max(np.abs(coeffs - mirrored), initial=0.0)))
        return 0.5 * (coeffs + mirrored)

    def advance(self, coeffs: np.ndarray, dt: float, source: np.ndarray, time: float) -> np.ndarray:
        if dt <= 0.0:
            raise PreconditionError(f"time step must be positive, got {dt}")
        out = self._hermitian(self.propagate(coeffs, dt) + self.increment(source, dt))
        size = self.sup_norm(out)
        if not math.isfinite(size) or size > self.config.ceiling:
            raise DivergenceError(f"solution norm {size:.3e} passed the ceiling {self.config.ceiling:.1e}", time=time)
        return out

    def linear_trajectory(self, coeffs: np.ndarray, times: np.ndarray) -> np.ndarray:
        out = np.empty((len(times),) + coeffs.shape, dtype=complex)
        out[0] = coeffs
        for k in range(len(times) - 1):
            out[k + 1] = self.propagate(out[k], times[k + 1] - times[k])
        return out

    def sweep(self, trajectory: np.ndarray, times: np.ndarray) -> np.ndarray:
        """One application of the mild-solution map to a whole trajectory."""
        out = np.empty_like(trajectory)
        out[0] = trajectory[0]
        for k in range(len(times) - 1):
            out[k + 1] = self.advance(out[k], times[k + 1] - times[k], trajectory[k], float(times[k + 1]))
        return out

    def sup_norm(self, coeffs: np.ndarray) -> float:
        """sup_xi (1+|xi|)^beta ||c(., xi)||_{H^l}."""
        grid, cfg = self.ops.grid, self.config
        w = (1.0 + np.sum(self.ys**2, axis=1)) ** cfg.l
        hl = np.sqrt(np.sum(w[:, None] * np.abs(coeffs) ** 2, axis=0))
        return float(np.max(grid.weight(cfg.beta) * hl))

    def energy_norm(self, coeffs: np.ndarray) -> float:
        """L^2 norm in (x, xi)."""
        return float(np.sqrt(np.sum(self.ops.grid.norm_many(coeffs) ** 2)))

    def trajectory_norm(self, trajectory: np.ndarray, times: np.ndarray) -> float:
        """sup_t (1+t)^alpha sup-weighted norm."""
        return max((1.0 + t) ** self.config.alpha * self.sup_norm(c) for t, c in zip(times, trajectory))

    def smallness(self, coeffs: np.ndarray) -> float:
        """||f0||_{L^inf_{beta+alpha gamma}(H^l)} + ||f0||_{L^2_{alpha gamma}(L^1)}."""
        grid, cfg = self.ops.grid, self.config
        shift = cfg.alpha * self.ops.params.gamma
        w = (1.0 + np.sum(self.ys**2, axis=1)) ** cfg.l
        hl = np.sqrt(np.sum(w[:, None] * np.abs(coeffs) ** 2, axis=0))
        first = float(np.max(grid.weight(cfg.beta + shift) * hl))
        l1 = np.mean(np.abs(self.to_physical(coeffs)), axis=0)
        return first + grid.norm(l1, shift)

    def spectral_abscissa(self) -> float:
        """Largest Re eigenvalue of B(y_k) over the nonzero modes."""
        values = [
            float(np.max(prop.eigenvalues.real)) for i, prop in self._owned.items() if np.any(self.modes[i] != 0)
        ]
        return max(values, default=float("nan"))


def duhamel_step(solver: DuhamelSolver, state: PerturbationState, dt: float) -> PerturbationState:
    """Advance `state` by dt with Gamma frozen on the linear flow from `state`."""
    coeffs = solver.advance(state.coeffs, dt, state.coeffs, state.time + dt)
    return PerturbationState(mode_set=state.mode_set, period=state.period, coeffs=coeffs, time=state.time + dt)


class CauchyResult(BaseModel):
    """Converged torus trajectory and its diagnostics."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    modes: np.ndarray
    period: float
    trajectory: np.ndarray
    iterations: int
    distances: list[float]
    contraction: list[float]
    residual: float
    norms: np.ndarray
    energies: np.ndarray
    fit: DecayFit | None
    abscissa: float
    smallness: float
    leakage: float
    reality_defect: float
    monotone_defect: float

    def state(self, k: int) -> PerturbationState:
        return PerturbationState(
            mode_set=self.modes, period=self.period, coeffs=self.trajectory[k], time=float(self.times[k])
        )

    def checks(self, tol: float) -> list[Certificate]:
        factor = max(self.contraction, default=0.0)
        return [
            certify_at_most("nonlinear.contraction", factor, CONTRACTION_MAX, f"{self.iterations} iterations"),
            certify_at_most("nonlinear.fixed_point_residual", self.residual, 2.0 * tol, "relative"),
            certify_at_most("nonlinear.monotone_decay", self.monotone_defect, MONOTONE_SLACK, "energy norm"),
            certify_at_most("nonlinear.reality", self.reality_defect, 1e-12, "conjugate modes"),
            certify_finite("nonlinear.smallness", self.smallness),
        ]


def _monotone_defect(times: np.ndarray, energies: np.ndarray, transient: float) -> float:
    tail = energies[times >= transient]
    if len(tail) < 2 or tail[0] == 0.0:
        return 0.0
    return float(max(np.max(np.diff(tail) / tail[:-1]), 0.0))


def solve_cauchy(
    ops: OperatorSet,
    f0: PerturbationState,
    config: SolverConfig,
    solver: DuhamelSolver | None = None,
    check_smallness: bool = True,
) -> CauchyResult:
    """Picard iteration of the mild-solution map on the time grid.

    Stops once successive trajectories differ by at most tol times the
    trajectory norm. Raises NonContractionError when the distance ratio
    reaches 1 or max_iter runs out, PreconditionError when f0 is not small.
    """
    solver = solver or DuhamelSolver(ops, config)
    if f0.coeffs.shape != (len(solver.modes), ops.grid.n) or not np.array_equal(f0.mode_set, solver.modes):
        raise PreconditionError("initial state does not live on the solver's mode lattice")
    smallness = solver.smallness(f0.coeffs)
    if check_smallness and smallness > config.smallness:
        raise PreconditionError(f"initial data size {smallness:.4g} exceeds the smallness bound {config.smallness:.4g}")
    times = config.times()

    trajectory = solver.linear_trajectory(np.asarray(f0.coeffs, dtype=complex), times)
    distances: list[float] = []
    ratios: list[float] = []
    size = 0.0
    for iteration in range(1, config.max_iter + 1):
        new = solver.sweep(trajectory, times)
        dist = solver.trajectory_norm(new - trajectory, times)
        size = solver.trajectory_norm(new, times)
        if distances and distances[-1] > 0.0:
            ratio = dist / distances[-1]
            ratios.append(ratio)
            if ratio >= 1.0:
                raise NonContractionError(
                    f"Picard distance ratio {ratio:.4g} at iteration {iteration}", lipschitz=ratio, time=float(times[-1])
                )
        distances.append(dist)
        trajectory = new
        logger.debug("Picard iteration %d: distance %.3e, size %.3e", iteration, dist, size)
        if dist <= config.tol * size:
            break
    else:
        raise NonContractionError(
            f"no convergence within {config.max_iter} iterations",
            lipschitz=max(ratios, default=float("nan")),
            time=float(times[-1]),
        )

    check = solver.sweep(trajectory, times)
    residual = solver.trajectory_norm(check - trajectory, times) / size if size > 0.0 else 0.0
    norms = np.array([solver.sup_norm(c) for c in trajectory])
    energies = np.array([solver.energy_norm(c) for c in trajectory])
    fit = None
    if np.all(norms[times >= config.transient] > 0.0) and config.t_final > max(config.transient, 1e-12):
        fit = fit_decay(times, norms, f"beta={config.beta}", decades=math.log10(config.t_final / max(config.transient, 1e-12)))
    result = CauchyResult(
        times=times,
        modes=solver.modes,
        period=config.period,
        trajectory=trajectory,
        iterations=iteration,
        distances=distances,
        contraction=ratios,
        residual=residual,
        norms=norms,
        energies=energies,
        fit=fit,
        abscissa=solver.spectral_abscissa(),
        smallness=smallness,
        leakage=solver.integrator.leakage if solver.integrator is not None else 0.0,
        reality_defect=solver.reality_defect,
        monotone_defect=_monotone_defect(times, energies, config.transient),
    )
    logger.info(
        "Cauchy solve: %d iterations, max contraction %.3g, residual %.3e, slowest mode Re %.4g",
        iteration,
        max(ratios, default=0.0),
        residual,
        result.abscissa,
    )
    return result


def estimate_smallness(
    ops: OperatorSet,
    config: SolverConfig,
    amplitudes: list[float],
    profile: np.ndarray | None = None,
    solver: DuhamelSolver | None = None,
) -> float:
    """Half the largest amplitude whose Picard contraction factor stays at or below 0.9."""
    solver = solver or DuhamelSolver(ops, config)
    accepted = []
    for amplitude in sorted(amplitudes):
        f0 = initial_state(ops.grid, config, amplitude, profile)
        try:
            result = solve_cauchy(ops, f0, config, solver=solver, check_smallness=False)
        except DivergenceError as e:
            logger.info("amplitude %.3g rejected: %s", amplitude, e)
            continue
        factor = max(result.contraction, default=0.0)
        logger.info("amplitude %.3g: contraction %.3g", amplitude, factor)
        if factor <= CONTRACTION_MAX:
            accepted.append(amplitude)
    if not accepted:
        raise PreconditionError("no amplitude contracted; try smaller values")
    return 0.5 * max(accepted)


@mapper(remove_empty=False)
def _trajectory_row(d: dict):
    return {
        "t": grab(d, "t"),
        "mode": grab(d, "index"),
        "k": " ".join(str(int(c)) for c in grab(d, "mode")),
        "norm": grab(d, "norm"),
    }


def trajectory_rows(result: CauchyResult, grid: VelocityGrid, beta: float) -> list[dict]:
    """One row per (t, mode): the weighted L^2_beta norm of the mode coefficient."""
    rows = []
    for t, coeffs in zip(result.times, result.trajectory):
        norms = grid.norm_many(coeffs, beta)
        for k, (mode, value) in enumerate(zip(result.modes, norms)):
            rows.append(_trajectory_row({"t": float(t), "index": k, "mode": list(mode), "norm": float(value)}))
    return rows
