"""
Low-frequency dispersion branches of B(y) = -2 pi i y . xi + L.

For lambda = sigma + i tau and y = r omega the shifted resolvent is
R1 = (lambda + 2 pi i r omega . xi - L + P)^{-1}. Its compression to the
collision invariants,

    D_jk = (R1 (omega . xi) psi_j, psi_k),

is the dispersion matrix. lambda is an eigenvalue of B(r omega) exactly when
lambda = -2 pi i r eta_j(lambda) for an eigenvalue eta_j of D. Branches are
labelled at the origin by descending eta: j = 0 (+sqrt(a1^2 + a2^2)),
j = 1 (0), j = 2..d (transverse, decoupled), j = d + 1 (-sqrt(a1^2 + a2^2)).
"""

import logging
from typing import Literal

import numpy as np
from chidian import grab, mapper
from pydantic import BaseModel, ConfigDict
from scipy.linalg import eig, get_lapack_funcs, lu_factor, lu_solve
from scipy.optimize import linear_sum_assignment

from .discretize import OperatorSet, assemble_Bhat
from .errors import (
    BranchTrackingError,
    ConditioningError,
    MultiplicityError,
    PreconditionError,
    ToleranceError,
)
from .reports import Certificate, certify_at_most
from .types import Matrix
from .utils import parallel_map

logger = logging.getLogger(__name__)

COND_MAX = 1e12
SOLVE_RTOL = 1e-10
NEWTON_TOL = 1e-10
MIN_OVERLAP = 0.7


def _unit(omega: np.ndarray | None, d: int) -> np.ndarray:
    if omega is None:
        e = np.zeros(d)
        e[0] = 1.0
        return e
    omega = np.asarray(omega, dtype=float)
    return omega / np.linalg.norm(omega)


class ShiftedResolvent:
    """LU factorization of lambda + 2 pi i r omega . xi - L + P.

    Raises:
        ConditioningError: the 1-norm condition estimate exceeds cond_max
    """

    def __init__(
        self,
        ops: OperatorSet,
        lam: complex,
        r: float,
        omega: np.ndarray | None = None,
        cond_max: float = COND_MAX,
    ):
        self.ops = ops
        self.lam = complex(lam)
        self.r = float(r)
        self.omega = _unit(omega, ops.d)
        self.matrix = (
            np.diag(self.lam + 2j * np.pi * self.r * ops.transport(self.omega)) - ops.L.entries + ops.P
        )
        self.lu = lu_factor(self.matrix, check_finite=False)
        (gecon,) = get_lapack_funcs(("gecon",), (self.lu[0],))
        rcond, _ = gecon(self.lu[0], np.linalg.norm(self.matrix, 1), norm="1")
        self.condition = float(np.inf if rcond == 0.0 else 1.0 / rcond)
        if self.condition > cond_max:
            raise ConditioningError(
                f"shifted resolvent at lambda={self.lam:.6g}, r={self.r:.6g} is near singular",
                self.condition,
            )

    def solve(self, rhs: np.ndarray, check: bool = True) -> np.ndarray:
        x = lu_solve(self.lu, rhs, check_finite=False)
        if check:
            residual = self.residual(x, rhs)
            if residual > SOLVE_RTOL:
                raise ToleranceError(f"resolvent solve residual {residual:.3e} exceeds {SOLVE_RTOL:g}")
        return x

    def residual(self, x: np.ndarray, rhs: np.ndarray) -> float:
        return float(np.linalg.norm(self.matrix @ x - rhs) / max(np.linalg.norm(rhs), 1e-300))


class DispersionMatrix(BaseModel):
    """D_jk at one (sigma, tau, r, omega)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    sigma: float
    tau: float
    r: float
    omega: np.ndarray
    entries: Matrix
    condition: float
    residual: float

    @property
    def lam(self) -> complex:
        return complex(self.sigma, self.tau)

    @property
    def block_index(self) -> list[int]:
        n = self.entries.shape[0]
        return [0, 1, n - 1]

    def block(self) -> Matrix:
        idx = self.block_index
        return self.entries[np.ix_(idx, idx)]


def _momentum_rotation(omega: np.ndarray) -> Matrix:
    """Orthogonal R with R omega = e_1 (a Householder reflection, or I)."""
    d = len(omega)
    e1 = np.zeros(d)
    e1[0] = 1.0
    v = omega - e1
    if np.linalg.norm(v) < 1e-14:
        return np.eye(d)
    return np.eye(d) - 2.0 * np.outer(v, v) / (v @ v)


def _basis_columns(ops: OperatorSet, rotation: Matrix | None) -> Matrix:
    cols = ops.basis.columns
    if rotation is None:
        return cols
    d = ops.d
    out = cols.copy()
    out[:, 1 : d + 1] = cols[:, 1 : d + 1] @ rotation.T
    return out


def _dispersion_parts(
    ops: OperatorSet,
    res: ShiftedResolvent,
    columns: Matrix,
) -> tuple[Matrix, Matrix, float]:
    rhs = res.ops.transport(res.omega)[:, None] * columns
    x = res.solve(rhs, check=False)
    residual = res.residual(x, rhs)
    if residual > SOLVE_RTOL:
        raise ToleranceError(f"dispersion solves have relative residual {residual:.3e}")
    entries = x.T @ (ops.grid.weights[:, None] * columns)
    return entries, x, residual


def dispersion_matrix(
    ops: OperatorSet,
    sigma: float,
    tau: float,
    r: float,
    omega: np.ndarray | None = None,
    allow_negative_sigma: bool = False,
    cond_max: float = COND_MAX,
    rotated_basis: bool = False,
) -> DispersionMatrix:
    """D_jk(sigma, tau, r) by d + 2 solves with one LU factorization.

    Args:
        ops: Assembled operators
        sigma, tau: Real and imaginary part of lambda
        r: Frequency magnitude
        omega: Unit direction, e_1 by default
        allow_negative_sigma: Accept sigma < 0 (branch tracing only)
        cond_max: Condition estimate above which the solve is refused
        rotated_basis: Use psi_j composed with the rotation taking omega to e_1

    Raises:
        PreconditionError: sigma < 0 without allow_negative_sigma
        ConditioningError: near-singular shifted system
        ToleranceError: a solve residual above 1e-10 relative
    """
    if sigma < 0.0 and not allow_negative_sigma:
        raise PreconditionError(f"dispersion matrix needs sigma >= 0, got {sigma:g}")
    res = ShiftedResolvent(ops, complex(sigma, tau), r, omega, cond_max)
    rotation = _momentum_rotation(res.omega) if rotated_basis else None
    entries, _, residual = _dispersion_parts(ops, res, _basis_columns(ops, rotation))
    return DispersionMatrix(
        sigma=float(sigma),
        tau=float(tau),
        r=float(r),
        omega=res.omega,
        entries=entries,
        condition=res.condition,
        residual=residual,
    )


def dispersion_derivative(
    ops: OperatorSet,
    sigma: float,
    tau: float,
    r: float,
    omega: np.ndarray | None = None,
    allow_negative_sigma: bool = False,
) -> tuple[Matrix, Matrix]:
    """d D_jk / d lambda = -(R1^2 (omega . xi) psi_j, psi_k) and d/d tau = i d/d lambda."""
    if sigma < 0.0 and not allow_negative_sigma:
        raise PreconditionError(f"dispersion derivative needs sigma >= 0, got {sigma:g}")
    res = ShiftedResolvent(ops, complex(sigma, tau), r, omega)
    return _derivative_from(ops, res)


def _derivative_from(ops: OperatorSet, res: ShiftedResolvent) -> tuple[Matrix, Matrix]:
    cols = ops.basis.columns
    _, x, _ = _dispersion_parts(ops, res, cols)
    y = res.solve(x, check=False)
    d_lam = -(y.T @ (ops.grid.weights[:, None] * cols))
    return d_lam, 1j * d_lam


class AlphaConstants(BaseModel):
    """Inner products that fix the dispersion matrix at the origin."""

    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    projected1: float
    projected_last: float

    @property
    def remainder3(self) -> float:
        return self.alpha3 - self.projected1

    @property
    def remainder4(self) -> float:
        return self.alpha4 - self.projected_last


def alpha_constants(ops: OperatorSet) -> AlphaConstants:
    """alpha_1..alpha_4 and the projected norms ||P(xi_1 psi_1)||^2, ||P(xi_1 psi_{d+1})||^2."""
    grid = ops.grid
    cols = ops.basis.columns
    xi1 = grid.nodes[:, 0]
    psi0, psi1, last = cols[:, 0], cols[:, 1], cols[:, -1]
    res = ShiftedResolvent(ops, 0.0, 0.0)
    rhs = np.column_stack([xi1 * psi1, xi1 * last])
    sol = res.solve(rhs)
    proj = ops.basis.coefficients(rhs)
    return AlphaConstants(
        alpha1=float(grid.inner(xi1 * psi0, psi1).real),
        alpha2=float(grid.inner(xi1 * psi1, last).real),
        alpha3=float(grid.inner(sol[:, 0], rhs[:, 0]).real),
        alpha4=float(grid.inner(sol[:, 1], rhs[:, 1]).real),
        projected1=float(np.sum(proj[:, 0] ** 2)),
        projected_last=float(np.sum(proj[:, 1] ** 2)),
    )


class EtaResult(BaseModel):
    """Labelled eigenvalues eta_j of D with right eigenvectors (columns of Z)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eta: np.ndarray
    vectors: Matrix
    inverse: Matrix
    overlaps: np.ndarray


def _overlap(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))


def eigen_eta(matrix: DispersionMatrix, reference: Matrix | None = None) -> EtaResult:
    """Eigenvalues of D labelled by branch.

    Transverse labels j = 2..d take D_jj with unit eigenvectors. The
    (0, 1, d+1) block is solved densely; without `reference` its eigenvalues
    are labelled by descending real part, otherwise by maximal eigenvector
    overlap with the columns of `reference`.

    Raises:
        MultiplicityError: two block eigenvalues within 1e-8 max(1, |eta|)
    """
    entries = matrix.entries
    m = entries.shape[0]
    idx = matrix.block_index
    vals, vecs = eig(matrix.block())
    scale = max(1.0, float(np.max(np.abs(vals))))
    gaps = np.abs(vals[:, None] - vals[None, :]) + np.eye(3) * np.inf
    if gaps.min() < 1e-8 * scale:
        raise MultiplicityError(f"dispersion block has a repeated eigenvalue near {vals[np.argmin(gaps.min(axis=1))]:.6g}")

    if reference is None:
        order = np.argsort(-vals.real)
        overlaps = np.ones(3)
    else:
        ref = reference[np.ix_(idx, idx)]
        score = np.array([[_overlap(ref[:, a], vecs[:, b]) for b in range(3)] for a in range(3)])
        rows, order = linear_sum_assignment(-score)
        overlaps = score[rows, order]
    vals, vecs = vals[order], vecs[:, order]

    eta = np.diag(entries).astype(complex).copy()
    z = np.eye(m, dtype=complex)
    z[np.ix_(idx, idx)] = vecs
    eta[idx] = vals
    full_overlaps = np.ones(m)
    full_overlaps[idx] = overlaps
    return EtaResult(eta=eta, vectors=z, inverse=np.linalg.inv(z), overlaps=full_overlaps)


def mu_value(eta: complex, lam: complex, r: float) -> complex:
    """mu = (1 - 2 pi i r eta) / (lambda + 1); mu = 1 on a branch."""
    return (1.0 - 2j * np.pi * r * eta) / (lam + 1.0)


class EigenBranch(BaseModel):
    """Sampled branch lambda_j(r) with its asymptotic fit."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    j: int
    r_samples: np.ndarray
    lambda_samples: np.ndarray
    mu_defect: np.ndarray
    truncated: bool = False
    last_good_r: float | None = None
    tau1_fit: float | None = None
    sigma2_fit: float | None = None
    fit_residual: float | None = None


def _newton_point(
    ops: OperatorSet,
    j: int,
    r: float,
    seed: complex,
    reference: Matrix,
    max_iter: int,
    warned: list[bool],
) -> tuple[complex, EtaResult, int] | None:
    def evaluate(lam: complex) -> tuple[complex, EtaResult, ShiftedResolvent]:
        if lam.real < 0.0 and not warned[0]:
            logger.warning("branch %d entered sigma < 0 at r=%.4g; using the discrete resolvent there", j, r)
            warned[0] = True
        res = ShiftedResolvent(ops, lam, r)
        entries, _, _ = _dispersion_parts(ops, res, ops.basis.columns)
        dm = DispersionMatrix(
            sigma=lam.real, tau=lam.imag, r=r, omega=res.omega,
            entries=entries, condition=res.condition, residual=0.0,
        )
        eta = eigen_eta(dm, reference)
        return lam + 2j * np.pi * r * eta.eta[j], eta, res

    lam = complex(seed)
    f, eta, res = evaluate(lam)
    for it in range(max_iter):
        if abs(f) <= NEWTON_TOL:
            return lam, eta, it
        d_lam, _ = _derivative_from(ops, res)
        deta = eta.inverse[j, :] @ d_lam @ eta.vectors[:, j]
        step = -f / (1.0 + 2j * np.pi * r * deta)
        for _ in range(7):
            trial = lam + step
            f_trial, eta_trial, res_trial = evaluate(trial)
            if abs(f_trial) < abs(f):
                break
            step *= 0.5
        else:
            return None
        lam, f, eta, res = trial, f_trial, eta_trial, res_trial
    return (lam, eta, max_iter) if abs(f) <= NEWTON_TOL else None


def trace_branch(
    ops: OperatorSet,
    j: int,
    r_grid: np.ndarray,
    max_iter: int = 30,
    fit: bool = True,
) -> EigenBranch:
    """Follow lambda_j(r) = -2 pi i r eta_j(lambda_j(r), r) over ascending r.

    Damped Newton on F(lambda) = lambda + 2 pi i r eta_j(lambda); the first
    point is seeded from eta_j at the origin, later ones by linear
    extrapolation. Eigenvector labels are carried from one r to the next.
    On Newton failure the branch is truncated at the last converged r.

    Raises:
        PreconditionError: r_grid not ascending and non-negative, or j out of range
        BranchTrackingError: eigenvector overlap between neighbouring r below 0.7
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid < 0.0) or np.any(np.diff(r_grid) <= 0.0):
        raise PreconditionError("r_grid must be non-negative and strictly ascending")
    if not 0 <= j <= ops.d + 1:
        raise PreconditionError(f"branch index {j} outside 0..{ops.d + 1}")

    origin = eigen_eta(dispersion_matrix(ops, 0.0, 0.0, 0.0))
    reference = origin.vectors
    warned = [False]
    rs: list[float] = []
    lams: list[complex] = []
    mus: list[float] = []
    truncated = False

    for r in r_grid:
        if r == 0.0:
            rs.append(0.0)
            lams.append(0.0j)
            mus.append(0.0)
            continue
        if len(lams) >= 2 and rs[-1] > rs[-2]:
            slope = (lams[-1] - lams[-2]) / (rs[-1] - rs[-2])
            seed = lams[-1] + slope * (r - rs[-1])
        elif lams and rs[-1] > 0.0:
            seed = lams[-1] * (r / rs[-1])
        else:
            seed = -2j * np.pi * r * origin.eta[j]
        point = _newton_point(ops, j, float(r), seed, reference, max_iter, warned)
        if point is None:
            logger.warning("branch %d: Newton failed at r=%.4g, truncating", j, r)
            truncated = True
            break
        lam, eta, iters = point
        if eta.overlaps[j] < MIN_OVERLAP:
            raise BranchTrackingError(
                f"branch {j} lost eigenvector continuity at r={r:.4g}",
                r=float(r),
                overlap=float(eta.overlaps[j]),
            )
        logger.debug("branch %d r=%.4g lambda=%s in %d Newton steps", j, r, lam, iters)
        rs.append(float(r))
        lams.append(lam)
        mus.append(float(abs(mu_value(eta.eta[j], lam, r) - 1.0)))
        reference = eta.vectors

    branch = EigenBranch(
        j=j,
        r_samples=np.array(rs),
        lambda_samples=np.array(lams, dtype=complex),
        mu_defect=np.array(mus),
        truncated=truncated,
        last_good_r=rs[-1] if rs else None,
    )
    positive = branch.r_samples > 0.0
    if fit and positive.sum() >= 6:
        rp = branch.r_samples[positive]
        if rp.max() / rp.min() >= 10.0:
            tau1, sigma2, residual = fit_asymptotics(branch)
            branch = branch.model_copy(update={"tau1_fit": tau1, "sigma2_fit": sigma2, "fit_residual": residual})
    return branch


def trace_branches(
    ops: OperatorSet,
    r_grid: np.ndarray,
    branches: list[int] | None = None,
    threads: int | None = None,
) -> list[EigenBranch]:
    """All branches (default j = 0..d+1), traced in parallel."""
    js = list(range(ops.d + 2)) if branches is None else branches
    return parallel_map(lambda j: trace_branch(ops, j, r_grid), js, threads)


def fit_asymptotics(branch: EigenBranch, cond_max: float = 1e8) -> tuple[float, float, float]:
    """Least-squares tau1, sigma2 from Im lambda = tau1 r + c r^3, Re lambda = sigma2 r^2 + c' r^3.

    Returns:
        (tau1, sigma2, max relative deviation of the fitted lambda)

    Raises:
        PreconditionError: fewer than 6 positive samples or less than a decade of r
        ConditioningError: a design matrix with condition number above cond_max
    """
    keep = branch.r_samples > 0.0
    r = branch.r_samples[keep]
    lam = branch.lambda_samples[keep]
    if len(r) < 6 or r.max() / r.min() < 10.0:
        raise PreconditionError("fit needs at least 6 samples spanning a decade of r")
    design_re = np.column_stack([np.ones_like(r), r])
    design_im = np.column_stack([np.ones_like(r), r * r])
    for design in (design_re, design_im):
        cond = float(np.linalg.cond(design))
        if cond > cond_max:
            raise ConditioningError("asymptotic fit design is ill-conditioned", cond)
    (sigma2, c_re), *_ = np.linalg.lstsq(design_re, lam.real / r**2, rcond=None)
    (tau1, c_im), *_ = np.linalg.lstsq(design_im, lam.imag / r, rcond=None)
    fitted = (sigma2 * r**2 + c_re * r**3) + 1j * (tau1 * r + c_im * r**3)
    residual = float(np.max(np.abs(fitted - lam) / np.abs(lam)))
    return float(tau1), float(sigma2), residual


def sigma2_closed_form(ops: OperatorSet, j: int) -> float:
    """r^2 coefficient of Re lambda_j: -4 pi^2 ((-L + P)^{-1} u, u), u = P^perp xi_1 phi_j.

    phi_j is the origin eigenvector of D for label j, normalized in L^2.
    """
    origin = eigen_eta(dispersion_matrix(ops, 0.0, 0.0, 0.0))
    z = origin.vectors[:, j].real
    phi = ops.basis.columns @ (z / np.linalg.norm(z))
    f = ops.grid.nodes[:, 0] * phi
    u = f - ops.basis.project(f)
    sol = ShiftedResolvent(ops, 0.0, 0.0).solve(u)
    return float(-4.0 * np.pi**2 * ops.grid.inner(sol, u).real)


def branch_oracle(ops: OperatorSet, r: float, count: int | None = None) -> np.ndarray:
    """Eigenvalues of the dense B(r e_1) closest to 0, sorted by modulus."""
    count = ops.d + 2 if count is None else count
    vals = np.linalg.eigvals(assemble_Bhat(ops, _unit(None, ops.d) * r).entries)
    return vals[np.argsort(np.abs(vals))[:count]]


def oracle_gap(ops: OperatorSet, branch: EigenBranch) -> np.ndarray:
    """|lambda_j(r) - nearest oracle eigenvalue| at every sampled r."""
    gaps = []
    for r, lam in zip(branch.r_samples, branch.lambda_samples):
        near = branch_oracle(ops, float(r))
        gaps.append(float(np.min(np.abs(near - lam))))
    return np.array(gaps)


def resolvent_direct(ops: OperatorSet, lam: complex, y: np.ndarray, u: np.ndarray) -> np.ndarray:
    """(lambda - B(y))^{-1} u by a dense solve."""
    b = assemble_Bhat(ops, y).entries
    return np.linalg.solve(lam * np.eye(ops.grid.n) - b, u)


ResolventForm = Literal["woodbury", "eigen"]


def resolvent_decomposed(
    ops: OperatorSet,
    lam: complex,
    r: float,
    u: np.ndarray,
    form: ResolventForm = "woodbury",
    omega: np.ndarray | None = None,
) -> np.ndarray:
    """(lambda - B(r omega))^{-1} u rebuilt from R1 and the invariant subspace.

    x = R1 u + R1 Psi (I - G)^{-1} Psi^T W R1 u with G = Psi^T W R1 Psi.
    The "eigen" form writes (I - G)^{-1} = Z diag(1 / (1 - mu_j)) Z^{-1}
    from the eigenpairs (eta_j, Z) of the dispersion matrix.
    """
    res = ShiftedResolvent(ops, lam, r, omega)
    cols = ops.basis.columns
    w = ops.grid.weights
    r1u = res.solve(u, check=False)
    coeff = cols.T @ (w * r1u)
    if form == "woodbury":
        r1psi = res.solve(cols.astype(complex), check=False)
        g = cols.T @ (w[:, None] * r1psi)
        inner = np.linalg.solve(np.eye(cols.shape[1]) - g, coeff)
    elif form == "eigen":
        entries, _, _ = _dispersion_parts(ops, res, cols)
        eta, z = eig(entries)
        mu = mu_value(eta, res.lam, r)
        inner = z @ (np.linalg.solve(z, coeff) / (1.0 - mu))
        r1psi = res.solve(cols.astype(complex), check=False)
    else:
        raise PreconditionError(f"unknown resolvent form {form!r}")
    return r1u + r1psi @ inner


def projection_identity_defect(ops: OperatorSet, lam: complex, f: np.ndarray) -> float:
    """||P (lambda - L + P)^{-1} f - P f / (lambda + 1)|| / ||f||."""
    res = ShiftedResolvent(ops, lam, 0.0)
    lhs = ops.basis.project(res.solve(f.astype(complex)))
    rhs = ops.basis.project(f) / (lam + 1.0)
    return ops.grid.norm(lhs - rhs) / ops.grid.norm(f)


def rotated_dispersion_defect(
    ops: OperatorSet, omega: np.ndarray, sigma: float, tau: float, r: float
) -> float:
    """max |D(omega) in the rotated basis - D(e_1)| entrywise."""
    base = dispersion_matrix(ops, sigma, tau, r)
    turned = dispersion_matrix(ops, sigma, tau, r, omega=omega, rotated_basis=True)
    return float(np.max(np.abs(turned.entries - base.entries)))


class EigenProjections(BaseModel):
    """Rank-one projections P_j = Psi z_j (Z^{-1})_j Psi^T W on the invariant space."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eta: np.ndarray
    projections: list[Matrix]
    vectors: Matrix
    partition_defect: float


def eigenprojections(ops: OperatorSet, sigma: float, tau: float, r: float) -> EigenProjections:
    """Biorthogonal eigenprojections of the dispersion operator; they sum to P.

    Raises:
        MultiplicityError: repeated eigenvalue in the coupled block
    """
    eta = eigen_eta(dispersion_matrix(ops, sigma, tau, r))
    cols = ops.basis.columns
    left = cols.T * ops.grid.weights[None, :]
    projections = [
        np.outer(cols @ eta.vectors[:, k], eta.inverse[k, :] @ left) for k in range(len(eta.eta))
    ]
    total = np.sum(projections, axis=0)
    defect = float(np.max(np.abs(total - ops.P)))
    return EigenProjections(
        eta=eta.eta,
        projections=projections,
        vectors=cols @ eta.vectors,
        partition_defect=defect,
    )


def origin_checks(ops: OperatorSet) -> list[Certificate]:
    """Origin pattern of D, its eigenvalues and the alpha constants as certificates."""
    d = ops.d
    alphas = alpha_constants(ops)
    dm = dispersion_matrix(ops, 0.0, 0.0, 0.0)
    expected = np.zeros((3, 3))
    expected[0, 1] = expected[1, 0] = alphas.alpha1
    expected[1, 2] = expected[2, 1] = alphas.alpha2
    pattern = float(np.max(np.abs(dm.block() - expected)))
    eta = eigen_eta(dm).eta[dm.block_index]
    root = np.sqrt(alphas.alpha1**2 + alphas.alpha2**2)
    exact = np.sqrt(1.0 + 2.0 / d)
    return [
        certify_at_most("spectral.alpha1", abs(alphas.alpha1 - 1.0), 1e-3),
        certify_at_most("spectral.alpha2", abs(alphas.alpha2 - np.sqrt(2.0 / d)), 1e-3),
        Certificate(
            tag="spectral.alpha_remainder",
            measured=min(alphas.remainder3, alphas.remainder4),
            bound=0.0,
            passed=alphas.remainder3 > 0.0 and alphas.remainder4 > 0.0,
            detail="alpha_3 - ||P xi_1 psi_1||^2 and alpha_4 - ||P xi_1 psi_{d+1}||^2",
        ),
        certify_at_most("spectral.origin_pattern", pattern, 1e-3),
        certify_at_most(
            "spectral.origin_eta",
            float(np.max(np.abs(np.sort(eta.real) - np.array([-exact, 0.0, exact])))),
            2e-3,
            f"sqrt(a1^2 + a2^2) = {root:.8f}",
        ),
    ]


def branch_checks(ops: OperatorSet, branches: list[EigenBranch], gaps: list[np.ndarray]) -> list[Certificate]:
    """tau1 pattern, sigma2 sign and closed form, oracle agreement and mu consistency."""
    d = ops.d
    speed = 2.0 * np.pi * np.sqrt(1.0 + 2.0 / d)
    expected_tau = {0: -speed, d + 1: speed}
    checks = []
    for branch, gap in zip(branches, gaps):
        j = branch.j
        checks.append(certify_at_most(f"spectral.oracle_gap[{j}]", float(np.max(gap)), 1e-6))
        checks.append(certify_at_most(f"spectral.mu_consistency[{j}]", float(np.max(branch.mu_defect)), 1e-9))
        if branch.tau1_fit is None or branch.sigma2_fit is None:
            continue
        target = expected_tau.get(j, 0.0)
        checks.append(
            certify_at_most(f"spectral.tau1[{j}]", abs(branch.tau1_fit - target), 0.02 * speed, f"expected {target:.6f}")
        )
        checks.append(
            Certificate(
                tag=f"spectral.sigma2_negative[{j}]",
                measured=branch.sigma2_fit,
                bound=0.0,
                passed=branch.sigma2_fit < 0.0,
            )
        )
        closed = sigma2_closed_form(ops, j)
        checks.append(
            certify_at_most(
                f"spectral.sigma2_closed_form[{j}]",
                abs(branch.sigma2_fit - closed) / abs(closed),
                0.03,
                f"closed form {closed:.8g}",
            )
        )
    return checks


@mapper(remove_empty=False)
def _branch_row(d: dict):
    lam = complex(grab(d, "lambda"))
    near = complex(grab(d, "oracle"))
    return {
        "j": grab(d, "j"),
        "r": grab(d, "r"),
        "re_lambda": lam.real,
        "im_lambda": lam.imag,
        "oracle_re": near.real,
        "oracle_im": near.imag,
        "abs_gap": abs(near - lam),
    }


def branch_rows(branches: list[EigenBranch], oracle: dict[int, np.ndarray]) -> list[dict[str, float]]:
    """CSV rows j, r, re_lambda, im_lambda, oracle_re, oracle_im, abs_gap."""
    rows = []
    for branch in branches:
        near = oracle.get(branch.j)
        for k, (r, lam) in enumerate(zip(branch.r_samples, branch.lambda_samples)):
            o = near[k] if near is not None else np.nan
            rows.append(_branch_row({"j": branch.j, "r": float(r), "lambda": lam, "oracle": o}))
    return rows
