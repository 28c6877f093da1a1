"""
Evolution by e^{tB(y)} and e^{tA(y)} and the checks built on it.

Provides:
- Propagator / evolve: e^{tB}u by eigendecomposition, scaling-and-squaring otherwise
- evolve_A: the explicit multiplier e^{(-2 pi i y . xi - nu) t}
- rho_alpha, lemma_constant, weighted_A_decay_check: the near-origin weight and A-decay
- decay_probe: the certified ratio Q(t) for one frequency
- semigroup_law_defect, generator_slope, contraction_defect, growth_cap_check,
  duhamel_defect: semigroup invariants as callable checks
- contour_semigroup: truncated inverse-Laplace reconstruction (diagnostic)
- YQuadrature / xspace_decay: whole-space decay synthesized over frequency
"""

import logging
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from .discretize import DiscreteOperator, OperatorSet, VelocityGrid, assemble_Bhat
from .errors import PreconditionError, ResolutionError
from .kernel import KernelParams, nu_batch
from .quad_lib import panel_rule, sphere_area, sphere_rule
from .reports import Certificate, certify_at_most, certify_finite
from .types import Matrix, Vector
from .utils import parallel_map

logger = logging.getLogger(__name__)

EIG_COND_MAX = 1e6
CROSS_CHECK_RTOL = 1e-8


def _check_times(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times < 0.0) or np.any(np.diff(times) < 0.0):
        raise PreconditionError("times must be a non-negative ascending sequence")
    return times


class Propagator:
    """e^{tB} for one dense generator B.

    Uses B = V diag(lambda) V^{-1} when cond(V) <= cond_max, otherwise
    scipy's scaling-and-squaring expm with matrices cached by step length.
    The eigen route is compared against expm at the first positive time it
    is asked for; a disagreement above 1e-8 switches to expm.
    """

    def __init__(self, op: DiscreteOperator | Matrix, cond_max: float = EIG_COND_MAX, check: bool = True):
        self.generator = op.entries if isinstance(op, DiscreteOperator) else np.asarray(op)
        self.generator = self.generator.astype(complex)
        self.check = check
        self._cache: dict[float, Matrix] = {}
        vals, vecs = np.linalg.eig(self.generator)
        self.condition = float(np.linalg.cond(vecs))
        if self.condition <= cond_max:
            self.method = "eig"
            self.eigenvalues = vals
            self.vectors = vecs
            self.inverse = np.linalg.inv(vecs)
        else:
            logger.warning(
                "eigenvector condition %.3e above %.1e; evolving with expm", self.condition, cond_max
            )
            self.method = "expm"
            self.eigenvalues = vals

    def _expm(self, t: float) -> Matrix:
        key = float(t)
        if key not in self._cache:
            self._cache[key] = expm(key * self.generator)
        return self._cache[key]

    def _cross_check(self, u: np.ndarray, t: float) -> None:
        self.check = False
        direct = self._expm(t) @ u
        spectral = self.vectors @ (np.exp(t * self.eigenvalues) * (self.inverse @ u))
        scale = max(np.linalg.norm(direct), 1e-300)
        diff = float(np.linalg.norm(direct - spectral) / scale)
        if diff > CROSS_CHECK_RTOL:
            logger.warning("eigen evolution differs from expm by %.3e at t=%.4g; switching to expm", diff, t)
            self.method = "expm"
        else:
            logger.debug("eigen evolution agrees with expm to %.3e at t=%.4g", diff, t)

    def matrix(self, t: float) -> Matrix:
        """Dense e^{tB}."""
        if t == 0.0:
            return np.eye(len(self.generator), dtype=complex)
        if self.method == "eig":
            return (self.vectors * np.exp(t * self.eigenvalues)[None, :]) @ self.inverse
        return self._expm(t)

    def apply(self, u: np.ndarray, t: float) -> np.ndarray:
        """e^{tB}u for one time; u may be a vector or a stack of columns."""
        u = np.asarray(u, dtype=complex)
        if t == 0.0:
            return u.copy()
        if self.method == "eig":
            scale = np.exp(t * self.eigenvalues)
            c = self.inverse @ u
            return self.vectors @ (scale[:, None] * c if c.ndim > 1 else scale * c)
        return self._expm(t) @ u

    def evolve(self, u: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Rows e^{t_k B} u for ascending times; t = 0 returns u unchanged."""
        times = _check_times(times)
        u = np.asarray(u, dtype=complex)
        positive = times[times > 0.0]
        if self.check and self.method == "eig" and len(positive):
            self._cross_check(u, float(positive[0]))
        out = np.empty((len(times), len(u)), dtype=complex)
        if self.method == "eig":
            c = self.inverse @ u
            for k, t in enumerate(times):
                out[k] = u if t == 0.0 else self.vectors @ (np.exp(t * self.eigenvalues) * c)
            return out
        current, last = u, 0.0
        for k, t in enumerate(times):
            if t > last:
                current = self._expm(round(t - last, 14)) @ current
                last = t
            out[k] = current
        return out


def evolve(op: DiscreteOperator | Matrix, u: np.ndarray, times: np.ndarray) -> np.ndarray:
    """e^{tB}u at every time, shape (len(times), n)."""
    return Propagator(op).evolve(u, times)


def evolve_A(
    params: KernelParams,
    grid: VelocityGrid,
    y: np.ndarray,
    u: np.ndarray,
    times: np.ndarray,
    nu: Vector | None = None,
) -> np.ndarray:
    """Pointwise e^{(-2 pi i y . xi - nu(xi)) t} u, shape (len(times), n)."""
    times = _check_times(times)
    nu = nu_batch(params, grid.nodes) if nu is None else nu
    rate = -2j * np.pi * (grid.nodes @ np.asarray(y, dtype=float)) - nu
    return np.exp(np.outer(times, rate)) * np.asarray(u)[None, :]


def rho_alpha(y: np.ndarray | float, alpha: float, r3: float | None = None) -> float:
    """|y|^{-2 alpha} log(1/|y| + e) for alpha in [0, 1), |y|^{-2 alpha} for alpha >= 1.

    With r3, the weight is multiplied by the indicator of |y| <= r3.
    """
    r = float(np.linalg.norm(y))
    if r3 is not None and r > r3:
        return 0.0
    if r == 0.0:
        return float("inf")
    if alpha < 1.0:
        return r ** (-2.0 * alpha) * np.log(1.0 / r + np.e)
    return r ** (-2.0 * alpha)


def lemma_constant(nu0: float, alpha: float) -> float:
    """sup_x x^alpha e^{-nu0 x} = (alpha / (nu0 e))^alpha."""
    if alpha == 0.0:
        return 1.0
    return (alpha / (nu0 * np.e)) ** alpha


def measure_lemma_constant(nu0: float, alpha: float) -> float:
    """Numerical maximum of x^alpha e^{-nu0 x} on [0, 10 alpha / nu0 + 1]."""
    upper = 10.0 * alpha / nu0 + 1.0
    res = minimize_scalar(
        lambda x: -(x**alpha) * np.exp(-nu0 * x),
        bounds=(0.0, upper),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(-res.fun)


def weighted_A_decay_check(
    ops: OperatorSet,
    y: np.ndarray,
    alpha: float,
    beta: float,
    u: np.ndarray,
    times: np.ndarray,
) -> Certificate:
    """sup_t ||e^{tA}u||_beta (1+t)^alpha / ||u||_{beta + alpha gamma} against
    C = max(1, 2^{alpha-1}) (1 + (alpha / (nu0 e))^alpha).
    """
    grid = ops.grid
    vals = evolve_A(ops.params, grid, y, u, times, ops.nu)
    norms = grid.norm_many(vals, beta)
    ratio = float(np.max(norms * (1.0 + np.asarray(times)) ** alpha) / grid.norm(u, beta + alpha * ops.params.gamma))
    bound = max(1.0, 2.0 ** (alpha - 1.0)) * (1.0 + lemma_constant(ops.nu0, alpha))
    return certify_at_most("semigroup.A_decay", ratio, bound, f"alpha={alpha}, beta={beta}")


class SemigroupProbe(BaseModel):
    """Weighted norms of e^{tB(y)}u and the certified ratio Q(t)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    y: list[float]
    times: np.ndarray
    norms: np.ndarray
    ratios: np.ndarray
    alpha: float
    beta: float
    rho: float
    sup_ratio: float
    resonance: bool


class DecayFit(BaseModel):
    """Algebraic fit norm ~ C t^{-exponent} over a window of times."""

    exponent: float
    constant: float
    window: tuple[float, float]
    weight: str
    residual: float


def fit_decay(times: np.ndarray, norms: np.ndarray, weight: str, decades: float = 1.0) -> DecayFit:
    """Least squares of log norm against log t over the last `decades` of times."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    t_max = times.max()
    keep = (times >= t_max / 10.0**decades) & (times > 0.0) & (norms > 0.0)
    x = np.log(times[keep])
    z = np.log(norms[keep])
    slope, intercept = np.polyfit(x, z, 1)
    residual = float(np.max(np.abs(slope * x + intercept - z))) if len(x) else float("nan")
    return DecayFit(
        exponent=float(-slope),
        constant=float(np.exp(intercept)),
        window=(float(times[keep].min()), float(t_max)),
        weight=weight,
        residual=residual,
    )


def decay_probe(
    ops: OperatorSet,
    y: np.ndarray,
    alpha: float,
    beta: float,
    u: np.ndarray,
    times: np.ndarray,
    propagator: Propagator | None = None,
) -> tuple[SemigroupProbe, DecayFit]:
    """Q(t) = ||e^{tB}u||_beta (1+t)^alpha / ((1 + rho_alpha(y)) ||u||_{beta + alpha gamma}).

    At y = 0 the weight is dropped and an input with a component in the
    null space of L is flagged as the excluded zero-eigenvalue resonance.
    """
    y = np.asarray(y, dtype=float)
    times = _check_times(times)
    grid = ops.grid
    prop = propagator or Propagator(assemble_Bhat(ops, y))
    vals = prop.evolve(u, times)
    norms = grid.norm_many(vals, beta)
    at_origin = float(np.linalg.norm(y)) == 0.0
    rho = 0.0 if at_origin else rho_alpha(y, alpha)
    base = grid.norm(u, beta + alpha * ops.params.gamma)
    ratios = norms * (1.0 + times) ** alpha / ((1.0 + rho) * base)
    resonance = at_origin and grid.norm(ops.basis.project(u)) > 1e-12 * grid.norm(u)
    if resonance:
        logger.info("y = 0 with a null-space component: Q(t) growth is the zero-eigenvalue resonance")
    probe = SemigroupProbe(
        y=y.tolist(),
        times=times,
        norms=norms,
        ratios=ratios,
        alpha=alpha,
        beta=beta,
        rho=rho,
        sup_ratio=float(ratios.max()),
        resonance=resonance,
    )
    return probe, fit_decay(times, norms, f"L2_{beta}")


def semigroup_law_defect(prop: Propagator, u: np.ndarray, t: float, s: float) -> float:
    """||e^{(t+s)B}u - e^{tB} e^{sB} u|| / ||u||."""
    whole = prop.matrix(t + s) @ u
    split = prop.matrix(t) @ (prop.matrix(s) @ u)
    return float(np.linalg.norm(whole - split) / np.linalg.norm(u))


def generator_slope(prop: Propagator, u: np.ndarray, steps: np.ndarray) -> tuple[float, np.ndarray]:
    """log-log slope of ||(e^{hB}u - u)/h - Bu|| against h; first order gives 1."""
    bu = prop.generator @ u
    errors = np.array([np.linalg.norm((prop.matrix(h) @ u - u) / h - bu) for h in steps])
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope), errors


def contraction_defect(ops: OperatorSet, vals: np.ndarray) -> float:
    """Largest relative increase of the unweighted norm along a trajectory."""
    norms = ops.grid.norm_many(vals)
    if len(norms) < 2:
        return 0.0
    return float(max(np.max(np.diff(norms)), 0.0) / norms[0])


def growth_cap_check(
    ops: OperatorSet, prop: Propagator, beta: float, times: np.ndarray
) -> Certificate:
    """||e^{tB}|| on L^2_beta against e^{t ||K||_{L^2_beta}}."""
    scale = np.sqrt(ops.grid.weights) * ops.grid.weight(beta)
    k_norm = float(np.linalg.norm(scale[:, None] * ops.K_eff / scale[None, :], 2))
    worst = 0.0
    for t in times:
        e = prop.matrix(float(t))
        norm = float(np.linalg.norm(scale[:, None] * e / scale[None, :], 2))
        worst = max(worst, norm / np.exp(t * k_norm))
    return certify_at_most("semigroup.growth_cap", worst, 1.0 + 1e-10, f"||K||_beta = {k_norm:.6g}")


def duhamel_defect(
    ops: OperatorSet,
    y: np.ndarray,
    u: np.ndarray,
    t: float,
    prop: Propagator | None = None,
    order: int = 16,
    max_width: float = 0.25,
) -> float:
    """Relative defect of e^{tB}u = e^{tA}u + int_0^t e^{(t-s)A} K e^{sB}u ds.

    Composite Gauss-Legendre in s, `order` nodes on panels no wider than max_width.
    """
    y = np.asarray(y, dtype=float)
    prop = prop or Propagator(assemble_Bhat(ops, y))
    a = ops.a_hat(y)
    panels = max(1, int(np.ceil(t / max_width)))
    s, w = panel_rule(np.linspace(0.0, t, panels + 1), order)
    along = prop.evolve(u, np.concatenate([[0.0], s]))[1:]
    integrand = np.exp(np.outer(t - s, a)) * (along @ ops.K_eff.T)
    rhs = np.exp(t * a) * u + w @ integrand
    lhs = prop.evolve(u, np.array([t]))[0]
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs))


def contour_semigroup(
    prop: Propagator,
    u: np.ndarray,
    t: float,
    a: float = 0.5,
    cutoff: float = 100.0,
    order: int = 16,
) -> np.ndarray:
    """Truncated Bromwich integral (1/2 pi i) int_{a - iT}^{a + iT} e^{lambda t}(lambda - B)^{-1}u d lambda.

    Evaluated per eigenvalue with Gauss-Legendre panels of width about pi / t.

    Raises:
        PreconditionError: t <= 0, or a not right of the spectrum
    """
    if t <= 0.0:
        raise PreconditionError("contour reconstruction needs t > 0")
    if prop.method != "eig":
        raise PreconditionError("contour reconstruction needs a diagonalizable generator")
    lam = prop.eigenvalues
    if a <= float(lam.real.max()):
        raise PreconditionError("the contour must lie right of the spectrum")
    panels = max(2, int(np.ceil(2.0 * cutoff * t / np.pi)))
    eta, w = panel_rule(np.linspace(-cutoff, cutoff, panels + 1), order)
    z = a + 1j * eta
    factor = (w * np.exp(z * t))[:, None] / (z[:, None] - lam[None, :])
    scalar = factor.sum(axis=0) / (2.0 * np.pi)
    return prop.vectors @ (scalar * (prop.inverse @ np.asarray(u, dtype=complex)))


class YQuadrature(BaseModel):
    """Frequency quadrature: trapezoid in s = log|y| times a half sphere rule.

    Weights include the Jacobian |y|^d. The half rule assumes the integrand
    is even in y, which holds for norms of real data.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d: int
    radii: np.ndarray
    radial_weights: np.ndarray
    directions: np.ndarray
    direction_weights: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return (self.radii[:, None, None] * self.directions[None, :, :]).reshape(-1, self.d)

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.radial_weights, self.direction_weights).ravel()

    def coarsened(self) -> "YQuadrature":
        """Every other radial node with the doubled trapezoid step."""
        if len(self.radii) % 2 == 0:
            raise PreconditionError("coarsening needs an odd number of radial nodes")
        s = np.log(self.radii[::2])
        return YQuadrature(
            d=self.d,
            radii=self.radii[::2],
            radial_weights=_trapezoid(s) * self.radii[::2] ** self.d,
            directions=self.directions,
            direction_weights=self.direction_weights,
        )


def _trapezoid(s: np.ndarray) -> np.ndarray:
    h = s[1] - s[0]
    w = np.full(len(s), h)
    w[0] = w[-1] = 0.5 * h
    return w


def build_y_quadrature(
    d: int = 3,
    count: int = 41,
    y_min: float = 1e-4,
    y_max: float = 3.0,
    sphere_points: int = 6,
) -> YQuadrature:
    """Log-uniform radial nodes between y_min and y_max times antipodally halved directions."""
    if count < 3 or count % 2 == 0:
        raise PreconditionError("radial node count must be odd and at least 3")
    s = np.linspace(np.log(y_min), np.log(y_max), count)
    radii = np.exp(s)
    dirs, dw = sphere_rule(d, sphere_points, half=True)
    return YQuadrature(
        d=d,
        radii=radii,
        radial_weights=_trapezoid(s) * radii**d,
        directions=dirs,
        direction_weights=dw * sphere_area(d),
    )


class XSpaceResult(BaseModel):
    """Synthesized ||e^{tB}u||_{L^2_beta(x, xi)} over time."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    norms: np.ndarray
    coarse_norms: np.ndarray
    running_exponent: np.ndarray
    fit: DecayFit


def xspace_decay(
    ops: OperatorSet,
    alpha: float,
    beta: float,
    u_hat: Callable[[np.ndarray], np.ndarray],
    yq: YQuadrature,
    times: np.ndarray,
    threads: int | None = None,
    rtol: float = 0.05,
) -> XSpaceResult:
    """||e^{tB}u||^2 = int ||e^{tB(y)} u_hat(y)||_beta^2 dy by the y quadrature.

    The sum is repeated on the coarsened quadrature (same evaluations);
    a relative disagreement above rtol at any time is a resolution failure.

    Raises:
        ResolutionError: fine and coarse syntheses differ by more than rtol
    """
    times = _check_times(times)
    radial = len(yq.radii)
    ndir = len(yq.directions)

    def one(y: np.ndarray) -> np.ndarray:
        u = u_hat(y)
        if not np.any(u):
            return np.zeros(len(times))
        vals = Propagator(assemble_Bhat(ops, y)).evolve(u, times)
        return ops.grid.norm_many(vals, beta) ** 2

    sq = np.array(parallel_map(one, list(yq.points), threads)).reshape(radial, ndir, len(times))
    fine = np.sqrt(np.einsum("r,k,rkt->t", yq.radial_weights, yq.direction_weights, sq))
    coarse_q = yq.coarsened()
    coarse = np.sqrt(np.einsum("r,k,rkt->t", coarse_q.radial_weights, coarse_q.direction_weights, sq[::2]))
    positive = fine > 0.0
    if np.any(positive):
        diff = float(np.max(np.abs(fine[positive] - coarse[positive]) / fine[positive]))
        if diff > rtol:
            raise ResolutionError(
                f"frequency quadrature unresolved: coarse and fine syntheses differ by {diff:.3%}",
                measured=diff,
            )
    running = np.full(len(times), np.nan)
    ok = (times > 0.0) & positive
    if ok.sum() >= 2:
        running[ok] = -np.gradient(np.log(fine[ok]), np.log(times[ok]))
    fit = fit_decay(times, fine, f"L2_{beta}(x, xi), alpha={alpha}")
    return XSpaceResult(times=times, norms=fine, coarse_norms=coarse, running_exponent=running, fit=fit)


def semigroup_checks(
    ops: OperatorSet,
    ys: list[np.ndarray],
    u: np.ndarray,
    times: np.ndarray,
    alphas: list[float],
    beta: float,
) -> tuple[list[Certificate], list[dict[str, float]]]:
    """Contraction, semigroup law, Duhamel, growth cap and decay-ratio stability per frequency.

    Returns:
        (certificates, CSV rows t, y, alpha, norm, certified_ratio)
    """
    checks: list[Certificate] = []
    rows: list[dict[str, float]] = []
    horizon = np.asarray(times, dtype=float)
    half = horizon[horizon <= horizon.max() / 2.0]
    for y in ys:
        y = np.asarray(y, dtype=float)
        r = float(np.linalg.norm(y))
        prop = Propagator(assemble_Bhat(ops, y))
        vals = prop.evolve(u, horizon)
        checks.append(certify_at_most(f"semigroup.contraction[{r:g}]", contraction_defect(ops, vals), 1e-8))
        checks.append(
            certify_at_most(f"semigroup.law[{r:g}]", semigroup_law_defect(prop, u, 0.7, 1.3), 1e-8)
        )
        checks.append(certify_at_most(f"semigroup.duhamel[{r:g}]", duhamel_defect(ops, y, u, 1.0, prop), 1e-5))
        checks.append(growth_cap_check(ops, prop, 1.0, np.array([0.5, 1.0, 2.0])))
        for alpha in alphas:
            probe, _ = decay_probe(ops, y, alpha, beta, u, horizon, prop)
            short, _ = decay_probe(ops, y, alpha, beta, u, half, prop)
            stable = abs(probe.sup_ratio - short.sup_ratio) / short.sup_ratio
            checks.append(certify_finite(f"semigroup.decay_ratio[{r:g},{alpha:g}]", probe.sup_ratio))
            checks.append(certify_at_most(f"semigroup.decay_stability[{r:g},{alpha:g}]", stable, 0.1))
            rows.extend(
                {"y": r, "alpha": alpha, "t": float(t), "norm": float(n), "certified_ratio": float(q)}
                for t, n, q in zip(probe.times, probe.norms, probe.ratios)
            )
    return checks, rows
