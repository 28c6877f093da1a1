"""
Pointwise pieces of the linearized collision operator L = K - nu.

Conventions:
- M(xi) = (2 pi)^{-d/2} exp(-|xi|^2 / 2) is the global Maxwellian.
- The collision kernel is q = |xi - xi_*|^{-gamma} b(cos theta). Positive
  gamma is the *soft* side here (q grows at small relative speed), which is
  the opposite sign to much of the literature.
- The default angular factor is b(c) = q0 |c|; any vectorized b with
  |b(c)| <= q0 |c| can be plugged in through KernelParams.angular.

Provides:
- nu_of_xi / nu_batch: collision frequency by radial quadrature centred at xi
- k1_eval / k1_batch, k2_eval / k2_batch: the gain and loss kernel pieces
- weighted_kernel_integral: weighted L^p integrals of k in xi_*
- kernel_bound_checks, nu_band, weighted_integral_check, verify_appendix_integrals: certifications
- Monte-Carlo and adaptive-quadrature references used as oracles
"""

import logging
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate
from scipy.linalg import null_space
from scipy.special import gamma as gamma_fn

from .errors import PreconditionError, QuadratureError, SingularPointError
from .quad_lib import (
    axial_polar_rule,
    panel_rule,
    singular_radial_rule,
    sphere_area,
    sphere_exp_scaled,
)
from .reports import Certificate, certify_at_most, certify_finite
from .types import AngularFunction, Points, Vector

logger = logging.getLogger(__name__)

# Panel edges near the origin of the hyperplane radius, in units of |xi_* - xi|
_NEAR_EDGES = np.array(
    [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0]
)
# Relative width below which a hyperplane panel is dropped
PANEL_FLOOR = 1e-12


class KernelParams(BaseModel):
    """Physical constants of the collision model."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d: int = Field(default=3, ge=2)
    gamma: float = Field(default=0.5, ge=0.0)
    q0: float = Field(default=1.0, gt=0.0)
    eps: float = Field(default=0.1, gt=0.0, lt=1.0)
    angular: AngularFunction | None = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _soft_range(self) -> "KernelParams":
        if self.gamma >= self.d:
            raise ValueError(f"gamma must satisfy 0 <= gamma < d = {self.d}, got {self.gamma}")
        if self.d == 2:
            logger.warning("d = 2 is a debugging configuration; solver results assume d >= 3")
        return self

    def b(self, c: np.ndarray) -> np.ndarray:
        """Angular factor b(cos theta)."""
        if self.angular is None:
            return self.q0 * np.abs(c)
        return self.angular(c)

    def b_tilde(self, c: np.ndarray) -> np.ndarray:
        """Angular factor after exchanging the parallel and normal parts of xi - xi_*.

        At c = 1 the s -> 0 limit is taken by flooring s at machine epsilon,
        which gives q0 c for the default b in d = 3.
        """
        s = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
        s = np.maximum(s, np.finfo(float).eps)
        return self.b(s) * (c / s) ** (self.d - 2)


class KernelQuad(BaseModel):
    """Resolution of the kernel quadratures."""

    model_config = ConfigDict(frozen=True)

    order: int = Field(default=8, ge=2)
    window: float = Field(default=8.0, gt=0.0)
    theta_panels: int = Field(default=8, ge=1)
    sphere_points: int = 26
    rtol: float = Field(default=1e-6, gt=0.0)
    check: bool = True

    def refined(self) -> "KernelQuad":
        """Same rule with twice the nodes per panel and twice the angular panels."""
        return self.model_copy(
            update={"order": 2 * self.order, "theta_panels": 2 * self.theta_panels}
        )


class CollisionGeometry(BaseModel):
    """Split of (xi + xi_*)/2 into its parts normal and parallel to xi_* - xi."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    xi: Vector
    xi_star: Vector
    a: Vector
    b_vec: Vector


def collision_geometry(xi: Vector, xi_star: Vector) -> CollisionGeometry:
    """Hyperplane projection a and parallel part b of the midpoint."""
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    v = xi_star - xi
    h = np.linalg.norm(v)
    if h == 0.0:
        raise SingularPointError("collision geometry is undefined for xi = xi_*")
    e = v / h
    mid = 0.5 * (xi + xi_star)
    b_vec = (mid @ e) * e
    return CollisionGeometry(xi=xi, xi_star=xi_star, a=mid - b_vec, b_vec=b_vec)


def angular_constant(params: KernelParams) -> float:
    """S_b, the integral of b(cos theta) over S^{d-1}.

    The default b(c) = q0 |c| gives q0 |S^{d-2}| 2/(d-1): 2 pi q0 for d = 3.
    """
    d = params.d
    if params.angular is None:
        return params.q0 * sphere_area(d - 1) * 2.0 / (d - 1)
    value, _ = integrate.quad(
        lambda t: float(params.b(np.cos(t))) * np.sin(t) ** (d - 2), 0.0, np.pi, limit=200
    )
    return sphere_area(d - 1) * value


def _nu_radial(params: KernelParams, r: float, quad: KernelQuad) -> float:
    d = params.d
    nodes, weights = singular_radial_rule(d - 1.0 - params.gamma, r + quad.window, quad.order)
    g = np.exp(-0.5 * (nodes - r) ** 2) * sphere_exp_scaled(d, nodes * r)
    return angular_constant(params) * (2.0 * np.pi) ** (-d / 2.0) * float(weights @ g)


def nu_of_xi(params: KernelParams, xi: Vector, quad: KernelQuad | None = None) -> float:
    """Collision frequency nu(xi) = S_b * integral of M(xi_*) |xi - xi_*|^{-gamma}.

    Polar coordinates centred at xi; the angular integral of the Gaussian is
    done in closed form, the radial one with a Gauss-Jacobi head panel.

    Raises:
        QuadratureError: order and doubled order disagree beyond quad.rtol
    """
    quad = quad or KernelQuad()
    r = float(np.linalg.norm(xi))
    value = _nu_radial(params, r, quad)
    if not quad.check:
        return value
    refined = _nu_radial(params, r, quad.refined())
    if abs(refined - value) > quad.rtol * abs(refined):
        raise QuadratureError(f"collision frequency at |xi| = {r:g} did not converge", value, refined)
    return refined


def nu_batch(params: KernelParams, points: Points, quad: KernelQuad | None = None) -> Vector:
    """nu at many points; nu depends on |xi| only, so each radius is computed once."""
    radii = np.round(np.linalg.norm(np.atleast_2d(points), axis=1), 12)
    unique, inverse = np.unique(radii, return_inverse=True)
    values = np.array([nu_of_xi(params, np.array([r]), quad) for r in unique])
    return values[inverse]


def nu_at_origin(params: KernelParams) -> float:
    """Closed form S_b 2^{-gamma/2} Gamma((d - gamma)/2) / Gamma(d/2)."""
    d, g = params.d, params.gamma
    return angular_constant(params) * 2.0 ** (-g / 2.0) * gamma_fn((d - g) / 2.0) / gamma_fn(d / 2.0)


def nu_monte_carlo(
    params: KernelParams,
    xi: Vector,
    samples: int = 10_000_000,
    seed: int = 0,
    chunk: int = 1_000_000,
) -> tuple[float, float]:
    """Monte-Carlo estimate of nu(xi) with xi_* drawn from M.

    Returns:
        (estimate, standard error)
    """
    rng = np.random.default_rng(seed)
    xi = np.asarray(xi, dtype=float)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        draws = rng.standard_normal((m, params.d))
        vals = np.linalg.norm(draws - xi, axis=1) ** (-params.gamma)
        total += vals.sum()
        total_sq += (vals * vals).sum()
        done += m
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    s_b = angular_constant(params)
    return s_b * mean, s_b * np.sqrt(var / samples)


def _pair_arrays(xi: Points, xi_star: Points) -> tuple[np.ndarray, np.ndarray]:
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    xi_star = np.atleast_2d(np.asarray(xi_star, dtype=float))
    xi, xi_star = np.broadcast_arrays(xi, xi_star)
    return xi, xi_star


def k2_batch(params: KernelParams, xi: Points, xi_star: Points) -> Vector:
    """Loss kernel -(2 pi)^{-d/2} exp(-(|xi|^2 + |xi_*|^2)/4) |xi_* - xi|^{-gamma} S_b."""
    xi, xi_star = _pair_arrays(xi, xi_star)
    h = np.linalg.norm(xi_star - xi, axis=1)
    if params.gamma > 0.0 and np.any(h == 0.0):
        raise SingularPointError("k2 is singular at xi = xi_* for gamma > 0")
    gauss = np.exp(-0.25 * (np.sum(xi * xi, axis=1) + np.sum(xi_star * xi_star, axis=1)))
    return -((2.0 * np.pi) ** (-params.d / 2.0)) * gauss * h ** (-params.gamma) * angular_constant(params)


def k2_eval(params: KernelParams, xi: Vector, xi_star: Vector) -> float:
    """Loss kernel k2 at a single pair."""
    return float(k2_batch(params, xi, xi_star)[0])


def _k1_chunk(
    params: KernelParams,
    h: np.ndarray,
    bcoef: np.ndarray,
    anorm: np.ndarray,
    quad: KernelQuad,
) -> np.ndarray:
    d = params.d
    m = d - 1
    half = int(np.ceil(quad.window))
    top = anorm + quad.window
    edges = np.concatenate(
        [h[:, None] * _NEAR_EDGES, anorm[:, None] + np.arange(-half, half + 1)], axis=1
    )
    edges = np.sort(np.clip(edges, 0.0, top[:, None]), axis=1)
    # panels narrower than PANEL_FLOOR * top are collapsed to zero width
    widths = np.diff(edges, axis=1)
    widths = np.where(widths < PANEL_FLOOR * top[:, None], 0.0, widths)
    edges = np.concatenate([edges[:, :1], edges[:, :1] + np.cumsum(widths, axis=1)], axis=1)
    rho, w = panel_rule(edges, quad.order)
    z = np.sqrt(rho * rho + (h * h)[:, None])
    c = h[:, None] / z
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        integrand = (
            rho ** (m - 1)
            * np.exp(-0.5 * (rho - anorm[:, None]) ** 2)
            * sphere_exp_scaled(m, rho * anorm[:, None])
            * z ** (-params.gamma)
            * (params.b(c) + params.b_tilde(c))
        )
    integrand = np.where(w > 0.0, integrand, 0.0)
    j = np.sum(w * integrand, axis=1)
    prefactor = 2.0 * (2.0 * np.pi) ** (-d / 2.0) * h ** (-(d - 1.0))
    return prefactor * np.exp(-0.5 * bcoef * bcoef - 0.125 * h * h) * j


def k1_batch(
    params: KernelParams,
    xi: Points,
    xi_star: Points,
    quad: KernelQuad | None = None,
    chunk: int = 4096,
) -> Vector:
    """Gain kernel k1 for arrays of pairs.

    k1 = 2 (2 pi)^{-d/2} h^{-(d-1)} exp(-|b|^2/2 - h^2/8) times the Gaussian
    integral over the hyperplane normal to xi_* - xi, done in polar
    coordinates about its origin. The angular part is the closed-form
    exponential average, the radial part a composite rule with panels
    refined near 0 on the scale h and around |a|.
    """
    quad = quad or KernelQuad()
    xi, xi_star = _pair_arrays(xi, xi_star)
    v = xi_star - xi
    h = np.linalg.norm(v, axis=1)
    if np.any(h == 0.0):
        raise SingularPointError("k1 is singular at xi = xi_*")
    e = v / h[:, None]
    mid = 0.5 * (xi + xi_star)
    bcoef = np.sum(mid * e, axis=1)
    anorm = np.linalg.norm(mid - bcoef[:, None] * e, axis=1)
    out = np.empty(len(h))
    for start in range(0, len(h), chunk):
        sl = slice(start, start + chunk)
        out[sl] = _k1_chunk(params, h[sl], bcoef[sl], anorm[sl], quad)
    return out


def k1_eval(
    params: KernelParams, xi: Vector, xi_star: Vector, quad: KernelQuad | None = None
) -> float:
    """Scalar k1 with a doubled-order convergence check."""
    quad = quad or KernelQuad()
    value = float(k1_batch(params, xi, xi_star, quad)[0])
    if not quad.check:
        return value
    refined = float(k1_batch(params, xi, xi_star, quad.refined())[0])
    if abs(refined - value) > quad.rtol * abs(refined):
        raise QuadratureError("k1 hyperplane quadrature did not converge", value, refined)
    return refined


def k1_hyperplane_reference(
    params: KernelParams,
    xi: Vector,
    xi_star: Vector,
    half_width: float = 12.0,
    epsrel: float = 1e-11,
) -> float:
    """k1 by adaptive 2-D quadrature in Cartesian hyperplane coordinates (d = 3)."""
    if params.d != 3:
        raise PreconditionError("the Cartesian hyperplane reference is implemented for d = 3")
    geo = collision_geometry(xi, xi_star)
    v = geo.xi_star - geo.xi
    h = float(np.linalg.norm(v))
    frame = null_space(v[None, :])
    a0, a1 = frame.T @ geo.a

    def integrand(s2: float, s1: float) -> float:
        w = s1 * frame[:, 0] + s2 * frame[:, 1]
        z = np.sqrt(h * h + w @ w)
        c = np.array([h / z])
        diff = w - geo.a
        angular = float((params.b(c) + params.b_tilde(c))[0])
        return np.exp(-0.5 * diff @ diff) * z ** (-params.gamma) * angular

    value, _ = integrate.dblquad(
        integrand,
        a0 - half_width,
        a0 + half_width,
        a1 - half_width,
        a1 + half_width,
        epsabs=1e-15,
        epsrel=epsrel,
    )
    bsq = float(geo.b_vec @ geo.b_vec)
    return 2.0 * (2.0 * np.pi) ** (-1.5) / (h * h) * np.exp(-0.5 * bsq - 0.125 * h * h) * value


def kernel_batch(
    params: KernelParams, xi: Points, xi_star: Points, quad: KernelQuad | None = None
) -> Vector:
    """k = k1 + k2 for arrays of pairs."""
    return k1_batch(params, xi, xi_star, quad) + k2_batch(params, xi, xi_star)


def singular_exponent(params: KernelParams) -> float:
    """Leading power s in k ~ |xi - xi_*|^{-s} near the diagonal."""
    return max(params.d - 2.0, params.gamma)


def _axis_frame(xi: Vector) -> tuple[np.ndarray, np.ndarray]:
    d = len(xi)
    r = np.linalg.norm(xi)
    e = xi / r if r > 0 else np.eye(d)[0]
    perp = null_space(e[None, :])[:, 0]
    return e, perp


KernelFunction = Callable[[Points, Points], Vector]


def _weighted_integral(
    params: KernelParams,
    xi: Vector,
    p: float,
    beta: float,
    quad: KernelQuad,
    kernel: KernelFunction,
) -> float:
    s = singular_exponent(params)
    nodes, weights = singular_radial_rule(params.d - 1.0 - p * s, 2.0 * quad.window, quad.order)
    weights = weights * nodes ** (p * s)
    rho, theta, w = axial_polar_rule(params.d, nodes, weights, quad.theta_panels, quad.order)
    e, perp = _axis_frame(xi)
    pts = xi + rho[:, None] * (np.cos(theta)[:, None] * e + np.sin(theta)[:, None] * perp)
    centre = np.broadcast_to(xi, pts.shape)
    vals = np.abs(kernel(centre, pts)) ** p * (1.0 + np.linalg.norm(pts, axis=1)) ** beta
    return float(w @ vals)


def weighted_kernel_integral(
    params: KernelParams,
    xi: Vector,
    p: float = 1.0,
    beta: float = 0.0,
    quad: KernelQuad | None = None,
    kernel: KernelFunction | None = None,
) -> float:
    """Integral over xi_* of (1 + |xi_*|)^beta |k(xi, xi_*)|^p.

    Polar coordinates about xi with a Gauss-Jacobi head that absorbs the
    |xi - xi_*|^{-p s} singularity; k is axially symmetric about the xi axis.

    Raises:
        PreconditionError: p outside [1, min(d/(d-2), d/gamma))
        QuadratureError: refinement check failed
    """
    quad = quad or KernelQuad()
    d, g = params.d, params.gamma
    limit = min(d / (d - 2.0) if d > 2 else np.inf, d / g if g > 0 else np.inf)
    if not 1.0 <= p < limit:
        raise PreconditionError(f"p = {p} outside the integrable range [1, {limit:g})")
    xi = np.asarray(xi, dtype=float)
    if kernel is None:
        inner = quad.model_copy(update={"check": False})

        def kernel(a: Points, b: Points) -> Vector:
            return kernel_batch(params, a, b, inner)

    value = _weighted_integral(params, xi, p, beta, quad, kernel)
    if not quad.check:
        return value
    refined = _weighted_integral(params, xi, p, beta, quad.refined(), kernel)
    if abs(refined - value) > quad.rtol * max(abs(refined), 1e-300):
        raise QuadratureError("weighted kernel integral did not converge", value, refined)
    return refined


def weighted_integral_monte_carlo(
    params: KernelParams,
    xi: Vector,
    p: float = 1.0,
    beta: float = 0.0,
    samples: int = 200_000,
    seed: int = 0,
    scale: float = 1.6,
) -> tuple[float, float]:
    """Importance-sampled estimate of the weighted kernel integral.

    xi_* = xi + scale * N(0, I); returns (estimate, standard error).
    """
    rng = np.random.default_rng(seed)
    xi = np.asarray(xi, dtype=float)
    d = params.d
    steps = scale * rng.standard_normal((samples, d))
    pts = xi + steps
    density = (2.0 * np.pi * scale * scale) ** (-d / 2.0) * np.exp(
        -0.5 * np.sum(steps * steps, axis=1) / (scale * scale)
    )
    quad = KernelQuad(check=False)
    k = kernel_batch(params, np.broadcast_to(xi, pts.shape), pts, quad)
    vals = np.abs(k) ** p * (1.0 + np.linalg.norm(pts, axis=1)) ** beta / density
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


def weighted_integral_check(
    params: KernelParams,
    points: Points,
    p: float = 1.0,
    beta: float = 0.0,
    samples: int = 50_000,
    seed: int = 0,
    quad: KernelQuad | None = None,
    z_max: float = 5.0,
) -> Certificate:
    """weighted_kernel_integral against its Monte-Carlo estimate at each point.

    The measured value is the largest |quadrature - estimate| in units of
    the estimate's standard error. The quadrature runs without its own
    refinement check.
    """
    quad = (quad or KernelQuad()).model_copy(update={"check": False})
    scores = []
    for offset, xi in enumerate(np.atleast_2d(points)):
        value = weighted_kernel_integral(params, xi, p, beta, quad)
        estimate, se = weighted_integral_monte_carlo(params, xi, p, beta, samples, seed + offset)
        scores.append(abs(value - estimate) / se if se > 0.0 else float("inf"))
        logger.debug("weighted integral at |xi| = %.3g: %.8g vs %.8g +- %.2g", np.linalg.norm(xi), value, estimate, se)
    return certify_at_most(
        "kernel.weighted_integral",
        float(max(scores)),
        z_max,
        f"p={p:g}, beta={beta:g}, {samples} samples per point, standard errors",
    )


def fit_decay_exponent(radii: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Least-squares fit of values ~ C (1 + r)^{-e} in log-log.

    Returns:
        (C, e)
    """
    x = np.log1p(np.asarray(radii, dtype=float))
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, np.log(np.asarray(values, dtype=float)), rcond=None)
    return float(np.exp(coef[0])), float(-coef[1])


class NuBand(BaseModel):
    """Sandwich nu0 <= nu(xi) (1 + |xi|)^gamma <= nu1 over a radial sweep."""

    radii: list[float]
    values: list[float]
    scaled: list[float]
    nu0: float
    nu1: float


def nu_band(params: KernelParams, radii: np.ndarray, quad: KernelQuad | None = None) -> NuBand:
    radii = np.asarray(radii, dtype=float)
    values = np.array([nu_of_xi(params, np.array([r]), quad) for r in radii])
    scaled = values * (1.0 + radii) ** params.gamma
    return NuBand(
        radii=radii.tolist(),
        values=values.tolist(),
        scaled=scaled.tolist(),
        nu0=float(scaled.min()),
        nu1=float(scaled.max()),
    )


def kernel_bound_checks(
    params: KernelParams,
    n_pairs: int = 10_000,
    seed: int = 0,
    quad: KernelQuad | None = None,
    spread: float = 2.0,
) -> list[Certificate]:
    """Pointwise bounds, symmetry, sign split and geometry on random pairs."""
    quad = (quad or KernelQuad()).model_copy(update={"check": False})
    rng = np.random.default_rng(seed)
    d, g, eps = params.d, params.gamma, params.eps
    xi = spread * rng.standard_normal((n_pairs, d))
    xs = spread * rng.standard_normal((n_pairs, d))

    k1 = k1_batch(params, xi, xs, quad)
    k2 = k2_batch(params, xi, xs)
    k1_swap = k1_batch(params, xs, xi, quad)
    k2_swap = k2_batch(params, xs, xi)

    v = xs - xi
    h = np.linalg.norm(v, axis=1)
    e = v / h[:, None]
    mid = 0.5 * (xi + xs)
    bcoef = np.sum(mid * e, axis=1)
    a = mid - bcoef[:, None] * e
    sq = np.sum(xi * xi, axis=1) + np.sum(xs * xs, axis=1)
    speed = 1.0 + np.linalg.norm(xi, axis=1) + np.linalg.norm(xs, axis=1)

    shape2 = h ** (-g) * speed ** (-g - 1.0) * np.exp(-(1.0 - eps) * sq / 4.0)
    shape1 = h ** (-(d - 2.0)) * speed ** (-g - 1.0) * np.exp(
        -(1.0 - eps) * (0.5 * bcoef**2 + 0.125 * h * h)
    )
    sym = max(
        np.max(np.abs(k1 - k1_swap) / (1.0 + np.abs(k1))),
        np.max(np.abs(k2 - k2_swap) / (1.0 + np.abs(k2))),
    )
    total = np.sum((xi + xs) ** 2, axis=1) / 4.0
    geometry = np.max(np.abs(np.sum(a * a, axis=1) + bcoef**2 - total) / np.maximum(total, 1e-300))
    ortho = np.max(np.abs(np.sum(a * v, axis=1)) / np.maximum(np.linalg.norm(a, axis=1) * h, 1e-300))

    checks = [
        certify_finite("kernel.k1_bound", np.max(k1 / shape1), f"{n_pairs} random pairs"),
        certify_finite("kernel.k2_bound", np.max(np.abs(k2) / shape2), f"{n_pairs} random pairs"),
        certify_at_most("kernel.symmetry", sym, 1e-8),
        certify_at_most("kernel.geometry", max(geometry, ortho), 1e-12),
    ]
    sign_defect = max(float(-k1.min()), float(k2.max()), 0.0)
    checks.append(
        Certificate(
            tag="kernel.sign_split",
            measured=sign_defect,
            bound=0.0,
            passed=bool(sign_defect <= 0.0),
            detail="min k1 >= 0 and max k2 <= 0",
        )
    )
    return checks


class AppendixCase(BaseModel):
    """Parameters of one family of auxiliary Gaussian integrals."""

    alpha: float
    a1: float = Field(gt=0.0)
    a2: float = Field(ge=0.0)
    beta: float = Field(default=1.0, ge=0.0)


AppendixIntegral = Literal["first", "second", "third"]


class AppendixResult(BaseModel):
    case: AppendixCase
    integral: AppendixIntegral
    radii: list[float]
    values: list[float]
    ratios: list[float]
    claimed_exponent: float
    fitted_exponent: float
    applicable: bool
    passed: bool


def appendix_integral(
    params: KernelParams,
    case: AppendixCase,
    which: AppendixIntegral,
    xi_norm: float,
    quad: KernelQuad | None = None,
) -> float:
    """One of the auxiliary integrals, evaluated at |xi| = xi_norm.

    first:  |v|^{-alpha} exp(-A1 |v|^2 - A2 |b|^2)
    second: |v|^{-alpha} exp(-A1 |xi_*|^2)
    third:  |v|^{-alpha} (1 + |xi_*|)^{-beta} exp(-A1 |v|^2 - A2 |b|^2)
    with v = xi_* - xi and b the part of (xi + xi_*)/2 along v.
    """
    quad = quad or KernelQuad()
    d, r = params.d, float(xi_norm)
    reach = np.sqrt(40.0 / case.a1)
    extent = reach + (r if which == "second" else 0.0)
    width = min(1.0, 0.5 / np.sqrt(case.a1))
    nodes, weights = singular_radial_rule(d - 1.0 - case.alpha, extent, quad.order, first=width, width=width)
    panels = max(quad.theta_panels, 64)
    rho, theta, w = axial_polar_rule(d, nodes, weights, panels, quad.order)
    cos_t = np.cos(theta)
    if which == "second":
        star_sq = r * r + rho * rho + 2.0 * r * rho * cos_t
        vals = np.exp(-case.a1 * star_sq)
    else:
        bpar = r * cos_t + 0.5 * rho
        vals = np.exp(-case.a1 * rho * rho - case.a2 * bpar * bpar)
        if which == "third":
            star = np.sqrt(np.maximum(r * r + rho * rho + 2.0 * r * rho * cos_t, 0.0))
            vals = vals * (1.0 + star) ** (-case.beta)
    return float(w @ vals)


def appendix_closed_form(d: int, alpha: float, a1: float) -> float:
    """First integral with A2 = 0: |S^{d-1}| Gamma((d - alpha)/2) / (2 A1^{(d - alpha)/2})."""
    return sphere_area(d) * gamma_fn((d - alpha) / 2.0) / (2.0 * a1 ** ((d - alpha) / 2.0))


def verify_appendix_integrals(
    params: KernelParams,
    cases: list[AppendixCase],
    radii: np.ndarray | None = None,
    quad: KernelQuad | None = None,
    fit_from: float = 2.0,
) -> list[AppendixResult]:
    """Certify the claimed decay of the three auxiliary integrals.

    For each case the integrals are swept over |xi|; the ratio
    value * (1 + |xi|)^claimed is reported and the decay exponent fitted on
    the tail |xi| >= fit_from must not fall short of the claim by more than
    0.25. The first and third claims need A2 > 0 and are reported as not
    applicable otherwise.

    Raises:
        PreconditionError: alpha >= d, or alpha < 0 for the second or third
    """
    radii = np.linspace(0.0, 10.0, 11) if radii is None else np.asarray(radii, dtype=float)
    d = params.d
    for case in cases:
        if case.alpha >= d:
            raise PreconditionError(f"case {case.model_dump()} needs alpha < d = {d}")
        if case.alpha < 0.0:
            raise PreconditionError(f"case {case.model_dump()} needs alpha >= 0")

    results = []
    tail = radii >= fit_from
    for case in cases:
        claims = {"first": 1.0, "second": case.alpha, "third": case.beta + 1.0}
        for which, claimed in claims.items():
            values = np.array([appendix_integral(params, case, which, r, quad) for r in radii])
            ratios = values * (1.0 + radii) ** claimed
            _, fitted = fit_decay_exponent(radii[tail], values[tail])
            applicable = which == "second" or case.a2 > 0.0
            ok = bool(np.all(np.isfinite(ratios)) and np.all(values > 0.0))
            if applicable:
                ok = ok and fitted >= claimed - 0.25
            results.append(
                AppendixResult(
                    case=case,
                    integral=which,
                    radii=radii.tolist(),
                    values=values.tolist(),
                    ratios=ratios.tolist(),
                    claimed_exponent=claimed,
                    fitted_exponent=fitted,
                    applicable=applicable,
                    passed=ok,
                )
            )
    return results
