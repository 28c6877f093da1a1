"""
Quadrature building blocks shared by the kernel, grid and collision modules.

Provides:
- Gauss-Legendre panels and composite rules on arbitrary edge lists
- Gauss-Jacobi first panels that absorb an algebraic singularity rho**power
- Fixed octahedral (Lebedev) rules on S^2 and equispaced rules on S^1
- Spherical averages of exponentials in closed form (modified Bessel)
- Polar rules about a centre for axially symmetric integrands
"""

from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import ive, roots_jacobi

from .errors import PreconditionError


def sphere_area(m: int) -> float:
    """Surface area of the unit sphere S^{m-1} in R^m.

    Args:
        m: Ambient dimension (m=1 gives the two-point set {-1, 1})

    Returns:
        2 pi^{m/2} / Gamma(m/2)
    """
    return float(2.0 * np.pi ** (m / 2.0) / gamma_fn(m / 2.0))


@lru_cache(maxsize=64)
def _legendre_reference(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def gauss_legendre(order: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = _legendre_reference(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def panel_rule(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule over consecutive edges.

    Zero-width panels contribute nodes with zero weight, so callers can pass
    clipped edge lists of fixed length.

    Args:
        edges: Ascending panel edges, shape (..., p+1); leading axes batch
        order: Nodes per panel

    Returns:
        (nodes, weights), each of shape (..., p*order)
    """
    edges = np.asarray(edges, dtype=float)
    x, w = _legendre_reference(order)
    left = edges[..., :-1, None]
    half = 0.5 * (edges[..., 1:, None] - left)
    nodes = left + half * (x + 1.0)
    weights = half * w
    shape = edges.shape[:-1] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


@lru_cache(maxsize=64)
def _jacobi_reference(order: int, power: float) -> tuple[np.ndarray, np.ndarray]:
    return roots_jacobi(order, 0.0, power)


def gauss_jacobi_power(
    order: int, c: float, power: float
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for the integral of rho**power * g(rho) over [0, c].

    Args:
        order: Number of nodes
        c: Right end of the panel
        power: Exponent of the endpoint singularity, power > -1

    Returns:
        (nodes, weights) with sum(weights * g(nodes)) ~ integral of rho**power g

    Example:
        gauss_jacobi_power(8, 1.0, -0.5)  # integrates g / sqrt(rho) on [0, 1]
    """
    if power <= -1.0:
        raise PreconditionError(f"singular power {power} is not integrable at 0")
    x, w = _jacobi_reference(order, float(power))
    nodes = 0.5 * c * (x + 1.0)
    return nodes, w * (0.5 * c) ** (power + 1.0)


def singular_radial_rule(
    power: float,
    r_max: float,
    order: int,
    first: float = 1.0,
    width: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Rule for the integral of rho**power * g(rho) over [0, r_max].

    A Gauss-Jacobi panel on [0, min(first, r_max)] carries the singularity;
    Gauss-Legendre panels of at most `width` cover the rest.
    """
    head = min(first, r_max)
    nodes, weights = gauss_jacobi_power(order, head, power)
    if r_max <= head:
        return nodes, weights
    count = int(np.ceil((r_max - head) / width))
    edges = np.linspace(head, r_max, count + 1)
    tail_nodes, tail_weights = panel_rule(edges, order)
    return (
        np.concatenate([nodes, tail_nodes]),
        np.concatenate([weights, tail_weights * tail_nodes**power]),
    )


def sphere_exp_scaled(m: int, kappa: np.ndarray) -> np.ndarray:
    """exp(-kappa) times the integral of exp(kappa * u.e) over S^{m-1}.

    Closed form (2 pi)^{m/2} kappa^{1-m/2} ive(m/2 - 1, kappa). The value at
    kappa = 0 is the sphere area.
    """
    kappa = np.asarray(kappa, dtype=float)
    safe = np.where(kappa > 1e-12, kappa, 1.0)
    value = (2.0 * np.pi) ** (m / 2.0) * safe ** (1.0 - m / 2.0) * ive(m / 2.0 - 1.0, safe)
    return np.where(kappa > 1e-12, value, sphere_area(m))


def _gen_oh(code: int, v: float) -> np.ndarray:
    """Octahedral orbit of a generator point, rows (x, y, z, weight)."""
    if code == 0:
        pts = [(1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0),
               (0.0, -1.0, 0.0), (0.0, 0.0, 1.0), (0.0, 0.0, -1.0)]
    elif code == 1:
        a = np.sqrt(0.5)
        pts = []
        for sa in (a, -a):
            for sb in (a, -a):
                pts += [(0.0, sa, sb), (sa, 0.0, sb), (sa, sb, 0.0)]
    elif code == 2:
        a = np.sqrt(1.0 / 3.0)
        pts = [(sx, sy, sz) for sx in (a, -a) for sy in (a, -a) for sz in (a, -a)]
    else:
        raise ValueError(f"unsupported octahedral generator code {code}")
    g = np.array(pts, dtype=float)
    return np.column_stack([g, np.full(len(g), v)])


_LEBEDEV = {
    6: ((0, 0.1666666666666667),),
    14: ((0, 0.06666666666666667), (2, 0.075)),
    26: ((0, 0.04761904761904762), (1, 0.03809523809523810), (2, 0.03214285714285714)),
}


@lru_cache(maxsize=8)
def lebedev(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Lebedev rule on S^2 with weights summing to 1.

    Args:
        n: Number of points, one of 6, 14, 26

    Returns:
        (points of shape (n, 3), weights of shape (n,))
    """
    if n not in _LEBEDEV:
        raise PreconditionError(f"Lebedev rule with {n} points is not available")
    table = np.vstack([_gen_oh(code, v) for code, v in _LEBEDEV[n]])
    return table[:, :3], table[:, 3]


def sphere_rule(d: int, n: int, half: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Average-normalized rule on S^{d-1}.

    With `half`, one point of every antipodal pair is kept and its weight is
    doubled; valid for integrands even under omega -> -omega.

    Returns:
        (points of shape (k, d), weights summing to 1)
    """
    if d == 2:
        if half and n % 2:
            raise PreconditionError("antipodal halving needs an even circle rule")
        angles = 2.0 * np.pi * np.arange(n) / n
        points = np.column_stack([np.cos(angles), np.sin(angles)])
        weights = np.full(n, 1.0 / n)
    elif d == 3:
        points, weights = lebedev(n)
    else:
        raise PreconditionError(f"sphere rules are provided for d = 2 and 3, not {d}")
    if not half:
        return points, weights
    keep = _upper_half(points)
    return points[keep], 2.0 * weights[keep]


def _upper_half(points: np.ndarray) -> np.ndarray:
    # first nonzero coordinate positive
    keep = np.zeros(len(points), dtype=bool)
    for i, p in enumerate(points):
        nz = np.flatnonzero(np.abs(p) > 1e-12)
        keep[i] = p[nz[0]] > 0
    return keep


def axial_polar_rule(
    d: int,
    radial_nodes: np.ndarray,
    radial_weights: np.ndarray,
    theta_panels: int,
    order: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Polar rule for integrands symmetric about one axis through the centre.

    The offset is rho * (cos t * e + sin t * e_perp) and the weights carry the
    factor |S^{d-2}| sin^{d-2} t of the remaining directions.

    Returns:
        (rho, theta, weights), flattened over the product rule
    """
    theta, w_theta = panel_rule(np.linspace(0.0, np.pi, theta_panels + 1), order)
    w_theta = w_theta * sphere_area(d - 1) * np.sin(theta) ** (d - 2)
    rho = np.repeat(radial_nodes, theta.size)
    t = np.tile(theta, radial_nodes.size)
    w = np.outer(radial_weights, w_theta).ravel()
    return rho, t, w
