"""xspace: whole-space decay of e^{tB}u synthesized over frequency"""

import logging

import numpy as np

from ..config import ExperimentConfig
from ..nonlinear import smooth_samples
from ..pipeline import CommandContext, CommandResult, Table, operators_for
from ..reports import certify_at_most
from ..semigroup import build_y_quadrature, xspace_decay

logger = logging.getLogger(__name__)

EXPONENT_TOL = 0.1


def run(config: ExperimentConfig, context: CommandContext) -> CommandResult:
    """Fits the algebraic exponent of ||e^{tB}u|| for u_hat(y) = exp(-|y|^2) u0(xi) against d/4."""
    ops, _ = operators_for(config, context)
    u0 = smooth_samples(ops.grid, 1, config.seed, spread=0.0)[0]
    yq = build_y_quadrature(ops.d, config.y_count, config.y_min, config.y_max, config.y_sphere_points)
    times = np.geomspace(1.0, config.x_t_max, config.x_t_count)
    expected = ops.d / 4.0

    result = xspace_decay(
        ops, expected, config.beta, lambda y: np.exp(-np.dot(y, y)) * u0, yq, times, context.threads
    )
    cert = certify_at_most(
        "semigroup.xspace_decay",
        abs(result.fit.exponent - expected),
        EXPONENT_TOL,
        f"fitted {result.fit.exponent:.4f} on [{result.fit.window[0]:g}, {result.fit.window[1]:g}], expected {expected:g}",
    )
    rows = [
        {"t": float(t), "norm": float(n), "coarse_norm": float(c), "running_exponent": float(e)}
        for t, n, c, e in zip(result.times, result.norms, result.coarse_norms, result.running_exponent)
    ]
    return CommandResult(
        checks=[cert],
        tables={"xspace": Table(fieldnames=["t", "norm", "coarse_norm", "running_exponent"], rows=rows)},
        extras={"fit": result.fit.model_dump(mode="json")},
    )
