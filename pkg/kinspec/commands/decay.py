"""decay: semigroup invariants and certified decay ratios per frequency"""

import logging

import numpy as np

from ..config import ExperimentConfig
from ..nonlinear import smooth_samples
from ..pipeline import CommandContext, CommandResult, Table, operators_for
from ..semigroup import semigroup_checks, weighted_A_decay_check

logger = logging.getLogger(__name__)


def run(config: ExperimentConfig, context: CommandContext) -> CommandResult:
    ops, _ = operators_for(config, context)
    u = smooth_samples(ops.grid, 1, config.seed)[0]
    u = u / ops.grid.norm(u)
    times = np.concatenate([[0.0], np.geomspace(1e-2, config.t_max, config.t_count)])
    ys = []
    for r in config.ys:
        y = np.zeros(ops.d)
        y[0] = r
        ys.append(y)

    checks, rows = semigroup_checks(ops, ys, u, times, config.alphas, config.beta)
    for y in ys:
        for alpha in config.alphas:
            cert = weighted_A_decay_check(ops, y, alpha, config.beta, u, times)
            checks.append(cert.model_copy(update={"tag": f"{cert.tag}[{y[0]:g},{alpha:g}]"}))
    logger.info("decay: %d checks over %d frequencies", len(checks), len(ys))
    return CommandResult(
        checks=checks,
        tables={"decay": Table(fieldnames=["y", "alpha", "t", "norm", "certified_ratio"], rows=rows)},
        extras={"nu0": ops.nu0, "t_max": config.t_max},
    )
