"""spectrum: near-zero cluster of L, origin dispersion data and the multiplier resolvent"""

import logging

import numpy as np

from ..config import ExperimentConfig
from ..discretize import (
    bhat1_margin,
    kernel_cluster,
    mapping_bound_probe,
    resolvent_A_bound_probe,
    structure_report,
)
from ..pipeline import CommandContext, CommandResult, Table, operators_for
from ..reports import Certificate
from ..spectral import alpha_constants, origin_checks

logger = logging.getLogger(__name__)

# Re lambda >= 0 samples for the multiplier resolvent
RESOLVENT_LAMBDAS = [0.0, 0.1, 1.0, 1j, 0.5 + 2j, 5j]


def run(config: ExperimentConfig, context: CommandContext) -> CommandResult:
    ops, _ = operators_for(config, context)
    cluster = kernel_cluster(ops.L, expected=ops.d + 2)
    alphas = alpha_constants(ops)
    y = np.zeros(ops.d)
    y[0] = config.r_max
    resolvent = resolvent_A_bound_probe(ops, y, RESOLVENT_LAMBDAS)
    margin = bhat1_margin(ops, y)

    checks = structure_report(ops, config.raw_defect_max)
    checks += origin_checks(ops)
    checks.append(
        mapping_bound_probe(ops, config.mapping_samples, config.beta, config.seed, config.mapping_bound_max)
    )
    checks.append(resolvent.certificate)
    checks.append(
        Certificate(
            tag="discretize.bhat1_margin",
            measured=margin,
            bound=0.0,
            passed=margin > 0.0,
            detail=f"|y| = {config.r_max:g}",
        )
    )

    rows = [{"index": i, "eigenvalue": float(v)} for i, v in enumerate(cluster.eigenvalues)]
    logger.info("cluster of %d eigenvalues, gap ratio %.3e", cluster.cluster_size, cluster.gap_ratio)
    return CommandResult(
        checks=checks,
        tables={"spectrum": Table(fieldnames=["index", "eigenvalue"], rows=rows)},
        extras={
            "cluster_size": cluster.cluster_size,
            "gap_ratio": cluster.gap_ratio,
            "alphas": alphas.model_dump(mode="json"),
            "nu0": ops.nu0,
            "bhat1_margin": margin,
        },
    )
