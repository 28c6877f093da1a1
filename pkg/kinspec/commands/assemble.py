"""assemble: build (or load) nu, K and L and certify their structure"""

import logging

from ..cache import operator_hash
from ..config import ExperimentConfig
from ..discretize import hs_norm_check, structure_report
from ..pipeline import CommandContext, CommandResult, Table, operators_for

logger = logging.getLogger(__name__)


def run(config: ExperimentConfig, context: CommandContext) -> CommandResult:
    ops, cached = operators_for(config, context)
    digest = operator_hash(ops)
    logger.info("operators %s (%s)", digest[:12], "cache" if cached else "assembled")
    checks = structure_report(ops, config.raw_defect_max)
    if config.hs_eps is not None:
        checks.append(
            hs_norm_check(
                ops.grid,
                ops.params,
                config.hs_eps,
                config.hs_radius,
                samples=config.mc_samples,
                seed=config.seed,
            )
        )
    rows = [
        {"index": i, "speed": float(s), "nu": float(v)}
        for i, (s, v) in enumerate(zip(ops.grid.speed, ops.nu))
    ]
    return CommandResult(
        checks=checks,
        tables={"nu": Table(fieldnames=["index", "speed", "nu"], rows=rows)},
        extras={
            "operator_hash": digest,
            "cached": cached,
            "nodes": ops.grid.n,
            "nu0": ops.nu0,
            "raw_defect": float(ops.L.metadata["raw_defect"]),
        },
    )
