"""branches: trace the hydrodynamic eigenvalue branches, fit their asymptotics and compare with dense eigenvalues"""

import logging

import numpy as np

from ..config import ExperimentConfig
from ..pipeline import CommandContext, CommandResult, Table, operators_for
from ..spectral import branch_checks, branch_oracle, branch_rows, trace_branches

logger = logging.getLogger(__name__)

FIELDS = ["j", "r", "re_lambda", "im_lambda", "oracle_re", "oracle_im", "abs_gap"]


def run(config: ExperimentConfig, context: CommandContext) -> CommandResult:
    ops, _ = operators_for(config, context)
    r_grid = np.geomspace(config.r_min, config.r_max, config.r_count)
    branches = trace_branches(ops, r_grid, config.branches or None, context.threads)

    dense = {float(r): branch_oracle(ops, float(r)) for r in r_grid}
    nearest: dict[int, np.ndarray] = {}
    gaps = []
    for branch in branches:
        picks = []
        for r, lam in zip(branch.r_samples, branch.lambda_samples):
            vals = dense.get(float(r))
            if vals is None:
                vals = branch_oracle(ops, float(r))
            picks.append(vals[np.argmin(np.abs(vals - lam))])
        nearest[branch.j] = np.array(picks)
        gaps.append(np.abs(nearest[branch.j] - branch.lambda_samples))
        if branch.truncated:
            logger.warning("branch %d truncated at r=%.4g", branch.j, branch.last_good_r)

    fits = {
        str(b.j): {
            "tau1": b.tau1_fit,
            "sigma2": b.sigma2_fit,
            "fit_residual": b.fit_residual,
            "truncated": b.truncated,
        }
        for b in branches
    }
    return CommandResult(
        checks=branch_checks(ops, branches, gaps),
        tables={"branches": Table(fieldnames=FIELDS, rows=branch_rows(branches, nearest))},
        extras={"fits": fits, "r_grid": r_grid.tolist()},
    )
