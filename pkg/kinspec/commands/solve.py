"""solve: the small-data Cauchy problem on the torus, with the Gamma property checks"""

import logging

from ..cache import write_state
from ..config import ExperimentConfig
from ..nonlinear import (
    DuhamelSolver,
    estimate_smallness,
    gamma_bound_check,
    initial_state,
    lemma_convolution_check,
    linearization_check,
    smooth_samples,
    solve_cauchy,
    trajectory_rows,
)
from ..pipeline import CommandContext, CommandResult, Table, operators_for
from ..reports import certify_at_most

logger = logging.getLogger(__name__)

RESTART_FILE = "restart.ksst"


def run(config: ExperimentConfig, context: CommandContext) -> CommandResult:
    ops, _ = operators_for(config, context)
    solver_config = config.solver_config()
    solver = DuhamelSolver(ops, solver_config, threads=context.threads)
    checks = []
    extras: dict = {}

    integrator = solver.integrator
    if integrator is not None:
        samples = smooth_samples(ops.grid, 20, config.seed)
        defect = integrator.conservation_defect(samples.T)
        checks.append(
            certify_at_most(
                "nonlinear.conservation", defect, 1e-3, f"raw pairing before projection {integrator.last_defect:.3e}"
            )
        )
        _, bound_checks = gamma_bound_check(integrator, solver_config.beta, seed=config.seed)
        checks += bound_checks
        report, lin_checks = linearization_check(
            integrator, samples[0], ops=ops, l_tolerance=config.linearization_tol
        )
        checks += lin_checks
        extras["linearization"] = report.model_dump(mode="json")
        extras["leakage"] = integrator.leakage

    _, conv = lemma_convolution_check(solver_config.alpha, 1.0 + solver_config.alpha)
    checks.append(conv)

    if config.smallness_amplitudes:
        extras["estimated_smallness"] = estimate_smallness(
            ops, solver_config, config.smallness_amplitudes, solver=solver
        )

    f0 = initial_state(ops.grid, solver_config, config.amplitude)
    result = solve_cauchy(ops, f0, solver_config, solver=solver)
    checks += result.checks(solver_config.tol)

    restart = write_state(context.out_dir / RESTART_FILE, result.state(len(result.times) - 1))
    logger.info("restart state written to %s", restart)

    norm_rows = [
        {"t": float(t), "sup_norm": float(n), "energy": float(e)}
        for t, n, e in zip(result.times, result.norms, result.energies)
    ]
    extras.update(
        {
            "iterations": result.iterations,
            "contraction": result.contraction,
            "residual": result.residual,
            "fit": result.fit.model_dump(mode="json") if result.fit is not None else None,
            "slowest_mode_abscissa": result.abscissa,
            "smallness": result.smallness,
            "restart": restart.name,
        }
    )
    return CommandResult(
        checks=checks,
        tables={
            "trajectory": Table(fieldnames=["t", "mode", "k", "norm"], rows=trajectory_rows(result, ops.grid, solver_config.beta)),
            "norms": Table(fieldnames=["t", "sup_norm", "energy"], rows=norm_rows),
        },
        extras=extras,
    )
