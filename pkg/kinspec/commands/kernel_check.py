"""kernel-check: pointwise kernel bounds, the nu band and the auxiliary integrals"""

import logging
import math

import numpy as np

from ..config import ExperimentConfig
from ..kernel import (
    AppendixCase,
    kernel_bound_checks,
    nu_band,
    verify_appendix_integrals,
    weighted_integral_check,
)
from ..pipeline import CommandContext, CommandResult, Table
from ..reports import Certificate

logger = logging.getLogger(__name__)

APPENDIX_CASES = [
    AppendixCase(alpha=0.5, a1=0.25, a2=0.1),
    AppendixCase(alpha=1.0, a1=0.5, a2=0.2),
]
# |xi| at which the weighted kernel integral is cross-checked
CROSS_CHECK_SPEEDS = [0.0, 1.0, 2.5]


def _suffixed(cert: Certificate, gamma: float) -> Certificate:
    return cert.model_copy(update={"tag": f"{cert.tag}[{gamma:g}]"})


def run(config: ExperimentConfig, context: CommandContext) -> CommandResult:
    """Kernel certifications for every configured gamma.

    Args:
        config: Experiment configuration; `gammas` overrides `gamma` when set
        context: Run context (unused beyond logging; no operators are built)

    Returns:
        CommandResult with nu_band and appendix tables
    """
    quad = config.kernel_quad()
    gammas = config.gammas or [config.gamma]
    radii = np.linspace(0.0, config.nu_radius, 17)
    checks: list[Certificate] = []
    band_rows: list[dict] = []
    bands = {}
    for gamma in gammas:
        params = config.kernel_params(gamma)
        checks += [_suffixed(c, gamma) for c in kernel_bound_checks(params, config.n_pairs, config.seed, quad)]
        points = np.outer(CROSS_CHECK_SPEEDS, np.eye(config.d)[0])
        cross = weighted_integral_check(params, points, samples=config.mc_samples, seed=config.seed, quad=quad)
        checks.append(_suffixed(cross, gamma))
        band = nu_band(params, radii, quad)
        bands[f"{gamma:g}"] = {"nu0": band.nu0, "nu1": band.nu1}
        checks.append(
            Certificate(
                tag=f"kernel.nu_band[{gamma:g}]",
                measured=band.nu1 / band.nu0 if band.nu0 > 0.0 else float("inf"),
                passed=band.nu0 > 0.0 and math.isfinite(band.nu1),
                detail=f"nu0={band.nu0:.6g}, nu1={band.nu1:.6g}",
            )
        )
        for r, v, s in zip(band.radii, band.values, band.scaled):
            band_rows.append({"gamma": gamma, "radius": r, "nu": v, "scaled": s})
        logger.info("gamma=%g: nu band [%.4g, %.4g]", gamma, band.nu0, band.nu1)

    tables = {"nu_band": Table(fieldnames=["gamma", "radius", "nu", "scaled"], rows=band_rows)}
    if config.appendix:
        results = verify_appendix_integrals(config.kernel_params(), APPENDIX_CASES, quad=quad)
        rows = []
        for result in results:
            case = APPENDIX_CASES.index(result.case)
            checks.append(
                Certificate(
                    tag=f"kernel.appendix[{case},{result.integral}]",
                    measured=result.fitted_exponent,
                    bound=result.claimed_exponent - 0.25 if result.applicable else None,
                    passed=result.passed,
                    detail="fitted decay exponent" if result.applicable else "not applicable for A2 = 0",
                )
            )
            for r, v, q in zip(result.radii, result.values, result.ratios):
                rows.append(
                    {
                        "case": case,
                        "alpha": result.case.alpha,
                        "a1": result.case.a1,
                        "a2": result.case.a2,
                        "integral": result.integral,
                        "radius": r,
                        "value": v,
                        "ratio": q,
                    }
                )
        tables["appendix"] = Table(
            fieldnames=["case", "alpha", "a1", "a2", "integral", "radius", "value", "ratio"], rows=rows
        )
    return CommandResult(checks=checks, tables=tables, extras={"nu_band": bands})
