"""
Result artifacts: the tag registry, the JSON summary and CSV tables.

Provides:
- TAGS / anchor_for: short certificate tags mapped to the property they certify
- check_entry / summary_document: certificates and run metadata as plain dicts
- write_json / write_csv: deterministic artifact writers
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable

from chidian import grab, mapper

from .reports import Certificate
from .utils import format_float

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

TAGS: dict[str, str] = {
    # kernel
    "kernel.k1_bound": "k1 is bounded by its singular Gaussian envelope in |xi - xi_*|",
    "kernel.k2_bound": "|k2(xi, xi_*)| <= C |xi - xi_*|^{-gamma} exp(-(|xi|^2 + |xi_*|^2)/4)",
    "kernel.symmetry": "k(xi, xi_*) = k(xi_*, xi)",
    "kernel.geometry": "collision geometry: a orthogonal to xi_* - xi, |b|^2 reproduces the Gaussian exponent",
    "kernel.sign_split": "k1 >= 0 and k2 <= 0 on sampled pairs",
    "kernel.nu_band": "nu0 <= nu(xi)(1 + |xi|)^gamma <= nu1 on the radial sweep",
    "kernel.appendix": "auxiliary Gaussian integrals decay at their claimed algebraic rates",
    "kernel.weighted_integral": "the weighted L^1 integral of k in xi_* agrees with an importance-sampled estimate",
    # discretize
    "discretize.self_adjoint": "K and L are self-adjoint in the weighted inner product",
    "discretize.non_positive": "L is non-positive",
    "discretize.kernel_dimension": "Ker L has dimension d + 2 with a clear spectral gap",
    "discretize.collision_invariant": "L M^{1/2} = 0",
    "discretize.raw_invariant_defect": "uncorrected K - nu annihilates the collision invariants within the declared bound, relative to ||nu psi||",
    "discretize.projection_gram": "the collision-invariant basis is orthonormal",
    "discretize.mapping_bound": "sampled ||K f||_{beta+gamma+2} / ||f||_beta stays below the declared bound (default: the grid operator norm)",
    "discretize.hs_norm": "the truncated Hilbert-Schmidt norm of k agrees with a Monte-Carlo estimate",
    "discretize.bhat1_margin": "B(y) - P has spectral abscissa below -delta(grid) < 0 for y != 0",
    "discretize.resolvent_A": "||(lambda - A(y))^{-1}|| <= 1/nu0 for Re lambda >= 0",
    # spectral
    "spectral.alpha1": "alpha_1 = (xi_1 psi_0, psi_1) = 1",
    "spectral.alpha2": "alpha_2 = (xi_1 psi_1, psi_{d+1}) = sqrt(2/d)",
    "spectral.alpha_remainder": "alpha_3 and alpha_4 exceed their projections onto Ker L",
    "spectral.origin_pattern": "the dispersion matrix at r = 0 has the tridiagonal alpha pattern",
    "spectral.origin_eta": "origin eigenvalues are 0 and +-sqrt(alpha_1^2 + alpha_2^2)",
    "spectral.oracle_gap": "traced eigenvalue equals the nearest dense eigenvalue of B(r e_1)",
    "spectral.mu_consistency": "mu_j(lambda_j) = 1 along the branch",
    "spectral.tau1": "Im lambda_j = tau1_j r + o(r) with tau1 in {0, +-2 pi sqrt(1 + 2/d)}",
    "spectral.sigma2_negative": "Re lambda_j = sigma2_j r^2 + o(r^2) with sigma2_j < 0",
    "spectral.sigma2_closed_form": "sigma2_j matches the closed form from L^{-1}",
    # semigroup
    "semigroup.contraction": "e^{tB(y)} is a contraction on L^2",
    "semigroup.law": "e^{(t+s)B} = e^{tB} e^{sB}",
    "semigroup.duhamel": "e^{tB} = e^{tA} + int_0^t e^{(t-s)A} K e^{sB} ds",
    "semigroup.growth_cap": "||e^{tB}||_beta <= e^{t ||K||_beta}",
    "semigroup.decay_ratio": "||e^{tB}u||_beta (1+t)^alpha / (rho(y) ||u||) is bounded",
    "semigroup.decay_stability": "the certified decay ratio is stable under doubling the horizon",
    "semigroup.A_decay": "||e^{tA}u||_beta (1+t)^alpha <= C ||u||_{beta+alpha gamma}",
    "semigroup.xspace_decay": "whole-space norm of e^{tB}u decays like t^{-d/4}",
    # nonlinear
    "nonlinear.gamma_bound": "||Gamma(f,g)||_{L^inf_{beta+gamma}} <= C ||f||_{L^inf_beta} ||g||_{L^inf_beta}",
    "nonlinear.gamma_bound_stability": "the Gamma bound ratio is stable across smooth samples",
    "nonlinear.gamma_mixed_bound": "||Gamma(f,g)||_{L^2_{beta+gamma}} <= C ||f||_{L^inf_beta} ||g||_{L^2_beta}",
    "nonlinear.gamma_maxwellian": "Gamma(M^{1/2}, M^{1/2}) is finite (and vanishes in the continuum)",
    "nonlinear.conservation": "(Gamma(f,f), psi) = 0 for every collision invariant psi",
    "nonlinear.linearization_slope": "2 Gamma(M^{1/2}, h) is the first-order term of Gamma(M^{1/2} + eps h)",
    "nonlinear.linearization_vs_L": "2 Gamma(M^{1/2}, Q h) agrees with L h within the declared relative tolerance",
    "nonlinear.convolution": "int_0^t (1+t-s)^{-alpha} (1+s)^{-alpha0} ds <= C (1+t)^{-alpha}",
    "nonlinear.contraction": "the mild-solution map contracts on the small-data ball",
    "nonlinear.fixed_point_residual": "||f - Phi[f]|| <= 2 tol",
    "nonlinear.monotone_decay": "the L^2 norm of the solution does not grow after the transient",
    "nonlinear.reality": "coefficients at -y are conjugate to those at y",
    "nonlinear.smallness": "initial data size below the smallness threshold",
}


def anchor_for(tag: str) -> str:
    """Property statement for a tag; bracketed suffixes such as [0.05,1] are ignored."""
    base = tag.split("[", 1)[0]
    try:
        return TAGS[base]
    except KeyError as e:
        raise KeyError(f"certificate tag {tag!r} is not registered") from e


def _plain(value: Any) -> Any:
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@mapper(remove_empty=False)
def _check_entry(d: dict):
    return {
        "tag": grab(d, "tag"),
        "anchor": anchor_for(grab(d, "tag")),
        "measured": grab(d, "measured"),
        "bound": grab(d, "bound"),
        "passed": bool(grab(d, "passed")),
        "detail": grab(d, "detail") or "",
    }


def check_entry(cert: Certificate) -> dict:
    return _check_entry(cert.model_dump(mode="json"))


def summary_document(
    command: str,
    config: dict,
    checks: Iterable[Certificate],
    artifacts: Iterable[str],
    extras: dict | None = None,
) -> dict:
    """The JSON summary of one command run."""
    entries = [check_entry(c) for c in checks]
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "checks": entries,
        "passed": all(e["passed"] for e in entries),
        "artifacts": sorted(artifacts),
        "extras": _plain(extras or {}),
    }


def write_json(path: Path, document: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    logger.debug("wrote %s", path)
    return path


def write_csv(path: Path, fieldnames: list[str], rows: Iterable[dict]) -> Path:
    """RFC 4180 CSV with a header row; floats use 17 significant digits."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\r\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_float(row.get(key)) for key in fieldnames})
    logger.debug("wrote %s", path)
    return path
