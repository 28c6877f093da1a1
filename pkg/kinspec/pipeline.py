"""
Orchestration shared by the commands.

Provides:
- CommandContext: output directory, operator cache and thread count of one run
- Table / CommandResult: what a command hands back for writing
- grid_from / operators_for: build the grid and the operators through the cache
- write_result: CSV tables plus the JSON summary
"""

import logging
import time
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from .cache import OperatorCache, cache_key, operator_hash
from .config import ExperimentConfig
from .discretize import OperatorSet, VelocityGrid, assemble_operators, build_grid
from .reports import Certificate
from .summary import summary_document, write_csv, write_json

logger = logging.getLogger(__name__)


class CommandContext(BaseModel):
    """Run-wide resources handed to every command."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    out_dir: Path
    cache: OperatorCache
    threads: int = 1


class Table(BaseModel):
    fieldnames: list[str]
    rows: list[dict]


class CommandResult(BaseModel):
    """Certificates, CSV tables (by file stem) and extra summary fields."""

    checks: list[Certificate] = Field(default_factory=list)
    tables: dict[str, Table] = Field(default_factory=dict)
    extras: dict = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def grid_from(config: ExperimentConfig) -> VelocityGrid:
    return build_grid(config.d, config.scheme, config.resolution, config.extent)


def operators_for(
    config: ExperimentConfig, context: CommandContext, gamma: float | None = None
) -> tuple[OperatorSet, bool]:
    """Operators for the configured grid, read from the cache when possible.

    Returns:
        (operators, whether they came from the cache)
    """
    params = config.kernel_params(gamma)
    grid = grid_from(config)
    quad = config.kernel_quad()
    key = cache_key(params, grid, quad, config.correct)
    ops = context.cache.load(key, grid, params, quad, config.correct)
    if ops is not None:
        return ops, True
    start = time.perf_counter()
    ops = assemble_operators(grid, params, quad, config.correct, context.threads)
    logger.info("assembled operators in %.2fs (hash %s)", time.perf_counter() - start, operator_hash(ops)[:12])
    context.cache.store(key, ops)
    return ops, False


def write_result(command: str, config: ExperimentConfig, context: CommandContext, result: CommandResult) -> Path:
    """Write every table as <stem>.csv and the summary as summary.json; returns the summary path."""
    artifacts = []
    for stem, table in sorted(result.tables.items()):
        path = write_csv(context.out_dir / f"{stem}.csv", table.fieldnames, table.rows)
        artifacts.append(path.name)
    document = summary_document(command, config.resolved(), result.checks, artifacts, result.extras)
    return write_json(context.out_dir / "summary.json", document)
