"""
Command modules of the kinspec runner.

Each module exposes a `run(config, context)` function returning a CommandResult.

Usage:
    from kinspec.commands import COMMANDS
    result = COMMANDS["branches"](config, context)
"""

from kinspec.commands import (
    assemble,
    branches,
    decay,
    kernel_check,
    solve,
    spectrum,
    xspace,
)

COMMANDS = {
    "kernel-check": kernel_check.run,
    "assemble": assemble.run,
    "spectrum": spectrum.run,
    "branches": branches.run,
    "decay": decay.run,
    "xspace": xspace.run,
    "solve": solve.run,
}

__all__ = [
    "COMMANDS",
    "assemble",
    "branches",
    "decay",
    "kernel_check",
    "solve",
    "spectrum",
    "xspace",
]
