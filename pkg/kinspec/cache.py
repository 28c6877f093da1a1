"""
On-disk operator cache and trajectory restart dumps.

Every file is one little-endian struct header followed by a '<c16' payload:

    magic    4s   b"KSOP" (operator) or b"KSST" (solver state)
    version  H    layout version
    d        H    velocity dimension
    scalar   d    free float slot (time for states, 0 for operators)
    key      32s  sha256 cache key
    rows     I
    cols     I

Provides:
- cache_key: content hash of the kernel, grid and quadrature settings
- write_array / read_array: the binary layout above
- OperatorCache: load or store nu and K for one configuration
- write_state / read_state: restart dumps of a PerturbationState
"""

import hashlib
import json
import logging
import struct
from pathlib import Path

import numpy as np

from .discretize import DiscreteOperator, OperatorSet, VelocityGrid, assemble_L, build_projection
from .errors import CacheFormatError
from .kernel import KernelParams, KernelQuad
from .nonlinear import PerturbationState

logger = logging.getLogger(__name__)

HEADER = struct.Struct("<4sHHd32sII")
LAYOUT_VERSION = 1
CODE_TAG = "kinspec-operators-2"
OPERATOR_MAGIC = b"KSOP"
STATE_MAGIC = b"KSST"


def cache_key(params: KernelParams, grid: VelocityGrid, quad: KernelQuad, correct: bool) -> bytes:
    """sha256 over (d, gamma, q0, grid spec and nodes, quadrature, correction flag, code tag)."""
    spec = {
        "d": params.d,
        "gamma": params.gamma,
        "q0": params.q0,
        "quad": quad.model_dump(mode="json"),
        "correct": correct,
        "tag": CODE_TAG,
    }
    h = hashlib.sha256()
    h.update(json.dumps(spec, sort_keys=True).encode())
    h.update(grid.grid_hash())
    return h.digest()


def write_array(path: Path, magic: bytes, key: bytes, d: int, array: np.ndarray, scalar: float = 0.0) -> None:
    array = np.atleast_2d(np.asarray(array))
    rows, cols = array.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    header = HEADER.pack(magic, LAYOUT_VERSION, d, float(scalar), key, rows, cols)
    payload = np.ascontiguousarray(array, dtype="<c16").tobytes()
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(header + payload)
    tmp.replace(path)


def read_array(path: Path, magic: bytes) -> tuple[dict, np.ndarray]:
    """Header fields and the (rows, cols) complex payload.

    Raises:
        CacheFormatError: wrong magic, version or payload size
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise CacheFormatError(f"{path}: truncated header")
    got_magic, version, d, scalar, key, rows, cols = HEADER.unpack_from(raw)
    if got_magic != magic or version != LAYOUT_VERSION:
        raise CacheFormatError(f"{path}: expected {magic!r} v{LAYOUT_VERSION}, found {got_magic!r} v{version}")
    expected = HEADER.size + 16 * rows * cols
    if len(raw) != expected:
        raise CacheFormatError(f"{path}: payload has {len(raw) - HEADER.size} bytes, expected {expected - HEADER.size}")
    data = np.frombuffer(raw, dtype="<c16", offset=HEADER.size).reshape(rows, cols).copy()
    return {"d": d, "scalar": scalar, "key": key, "rows": rows, "cols": cols}, data


def operator_hash(ops: OperatorSet) -> str:
    """Hex sha256 of the K and L payload bytes."""
    h = hashlib.sha256()
    for entries in (ops.K.entries, ops.L.entries):
        h.update(np.ascontiguousarray(entries, dtype="<c16").tobytes())
    return h.hexdigest()


class OperatorCache:
    """nu and K stored per cache key; L and the basis are rebuilt on load."""

    def __init__(self, root: str | Path, enabled: bool = True):
        self.root = Path(root)
        self.enabled = enabled

    def _dir(self, key: bytes) -> Path:
        return self.root / key.hex()[:24]

    def load(
        self, key: bytes, grid: VelocityGrid, params: KernelParams, quad: KernelQuad, correct: bool
    ) -> OperatorSet | None:
        if not self.enabled:
            return None
        folder = self._dir(key)
        try:
            nu_head, nu = read_array(folder / "nu.ksop", OPERATOR_MAGIC)
            k_head, k = read_array(folder / "K.ksop", OPERATOR_MAGIC)
        except FileNotFoundError:
            logger.info("operator cache miss %s", folder.name)
            return None
        except CacheFormatError as e:
            logger.warning("ignoring unreadable cache entry: %s", e)
            return None
        if nu_head["key"] != key or k_head["key"] != key or k.shape != (grid.n, grid.n):
            logger.warning("cache entry %s does not match its key; rebuilding", folder.name)
            return None
        nu_vec = nu[0].real.copy()
        K = DiscreteOperator(
            grid=grid,
            entries=k.real.copy(),
            label="K",
            metadata={"d": params.d, "gamma": params.gamma, "q0": params.q0, "order": quad.order},
        )
        L = assemble_L(grid, params, K=K, nu=nu_vec, correct=correct)
        basis = build_projection(grid, L)
        logger.info("operator cache hit %s", folder.name)
        return OperatorSet(grid=grid, params=params, nu=nu_vec, K=K, L=L, basis=basis)

    def store(self, key: bytes, ops: OperatorSet) -> Path | None:
        if not self.enabled:
            return None
        folder = self._dir(key)
        try:
            write_array(folder / "nu.ksop", OPERATOR_MAGIC, key, ops.d, ops.nu[None, :])
            write_array(folder / "K.ksop", OPERATOR_MAGIC, key, ops.d, ops.K.entries)
        except OSError as e:
            logger.warning("could not write operator cache %s: %s", folder, e)
            return None
        logger.info("stored operators in %s", folder)
        return folder


def write_state(path: str | Path, state: PerturbationState, key: bytes = b"\0" * 32) -> Path:
    """Restart dump: header time slot holds state.time; modes are stored as the first d columns."""
    path = Path(path)
    d = state.mode_set.shape[1]
    table = np.concatenate([state.mode_set.astype(complex), state.coeffs], axis=1)
    write_array(path, STATE_MAGIC, key, d, table, scalar=state.time)
    return path


def read_state(path: str | Path, period: float) -> PerturbationState:
    head, table = read_array(Path(path), STATE_MAGIC)
    d = head["d"]
    modes = np.rint(table[:, :d].real).astype(int)
    return PerturbationState(mode_set=modes, period=period, coeffs=table[:, d:].copy(), time=head["scalar"])
