import numpy as np
import pytest

from kinspec.cache import (
    HEADER,
    OPERATOR_MAGIC,
    STATE_MAGIC,
    OperatorCache,
    cache_key,
    operator_hash,
    read_array,
    read_state,
    write_array,
    write_state,
)
from kinspec.errors import CacheFormatError
from kinspec.kernel import KernelParams, KernelQuad
from kinspec.nonlinear import SolverConfig, initial_state


@pytest.fixture(scope="module")
def key(grid6, params):
    return cache_key(params, grid6, KernelQuad(), True)


class TestCacheKey:
    def test_deterministic(self, grid6, params, key):
        assert cache_key(params, grid6, KernelQuad(), True) == key
        assert len(key) == 32

    @pytest.mark.parametrize(
        "change",
        [
            {"params": KernelParams(gamma=0.25)},
            {"quad": KernelQuad(order=10)},
            {"correct": False},
        ],
    )
    def test_sensitive_to_inputs(self, grid6, params, key, change):
        args = {"params": params, "grid": grid6, "quad": KernelQuad(), "correct": True}
        args.update(change)
        assert cache_key(**args) != key

    def test_sensitive_to_grid(self, grid8, params, key):
        assert cache_key(params, grid8, KernelQuad(), True) != key


class TestBinaryLayout:
    def test_header_and_payload(self, tmp_path, key):
        data = np.arange(6.0).reshape(2, 3) + 1j
        path = tmp_path / "a.ksop"
        write_array(path, OPERATOR_MAGIC, key, 3, data, scalar=1.5)
        raw = path.read_bytes()
        assert raw[:4] == b"KSOP"
        assert len(raw) == HEADER.size + 16 * 6
        head, back = read_array(path, OPERATOR_MAGIC)
        assert head == {"d": 3, "scalar": 1.5, "key": key, "rows": 2, "cols": 3}
        assert np.array_equal(back, data)

    def test_wrong_magic(self, tmp_path, key):
        path = tmp_path / "a.ksop"
        write_array(path, OPERATOR_MAGIC, key, 3, np.ones((1, 1)))
        with pytest.raises(CacheFormatError):
            read_array(path, STATE_MAGIC)

    def test_truncated(self, tmp_path, key):
        path = tmp_path / "a.ksop"
        write_array(path, OPERATOR_MAGIC, key, 3, np.ones((2, 2)))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CacheFormatError, match="payload"):
            read_array(path, OPERATOR_MAGIC)
        path.write_bytes(b"KSOP")
        with pytest.raises(CacheFormatError, match="truncated"):
            read_array(path, OPERATOR_MAGIC)


class TestOperatorCache:
    def test_store_then_load(self, tmp_path, ops6, key):
        cache = OperatorCache(tmp_path)
        folder = cache.store(key, ops6)
        assert folder is not None
        assert sorted(p.name for p in folder.iterdir()) == ["K.ksop", "nu.ksop"]
        loaded = cache.load(key, ops6.grid, ops6.params, KernelQuad(), True)
        assert loaded is not None
        assert np.array_equal(loaded.K.entries, ops6.K.entries)
        assert np.array_equal(loaded.nu, ops6.nu)
        assert operator_hash(loaded) == operator_hash(ops6)

    def test_miss(self, tmp_path, ops6, key):
        assert OperatorCache(tmp_path).load(key, ops6.grid, ops6.params, KernelQuad(), True) is None

    def test_disabled(self, tmp_path, ops6, key):
        cache = OperatorCache(tmp_path, enabled=False)
        assert cache.store(key, ops6) is None
        assert not any(tmp_path.iterdir())

    def test_corrupt_entry_is_ignored(self, tmp_path, ops6, key):
        cache = OperatorCache(tmp_path)
        folder = cache.store(key, ops6)
        (folder / "K.ksop").write_bytes(b"junk")
        assert cache.load(key, ops6.grid, ops6.params, KernelQuad(), True) is None


class TestRestartState:
    def test_round_trip(self, tmp_path, grid6):
        cfg = SolverConfig()
        state = initial_state(grid6, cfg, 1e-3).model_copy(update={"time": 2.5})
        path = write_state(tmp_path / "restart.ksst", state)
        back = read_state(path, cfg.period)
        assert back.time == 2.5
        assert np.array_equal(back.mode_set, state.mode_set)
        assert np.array_equal(back.coeffs, state.coeffs)
        assert path.read_bytes()[:4] == b"KSST"
