import numpy as np
import pytest

from duplexkit.tensorstore import (
    TensorStoreError,
    read_tensors,
    tensor_checksum,
    write_tensors,
)


def test_roundtrip_bit_exact(tmp_path, rng):
    tensors = {
        "weights.a": rng.normal(size=(7, 5)),
        "bias": rng.normal(size=(5,)).astype(np.float32),
        "ids": rng.integers(0, 1000, size=(3, 4)).astype(np.int32),
        "flags": np.array([1, 0, 1], dtype=np.uint16),
        "scalar": np.float64(3.25),
    }
    path = tmp_path / "ck.bin"
    write_tensors(path, tensors)
    loaded = read_tensors(path)
    assert list(loaded) == list(tensors)
    for name, arr in tensors.items():
        np.testing.assert_array_equal(loaded[name], np.asarray(arr))
        assert loaded[name].dtype == np.asarray(arr).dtype
        assert tensor_checksum(loaded[name]) == tensor_checksum(np.asarray(arr))


def test_rejects_bad_names(tmp_path):
    with pytest.raises(TensorStoreError):
        write_tensors(tmp_path / "x.bin", {"has space": np.zeros(2)})


def test_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"nonsense")
    with pytest.raises(TensorStoreError):
        read_tensors(path)


def test_rejects_truncated(tmp_path):
    path = tmp_path / "ck.bin"
    write_tensors(path, {"a": np.zeros((4, 4))})
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(TensorStoreError):
        read_tensors(path)
