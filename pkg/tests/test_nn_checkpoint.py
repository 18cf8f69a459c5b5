import numpy as np
import pytest

from flowfuse.nn import CheckpointError, load_checkpoint, save_checkpoint


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        tensors = {
            "enc1.w": rng.normal(size=(4, 3, 3, 3)),
            "enc1.b": rng.normal(size=(4,)),
            "head.w": rng.normal(size=(2, 4, 1, 1)),
        }
        meta = {"train_config": {"seed": 3}, "arch": {"widths": [16, 32, 64]}}
        path = tmp_path / "net.ckpt"
        save_checkpoint(path, tensors, meta)
        back, meta2 = load_checkpoint(path)
        assert meta2 == meta
        assert set(back) == set(tensors)
        for k in tensors:
            np.testing.assert_array_equal(back[k], tensors[k])

    def test_byte_deterministic(self, tmp_path, rng):
        tensors = {"b": rng.normal(size=(3,)), "a": rng.normal(size=(2, 2))}
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, tensors, {"x": 1})
        save_checkpoint(p2, dict(reversed(tensors.items())), {"x": 1})
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, {"w": rng.normal(size=(8, 8))}, {})
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)
