"""ParamStore, Adam recurrence, freeze flags, and the archive format."""

import numpy as np
import pytest

from isac_predict.archive import load_archive, save_archive
from isac_predict.errors import ArchiveError, TrainingError
from isac_predict.params import ParamStore


def test_zero_gradient_leaves_params_unchanged():
    store = ParamStore()
    t = store.add("w", np.ones((3, 3)))
    t.grad = np.zeros((3, 3))
    store.adam_step()
    np.testing.assert_array_equal(t.data, np.ones((3, 3)))


def test_frozen_tensor_untouched():
    store = ParamStore()
    t = store.add("w", np.ones(4), trainable=False)
    t.grad = np.full(4, 5.0)
    store.adam_step()
    np.testing.assert_array_equal(t.data, np.ones(4))


def test_first_step_moves_by_lr_exactly():
    # g = 1: m_hat = v_hat = 1 after bias correction, so step = -lr exactly
    # (up to the epsilon in the denominator).
    store = ParamStore(lr=0.1)
    t = store.add("w", np.array([2.0]))
    t.grad = np.array([1.0])
    store.adam_step()
    np.testing.assert_allclose(t.data, [2.0 - 0.1], atol=1e-8)


def test_hand_evaluated_two_steps():
    store = ParamStore(lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    t = store.add("w", np.array([0.0]))
    m = v = 0.0
    x = 0.0
    for step in (1, 2):
        g = 1.0 if step == 1 else -2.0
        t.grad = np.array([g])
        store.adam_step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= 0.1 * (m / (1 - 0.9 ** step)) / (np.sqrt(v / (1 - 0.999 ** step)) + 1e-8)
        np.testing.assert_allclose(t.data, [x], atol=1e-12)


def test_missing_gradient_raises():
    store = ParamStore()
    store.add("w", np.ones(2))
    with pytest.raises(TrainingError):
        store.adam_step()


def test_trainable_counts():
    store = ParamStore()
    store.add("a", np.ones((2, 3)))
    store.add("b", np.ones(5), trainable=False)
    assert store.n_params() == 11
    assert store.n_params(trainable_only=True) == 6


class TestArchive:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {
            "a.w": rng.standard_normal((3, 4)).astype(np.float32),
            "a.b": rng.standard_normal(4).astype(np.float64),
            "scalar": np.float32(2.5).reshape(()),
        }
        path = tmp_path / "t.ntar"
        save_archive(path, tensors)
        loaded = load_archive(path)
        assert set(loaded) == set(tensors)
        for name in tensors:
            assert loaded[name].dtype == np.asarray(tensors[name]).dtype
            np.testing.assert_array_equal(loaded[name], tensors[name])

    def test_deterministic_bytes(self, tmp_path):
        tensors = {"x": np.arange(6, dtype=np.float32).reshape(2, 3)}
        p1, p2 = tmp_path / "a.ntar", tmp_path / "b.ntar"
        save_archive(p1, tensors)
        save_archive(p2, tensors)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ntar"
        path.write_bytes(b"NOPE!" + b"\x00" * 16)
        with pytest.raises(ArchiveError):
            load_archive(path)

    def test_store_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        store = ParamStore()
        store.add("w", rng.standard_normal((4, 4)).astype(np.float32))
        store.add("b", rng.standard_normal(4).astype(np.float32))
        path = tmp_path / "ckpt.ntar"
        store.save(path)
        before = {n: t.data.copy() for n, t in store.items()}
        store["w"].data += 1.0
        store.load(path)
        for n, t in store.items():
            np.testing.assert_array_equal(t.data, before[n])

    def test_store_load_name_mismatch(self, tmp_path):
        store = ParamStore()
        store.add("w", np.ones(3, dtype=np.float32))
        path = tmp_path / "ckpt.ntar"
        save_archive(path, {"other": np.ones(3, dtype=np.float32)})
        with pytest.raises(TrainingError):
            store.load(path)
