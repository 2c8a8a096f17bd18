"""Optimizer math, gradient clipping, LR scheduling and parameter persistence."""
from __future__ import annotations

import numpy as np
import pytest

from molmpnn.container import ContainerError, read_container, write_container
from molmpnn.optim import Adam, ParameterStore, PlateauScheduler, clip_grad_norm


def make_store(**arrays) -> ParameterStore:
    store = ParameterStore()
    for name, data in arrays.items():
        store.add_param(name, np.asarray(data, dtype=np.float64))
    return store


class TestParameterStore:
    def test_duplicate_names_rejected(self):
        store = make_store(w=[1.0])
        with pytest.raises(ValueError):
            store.add_param("w", np.zeros(1))
        store.add_buffer("running", np.zeros(2))
        with pytest.raises(ValueError):
            store.add_buffer("running", np.zeros(2))

    def test_zero_grad_clears_everything(self):
        store = make_store(w=[1.0, 2.0])
        store.params["w"].grad = np.ones(2)
        store.zero_grad()
        assert store.params["w"].grad is None

    def test_count_sums_parameter_sizes_only(self):
        store = make_store(w=np.zeros((3, 4)), b=np.zeros(4))
        store.add_buffer("stat", np.zeros(100))
        assert store.count() == 16

    def test_load_rejects_shape_mismatch(self):
        store = make_store(w=np.zeros((2, 2)))
        state = store.state_arrays()
        state["param/w"] = np.zeros((3, 3))
        with pytest.raises(ValueError):
            store.load_state_arrays(state)


class TestClipGradNorm:
    def test_norm_two_halves_exactly(self):
        store = make_store(a=[0.0], b=[0.0])
        store.params["a"].grad = np.array([np.sqrt(2.0)])
        store.params["b"].grad = np.array([np.sqrt(2.0)])
        norm = clip_grad_norm(store, 1.0)
        assert norm == pytest.approx(2.0, abs=1e-12)
        assert store.params["a"].grad[0] == pytest.approx(np.sqrt(2.0) / 2, abs=1e-12)

    def test_norm_below_max_untouched(self):
        store = make_store(a=[0.0])
        store.params["a"].grad = np.array([0.3])
        norm = clip_grad_norm(store, 1.0)
        assert norm == pytest.approx(0.3)
        assert store.params["a"].grad[0] == 0.3


class TestAdam:
    def test_first_step_matches_hand_calculation(self):
        """After one step the update is -lr * g / (|g| + eps) elementwise."""
        store = make_store(w=[1.0, -2.0])
        g = np.array([0.5, -1.5])
        store.params["w"].grad = g.copy()
        Adam(store, lr=0.1).step()
        expected = np.array([1.0, -2.0]) - 0.1 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(store.params["w"].data, expected, rtol=1e-9)

    def test_lr_zero_is_a_no_op(self):
        store = make_store(w=np.arange(4.0))
        store.params["w"].grad = np.ones(4)
        opt = Adam(store, lr=0.0)
        for _ in range(3):
            opt.step()
        np.testing.assert_array_equal(store.params["w"].data, np.arange(4.0))

    def test_converges_on_quadratic(self):
        store = make_store(w=[5.0])
        opt = Adam(store, lr=0.1)
        for _ in range(400):
            w = store.params["w"]
            w.grad = 2.0 * w.data  # d/dw w^2
            opt.step()
        assert abs(store.params["w"].data[0]) < 1e-3

    def test_skips_params_without_grads(self):
        store = make_store(w=[1.0], frozen=[7.0])
        store.params["w"].grad = np.array([1.0])
        Adam(store, lr=0.1).step()
        assert store.params["frozen"].data[0] == 7.0


class TestPlateauScheduler:
    def test_reduces_after_patience_exceeded(self):
        store = make_store(w=[0.0])
        opt = Adam(store, lr=1.0)
        sched = PlateauScheduler(opt, factor=0.5, patience=2, min_lr=0.01)
        sched.step(1.0)       # best
        assert sched.step(1.0) == 1.0   # stall 1
        assert sched.step(1.0) == 1.0   # stall 2 == patience, still tolerated
        assert sched.step(1.0) == 0.5   # stall 3 > patience -> reduce
        assert sched.step(0.5) == 0.5   # improvement resets

    def test_floor_at_min_lr(self):
        opt = Adam(make_store(w=[0.0]), lr=0.02)
        sched = PlateauScheduler(opt, factor=0.5, patience=0, min_lr=0.01)
        sched.step(1.0)
        for _ in range(5):
            lr = sched.step(2.0)
        assert lr == 0.01

    def test_max_mode_tracks_increases(self):
        opt = Adam(make_store(w=[0.0]), lr=1.0)
        sched = PlateauScheduler(opt, factor=0.5, patience=1, mode="max")
        sched.step(0.5)
        sched.step(0.9)          # improvement
        sched.step(0.9)          # stall 1
        assert sched.step(0.8) == 0.5  # stall 2 > patience

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            PlateauScheduler(Adam(make_store(w=[0.0])), mode="median")


class TestContainerPersistence:
    def test_store_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        store = make_store(w=rng.standard_normal((7, 3)), b=rng.standard_normal(3))
        store.add_buffer("running_mean", rng.standard_normal(3))
        path = tmp_path / "state.bin"
        write_container(path, {"kind": "test"}, store.state_arrays())

        fresh = make_store(w=np.zeros((7, 3)), b=np.zeros(3))
        fresh.add_buffer("running_mean", np.zeros(3))
        meta, arrays = read_container(path)
        fresh.load_state_arrays(arrays)
        assert meta["kind"] == "test"
        np.testing.assert_array_equal(fresh.params["w"].data, store.params["w"].data)
        np.testing.assert_array_equal(fresh.buffers["running_mean"],
                                      store.buffers["running_mean"])

    def test_write_is_deterministic(self, tmp_path):
        arrays = {"a": np.arange(6.0).reshape(2, 3)}
        write_container(tmp_path / "x1.bin", {"n": 1}, arrays)
        write_container(tmp_path / "x2.bin", {"n": 1}, arrays)
        assert (tmp_path / "x1.bin").read_bytes() == (tmp_path / "x2.bin").read_bytes()

    def test_integer_payloads_survive(self, tmp_path):
        """int64 edge indices stored as float64 stay exact below 2**53."""
        idx = np.array([[0, 1, 2**40], [1, 2, 3]], dtype=np.int64)
        write_container(tmp_path / "i.bin", {}, {"edge_index": idx.astype(np.float64)})
        _, arrays = read_container(tmp_path / "i.bin")
        np.testing.assert_array_equal(arrays["edge_index"].astype(np.int64), idx)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTMINE\x00" + b"\x00" * 64)
        with pytest.raises(ContainerError):
            read_container(path)

    def test_truncation_rejected(self, tmp_path):
        path = tmp_path / "t.bin"
        write_container(path, {}, {"a": np.ones((4, 4))})
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ContainerError):
            read_container(path)
