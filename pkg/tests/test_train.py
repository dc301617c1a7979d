"""Loss identities, freeze policy, and training-loop behavior."""

import json

import numpy as np
import pytest

from helpers import numerical_gradient, rel_error
from isac_predict.channel import (OfdmGrid, ScenarioConfig, sample_scenario,
                                  synthesize_window)
from isac_predict.errors import ConfigError, DegenerateSampleError, TrainingError
from isac_predict.model import ModelConfig, SensingAssistedPredictor
from isac_predict.tensor import Tensor
from isac_predict.train import (TrainConfig, apply_freeze_policy, evaluate,
                                nmse_loss, nmse_metric, train)

GRID = OfdmGrid(k=8, delta_f=60e3, f_c=28e9)
SCN = ScenarioConfig(n_v=2, n_h=2, n_shared=4, n_comm=1, n_sense=3)


def _samples(n, base_seed=0, p=6, q=3):
    return [synthesize_window(sample_scenario(SCN, GRID, base_seed + i),
                              GRID, p, q) for i in range(n)]


def _net(seed=0):
    cfg = ModelConfig(k=8, p=6, q=3, f=8, l=1, heads=2, c_h=2, n1=1, n2=1)
    return SensingAssistedPredictor(cfg, seed=seed)


class TestNmse:
    def test_perfect_prediction_is_zero(self):
        t = np.random.default_rng(0).standard_normal((2, 2, 4, 3))
        assert nmse_loss(Tensor(t.copy()), t).item() == 0.0

    def test_zero_prediction_is_one(self):
        t = np.random.default_rng(1).standard_normal((2, 2, 4, 3))
        assert abs(nmse_loss(Tensor(np.zeros_like(t)), t).item() - 1.0) < 1e-12

    def test_negated_prediction_is_four(self):
        t = np.random.default_rng(2).standard_normal((5,))
        assert abs(nmse_loss(Tensor(-t), t).item() - 4.0) < 1e-12

    def test_scaled_prediction_closed_form(self):
        # pred = c * truth gives NMSE |c - 1|^2 exactly
        t = np.random.default_rng(3).standard_normal((3, 7))
        for c in (0.5, 2.0, -0.3):
            got = nmse_loss(Tensor(c * t), t).item()
            assert abs(got - (c - 1.0) ** 2) < 1e-10

    def test_matches_metric_on_real_stacks(self):
        rng = np.random.default_rng(4)
        p = rng.standard_normal((2, 2, 4, 3))
        t = rng.standard_normal((2, 2, 4, 3))
        assert abs(nmse_loss(Tensor(p), t).item() - nmse_metric(p, t)) < 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        t = rng.standard_normal((3, 4))
        p = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        nmse_loss(p, t).backward()

        def fn(x):
            return nmse_loss(Tensor(x), t).item()

        num = numerical_gradient(fn, p.data.copy(), h=1e-6)
        assert rel_error(p.grad, num) < 1e-6

    def test_all_zero_truth_rejected(self):
        with pytest.raises(DegenerateSampleError):
            nmse_loss(Tensor(np.ones(3)), np.zeros(3))
        with pytest.raises(DegenerateSampleError):
            nmse_metric(np.ones(3), np.zeros(3))


class TestFreezePolicy:
    def test_paper_default_freezes_backbone_attn_and_ffn(self):
        net = _net()
        apply_freeze_policy(net.store, "paper_default")
        for name in net.store.names():
            frozen = not net.store.is_trainable(name)
            should = name.startswith("backbone.") and \
                (".attn." in name or ".ffn." in name)
            assert frozen == should, name
        # positional embedding and norms stay trainable
        assert net.store.is_trainable("backbone.pos_emb")
        assert net.store.is_trainable("backbone.h0.ln1.g")

    def test_none_trains_everything(self):
        net = _net()
        apply_freeze_policy(net.store, "none")
        assert net.store.n_params(trainable_only=True) == net.store.n_params()

    def test_all_backbone_freezes_whole_backbone(self):
        net = _net()
        apply_freeze_policy(net.store, "all_backbone")
        for name in net.store.names():
            assert net.store.is_trainable(name) == \
                (not name.startswith("backbone."))

    def test_unknown_policy_rejected(self):
        with pytest.raises(ConfigError):
            apply_freeze_policy(_net().store, "bogus")
        with pytest.raises(ConfigError):
            TrainConfig(freeze_policy="bogus")

    def test_frozen_weights_do_not_move_in_training(self):
        net = _net()
        frozen_name = "backbone.h0.attn.wq.w"
        before = net.store[frozen_name].data.copy()
        cfg = TrainConfig(epochs=2, batch_size=4, lr=1e-2, seed=0,
                          freeze_policy="paper_default", cosine_decay=False)
        train(net, _samples(4), _samples(2, base_seed=50), cfg)
        np.testing.assert_array_equal(net.store[frozen_name].data, before)


class TestEvaluate:
    def test_leaves_parameters_unchanged(self):
        net = _net()
        state = {n: t.data.copy() for n, t in net.store.items()}
        evaluate(net, _samples(3), seed=0)
        for n, t in net.store.items():
            np.testing.assert_array_equal(t.data, state[n])

    def test_deterministic_given_seed(self):
        net = _net()
        samples = _samples(4)
        a = evaluate(net, samples, snr_db=10.0, seed=3)
        b = evaluate(net, samples, snr_db=10.0, seed=3)
        assert a == b

    def test_chunking_invariant(self):
        net = _net()
        samples = _samples(5)
        g1, m1 = evaluate(net, samples, chunk=2)
        g2, m2 = evaluate(net, samples, chunk=64)
        assert abs(g1 - g2) < 1e-9 and abs(m1 - m2) < 1e-9

    def test_global_is_ratio_of_sums(self):
        net = _net()
        samples = _samples(3)
        views_like = []
        num = den = 0.0
        for i, s in enumerate(samples):
            g, _ = evaluate(net, [s], seed=0)    # per-sample global NMSE
            truth = np.transpose(s.comm[net.cfg.p:], (2, 1, 0))
            d = float(np.sum(np.abs(truth) ** 2))
            num += g * d
            den += d
        g_all, _ = evaluate(net, samples, seed=0)
        assert abs(g_all - num / den) < 1e-6


class TestTrainLoop:
    def test_identical_seeds_identical_traces(self, tmp_path):
        samples = _samples(6)
        val = _samples(2, base_seed=80)
        cfg = TrainConfig(epochs=3, batch_size=3, lr=3e-3, seed=7,
                          snr_range_db=(0.0, 20.0))
        r1 = train(_net(1), samples, val, cfg)
        r2 = train(_net(1), samples, val, cfg)
        assert r1.train_losses == r2.train_losses
        assert r1.val_losses == r2.val_losses

    def test_loss_decreases_on_small_set(self):
        samples = _samples(6)
        cfg = TrainConfig(epochs=12, batch_size=6, lr=5e-3, seed=0,
                          cosine_decay=False, patience=100)
        report = train(_net(2), samples, samples, cfg)
        assert report.train_losses[-1] < report.train_losses[0]

    def test_best_state_restored_and_checkpointed(self, tmp_path):
        samples = _samples(6)
        val = _samples(2, base_seed=30)
        net = _net(3)
        cfg = TrainConfig(epochs=4, batch_size=6, lr=5e-3, seed=0)
        report = train(net, samples, val, cfg, out_dir=tmp_path)
        assert (tmp_path / "best.ntar").exists()
        assert report.best_checkpoint == str(tmp_path / "best.ntar")
        # the in-memory weights equal the checkpointed best
        fresh = _net(99)
        fresh.store.load(tmp_path / "best.ntar")
        for n, t in net.store.items():
            np.testing.assert_array_equal(t.data, fresh.store[n].data)
        # restored model reproduces the reported best validation NMSE
        g, _ = evaluate(net, val, seed=cfg.seed + 1)
        assert abs(g - report.best_val) < 1e-6
        blob = json.loads((tmp_path / "report.json").read_text())
        assert blob["best_val"] == report.best_val

    def test_nan_loss_aborts(self):
        net = _net(4)
        net.store["embed.w"].data[:] = np.nan
        cfg = TrainConfig(epochs=1, batch_size=2)
        with pytest.raises(TrainingError):
            train(net, _samples(2), _samples(1, base_seed=60), cfg)

    def test_bad_snr_range_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(snr_range_db=(20.0, 0.0))
