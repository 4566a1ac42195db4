import numpy as np
import pytest

from handgcn.dataset_io import synth_dataset
from handgcn.errors import CorruptFile, EmptyDataset, NonFiniteLoss, VersionMismatch
from handgcn.gcn_net import ALL_FIELDS, ModelConfig, init_params, model_forward
from handgcn.hand_graph import preprocess
from handgcn.numerics import RngStream
from handgcn.training import (
    AdamState,
    Checkpoint,
    TrainConfig,
    adam_step,
    fit,
    init_adam_state,
    load_checkpoint,
    save_checkpoint,
)


def tiny_params(h=4, seed=0):
    return init_params(ModelConfig(hidden_dim=h), RngStream(seed))


def zero_grads(params):
    return {name: np.zeros_like(getattr(params, name)) for name in params.tensors()
            if name not in ("running_mean", "running_var")}


def preprocessed(n_classes, per_class, sigma, seed):
    return [preprocess(p) for p in synth_dataset(n_classes, per_class, sigma, seed)]


class TestAdamStep:
    def test_first_step_unit_gradient(self):
        params = tiny_params()
        params.w1[...] = 0.0
        grads = zero_grads(params)
        grads["w1"][...] = 1.0
        cfg = TrainConfig(weight_decay=0.0, seed=0)
        adam_step(params, grads, init_adam_state(params), cfg)
        # m_hat = v_hat = 1 at t=1, so the update is exactly -lr / (1 + eps)
        expected = -cfg.learning_rate / (1.0 + cfg.eps_adam)
        np.testing.assert_allclose(params.w1, expected, atol=1e-12)

    def test_zero_gradient_zero_param_is_fixed_point(self):
        params = tiny_params()
        params.w2[...] = 0.0
        before = {n: t.copy() for n, t in params.tensors().items()}
        adam_step(params, zero_grads(params), init_adam_state(params),
                  TrainConfig(weight_decay=0.0, seed=0))
        np.testing.assert_array_equal(params.w2, before["w2"])

    def test_weight_decay_pulls_toward_zero(self):
        params = tiny_params()
        params.w1[...] = 1.0
        cfg = TrainConfig(weight_decay=1e-4, seed=0)
        adam_step(params, zero_grads(params), init_adam_state(params), cfg)
        # g' = 1e-4, so the update direction is negative on a positive weight
        assert (params.w1 < 1.0).all()

    def test_lr_zero_is_identity(self):
        params = tiny_params()
        grads = {n: np.random.default_rng(1).standard_normal(getattr(params, n).shape)
                 for n in zero_grads(params)}
        before = {n: t.copy() for n, t in params.tensors().items()}
        cfg = TrainConfig(seed=0)
        cfg.learning_rate = 0.0  # construction forbids 0; mutate to probe the update rule
        adam_step(params, grads, init_adam_state(params), cfg)
        for name in before:
            np.testing.assert_array_equal(getattr(params, name), before[name])

    def test_pure_decay_shrinks_norm_monotonically(self):
        params = tiny_params()
        params.w1[...] = np.random.default_rng(2).standard_normal(params.w1.shape)
        cfg = TrainConfig(learning_rate=1e-3, weight_decay=1e-2, seed=0)
        state = init_adam_state(params)
        norms = [np.linalg.norm(params.w1)]
        for _ in range(20):
            adam_step(params, zero_grads(params), state, cfg)
            norms.append(np.linalg.norm(params.w1))
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_decoupled_mode_differs_from_coupled(self):
        coupled = tiny_params()
        decoupled = tiny_params()
        grads = zero_grads(coupled)
        grads["w1"][...] = 0.5
        adam_step(coupled, grads, init_adam_state(coupled),
                  TrainConfig(weight_decay=1e-2, seed=0))
        adam_step(decoupled, {n: g.copy() for n, g in grads.items()}, init_adam_state(decoupled),
                  TrainConfig(weight_decay=1e-2, decoupled_weight_decay=True, seed=0))
        assert not np.array_equal(coupled.w1, decoupled.w1)


class TestFit:
    def test_empty_dataset(self):
        graphs = preprocessed(3, 2, 0.0, 1)
        with pytest.raises(EmptyDataset):
            fit([], graphs, TrainConfig(seed=0))
        with pytest.raises(EmptyDataset):
            fit(graphs, [], TrainConfig(seed=0))

    def test_early_stopping_and_best_epoch(self):
        graphs = preprocessed(10, 4, 0.05, 3)
        cfg = TrainConfig(seed=1, patience=2, max_epochs=40, batch_size=16)
        ckpt = fit(graphs[10:], graphs[:10], cfg)
        val = [v for _, v in ckpt.history]
        assert ckpt.best_epoch == int(np.argmin(val))
        if len(ckpt.history) < cfg.max_epochs:  # stopped early
            assert len(ckpt.history) == ckpt.best_epoch + 1 + cfg.patience
        # the returned weights really are the best epoch's weights
        assert val[ckpt.best_epoch] == min(val)

    def test_checkpoint_holds_best_not_last_weights(self):
        graphs = preprocessed(8, 3, 0.05, 5)
        cfg = TrainConfig(seed=2, patience=3, max_epochs=25, batch_size=8)
        ckpt = fit(graphs[8:], graphs[:8], cfg)
        x = np.stack([g.node_features for g in graphs[:8]])
        y = np.array([g.label for g in graphs[:8]])
        logp, _ = model_forward(x, ckpt.params, ckpt.model_config, training=False)
        from handgcn.gcn_net import nll_loss

        revalidated = nll_loss(logp, y)
        assert revalidated == pytest.approx(ckpt.history[ckpt.best_epoch][1], abs=1e-12)

    def test_full_run_determinism(self):
        graphs = preprocessed(6, 4, 0.05, 7)
        cfg = TrainConfig(seed=9, max_epochs=8, patience=15, batch_size=8)
        a = fit(graphs[6:], graphs[:6], cfg)
        b = fit(graphs[6:], graphs[:6], cfg)
        assert a.history == b.history
        assert a.best_epoch == b.best_epoch
        for name in ALL_FIELDS:
            np.testing.assert_array_equal(getattr(a.params, name), getattr(b.params, name))

    def test_loss_decreases_without_dropout(self):
        graphs = preprocessed(29, 2, 0.0, 7)
        cfg = TrainConfig(seed=3, dropout_p=0.0, max_epochs=200, patience=200)
        ckpt = fit(graphs, [graphs[2 * i] for i in range(29)], cfg)
        first = ckpt.history[0][0]
        last = ckpt.history[-1][0]
        assert last < 0.1 * first

    def test_non_finite_loss_reported_with_location(self):
        graphs = preprocessed(5, 4, 0.02, 1)
        cfg = TrainConfig(seed=0, learning_rate=1e120, max_epochs=5, batch_size=8)
        with pytest.raises(NonFiniteLoss) as err, np.errstate(all="ignore"):
            fit(graphs, graphs[:5], cfg)
        assert err.value.epoch is not None


class TestCheckpointIo:
    def roundtrip(self, tmp_path, ckpt):
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        return load_checkpoint(path), path

    def make_checkpoint(self, seed=0):
        cfg = ModelConfig(hidden_dim=4)
        params = init_params(cfg, RngStream(seed))
        return Checkpoint(
            model_config=cfg, params=params, train_config=TrainConfig(seed=seed),
            best_epoch=2, history=[(1.5, 1.25), (0.5, 0.75), (0.25, 0.5)],
        )

    def test_roundtrip_bit_exact(self, tmp_path):
        ckpt = self.make_checkpoint()
        # make values awkward: subnormals, negatives, exact integers
        ckpt.params.w1[0, 0] = 5e-324
        ckpt.params.w1[0, 1] = -1.0 / 3.0
        loaded, _ = self.roundtrip(tmp_path, ckpt)
        for name in ALL_FIELDS:
            np.testing.assert_array_equal(getattr(loaded.params, name), getattr(ckpt.params, name))
        assert loaded.history == ckpt.history
        assert loaded.best_epoch == ckpt.best_epoch
        assert loaded.train_config == ckpt.train_config
        assert loaded.model_config == ckpt.model_config

    def test_truncated_file(self, tmp_path):
        ckpt = self.make_checkpoint()
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CorruptFile):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        import json

        ckpt = self.make_checkpoint()
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        doc = json.loads(path.read_text())
        doc["version"] = 999
        path.write_text(json.dumps(doc))
        with pytest.raises(VersionMismatch):
            load_checkpoint(path)

    def test_save_is_deterministic(self, tmp_path):
        a = tmp_path / "a.ckpt"
        b = tmp_path / "b.ckpt"
        save_checkpoint(self.make_checkpoint(3), a)
        save_checkpoint(self.make_checkpoint(3), b)
        assert a.read_bytes() == b.read_bytes()
