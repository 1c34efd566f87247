"""Autoencoder codec: encode/noise/decode, training, drift monitor, checkpoints."""

import numpy as np
import pytest

from dcslab import codec, datasets, nn
from dcslab.codec import Autoencoder, AutoencoderConfig
from dcslab.errors import DimensionMismatchError
from dcslab.nn import Activation, DenseLayer, Mlp, SgdConfig


def make_ae(We, be, Wd, bd, enc_act=Activation.IDENTITY,
            dec_act=Activation.IDENTITY, **cfg_kwargs):
    We, Wd = np.asarray(We, float), np.asarray(Wd, float)
    config = AutoencoderConfig(n_devices=We.shape[1], latent_dim=We.shape[0],
                               encoder_activation=enc_act,
                               decoder_activation=dec_act, **cfg_kwargs)
    return Autoencoder(DenseLayer(We, np.asarray(be, float), enc_act),
                       Mlp([DenseLayer(Wd, np.asarray(bd, float), dec_act)]),
                       config)


class TestEncode:
    def test_zero_weights_sigmoid(self):
        ae = make_ae(np.zeros((2, 4)), np.zeros(2), np.zeros((4, 2)), np.zeros(4),
                     enc_act=Activation.SIGMOID)
        np.testing.assert_array_equal(codec.encode(ae, np.ones(4)), [0.5, 0.5])

    def test_sum_encoder(self):
        ae = make_ae([[1.0, 1.0]], [0.0], np.zeros((2, 1)), np.zeros(2))
        np.testing.assert_array_equal(codec.encode(ae, [0.5, 0.5]), [1.0])

    def test_zero_input_gives_bias(self):
        ae = make_ae([[2.0, 3.0]], [0.25], np.zeros((2, 1)), np.zeros(2))
        np.testing.assert_array_equal(codec.encode(ae, [0.0, 0.0]), [0.25])

    def test_wrong_length_rejected(self):
        ae = make_ae([[1.0, 1.0]], [0.0], np.zeros((2, 1)), np.zeros(2))
        with pytest.raises(DimensionMismatchError):
            codec.encode(ae, [1.0, 2.0, 3.0])


class TestAddNoise:
    def test_sigma_zero_exact_and_fresh_object(self):
        y = np.array([0.1, 0.2, 0.3])
        out = codec.add_noise(y, 0.0, np.random.default_rng(0))
        assert np.array_equal(out, y)
        assert out is not y
        out[0] = 99.0
        assert y[0] == 0.1  # input never mutated

    def test_seeded_reproducibility(self):
        y = np.zeros(8)
        a = codec.add_noise(y, 0.5, np.random.default_rng(42))
        b = codec.add_noise(y, 0.5, np.random.default_rng(42))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, y)

    def test_moment_bounds(self):
        rng = np.random.default_rng(64)
        diffs = codec.add_noise(np.zeros(100_000), 1.0, rng)
        assert abs(diffs.mean()) < 3.0 / np.sqrt(100_000)
        assert abs(diffs.var() - 1.0) < 0.05

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            codec.add_noise(np.zeros(3), -0.1, np.random.default_rng(0))


class TestDecode:
    def test_constant_decoder(self):
        ae = make_ae(np.zeros((2, 3)), np.zeros(2),
                     np.zeros((3, 2)), [0.7, 0.7, 0.7])
        np.testing.assert_array_equal(codec.decode(ae, [5.0, -1.0]),
                                      [0.7, 0.7, 0.7])

    def test_identity_decoder(self):
        ae = make_ae(np.eye(3), np.zeros(3), np.eye(3), np.zeros(3))
        y = np.array([0.2, 0.4, 0.6])
        np.testing.assert_array_equal(codec.decode(ae, y), y)

    def test_matches_chained_dense_forward(self):
        rng = np.random.default_rng(17)
        cfg = AutoencoderConfig(n_devices=6, latent_dim=3,
                                decoder_hidden_sizes=(5,), noise_sigma=0.0)
        ae = codec.init_autoencoder(cfg, rng)
        y = rng.normal(size=3)
        # independent re-implementation: two chained affine+activation steps
        h = y
        for layer in ae.decoder.layers:
            pre = layer.weights @ h + layer.bias
            if layer.activation == Activation.RELU:
                h = np.maximum(pre, 0.0)
            elif layer.activation == Activation.SIGMOID:
                h = 1.0 / (1.0 + np.exp(-pre))
            else:
                h = pre
        np.testing.assert_allclose(codec.decode(ae, y), h, rtol=1e-12, atol=1e-14)


class TestTrainStep:
    def _fresh(self, sigma=0.0, **kw):
        cfg = AutoencoderConfig(n_devices=8, latent_dim=4, noise_sigma=sigma,
                                sgd=SgdConfig(learning_rate=0.05), **kw)
        return codec.init_autoencoder(cfg, np.random.default_rng(3))

    def test_zero_learning_rate_keeps_parameters(self):
        ae = self._fresh()
        x = np.random.default_rng(4).uniform(0, 1, size=(2, 8))
        updated, loss = codec.train_step(ae, x, np.random.default_rng(0),
                                         learning_rate=0.0)
        assert loss > 0
        assert np.array_equal(updated.encoder.weights, ae.encoder.weights)
        for before, after in zip(ae.decoder.layers, updated.decoder.layers):
            assert np.array_equal(before.weights, after.weights)
            assert np.array_equal(before.bias, after.bias)

    def test_overfits_single_sample(self):
        ae = self._fresh()
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 1, size=(1, 8))
        _, loss0 = codec.train_step(ae, x, rng, learning_rate=0.0)
        for _ in range(2000):
            ae, loss = codec.train_step(ae, x, rng)
        assert loss < 0.01 * loss0

    def test_full_step_gradient_matches_oracle(self):
        for seed in (0, 1, 2):
            rng = np.random.default_rng(seed)
            cfg = AutoencoderConfig(n_devices=6, latent_dim=3,
                                    decoder_hidden_sizes=(4,), noise_sigma=0.0)
            ae = codec.init_autoencoder(cfg, rng)
            x = rng.uniform(0, 1, size=6)
            enc_grads, dec_grads, _ = codec.reconstruction_gradients(ae, x[None, :])
            backprop = nn.GradientSet(
                enc_grads.weight_grads + dec_grads.weight_grads,
                enc_grads.bias_grads + dec_grads.bias_grads)
            combined = Mlp([ae.encoder, *ae.decoder.layers])
            oracle = nn.finite_diff_grad(combined, x, x, cfg.huber_delta)
            assert nn.gradient_rel_error(backprop, oracle) < 1e-4

    def test_empty_batch_rejected(self):
        ae = self._fresh()
        with pytest.raises(ValueError):
            codec.train_step(ae, np.zeros((0, 8)), np.random.default_rng(0))


class TestTrain:
    def test_zero_epochs_is_noop(self):
        cfg = AutoencoderConfig(n_devices=4, latent_dim=2, noise_sigma=0.0)
        ae = codec.init_autoencoder(cfg, np.random.default_rng(0))
        data = np.random.default_rng(1).uniform(0, 1, size=(6, 4))
        updated, report = codec.train(
            ae, data, SgdConfig(epochs=0), np.random.default_rng(2))
        assert report.epoch_losses == [] and report.epoch_seconds == []
        assert np.array_equal(updated.encoder.weights, ae.encoder.weights)

    def test_desk_scale_convergence(self):
        rng = np.random.default_rng(7)
        ds = datasets.synth_sparse(512, 64, 8, rng)
        sgd = SgdConfig(learning_rate=0.05, batch_size=32, epochs=125)
        cfg = AutoencoderConfig(n_devices=64, latent_dim=16, noise_sigma=0.05,
                                decoder_hidden_sizes=(64,), huber_delta=8.0,
                                sgd=sgd)
        ae = codec.init_autoencoder(cfg, rng)
        _, report = codec.train(ae, ds.samples, sgd, rng)
        assert report.final_loss <= 0.10 * report.epoch_losses[0]

    def test_same_seed_reproduces_losses(self):
        def one_run():
            rng = np.random.default_rng(13)
            cfg = AutoencoderConfig(n_devices=8, latent_dim=4, noise_sigma=0.1,
                                    sgd=SgdConfig(epochs=3, batch_size=4))
            ae = codec.init_autoencoder(cfg, rng)
            data = np.random.default_rng(99).uniform(0, 1, size=(16, 8))
            _, report = codec.train(ae, data, cfg.sgd, rng)
            return report.epoch_losses

        assert one_run() == one_run()


class TestMonitor:
    def _trained(self):
        rng = np.random.default_rng(42)
        ds = datasets.synth_field(256, 32, 8.0, rng)
        sgd = SgdConfig(learning_rate=0.05, batch_size=32, epochs=60)
        cfg = AutoencoderConfig(n_devices=32, latent_dim=8, noise_sigma=0.0,
                                huber_delta=4.0, sgd=sgd)
        ae = codec.init_autoencoder(cfg, rng)
        ae, _ = codec.train(ae, ds.samples, sgd, rng)
        return ae, ds, rng

    def test_unreachable_threshold_never_relaunches(self):
        ae, ds, rng = self._trained()
        updated, relaunched = codec.monitor_and_finetune(
            ae, ds.samples, float("inf"), ae.config.sgd, rng)
        assert not relaunched and updated is ae

    def test_tiny_threshold_always_relaunches(self):
        ae, ds, rng = self._trained()
        assert codec.reconstruction_error(ae, ds.samples) > 0
        _, relaunched = codec.monitor_and_finetune(
            ae, ds.samples, 1e-12, SgdConfig(epochs=1), rng)
        assert relaunched

    def test_distribution_drift_triggers_and_improves(self):
        ae, _, rng = self._trained()
        shifted = datasets.synth_sparse(256, 32, 4, np.random.default_rng(77))
        err_before = codec.reconstruction_error(ae, shifted.samples)
        threshold = err_before / 2
        updated, relaunched = codec.monitor_and_finetune(
            ae, shifted.samples, threshold,
            SgdConfig(learning_rate=0.05, batch_size=32, epochs=60), rng)
        assert relaunched
        assert codec.reconstruction_error(updated, shifted.samples) < err_before

    def test_evaluation_error_is_pure(self):
        ae, ds, _ = self._trained()
        assert codec.reconstruction_error(ae, ds.samples) == \
            codec.reconstruction_error(ae, ds.samples)


class TestStructure:
    def test_parameter_counts_exact(self):
        for hidden in ((), (10,), (12, 7)):
            cfg = AutoencoderConfig(n_devices=9, latent_dim=3,
                                    decoder_hidden_sizes=hidden)
            ae = codec.init_autoencoder(cfg, np.random.default_rng(0))
            assert cfg.encoder_param_count == 3 * 9 + 3
            assert ae.encoder.param_count == cfg.encoder_param_count
            assert ae.decoder.param_count == cfg.decoder_param_count
        # encoder count is independent of decoder depth
        counts = {
            AutoencoderConfig(n_devices=9, latent_dim=3,
                              decoder_hidden_sizes=h).encoder_param_count
            for h in ((), (10,), (12, 7))
        }
        assert counts == {30}

    def test_latent_dim_bounds(self):
        with pytest.raises(ValueError):
            AutoencoderConfig(n_devices=4, latent_dim=5)
        with pytest.raises(ValueError):
            AutoencoderConfig(n_devices=4, latent_dim=0)

    def test_noise_path_preserves_shape(self):
        y = np.zeros(7)
        assert codec.add_noise(y, 0.3, np.random.default_rng(0)).shape == (7,)

    def test_roundtrip_deterministic_without_noise(self):
        cfg = AutoencoderConfig(n_devices=6, latent_dim=2, noise_sigma=0.0)
        ae = codec.init_autoencoder(cfg, np.random.default_rng(8))
        x = np.random.default_rng(9).uniform(0, 1, size=6)
        assert np.array_equal(codec.reconstruct(ae, x), codec.reconstruct(ae, x))


class TestCheckpoint:
    def test_roundtrip_bit_identical_forward(self, tmp_path):
        rng = np.random.default_rng(31)
        cfg = AutoencoderConfig(n_devices=10, latent_dim=4,
                                decoder_hidden_sizes=(6,),
                                encoder_activation=Activation.TANH,
                                noise_sigma=0.2,
                                sgd=SgdConfig(learning_rate=0.123, seed=5))
        ae = codec.init_autoencoder(cfg, rng)
        path = tmp_path / "model.json"
        codec.save_checkpoint(ae, path)
        loaded = codec.load_checkpoint(path)
        assert loaded.config == cfg
        x = rng.uniform(0, 1, size=10)
        assert np.array_equal(codec.reconstruct(ae, x),
                              codec.reconstruct(loaded, x))
        assert np.array_equal(codec.encode(ae, x), codec.encode(loaded, x))

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError):
            codec.load_checkpoint(path)
