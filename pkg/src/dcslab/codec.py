"""Asymmetric autoencoder codec.

A single dense encoder maps the N per-device readings to an M-dimensional
latent vector (M < N); Gaussian noise is added to the latent during
training to harden the decoder; a configurable-depth dense decoder
reconstructs the readings. Training minimizes the mean vector-level Huber
reconstruction error with plain SGD, and a drift monitor relaunches
training when the error on fresh data exceeds a threshold.

The encoder is deliberately shallow (it runs cluster-side); the decoder
carries the depth (it runs edge-side). Transmission accounting for that
split lives in :mod:`dcslab.wsn`.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import kernels, nn
from .errors import DimensionMismatchError
from .nn import Activation, DenseLayer, GradientSet, Mlp, SgdConfig

# hidden decoder layers always use ReLU; the configurable activations are
# the encoder's and the decoder output layer's
DECODER_HIDDEN_ACTIVATION = Activation.RELU


@dataclass(frozen=True)
class AutoencoderConfig:
    n_devices: int
    latent_dim: int
    decoder_hidden_sizes: tuple[int, ...] = ()
    encoder_activation: Activation = Activation.IDENTITY
    decoder_activation: Activation = Activation.SIGMOID
    huber_delta: float = 1.0
    noise_sigma: float = 0.1
    sgd: SgdConfig = field(default_factory=SgdConfig)
    finetune_threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "decoder_hidden_sizes",
                           tuple(int(h) for h in self.decoder_hidden_sizes))
        object.__setattr__(self, "encoder_activation",
                           Activation(self.encoder_activation))
        object.__setattr__(self, "decoder_activation",
                           Activation(self.decoder_activation))
        if not 1 <= self.latent_dim <= self.n_devices:
            raise ValueError(
                f"latent_dim must satisfy 1 <= M <= N, got M={self.latent_dim} "
                f"N={self.n_devices}"
            )
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.huber_delta <= 0:
            raise ValueError(f"huber_delta must be > 0, got {self.huber_delta}")
        if self.finetune_threshold <= 0:
            raise ValueError(
                f"finetune_threshold must be > 0, got {self.finetune_threshold}"
            )
        if any(h < 1 for h in self.decoder_hidden_sizes):
            raise ValueError("decoder_hidden_sizes entries must be >= 1")

    @property
    def decoder_sizes(self) -> tuple[int, ...]:
        return (self.latent_dim, *self.decoder_hidden_sizes, self.n_devices)

    @property
    def encoder_param_count(self) -> int:
        return self.latent_dim * self.n_devices + self.latent_dim

    @property
    def decoder_param_count(self) -> int:
        sizes = self.decoder_sizes
        return sum(sizes[k] * sizes[k + 1] + sizes[k + 1]
                   for k in range(len(sizes) - 1))


@dataclass
class Autoencoder:
    encoder: DenseLayer  # (M, N)
    decoder: Mlp  # M -> hidden... -> N
    config: AutoencoderConfig

    def __post_init__(self):
        cfg = self.config
        if self.encoder.weights.shape != (cfg.latent_dim, cfg.n_devices):
            raise DimensionMismatchError(
                "encoder weight shape",
                (cfg.latent_dim, cfg.n_devices),
                self.encoder.weights.shape,
            )
        if self.decoder.in_size != cfg.latent_dim:
            raise DimensionMismatchError(
                "decoder input size", cfg.latent_dim, self.decoder.in_size
            )
        if self.decoder.out_size != cfg.n_devices:
            raise DimensionMismatchError(
                "decoder output size", cfg.n_devices, self.decoder.out_size
            )


@dataclass
class TrainingReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


def init_autoencoder(config: AutoencoderConfig, rng: np.random.Generator) -> Autoencoder:
    """Seeded init: encoder weights first, then decoder layers in order."""
    encoder = nn.init_dense(config.latent_dim, config.n_devices,
                            config.encoder_activation, rng)
    sizes = list(config.decoder_sizes)
    activations = [DECODER_HIDDEN_ACTIVATION] * (len(sizes) - 2)
    activations.append(config.decoder_activation)
    decoder = nn.init_mlp(sizes, activations, rng)
    return Autoencoder(encoder, decoder, config)


# ---------------------------------------------------------------------------
# encode / noise / decode
# ---------------------------------------------------------------------------

def encode(ae: Autoencoder, x) -> np.ndarray:
    """Latent vector for one stacked reading: sigma_enc(W_e x + b_e)."""
    _, y = nn.dense_forward(ae.encoder, x)
    return y


def add_noise(y, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Additive zero-mean Gaussian noise; sigma=0 returns an exact copy."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    y = np.asarray(y, dtype=np.float64)
    if sigma == 0:
        return y.copy()
    return y + rng.normal(0.0, sigma, size=y.shape)


def decode(ae: Autoencoder, y_hat) -> np.ndarray:
    return nn.mlp_forward(ae.decoder, y_hat)


def reconstruct(ae: Autoencoder, x) -> np.ndarray:
    """Noise-free round trip decode(encode(x)); the evaluation-mode path."""
    return decode(ae, encode(ae, x))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _as_batch(batch, n: int) -> np.ndarray:
    X = np.ascontiguousarray(batch, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n:
        raise DimensionMismatchError("batch sample length", n,
                                     X.shape[-1] if X.ndim else 0)
    if X.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    return X


def reconstruction_gradients(ae: Autoencoder, X: np.ndarray,
                             noise: np.ndarray | None = None):
    """Mean-loss gradients of one forward/backward sweep over a batch.

    Returns (encoder GradientSet, decoder GradientSet, mean Huber loss).
    `noise` is the pre-drawn additive latent noise (None for noiseless).
    """
    cfg = ae.config
    Z_enc, Y = kernels.dense_forward_batch(X, ae.encoder.weights, ae.encoder.bias,
                                           int(ae.encoder.activation))
    Y_hat = Y if noise is None else Y + noise
    X_r, caches = nn.forward_batch(ae.decoder, Y_hat)
    losses, dXr = kernels.huber_batch(X, X_r, cfg.huber_delta)
    batch_size = X.shape[0]
    dec_grads, dY_hat = nn.backward_batch(ae.decoder, caches, dXr / batch_size)
    # the noise is additive, so the gradient passes through unchanged
    dWe, dbe, _ = kernels.dense_backward_batch(X, ae.encoder.weights, Z_enc,
                                               dY_hat, int(ae.encoder.activation))
    enc_grads = GradientSet([dWe], [dbe])
    return enc_grads, dec_grads, float(losses.mean())


def train_step(ae: Autoencoder, batch, rng: np.random.Generator,
               learning_rate: float | None = None) -> tuple[Autoencoder, float]:
    """One SGD update on encoder and decoder; returns (new model, mean loss)."""
    cfg = ae.config
    X = _as_batch(batch, cfg.n_devices)
    lr = cfg.sgd.learning_rate if learning_rate is None else learning_rate
    noise = None
    if cfg.noise_sigma > 0:
        noise = rng.normal(0.0, cfg.noise_sigma, size=(X.shape[0], cfg.latent_dim))
    enc_grads, dec_grads, mean_loss = reconstruction_gradients(ae, X, noise)
    new_encoder = nn.sgd_step(Mlp([ae.encoder]), enc_grads, lr).layers[0]
    new_decoder = nn.sgd_step(ae.decoder, dec_grads, lr)
    return Autoencoder(new_encoder, new_decoder, cfg), mean_loss


def train(ae: Autoencoder, dataset, cfg: SgdConfig,
          rng: np.random.Generator) -> tuple[Autoencoder, TrainingReport]:
    """Shuffled mini-batch SGD for cfg.epochs; reports loss and wall time."""
    X = _as_batch(dataset, ae.config.n_devices)
    n = X.shape[0]
    report = TrainingReport()
    for _ in range(cfg.epochs):
        start = time.perf_counter()
        order = rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            ae, loss = train_step(ae, X[idx], rng, learning_rate=cfg.learning_rate)
            loss_sum += loss * idx.shape[0]
        report.epoch_losses.append(loss_sum / n)
        report.epoch_seconds.append(time.perf_counter() - start)
    return ae, report


def reconstruction_error(ae: Autoencoder, data) -> float:
    """Mean noise-free Huber reconstruction error; pure in (model, data)."""
    X = _as_batch(data, ae.config.n_devices)
    _, Y = kernels.dense_forward_batch(X, ae.encoder.weights, ae.encoder.bias,
                                       int(ae.encoder.activation))
    X_r, _ = nn.forward_batch(ae.decoder, Y)
    losses, _ = kernels.huber_batch(X, X_r, ae.config.huber_delta)
    return float(losses.mean())


def monitor_and_finetune(ae: Autoencoder, recent_data, threshold: float,
                         cfg: SgdConfig, rng: np.random.Generator,
                         reinitialize: bool = False) -> tuple[Autoencoder, bool]:
    """Relaunch training when the noise-free error exceeds the threshold.

    Warm-starts from the current parameters by default; reinitialize=True
    draws fresh parameters from rng before retraining.
    """
    error = reconstruction_error(ae, recent_data)
    if not error > threshold:
        return ae, False
    if reinitialize:
        ae = init_autoencoder(ae.config, rng)
    ae, _ = train(ae, recent_data, cfg, rng)
    return ae, True


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_CHECKPOINT_FORMAT = "dcslab-autoencoder"
_CHECKPOINT_VERSION = 1


def _layer_to_doc(layer: DenseLayer) -> dict:
    return {
        "shape": list(layer.weights.shape),
        "weights": layer.weights.reshape(-1).tolist(),
        "bias": layer.bias.tolist(),
        "activation": layer.activation.name.lower(),
    }


def _layer_from_doc(doc: dict) -> DenseLayer:
    rows, cols = doc["shape"]
    weights = np.array(doc["weights"], dtype=np.float64).reshape(rows, cols)
    return DenseLayer(weights, np.array(doc["bias"], dtype=np.float64),
                      Activation.from_name(doc["activation"]))


def save_checkpoint(ae: Autoencoder, path) -> None:
    """Write config and all parameters as JSON; floats round-trip exactly."""
    cfg = ae.config
    doc = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "config": {
            "n_devices": cfg.n_devices,
            "latent_dim": cfg.latent_dim,
            "decoder_hidden_sizes": list(cfg.decoder_hidden_sizes),
            "encoder_activation": cfg.encoder_activation.name.lower(),
            "decoder_activation": cfg.decoder_activation.name.lower(),
            "huber_delta": cfg.huber_delta,
            "noise_sigma": cfg.noise_sigma,
            "sgd": asdict(cfg.sgd),
            "finetune_threshold": cfg.finetune_threshold,
        },
        "encoder": _layer_to_doc(ae.encoder),
        "decoder": [_layer_to_doc(layer) for layer in ae.decoder.layers],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> Autoencoder:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"not an autoencoder checkpoint: {path}")
    c = doc["config"]
    config = AutoencoderConfig(
        n_devices=c["n_devices"],
        latent_dim=c["latent_dim"],
        decoder_hidden_sizes=tuple(c["decoder_hidden_sizes"]),
        encoder_activation=Activation.from_name(c["encoder_activation"]),
        decoder_activation=Activation.from_name(c["decoder_activation"]),
        huber_delta=c["huber_delta"],
        noise_sigma=c["noise_sigma"],
        sgd=SgdConfig(**c["sgd"]),
        finetune_threshold=c["finetune_threshold"],
    )
    encoder = _layer_from_doc(doc["encoder"])
    decoder = Mlp([_layer_from_doc(d) for d in doc["decoder"]])
    return Autoencoder(encoder, decoder, config)
