"""Two-layer dense softmax classifier.

Scores how useful reconstructed data remains for a downstream model: the
same classifier is trained on raw samples and on reconstructions, and the
accuracies are compared.
"""

from __future__ import annotations

import numpy as np

from .. import kernels, nn
from ..datasets import Dataset
from ..nn import Activation, Mlp, SgdConfig


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _accuracy(model: Mlp, samples: np.ndarray, labels: np.ndarray) -> float:
    logits, _ = nn.forward_batch(model, samples)
    return float((logits.argmax(axis=1) == labels).mean())


def train_classifier(train: Dataset, test: Dataset, hidden_size: int,
                     sgd: SgdConfig) -> float:
    """Softmax cross-entropy training; returns test accuracy in [0, 1].

    Seeded from sgd.seed, so identical configs give identical accuracies.
    """
    if train.labels is None or test.labels is None:
        raise ValueError("train_classifier needs labeled datasets")
    n_classes = max(train.n_classes, test.n_classes)
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    rng = np.random.default_rng(sgd.seed)
    model = nn.init_mlp([train.sample_length, hidden_size, n_classes],
                        [Activation.RELU, Activation.IDENTITY], rng)
    X, y = train.samples, train.labels
    onehot = np.eye(n_classes)[y]
    n = X.shape[0]
    for _ in range(sgd.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, sgd.batch_size):
            idx = order[lo:lo + sgd.batch_size]
            logits, caches = nn.forward_batch(model, X[idx])
            probs = _softmax(logits)
            dlogits = (probs - onehot[idx]) / idx.shape[0]
            grads, _ = nn.backward_batch(model, caches, dlogits)
            model = nn.sgd_step(model, grads, sgd.learning_rate)
    return _accuracy(model, test.samples, test.labels)


def reconstruct_dataset(ae, dataset: Dataset, rng: np.random.Generator) -> Dataset:
    """Replace samples by their (noisy-latent) reconstructions.

    Draws latent noise at the codec's configured sigma, mirroring what the
    decoder sees in deployment; outputs are clipped to [0, 1].
    """
    X = dataset.samples
    _, Y = kernels.dense_forward_batch(X, ae.encoder.weights, ae.encoder.bias,
                                       int(ae.encoder.activation))
    sigma = ae.config.noise_sigma
    if sigma > 0:
        Y = Y + rng.normal(0.0, sigma, size=Y.shape)
    X_r, _ = nn.forward_batch(ae.decoder, Y)
    return Dataset(np.clip(X_r, 0.0, 1.0), dataset.labels,
                   name=dataset.name + "-reconstructed", seed=dataset.seed)
