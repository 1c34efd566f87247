"""Dataset providers: synthetic sensor signals and the IDX image format.

Every dataset is a stack of length-N sample vectors in [0, 1], optionally
labeled. Generators are pure functions of (parameters, seed).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import IdxFormatError

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


@dataclass
class Dataset:
    samples: np.ndarray  # (n, N) float64 in [0, 1]
    labels: np.ndarray | None = None  # (n,) int64 class indices
    name: str = ""
    seed: int | None = None

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError(f"samples must be 2-D, got ndim={self.samples.ndim}")
        if self.samples.size and (self.samples.min() < 0 or self.samples.max() > 1):
            raise ValueError("samples must lie in [0, 1]")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.samples.shape[0],):
                raise ValueError(
                    f"labels length {self.labels.shape} does not match "
                    f"{self.samples.shape[0]} samples"
                )

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def sample_length(self) -> int:
        return self.samples.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            return 0
        return int(self.labels.max()) + 1 if len(self.labels) else 0


def synth_sparse(n_samples: int, n: int, sparsity: int,
                 rng: np.random.Generator) -> Dataset:
    """Samples with exactly `sparsity` nonzeros each, drawn uniform(0.5, 1)."""
    if not 1 <= sparsity <= n:
        raise ValueError(f"sparsity must satisfy 1 <= k <= N, got k={sparsity} N={n}")
    samples = np.zeros((n_samples, n))
    for i in range(n_samples):
        support = rng.choice(n, size=sparsity, replace=False)
        samples[i, support] = rng.uniform(0.5, 1.0, size=sparsity)
    return Dataset(samples, name=f"sparse-k{sparsity}")


def synth_field(n_samples: int, n: int, correlation_length: float,
                rng: np.random.Generator) -> Dataset:
    """Smooth random field over device indices.

    White noise is moving-average smoothed with a window of about the
    correlation length, then min-max normalized per sample.
    """
    if correlation_length <= 0:
        raise ValueError(f"correlation_length must be > 0, got {correlation_length}")
    window = max(1, int(round(correlation_length)))
    kernel = np.ones(window) / window
    samples = np.empty((n_samples, n))
    for i in range(n_samples):
        noise = rng.normal(size=n + window - 1)
        smooth = np.convolve(noise, kernel, mode="valid")
        lo, hi = smooth.min(), smooth.max()
        if hi > lo:
            samples[i] = (smooth - lo) / (hi - lo)
        else:
            samples[i] = 0.5
    return Dataset(samples, name=f"field-l{correlation_length}")


def synth_blobs(n_samples: int, rng: np.random.Generator, n_classes: int = 2,
                spread: float = 0.08) -> Dataset:
    """Linearly separable Gaussian blobs in [0, 1]^2, one blob per class."""
    centers = np.linspace(0.25, 0.75, n_classes)
    labels = rng.integers(0, n_classes, size=n_samples)
    samples = np.empty((n_samples, 2))
    for i, lab in enumerate(labels):
        samples[i] = centers[lab] + rng.normal(0.0, spread, size=2)
    return Dataset(np.clip(samples, 0.0, 1.0), labels, name="blobs")


def split(dataset: Dataset, fraction: float,
          rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Seeded shuffle then partition; `fraction` goes to the first part."""
    if not 0 <= fraction <= 1:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    n = len(dataset)
    order = rng.permutation(n)
    cut = int(round(fraction * n))
    first, second = order[:cut], order[cut:]

    def take(idx) -> Dataset:
        labels = dataset.labels[idx] if dataset.labels is not None else None
        return Dataset(dataset.samples[idx], labels, dataset.name, dataset.seed)

    return take(first), take(second)


# ---------------------------------------------------------------------------
# IDX binary format (big-endian)
# ---------------------------------------------------------------------------

def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise IdxFormatError(f"truncated IDX file: expected {count} bytes of "
                             f"{what}, got {len(data)}")
    return data


def _read_be32(fh, what: str) -> int:
    return struct.unpack(">i", _read_exact(fh, 4, what))[0]


def idx_load(images_path, labels_path=None, limit: int | None = None) -> Dataset:
    """Parse IDX image (+ optional label) files; pixels scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        magic = _read_be32(fh, "image magic")
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(
                f"bad image magic {magic}, expected {IDX_IMAGE_MAGIC}")
        count = _read_be32(fh, "image count")
        rows = _read_be32(fh, "row count")
        cols = _read_be32(fh, "column count")
        if limit is not None:
            count = min(count, limit)
        raw = _read_exact(fh, count * rows * cols, "pixels")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    samples = pixels.astype(np.float64) / 255.0

    labels = None
    if labels_path is not None:
        with open(labels_path, "rb") as fh:
            magic = _read_be32(fh, "label magic")
            if magic != IDX_LABEL_MAGIC:
                raise IdxFormatError(
                    f"bad label magic {magic}, expected {IDX_LABEL_MAGIC}")
            label_count = _read_be32(fh, "label count")
            if limit is None and label_count != count:
                raise IdxFormatError(
                    f"label count {label_count} does not match image count {count}")
            if label_count < count:
                raise IdxFormatError(
                    f"label count {label_count} below requested {count}")
            labels = np.frombuffer(_read_exact(fh, count, "labels"),
                                   dtype=np.uint8).astype(np.int64)
    return Dataset(samples, labels, name="idx")


def idx_save(dataset: Dataset, images_path, labels_path=None,
             rows: int | None = None, cols: int | None = None) -> None:
    """Write a dataset back to IDX bytes (pixels quantized to uint8)."""
    n, length = dataset.samples.shape
    if rows is None or cols is None:
        side = int(round(np.sqrt(length)))
        if side * side != length:
            raise ValueError(
                f"sample length {length} is not square; pass rows and cols")
        rows = cols = side
    if rows * cols != length:
        raise ValueError(f"rows*cols={rows * cols} does not match sample "
                         f"length {length}")
    pixels = np.round(dataset.samples * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())
    if labels_path is not None:
        if dataset.labels is None:
            raise ValueError("dataset has no labels to save")
        with open(labels_path, "wb") as fh:
            fh.write(struct.pack(">ii", IDX_LABEL_MAGIC, n))
            fh.write(dataset.labels.astype(np.uint8).tobytes())
