"""Dataset ingestion: IDX image/label files and synthetic generators.

IDX files may be raw or gzip-compressed (sniffed from the leading bytes).
Pixels are scaled to [0, 1]; synthetic data is passed through unscaled.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from pbcert.nn import derive_rng

__all__ = [
    "Dataset",
    "IdxError",
    "BadMagicError",
    "TruncatedFileError",
    "CountMismatchError",
    "load_idx",
    "synth_dataset",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

_GENERATORS = ("gaussian_pairs", "toy_signal_noise")


class IdxError(ValueError):
    """Malformed IDX input."""


class BadMagicError(IdxError):
    pass


class TruncatedFileError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, integer labels in [0, C), and a provenance tag."""

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    provenance: str

    def __post_init__(self):
        X = np.asarray(self.inputs)
        y = np.asarray(self.labels)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"inputs {X.shape} and labels {y.shape} do not line up")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels outside [0, {self.n_classes})")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def truncate_to_multiple(self, batch: int) -> "Dataset":
        """Drop trailing rows so the batch size divides the sample count."""
        n = (len(self) // batch) * batch
        return Dataset(self.inputs[:n], self.labels[:n], self.n_classes, self.provenance)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes, self.provenance)


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise TruncatedFileError(f"truncated IDX file while reading {what}")
    return data


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _load_idx_array(path, expect_magic: int, rank: int, what: str) -> np.ndarray:
    with _open_maybe_gzip(path) as fh:
        (magic,) = struct.unpack(">i", _read_exact(fh, 4, f"{what} magic"))
        if magic != expect_magic:
            raise BadMagicError(f"bad magic 0x{magic:08x} in {what} file (expected 0x{expect_magic:08x})")
        dims = struct.unpack(f">{rank}i", _read_exact(fh, 4 * rank, f"{what} dimensions"))
        if any(d < 0 for d in dims):
            raise IdxError(f"negative dimension in {what} file")
        total = int(np.prod(dims)) if dims else 0
        raw = _read_exact(fh, total, f"{what} payload")
        return np.frombuffer(raw, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair; pixels scaled to [0, 1]."""
    images = _load_idx_array(images_path, IDX_IMAGE_MAGIC, 3, "image")
    labels = _load_idx_array(labels_path, IDX_LABEL_MAGIC, 1, "label")
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    X = images.reshape(images.shape[0], -1).astype(np.float32) / np.float32(255.0)
    y = labels.astype(np.int64)
    digest = hashlib.sha256()
    digest.update(images.tobytes())
    digest.update(labels.tobytes())
    return Dataset(X, y, int(y.max()) + 1 if y.size else 0, f"idx:sha256:{digest.hexdigest()[:16]}")


def synth_dataset(
    generator: str,
    n: int,
    seed: int,
    *,
    dim: int = 20,
    separation: float = 4.0,
    toy_sigma_sq: float = 64.0,
    toy_tau: float = 64.0,
    k_dim: int = 1,
) -> Dataset:
    """Deterministic synthetic datasets.

    gaussian_pairs: two unit-covariance Gaussian classes in ``dim``
    dimensions whose means sit ``separation`` apart along the first axis
    (Bayes risk Phi(-separation/2)).

    toy_signal_noise: the toy model's inputs; the first ``k_dim`` coordinates
    equal y * u exactly (u scaled so the clean margin is ``toy_tau`` under the
    one-pass learner) and the remaining ``dim`` coordinates carry
    N(0, toy_sigma_sq/dim) noise. Labels are in {0, 1} with class 1 for
    y = +1.
    """
    if generator not in _GENERATORS:
        raise ValueError(f"unknown generator {generator!r} (know {_GENERATORS})")
    if n < 1:
        raise ValueError("n must be positive")
    rng = derive_rng(seed, 7001)
    if generator == "gaussian_pairs":
        y = rng.integers(0, 2, size=n)
        X = rng.standard_normal((n, dim))
        X[:, 0] += (2.0 * y - 1.0) * (separation / 2.0)
        return Dataset(
            X.astype(np.float32), y.astype(np.int64), 2,
            f"synth:gaussian_pairs:n={n}:dim={dim}:sep={separation}:seed={seed}",
        )
    # toy_signal_noise
    eta1 = float(np.sum(1.0 / np.arange(1, n + 1)))
    u = np.sqrt(toy_tau / (eta1 * k_dim))
    y = rng.integers(0, 2, size=n)
    sgn = 2.0 * y - 1.0
    signal = np.repeat(sgn[:, None], k_dim, axis=1) * u
    noise = rng.standard_normal((n, dim)) * np.sqrt(toy_sigma_sq / dim)
    X = np.concatenate([signal, noise], axis=1)
    return Dataset(
        X.astype(np.float64), y.astype(np.int64), 2,
        f"synth:toy_signal_noise:n={n}:dim={dim}:seed={seed}",
    )
