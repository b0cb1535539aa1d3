"""Datasets: MNIST IDX files, synthetic blobs, splitting and noise."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Row-major samples in [0, 1] with optional integer labels."""

    samples: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"samples must be 2-D, got shape {x.shape}")
        np.clip(x, 0.0, 1.0, out=x)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        if self.labels is not None:
            y = np.array(self.labels, dtype=np.int64)
            if y.shape != (x.shape[0],):
                raise ValueError(f"expected {x.shape[0]} labels, got shape {y.shape}")
            if y.size and y.min() < 0:
                raise ValueError("labels must be non-negative")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.samples.shape[1]

    @property
    def num_classes(self) -> int:
        return 0 if self.labels is None or not self.labels.size else int(self.labels.max()) + 1

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.samples[idx], None if self.labels is None else self.labels[idx])


def _read_idx(path, magic: int, what: str) -> tuple[tuple[int, ...], bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxFormatError(f"{what} file {path}: truncated header (magic)")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxFormatError(f"{what} file {path}: magic number 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    end = 4 + 4 * ndim
    if len(raw) < end:
        raise IdxFormatError(f"{what} file {path}: truncated header (dimension sizes)")
    dims = struct.unpack(f">{ndim}I", raw[4:end])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = raw[end:]
    if len(payload) != expected:
        raise IdxFormatError(f"{what} file {path}: payload has {len(payload)} bytes, dimensions {dims} need {expected}")
    return dims, payload


def load_idx(images_path, labels_path=None) -> Dataset:
    """Read an IDX image file (and optional label file) into a Dataset scaled to [0, 1]."""
    dims, payload = _read_idx(images_path, IDX_IMAGES_MAGIC, "images")
    n, rows, cols = dims
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows * cols)
    labels = None
    if labels_path is not None:
        (count,), lab = _read_idx(labels_path, IDX_LABELS_MAGIC, "labels")
        if count != n:
            raise IdxFormatError(f"item count mismatch: {n} images vs {count} labels")
        labels = np.frombuffer(lab, dtype=np.uint8)
    return Dataset(pixels / 255.0, labels)


def save_idx(data: Dataset, images_path, labels_path=None, shape: tuple[int, int] | None = None) -> None:
    """Write ``data`` back out in IDX layout (debugging helper).

    ``shape`` is the (rows, cols) image shape; defaults to a single row.
    """
    n, d = data.samples.shape
    rows, cols = shape if shape is not None else (1, d)
    if rows * cols != d:
        raise ValueError(f"image shape {rows}x{cols} does not match feature dim {d}")
    pixels = np.rint(data.samples * 255.0).astype(np.uint8)
    Path(images_path).write_bytes(struct.pack(">4I", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.tobytes())
    if labels_path is not None:
        if data.labels is None:
            raise ValueError("dataset has no labels to write")
        Path(labels_path).write_bytes(struct.pack(">2I", IDX_LABELS_MAGIC, n) + data.labels.astype(np.uint8).tobytes())


def split(data: Dataset, fractions=(0.7, 0.15, 0.15), rng: np.random.Generator | None = None):
    """Shuffle and partition into train/validation/test.

    Each part gets ``floor(n * f)`` rows; the rounding remainder goes to train.
    """
    n = len(data)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three positive values summing to 1, got {fractions}")
    # Small epsilon so that e.g. 20000 * 0.15 does not floor to 2999.
    sizes = np.floor(n * fr + 1e-9).astype(int)
    sizes[0] += n - sizes.sum()
    perm = (rng if rng is not None else np.random.default_rng()).permutation(n)
    a, b = sizes[0], sizes[0] + sizes[1]
    return data.subset(perm[:a]), data.subset(perm[a:b]), data.subset(perm[b:])


def add_gaussian_noise(data: Dataset, std: float, rng: np.random.Generator) -> Dataset:
    if std < 0:
        raise ValueError(f"noise std must be >= 0, got {std}")
    if std == 0:
        return data
    noisy = data.samples + rng.normal(0.0, std, size=data.samples.shape)
    return Dataset(noisy, data.labels)


def make_blobs(n: int, d: int, num_classes: int, separation: float = 1.0,
               rng: np.random.Generator | None = None, cluster_std: float | None = None) -> Dataset:
    """Balanced isotropic Gaussian clusters, affinely rescaled into [0, 1].

    Class means sit at pairwise distance ``separation`` (exactly, when
    ``num_classes <= d``) and each cluster has per-dimension standard deviation
    ``cluster_std`` (default ``separation / 4``). The rescaling is one global
    affine map, so cluster geometry stays isotropic. Class ``c`` gets rows
    ``c, c + num_classes, ...`` before shuffling, hence ``n // num_classes``
    or one more per class.
    """
    if num_classes < 1 or d < 1 or n < num_classes:
        raise ValueError(f"need n >= num_classes >= 1 and d >= 1, got n={n}, d={d}, classes={num_classes}")
    if separation <= 0:
        raise ValueError(f"separation must be > 0, got {separation}")
    rng = rng if rng is not None else np.random.default_rng()
    std = separation / 4.0 if cluster_std is None else float(cluster_std)

    dirs = rng.normal(size=(d, num_classes))
    if num_classes <= d:
        dirs, _ = np.linalg.qr(dirs)
    else:
        dirs /= np.linalg.norm(dirs, axis=0, keepdims=True)
    means = (separation / np.sqrt(2.0)) * dirs.T

    labels = np.arange(n) % num_classes
    x = means[labels] + std * rng.normal(size=(n, d))
    perm = rng.permutation(n)
    x, labels = x[perm], labels[perm]
    lo, hi = x.min(), x.max()
    x = (x - lo) / (hi - lo) if hi > lo else np.full_like(x, 0.5)
    return Dataset(x, labels)
