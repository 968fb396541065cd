"""Desk-scale datasets: Gaussian blobs, IDX (MNIST-style) files, and train/val splits."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, FormatError


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    noisy_labels: np.ndarray
    num_classes: int
    clean_labels: Optional[np.ndarray] = None
    provenance: str = ""
    norm_mean: Optional[np.ndarray] = None
    norm_std: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        y = np.asarray(self.noisy_labels).astype(np.int64)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "noisy_labels", y)
        arrays = [y]
        if self.clean_labels is not None:
            c = np.asarray(self.clean_labels).astype(np.int64)
            object.__setattr__(self, "clean_labels", c)
            arrays.append(c)
        for lab in arrays:
            if lab.shape != (x.shape[0],):
                raise DataError(f"labels of shape {lab.shape} do not match {x.shape[0]} examples")
            if lab.size and (lab.min() < 0 or lab.max() >= self.num_classes):
                raise DataError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def flip_mask(self):
        if self.clean_labels is None:
            return None
        return self.noisy_labels != self.clean_labels

    def labels(self, source):
        if source == "noisy":
            return self.noisy_labels
        if source == "clean":
            if self.clean_labels is None:
                raise DataError(f"dataset {self.provenance or '<unnamed>'} has no clean labels")
            return self.clean_labels
        raise ConfigError(f"label source must be 'clean' or 'noisy', got {source!r}")

    def subset(self, idx):
        idx = np.asarray(idx)
        return replace(
            self,
            features=self.features[idx],
            noisy_labels=self.noisy_labels[idx],
            clean_labels=None if self.clean_labels is None else self.clean_labels[idx],
        )

    def with_noisy_labels(self, noisy, tag=""):
        prov = f"{self.provenance}-{tag}" if tag else self.provenance
        clean = self.clean_labels if self.clean_labels is not None else self.noisy_labels
        return replace(self, noisy_labels=np.asarray(noisy), clean_labels=clean, provenance=prov)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray


def blob_centers(d, k, separation=1.0, arrangement="simplex"):
    """Class centers with every pairwise distance >= ``separation``.

    simplex: scaled unit vectors in the first k dimensions (needs d >= k), all
    pairwise distances equal. circle: k points on a circle in the first two
    dimensions, adjacent centers exactly ``separation`` apart.
    """
    c = np.zeros((k, d))
    if arrangement == "simplex":
        if d < k:
            raise ConfigError(f"simplex arrangement needs d >= k, got d={d}, k={k}")
        c[np.arange(k), np.arange(k)] = separation / np.sqrt(2.0)
    elif arrangement == "circle":
        radius = separation / (2.0 * np.sin(np.pi / k))
        ang = 2.0 * np.pi * np.arange(k) / k
        c[:, 0] = radius * np.cos(ang)
        c[:, 1] = radius * np.sin(ang)
    else:
        raise ConfigError(f"unknown blob arrangement {arrangement!r}")
    return c


def make_blobs(n, d, k, cluster_std, rng, separation=1.0, arrangement="simplex",
               normalize_with=None) -> Dataset:
    """Balanced isotropic Gaussian clusters, standardized per feature.

    Standardization uses this sample's statistics unless ``normalize_with`` gives
    a (mean, std) pair, which is how a test set reuses its training set's scaling.
    """
    if k < 2 or n < k or d < 2:
        raise ConfigError(f"need n >= k >= 2 and d >= 2, got n={n}, d={d}, k={k}")
    if cluster_std <= 0:
        raise ConfigError("cluster_std must be positive")
    if separation < 4.0 * cluster_std:
        raise ConfigError(
            f"center separation {separation} is below 4 * cluster_std = {4.0 * cluster_std}")
    centers = blob_centers(d, k, separation, arrangement)
    y = np.arange(n) % k
    y = y[rng.permutation(n)]
    x = centers[y] + rng.normal(0.0, cluster_std, size=(n, d))
    if normalize_with is None:
        mean, std = x.mean(axis=0), x.std(axis=0)
    else:
        mean, std = normalize_with
    x = (x - mean) / std
    prov = f"blobs-{arrangement}-n{n}-d{d}-k{k}-std{cluster_std:g}-seed{rng.seed}-zscore"
    return Dataset(x, y, k, clean_labels=y.copy(), provenance=prov, norm_mean=mean, norm_std=std)


def split_train_val(n, val_fraction, rng) -> SplitIndices:
    """Uniform (non-stratified) split; ``n`` may be a Dataset or a size."""
    if not isinstance(n, (int, np.integer)):
        n = len(n)
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    n_val = int(round(n * val_fraction))
    if n_val < 1 or n_val >= n:
        raise ConfigError(f"split of {n} examples at fraction {val_fraction} leaves an empty side")
    perm = rng.permutation(n)
    return SplitIndices(train=np.sort(perm[n_val:]), val=np.sort(perm[:n_val]))


# --- IDX format -----------------------------------------------------------------

IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_CODES = {v: k for k, v in IDX_TYPES.items()}


def decode_idx(buf: bytes, rescale=None) -> np.ndarray:
    """Decode IDX bytes. Unsigned-byte data with 2+ dims (images) is rescaled to [0, 1]
    unless ``rescale`` says otherwise; 1-d data (labels) is returned as integers."""
    if len(buf) < 4:
        raise FormatError("truncated IDX header", offset=len(buf))
    if buf[0] != 0 or buf[1] != 0:
        raise FormatError("IDX magic must start with two zero bytes", offset=0)
    code, ndim = buf[2], buf[3]
    if code not in IDX_TYPES:
        raise FormatError(f"unknown IDX data type code 0x{code:02x}", offset=2)
    header_end = 4 + 4 * ndim
    if len(buf) < header_end:
        raise FormatError(f"truncated IDX dimension table ({ndim} dims)", offset=len(buf))
    shape = struct.unpack(f">{ndim}I", buf[4:header_end])
    dtype = IDX_TYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    data = buf[header_end:]
    if len(data) < expected:
        raise FormatError(
            f"IDX payload has {len(data)} bytes, shape {shape} needs {expected}", offset=len(buf))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after IDX payload",
                          offset=header_end + expected)
    arr = np.frombuffer(data, dtype=dtype).reshape(shape)
    if rescale is None:
        rescale = code == 0x08 and ndim > 1
    if rescale:
        return arr.astype(np.float64) / 255.0
    if dtype.kind in "iu":
        return arr.astype(np.int64)
    return arr.astype(np.float64)


def parse_idx(path, rescale=None) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_idx(f.read(), rescale=rescale)


def encode_idx(arr, dtype=">u1") -> bytes:
    dtype = np.dtype(dtype)
    if dtype not in _CODES:
        raise ConfigError(f"dtype {dtype} has no IDX type code")
    arr = np.asarray(arr)
    header = bytes([0, 0, _CODES[dtype], arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return header + arr.astype(dtype).tobytes()


def write_idx(path, arr, dtype=">u1"):
    with open(path, "wb") as f:
        f.write(encode_idx(arr, dtype))


_IDX_ALIASES = {
    "train-images": ("train-images", "train-images-idx3-ubyte"),
    "train-labels": ("train-labels", "train-labels-idx1-ubyte"),
    "test-images": ("test-images", "t10k-images-idx3-ubyte"),
    "test-labels": ("test-labels", "t10k-labels-idx1-ubyte"),
}


def _find_idx(root, part):
    for name in _IDX_ALIASES[part]:
        p = os.path.join(root, name)
        if os.path.exists(p):
            return p
    raise DataError(f"no {part} file under {root}")


def load_idx_dataset(data_dir, name, subset=None, rng=None):
    """Load ``<data_dir>/<name>/{train,test}-{images,labels}`` as (train, test) Datasets.

    ``subset`` keeps a uniformly drawn number of training examples (test set is kept
    whole). Images are flattened and already in [0, 1].
    """
    root = os.path.join(data_dir, name)
    parts = {p: parse_idx(_find_idx(root, p)) for p in _IDX_ALIASES}
    out = []
    for split in ("train", "test"):
        x = parts[f"{split}-images"].reshape(len(parts[f"{split}-images"]), -1)
        y = parts[f"{split}-labels"]
        if len(x) != len(y):
            raise DataError(f"{split}: {len(x)} images but {len(y)} labels")
        out.append((x, y))
    k = int(max(out[0][1].max(), out[1][1].max()) + 1)
    (xtr, ytr), (xte, yte) = out
    if subset is not None and subset < len(xtr):
        if rng is None:
            raise ConfigError("subsetting needs an rng")
        keep = np.sort(rng.permutation(len(xtr))[:subset])
        xtr, ytr = xtr[keep], ytr[keep]
    prov = f"idx-{name}-n{len(xtr)}-unit"
    train = Dataset(xtr, ytr, k, clean_labels=ytr.copy(), provenance=prov)
    test = Dataset(xte, yte, k, clean_labels=yte.copy(), provenance=f"idx-{name}-test-unit")
    return train, test
