"""MNIST-style IDX ingestion and binary-task preparation.

IDX files are big-endian: a 4-byte magic (``0x00000803`` for ubyte image
stacks, ``0x00000801`` for ubyte label vectors), one 4-byte size per
dimension, then the raw bytes. Gzipped files are read transparently.

No files are downloaded. Point ``QNNSTAB_DATA_DIR`` (or ``--data-dir``) at a
directory holding ``train-images-idx3-ubyte[.gz]`` and
``train-labels-idx1-ubyte[.gz]`` from the official MNIST or Fashion-MNIST
distribution. Without one, a bundled 5000-image MNIST sample is used.
"""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .exceptions import (
    BadMagicError,
    ConfigurationError,
    CountMismatchError,
    InsufficientDataError,
    IngestionError,
    TruncatedFileError,
)
from .train import Dataset, make_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_DIR_ENV = "QNNSTAB_DATA_DIR"
BUNDLED_DIR = Path(__file__).with_name("data_files")
BUNDLED_IMAGES = BUNDLED_DIR / "mnist-sample-images-idx3-ubyte.gz"
BUNDLED_LABELS = BUNDLED_DIR / "mnist-sample-labels-idx1-ubyte.gz"


@dataclass(frozen=True, eq=False)
class RawImageSet:
    images: np.ndarray  # (N, rows, cols) uint8
    labels: np.ndarray  # (N,) uint8

    def __len__(self):
        return len(self.labels)


def _read_bytes(path) -> bytes:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if blob[:2] == b"\x1f\x8b":
        try:
            blob = gzip.decompress(blob)
        except (OSError, EOFError) as exc:
            raise TruncatedFileError(f"{path}: corrupt gzip stream ({exc})") from exc
    return blob


def _parse_idx(path, magic, ndim):
    blob = _read_bytes(path)
    header = 4 + 4 * ndim
    if len(blob) < 4:
        raise TruncatedFileError(f"{path}: file is shorter than the IDX magic number")
    (found,) = struct.unpack(">I", blob[:4])
    if found != magic:
        raise BadMagicError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(blob) < header:
        raise TruncatedFileError(f"{path}: truncated IDX header")
    dims = struct.unpack(">" + "I" * ndim, blob[4:header])
    size = int(np.prod(dims))
    if len(blob) - header < size:
        raise TruncatedFileError(f"{path}: expected {size} data bytes, found {len(blob) - header}")
    return np.frombuffer(blob, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> RawImageSet:
    """Read an image/label IDX pair."""
    images = _parse_idx(images_path, IMAGE_MAGIC, 3)
    labels = _parse_idx(labels_path, LABEL_MAGIC, 1)
    if len(images) != len(labels):
        raise CountMismatchError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels"
        )
    return RawImageSet(images.copy(), labels.copy())


def write_idx(path, array) -> None:
    """Write a uint8 array as IDX (gzipped when ``path`` ends in ``.gz``)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    blob = struct.pack(">I", magic) + struct.pack(">" + "I" * array.ndim, *array.shape) + array.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        blob = gzip.compress(blob, mtime=0)
    path.write_bytes(blob)


def _find(directory, stem):
    for name in (stem, stem + ".gz"):
        candidate = Path(directory) / name
        if candidate.exists():
            return candidate
    raise IngestionError(f"no {stem}[.gz] in {directory}")


def load_dataset_dir(data_dir=None, split="train") -> RawImageSet:
    """Images from ``data_dir`` (or ``$QNNSTAB_DATA_DIR``); the bundled sample if neither is set."""
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        return load_idx(BUNDLED_IMAGES, BUNDLED_LABELS)
    prefix = "train" if split == "train" else "t10k"
    return load_idx(_find(data_dir, f"{prefix}-images-idx3-ubyte"), _find(data_dir, f"{prefix}-labels-idx1-ubyte"))


def pooling_grid(d: int, rows: int = 28, cols: int = 28) -> Tuple[int, int]:
    """Grid ``(gr, gc)`` with ``gr * gc = d`` whose cells tile the image exactly, as square as possible."""
    if d < 1:
        raise ConfigurationError("d must be >= 1")
    options = [(g, d // g) for g in range(1, d + 1) if d % g == 0 and rows % g == 0 and cols % (d // g) == 0]
    if not options:
        raise ConfigurationError(f"{d} features cannot tile a {rows}x{cols} image")
    return min(options, key=lambda gc: (abs(gc[0] - gc[1]), -gc[0]))


def pool_features(images, d: int) -> np.ndarray:
    """Average-pool each image to ``d`` cells and map ``[0, 255]`` linearly to ``[0, pi]``."""
    images = np.asarray(images, dtype=float)
    n, rows, cols = images.shape
    gr, gc = pooling_grid(d, rows, cols)
    blocks = images.reshape(n, gr, rows // gr, gc, cols // gc).mean(axis=(2, 4))
    return np.clip(blocks.reshape(n, d) / 255.0 * np.pi, 0.0, np.pi)


def _split_counts(total, rng):
    half, extra = divmod(total, 2)
    first = half + (extra if rng.random() < 0.5 else 0)
    return first, total - first


def prepare_binary(raw: RawImageSet, class_a: int, class_b: int, d: int, m_train: int, m_test: int, seed: int):
    """Disjoint, class-balanced train/test sets for ``class_a`` (+1) vs ``class_b`` (-1)."""
    if class_a == class_b:
        raise ConfigurationError("the two classes must differ")
    if m_train < 1 or m_test < 1:
        raise ConfigurationError("m_train and m_test must be >= 1")
    rng = make_rng(seed)
    train_a, train_b = _split_counts(m_train, rng)
    test_a, test_b = _split_counts(m_test, rng)
    parts = {"train": [], "test": []}
    for cls, label, n_train, n_test in ((class_a, 1.0, train_a, test_a), (class_b, -1.0, train_b, test_b)):
        pool = np.flatnonzero(raw.labels == cls)
        if len(pool) < n_train + n_test:
            raise InsufficientDataError(f"class {cls} has {len(pool)} examples, need {n_train + n_test}")
        chosen = rng.permutation(pool)[: n_train + n_test]
        parts["train"].append((chosen[:n_train], label))
        parts["test"].append((chosen[n_train:], label))
    out = []
    for key in ("train", "test"):
        idx = np.concatenate([i for i, _ in parts[key]])
        y = np.concatenate([np.full(len(i), lab) for i, lab in parts[key]])
        order = rng.permutation(len(idx))
        out.append(Dataset(pool_features(raw.images[idx[order]], d), y[order]))
    return out[0], out[1]


def corrupt_labels(data: Dataset, r: float, seed: int) -> Dataset:
    """Resample each label uniformly from ``{-1, +1}`` with probability ``r``.

    The uniform draws are shared across ``r`` for a fixed seed, so the set of
    resampled examples grows monotonically with ``r``.
    """
    if not 0.0 <= r <= 1.0:
        raise ConfigurationError(f"label-noise rate must lie in [0, 1], got {r}")
    rng = make_rng(seed)
    u = rng.random(data.m)
    fresh = rng.choice(np.array([-1.0, 1.0]), size=data.m)
    return Dataset(data.X, np.where(u < r, fresh, data.y))


def write_prepared(path, train: Dataset, test: Dataset) -> None:
    """Store a prepared train/test pair as CSV: ``split,label,x0..x{d-1}`` with 17 significant digits."""
    d = train.d
    lines = ["split,label," + ",".join(f"x{j}" for j in range(d))]
    for name, part in (("train", train), ("test", test)):
        for x, y in zip(part.X, part.y):
            lines.append(f"{name},{int(y)}," + ",".join(format(v, ".17g") for v in x))
    Path(path).write_text("\n".join(lines) + "\n")


def read_prepared(path) -> Tuple[Dataset, Dataset]:
    """Inverse of :func:`write_prepared`."""
    rows = Path(path).read_text().strip().splitlines()
    if not rows or not rows[0].startswith("split,label"):
        raise IngestionError(f"{path}: not a prepared dataset file")
    parts = {"train": ([], []), "test": ([], [])}
    for line in rows[1:]:
        name, label, *features = line.split(",")
        if name not in parts:
            raise IngestionError(f"{path}: unknown split {name!r}")
        parts[name][0].append([float(v) for v in features])
        parts[name][1].append(float(label))
    if not parts["train"][1] or not parts["test"][1]:
        raise InsufficientDataError(f"{path}: both splits need at least one example")
    return Dataset(*parts["train"]), Dataset(*parts["test"])
