"""Dataset ingestion and partitioning.

MNIST-style IDX files are parsed bit-exactly (plain or gzip), scaled to
[0, 1], and split IID into participants where each holds two digits.  A
synthetic Gaussian-blob generator provides a fast deterministic corpus for
tests and sandboxed runs.
"""

import gzip
import struct
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .exceptions import FormatError, ValidationError
from .seeding import seeded_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
_GZIP_PREFIX = b"\x1f\x8b"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, d) in [0, 1]
    labels: np.ndarray  # (N,) ints

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        l = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or f.shape[0] == 0:
            raise ValidationError(f"features must be a non-empty 2-D matrix, got {f.shape}")
        if l.shape != (f.shape[0],):
            raise ValidationError(
                f"{f.shape[0]} examples but {l.shape} labels"
            )
        if not np.all(np.isfinite(f)):
            raise ValidationError("features contain non-finite values")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", l)

    def __len__(self):
        return self.features.shape[0]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx])


@dataclass
class ClientDataset:
    client_id: int
    data: Dataset
    digit_pair: tuple
    is_attacker: bool = False


@dataclass(frozen=True)
class PartitionConfig:
    num_clients: int = 100
    seed: int = 0
    digits_per_client: int = 2

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValidationError("num_clients must be >= 1")
        if self.digits_per_client < 1:
            raise ValidationError("digits_per_client must be >= 1")


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == _GZIP_PREFIX:
        raw = gzip.decompress(raw)
    return raw


def read_idx_images(path) -> np.ndarray:
    """Parse an IDX image file into a uint8 array of shape (count, rows, cols)."""
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, count, rows, cols = struct.unpack(">iiii", raw[:16])
    if magic != IMAGE_MAGIC:
        raise FormatError(
            f"{path}: expected image magic 0x{IMAGE_MAGIC:08x}, got 0x{magic:08x}"
        )
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    """Parse an IDX label file into a uint8 array of shape (count,)."""
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, count = struct.unpack(">ii", raw[:8])
    if magic != LABEL_MAGIC:
        raise FormatError(
            f"{path}: expected label magic 0x{LABEL_MAGIC:08x}, got 0x{magic:08x}"
        )
    if len(raw) != 8 + count:
        raise FormatError(f"{path}: expected {8 + count} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8)


def write_idx_images(images: np.ndarray, path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(labels: np.ndarray, path) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair as flat [0, 1] features."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValidationError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64))


def partition_iid(data: Dataset, cfg: PartitionConfig):
    """Split a dataset into clients, each holding a seed-determined pair of digits.

    Pairs are drawn uniformly with replacement over all unordered pairs of
    labels present in the data; each digit's examples are split evenly (round
    robin over a seed-shuffled order) among the clients holding that digit.
    """
    rng = seeded_rng(cfg.seed, 0xD1617)
    labels_present = sorted(int(v) for v in np.unique(data.labels))
    if len(labels_present) < cfg.digits_per_client:
        raise ValidationError(
            f"need at least {cfg.digits_per_client} distinct labels, "
            f"found {len(labels_present)}"
        )
    pairs = list(combinations(labels_present, cfg.digits_per_client))
    chosen = [pairs[i] for i in rng.integers(0, len(pairs), size=cfg.num_clients)]

    holders = {}
    for cid, pair in enumerate(chosen):
        for digit in pair:
            holders.setdefault(digit, []).append(cid)

    assigned = {cid: [] for cid in range(cfg.num_clients)}
    for digit in sorted(holders):
        idx = np.flatnonzero(data.labels == digit)
        idx = idx[rng.permutation(idx.size)]
        owners = holders[digit]
        if idx.size < len(owners):
            raise ValidationError(
                f"label {digit} has {idx.size} examples for {len(owners)} clients; "
                "some client would receive 0 samples"
            )
        for pos, example in enumerate(idx):
            assigned[owners[pos % len(owners)]].append(int(example))

    clients = []
    for cid in range(cfg.num_clients):
        if not assigned[cid]:
            raise ValidationError(f"client {cid} would receive 0 samples")
        clients.append(
            ClientDataset(
                client_id=cid,
                data=data.subset(sorted(assigned[cid])),
                digit_pair=chosen[cid],
            )
        )
    return clients


def synthetic_dataset(num_classes: int, d: int, per_class_count: int,
                      separation: float, seed: int) -> Dataset:
    """Gaussian blobs: class c centered on a seed-determined unit direction
    scaled by ``separation``, unit isotropic noise, affinely squashed into [0, 1]."""
    if num_classes < 1 or d < 1 or per_class_count < 1:
        raise ValidationError("num_classes, d and per_class_count must be positive")
    if separation <= 0:
        raise ValidationError("separation must be positive")
    rng = seeded_rng(seed, 0x5B09)
    centers = rng.normal(size=(num_classes, d))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= separation

    features = np.vstack([
        centers[c] + rng.normal(size=(per_class_count, d))
        for c in range(num_classes)
    ])
    labels = np.repeat(np.arange(num_classes), per_class_count)
    lo, hi = features.min(), features.max()
    features = (features - lo) / (hi - lo)
    return Dataset(features, labels)


def synthetic_split(num_classes: int, d: int, train_per_class: int,
                    test_per_class: int, separation: float, seed: int):
    """Train/test synthetic datasets drawn from the same class centers."""
    total = synthetic_dataset(
        num_classes, d, train_per_class + test_per_class, separation, seed
    )
    per = train_per_class + test_per_class
    train_idx, test_idx = [], []
    for c in range(num_classes):
        base = c * per
        train_idx.extend(range(base, base + train_per_class))
        test_idx.extend(range(base + train_per_class, base + per))
    return total.subset(train_idx), total.subset(test_idx)


def template_image_split(num_classes: int = 8, d: int = 784,
                         train_per_class: int = 1250, test_per_class: int = 250,
                         active_fraction: float = 0.2, noise: float = 0.1,
                         seed: int = 0):
    """Image-like corpus: each class is a sparse nonnegative template with
    per-example amplitude jitter and pixel noise, clipped to [0, 1].

    Train and test splits share the same class templates. Returns
    ``(train, test)`` datasets.
    """
    if num_classes < 1 or d < 1 or train_per_class < 1 or test_per_class < 1:
        raise ValidationError("corpus dimensions must be positive")
    if not 0.0 < active_fraction <= 1.0:
        raise ValidationError("active_fraction must be in (0, 1]")
    if noise < 0:
        raise ValidationError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    per = train_per_class + test_per_class
    templates = np.zeros((num_classes, d))
    for c in range(num_classes):
        mask = rng.random(d) < active_fraction
        templates[c, mask] = rng.uniform(0.5, 1.0, mask.sum())
    feats, labels = [], []
    for c in range(num_classes):
        amp = rng.uniform(0.7, 1.3, size=(per, 1))
        x = templates[c][None, :] * amp + rng.normal(0, noise, size=(per, d))
        feats.append(np.clip(x, 0, 1))
        labels.append(np.full(per, c))
    full = Dataset(np.vstack(feats), np.concatenate(labels))
    idx = np.arange(num_classes * per).reshape(num_classes, per)
    return (full.subset(idx[:, :train_per_class].ravel()),
            full.subset(idx[:, train_per_class:].ravel()))
