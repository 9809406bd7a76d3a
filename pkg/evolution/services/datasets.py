"""Dataset ingestion, splitting, normalisation and augmentation.

Images are NHWC float32 in [0, 1] until normalised. Binary files follow the
CIFAR record layout: label byte(s) then 3072 pixel bytes, one 32x32 plane per
channel, row-major.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.model_selection import train_test_split

from ..exceptions import FormatError, InputError, ShapeError

logger = logging.getLogger(__name__)

CIFAR_DIMS = (32, 32, 3)


@dataclass(frozen=True)
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ShapeError(f"images must be (count, height, width, channels), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ShapeError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.class_count < 1:
            raise InputError(f"class_count must be >= 1, got {self.class_count}")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise InputError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, indices: np.ndarray) -> LabeledDataset:
        return LabeledDataset(self.images[indices], self.labels[indices], self.class_count)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    @classmethod
    def empty(cls, dims: tuple[int, int, int], class_count: int) -> LabeledDataset:
        return cls(np.zeros((0, *dims), dtype=np.float32), np.zeros(0, dtype=np.int64), class_count)


def _label_bytes(class_count: int) -> int:
    # 100-class records carry (coarse, fine); only the fine label is used.
    return 2 if class_count == 100 else 1


def load_binary_dataset(
    path: str | Path | Sequence[str | Path],
    class_count: int,
    dims: tuple[int, int, int] = CIFAR_DIMS,
) -> LabeledDataset:
    """Read one or more binary record files into a single dataset."""
    paths = [path] if isinstance(path, (str, Path)) else list(path)
    if not paths:
        raise InputError("no dataset files given")
    label_bytes = _label_bytes(class_count)
    h, w, c = dims
    record = label_bytes + h * w * c
    images, labels = [], []
    for item in paths:
        try:
            raw = np.fromfile(item, dtype=np.uint8)
        except FileNotFoundError as exc:
            raise InputError(f"dataset file not found: {item}") from exc
        if raw.size % record:
            raise FormatError(f"{item}: {raw.size} bytes is not a whole number of {record}-byte records")
        rows = raw.reshape(-1, record)
        label = rows[:, label_bytes - 1].astype(np.int64)
        if label.size and label.max() >= class_count:
            raise FormatError(f"{item}: label {int(label.max())} out of range for {class_count} classes")
        pixels = rows[:, label_bytes:].reshape(-1, c, h, w).transpose(0, 2, 3, 1)
        images.append(pixels.astype(np.float32) / 255.0)
        labels.append(label)
    data = LabeledDataset(np.concatenate(images), np.concatenate(labels), class_count)
    logger.info("Loaded %d records from %d file(s)", len(data), len(paths))
    return data


def write_binary_dataset(data: LabeledDataset, path: str | Path) -> Path:
    label_bytes = _label_bytes(data.class_count)
    n = len(data)
    pixels = np.clip(np.rint(data.images * 255.0), 0, 255).astype(np.uint8).transpose(0, 3, 1, 2).reshape(n, -1)
    header = np.zeros((n, label_bytes), dtype=np.uint8)
    header[:, label_bytes - 1] = data.labels.astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.concatenate([header, pixels], axis=1).tofile(path)
    return path


def synthetic_dataset(
    seed: int,
    count: int,
    classes: int,
    dims: tuple[int, int, int] = (16, 16, 3),
    noise: float = 0.05,
) -> LabeledDataset:
    """Balanced class-conditional Gaussian blobs at random positions.

    Class k lights channel ``k % channels`` with a blob whose size grows with
    ``k // channels``; the seed fixes label order, positions and pixel noise.
    """
    if count < classes:
        raise InputError(f"count ({count}) must be >= classes ({classes})")
    rng = np.random.default_rng(seed)
    h, w, c = dims
    labels = rng.permutation(np.arange(count) % classes).astype(np.int64)
    ys, xs = np.mgrid[0:h, 0:w]
    centers_y = rng.uniform(0, h, count)
    centers_x = rng.uniform(0, w, count)
    sigma = (min(h, w) / 8.0) * (1 + labels // c)
    dist = (ys[None] - centers_y[:, None, None]) ** 2 + (xs[None] - centers_x[:, None, None]) ** 2
    blob = np.exp(-dist / (2.0 * sigma[:, None, None] ** 2))
    images = np.full((count, h, w, c), 0.3)
    images[np.arange(count), :, :, labels % c] += 0.6 * blob
    images += noise * rng.standard_normal(images.shape)
    return LabeledDataset(np.clip(images, 0.0, 1.0).astype(np.float32), labels, classes)


def stratified_split(data: LabeledDataset, holdout: int, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Split off ``holdout`` samples with per-class proportions preserved."""
    if not 0 <= holdout <= len(data):
        raise InputError(f"holdout must lie in [0, {len(data)}], got {holdout}")
    if holdout == 0:
        return data, LabeledDataset.empty(data.dims, data.class_count)
    if holdout == len(data):
        return LabeledDataset.empty(data.dims, data.class_count), data
    try:
        train_idx, val_idx = train_test_split(
            np.arange(len(data)),
            test_size=holdout,
            stratify=data.labels,
            random_state=seed,
        )
    except ValueError as exc:
        raise InputError(f"stratified split infeasible: {exc}") from exc
    return data.subset(np.sort(train_idx)), data.subset(np.sort(val_idx))


def channel_stats(data: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and (population) standard deviation."""
    if len(data) == 0:
        raise InputError("cannot compute statistics of an empty dataset")
    pixels = data.images.astype(np.float64)
    return pixels.mean(axis=(0, 1, 2)), pixels.std(axis=(0, 1, 2))


def _check_stats(data: LabeledDataset, means, stds) -> tuple[np.ndarray, np.ndarray]:
    means = np.asarray(means, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    channels = data.images.shape[-1]
    if means.shape != (channels,) or stds.shape != (channels,):
        raise ShapeError(f"expected {channels} channel statistics")
    if np.any(stds <= 0):
        raise InputError(f"channel standard deviations must be > 0, got {stds.tolist()}")
    return means, stds


def normalize(data: LabeledDataset, means, stds) -> LabeledDataset:
    means, stds = _check_stats(data, means, stds)
    images = ((data.images - means) / stds).astype(np.float32)
    return LabeledDataset(images, data.labels, data.class_count)


def denormalize(data: LabeledDataset, means, stds) -> LabeledDataset:
    means, stds = _check_stats(data, means, stds)
    images = (data.images * stds + means).astype(np.float32)
    return LabeledDataset(images, data.labels, data.class_count)


def horizontal_flip(batch: np.ndarray, coins: np.ndarray) -> np.ndarray:
    """Mirror the images whose coin is set."""
    out = batch.copy()
    out[coins] = out[coins][:, :, ::-1, :]
    return out


def cutout_mask(batch: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Zero a ``size`` x ``size`` square per image at a uniform centre, clipped at borders."""
    n, h, w, _ = batch.shape
    out = batch.copy()
    cy = rng.integers(0, h, n)
    cx = rng.integers(0, w, n)
    for index in range(n):
        top, left = cy[index] - size // 2, cx[index] - size // 2
        out[index, max(0, top) : max(0, top + size), max(0, left) : max(0, left + size), :] = 0
    return out


def augment(
    batch: np.ndarray,
    rng: np.random.Generator,
    pad: int = 4,
    crop: int = 32,
    flip: bool = True,
    cutout: int | None = None,
) -> np.ndarray:
    """Zero-pad, random crop, random horizontal flip, optional cutout."""
    n, h, w, c = batch.shape
    if crop > h + 2 * pad or crop > w + 2 * pad:
        raise InputError(f"crop {crop} exceeds padded size {h + 2 * pad}x{w + 2 * pad}")
    padded = np.pad(batch, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    tops = rng.integers(0, h + 2 * pad - crop + 1, n)
    lefts = rng.integers(0, w + 2 * pad - crop + 1, n)
    out = np.stack([padded[i, t : t + crop, l : l + crop, :] for i, (t, l) in enumerate(zip(tops, lefts))])
    if flip:
        out = horizontal_flip(out, rng.random(n) < 0.5)
    if cutout:
        out = cutout_mask(out, cutout, rng)
    return out.astype(batch.dtype, copy=False)
