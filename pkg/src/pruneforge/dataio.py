"""Dataset ingestion, splits, normalization, and a seeded synthetic generator.

Samples live as raw tensor files next to a JSON manifest:

* sample file: magic ``TNSR``, uint32 LE rank, rank * uint64 LE extents,
  raw little-endian float32 values (row-major);
* manifest: ``{"class_names": [...], "entries": [{"path", "label"}, ...]}``
  with paths relative to the manifest's directory.

Byte-exact schemas are documented in docs/formats.md. The synthetic
generator draws one shape family per class on a noisy background, so the
repository is self-contained for tests and demos.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

TENSOR_MAGIC = b"TNSR"


class DatasetError(ValueError):
    """Manifest or sample files are missing, malformed, or inconsistent."""


def save_tensor(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        for ext in arr.shape:
            fh.write(struct.pack("<Q", ext))
        fh.write(arr.tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TENSOR_MAGIC:
            raise DatasetError(f"{path}: bad magic bytes, not a tensor file")
        raw = fh.read(4)
        if len(raw) != 4:
            raise DatasetError(f"{path}: truncated tensor file")
        (rank,) = struct.unpack("<I", raw)
        shape = []
        for _ in range(rank):
            raw = fh.read(8)
            if len(raw) != 8:
                raise DatasetError(f"{path}: truncated tensor file")
            shape.append(struct.unpack("<Q", raw)[0])
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = fh.read(n * 4)
        if len(raw) != n * 4:
            raise DatasetError(f"{path}: truncated tensor file")
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


@dataclass
class Dataset:
    images: np.ndarray  # [n, channels, height, width] float32
    labels: np.ndarray  # [n] int
    class_names: list[str]

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DatasetError("images must be [n, channels, height, width]")
        if self.images.shape[0] != self.labels.shape[0]:
            raise DatasetError("image and label counts differ")
        c = len(self.class_names)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= c):
            raise DatasetError(f"label outside [0, {c})")

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    @property
    def resolution(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def class_sizes(self) -> list[int]:
        return [int((self.labels == j).sum()) for j in range(self.class_count)]


def load_dataset(manifest_path) -> Dataset:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read manifest {manifest_path}: {exc}") from exc
    entries = doc.get("entries", [])
    if not entries:
        raise DatasetError(f"{manifest_path}: manifest has no entries")
    class_names = doc.get("class_names")
    if not class_names:
        labels_seen = sorted({int(e["label"]) for e in entries})
        class_names = [f"class_{j}" for j in range(labels_seen[-1] + 1)]
    root = manifest_path.parent
    images, labels = [], []
    resolution = None
    for e in entries:
        label = int(e["label"])
        if not 0 <= label < len(class_names):
            raise DatasetError(f"{manifest_path}: unknown label {label}")
        sample_path = root / e["path"]
        if not sample_path.exists():
            raise DatasetError(f"missing sample file {sample_path}")
        arr = load_tensor(sample_path)
        if arr.ndim != 3:
            raise DatasetError(f"{sample_path}: sample must be [channels, height, width]")
        if resolution is None:
            resolution = arr.shape
        elif arr.shape != resolution:
            raise DatasetError(
                f"{sample_path}: resolution {arr.shape} != {resolution} of first sample"
            )
        images.append(arr)
        labels.append(label)
    ds = Dataset(np.stack(images), np.asarray(labels, dtype=np.int64), list(class_names))
    for j, size in enumerate(ds.class_sizes()):
        if size == 0:
            raise DatasetError(f"class {j} ('{class_names[j]}') has no samples")
    return ds


def write_dataset(directory, dataset: Dataset, manifest_name: str = "manifest.json") -> Path:
    """Write samples + manifest under ``directory``; returns the manifest path."""
    directory = Path(directory)
    (directory / "samples").mkdir(parents=True, exist_ok=True)
    entries = []
    digits = max(5, len(str(dataset.images.shape[0])))
    for i in range(dataset.images.shape[0]):
        rel = f"samples/{i:0{digits}d}.tnsr"
        save_tensor(directory / rel, dataset.images[i])
        entries.append({"path": rel, "label": int(dataset.labels[i])})
    manifest = {"class_names": dataset.class_names, "entries": entries}
    path = directory / manifest_name
    path.write_text(json.dumps(manifest, indent=1))
    return path


# ---------------------------------------------------------------------------
# splits

@dataclass
class SplitPlan:
    split_count: int
    train_fraction: float
    seed: int
    splits: list[tuple[np.ndarray, np.ndarray]]  # (train indices, test indices)

    def train_test(self, split: int) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= split < self.split_count:
            raise DatasetError(f"split index {split} out of range 0..{self.split_count - 1}")
        return self.splits[split]


def make_splits(dataset: Dataset, split_count: int = 5, train_fraction: float = 0.5, seed: int = 0) -> SplitPlan:
    """Stratified random train/test splits, seeded per split.

    Each class's samples are shuffled and the first floor(fraction * n) go to
    train, so every class appears in every train split or loading fails.
    """
    if not 0 < train_fraction < 1:
        raise DatasetError("train_fraction must be in (0, 1)")
    if split_count < 1:
        raise DatasetError("split_count must be >= 1")
    splits = []
    for s in range(split_count):
        rng = np.random.default_rng([seed, s])
        train_idx, test_idx = [], []
        for j in range(dataset.class_count):
            members = np.flatnonzero(dataset.labels == j)
            take = int(train_fraction * members.size)
            if take == 0:
                raise DatasetError(
                    f"class {j} with {members.size} samples is too small for train_fraction {train_fraction}"
                )
            order = rng.permutation(members)
            train_idx.append(order[:take])
            test_idx.append(order[take:])
        splits.append((np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))))
    return SplitPlan(split_count, train_fraction, seed, splits)


# ---------------------------------------------------------------------------
# normalization

@dataclass(frozen=True)
class NormalizationRecord:
    mean: tuple[float, ...]  # per channel, from the train split only
    std: tuple[float, ...]


def normalization_stats(train_images: np.ndarray) -> NormalizationRecord:
    mean = train_images.mean(axis=(0, 2, 3))
    std = train_images.std(axis=(0, 2, 3))
    fixed = []
    for ch, s in enumerate(std):
        if s == 0.0:
            log.warning("channel %d has zero variance; using unit divisor", ch)
            fixed.append(1.0)
        else:
            fixed.append(float(s))
    return NormalizationRecord(tuple(float(m) for m in mean), tuple(fixed))


def apply_normalization(images: np.ndarray, record: NormalizationRecord) -> np.ndarray:
    mean = np.asarray(record.mean, dtype=images.dtype)[None, :, None, None]
    std = np.asarray(record.std, dtype=images.dtype)[None, :, None, None]
    return (images - mean) / std


# ---------------------------------------------------------------------------
# synthetic data

def _shape_mask(kind: int, h: int, w: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    if kind == 0:  # filled disk
        return (dy * dy + dx * dx) <= r * r
    if kind == 1:  # square outline
        inside = (np.abs(dy) <= r) & (np.abs(dx) <= r)
        hole = (np.abs(dy) <= r - 2) & (np.abs(dx) <= r - 2)
        return inside & ~hole
    if kind == 2:  # plus / cross
        return ((np.abs(dx) <= 1) & (np.abs(dy) <= r)) | ((np.abs(dy) <= 1) & (np.abs(dx) <= r))
    if kind == 3:  # upward triangle
        return (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) / 2)
    if kind == 4:  # ring
        d2 = dy * dy + dx * dx
        return (d2 <= r * r) & (d2 >= (r - 2) ** 2)
    if kind == 5:  # diagonal stroke
        return (np.abs(dy - dx) <= 1.2) & (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if kind == 6:  # X
        return ((np.abs(dy - dx) <= 1.2) | (np.abs(dy + dx) <= 1.2)) & (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if kind == 7:  # horizontal bar
        return (np.abs(dy) <= 1.5) & (np.abs(dx) <= r)
    if kind == 8:  # vertical bar
        return (np.abs(dx) <= 1.5) & (np.abs(dy) <= r)
    if kind == 9:  # two dots
        d1 = (yy - (cy - r / 2)) ** 2 + (xx - cx) ** 2
        d2 = (yy - (cy + r / 2)) ** 2 + (xx - cx) ** 2
        return (d1 <= (r / 3) ** 2) | (d2 <= (r / 3) ** 2)
    raise DatasetError(f"no shape family {kind}")


def synthetic_dataset(
    class_count: int = 3,
    per_class: int = 100,
    resolution: tuple[int, int, int] = (1, 16, 16),
    seed: int = 0,
    noise: float = 0.15,
) -> Dataset:
    """Seeded shapes-on-noise classification set; one shape family per class.

    Values lie in [0, 1]. Up to 10 classes are supported, limited by the
    shape library.
    """
    if class_count > 10:
        raise DatasetError("synthetic generator supports at most 10 classes")
    bands, h, w = resolution
    if h < 12 or w < 12:
        raise DatasetError("synthetic images need at least 12x12 pixels")
    rng = np.random.default_rng(seed)
    images = np.empty((class_count * per_class, bands, h, w), dtype=np.float32)
    labels = np.empty(class_count * per_class, dtype=np.int64)
    i = 0
    for j in range(class_count):
        for _ in range(per_class):
            background = rng.normal(0.25, noise, size=(bands, h, w))
            r = rng.uniform(0.22, 0.32) * min(h, w)
            cy = rng.uniform(r + 1, h - r - 1)
            cx = rng.uniform(r + 1, w - r - 1)
            mask = _shape_mask(j % 10, h, w, cy, cx, r)
            intensity = rng.uniform(0.75, 1.0)
            img = background
            img[:, mask] = intensity + rng.normal(0, 0.05, size=(bands, int(mask.sum())))
            images[i] = np.clip(img, 0.0, 1.0)
            labels[i] = j
            i += 1
    order = rng.permutation(i)
    return Dataset(images[order], labels[order], [f"shape_{j}" for j in range(class_count)])
