"""Corpus layout, label map, tensor assembly, splitting, and synthetic gestures.

A corpus on disk is ``root/<label>/<index>.lmk`` with zero-padded indices,
one LMK1 file per captured video, plus a UTF-8 JSON label map
``{label: id}`` with ids dense from 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .landmarks import DecodeError, GestureSequence, decode_sequence, encode_sequence


class DatasetError(ValueError):
    """Base class for corpus and tensor assembly failures."""


class DuplicateLabelError(DatasetError):
    pass


class IndexingError(DatasetError):
    pass


class LoadError(DatasetError):
    pass


class SplitError(DatasetError):
    pass


@dataclass(frozen=True)
class LabelMap:
    """Bijective label -> id mapping with ids dense in 0..C-1."""

    entries: dict

    def __post_init__(self):
        ids = sorted(self.entries.values())
        if ids != list(range(len(self.entries))):
            raise DatasetError(f"label ids must be exactly 0..{len(self.entries) - 1}, got {ids}")

    def __len__(self):
        return len(self.entries)

    def id_of(self, label: str) -> int:
        return self.entries[label]

    def label_of(self, idx: int) -> str:
        return self.labels()[idx]

    def labels(self) -> list[str]:
        """Labels ordered by id."""
        return sorted(self.entries, key=self.entries.__getitem__)


def build_label_map(labels) -> LabelMap:
    """Assign id i to the i-th label of an ordered, duplicate-free list."""
    labels = list(labels)
    if not labels:
        raise DatasetError("label list is empty")
    seen = set()
    for label in labels:
        if label in seen:
            raise DuplicateLabelError(f"duplicate label {label!r}")
        seen.add(label)
    return LabelMap({label: i for i, label in enumerate(labels)})


def save_label_map(label_map: LabelMap, path) -> None:
    """Write the label map as UTF-8 JSON, keys ordered by id."""
    ordered = {label: label_map.entries[label] for label in label_map.labels()}
    Path(path).write_text(json.dumps(ordered, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def load_label_map(path) -> LabelMap:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read label map {path}: {exc}") from exc
    if not isinstance(raw, dict) or not all(isinstance(v, int) for v in raw.values()):
        raise DatasetError(f"label map {path} must be a JSON object of label -> integer id")
    return LabelMap(raw)


@dataclass
class DatasetIndex:
    """Per-label lists of sequence files under one corpus root."""

    root: Path
    files: dict  # label -> list[Path], labels and files both sorted

    def counts(self) -> dict:
        return {label: len(paths) for label, paths in self.files.items()}

    def total(self) -> int:
        return sum(len(paths) for paths in self.files.values())

    def short_labels(self) -> list[str]:
        """Labels holding fewer files than the best-populated label."""
        counts = self.counts()
        if not counts:
            return []
        top = max(counts.values())
        return [label for label, n in counts.items() if n < top]


def scan_dataset(root) -> DatasetIndex:
    """Index every ``<label>/<index>.lmk`` under root, validating each file decodes."""
    root = Path(root)
    if not root.is_dir():
        raise IndexingError(f"corpus root {root} is not a readable directory")
    files: dict = {}
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        paths = sorted(label_dir.glob("*.lmk"))
        for path in paths:
            try:
                decode_sequence(path.read_bytes())
            except (OSError, DecodeError) as exc:
                raise IndexingError(f"{path}: {exc}") from exc
        files[label_dir.name] = paths
    return DatasetIndex(root=root, files=files)


def one_hot(idx: int, num_classes: int) -> np.ndarray:
    """Unit basis vector of length ``num_classes`` with a 1 at ``idx``."""
    if not 0 <= idx < num_classes:
        raise DatasetError(f"id {idx} out of range for {num_classes} classes")
    vec = np.zeros(num_classes, np.float64)
    vec[idx] = 1.0
    return vec


@dataclass
class TensorDataset:
    """N sequences of T frames with D features, plus one-hot targets."""

    X: np.ndarray  # (N, T, D) float64
    Y: np.ndarray  # (N, C) one-hot rows

    def __post_init__(self):
        self.X = np.asarray(self.X, np.float64)
        self.Y = np.asarray(self.Y, np.float64)
        if self.X.ndim != 3 or self.Y.ndim != 2:
            raise DatasetError(f"need X (N,T,D) and Y (N,C), got {self.X.shape} and {self.Y.shape}")
        if self.X.shape[0] != self.Y.shape[0]:
            raise DatasetError(f"X has {self.X.shape[0]} rows but Y has {self.Y.shape[0]}")
        ok = np.all(np.isin(self.Y, (0.0, 1.0))) and np.all(self.Y.sum(axis=1) == 1.0)
        if not ok:
            raise DatasetError("every Y row must be one-hot")

    def __len__(self):
        return self.X.shape[0]

    @property
    def num_classes(self) -> int:
        return self.Y.shape[1]

    def take(self, rows) -> "TensorDataset":
        return TensorDataset(self.X[rows], self.Y[rows])


def load_tensors(index: DatasetIndex, labels: LabelMap, expected_frames: int = 30,
                 expected_dim: int | None = None) -> TensorDataset:
    """Stack every indexed file into (X, Y), in (label id, video index) order.

    Every file must hold exactly ``expected_frames`` frames; the feature
    dimension is taken from the first file unless ``expected_dim`` pins it.
    """
    for label in index.files:
        if label not in labels.entries:
            raise LoadError(f"label {label!r} from {index.root} is not in the label map")
    xs, ys = [], []
    dim = expected_dim
    num_classes = len(labels)
    for label in sorted(index.files, key=labels.id_of):
        target = one_hot(labels.id_of(label), num_classes)
        for path in index.files[label]:
            try:
                seq = decode_sequence(path.read_bytes(), expected_dim=dim)
            except (OSError, DecodeError) as exc:
                raise LoadError(f"{path}: {exc}") from exc
            if len(seq) != expected_frames:
                raise LoadError(f"{path}: has {len(seq)} frames, expected {expected_frames}")
            if dim is None:
                dim = seq.frames.shape[1]
            xs.append(seq.frames.astype(np.float64))
            ys.append(target)
    if not xs:
        raise LoadError(f"no sequence files indexed under {index.root}")
    return TensorDataset(np.stack(xs), np.stack(ys))


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise SplitError(f"test_fraction must be in (0, 1), got {self.test_fraction}")


def train_test_split(data: TensorDataset, cfg: SplitConfig):
    """Seeded uniform shuffle, then the first ceil(fraction * N) rows become the test set."""
    n = len(data)
    if n < 2:
        raise SplitError(f"need at least 2 rows to split, got {n}")
    test_size = math.ceil(cfg.test_fraction * n)
    if test_size == 0 or test_size == n:
        raise SplitError(f"split of {n} rows at fraction {cfg.test_fraction} leaves an empty side")
    perm = np.random.default_rng(cfg.seed).permutation(n)
    return data.take(perm[test_size:]), data.take(perm[:test_size])


def synth_gestures(num_classes: int, videos_per_class: int, frames: int, dims: int,
                   noise_sd: float = 0.0, seed: int = 0) -> TensorDataset:
    """Generate a separable synthetic gesture corpus.

    Each class gets a prototype trajectory: a seeded random walk started
    uniformly in [0,1]^D and clamped to [0,1] after every uniform step.
    Each video is the prototype plus iid Gaussian noise of ``noise_sd``,
    clamped to [0,1]. Rows are stacked class-major.
    """
    if min(num_classes, videos_per_class, frames, dims) < 1:
        raise DatasetError("num_classes, videos_per_class, frames, and dims must all be >= 1")
    if noise_sd < 0:
        raise DatasetError(f"noise_sd must be >= 0, got {noise_sd}")
    step = 0.1  # walk step half-range; keeps trajectories smooth at 30 frames
    xs = np.empty((num_classes * videos_per_class, frames, dims), np.float64)
    ys = np.zeros((num_classes * videos_per_class, num_classes), np.float64)
    streams = np.random.SeedSequence(seed).spawn(num_classes)
    for c in range(num_classes):
        rng = np.random.default_rng(streams[c])
        proto = np.empty((frames, dims), np.float64)
        proto[0] = rng.random(dims)
        for t in range(1, frames):
            proto[t] = np.clip(proto[t - 1] + rng.uniform(-step, step, dims), 0.0, 1.0)
        for v in range(videos_per_class):
            row = c * videos_per_class + v
            if noise_sd == 0.0:
                xs[row] = proto
            else:
                xs[row] = np.clip(proto + rng.normal(0.0, noise_sd, (frames, dims)), 0.0, 1.0)
            ys[row, c] = 1.0
    return TensorDataset(xs, ys)


def class_names(num_classes: int) -> list[str]:
    """Placeholder labels for generated corpora: sign00, sign01, ..."""
    width = max(2, len(str(num_classes - 1)))
    return [f"sign{c:0{width}d}" for c in range(num_classes)]


def write_corpus(root, data: TensorDataset, label_map: LabelMap) -> int:
    """Write a TensorDataset as an on-disk corpus; returns the file count.

    Rows must be grouped by class in label-id order, as ``synth_gestures``
    and ``load_tensors`` produce them.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    per_label: dict = {label: 0 for label in label_map.labels()}
    ids = np.argmax(data.Y, axis=1)
    most_videos = int(np.bincount(ids, minlength=len(label_map)).max())
    width = max(2, len(str(max(1, most_videos - 1))))
    written = 0
    for row in range(len(data)):
        label = label_map.label_of(int(ids[row]))
        label_dir = root / label
        label_dir.mkdir(exist_ok=True)
        idx = per_label[label]
        per_label[label] += 1
        seq = GestureSequence(frames=data.X[row].astype(np.float32), label=label)
        (label_dir / f"{idx:0{width}d}.lmk").write_bytes(encode_sequence(seq))
        written += 1
    return written
