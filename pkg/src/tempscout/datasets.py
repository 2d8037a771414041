"""Embedding dataset model, binary/CSV persistence, and stratified splitting.

A dataset is an immutable (X, y) pair with provenance: `name` identifies the
source dataset (the grouping key for leave-one-group-out CV) and `extractor`
identifies the feature extractor that produced the embeddings.

On-disk binary format "EMB1" is a directory:

    meta.json        {"magic": "EMB1", "name", "extractor", "n", "d", "c",
                      "label_map"}
    embeddings.f32le N*d little-endian float32, row-major
    labels.u32le     N little-endian uint32

CSV format: header row ``f0,...,f{d-1},label``, one sample per line.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ClassTooSmallError,
    ConfigError,
    EmptyClassError,
    MalformedHeaderError,
    NonFiniteValueError,
    PayloadSizeMismatchError,
    ZeroRowError,
)

META_MAGIC = "EMB1"
META_FILE = "meta.json"
EMB_FILE = "embeddings.f32le"
LABEL_FILE = "labels.u32le"


@dataclass(frozen=True)
class EmbeddingDataset:
    """N x d embeddings with dense integer labels in 0..C-1.

    `label_map[k]` records the original label id that was remapped to dense
    id k (identity for datasets born dense). Instances are treated as
    immutable; `validate()` enforces the source-dataset invariants and is
    called at load/generate boundaries, not on every construction, so that
    split halves (which may drop classes) remain representable.
    """

    name: str
    extractor: str
    X: np.ndarray
    y: np.ndarray
    label_map: tuple[int, ...] = field(default=())

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float32))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.uint32))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.label_map:
            c = int(y.max()) + 1 if y.size else 0
            object.__setattr__(self, "label_map", tuple(range(c)))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def c(self) -> int:
        return len(self.label_map)

    def class_indices(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.y == k) for k in range(self.c)]

    def validate(self) -> "EmbeddingDataset":
        if self.X.ndim != 2:
            raise MalformedHeaderError("embeddings must be a 2-D matrix")
        if self.n < 2:
            raise EmptyClassError(f"need at least 2 samples, got {self.n}")
        if self.d < 1:
            raise MalformedHeaderError("embedding dimensionality must be >= 1")
        if not np.isfinite(self.X).all():
            raise NonFiniteValueError("embeddings contain NaN or Inf")
        if self.y.shape != (self.n,):
            raise PayloadSizeMismatchError(
                f"label count {self.y.shape} does not match sample count {self.n}"
            )
        if self.c < 2:
            raise EmptyClassError(f"need at least 2 classes, got {self.c}")
        if self.y.size and int(self.y.max()) >= self.c:
            raise EmptyClassError(
                f"label {int(self.y.max())} out of range for {self.c} classes"
            )
        counts = np.bincount(self.y, minlength=self.c)
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            raise EmptyClassError(f"classes with zero samples: {missing.tolist()}")
        row_norms = np.linalg.norm(self.X.astype(np.float64), axis=1)
        if (row_norms == 0.0).any():
            bad = int(np.flatnonzero(row_norms == 0.0)[0])
            raise ZeroRowError(f"row {bad} is the all-zero vector")
        return self


@dataclass(frozen=True)
class SplitDataset:
    """A stratified train/val partition of one dataset."""

    train: EmbeddingDataset
    val: EmbeddingDataset
    seed: int
    ratio: float


def _dense_remap(y_raw: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    """Remap arbitrary integer label ids to dense 0..C-1, sorted by original id."""
    originals = np.unique(y_raw)
    lookup = {int(v): k for k, v in enumerate(originals)}
    dense = np.array([lookup[int(v)] for v in y_raw], dtype=np.uint32)
    return dense, tuple(int(v) for v in originals)


def save_dataset(ds: EmbeddingDataset, path, format: str = "binary") -> None:
    """Persist a validated dataset; binary round-trips bit-exactly."""
    ds.validate()
    path = Path(path)
    if format == "binary":
        path.mkdir(parents=True, exist_ok=True)
        meta = {
            "magic": META_MAGIC,
            "name": ds.name,
            "extractor": ds.extractor,
            "n": ds.n,
            "d": ds.d,
            "c": ds.c,
            "label_map": list(ds.label_map),
        }
        (path / META_FILE).write_text(json.dumps(meta, indent=2) + "\n")
        ds.X.astype("<f4").tofile(path / EMB_FILE)
        ds.y.astype("<u4").tofile(path / LABEL_FILE)
    elif format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"f{j}" for j in range(ds.d)] + ["label"])
            for i in range(ds.n):
                writer.writerow([repr(float(v)) for v in ds.X[i]] + [int(ds.y[i])])
    else:
        raise ConfigError(f"unknown format {format!r}")


def load_dataset(path, format: str = "binary") -> EmbeddingDataset:
    """Load and validate a dataset from an EMB1 directory or a CSV file."""
    path = Path(path)
    if format == "binary":
        return _load_binary(path)
    if format == "csv":
        return _load_csv(path)
    raise ConfigError(f"unknown format {format!r}")


def _load_binary(path: Path) -> EmbeddingDataset:
    meta_path = path / META_FILE
    if not meta_path.is_file():
        raise MalformedHeaderError(f"missing {META_FILE} in {path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedHeaderError(f"unparseable {META_FILE}: {exc}") from exc
    if not isinstance(meta, dict) or meta.get("magic") != META_MAGIC:
        raise MalformedHeaderError(f"bad magic in {meta_path}, expected {META_MAGIC!r}")
    for key in ("name", "extractor", "n", "d", "c"):
        if key not in meta:
            raise MalformedHeaderError(f"{META_FILE} missing field {key!r}")
    n, d, c = int(meta["n"]), int(meta["d"]), int(meta["c"])

    emb_bytes = (path / EMB_FILE).read_bytes()
    if len(emb_bytes) != n * d * 4:
        raise PayloadSizeMismatchError(
            f"payload size mismatch: {EMB_FILE} has {len(emb_bytes)} bytes, "
            f"expected n*d*4 = {n * d * 4}"
        )
    label_bytes = (path / LABEL_FILE).read_bytes()
    if len(label_bytes) != n * 4:
        raise PayloadSizeMismatchError(
            f"payload size mismatch: {LABEL_FILE} has {len(label_bytes)} bytes, "
            f"expected n*4 = {n * 4}"
        )
    X = np.frombuffer(emb_bytes, dtype="<f4").reshape(n, d)
    y_raw = np.frombuffer(label_bytes, dtype="<u4")
    if not np.isfinite(X).all():
        raise NonFiniteValueError("embeddings contain NaN or Inf")
    if y_raw.size and int(y_raw.max()) >= c:
        raise EmptyClassError(
            f"label {int(y_raw.max())} out of declared range 0..{c - 1}"
        )
    counts = np.bincount(y_raw, minlength=c)
    if (counts == 0).any():
        missing = np.flatnonzero(counts == 0).tolist()
        raise EmptyClassError(f"classes with zero samples after remap: {missing}")
    label_map = tuple(int(v) for v in meta.get("label_map", range(c)))
    if len(label_map) != c:
        raise MalformedHeaderError("label_map length disagrees with declared c")
    return EmbeddingDataset(
        name=str(meta["name"]),
        extractor=str(meta["extractor"]),
        X=X,
        y=y_raw,
        label_map=label_map,
    ).validate()


def _load_csv(path: Path) -> EmbeddingDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedHeaderError(f"{path} is empty") from None
        d = len(header) - 1
        if d < 1 or header[-1] != "label" or header[:d] != [f"f{j}" for j in range(d)]:
            raise MalformedHeaderError(
                f"CSV header must be f0..f{{d-1}},label, got {header!r}"
            )
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise PayloadSizeMismatchError(
                    f"payload size mismatch: line {lineno} has {len(row)} fields, "
                    f"expected {d + 1}"
                )
            try:
                rows.append([float(v) for v in row[:d]])
                labels.append(int(row[d]))
            except ValueError as exc:
                raise MalformedHeaderError(f"line {lineno}: {exc}") from exc
    if not rows:
        raise EmptyClassError(f"{path} contains no data rows")
    X = np.asarray(rows, dtype=np.float32)
    if not np.isfinite(X).all():
        raise NonFiniteValueError("embeddings contain NaN or Inf")
    y, label_map = _dense_remap(np.asarray(labels))
    return EmbeddingDataset(
        name=path.stem, extractor="csv", X=X, y=y, label_map=label_map
    ).validate()


def stratified_split(ds: EmbeddingDataset, ratio: float = 0.8, seed: int = 0) -> SplitDataset:
    """Split per class at `ratio`, keeping every class on both sides.

    Per-class train size is round(ratio * class_size) clamped to
    [1, class_size - 1]; deterministic in `seed`.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"ratio must be in (0,1), got {ratio}")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for k, idx in enumerate(ds.class_indices()):
        if idx.size < 2:
            raise ClassTooSmallError(
                f"class {k} has {idx.size} sample(s): class too small to stratify"
            )
        perm = rng.permutation(idx)
        n_train = int(round(ratio * idx.size))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_idx.append(perm[:n_train])
        val_idx.append(perm[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))

    def take(indices):
        return EmbeddingDataset(
            name=ds.name,
            extractor=ds.extractor,
            X=ds.X[indices],
            y=ds.y[indices],
            label_map=ds.label_map,
        )

    return SplitDataset(train=take(train_idx), val=take(val_idx), seed=seed, ratio=ratio)
