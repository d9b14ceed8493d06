"""Feature/label datasets: in-memory representation, file formats, synthesis.

On-disk formats (little endian, fixed):

  features (.fmat):  magic b"FMAT" | u32 version=1 | u64 n | u64 d
                     | n*d float32, row major
  labels   (.lpos):  magic b"LPOS" | u32 version=1 | u64 n | u64 m | u64 k
                     | (n+1) u32 prefix-sum offsets | u32 class indices

Features are stored as 32-bit floats (matching typical extracted-feature
pipelines) and upconverted to float64 on load; all computation is 64-bit.
The per-example positive-class cap k is stored in the label file so
sensitivity bounds stay stable under dataset slicing.

CSV dialect: comma separator, no header row, '.' decimal point; label rows
are comma-separated class-index lists (blank row = no positives).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"FMAT"
LABEL_MAGIC = b"LPOS"
FORMAT_VERSION = 1

_FEATURE_HEADER = struct.Struct("<4sIQQ")
_LABEL_HEADER = struct.Struct("<4sIQQQ")


class DatasetError(ValueError):
    """Dataset validation or parse failure with a stable error code.

    Codes: bad_magic, bad_version, size_mismatch, non_finite, label_invariant,
    parse, shape_mismatch.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class FeatureDataset:
    """n x d feature matrix with per-example positive-class index lists.

    Labels are stored in compressed sparse row form: ``label_offsets`` holds
    n+1 prefix sums into ``label_indices``. Instances are immutable and safe
    to share across threads.
    """

    features: np.ndarray
    label_offsets: np.ndarray
    label_indices: np.ndarray
    num_classes: int
    max_positives: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        offsets = np.asarray(self.label_offsets, dtype=np.int64)
        indices = np.asarray(self.label_indices, dtype=np.int64)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "label_offsets", offsets)
        object.__setattr__(self, "label_indices", indices)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DatasetError("shape_mismatch", f"features must be (n>=1, d>=1), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DatasetError("non_finite", "features contain non-finite values")
        n = x.shape[0]
        if self.num_classes < 1:
            raise DatasetError("label_invariant", f"need at least one class, got {self.num_classes}")
        if self.max_positives < 0:
            raise DatasetError("label_invariant", f"max_positives must be >= 0, got {self.max_positives}")
        if offsets.shape != (n + 1,) or offsets[0] != 0:
            raise DatasetError("label_invariant", "offsets must be n+1 values starting at 0")
        if np.any(np.diff(offsets) < 0):
            raise DatasetError("label_invariant", "offsets must be nondecreasing")
        if offsets[-1] != indices.shape[0]:
            raise DatasetError("label_invariant", "offsets do not cover the index array")
        counts = np.diff(offsets)
        if np.any(counts > self.max_positives):
            raise DatasetError(
                "label_invariant",
                f"an example has {int(counts.max())} positives, cap is {self.max_positives}",
            )
        if indices.size:
            if indices.min() < 0 or indices.max() >= self.num_classes:
                raise DatasetError("label_invariant", "class index out of range")
            for i in range(n):
                row = indices[offsets[i]:offsets[i + 1]]
                if row.size > 1 and np.any(np.diff(row) <= 0):
                    raise DatasetError(
                        "label_invariant",
                        f"label row {i} must be strictly increasing (sorted, no duplicates)",
                    )

    @property
    def num_examples(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def positives(self, i: int) -> np.ndarray:
        """Sorted positive class indices of example ``i`` (a view)."""
        return self.label_indices[self.label_offsets[i]:self.label_offsets[i + 1]]

    def positive_lists(self) -> list[np.ndarray]:
        return [self.positives(i) for i in range(self.num_examples)]

    def label_matrix(self) -> np.ndarray:
        """Dense (n, m) 0/1 label matrix."""
        y = np.zeros((self.num_examples, self.num_classes), dtype=np.float64)
        rows = np.repeat(np.arange(self.num_examples), np.diff(self.label_offsets))
        y[rows, self.label_indices] = 1.0
        return y

    def single_labels(self) -> np.ndarray:
        """The positive class per example; requires exactly one positive each."""
        counts = np.diff(self.label_offsets)
        if np.any(counts != 1):
            bad = int(np.argmax(counts != 1))
            raise DatasetError(
                "label_invariant",
                f"example {bad} has {int(counts[bad])} positives; expected exactly 1",
            )
        return self.label_indices.copy()

    def with_bias_feature(self) -> "FeatureDataset":
        """Copy with a constant 1.0 feature appended (bias-as-feature)."""
        ones = np.ones((self.num_examples, 1), dtype=np.float64)
        return FeatureDataset(
            features=np.hstack([self.features, ones]),
            label_offsets=self.label_offsets,
            label_indices=self.label_indices,
            num_classes=self.num_classes,
            max_positives=self.max_positives,
        )

    def subset(self, idx: np.ndarray) -> "FeatureDataset":
        """Row subset keeping the class count and positives cap."""
        idx = np.asarray(idx, dtype=np.int64)
        lists = [self.positives(i) for i in idx]
        return from_positive_lists(
            self.features[idx],
            lists,
            num_classes=self.num_classes,
            max_positives=self.max_positives,
        )


def from_positive_lists(
    features,
    positives,
    num_classes: int | None = None,
    max_positives: int | None = None,
) -> FeatureDataset:
    """Build a dataset from per-example positive-class index lists."""
    rows = [np.asarray(sorted(int(c) for c in row), dtype=np.int64) for row in positives]
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(rows) != x.shape[0]:
        raise DatasetError(
            "shape_mismatch",
            f"{len(rows)} label rows for {x.shape[0] if x.ndim == 2 else '?'} feature rows",
        )
    offsets = np.zeros(len(rows) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([r.size for r in rows])
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    if num_classes is None:
        num_classes = int(indices.max()) + 1 if indices.size else 1
    if max_positives is None:
        max_positives = int(max((r.size for r in rows), default=0))
    return FeatureDataset(
        features=x,
        label_offsets=offsets,
        label_indices=indices,
        num_classes=int(num_classes),
        max_positives=int(max_positives),
    )


# ---------------------------------------------------------------------------
# Binary formats
# ---------------------------------------------------------------------------

def save_features(path, features: np.ndarray) -> None:
    x = np.asarray(features)
    if x.ndim != 2:
        raise DatasetError("shape_mismatch", f"features must be 2-d, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise DatasetError("non_finite", "refusing to write non-finite features")
    n, d = x.shape
    payload = np.ascontiguousarray(x, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, n, d))
        fh.write(payload)


def load_features(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < _FEATURE_HEADER.size:
        raise DatasetError("size_mismatch", f"{path}: truncated header")
    magic, version, n, d = _FEATURE_HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC:
        raise DatasetError("bad_magic", f"{path}: expected magic {FEATURE_MAGIC!r}, got {magic!r}")
    if version != FORMAT_VERSION:
        raise DatasetError("bad_version", f"{path}: unsupported version {version}")
    expected = _FEATURE_HEADER.size + 4 * n * d
    if len(blob) != expected:
        raise DatasetError(
            "size_mismatch", f"{path}: expected {expected} bytes for n={n}, d={d}, got {len(blob)}"
        )
    x = np.frombuffer(blob, dtype="<f4", offset=_FEATURE_HEADER.size).reshape(n, d)
    x = x.astype(np.float64)
    if not np.all(np.isfinite(x)):
        raise DatasetError("non_finite", f"{path}: payload contains non-finite values")
    return x


def save_labels(path, dataset: FeatureDataset) -> None:
    with open(path, "wb") as fh:
        fh.write(
            _LABEL_HEADER.pack(
                LABEL_MAGIC,
                FORMAT_VERSION,
                dataset.num_examples,
                dataset.num_classes,
                dataset.max_positives,
            )
        )
        fh.write(dataset.label_offsets.astype("<u4").tobytes())
        fh.write(dataset.label_indices.astype("<u4").tobytes())


def load_labels(path) -> tuple[np.ndarray, np.ndarray, int, int, int]:
    """Read a label file; returns (offsets, indices, n, m, k) unvalidated."""
    blob = Path(path).read_bytes()
    if len(blob) < _LABEL_HEADER.size:
        raise DatasetError("size_mismatch", f"{path}: truncated header")
    magic, version, n, m, k = _LABEL_HEADER.unpack_from(blob)
    if magic != LABEL_MAGIC:
        raise DatasetError("bad_magic", f"{path}: expected magic {LABEL_MAGIC!r}, got {magic!r}")
    if version != FORMAT_VERSION:
        raise DatasetError("bad_version", f"{path}: unsupported version {version}")
    offsets_end = _LABEL_HEADER.size + 4 * (n + 1)
    if len(blob) < offsets_end:
        raise DatasetError("size_mismatch", f"{path}: truncated offsets for n={n}")
    offsets = np.frombuffer(blob, dtype="<u4", offset=_LABEL_HEADER.size, count=n + 1).astype(np.int64)
    expected = offsets_end + 4 * int(offsets[-1])
    if len(blob) != expected:
        raise DatasetError(
            "size_mismatch", f"{path}: expected {expected} bytes, got {len(blob)}"
        )
    indices = np.frombuffer(blob, dtype="<u4", offset=offsets_end).astype(np.int64)
    return offsets, indices, n, m, k


def save_dataset(dataset: FeatureDataset, feature_path, label_path) -> None:
    save_features(feature_path, dataset.features)
    save_labels(label_path, dataset)


def load_dataset(feature_path, label_path) -> FeatureDataset:
    """Load and validate the binary feature/label pair."""
    x = load_features(feature_path)
    offsets, indices, n, m, k = load_labels(label_path)
    if n != x.shape[0]:
        raise DatasetError(
            "shape_mismatch", f"label file has n={n}, feature file has n={x.shape[0]}"
        )
    return FeatureDataset(
        features=x,
        label_offsets=offsets,
        label_indices=indices,
        num_classes=m,
        max_positives=k,
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def load_csv(feature_csv, label_csv, num_classes: int | None = None) -> FeatureDataset:
    """Parse feature/label CSVs into the same dataset the binary path yields.

    The class count is inferred from the largest index when not given.
    """
    feature_rows: list[list[float]] = []
    with open(feature_csv, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = []
            for col, cell in enumerate(line.split(","), start=1):
                try:
                    row.append(float(cell))
                except ValueError:
                    raise DatasetError(
                        "parse", f"{feature_csv}: non-numeric cell at (row {lineno}, col {col})"
                    ) from None
            feature_rows.append(row)
    if not feature_rows:
        raise DatasetError("parse", f"{feature_csv}: no data rows")
    width = len(feature_rows[0])
    if any(len(r) != width for r in feature_rows):
        raise DatasetError("parse", f"{feature_csv}: ragged rows")

    label_rows: list[list[int]] = []
    with open(label_csv, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line == "":
                # blank row = example with no positives
                label_rows.append([])
                continue
            row_idx = []
            for col, cell in enumerate(line.split(","), start=1):
                cell = cell.strip()
                if cell == "":
                    continue
                try:
                    value = int(cell)
                except ValueError:
                    raise DatasetError(
                        "parse", f"{label_csv}: non-integer cell at (row {lineno}, col {col})"
                    ) from None
                row_idx.append(value)
            label_rows.append(row_idx)
    if len(label_rows) != len(feature_rows):
        raise DatasetError(
            "shape_mismatch",
            f"{label_csv}: {len(label_rows)} label rows for {len(feature_rows)} examples",
        )
    return from_positive_lists(np.array(feature_rows, dtype=np.float64), label_rows,
                               num_classes=num_classes)


def save_csv(dataset: FeatureDataset, feature_csv, label_csv) -> None:
    """Write the CSV encoding; floats use shortest round-trip formatting."""
    with open(feature_csv, "w", encoding="ascii") as fh:
        for row in dataset.features:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
    with open(label_csv, "w", encoding="ascii") as fh:
        for i in range(dataset.num_examples):
            fh.write(",".join(str(int(c)) for c in dataset.positives(i)))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class-cluster generator settings.

    Class means are rescaled so the minimum pairwise distance equals
    ``margin`` (margin 0 collapses every cluster onto the origin). Each
    example gets exactly one positive class; classes are balanced.
    """

    num_examples: int
    num_features: int
    num_classes: int
    margin: float = 4.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_examples < 1 or self.num_features < 1 or self.num_classes < 1:
            raise ValueError("n, d, m must all be >= 1")
        if self.num_classes > self.num_examples:
            raise ValueError(
                f"more classes ({self.num_classes}) than examples ({self.num_examples})"
            )
        if self.margin < 0 or not math.isfinite(self.margin):
            raise ValueError(f"margin must be finite and >= 0, got {self.margin}")
        if self.noise < 0 or not math.isfinite(self.noise):
            raise ValueError(f"noise must be finite and >= 0, got {self.noise}")


def generate_synthetic(spec: SyntheticSpec) -> tuple[FeatureDataset, FeatureDataset]:
    """Deterministic (train, test) pair with an 80/20 split."""
    rng = np.random.default_rng(spec.seed)
    means = rng.standard_normal((spec.num_classes, spec.num_features))
    if spec.margin == 0:
        means[:] = 0.0
    elif spec.num_classes > 1:
        dists = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
        min_dist = dists[np.triu_indices(spec.num_classes, k=1)].min()
        if min_dist <= 0:
            raise ValueError("degenerate class means; try another seed")
        means *= spec.margin / min_dist

    classes = rng.permutation(np.arange(spec.num_examples) % spec.num_classes)
    x = means[classes] + spec.noise * rng.standard_normal(
        (spec.num_examples, spec.num_features)
    )

    n_train = max(1, int(round(0.8 * spec.num_examples)))
    if n_train == spec.num_examples and spec.num_examples > 1:
        n_train = spec.num_examples - 1
    order = rng.permutation(spec.num_examples)
    train_idx, test_idx = order[:n_train], order[n_train:]
    if test_idx.size == 0:
        test_idx = train_idx[-1:]

    def build(idx):
        return from_positive_lists(
            x[idx],
            [[int(c)] for c in classes[idx]],
            num_classes=spec.num_classes,
            max_positives=1,
        )

    return build(train_idx), build(test_idx)
