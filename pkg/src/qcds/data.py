"""LIBSVM ingestion, [0, pi] feature scaling and seeded splits."""

import io
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DatasetParseError, IngestionError


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    label_values: tuple = field(default=())

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_values) if self.label_values else int(self.labels.max()) + 1


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def sizes(self):
        return len(self.train), len(self.val), len(self.test)


def _parse_label(tok):
    v = float(tok)
    return int(v) if v.is_integer() else v


def parse_libsvm(stream, name: str = "dataset", n_features: Optional[int] = None) -> Dataset:
    """Read ``<label> <index>:<value> ...`` lines (1-based sparse indices)."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    raw_labels, rows = [], []
    max_index = 0
    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            raw_labels.append(_parse_label(parts[0]))
        except ValueError:
            raise DatasetParseError(f"bad label {parts[0]!r}", lineno)
        entries = {}
        for tok in parts[1:]:
            idx, sep, val = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                i = int(idx)
                v = float(val)
            except ValueError:
                raise DatasetParseError(f"bad feature token {tok!r}", lineno)
            if i < 1:
                raise DatasetParseError(f"feature index {i} must be >= 1", lineno)
            entries[i] = v
            max_index = max(max_index, i)
        rows.append(entries)
    if not rows:
        raise IngestionError(f"{name}: no data rows")
    width = n_features if n_features is not None else max_index
    if max_index > width:
        raise DatasetParseError(f"feature index {max_index} exceeds declared width {width}")
    X = np.zeros((len(rows), width))
    for r, entries in enumerate(rows):
        for i, v in entries.items():
            X[r, i - 1] = v
    distinct = tuple(sorted(set(raw_labels)))
    lookup = {v: k for k, v in enumerate(distinct)}
    y = np.array([lookup[v] for v in raw_labels], dtype=np.int64)
    return Dataset(name, X, y, distinct)


def load_libsvm(path, n_features: Optional[int] = None) -> Dataset:
    import os

    name = os.path.splitext(os.path.basename(str(path)))[0]
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh, name=name, n_features=n_features)


def to_libsvm(dataset: Dataset) -> str:
    out = []
    for row, lab in zip(dataset.features, dataset.labels):
        label = dataset.label_values[lab] if dataset.label_values else lab
        toks = [f"{i + 1}:{v:.17g}" for i, v in enumerate(row) if v != 0.0]
        out.append(" ".join([str(label)] + toks))
    return "\n".join(out) + "\n"


def scale_features(dataset: Dataset) -> Dataset:
    """Per-column min-max onto [0, pi]; constant columns go to pi/2."""
    X = dataset.features
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    const = span == 0
    scaled = np.where(const, np.pi / 2, (X - lo) / np.where(const, 1.0, span) * np.pi)
    return replace(dataset, features=scaled)


def split(dataset: Dataset, fractions: Sequence[float], seed: int) -> Split:
    """Shuffle under ``seed`` then cut into floor(f_train M), floor(f_val M), remainder."""
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ConfigurationError(f"need three non-negative fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must sum to 1, got {sum(fractions)}")
    m = dataset.n_rows
    order = np.random.default_rng(seed).permutation(m)
    n_train = int(np.floor(fractions[0] * m + 1e-9))
    n_val = int(np.floor(fractions[1] * m + 1e-9))
    return Split(
        train=order[:n_train],
        val=order[n_train:n_train + n_val],
        test=order[n_train + n_val:],
        seed=seed,
    )
