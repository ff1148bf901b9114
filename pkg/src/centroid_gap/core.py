"""Centroids, exact nearest-two search and the confidence gap.

A query's confidence gap is ``delta = d2 - d1``, where ``d1`` and ``d2`` are
its distances to the nearest and second-nearest class centroid. Small gaps
mean the query sits between two classes (ambiguous, or from a class never
seen in training).

Distances are accumulated one dimension at a time, left to right, so that
a query's distances do not depend on how many other queries share the batch.
That is what makes ``measure_all`` bit-identical at any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    InvalidArgumentError,
    NonFiniteError,
    TooFewLabelsError,
)

__all__ = [
    "Distance",
    "SplitRole",
    "FeatureSample",
    "Dataset",
    "CentroidIndex",
    "GapMeasurement",
    "compute_centroids",
    "nearest_two",
    "measure_all",
    "pairwise_distances",
]


class Distance(str, Enum):
    L2 = "l2"
    COSINE = "cosine"


class SplitRole(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureSample:
    """One labeled embedding vector."""

    id: str
    label: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        vec = np.array(self.vector, dtype=np.float64)
        if vec.ndim != 1:
            raise DimensionMismatchError("vector must be one-dimensional", sample=self.id)
        if not np.all(np.isfinite(vec)):
            raise NonFiniteError("vector has non-finite components", sample=self.id)
        if not isinstance(self.label, str) or not self.label:
            raise InvalidArgumentError("label must be a non-empty string", sample=self.id)
        object.__setattr__(self, "vector", _readonly(vec))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureSample):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and np.array_equal(self.vector, other.vector)
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered, immutable collection of labeled vectors from one split.

    Stored column-wise: ``ids`` and ``labels`` are tuples and ``vectors`` is a
    read-only ``(n, dimensionality)`` float64 array. Row order is the input
    order and is never changed.
    """

    ids: tuple[str, ...]
    labels: tuple[str, ...]
    vectors: np.ndarray
    role: SplitRole = SplitRole.TRAIN

    def __post_init__(self) -> None:
        ids = tuple(str(i) for i in self.ids)
        labels = tuple(self.labels)
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise DimensionMismatchError("vectors must form a 2-D array")
        if not (len(ids) == len(labels) == vectors.shape[0]):
            raise DimensionMismatchError("ids, labels and vectors differ in length")
        if vectors.shape[1] < 1:
            raise DimensionMismatchError("dimensionality must be positive")
        finite = np.isfinite(vectors).all(axis=1)
        if not finite.all():
            bad = int(np.argmin(finite))
            raise NonFiniteError("vector has non-finite components", sample=ids[bad])
        for sid, label in zip(ids, labels):
            if not isinstance(label, str) or not label:
                raise InvalidArgumentError("label must be a non-empty string", sample=sid)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "vectors", _readonly(vectors))
        object.__setattr__(self, "role", SplitRole(self.role))

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[FeatureSample],
        role: SplitRole | str = SplitRole.TRAIN,
        dimensionality: int | None = None,
    ) -> "Dataset":
        if not samples:
            if dimensionality is None:
                raise EmptyInputError("cannot infer dimensionality of an empty dataset")
            return cls((), (), np.empty((0, dimensionality)), SplitRole(role))
        dim = dimensionality if dimensionality is not None else len(samples[0].vector)
        for s in samples:
            if len(s.vector) != dim:
                raise DimensionMismatchError(
                    f"expected {dim} components, got {len(s.vector)}", sample=s.id
                )
        return cls(
            tuple(s.id for s in samples),
            tuple(s.label for s in samples),
            np.stack([s.vector for s in samples]),
            SplitRole(role),
        )

    @property
    def dimensionality(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def samples(self) -> list[FeatureSample]:
        return [FeatureSample(i, l, v) for i, l, v in zip(self.ids, self.labels, self.vectors)]

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.role == other.role
            and self.ids == other.ids
            and self.labels == other.labels
            and self.vectors.shape == other.vectors.shape
            and np.array_equal(self.vectors, other.vectors)
        )

    def subset(self, mask: Iterable[bool]) -> "Dataset":
        keep = np.fromiter(mask, dtype=bool, count=len(self))
        idx = np.flatnonzero(keep)
        return Dataset(
            tuple(self.ids[i] for i in idx),
            tuple(self.labels[i] for i in idx),
            self.vectors[idx],
            self.role,
        )


@dataclass(frozen=True, eq=False)
class CentroidIndex:
    """Per-label mean vectors, stored in lexicographic label order.

    The storage order doubles as the distance tie-break: when two centroids
    are equally far from a query, the one whose label sorts first is nearer.
    """

    labels: tuple[str, ...]
    matrix: np.ndarray
    label_counts: tuple[int, ...]
    distance: Distance = Distance.L2
    _position: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        matrix = np.array(self.matrix, dtype=np.float64)
        counts = tuple(int(c) for c in self.label_counts)
        if len(set(labels)) != len(labels):
            raise InvalidArgumentError("centroid labels must be unique")
        if len(labels) < 2:
            raise TooFewLabelsError(f"need at least 2 labels, got {len(labels)}")
        if matrix.ndim != 2 or matrix.shape[0] != len(labels) or matrix.shape[1] < 1:
            raise DimensionMismatchError("centroid matrix shape does not match labels")
        if len(counts) != len(labels) or min(counts) < 1:
            raise InvalidArgumentError("every label needs a count >= 1")
        if not np.isfinite(matrix).all():
            raise NonFiniteError("centroid has non-finite components")
        order = sorted(range(len(labels)), key=lambda i: labels[i])
        labels = tuple(labels[i] for i in order)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", _readonly(matrix[order].copy()))
        object.__setattr__(self, "label_counts", tuple(counts[i] for i in order))
        object.__setattr__(self, "distance", Distance(self.distance))
        object.__setattr__(self, "_position", {l: i for i, l in enumerate(labels)})

    @property
    def dimensionality(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def centroids(self) -> dict[str, np.ndarray]:
        return dict(zip(self.labels, self.matrix))

    @property
    def counts(self) -> dict[str, int]:
        return dict(zip(self.labels, self.label_counts))

    @property
    def training_size(self) -> int:
        return sum(self.label_counts)

    def centroid(self, label: str) -> np.ndarray:
        return self.matrix[self._position[label]]

    def __contains__(self, label: object) -> bool:
        return label in self._position

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CentroidIndex):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.label_counts == other.label_counts
            and self.distance == other.distance
            and np.array_equal(self.matrix, other.matrix)
        )


@dataclass(frozen=True)
class GapMeasurement:
    nearest_label: str
    second_label: str
    d1: float
    d2: float
    delta: float

    def to_dict(self) -> dict:
        return {
            "nearest": self.nearest_label,
            "second": self.second_label,
            "d1": self.d1,
            "d2": self.d2,
            "delta": self.delta,
        }


def compute_centroids(train: Dataset, distance: Distance | str = Distance.L2) -> CentroidIndex:
    """Mean vector of every label in ``train``.

    Each centroid is the running sum of its class's vectors, taken in dataset
    order, divided by the class count.
    """
    if len(train) == 0:
        raise EmptyInputError("training set is empty")
    rows: dict[str, list[int]] = {}
    for i, label in enumerate(train.labels):
        rows.setdefault(label, []).append(i)
    if len(rows) < 2:
        raise TooFewLabelsError(f"need at least 2 distinct labels, got {len(rows)}")
    labels = sorted(rows)
    matrix = np.empty((len(labels), train.dimensionality))
    for k, label in enumerate(labels):
        acc = np.zeros(train.dimensionality)
        for i in rows[label]:
            acc += train.vectors[i]
        matrix[k] = acc / len(rows[label])
    return CentroidIndex(tuple(labels), matrix, tuple(len(rows[l]) for l in labels), distance)


def pairwise_distances(
    queries: np.ndarray, points: np.ndarray, distance: Distance | str = Distance.L2
) -> np.ndarray:
    """``(n, k)`` distances from each query row to each point row.

    Sums run over dimensions in index order, one column at a time, so every
    entry is independent of the batch it was computed in.
    """
    queries = np.asarray(queries, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    n, dim = queries.shape
    k = points.shape[0]
    if Distance(distance) is Distance.L2:
        acc = np.zeros((n, k))
        for j in range(dim):
            diff = queries[:, j, None] - points[None, :, j]
            acc += diff * diff
        return np.sqrt(acc)

    dot = np.zeros((n, k))
    qsq = np.zeros(n)
    psq = np.zeros(k)
    for j in range(dim):
        dot += queries[:, j, None] * points[None, :, j]
        qsq += queries[:, j] * queries[:, j]
        psq += points[:, j] * points[:, j]
    denom = np.sqrt(qsq)[:, None] * np.sqrt(psq)[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where(denom > 0, dot / denom, 0.0)
    return np.clip(1.0 - sim, 0.0, 2.0)


def _top_two(dist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # argmin returns the first minimum, i.e. the lexicographically smallest label
    rows = np.arange(dist.shape[0])
    first = np.argmin(dist, axis=1)
    masked = dist.copy()
    masked[rows, first] = np.inf
    second = np.argmin(masked, axis=1)
    return first, second


def _check_dim(index: CentroidIndex, dim: int, **where) -> None:
    if dim != index.dimensionality:
        raise DimensionMismatchError(
            f"query has {dim} components, index has {index.dimensionality}", **where
        )


def _measure_block(index: CentroidIndex, queries: np.ndarray) -> list[GapMeasurement]:
    dist = pairwise_distances(queries, index.matrix, index.distance)
    first, second = _top_two(dist)
    rows = np.arange(dist.shape[0])
    d1 = dist[rows, first]
    d2 = dist[rows, second]
    labels = index.labels
    return [
        GapMeasurement(labels[a], labels[b], float(x), float(y), float(y - x))
        for a, b, x, y in zip(first, second, d1, d2)
    ]


def nearest_two(index: CentroidIndex, query: Sequence[float] | np.ndarray) -> GapMeasurement:
    """Exact search for the two nearest centroids of a single query."""
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1:
        raise DimensionMismatchError("query must be one-dimensional")
    _check_dim(index, q.shape[0])
    if not np.isfinite(q).all():
        raise NonFiniteError("query has non-finite components")
    return _measure_block(index, q[None, :])[0]


def measure_all(
    index: CentroidIndex, data: Dataset, threads: int = 1, chunk_size: int = 256
) -> list[tuple[str, GapMeasurement]]:
    """Gap measurements for every sample of ``data``, in input order.

    Work is split into row chunks that may run on ``threads`` worker threads;
    output is identical for any ``threads`` and ``chunk_size``.
    """
    if threads < 1:
        raise InvalidArgumentError("threads must be >= 1")
    if len(data) == 0:
        return []
    _check_dim(index, data.dimensionality, sample=data.ids[0])
    bounds = [(s, min(s + chunk_size, len(data))) for s in range(0, len(data), chunk_size)]
    blocks = (data.vectors[s:e] for s, e in bounds)
    if threads == 1 or len(bounds) == 1:
        parts = [_measure_block(index, b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _measure_block(index, b), blocks))
    out: list[tuple[str, GapMeasurement]] = []
    for (s, _), part in zip(bounds, parts):
        out.extend(zip(data.ids[s : s + len(part)], part))
    return out

