"""Choose the abstention threshold on a validation split.

A sample is emitted (predicted) iff its gap is at least the threshold ``t``;
the emitted label is always the nearest centroid's label. Every candidate in
``{0} U {observed gaps}`` is scored and the best one wins, with ties going to
the smallest threshold so that coverage is as large as possible.

Two scores are available:

``covered-micro-f1``
    Micro-F1 over emitted samples only. With one label per emitted sample
    this is ``correct / emitted``, the accuracy on the covered subset.
``global-recall-f1``
    Precision over emitted samples, recall over all samples, combined as F1.
    Reduces to ``2 * correct / (emitted + total)``.

Which of the two the published scores correspond to is not stated anywhere;
``covered-micro-f1`` is the default because it reproduces the reported
relation between F1 and the predicted-accurate fraction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import CentroidIndex, Dataset, GapMeasurement, measure_all
from .errors import EmptyInputError, InvalidArgumentError, LengthMismatchError

__all__ = [
    "Metric",
    "CurvePoint",
    "CalibrationResult",
    "DegenerateCalibrationWarning",
    "score_counts",
    "score_at_threshold",
    "sweep",
    "calibrate",
]


class Metric(str, Enum):
    COVERED_MICRO_F1 = "covered-micro-f1"
    GLOBAL_RECALL_F1 = "global-recall-f1"


class DegenerateCalibrationWarning(UserWarning):
    pass


class CurvePoint(NamedTuple):
    threshold: float
    metric: float
    coverage: float


def score_counts(correct: int, emitted: int, total: int, metric: Metric | str) -> float:
    """Score from integer counts. Zero emissions score 0."""
    if total <= 0:
        raise EmptyInputError("cannot score an empty sample set")
    if emitted == 0:
        return 0.0
    if Metric(metric) is Metric.COVERED_MICRO_F1:
        return correct / emitted
    return 2 * correct / (emitted + total)


def _unpack(measurements: Sequence, truths: Sequence[str] | Mapping[str, str]):
    gaps: list[GapMeasurement] = []
    ids: list[str | None] = []
    for m in measurements:
        if isinstance(m, GapMeasurement):
            ids.append(None)
            gaps.append(m)
        else:
            sid, gm = m
            ids.append(sid)
            gaps.append(gm)
    if isinstance(truths, Mapping):
        if any(i is None for i in ids):
            raise InvalidArgumentError("truths keyed by id need (id, measurement) pairs")
        labels = [truths[i] for i in ids]
    else:
        labels = list(truths)
    if len(labels) != len(gaps):
        raise LengthMismatchError(
            f"{len(gaps)} measurements but {len(labels)} truth labels"
        )
    return gaps, labels


def _arrays(gaps: Sequence[GapMeasurement], labels: Sequence[str]):
    delta = np.fromiter((g.delta for g in gaps), dtype=np.float64, count=len(gaps))
    correct = np.fromiter(
        (g.nearest_label == y for g, y in zip(gaps, labels)), dtype=bool, count=len(gaps)
    )
    return delta, correct


def score_at_threshold(
    measurements: Sequence,
    truths: Sequence[str] | Mapping[str, str],
    t: float,
    metric: Metric | str = Metric.COVERED_MICRO_F1,
) -> tuple[float, float]:
    """Return ``(metric_value, coverage)`` when emitting iff ``delta >= t``."""
    gaps, labels = _unpack(measurements, truths)
    if not gaps:
        raise EmptyInputError("no measurements to score")
    delta, correct = _arrays(gaps, labels)
    emit = delta >= t
    n_emit = int(emit.sum())
    n_correct = int((emit & correct).sum())
    return score_counts(n_correct, n_emit, len(gaps), metric), n_emit / len(gaps)


def sweep(
    delta: np.ndarray, correct: np.ndarray, metric: Metric | str
) -> list[CurvePoint]:
    """Score every candidate threshold, ascending.

    Candidates are ``0`` plus each distinct observed gap. Counts at each
    candidate come from suffix sums over the gaps sorted ascending.
    """
    delta = np.asarray(delta, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    total = delta.shape[0]
    order = np.argsort(delta, kind="stable")
    sorted_delta = delta[order]
    # suffix_correct[i] = correct samples among sorted positions i..end
    suffix_correct = np.concatenate([np.cumsum(correct[order][::-1])[::-1], [0]])
    candidates = np.unique(np.concatenate([[0.0], sorted_delta]))
    starts = np.searchsorted(sorted_delta, candidates, side="left")
    return [
        CurvePoint(
            float(t),
            score_counts(int(suffix_correct[s]), total - int(s), total, metric),
            (total - int(s)) / total,
        )
        for t, s in zip(candidates, starts)
    ]


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    curve: tuple[CurvePoint, ...]
    metric: Metric
    validation_size: int
    min_coverage: float = 0.0
    degenerate: bool = False

    @property
    def metric_value(self) -> float:
        return self._chosen().metric

    @property
    def coverage(self) -> float:
        return self._chosen().coverage

    def _chosen(self) -> CurvePoint:
        for point in self.curve:
            if point.threshold == self.threshold:
                return point
        raise KeyError(self.threshold)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "metric": self.metric.value,
            "metric_value": self.metric_value,
            "coverage": self.coverage,
            "validation_size": self.validation_size,
            "min_coverage": self.min_coverage,
            "degenerate": self.degenerate,
            "curve": [
                {"threshold": p.threshold, "metric": p.metric, "coverage": p.coverage}
                for p in self.curve
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CalibrationResult":
        return cls(
            threshold=float(data["threshold"]),
            curve=tuple(
                CurvePoint(float(p["threshold"]), float(p["metric"]), float(p["coverage"]))
                for p in data["curve"]
            ),
            metric=Metric(data["metric"]),
            validation_size=int(data["validation_size"]),
            min_coverage=float(data.get("min_coverage", 0.0)),
            degenerate=bool(data.get("degenerate", False)),
        )


def select_threshold(
    curve: Sequence[CurvePoint], min_coverage: float = 0.0
) -> tuple[float, bool]:
    """Pick the best-scoring eligible candidate; smallest threshold on ties.

    Returns ``(threshold, degenerate)``. A calibration is degenerate when no
    candidate scores above zero; threshold 0 is returned in that case.
    """
    best: CurvePoint | None = None
    for point in curve:
        if point.coverage < min_coverage:
            continue
        if best is None or point.metric > best.metric:
            best = point
    if best is None or best.metric == 0.0:
        return 0.0, True
    return best.threshold, False


def calibrate(
    index: CentroidIndex,
    validation: Dataset,
    metric: Metric | str = Metric.COVERED_MICRO_F1,
    min_coverage: float = 0.0,
    threads: int = 1,
) -> CalibrationResult:
    """Find the gap threshold maximizing ``metric`` on ``validation``.

    Labels absent from the index can never be predicted correctly, so they
    always count as errors when emitted.

    Parameters
    ----------
    min_coverage : float
        Candidates emitting less than this fraction of samples are not
        eligible. ``t = 0`` always covers everything, so a floor of at most 1
        never leaves the search empty.
    """
    if len(validation) == 0:
        raise EmptyInputError("validation set is empty")
    if not 0.0 <= min_coverage <= 1.0:
        raise InvalidArgumentError("min_coverage must lie in [0, 1]")
    metric = Metric(metric)
    gaps, labels = _unpack(measure_all(index, validation, threads=threads), validation.labels)
    delta, correct = _arrays(gaps, labels)
    curve = tuple(sweep(delta, correct, metric))
    threshold, degenerate = select_threshold(curve, min_coverage)
    if degenerate:
        warnings.warn(
            "no candidate threshold yields a positive score; using threshold 0",
            DegenerateCalibrationWarning,
            stacklevel=2,
        )
    return CalibrationResult(threshold, curve, metric, len(validation), min_coverage, degenerate)
