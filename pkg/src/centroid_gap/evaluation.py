"""Apply a calibrated threshold to a test split and summarize the outcome."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Collection, Mapping, Sequence

import numpy as np

from .calibration import CalibrationResult, Metric, score_counts
from .core import (
    CentroidIndex,
    Dataset,
    Distance,
    GapMeasurement,
    measure_all,
    pairwise_distances,
)
from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    InvalidArgumentError,
    LengthMismatchError,
)

__all__ = [
    "Prediction",
    "OutcomeCategory",
    "PartitionKind",
    "GapHistogram",
    "EvaluationReport",
    "predict_split",
    "category_counts",
    "categorize",
    "evaluate",
    "frequency_partition",
    "gap_histogram",
    "baseline_knn_predict",
    "DEFAULT_BINS",
    "COMMON_CUTOFF",
]

DEFAULT_BINS = 50
COMMON_CUTOFF = 100


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    label: str | None  # None means the sample was abstained
    gap: GapMeasurement

    @property
    def emitted(self) -> bool:
        return self.label is not None

    def to_dict(self, truth: str | None = None) -> dict:
        out = {
            "id": self.sample_id,
            "decision": "emitted" if self.emitted else "abstained",
            "label": self.label,
            **self.gap.to_dict(),
        }
        if truth is not None:
            out["truth"] = truth
        return out


class OutcomeCategory(str, Enum):
    PREDICTED = "predicted"
    PREDICTED_ACCURATE = "predicted-accurate"
    PREDICTABLE_PREDICTED_INACCURATE = "predictable-predicted-inaccurate"
    UNKNOWN_PREDICTED = "unknown-predicted"
    NON_PREDICTED = "non-predicted"
    NON_PREDICTED_ACCURATE = "non-predicted-accurate"
    PREDICTABLE_NON_PREDICTED_INACCURATE = "predictable-non-predicted-inaccurate"
    UNKNOWN_NON_PREDICTED = "unknown-non-predicted"

    @classmethod
    def leaves(cls) -> tuple["OutcomeCategory", ...]:
        return (
            cls.PREDICTED_ACCURATE,
            cls.PREDICTABLE_PREDICTED_INACCURATE,
            cls.UNKNOWN_PREDICTED,
            cls.NON_PREDICTED_ACCURATE,
            cls.PREDICTABLE_NON_PREDICTED_INACCURATE,
            cls.UNKNOWN_NON_PREDICTED,
        )


_PREDICTED_LEAVES = OutcomeCategory.leaves()[:3]
_NON_PREDICTED_LEAVES = OutcomeCategory.leaves()[3:]


class PartitionKind(str, Enum):
    KNOWN_VS_UNKNOWN = "known-vs-unknown"
    ACCURATE_VS_INACCURATE = "accurate-vs-inaccurate"
    COMMON_VS_RARE = "common-vs-rare"


def predict_split(
    index: CentroidIndex, threshold: float, data: Dataset, threads: int = 1
) -> list[Prediction]:
    """Emit the nearest label iff the sample's gap is at least ``threshold``."""
    if not threshold >= 0:
        raise InvalidArgumentError("threshold must be >= 0")
    return [
        Prediction(sid, gm.nearest_label if gm.delta >= threshold else None, gm)
        for sid, gm in measure_all(index, data, threads=threads)
    ]


def _leaf(pred: Prediction, truth: str, training_labels: Collection[str]) -> OutcomeCategory:
    known = truth in training_labels
    hit = pred.gap.nearest_label == truth
    if pred.emitted:
        if not known:
            return OutcomeCategory.UNKNOWN_PREDICTED
        return (
            OutcomeCategory.PREDICTED_ACCURATE
            if hit
            else OutcomeCategory.PREDICTABLE_PREDICTED_INACCURATE
        )
    if not known:
        return OutcomeCategory.UNKNOWN_NON_PREDICTED
    return (
        OutcomeCategory.NON_PREDICTED_ACCURATE
        if hit
        else OutcomeCategory.PREDICTABLE_NON_PREDICTED_INACCURATE
    )


def category_counts(
    predictions: Sequence[Prediction],
    truths: Sequence[str],
    training_labels: Collection[str],
) -> dict[OutcomeCategory, int]:
    """Sample count per outcome category, aggregates included."""
    if len(predictions) != len(truths):
        raise LengthMismatchError(f"{len(predictions)} predictions but {len(truths)} truths")
    if not training_labels:
        raise InvalidArgumentError("training label set is empty")
    tally = Counter(_leaf(p, y, training_labels) for p, y in zip(predictions, truths))
    counts = {c: tally.get(c, 0) for c in OutcomeCategory.leaves()}
    counts[OutcomeCategory.PREDICTED] = sum(counts[c] for c in _PREDICTED_LEAVES)
    counts[OutcomeCategory.NON_PREDICTED] = sum(counts[c] for c in _NON_PREDICTED_LEAVES)
    return {c: counts[c] for c in OutcomeCategory}


def categorize(
    predictions: Sequence[Prediction],
    truths: Sequence[str],
    training_labels: Collection[str],
) -> dict[OutcomeCategory, float]:
    """Fraction of samples per outcome category.

    An abstained sample counts as accurate when its nearest label, the one
    that would have been emitted, equals the truth.
    """
    counts = category_counts(predictions, truths, training_labels)
    n = len(predictions)
    if n == 0:
        raise EmptyInputError("no predictions to categorize")
    return {c: counts[c] / n for c in OutcomeCategory}


def frequency_partition(
    train: Dataset | Mapping[str, int], cutoff: int = COMMON_CUTOFF
) -> tuple[frozenset[str], frozenset[str]]:
    """Split training labels into ``(common, rare)``.

    A label is common iff it occurs strictly more than ``cutoff`` times.
    """
    if isinstance(train, Dataset):
        counts = Counter(train.labels)
    else:
        counts = dict(train)
    common = frozenset(l for l, c in counts.items() if c > cutoff)
    rare = frozenset(l for l in counts if l not in common)
    return common, rare


@dataclass(frozen=True, eq=False)
class GapHistogram:
    """Gap counts over uniform bins, one series per partition class."""

    edges: np.ndarray
    series: dict[str, np.ndarray]
    partition: PartitionKind
    excluded: int = 0  # unknown-label samples left out of common-vs-rare

    def totals(self) -> dict[str, int]:
        return {name: int(c.sum()) for name, c in self.series.items()}

    def to_dict(self) -> dict:
        return {
            "partition": self.partition.value,
            "edges": [float(e) for e in self.edges],
            "series": {k: [int(c) for c in v] for k, v in self.series.items()},
            "excluded": self.excluded,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = list(self.series)
        writer.writerow(["bin_lower", "bin_upper", *names])
        for i in range(len(self.edges) - 1):
            writer.writerow(
                [repr(float(self.edges[i])), repr(float(self.edges[i + 1]))]
                + [int(self.series[n][i]) for n in names]
            )
        return buf.getvalue()


def gap_histogram(
    measurements: Sequence,
    truths: Sequence[str],
    training_labels: Collection[str] | Mapping[str, int],
    partition: PartitionKind | str = PartitionKind.KNOWN_VS_UNKNOWN,
    bins: int = DEFAULT_BINS,
    cutoff: int = COMMON_CUTOFF,
) -> GapHistogram:
    """Histogram of gaps over ``bins`` uniform bins spanning ``[0, max gap]``.

    ``common-vs-rare`` needs per-label training counts, so ``training_labels``
    must then be a label -> count mapping. Unknown-label samples are left out
    of both series in that mode and reported in ``excluded``.
    """
    partition = PartitionKind(partition)
    if bins < 1:
        raise InvalidArgumentError("bins must be >= 1")
    gaps = [m if isinstance(m, GapMeasurement) else m[1] for m in measurements]
    if not gaps:
        raise EmptyInputError("no measurements to histogram")
    if len(gaps) != len(truths):
        raise LengthMismatchError(f"{len(gaps)} measurements but {len(truths)} truths")
    delta = np.array([g.delta for g in gaps])
    upper = float(delta.max())
    edges = np.linspace(0.0, upper if upper > 0 else 1.0, bins + 1)

    excluded = 0
    if partition is PartitionKind.KNOWN_VS_UNKNOWN:
        known = np.array([y in training_labels for y in truths])
        groups = {"known": known, "unknown": ~known}
    elif partition is PartitionKind.ACCURATE_VS_INACCURATE:
        hit = np.array([g.nearest_label == y for g, y in zip(gaps, truths)])
        groups = {"accurate": hit, "inaccurate": ~hit}
    else:
        if not isinstance(training_labels, Mapping):
            raise InvalidArgumentError("common-vs-rare needs training label counts")
        common, rare = frequency_partition(training_labels, cutoff)
        is_common = np.array([y in common for y in truths])
        is_rare = np.array([y in rare for y in truths])
        excluded = int((~(is_common | is_rare)).sum())
        groups = {"common": is_common, "rare": is_rare}

    series = {name: np.histogram(delta[mask], bins=edges)[0] for name, mask in groups.items()}
    return GapHistogram(edges, series, partition, excluded)


@dataclass(frozen=True)
class GroupStats:
    samples: int
    emitted: int
    accurate_emitted: int

    @property
    def emitted_fraction(self) -> float | None:
        return self.emitted / self.samples if self.samples else None

    @property
    def accuracy(self) -> float | None:
        return self.accurate_emitted / self.emitted if self.emitted else None

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "emitted": self.emitted,
            "accurate_emitted": self.accurate_emitted,
            "emitted_fraction": self.emitted_fraction,
            "accuracy": self.accuracy,
        }


@dataclass(frozen=True)
class EvaluationReport:
    metric: Metric
    threshold: float
    filtered_f1: float
    baseline_f1: float
    only_predictables_f1: float | None
    test_size: int
    predictable_size: int
    unknown_size: int
    coverage: float
    category_fractions: dict[OutcomeCategory, float]
    category_counts: dict[OutcomeCategory, int]
    unknown_exclusion_rate: float | None
    accurate_loss_rate: float
    frequency: dict[str, GroupStats] = field(default_factory=dict)
    cutoff: int = COMMON_CUTOFF

    def to_dict(self) -> dict:
        return {
            "metric": self.metric.value,
            "threshold": self.threshold,
            "filtered_f1": self.filtered_f1,
            "baseline_f1": self.baseline_f1,
            "only_predictables_f1": self.only_predictables_f1,
            "test_size": self.test_size,
            "predictable_size": self.predictable_size,
            "unknown_size": self.unknown_size,
            "coverage": self.coverage,
            "unknown_exclusion_rate": self.unknown_exclusion_rate,
            "accurate_loss_rate": self.accurate_loss_rate,
            "categories": {c.value: self.category_fractions[c] for c in OutcomeCategory},
            "category_counts": {c.value: self.category_counts[c] for c in OutcomeCategory},
            "frequency_cutoff": self.cutoff,
            "frequency": {k: v.to_dict() for k, v in self.frequency.items()},
        }


def _frequency_stats(
    predictions: Sequence[Prediction],
    truths: Sequence[str],
    counts: Mapping[str, int],
    cutoff: int,
) -> dict[str, GroupStats]:
    common, rare = frequency_partition(counts, cutoff)
    tallies = {name: [0, 0, 0] for name in ("common", "rare", "unknown")}
    for pred, truth in zip(predictions, truths):
        group = "common" if truth in common else "rare" if truth in rare else "unknown"
        t = tallies[group]
        t[0] += 1
        if pred.emitted:
            t[1] += 1
            t[2] += pred.label == truth
    return {k: GroupStats(*v) for k, v in tallies.items()}


def evaluate(
    index: CentroidIndex,
    calibration: CalibrationResult,
    test: Dataset,
    training_labels: Collection[str] | None = None,
    training_label_counts: Mapping[str, int] | None = None,
    cutoff: int = COMMON_CUTOFF,
    threads: int = 1,
) -> EvaluationReport:
    """Score the test split at the calibrated threshold and at ``t = 0``.

    Training labels and counts default to those stored in ``index``. The
    only-predictables score is ``None`` when no test label is a training
    label.
    """
    if len(test) == 0:
        raise EmptyInputError("test set is empty")
    labels = frozenset(training_labels if training_labels is not None else index.labels)
    counts = dict(training_label_counts) if training_label_counts is not None else index.counts
    metric = calibration.metric
    threshold = calibration.threshold

    predictions = predict_split(index, threshold, test, threads=threads)
    truths = list(test.labels)
    n = len(truths)
    hits = [p.gap.nearest_label == y for p, y in zip(predictions, truths)]
    known = [y in labels for y in truths]

    n_emit = sum(p.emitted for p in predictions)
    n_emit_hit = sum(p.emitted and h for p, h in zip(predictions, hits))
    filtered = score_counts(n_emit_hit, n_emit, n, metric)
    baseline = score_counts(sum(hits), n, n, metric)
    n_known = sum(known)
    only_pred = (
        score_counts(sum(h for h, k in zip(hits, known) if k), n_known, n_known, metric)
        if n_known
        else None
    )

    cat_counts = category_counts(predictions, truths, labels)
    n_unknown = n - n_known
    return EvaluationReport(
        metric=metric,
        threshold=threshold,
        filtered_f1=filtered,
        baseline_f1=baseline,
        only_predictables_f1=only_pred,
        test_size=n,
        predictable_size=n_known,
        unknown_size=n_unknown,
        coverage=n_emit / n,
        category_fractions={c: cat_counts[c] / n for c in OutcomeCategory},
        category_counts=cat_counts,
        unknown_exclusion_rate=(
            cat_counts[OutcomeCategory.UNKNOWN_NON_PREDICTED] / n_unknown if n_unknown else None
        ),
        accurate_loss_rate=cat_counts[OutcomeCategory.NON_PREDICTED_ACCURATE] / n,
        frequency=_frequency_stats(predictions, truths, counts, cutoff),
        cutoff=cutoff,
    )


def baseline_knn_predict(train: Dataset, k: int, query: Sequence[float] | np.ndarray) -> str:
    """Majority label among the ``k`` nearest training vectors (L2).

    Equal distances keep training order; equal votes go to the
    lexicographically smallest label. A comparison baseline only.
    """
    if not 1 <= k <= len(train):
        raise InvalidArgumentError(f"k must lie in [1, {len(train)}]")
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != train.dimensionality:
        raise DimensionMismatchError(
            f"query has shape {q.shape}, training vectors have {train.dimensionality} components"
        )
    dist = pairwise_distances(q[None, :], train.vectors, Distance.L2)[0]
    nearest = np.argsort(dist, kind="stable")[:k]
    votes = Counter(train.labels[i] for i in nearest)
    top = max(votes.values())
    return min(l for l, v in votes.items() if v == top)
