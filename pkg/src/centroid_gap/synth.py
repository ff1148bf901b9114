"""Seeded synthetic datasets: Gaussian classes plus planted unknown classes.

Random stream
-------------
All randomness comes from one PCG64 bit generator (numpy's implementation,
seeded through ``numpy.random.SeedSequence(seed)``). Each raw 64-bit output
``r`` becomes the double ``(r >> 11) * 2**-53`` in ``[0, 1)``. Values are
consumed in this fixed order:

1. Known class means, class by class. Each placement attempt draws
   ``dimensionality`` uniforms and maps them into a hypercube of side
   ``10 * center_spacing`` centred on the origin. An attempt is accepted when
   it lies at least ``center_spacing`` from every mean placed so far.
2. Unknown class means. Each attempt draws three uniforms: two pick an
   ordered pair ``(a, b)`` of distinct known classes, the third ``u`` sets
   the candidate ``a + w (b - a)`` with ``w = 0.25 + 0.5 u``, so the class
   sits on the middle half of the segment between two known centres.
   Acceptance uses the same spacing rule against all means placed so far.
3. Samples for train, validation and test, in that order. Within a split,
   classes go known then unknown (unknowns are absent from train), and each
   class's samples are contiguous. A split needing ``m`` normal variates
   draws ``ceil(m / 2)`` Box-Muller pairs from consecutive uniforms
   ``(u1, u2)``: ``rho = sqrt(-2 ln(1 - u1))``, variates
   ``rho cos(2 pi u2)`` then ``rho sin(2 pi u2)``. A trailing odd variate is
   discarded.

Each placement phase gives up after ``max_attempts`` rejected attempts for a
single class.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping, NamedTuple

import numpy as np

from .core import Dataset, SplitRole
from .errors import InfeasibleSpacingError, InvalidArgumentError

__all__ = [
    "SynthConfig",
    "SynthSplits",
    "generate",
    "class_labels",
    "class_means",
    "reference_config",
]


@dataclass(frozen=True)
class SynthConfig:
    dimensionality: int = 16
    known_classes: int = 8
    unknown_classes: int = 3
    train_per_class: int = 150
    validation_per_class: int = 60
    test_per_class: int = 60
    rare_class_fraction: float = 0.0
    rare_train_per_class: int = 40
    cluster_stddev: float = 1.0
    center_spacing: float = 6.0
    seed: int = 0
    max_attempts: int = 10_000

    def __post_init__(self) -> None:
        if self.dimensionality < 1:
            raise InvalidArgumentError("dimensionality must be >= 1")
        if self.known_classes < 2:
            raise InvalidArgumentError("known_classes must be >= 2")
        if self.unknown_classes < 0:
            raise InvalidArgumentError("unknown_classes must be >= 0")
        for name in ("train_per_class", "validation_per_class", "test_per_class",
                     "rare_train_per_class", "max_attempts"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if not self.cluster_stddev > 0:
            raise InvalidArgumentError("cluster_stddev must be > 0")
        if not self.center_spacing > 0:
            raise InvalidArgumentError("center_spacing must be > 0")
        if not 0.0 <= self.rare_class_fraction <= 1.0:
            raise InvalidArgumentError("rare_class_fraction must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")

    @property
    def rare_classes(self) -> int:
        return math.floor(self.rare_class_fraction * self.known_classes + 1e-9)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise InvalidArgumentError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)


def reference_config(seed: int = 20240613) -> SynthConfig:
    """8 known + 3 unknown classes with spacing at 6 standard deviations."""
    return SynthConfig(
        dimensionality=16,
        known_classes=8,
        unknown_classes=3,
        train_per_class=150,
        validation_per_class=60,
        test_per_class=60,
        rare_class_fraction=0.25,
        rare_train_per_class=40,
        cluster_stddev=1.0,
        center_spacing=6.0,
        seed=seed,
    )


class SynthSplits(NamedTuple):
    train: Dataset
    validation: Dataset
    test: Dataset
    unknown_labels: frozenset[str]


class _Stream:
    def __init__(self, seed: int) -> None:
        self._bits = np.random.PCG64(np.random.SeedSequence(seed))

    def uniforms(self, n: int) -> np.ndarray:
        raw = self._bits.random_raw(n)
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normals(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs).tolist()
        out = []
        # scalar libm calls: numpy's vectorized transcendentals vary by CPU
        for i in range(0, 2 * pairs, 2):
            rho = math.sqrt(-2.0 * math.log1p(-u[i]))
            theta = 2.0 * math.pi * u[i + 1]
            out.append(rho * math.cos(theta))
            out.append(rho * math.sin(theta))
        return np.array(out[:n], dtype=np.float64)


def class_labels(config: SynthConfig) -> tuple[list[str], list[str]]:
    known = [f"known_{i:02d}" for i in range(config.known_classes)]
    unknown = [f"unknown_{i:02d}" for i in range(config.unknown_classes)]
    return known, unknown


def _far_enough(candidate: np.ndarray, placed: list[np.ndarray], spacing: float) -> bool:
    return all(math.dist(candidate, p) >= spacing for p in placed)


def _place_means(config: SynthConfig, stream: _Stream) -> np.ndarray:
    side = 10.0 * config.center_spacing
    placed: list[np.ndarray] = []
    for k in range(config.known_classes):
        for _ in range(config.max_attempts):
            cand = (stream.uniforms(config.dimensionality) - 0.5) * side
            if _far_enough(cand, placed, config.center_spacing):
                placed.append(cand)
                break
        else:
            raise InfeasibleSpacingError(
                f"could not place known class {k} after {config.max_attempts} attempts"
            )
    n_known = config.known_classes
    for k in range(config.unknown_classes):
        for _ in range(config.max_attempts):
            u = stream.uniforms(3)
            a = min(int(u[0] * n_known), n_known - 1)
            b = min(int(u[1] * (n_known - 1)), n_known - 2)
            b += b >= a
            w = 0.25 + 0.5 * u[2]
            cand = placed[a] + w * (placed[b] - placed[a])
            if _far_enough(cand, placed, config.center_spacing):
                placed.append(cand)
                break
        else:
            raise InfeasibleSpacingError(
                f"could not place unknown class {k} after {config.max_attempts} attempts"
            )
    return np.stack(placed)


def class_means(config: SynthConfig) -> np.ndarray:
    """Means used by ``generate``: known classes first, then unknown."""
    return _place_means(config, _Stream(config.seed))


def _draw_split(
    stream: _Stream,
    role: SplitRole,
    means: np.ndarray,
    labels: list[str],
    per_class: list[int],
    stddev: float,
) -> Dataset:
    dim = means.shape[1]
    total = sum(per_class)
    noise = stream.normals(total * dim).reshape(total, dim)
    centres = np.repeat(means, per_class, axis=0)
    vectors = centres + stddev * noise
    sample_labels = [l for l, n in zip(labels, per_class) for _ in range(n)]
    ids = [f"{role.value}-{i:06d}" for i in range(total)]
    return Dataset(tuple(ids), tuple(sample_labels), vectors, role)


def generate(config: SynthConfig) -> SynthSplits:
    """Generate train, validation and test splits from ``config``.

    The last ``rare_classes`` known classes get ``rare_train_per_class``
    training samples instead of ``train_per_class``. Unknown classes appear in
    validation and test only. Output is a pure function of ``config``.
    """
    stream = _Stream(config.seed)
    means = _place_means(config, stream)
    known, unknown = class_labels(config)
    n_known = config.known_classes
    n_common = n_known - config.rare_classes
    train_counts = [config.train_per_class] * n_common + [config.rare_train_per_class] * (
        n_known - n_common
    )
    train = _draw_split(
        stream, SplitRole.TRAIN, means[:n_known], known, train_counts, config.cluster_stddev
    )
    everyone = known + unknown
    validation = _draw_split(
        stream,
        SplitRole.VALIDATION,
        means,
        everyone,
        [config.validation_per_class] * len(everyone),
        config.cluster_stddev,
    )
    test = _draw_split(
        stream,
        SplitRole.TEST,
        means,
        everyone,
        [config.test_per_class] * len(everyone),
        config.cluster_stddev,
    )
    return SynthSplits(train, validation, test, frozenset(unknown))
