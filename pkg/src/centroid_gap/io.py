"""File formats: NDJSON datasets, JSON index/calibration/report, run manifests.

Dataset files hold one JSON object per line::

    {"dimensionality": 3}
    {"id": "a", "label": "int", "vector": [0.1, 0.2, 0.3]}

The header line is optional; without it the first record fixes the
dimensionality. All writes go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from . import __version__
from .calibration import CalibrationResult, Metric
from .core import CentroidIndex, Dataset, Distance, SplitRole
from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    EmptyInputError,
    InvalidArgumentError,
    NonFiniteError,
    ParseError,
)

__all__ = [
    "atomic_write_text",
    "dumps_dataset",
    "write_dataset",
    "load_dataset",
    "index_to_dict",
    "index_from_dict",
    "write_json",
    "read_json",
    "load_index",
    "load_calibration",
    "RunManifest",
]


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | os.PathLike, data: Any) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, allow_nan=False) + "\n")


def read_json(path: str | os.PathLike) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}", path=str(path)) from None
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(path), line=exc.lineno) from None


def _reject_constant(name: str) -> float:
    raise ValueError(name)


def dumps_dataset(dataset: Dataset, header: bool = True) -> str:
    lines = []
    if header:
        lines.append(json.dumps({"dimensionality": dataset.dimensionality}))
    for sid, label, vec in zip(dataset.ids, dataset.labels, dataset.vectors):
        lines.append(json.dumps({"id": sid, "label": label, "vector": vec.tolist()}))
    return "\n".join(lines) + "\n"


def write_dataset(path: str | os.PathLike, dataset: Dataset, header: bool = True) -> None:
    atomic_write_text(path, dumps_dataset(dataset, header))


def _is_number(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def load_dataset(path: str | os.PathLike, role: SplitRole | str = SplitRole.TRAIN) -> Dataset:
    """Read an NDJSON dataset, keeping record order.

    Raises a ``ParseError``, ``DimensionMismatchError``, ``DuplicateIdError``
    or ``NonFiniteError`` carrying the offending line number.
    """
    where = str(path)
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc.reason}", path=where) from None

    dim: int | None = None
    ids: list[str] = []
    labels: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    first = True
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line, parse_constant=_reject_constant)
        except ValueError as exc:
            if not isinstance(exc, json.JSONDecodeError):
                raise NonFiniteError(f"non-finite literal {exc}", path=where, line=lineno) from None
            raise ParseError(exc.msg, path=where, line=lineno) from None
        if not isinstance(rec, dict):
            raise ParseError("record is not a JSON object", path=where, line=lineno)
        if first and "vector" not in rec and "dimensionality" in rec:
            d = rec["dimensionality"]
            if not isinstance(d, int) or isinstance(d, bool) or d < 1:
                raise ParseError("dimensionality must be a positive integer", path=where, line=lineno)
            dim = d
            first = False
            continue
        first = False
        sid, label, vec = rec.get("id"), rec.get("label"), rec.get("vector")
        if not isinstance(sid, str):
            raise ParseError("record needs a string 'id'", path=where, line=lineno)
        if not isinstance(label, str) or not label:
            raise ParseError("record needs a non-empty string 'label'", path=where, line=lineno)
        if not isinstance(vec, list) or not all(_is_number(x) for x in vec):
            raise ParseError("record needs a numeric array 'vector'", path=where, line=lineno)
        if dim is None:
            dim = len(vec)
            if dim < 1:
                raise DimensionMismatchError("vector is empty", path=where, line=lineno)
        if len(vec) != dim:
            raise DimensionMismatchError(
                f"expected {dim} components, got {len(vec)}", path=where, line=lineno
            )
        floats = [float(x) for x in vec]
        if not all(math.isfinite(x) for x in floats):
            raise NonFiniteError("vector has non-finite components", path=where, line=lineno)
        if sid in seen:
            raise DuplicateIdError(f"duplicate id {sid!r}", path=where, line=lineno)
        seen.add(sid)
        ids.append(sid)
        labels.append(label)
        rows.append(floats)

    if not rows:
        raise EmptyInputError("dataset has no records", path=where)
    return Dataset(tuple(ids), tuple(labels), np.array(rows, dtype=np.float64), SplitRole(role))


def index_to_dict(index: CentroidIndex) -> dict:
    return {
        "format": "centroid-index",
        "distance": index.distance.value,
        "dimensionality": index.dimensionality,
        "centroids": [
            {"label": l, "count": c, "vector": v.tolist()}
            for l, c, v in zip(index.labels, index.label_counts, index.matrix)
        ],
    }


def index_from_dict(data: Mapping) -> CentroidIndex:
    try:
        entries = data["centroids"]
        index = CentroidIndex(
            tuple(e["label"] for e in entries),
            np.array([e["vector"] for e in entries], dtype=np.float64),
            tuple(e["count"] for e in entries),
            Distance(data.get("distance", "l2")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed centroid index: {exc}") from None
    if "dimensionality" in data and data["dimensionality"] != index.dimensionality:
        raise DimensionMismatchError("declared dimensionality does not match centroids")
    return index


def load_index(path: str | os.PathLike) -> CentroidIndex:
    return index_from_dict(read_json(path))


def load_calibration(path: str | os.PathLike) -> CalibrationResult:
    try:
        return CalibrationResult.from_dict(read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed calibration file: {exc}", path=str(path)) from None


@dataclass
class RunManifest:
    """Everything needed to reproduce one pipeline run.

    Relative split paths are resolved against the manifest's own directory.
    """

    train: str
    validation: str
    test: str
    metric: str = Metric.COVERED_MICRO_F1.value
    distance: str = Distance.L2.value
    threshold: float | None = None
    seed: int | None = None
    min_coverage: float = 0.0
    bins: int = 50
    cutoff: int = 100
    version: str = __version__

    def __post_init__(self) -> None:
        Metric(self.metric)
        Distance(self.distance)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunManifest":
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"malformed manifest: {exc}") from None

    def resolve(self, base: str | os.PathLike) -> dict[str, Path]:
        base = Path(base)
        return {
            role: (base / getattr(self, role)) for role in ("train", "validation", "test")
        }

    def save(self, path: str | os.PathLike) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunManifest":
        manifest = cls.from_dict(read_json(path))
        for role, p in manifest.resolve(Path(path).parent).items():
            if not p.is_file():
                raise InvalidArgumentError(f"{role} file not found", path=str(p))
        return manifest


def write_ndjson(path: str | os.PathLike, records: Iterable[Mapping]) -> None:
    atomic_write_text(path, "".join(json.dumps(r, allow_nan=False) + "\n" for r in records))


def read_ndjson(path: str | os.PathLike) -> list[dict]:
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line, parse_constant=_reject_constant))
        except ValueError as exc:
            raise ParseError(str(exc), path=str(path), line=lineno) from None
    return out
