"""Command-line entry point.

Subcommands mirror the pipeline: ``synth`` -> ``centroids`` -> ``calibrate``
-> ``predict`` / ``eval``, plus ``hist``, ``aggregate`` and ``pipeline``
(everything at once from a run manifest). Failures print a JSON object
``{"error": {"code", "message", "location"}}`` on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .calibration import Metric, calibrate
from .core import Distance, GapMeasurement, SplitRole, compute_centroids, measure_all
from .errors import GapError, InvalidArgumentError, ParseError, UsageError
from .evaluation import (
    COMMON_CUTOFF,
    DEFAULT_BINS,
    GapHistogram,
    PartitionKind,
    evaluate,
    gap_histogram,
    predict_split,
)
from .io import (
    RunManifest,
    atomic_write_text,
    index_to_dict,
    load_calibration,
    load_dataset,
    load_index,
    read_json,
    read_ndjson,
    write_dataset,
    write_json,
    write_ndjson,
)
from .synth import SynthConfig, generate

EXIT_ERROR = 1
EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _add_threads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=_positive_int, default=1, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="centroid-gap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic train/validation/test files")
    p.add_argument("--config", required=True, help="JSON file with SynthConfig fields")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("centroids", help="train file -> centroid index")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--distance", choices=[d.value for d in Distance], default="l2")

    p = sub.add_parser("calibrate", help="index + validation -> calibration JSON")
    p.add_argument("--index", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metric", choices=[m.value for m in Metric], default=Metric.COVERED_MICRO_F1.value)
    p.add_argument("--min-coverage", type=float, default=0.0)
    _add_threads(p)

    p = sub.add_parser("predict", help="one decision per input sample")
    p.add_argument("--index", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--threshold", type=float)
    src.add_argument("--calibration")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="NDJSON predictions")
    _add_threads(p)

    p = sub.add_parser("eval", help="index + calibration + test -> report and histograms")
    p.add_argument("--index", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bins", type=_positive_int, default=DEFAULT_BINS)
    p.add_argument("--cutoff", type=int, default=COMMON_CUTOFF)
    _add_threads(p)

    p = sub.add_parser("hist", help="predictions file -> gap histogram CSV")
    p.add_argument("--predictions", required=True, help="NDJSON written by 'predict'")
    p.add_argument("--index", required=True)
    p.add_argument("--partition", choices=[k.value for k in PartitionKind], default="known-vs-unknown")
    p.add_argument("--bins", type=_positive_int, default=DEFAULT_BINS)
    p.add_argument("--cutoff", type=int, default=COMMON_CUTOFF)
    p.add_argument("--out", required=True)

    p = sub.add_parser("aggregate", help="field-wise mean of report JSONs")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="run centroids, calibrate and eval from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--metric", choices=[m.value for m in Metric])
    p.add_argument("--distance", choices=[d.value for d in Distance])
    p.add_argument("--min-coverage", type=float)
    p.add_argument("--bins", type=_positive_int)
    p.add_argument("--cutoff", type=int)
    p.add_argument("--seed", type=int, help="recorded in the output manifest")
    _add_threads(p)
    return parser


def _cmd_synth(args: argparse.Namespace) -> None:
    raw = read_json(args.config)
    if not isinstance(raw, dict):
        raise ParseError("config must be a JSON object", path=args.config)
    if args.seed is not None:
        raw = {**raw, "seed": args.seed}
    config = SynthConfig.from_dict(raw)
    splits = generate(config)
    out = Path(args.out)
    write_dataset(out / "train.jsonl", splits.train)
    write_dataset(out / "validation.jsonl", splits.validation)
    write_dataset(out / "test.jsonl", splits.test)
    write_json(out / "unknown_labels.json", sorted(splits.unknown_labels))
    write_json(out / "config.json", config.to_dict())
    RunManifest("train.jsonl", "validation.jsonl", "test.jsonl", seed=config.seed).save(
        out / "manifest.json"
    )


def _cmd_centroids(args: argparse.Namespace) -> None:
    train = load_dataset(args.train, SplitRole.TRAIN)
    write_json(args.out, index_to_dict(compute_centroids(train, args.distance)))


def _cmd_calibrate(args: argparse.Namespace) -> None:
    index = load_index(args.index)
    validation = load_dataset(args.validation, SplitRole.VALIDATION)
    result = calibrate(index, validation, args.metric, args.min_coverage, args.threads)
    write_json(args.out, result.to_dict())


def _cmd_predict(args: argparse.Namespace) -> None:
    index = load_index(args.index)
    threshold = (
        args.threshold if args.threshold is not None else load_calibration(args.calibration).threshold
    )
    data = load_dataset(args.input, SplitRole.TEST)
    preds = predict_split(index, threshold, data, threads=args.threads)
    write_ndjson(args.out, (p.to_dict(truth) for p, truth in zip(preds, data.labels)))


def _write_histograms(out: Path, hists: list[GapHistogram]) -> None:
    for h in hists:
        atomic_write_text(out / f"hist_{h.partition.value}.csv", h.to_csv())
    write_json(out / "histograms.json", [h.to_dict() for h in hists])


def _evaluate_to(out: Path, index, calibration, test, bins, cutoff, threads) -> dict:
    report = evaluate(index, calibration, test, cutoff=cutoff, threads=threads)
    measurements = measure_all(index, test, threads=threads)
    hists = [
        gap_histogram(measurements, test.labels, index.counts, kind, bins, cutoff)
        for kind in PartitionKind
    ]
    data = report.to_dict()
    write_json(out / "report.json", data)
    _write_histograms(out, hists)
    return data


def _cmd_eval(args: argparse.Namespace) -> None:
    index = load_index(args.index)
    calibration = load_calibration(args.calibration)
    test = load_dataset(args.test, SplitRole.TEST)
    _evaluate_to(Path(args.out_dir), index, calibration, test, args.bins, args.cutoff, args.threads)


def _cmd_hist(args: argparse.Namespace) -> None:
    index = load_index(args.index)
    records = read_ndjson(args.predictions)
    try:
        gaps = [
            GapMeasurement(r["nearest"], r["second"], float(r["d1"]), float(r["d2"]), float(r["delta"]))
            for r in records
        ]
        truths = [r["truth"] for r in records]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed predictions record: {exc}", path=args.predictions) from None
    hist = gap_histogram(gaps, truths, index.counts, args.partition, args.bins, args.cutoff)
    atomic_write_text(args.out, hist.to_csv())


def _mean(values: list[Any], key: str) -> Any:
    if any(v is None for v in values):
        return None
    if all(isinstance(v, dict) for v in values):
        keys = list(values[0])
        if any(list(v) != keys for v in values):
            raise InvalidArgumentError("reports have different fields", field=key)
        return {k: _mean([v[k] for v in values], f"{key}.{k}" if key else k) for k in keys}
    if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        return sum(values) / len(values)
    if all(v == values[0] for v in values):
        return values[0]
    raise InvalidArgumentError("reports disagree on a non-numeric field", field=key)


def aggregate_reports(reports: Sequence[dict]) -> dict:
    """Arithmetic mean of every numeric field; other fields must agree.

    A field that is null in any report is null in the aggregate.
    """
    if not reports:
        raise InvalidArgumentError("nothing to aggregate")
    out = _mean(list(reports), "")
    out["runs"] = len(reports)
    return out


def _cmd_aggregate(args: argparse.Namespace) -> None:
    write_json(args.out, aggregate_reports([read_json(p) for p in args.reports]))


def _cmd_pipeline(args: argparse.Namespace) -> None:
    manifest = RunManifest.load(args.manifest)
    for name in ("metric", "distance", "min_coverage", "bins", "cutoff", "seed"):
        value = getattr(args, name)
        if value is not None:
            setattr(manifest, name, value)
    manifest = RunManifest.from_dict(manifest.to_dict())
    paths = manifest.resolve(Path(args.manifest).parent)
    out = Path(args.out_dir)

    train = load_dataset(paths["train"], SplitRole.TRAIN)
    validation = load_dataset(paths["validation"], SplitRole.VALIDATION)
    test = load_dataset(paths["test"], SplitRole.TEST)
    index = compute_centroids(train, manifest.distance)
    write_json(out / "index.json", index_to_dict(index))
    calibration = calibrate(index, validation, manifest.metric, manifest.min_coverage, args.threads)
    write_json(out / "calibration.json", calibration.to_dict())
    preds = predict_split(index, calibration.threshold, test, threads=args.threads)
    write_ndjson(out / "predictions.jsonl", (p.to_dict(t) for p, t in zip(preds, test.labels)))
    _evaluate_to(out, index, calibration, test, manifest.bins, manifest.cutoff, args.threads)

    manifest.threshold = calibration.threshold
    manifest.train, manifest.validation, manifest.test = (
        str(paths[r].resolve()) for r in ("train", "validation", "test")
    )
    manifest.save(out / "manifest.json")


_COMMANDS = {
    "synth": _cmd_synth,
    "centroids": _cmd_centroids,
    "calibrate": _cmd_calibrate,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "hist": _cmd_hist,
    "aggregate": _cmd_aggregate,
    "pipeline": _cmd_pipeline,
}


def _fail(payload: dict) -> None:
    print(json.dumps({"error": payload}), file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _COMMANDS[args.command](args)
    except UsageError as exc:
        _fail(exc.to_dict())
        return EXIT_USAGE
    except GapError as exc:
        _fail(exc.to_dict())
        return EXIT_ERROR
    except OSError as exc:
        _fail({"code": "io-error", "message": exc.strerror or str(exc), "location": {"path": exc.filename}})
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
