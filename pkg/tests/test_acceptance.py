"""Exit criteria for the package, one test per criterion.

Each test prints a single ``[PASS]`` / ``[FAIL]`` line. Run with
``pytest tests/test_acceptance.py -v``.
"""

import json
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from conftest import make_dataset
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_nearest_two, brute_sweep_masks

from centroid_gap.calibration import (
    CalibrationResult,
    CurvePoint,
    DegenerateCalibrationWarning,
    Metric,
    calibrate,
)
from centroid_gap.cli import main
from centroid_gap.core import CentroidIndex, compute_centroids, measure_all, nearest_two
from centroid_gap.errors import InfeasibleSpacingError
from centroid_gap.evaluation import (
    OutcomeCategory as OC,
)
from centroid_gap.evaluation import (
    PartitionKind,
    evaluate,
    frequency_partition,
    gap_histogram,
    predict_split,
)
from centroid_gap.io import write_json
from centroid_gap.synth import SynthConfig, generate, reference_config

GOLDEN = Path(__file__).parent / "golden" / "reference_seed.json"


@pytest.fixture
def verdict(capsys):
    def emit(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, detail

    return emit


def _random_splits(rng, max_total):
    while True:
        try:
            return generate(_random_config(rng, max_total))
        except InfeasibleSpacingError:
            continue


def _random_config(rng, max_total):
    known = int(rng.integers(2, 9))
    unknown = int(rng.integers(0, 4))
    per_class = int(rng.integers(5, max_total // (known + unknown) + 1))
    return SynthConfig(
        dimensionality=int(rng.integers(1, 9)),
        known_classes=known,
        unknown_classes=unknown,
        train_per_class=int(rng.integers(5, 40)),
        validation_per_class=per_class,
        test_per_class=per_class,
        cluster_stddev=float(rng.uniform(0.5, 12.0)),
        center_spacing=float(rng.uniform(0.5, 3.0)),
        seed=int(rng.integers(0, 2**63)),
    )


def test_c1_nearest_two_oracle(verdict):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    bad = 0
    worst = 0.0
    for _ in range(1000):
        k, d = int(rng.integers(2, 51)), int(rng.integers(1, 17))
        labels = [f"t{i:02d}" for i in range(k)]
        matrix = rng.normal(scale=float(rng.uniform(0.1, 100)), size=(k, d))
        index = CentroidIndex(tuple(labels), matrix, (1,) * k)
        query = rng.normal(scale=50.0, size=d)
        gm = nearest_two(index, query)
        a, b, d1, d2, _ = brute_nearest_two(dict(zip(labels, matrix.tolist())), query.tolist())
        if (gm.nearest_label, gm.second_label) != (a, b):
            bad += 1
        for x, y in ((gm.d1, d1), (gm.d2, d2)):
            worst = max(worst, abs(x - y) / max(abs(y), 1e-300))
    elapsed = time.perf_counter() - start
    ok = bad == 0 and worst <= 1e-12 and elapsed < 10.0
    verdict("C1 nearest-two == brute-force sort", ok,
            f"1000 instances, {bad} label mismatches, max rel dist err {worst:.1e}, {elapsed:.2f}s")


def test_c2_calibration_oracle(verdict):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    mismatches = []
    sizes = []
    for trial in range(100):
        splits = _random_splits(rng, 2000)
        val = splits.validation
        val = val.subset(i < 2000 for i in range(len(val)))
        sizes.append(len(val))
        index = compute_centroids(splits.train)
        metric = list(Metric)[trial % 2]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateCalibrationWarning)
            res = calibrate(index, val, metric)
        gms = [g for _, g in measure_all(index, val)]
        t, v = brute_sweep_masks(
            [g.delta for g in gms], [g.nearest_label == y for g, y in zip(gms, val.labels)], metric.value
        )
        if (res.threshold, res.metric_value) != (t, v):
            mismatches.append(trial)
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 60.0 and max(sizes) <= 2000
    verdict("C2 calibrate == exhaustive sweep", ok,
            f"100 sets (n {min(sizes)}..{max(sizes)}), mismatches {mismatches}, {elapsed:.2f}s")


def test_c3_metric_identity(verdict):
    rng = np.random.default_rng(3)
    worst = 0.0
    checked = 0
    for trial in range(201):
        splits = generate(reference_config()) if trial == 0 else _random_splits(rng, 400)
        index = compute_centroids(splits.train)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateCalibrationWarning)
            cal = calibrate(index, splits.validation, Metric.COVERED_MICRO_F1)
        rep = evaluate(index, cal, splits.test)
        predicted = rep.category_fractions[OC.PREDICTED]
        if predicted == 0:
            continue
        checked += 1
        ratio = rep.category_fractions[OC.PREDICTED_ACCURATE] / predicted
        worst = max(worst, abs(rep.filtered_f1 - ratio))
    verdict("C3 filtered F1 == predicted-accurate / predicted", worst <= 1e-9 and checked > 150,
            f"{checked} reports, max abs diff {worst:.1e}")


def test_c4_unknown_exclusion_reference(verdict):
    golden = json.loads(GOLDEN.read_text())
    config = reference_config()
    assert golden["config"] == config.to_dict()
    splits = generate(config)
    index = compute_centroids(splits.train)
    problems = []
    for metric in Metric:
        want = golden[metric.value]
        rep = evaluate(index, calibrate(index, splits.validation, metric), splits.test)
        got = {
            "threshold": rep.threshold,
            "filtered_f1": rep.filtered_f1,
            "baseline_f1": rep.baseline_f1,
            "only_predictables_f1": rep.only_predictables_f1,
            "unknown_exclusion_rate": rep.unknown_exclusion_rate,
            "category_counts": {c.value: rep.category_counts[c] for c in OC.leaves()},
            "test_size": rep.test_size,
        }
        for key, value in got.items():
            if value != want[key]:
                problems.append(f"{metric.value}.{key}: {value} != golden {want[key]}")
        if metric is Metric.COVERED_MICRO_F1:
            excl, gain = rep.unknown_exclusion_rate, rep.filtered_f1 - rep.baseline_f1
            if excl < 0.90:
                problems.append(f"exclusion {excl} < 0.90")
            if gain < 0.05:
                problems.append(f"gain {gain} < 0.05")
    main_rep = golden["covered-micro-f1"]
    verdict("C4 reference config: exclusion >= 0.90, gain >= 0.05, golden exact", not problems,
            "; ".join(problems) or
            f"exclusion {main_rep['unknown_exclusion_rate']}, "
            f"F1 {main_rep['filtered_f1']:.4f} vs baseline {main_rep['baseline_f1']:.4f}")


def test_c5_category_partition(verdict):
    rng = np.random.default_rng(5)
    worst_leaf = worst_agg = 0.0
    for _ in range(1000):
        k, d = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        train_labels = [f"L{i}" for i in range(k) for _ in range(3)]
        vectors = rng.normal(scale=3.0, size=(len(train_labels), d))
        index = compute_centroids(make_dataset(train_labels, vectors))
        n = int(rng.integers(1, 30))
        test_labels = [f"L{i}" for i in rng.integers(0, k + 2, size=n)]
        test = make_dataset(test_labels, rng.normal(scale=3.0, size=(n, d)))
        t = float(rng.exponential(1.0))
        rep = evaluate(index, CalibrationResult(t, (CurvePoint(t, 0, 0),), Metric.COVERED_MICRO_F1, 1), test)
        f = rep.category_fractions
        worst_leaf = max(worst_leaf, abs(sum(f[c] for c in OC.leaves()) - 1.0))
        worst_agg = max(
            worst_agg,
            abs(f[OC.PREDICTED] - sum(f[c] for c in OC.leaves()[:3])),
            abs(f[OC.NON_PREDICTED] - sum(f[c] for c in OC.leaves()[3:])),
        )
        c = rep.category_counts
        assert sum(c[x] for x in OC.leaves()) == n
    ok = worst_leaf <= 1e-9 and worst_agg <= 1e-9
    verdict("C5 six leaves partition the test set", ok,
            f"1000 evaluations, max |sum-1| {worst_leaf:.1e}, max aggregate diff {worst_agg:.1e}")


def test_c6_abstention_monotone(verdict):
    splits = generate(SynthConfig(dimensionality=3, known_classes=4, unknown_classes=2,
                                  cluster_stddev=4.0, center_spacing=1.0, seed=6))
    index = compute_centroids(splits.train)
    gaps = [g.delta for _, g in measure_all(index, splits.test)]
    top = max(gaps)

    @settings(max_examples=300, deadline=None, derandomize=True)
    @given(st.floats(0.0, 1.2 * top), st.floats(0.0, 1.2 * top))
    def check(a, b):
        t1, t2 = sorted((a, b))
        low = {p.sample_id for p in predict_split(index, t1, splits.test) if p.emitted}
        high = {p.sample_id for p in predict_split(index, t2, splits.test) if p.emitted}
        assert high <= low

    try:
        check()
    except AssertionError as exc:
        verdict("C6 emitted(t2) subset of emitted(t1)", False, str(exc))
    verdict("C6 emitted(t2) subset of emitted(t1)", True, "300 random threshold pairs")


def test_c7_cli_determinism(tmp_path, verdict):
    write_json(tmp_path / "config.json", reference_config().to_dict())
    assert main(["synth", "--config", str(tmp_path / "config.json"), "--out", str(tmp_path / "data")]) == 0
    manifest = str(tmp_path / "data" / "manifest.json")
    runs = {}
    for name, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        assert main(["pipeline", "--manifest", manifest, "--out-dir", str(tmp_path / name),
                     "--threads", threads]) == 0
        runs[name] = {p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())}
    assert main(["synth", "--config", str(tmp_path / "config.json"), "--out", str(tmp_path / "data2")]) == 0
    same_data = all(
        (tmp_path / "data" / f).read_bytes() == (tmp_path / "data2" / f).read_bytes()
        for f in ("train.jsonl", "validation.jsonl", "test.jsonl")
    )
    ok = runs["a"] == runs["b"] == runs["c"] and same_data
    verdict("C7 byte-identical CLI outputs (repeat run, 1 vs 4 threads)", ok,
            f"{len(runs['a'])} output files compared, synth repeat identical: {same_data}")


def test_c8_histogram_conservation(verdict):
    rng = np.random.default_rng(8)
    failures = 0
    for trial in range(300):
        splits = _random_splits(rng, 300)
        index = compute_centroids(splits.train)
        ms = measure_all(index, splits.test)
        bins = int(rng.integers(1, 201))
        kind = list(PartitionKind)[trial % 3]
        h = gap_histogram(ms, splits.test.labels, index.counts, kind, bins=bins, cutoff=20)
        labels = splits.test.labels
        if kind is PartitionKind.KNOWN_VS_UNKNOWN:
            want = {"known": sum(y in index for y in labels)}
            want["unknown"] = len(labels) - want["known"]
        elif kind is PartitionKind.ACCURATE_VS_INACCURATE:
            want = {"accurate": sum(g.nearest_label == y for (_, g), y in zip(ms, labels))}
            want["inaccurate"] = len(labels) - want["accurate"]
        else:
            common, rare = frequency_partition(index.counts, 20)
            want = {"common": sum(y in common for y in labels), "rare": sum(y in rare for y in labels)}
        failures += h.totals() != want or len(h.edges) != bins + 1
    verdict("C8 histogram series totals == partition sizes", failures == 0,
            f"300 histograms, bins in [1, 200], {failures} failures")


def test_c9_frequency_boundary(verdict):
    common, rare = frequency_partition({"hundred": 100, "hundred_one": 101})
    ok = common == {"hundred_one"} and rare == {"hundred"}
    verdict("C9 count 100 -> rare, 101 -> common", ok, f"common={sorted(common)} rare={sorted(rare)}")
