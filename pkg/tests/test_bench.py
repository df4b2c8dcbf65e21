import csv
import io
import json

import numpy as np
import pytest

from quartermap import bench
from quartermap.bench import CSV_COLUMNS, SweepAxis, SweepSpec, output_deviation, run_benchmark, run_sweep, write_csv
from quartermap.model import preset
from quartermap.pruning import QuarterMapConfig

# frozen: changing the schema is a breaking change for downstream plots
GOLDEN_COLUMNS = (
    "axis,value,k,m,n,upsample,skip_policy,layers,pruned_blocks,images_per_second,speedup,"
    "total_ms,scan_kernel_ms,prune_upsample_ms,crossscan_merge_ms,other_ms,"
    "flops_total,flops_scan_path,flop_ratio,deviation"
)


@pytest.fixture(scope="module")
def micro_rows():
    spec = SweepSpec("mn", [(1, 1), (2, 1), (4, 1)], repeats=3, warmup=0, batch=2)
    return run_sweep(spec, preset("micro"), QuarterMapConfig(k=1))


def test_golden_schema():
    assert ",".join(CSV_COLUMNS) == GOLDEN_COLUMNS


def test_csv_note_and_header(micro_rows):
    text = write_csv(micro_rows)
    lines = text.splitlines()
    assert lines[0].startswith("# ") and "not comparable" in lines[0]
    assert lines[1] == GOLDEN_COLUMNS
    parsed = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    assert len(parsed) == 4
    assert write_csv(micro_rows, note=None).splitlines()[0] == GOLDEN_COLUMNS


def test_json_round_trip(micro_rows):
    doc = json.loads(bench.write_json(micro_rows))
    assert doc["note"] == bench.REPORT_NOTE
    assert [r["value"] for r in doc["rows"]] == ["baseline", "1:1", "2:1", "4:1"]


def test_sweep_rows(micro_rows):
    base, same, half, quarter = micro_rows
    assert base["value"] == "baseline" and base["speedup"] == 1.0 and base["deviation"] == 0.0
    assert same["deviation"] == 0.0 and same["flop_ratio"] == 1.0
    assert 0 < half["deviation"] <= quarter["deviation"]
    assert 1.0 > half["flop_ratio"] > quarter["flop_ratio"]
    assert half["prune_upsample_ms"] > 0.0
    for row in micro_rows:
        parts = row["scan_kernel_ms"] + row["prune_upsample_ms"] + row["crossscan_merge_ms"]
        assert parts <= row["total_ms"]
        assert row["other_ms"] == pytest.approx(row["total_ms"] - parts, abs=1e-9)


def test_sweep_spec_rules():
    with pytest.raises(ValueError, match="repeats >= 3"):
        SweepSpec("k", repeats=2)
    with pytest.raises(ValueError):
        SweepSpec("depth")
    spec = SweepSpec("k")
    assert spec.values == [1, 2, 3, 4, 6] and spec.axis is SweepAxis.K
    labels = [label for label, _ in SweepSpec("layer").configs(QuarterMapConfig())]
    assert labels == ["0", "1", "2", "3"]


def test_k_sweep_work_non_increasing():
    cfg = preset("tiny")
    ratios = [bench.flop_count(cfg, qm).total for _, qm in SweepSpec("k").configs(QuarterMapConfig())]
    assert ratios == sorted(ratios)


def test_output_deviation():
    a = [np.ones((2, 2, 2))]
    assert output_deviation(a, a) == 0.0
    assert output_deviation(a, [np.zeros((2, 2, 2))]) == 1.0
    assert output_deviation(a, [2 * np.ones((2, 2, 2))]) == pytest.approx(1.0)


def test_seeded_images_are_smooth_and_deterministic():
    a = bench.seeded_images(2, 32, seed=1)
    b = bench.seeded_images(2, 32, seed=1)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    img = a[0]
    # neighbouring pixels correlate far more than i.i.d. noise would
    corr = np.corrcoef(img[:, :-1].ravel(), img[:, 1:].ravel())[0, 1]
    assert corr > 0.9


def test_run_benchmark_report():
    rep = run_benchmark(preset("micro"), QuarterMapConfig(k=1), batch=2, repeats=3, warmup=1)
    assert rep.batch == 2 and rep.repeats == 3
    assert rep.images_per_second > 0
    assert rep.flops["total"] < bench.flop_count(preset("micro")).total
    assert rep.scan_lengths[1] == 4
    with pytest.raises(ValueError):
        run_benchmark(preset("micro"), None, repeats=0)


def test_threaded_benchmark_runs():
    rep = run_benchmark(preset("micro"), None, batch=4, repeats=1, warmup=0, threads=2)
    assert rep.batch == 4 and rep.total_ms > 0


@pytest.mark.slow
def test_disabled_pruning_throughput_within_noise():
    cfg = preset("tiny")
    base, same = bench.run_benchmarks(cfg, [None, QuarterMapConfig(m=1, n=1)], batch=8, repeats=5, warmup=2)
    assert 0.9 <= same.images_per_second / base.images_per_second <= 1.1


@pytest.mark.slow
def test_tiny_k1_scan_time_drops():
    cfg = preset("tiny")
    base, rep = bench.run_benchmarks(cfg, [None, QuarterMapConfig(k=1)], batch=8, repeats=3, warmup=1)
    assert rep.scan_kernel_ms < base.scan_kernel_ms
    assert rep.prune_upsample_ms < base.scan_kernel_ms - rep.scan_kernel_ms
