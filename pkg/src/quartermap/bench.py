"""Throughput measurement, timing decomposition and ablation sweeps.

Times are CPU wall-clock from ``time.perf_counter`` around the scan, the
prune/upsample stages and cross-scan/merge. Absolute milliseconds say
nothing about GPU kernel times; only ratios and decompositions carry over.

When several configurations are compared they are timed round-robin so
drift in machine load hits all of them alike. Stage times and the total are
medians over the timed repeats, ``other_ms`` is what the median stages leave
of the median total, and throughput is images over the summed forward wall
time of the timed repeats.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .model import ModelConfig, build_model, flop_count, forward_arrays, forward_image
from .profiling import Profiler, StageReport
from .pruning import QuarterMapConfig, Upsample, pruned_blocks, upsample_array
from .tensor_core import fill_seeded

__all__ = [
    "SweepAxis",
    "SweepSpec",
    "CSV_COLUMNS",
    "REPORT_NOTE",
    "seeded_images",
    "run_benchmark",
    "run_benchmarks",
    "run_sweep",
    "output_deviation",
    "write_csv",
    "write_json",
    "DEFAULT_SWEEP_VALUES",
]

REPORT_NOTE = (
    "CPU wall-clock timings (perf_counter); absolute ms are not comparable to GPU "
    "kernel timings, only decompositions and ratios are"
)

CSV_COLUMNS = (
    "axis",
    "value",
    "k",
    "m",
    "n",
    "upsample",
    "skip_policy",
    "layers",
    "pruned_blocks",
    "images_per_second",
    "speedup",
    "total_ms",
    "scan_kernel_ms",
    "prune_upsample_ms",
    "crossscan_merge_ms",
    "other_ms",
    "flops_total",
    "flops_scan_path",
    "flop_ratio",
    "deviation",
)

_TIMING_KEYS = ("scan_kernel_ms", "prune_upsample_ms", "crossscan_merge_ms", "other_ms", "total_ms")
_MEDIAN_KEYS = ("scan_kernel_ms", "prune_upsample_ms", "crossscan_merge_ms", "total_ms")


class SweepAxis(str, Enum):
    K = "k"
    MN = "mn"
    UPSAMPLE = "upsample"
    LAYER = "layer"


DEFAULT_SWEEP_VALUES = {
    SweepAxis.K: [1, 2, 3, 4, 6],
    SweepAxis.MN: [(m, 1) for m in range(1, 9)],
    SweepAxis.UPSAMPLE: ["nearest", "bilinear", "bicubic"],
    SweepAxis.LAYER: [0, 1, 2, 3],
}


@dataclass
class SweepSpec:
    axis: SweepAxis
    values: list = field(default_factory=list)
    repeats: int = 5
    warmup: int = 2
    batch: int = 8
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        self.axis = SweepAxis(self.axis)
        if not self.values:
            self.values = list(DEFAULT_SWEEP_VALUES[self.axis])
        if self.repeats < 3:
            raise ValueError(f"sweeps report published numbers and need repeats >= 3, got {self.repeats}")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")

    def configs(self, base: QuarterMapConfig) -> list[tuple[str, QuarterMapConfig]]:
        out = []
        for v in self.values:
            if self.axis is SweepAxis.K:
                out.append((str(v), base.with_(k=int(v), layers=None)))
            elif self.axis is SweepAxis.MN:
                m, n = (v, base.n) if isinstance(v, int) else v
                out.append((f"{m}:{n}", base.with_(m=int(m), n=int(n))))
            elif self.axis is SweepAxis.UPSAMPLE:
                out.append((str(Upsample(v).value), base.with_(upsample=Upsample(v))))
            else:
                out.append((str(v), base.with_(layers=(int(v),))))
        return out


def seeded_images(count: int, hw: int, seed: int = 0, octaves: int = 4) -> list[np.ndarray]:
    """Spatially correlated RGB test images built from the repo generator.

    Each image is multi-octave value noise: seeded grids of 4, 8, 16, ...
    cells per side, bilinearly upsampled to ``hw`` and summed with halving
    amplitude. I.i.d. pixels would make every nearest-neighbour reconstruction
    equally wrong, which hides exactly the effect the deviation proxy measures.
    """
    images = []
    for i in range(count):
        img = np.zeros((hw, hw, 3), dtype=np.float64)
        for o in range(octaves):
            g = min(2 ** (o + 2), hw)
            grid = fill_seeded(g, g, 3, (seed * 1024 + i) * 16 + o).array
            img += 0.5**o * upsample_array(grid, hw, hw, Upsample.BILINEAR)
        images.append(img.astype(np.float32))
    return images


def _median_report(reports: list[StageReport], batch: int, wall_total: float, flops) -> StageReport:
    med = {key: statistics.median(getattr(r, key) for r in reports) for key in _MEDIAN_KEYS}
    # other_ms stays the unattributed remainder of the median total
    med["other_ms"] = max(med["total_ms"] - sum(med[k] for k in _MEDIAN_KEYS[:-1]), 0.0)
    return StageReport(
        **med,
        images_per_second=batch * len(reports) / wall_total if wall_total > 0 else 0.0,
        batch=batch,
        repeats=len(reports),
        flops=flops,
        scan_lengths=dict(reports[0].scan_lengths) if reports else {},
    )


def run_benchmarks(
    cfg: ModelConfig,
    qms,
    batch: int = 8,
    repeats: int = 5,
    warmup: int = 2,
    threads: int = 1,
    seed: int = 0,
    model=None,
    images=None,
) -> list[StageReport]:
    """Time several QuarterMap settings (``None`` = baseline) on one model.

    Single-threaded runs interleave at image granularity: for every image of
    the batch each setting runs once, in an order that rotates per image and
    per repeat. Load on this kind of machine comes in phases of about a
    second, so batch-level interleaving lets one setting eat a whole slow
    phase. With ``threads > 1`` the batch is the unit instead.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    qms = list(qms)
    model = model if model is not None else build_model(cfg)
    images = images if images is not None else seeded_images(batch, cfg.input_hw, seed)
    images = [np.asarray(img, dtype=np.float32) for img in images]
    runs = [[] for _ in qms]
    walls = [0.0 for _ in qms]
    for r in range(warmup + repeats):
        if threads > 1:
            reports, elapsed = _batch_round(model, images, qms, r, threads)
        else:
            reports, elapsed = _item_round(model, images, qms, r)
        if r >= warmup:
            for i, rep in enumerate(reports):
                runs[i].append(rep)
                walls[i] += elapsed[i]
    return [
        _median_report(runs[i], len(images), walls[i], flop_count(cfg, qm).as_dict())
        for i, qm in enumerate(qms)
    ]


def _item_round(model, images, qms, r):
    profilers = [[] for _ in qms]
    elapsed = [0.0 for _ in qms]
    for idx, img in enumerate(images):
        for j in range(len(qms)):
            i = (j + r + idx) % len(qms)
            prof = Profiler()
            start = time.perf_counter()
            forward_image(model, img, qms[i], prof)
            elapsed[i] += time.perf_counter() - start
            profilers[i].append(prof)
    return [StageReport.from_profilers(p, w) for p, w in zip(profilers, elapsed)], elapsed


def _batch_round(model, images, qms, r, threads):
    reports = [None] * len(qms)
    elapsed = [0.0 for _ in qms]
    for j in range(len(qms)):
        i = (j + r) % len(qms)
        start = time.perf_counter()
        _, reports[i] = forward_arrays(model, images, qms[i], threads=threads)
        elapsed[i] = time.perf_counter() - start
    return reports, elapsed


def run_benchmark(
    cfg: ModelConfig,
    qm: QuarterMapConfig | None = None,
    batch: int = 8,
    repeats: int = 5,
    warmup: int = 2,
    threads: int = 1,
    seed: int = 0,
) -> StageReport:
    return run_benchmarks(cfg, [qm], batch, repeats, warmup, threads, seed)[0]


def output_deviation(reference, candidate) -> float:
    """Relative L2 distance between two lists of final feature maps."""
    num = sum(float(np.sum((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
              for a, b in zip(candidate, reference))
    den = sum(float(np.sum(np.asarray(b, np.float64) ** 2)) for b in reference)
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


def _row(axis: str, value: str, cfg: ModelConfig, qm, rep: StageReport, base: StageReport, deviation: float) -> dict:
    flops = rep.flops
    qd = qm.as_dict() if qm is not None else {"k": "", "m": 1, "n": 1, "upsample": "", "skip_policy": "", "layers": ""}
    row = {"axis": axis, "value": value, **qd}
    row.update(
        pruned_blocks=len(pruned_blocks(cfg.depths, qm)),
        images_per_second=rep.images_per_second,
        speedup=rep.images_per_second / base.images_per_second if base.images_per_second else 0.0,
        flops_total=flops["total"],
        flops_scan_path=flops["scan_path"],
        flop_ratio=flops["total"] / base.flops["total"],
        deviation=deviation,
        **{key: getattr(rep, key) for key in _TIMING_KEYS},
    )
    return {col: row[col] for col in CSV_COLUMNS}


def run_sweep(spec: SweepSpec, cfg: ModelConfig, base_qm: QuarterMapConfig | None = None) -> list[dict]:
    """One CSV row per configuration on ``spec.axis``, preceded by the baseline row."""
    base_qm = base_qm or QuarterMapConfig()
    labelled = spec.configs(base_qm)
    model = build_model(cfg)
    images = seeded_images(spec.batch, cfg.input_hw, spec.seed)
    reference, _ = forward_arrays(model, images, None)
    qms = [None] + [qm for _, qm in labelled]
    reports = run_benchmarks(
        cfg, qms, spec.batch, spec.repeats, spec.warmup, spec.threads, spec.seed, model=model, images=images
    )
    base = reports[0]
    rows = [_row(spec.axis.value, "baseline", cfg, None, base, base, 0.0)]
    for (label, qm), rep in zip(labelled, reports[1:]):
        outputs, _ = forward_arrays(model, images, qm)
        rows.append(_row(spec.axis.value, label, cfg, qm, rep, base, output_deviation(reference, outputs)))
    return rows


def write_csv(rows, stream=None, note: str | None = REPORT_NOTE) -> str:
    buf = stream if stream is not None else io.StringIO()
    if note:
        buf.write(f"# {note}\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue() if stream is None else ""


def write_json(payload, stream=None) -> str:
    doc = {"note": REPORT_NOTE, **payload} if isinstance(payload, dict) else {"note": REPORT_NOTE, "rows": payload}
    text = json.dumps(doc, indent=2, default=_jsonable)
    if stream is not None:
        stream.write(text + "\n")
    return text


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def benchmark_rows(cfg: ModelConfig, qm: QuarterMapConfig | None, batch=8, repeats=5, warmup=2, threads=1, seed=0):
    """Baseline and ``qm`` side by side, in the CSV schema, with the stage decomposition."""
    model = build_model(cfg)
    images = seeded_images(batch, cfg.input_hw, seed)
    base, rep = run_benchmarks(cfg, [None, qm], batch, repeats, warmup, threads, seed, model=model, images=images)
    reference, _ = forward_arrays(model, images, None)
    outputs, _ = forward_arrays(model, images, qm)
    return [
        _row("run", "baseline", cfg, None, base, base, 0.0),
        _row("run", "quartermap", cfg, qm, rep, base, output_deviation(reference, outputs)),
    ]

