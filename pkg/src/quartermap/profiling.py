"""Wall-clock attribution for one forward pass and the StageReport record."""

from __future__ import annotations

import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field

__all__ = ["Profiler", "StageReport", "SECTIONS"]

# sections the model brackets; anything else in a forward pass lands in other_ms
SECTIONS = ("scan", "prune_upsample", "crossscan_merge")


class Profiler:
    """Accumulates monotonic-clock time per named section for a single image."""

    def __init__(self):
        self.seconds: dict[str, float] = defaultdict(float)
        self.scan_lengths: dict[int, list[int]] = defaultdict(list)
        self.block: int | None = None
        self.total: float = 0.0

    @contextmanager
    def section(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] += time.perf_counter() - start

    def count_scan(self, length: int) -> None:
        self.scan_lengths[-1 if self.block is None else self.block].append(length)


@dataclass
class StageReport:
    """Timing decomposition and work counters for forward passes of one batch.

    Millisecond fields are per forward pass over the whole batch (summed over
    items), and medians when several repeats were timed. ``other_ms`` is the
    unattributed remainder so the components add up to ``total_ms``.
    """

    scan_kernel_ms: float = 0.0
    prune_upsample_ms: float = 0.0
    crossscan_merge_ms: float = 0.0
    other_ms: float = 0.0
    total_ms: float = 0.0
    images_per_second: float = 0.0
    batch: int = 0
    repeats: int = 1
    flops: dict = field(default_factory=dict)
    scan_lengths: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_profilers(cls, profilers, wall_seconds: float, flops=None) -> StageReport:
        profilers = list(profilers)
        scan = sum(p.seconds["scan"] for p in profilers)
        prune = sum(p.seconds["prune_upsample"] for p in profilers)
        merge = sum(p.seconds["crossscan_merge"] for p in profilers)
        total = sum(p.total for p in profilers) or wall_seconds
        lengths = {}
        if profilers:
            lengths = {b: v[0] for b, v in profilers[0].scan_lengths.items()}
        return cls(
            scan_kernel_ms=scan * 1e3,
            prune_upsample_ms=prune * 1e3,
            crossscan_merge_ms=merge * 1e3,
            other_ms=max(total - scan - prune - merge, 0.0) * 1e3,
            total_ms=total * 1e3,
            images_per_second=len(profilers) / wall_seconds if wall_seconds > 0 else 0.0,
            batch=len(profilers),
            flops=dict(flops or {}),
            scan_lengths=lengths,
        )

    def as_dict(self) -> dict:
        return {
            "scan_kernel_ms": self.scan_kernel_ms,
            "prune_upsample_ms": self.prune_upsample_ms,
            "crossscan_merge_ms": self.crossscan_merge_ms,
            "other_ms": self.other_ms,
            "total_ms": self.total_ms,
            "images_per_second": self.images_per_second,
            "batch": self.batch,
            "repeats": self.repeats,
            "flops": self.flops,
            "scan_lengths": {str(k): v for k, v in self.scan_lengths.items()},
        }
