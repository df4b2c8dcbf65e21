"""
Throughput and an ablation sweep
================================

Small enough to finish in a few seconds on the micro preset. For numbers
worth quoting use the tiny preset at 128x128 (``bench run``).
"""

import sys

from quartermap import bench
from quartermap.model import preset
from quartermap.pruning import QuarterMapConfig

cfg = preset("micro")

# baseline and QuarterMap side by side, in the CSV schema
rows = bench.benchmark_rows(cfg, QuarterMapConfig(k=1), batch=4, repeats=3, warmup=1)
bench.write_csv(rows, sys.stdout)

# deviation from the unpruned output grows as fewer pixels survive
spec = bench.SweepSpec("mn", [(1, 1), (2, 1), (4, 1)], repeats=3, warmup=1, batch=4)
for row in bench.run_sweep(spec, cfg, QuarterMapConfig(k=1)):
    print(f"{row['value']:9s} {row['images_per_second']:8.1f} img/s  deviation {row['deviation']:.3f}")
