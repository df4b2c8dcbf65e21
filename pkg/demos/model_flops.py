"""
Backbone forward pass and FLOP accounting
=========================================

A seeded four-stage backbone, untrained; the point is the shapes, the
timing split and the analytic work counts.
"""

from quartermap import model
from quartermap.pruning import QuarterMapConfig
from quartermap.tensor_core import fill_seeded

cfg = model.preset("tiny", input_hw=128)
for s in range(4):
    print(f"stage {s}: {cfg.extent(s)}x{cfg.extent(s)} x {cfg.dim(s)}")

net = model.build_model(cfg)
batch = [fill_seeded(128, 128, 3, 5 + i) for i in range(2)]
outs, report = model.forward(net, batch, QuarterMapConfig(k=3))
print("final features", outs[0].shape)
print(f"scan {report.scan_kernel_ms:.0f} ms, prune/upsample {report.prune_upsample_ms:.1f} ms, "
      f"total {report.total_ms:.0f} ms")
print("scan lengths per block", report.scan_lengths)

# work removed by pruning every third eligible block
base = model.flop_count(cfg)
pruned = model.flop_count(cfg, QuarterMapConfig(k=3))
print(f"FLOPs {base.total / 1e9:.2f} G -> {pruned.total / 1e9:.2f} G "
      f"({100 * (1 - pruned.total / base.total):.1f}% less)")
for row in pruned.stages():
    print(row)
