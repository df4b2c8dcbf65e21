"""
Pruning, upsampling and block selection
=======================================

QuarterMap keeps n of every m rows and columns before SS2D and restores the
grid afterwards. Which blocks get it is decided by a modular rule.
"""

import numpy as np

from quartermap import pruning
from quartermap.pruning import QuarterMapConfig
from quartermap.ssm_core import SsmBlockParams
from quartermap.tensor_core import FeatureMap, fill_seeded

# kept indices along one axis
print(pruning.retained_indices(8, 2, 1))  # [0, 2, 4, 6]
print(pruning.retained_indices(7, 2, 1))  # ceiling: still four
print(pruning.retained_indices(6, 3, 2))  # two of every three

x = fill_seeded(8, 8, 2, 1)
small = pruning.prune(x, 2, 1)
print("pruned", x.shape, "->", small.shape)

# three ways back up to 8x8
for method in pruning.Upsample:
    up = pruning.upsample_array(small.array, 8, 8, method)
    err = float(np.sqrt(np.mean((up - x.array) ** 2)))
    print(f"{method.value:9s} rms error vs original {err:.3f}")

# bilinear on sources {0, 1}: half-pixel centres, clamped at the edges
print(pruning.upsample_bilinear(FeatureMap(2, 1, 1, [0.0, 1.0]), 4, 1).data.tolist())

# every third eligible block of a [2, 2, 8, 2] backbone, first layer skipped
depths = (2, 2, 8, 2)
print("k=3 first-layer:", sorted(pruning.pruned_blocks(depths, QuarterMapConfig(k=3))))
print("k=1 first-two:  ", sorted(pruning.pruned_blocks(depths, QuarterMapConfig(k=1, skip_policy="first-two"))))

# the whole transform around SS2D; the output keeps the input shape
params = [SsmBlockParams.seeded(2, 4, k, d_skip=None) for k in range(4)]
out = pruning.quartermap_ss2d(x, params, QuarterMapConfig())
print("quartermap_ss2d", out.shape)
