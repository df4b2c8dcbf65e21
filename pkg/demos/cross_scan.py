"""
Cross-scan and cross-merge
==========================

SS2D unfolds a feature map into four 1D traversals, scans each, and folds
them back by summing.
"""

import numpy as np

from quartermap import ss2d
from quartermap.ssm_core import SsmBlockParams
from quartermap.tensor_core import FeatureMap, fill_seeded

# a 2x2 single-channel map holding 1..4 in row-major order
x = FeatureMap(2, 2, 1, [1, 2, 3, 4])
for direction, seq in zip(ss2d.DIRECTIONS, ss2d.cross_scan(x)):
    print(f"{direction.name:13s}", seq.data.tolist())

# merging the untouched traversals counts every pixel four times
y = fill_seeded(5, 7, 3, 0)
merged = ss2d.cross_merge(ss2d.cross_scan(y), 5, 7)
print("merge(scan(x)) == 4x:", np.array_equal(merged.data, 4 * y.data))

# a full SS2D pass with one parameter set per direction
params = [SsmBlockParams.seeded(3, 4, k, d_skip=None) for k in range(4)]
out = ss2d.ss2d_forward(y, params)
print("ss2d output", out.shape, "finite:", out.is_finite())
