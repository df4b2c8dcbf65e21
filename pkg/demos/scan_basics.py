"""
Selective scan, two ways
========================

One direction of the S6 recurrence evaluated by a plain loop and by the
associative (Blelloch) scan, plus the zero-order-hold step they share.
"""

import numpy as np

from quartermap import ssm_core
from quartermap.tensor_core import Sequence, seeded_uniform

# a single hold interval: A = -1, delta = 1, b = 1
a_bar, b_bar = ssm_core.zoh_discretize(1.0, -1.0, 1.0)
print("a_bar", a_bar, "b_bar", b_bar)  # exp(-1) and 1 - exp(-1)

# the combine rule behind the parallel scan: (a1, x1) then (a2, x2)
e = ssm_core.combine(ssm_core.ScanElement(0.5, 1.0), ssm_core.ScanElement(0.25, 2.0))
print("combined", e)

# seeded parameters for D=4 channels and N=8 states
p = ssm_core.SsmBlockParams.seeded(4, 8, seed=7, d_skip=None)
u = Sequence.from_array(seeded_uniform((256, 4), 7))

seq = ssm_core.selective_scan_sequential(u, p).array
par = ssm_core.selective_scan_parallel(u, p).array
print("output shape", par.shape)
print("max |parallel - sequential|", float(np.max(np.abs(par - seq))))

# same thing from the raw pieces: discretize, then either recurrence
a, bx, c_t = ssm_core.discretize_sequence(u.array, p)
h_loop = ssm_core.sequential_recurrence(a, bx)
h_tree = ssm_core.associative_scan(a, bx)
print("state agreement in float64", float(np.max(np.abs(h_loop - h_tree))))
