"""Selective state space scans, SS2D and QuarterMap activation pruning in NumPy.

Modules, bottom up:

* ``tensor_core``  FeatureMap / Sequence containers, the seeded generator, QMAP files
* ``ssm_core``     S6 discretization, selection and the two scan evaluators
* ``ss2d``         cross-scan, per-direction selective scan, cross-merge
* ``pruning``      QuarterMap prune/upsample and block selection
* ``model``        seeded four-stage backbone, forward pass, FLOP accounting
* ``bench``        timing, sweeps and reporters; ``validation`` runs the invariant suites
"""

from .bench import SweepAxis, SweepSpec, run_benchmark, run_benchmarks, run_sweep
from .model import Model, ModelConfig, build_model, flop_count, forward, preset
from .profiling import StageReport
from .pruning import (
    QuarterMapConfig,
    SkipPolicy,
    Upsample,
    prune,
    quartermap_ss2d,
    retained_indices,
    should_prune,
    upsample_bicubic,
    upsample_bilinear,
    upsample_nearest,
)
from .ss2d import ScanDirection, cross_merge, cross_scan, ss2d_forward
from .ssm_core import (
    ScanElement,
    SsmBlockParams,
    combine,
    select_params,
    selective_scan_parallel,
    selective_scan_sequential,
    softplus,
    ssm_step,
    zoh_discretize,
)
from .tensor_core import FeatureMap, Sequence, fill_seeded, get, read_qmap, set_value, write_qmap

__version__ = "0.1.0"

__all__ = [
    "FeatureMap",
    "Sequence",
    "get",
    "set_value",
    "fill_seeded",
    "read_qmap",
    "write_qmap",
    "SsmBlockParams",
    "ScanElement",
    "combine",
    "softplus",
    "zoh_discretize",
    "select_params",
    "ssm_step",
    "selective_scan_sequential",
    "selective_scan_parallel",
    "ScanDirection",
    "cross_scan",
    "cross_merge",
    "ss2d_forward",
    "QuarterMapConfig",
    "Upsample",
    "SkipPolicy",
    "retained_indices",
    "prune",
    "upsample_nearest",
    "upsample_bilinear",
    "upsample_bicubic",
    "should_prune",
    "quartermap_ss2d",
    "ModelConfig",
    "Model",
    "preset",
    "build_model",
    "forward",
    "flop_count",
    "StageReport",
    "SweepAxis",
    "SweepSpec",
    "run_benchmark",
    "run_benchmarks",
    "run_sweep",
]
