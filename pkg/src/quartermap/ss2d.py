"""SS2D: cross-scan into four directional sequences, selective scan, cross-merge.

Traversal orders for an ``h x w`` grid (flat position ``p = i * w + j``):

* ``ROW_FORWARD``  row-major, ``i`` outer, ``j`` inner
* ``ROW_BACKWARD`` exact reversal of ``ROW_FORWARD``
* ``COL_FORWARD``  column-major, ``j`` outer, ``i`` inner
* ``COL_BACKWARD`` exact reversal of ``COL_FORWARD``

Cross-merge folds every sequence back through the inverse of its own order
and sums the four aligned maps in enum order, accumulating in float64 so the
result does not depend on anything but the inputs.
"""

from __future__ import annotations

from contextlib import nullcontext
from enum import IntEnum
from functools import lru_cache

import numpy as np

from . import ssm_core
from .ssm_core import SsmBlockParams
from .tensor_core import FeatureMap, Sequence

__all__ = [
    "ScanDirection",
    "DIRECTIONS",
    "traversal_order",
    "cross_scan",
    "cross_merge",
    "cross_scan_array",
    "cross_merge_array",
    "ss2d_forward",
    "ss2d_array",
]


class ScanDirection(IntEnum):
    ROW_FORWARD = 0
    ROW_BACKWARD = 1
    COL_FORWARD = 2
    COL_BACKWARD = 3

    @property
    def inverse_pair(self) -> ScanDirection:
        return ScanDirection(self ^ 1)


DIRECTIONS = tuple(ScanDirection)


@lru_cache(maxsize=256)
def _orders(h: int, w: int) -> np.ndarray:
    row = np.arange(h * w)
    col = row.reshape(h, w).T.reshape(-1)
    orders = np.stack([row, row[::-1], col, col[::-1]])
    orders.flags.writeable = False
    return orders


@lru_cache(maxsize=256)
def _inverse_orders(h: int, w: int) -> np.ndarray:
    orders = _orders(h, w)
    inv = np.empty_like(orders)
    for k in range(4):
        inv[k, orders[k]] = np.arange(h * w)
    inv.flags.writeable = False
    return inv


def traversal_order(h: int, w: int, direction: ScanDirection) -> np.ndarray:
    """Flat grid positions visited by ``direction``, in visiting order."""
    return _orders(h, w)[ScanDirection(direction)]


def cross_scan_array(x: np.ndarray) -> np.ndarray:
    """``(h, w, d)`` array to ``(4, h*w, d)`` directional sequences."""
    h, w, d = x.shape
    return x.reshape(h * w, d)[_orders(h, w)]


def cross_merge_array(ys: np.ndarray, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`cross_scan_array` followed by the four-way sum; float32 out."""
    ys = np.asarray(ys)
    if ys.ndim != 3 or ys.shape[0] != 4 or ys.shape[1] != h * w:
        raise ValueError(f"expected sequences of shape (4, {h * w}, d), got {ys.shape}")
    inv = _inverse_orders(h, w)
    acc = ys[0, inv[0]].astype(np.float64)
    for k in range(1, 4):
        acc += ys[k, inv[k]]
    return acc.astype(np.float32).reshape(h, w, ys.shape[2])


def cross_scan(x: FeatureMap) -> tuple[Sequence, Sequence, Sequence, Sequence]:
    seqs = cross_scan_array(x.array)
    return tuple(Sequence.from_array(s) for s in seqs)


def cross_merge(ys, h: int, w: int) -> FeatureMap:
    ys = list(ys)
    if len(ys) != 4:
        raise ValueError(f"cross_merge needs four sequences, got {len(ys)}")
    for k, y in enumerate(ys):
        if y.len != h * w:
            raise ValueError(
                f"sequence {ScanDirection(k).name} has length {y.len}, expected h*w = {h * w}"
            )
        if y.d != ys[0].d:
            raise ValueError("all four sequences must share the channel dimension")
    return FeatureMap.from_array(cross_merge_array(np.stack([y.array for y in ys]), h, w))


def _as_stacked(params) -> SsmBlockParams:
    if isinstance(params, SsmBlockParams):
        if params.a_log.ndim != 3 or params.a_log.shape[0] != 4:
            raise ValueError("stacked SS2D parameters need a leading axis of size 4")
        return params
    params = list(params)
    if len(params) != 4:
        raise ValueError(f"SS2D needs one parameter set per direction, got {len(params)}")
    return SsmBlockParams.stack(params)


def ss2d_array(x: np.ndarray, params, method: str = "parallel", profiler=None) -> np.ndarray:
    """SS2D on a raw ``(h, w, d)`` array. ``params``: four SsmBlockParams or a stacked one."""
    p = _as_stacked(params)
    h, w, d = x.shape
    if p.d != d:
        raise ValueError(f"feature map has {d} channels, SS2D parameters expect {p.d}")
    timer = profiler.section if profiler is not None else _null_section
    with timer("crossscan_merge"):
        seqs = cross_scan_array(x)
    with timer("scan"):
        ys = ssm_core.selective_scan_arrays(seqs, p, method=method)
    if profiler is not None:
        profiler.count_scan(h * w)
    with timer("crossscan_merge"):
        out = cross_merge_array(ys, h, w)
    return out


def ss2d_forward(x: FeatureMap, params, method: str = "parallel") -> FeatureMap:
    return FeatureMap.from_array(ss2d_array(x.array, params, method=method))


def _null_section(name):
    return nullcontext()
