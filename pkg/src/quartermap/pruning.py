"""QuarterMap: spatial activation pruning around SS2D, plus the block-selection rule.

Per selected block the feature map is restricted to a sub-grid before the
cross-scan, SS2D runs on the smaller map, and the cross-merge output is
upsampled back to full resolution. Along each axis the grid keeps the first
``n`` indices of every consecutive block of ``m``; with ``m=2, n=1`` this is
every other row and column starting at 0, i.e. a quarter of the positions.
"""

from __future__ import annotations

import math
from contextlib import nullcontext
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import ss2d
from .tensor_core import FeatureMap

__all__ = [
    "Upsample",
    "SkipPolicy",
    "QuarterMapConfig",
    "retained_indices",
    "prune",
    "prune_array",
    "upsample_nearest",
    "upsample_bilinear",
    "upsample_bicubic",
    "upsample_array",
    "should_prune",
    "pruned_blocks",
    "quartermap_ss2d",
    "quartermap_ss2d_array",
    "KEYS_A",
]

KEYS_A = -0.5


class Upsample(str, Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"


class SkipPolicy(str, Enum):
    EXCLUDE_FIRST_LAYER = "first-layer"
    EXCLUDE_FIRST_TWO_BLOCKS = "first-two"


@dataclass(frozen=True)
class QuarterMapConfig:
    """Where and how hard to prune.

    ``layers``, when given, switches off the interval rule: every block of the
    listed (0-based) layers is pruned and nothing else. It exists for the
    per-layer ablation.
    """

    k: int = 3
    m: int = 2
    n: int = 1
    upsample: Upsample = Upsample.NEAREST
    skip_policy: SkipPolicy = SkipPolicy.EXCLUDE_FIRST_LAYER
    layers: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "upsample", Upsample(self.upsample))
        object.__setattr__(self, "skip_policy", SkipPolicy(self.skip_policy))
        if self.layers is not None:
            object.__setattr__(self, "layers", tuple(sorted({int(v) for v in self.layers})))
        if self.k < 1:
            raise ValueError(f"block selection interval k must be >= 1, got {self.k}")
        if self.m < 1 or self.n < 1:
            raise ValueError(f"m and n must be >= 1, got m={self.m}, n={self.n}")
        if self.n > self.m:
            raise ValueError(f"cannot retain n={self.n} of every m={self.m} elements")

    @property
    def disabled(self) -> bool:
        return self.m == 1

    def with_(self, **changes) -> QuarterMapConfig:
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "m": self.m,
            "n": self.n,
            "upsample": self.upsample.value,
            "skip_policy": self.skip_policy.value,
            "layers": "" if self.layers is None else ";".join(map(str, self.layers)),
        }


def retained_indices(extent: int, m: int, n: int) -> list[int]:
    if extent < 1:
        raise ValueError(f"extent must be >= 1, got {extent}")
    if m < 1 or n < 1:
        raise ValueError(f"m and n must be >= 1, got m={m}, n={n}")
    if n > m:
        raise ValueError(f"cannot retain n={n} of every m={m} elements")
    return [i for i in range(extent) if i % m < n]


def prune_array(x: np.ndarray, m: int, n: int) -> np.ndarray:
    h, w, _ = x.shape
    if m == 1:
        return x.copy()
    rows = np.asarray(retained_indices(h, m, n))
    cols = np.asarray(retained_indices(w, m, n))
    return x[np.ix_(rows, cols)]


def prune(x: FeatureMap, m: int, n: int) -> FeatureMap:
    return FeatureMap.from_array(prune_array(x.array, m, n))


def _check_target(src: tuple[int, int], target_h: int, target_w: int) -> None:
    if target_h < src[0] or target_w < src[1]:
        raise ValueError(
            f"upsampling cannot shrink {src[0]}x{src[1]} to {target_h}x{target_w}"
        )


def _nearest_index(src: int, dst: int) -> np.ndarray:
    return (np.arange(dst) * src) // dst


def _half_pixel_coord(src: int, dst: int) -> np.ndarray:
    coord = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    return np.clip(coord, 0.0, src - 1)


def _linear_taps(src: int, dst: int):
    coord = _half_pixel_coord(src, dst)
    i0 = np.floor(coord).astype(np.int64)
    frac = coord - i0
    i1 = np.minimum(i0 + 1, src - 1)
    return (i0, i1), (1.0 - frac, frac)


def _keys_weights(t: np.ndarray, a: float = KEYS_A) -> np.ndarray:
    t = np.abs(t)
    near = ((a + 2) * t - (a + 3)) * t * t + 1
    far = ((a * t - 5 * a) * t + 8 * a) * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _cubic_taps(src: int, dst: int):
    coord = _half_pixel_coord(src, dst)
    base = np.floor(coord).astype(np.int64)
    frac = coord - base
    idx, wts = [], []
    for off in (-1, 0, 1, 2):
        idx.append(np.clip(base + off, 0, src - 1))
        wts.append(_keys_weights(frac - off))
    return tuple(idx), tuple(wts)


def upsample_array(y: np.ndarray, target_h: int, target_w: int, method=Upsample.NEAREST) -> np.ndarray:
    method = Upsample(method)
    h, w, d = y.shape
    _check_target((h, w), target_h, target_w)
    if (h, w) == (target_h, target_w):
        return y.copy()
    if method is Upsample.NEAREST:
        return y[np.ix_(_nearest_index(h, target_h), _nearest_index(w, target_w))]
    taps = _linear_taps if method is Upsample.BILINEAR else _cubic_taps
    ri, rw = taps(h, target_h)
    ci, cw = taps(w, target_w)
    out = np.zeros((target_h, target_w, d), dtype=np.float64)
    # direct 2-D neighbourhood sum: 2x2 terms for bilinear, 4x4 for bicubic
    for r_idx, r_wt in zip(ri, rw):
        for c_idx, c_wt in zip(ci, cw):
            weight = r_wt[:, None, None] * c_wt[None, :, None]
            out += weight * y[np.ix_(r_idx, c_idx)]
    return out.astype(np.float32)


def upsample_nearest(y: FeatureMap, target_h: int, target_w: int) -> FeatureMap:
    return FeatureMap.from_array(upsample_array(y.array, target_h, target_w, Upsample.NEAREST))


def upsample_bilinear(y: FeatureMap, target_h: int, target_w: int) -> FeatureMap:
    return FeatureMap.from_array(upsample_array(y.array, target_h, target_w, Upsample.BILINEAR))


def upsample_bicubic(y: FeatureMap, target_h: int, target_w: int) -> FeatureMap:
    return FeatureMap.from_array(upsample_array(y.array, target_h, target_w, Upsample.BICUBIC))


def should_prune(
    global_block_idx: int,
    layer_idx: int,
    block_in_layer: int,
    cfg: QuarterMapConfig,
    depths,
) -> bool:
    """Whether QuarterMap applies to a block. Layers and blocks are 0-based.

    ``EXCLUDE_FIRST_LAYER`` numbers the blocks after layer 0 as ``e = 0, 1, ...``
    and prunes when ``e % k == k - 1``; ``EXCLUDE_FIRST_TWO_BLOCKS`` does the
    same starting after the first two blocks of the network.
    """
    depths = list(depths)
    if not 0 <= layer_idx < len(depths) or not 0 <= block_in_layer < depths[layer_idx]:
        raise ValueError(f"block ({layer_idx}, {block_in_layer}) does not exist in depths {depths}")
    if global_block_idx != sum(depths[:layer_idx]) + block_in_layer:
        raise ValueError(
            f"global index {global_block_idx} is inconsistent with layer {layer_idx}, "
            f"block {block_in_layer} for depths {depths}"
        )
    if cfg.layers is not None:
        return layer_idx in cfg.layers
    if cfg.skip_policy is SkipPolicy.EXCLUDE_FIRST_LAYER:
        if layer_idx == 0:
            return False
        e = global_block_idx - depths[0]
    else:
        if global_block_idx < 2:
            return False
        e = global_block_idx - 2
    return e % cfg.k == cfg.k - 1


def pruned_blocks(depths, cfg: QuarterMapConfig | None) -> set[int]:
    """Global indices of every block ``should_prune`` selects."""
    if cfg is None:
        return set()
    out, g = set(), 0
    for layer, depth in enumerate(depths):
        for b in range(depth):
            if should_prune(g, layer, b, cfg, depths):
                out.add(g)
            g += 1
    return out


def pruned_extent(extent: int, m: int, n: int) -> int:
    """Length of :func:`retained_indices` without building it."""
    full, rem = divmod(extent, m)
    return full * n + min(n, rem)


def quartermap_ss2d_array(x: np.ndarray, params, cfg: QuarterMapConfig, method="parallel", profiler=None):
    h, w, _ = x.shape
    timer = profiler.section if profiler is not None else (lambda name: nullcontext())
    with timer("prune_upsample"):
        small = prune_array(x, cfg.m, cfg.n)
    y = ss2d.ss2d_array(small, params, method=method, profiler=profiler)
    with timer("prune_upsample"):
        out = upsample_array(y, h, w, cfg.upsample)
    return out


def quartermap_ss2d(x: FeatureMap, params, cfg: QuarterMapConfig, method="parallel") -> FeatureMap:
    return FeatureMap.from_array(quartermap_ss2d_array(x.array, params, cfg, method=method))


def ceil_shape(h: int, w: int, m: int, n: int = 1) -> tuple[int, int]:
    return math.ceil(h * n / m), math.ceil(w * n / m)
