"""A seeded VMamba-shaped backbone built from SS2D blocks.

Four stages; stage ``s`` (0-based) runs at ``input_hw / (patch * 2**s)`` per
axis with ``base_dim * 2**s`` channels, so each stage boundary quarters the
sequence length and doubles the width. Each block is ``x + SS2D(rms(x))``, or
``x + QuarterMap(SS2D)(rms(x))`` when the block-selection rule picks it, where
``rms`` rescales every spatial position to unit root-mean-square over
channels. The selective branch is cubic in its input (``b_t`` and ``c_t`` are
both linear in ``u``), so without that rescaling activations diverge within a
few blocks. Weights come from the repo generator; nothing here is trained.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import pruning, ss2d
from .profiling import Profiler, StageReport
from .pruning import QuarterMapConfig, Upsample
from .ssm_core import SCAN_METHODS, SsmBlockParams
from .tensor_core import FeatureMap, seeded_uniform, splitmix64, write_qmap

__all__ = [
    "ModelConfig",
    "Model",
    "PRESETS",
    "preset",
    "build_model",
    "forward",
    "forward_arrays",
    "forward_image",
    "flop_count",
    "FlopTable",
    "export_weights",
    "SCAN_FLOPS_PER_ELEMENT",
    "PROJECTION_FLOPS_PER_ELEMENT",
    "UPSAMPLE_FLOPS_PER_ELEMENT",
]

IN_CHANS = 3
NUM_STAGES = 4

# per (timestep, channel, state) and direction: delta*A, exp, expm1, divide,
# times b, times u, recurrence multiply-add (2), readout multiply-add (2)
SCAN_FLOPS_PER_ELEMENT = 10
# b_t and c_t projections, one multiply-add each per (timestep, channel, state)
PROJECTION_FLOPS_PER_ELEMENT = 2
# scale on the SS2D branch output relative to the residual stream
BRANCH_GAIN = 0.1
# per output element of the upsampled map
UPSAMPLE_FLOPS_PER_ELEMENT = {Upsample.NEAREST: 0, Upsample.BILINEAR: 8, Upsample.BICUBIC: 32}


@dataclass(frozen=True)
class ModelConfig:
    depths: tuple[int, ...] = (2, 2, 8, 2)
    base_dim: int = 96
    patch: int = 4
    input_hw: int = 128
    n_state: int = 4
    seed: int = 0
    scan_method: str = "sequential"

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        if len(self.depths) != NUM_STAGES or min(self.depths) < 1:
            raise ValueError(f"depths must be {NUM_STAGES} positive ints, got {self.depths}")
        for name in ("base_dim", "patch", "input_hw", "n_state"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        factor = self.patch * 2 ** (NUM_STAGES - 1)
        if self.input_hw % factor:
            raise ValueError(
                f"input_hw={self.input_hw} must be divisible by patch * 2**{NUM_STAGES - 1} = {factor}"
            )
        if self.scan_method not in SCAN_METHODS:
            raise ValueError(f"scan_method must be one of {SCAN_METHODS}, got {self.scan_method!r}")

    def extent(self, stage: int) -> int:
        return self.input_hw // (self.patch * 2**stage)

    def dim(self, stage: int) -> int:
        return self.base_dim * 2**stage

    @property
    def num_blocks(self) -> int:
        return sum(self.depths)

    def block_layout(self):
        """``(global_idx, stage, block_in_stage)`` in network order."""
        g = 0
        for stage, depth in enumerate(self.depths):
            for b in range(depth):
                yield g, stage, b
                g += 1


PRESETS = {
    "tiny": dict(depths=(2, 2, 8, 2), base_dim=96),
    "small": dict(depths=(2, 2, 15, 2), base_dim=96),
    "base": dict(depths=(2, 2, 15, 2), base_dim=128),
    "micro": dict(depths=(1, 1, 1, 1), base_dim=8),
}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose one of {sorted(PRESETS)}")
    kwargs = dict(PRESETS[name])
    if name == "micro":
        kwargs.setdefault("input_hw", 32)
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


@dataclass(eq=False)
class Model:
    cfg: ModelConfig
    patch_embed: np.ndarray
    blocks: list[list[SsmBlockParams]] = field(default_factory=list)
    downsample: list[np.ndarray] = field(default_factory=list)

    def named_arrays(self):
        yield "patch_embed", self.patch_embed
        for stage, stage_blocks in enumerate(self.blocks):
            for b, stacked in enumerate(stage_blocks):
                for name, arr in stacked.arrays().items():
                    for direction in ss2d.DIRECTIONS:
                        yield f"stage{stage}.block{b}.{direction.name.lower()}.{name}", arr[direction]
        for i, proj in enumerate(self.downsample):
            yield f"downsample{i}", proj


def _fan_in_uniform(shape, seed: int) -> np.ndarray:
    # unit-variance gain: U[-1, 1] has variance 1/3
    return seeded_uniform(shape, seed) * np.float32(np.sqrt(3.0 / shape[0]))


def build_model(cfg: ModelConfig) -> Model:
    seeds = iter(int(s) for s in splitmix64(cfg.seed, 4 * cfg.num_blocks + NUM_STAGES + 1))
    patch_in = cfg.patch * cfg.patch * IN_CHANS
    embed = _fan_in_uniform((patch_in, cfg.base_dim), next(seeds))
    blocks = []
    for stage, depth in enumerate(cfg.depths):
        d = cfg.dim(stage)
        stage_blocks = []
        for _ in range(depth):
            dirs = [
                SsmBlockParams.seeded(
                    d, cfg.n_state, next(seeds) >> 3, proj_scale=float(np.sqrt(3.0 / d)), d_skip=1.0
                )
                for _ in ss2d.DIRECTIONS
            ]
            # the readout and the skip path carry the branch gain
            dirs = [
                SsmBlockParams(
                    p.a_log, p.w_b, p.w_c * BRANCH_GAIN, p.w_delta, p.delta_bias, p.d_skip * BRANCH_GAIN
                )
                for p in dirs
            ]
            stage_blocks.append(SsmBlockParams.stack(dirs))
        blocks.append(stage_blocks)
    downsample = [
        _fan_in_uniform((4 * cfg.dim(s), 2 * cfg.dim(s)), next(seeds)) for s in range(NUM_STAGES - 1)
    ]
    return Model(cfg, embed, blocks, downsample)


def _patch_embed(image: np.ndarray, cfg: ModelConfig, weight: np.ndarray) -> np.ndarray:
    p, hw = cfg.patch, cfg.input_hw
    g = hw // p
    patches = image.reshape(g, p, g, p, IN_CHANS).transpose(0, 2, 1, 3, 4).reshape(g, g, p * p * IN_CHANS)
    return (patches @ weight).astype(np.float32)


def _downsample(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    h, w, d = x.shape
    folded = x.reshape(h // 2, 2, w // 2, 2, d).transpose(0, 2, 1, 3, 4).reshape(h // 2, w // 2, 4 * d)
    return (folded @ weight).astype(np.float32)


def _rms_normalize(x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    scale = 1.0 / np.sqrt(np.mean(np.square(x, dtype=np.float64), axis=-1, keepdims=True) + eps)
    return (x * scale).astype(np.float32)


def forward_image(model: Model, image: np.ndarray, qm: QuarterMapConfig | None, profiler: Profiler):
    """One image through the backbone; timings and scan lengths land in ``profiler``."""
    cfg = model.cfg
    _check_input(image, cfg)
    start = time.perf_counter()
    selected = pruning.pruned_blocks(cfg.depths, qm)
    x = _patch_embed(image, cfg, model.patch_embed)
    for g, stage, b in cfg.block_layout():
        if b == 0 and stage > 0:
            x = _downsample(x, model.downsample[stage - 1])
        params = model.blocks[stage][b]
        profiler.block = g
        u = _rms_normalize(x)
        if g in selected:
            delta = pruning.quartermap_ss2d_array(u, params, qm, method=cfg.scan_method, profiler=profiler)
        else:
            delta = ss2d.ss2d_array(u, params, method=cfg.scan_method, profiler=profiler)
        x = x + delta
    profiler.block = None
    profiler.total += time.perf_counter() - start
    return x


def _check_input(img: np.ndarray, cfg: ModelConfig) -> None:
    expected = (cfg.input_hw, cfg.input_hw, IN_CHANS)
    if img.shape != expected:
        raise ValueError(f"input image has shape {img.shape}, model expects {expected}")


def forward_arrays(model: Model, images, qm: QuarterMapConfig | None = None, threads: int = 1):
    """Array-level forward; returns ``(outputs, StageReport)``."""
    images = [np.asarray(img, dtype=np.float32) for img in images]
    for img in images:
        _check_input(img, model.cfg)
    profilers = [Profiler() for _ in images]
    wall = time.perf_counter()
    if threads > 1 and len(images) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(lambda ip: forward_image(model, ip[0], qm, ip[1]), zip(images, profilers)))
    else:
        outputs = [forward_image(model, img, qm, prof) for img, prof in zip(images, profilers)]
    wall = time.perf_counter() - wall
    return outputs, StageReport.from_profilers(profilers, wall)


def forward(model: Model, batch, qm: QuarterMapConfig | None = None, threads: int = 1):
    """Run every FeatureMap in ``batch`` through the backbone.

    Returns the final-stage feature maps and a StageReport covering the batch.
    """
    arrays = []
    for fmap in batch:
        if not isinstance(fmap, FeatureMap):
            raise TypeError(f"forward expects FeatureMaps, got {type(fmap).__name__}")
        arrays.append(fmap.array)
    outputs, report = forward_arrays(model, arrays, qm, threads=threads)
    return [FeatureMap.from_array(o) for o in outputs], report


@dataclass
class FlopTable:
    """Analytic FLOP counts. ``blocks`` has one row per SS2D block in network order."""

    blocks: list[dict]
    embed: int
    downsample: list[int]

    @property
    def total(self) -> int:
        return self.embed + sum(self.downsample) + sum(r["total"] for r in self.blocks)

    @property
    def scan_path_total(self) -> int:
        return sum(r["scan_path"] for r in self.blocks)

    def stages(self) -> list[dict]:
        rows = []
        for stage in sorted({r["stage"] for r in self.blocks}):
            members = [r for r in self.blocks if r["stage"] == stage]
            row = {"stage": stage, "blocks": len(members)}
            for key in ("scan", "projection", "merge", "upsample", "residual", "scan_path", "total"):
                row[key] = sum(r[key] for r in members)
            row["downsample"] = self.downsample[stage - 1] if stage > 0 else self.embed
            rows.append(row)
        return rows

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "scan_path": self.scan_path_total,
            "embed": self.embed,
            "downsample": list(self.downsample),
            "stages": self.stages(),
        }


def block_flops(h: int, w: int, d: int, n_state: int, qm: QuarterMapConfig | None = None) -> dict:
    """FLOPs of one residual SS2D block at an ``h x w x d`` input, optionally pruned."""
    if qm is not None:
        sh, sw = pruning.pruned_extent(h, qm.m, qm.n), pruning.pruned_extent(w, qm.m, qm.n)
    else:
        sh, sw = h, w
    length = sh * sw
    dirs = len(ss2d.DIRECTIONS)
    scan = dirs * length * d * n_state * SCAN_FLOPS_PER_ELEMENT
    projection = dirs * length * d * n_state * PROJECTION_FLOPS_PER_ELEMENT
    merge = (dirs - 1) * length * d
    upsample = 0
    if qm is not None and (sh, sw) != (h, w):
        upsample = UPSAMPLE_FLOPS_PER_ELEMENT[qm.upsample] * h * w * d
    residual = h * w * d
    scan_path = scan + projection + merge
    return {
        "length": length,
        "scan": scan,
        "projection": projection,
        "merge": merge,
        "upsample": upsample,
        "residual": residual,
        "scan_path": scan_path,
        "total": scan_path + upsample + residual,
    }


def flop_count(cfg: ModelConfig, qm: QuarterMapConfig | None = None) -> FlopTable:
    selected = pruning.pruned_blocks(cfg.depths, qm)
    rows = []
    for g, stage, b in cfg.block_layout():
        e, d = cfg.extent(stage), cfg.dim(stage)
        row = {"block": g, "stage": stage, "block_in_stage": b, "pruned": g in selected}
        row.update(block_flops(e, e, d, cfg.n_state, qm if g in selected else None))
        rows.append(row)
    g0 = cfg.extent(0)
    embed = 2 * g0 * g0 * cfg.patch * cfg.patch * IN_CHANS * cfg.base_dim
    down = []
    for s in range(1, NUM_STAGES):
        e, d_in = cfg.extent(s), cfg.dim(s - 1)
        down.append(2 * e * e * 4 * d_in * 2 * d_in)
    return FlopTable(rows, embed, down)


def export_weights(model: Model, directory) -> Path:
    """One QMAP record per parameter array plus ``manifest.json``.

    2-D arrays are stored as ``rows x cols x 1`` and vectors as ``len x 1 x 1``;
    the manifest keeps the true shape.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, arr in model.named_arrays():
        arr = np.asarray(arr, dtype=np.float32)
        shaped = arr.reshape(arr.shape + (1,) * (3 - arr.ndim))
        fname = name + ".qmap"
        write_qmap(directory / fname, FeatureMap.from_array(shaped))
        entries.append({"name": name, "shape": list(arr.shape), "file": fname})
    manifest = {"config": asdict(model.cfg), "arrays": entries}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path
