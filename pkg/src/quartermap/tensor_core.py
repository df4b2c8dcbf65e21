"""Dense feature-map containers, the seeded generator and the QMAP fixture format.

Layout is row-major with channels fastest: element ``(i, j, c)`` of an
``h x w x d`` map lives at flat index ``(i * w + j) * d + c``. That is exactly
C order for a NumPy array of shape ``(h, w, d)``, so the flat buffer and the
3-D view share memory.

The generator is SplitMix64 evaluated in counter mode: output ``k`` for seed
``s`` is ``mix64(s + (k + 1) * 0x9E3779B97F4A7C15)`` with the usual two
xor-shift-multiply rounds. The top 24 bits of each output give an integer
``q`` in ``[0, 2**24)`` and the float is ``q / 2**23 - 1``, which is exact in
float32 and lies in ``[-1, 1)``. Everything is plain ``uint64`` arithmetic so
the stream is identical on every platform.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "FeatureMap",
    "Sequence",
    "get",
    "set_value",
    "fill_seeded",
    "seeded_uniform",
    "splitmix64",
    "write_qmap",
    "read_qmap",
    "QMAP_MAGIC",
]

QMAP_MAGIC = b"QMAP"
_HEADER = struct.Struct("<4sIII")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _frozen_f32(values) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float32).reshape(-1)
    if arr.base is not None or not arr.flags.owndata:
        arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """An ``h x w x d`` float32 activation map (row-major, channel fastest)."""

    h: int
    w: int
    d: int
    data: np.ndarray

    def __post_init__(self):
        for name in ("h", "w", "d"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"FeatureMap.{name} must be a positive integer, got {v!r}")
        data = _frozen_f32(self.data)
        if data.size != self.h * self.w * self.d:
            raise ValueError(
                f"FeatureMap data has {data.size} elements, expected "
                f"h*w*d = {self.h}*{self.w}*{self.d} = {self.h * self.w * self.d}"
            )
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr) -> FeatureMap:
        arr = np.asarray(arr)
        if arr.ndim != 3:
            raise ValueError(f"expected an (h, w, d) array, got shape {arr.shape}")
        return cls(arr.shape[0], arr.shape[1], arr.shape[2], arr)

    @classmethod
    def zeros(cls, h: int, w: int, d: int) -> FeatureMap:
        return cls(h, w, d, np.zeros(h * w * d, dtype=np.float32))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.h, self.w, self.d)

    @property
    def array(self) -> np.ndarray:
        """Read-only ``(h, w, d)`` view of the data."""
        return self.data.reshape(self.h, self.w, self.d)

    def get(self, i: int, j: int, c: int) -> float:
        return get(self, i, j, c)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def __repr__(self) -> str:
        return f"FeatureMap(h={self.h}, w={self.w}, d={self.d})"


@dataclass(frozen=True, eq=False)
class Sequence:
    """A length-``len`` sequence of ``d``-channel vectors, time-major."""

    len: int
    d: int
    data: np.ndarray

    def __post_init__(self):
        if int(self.len) != self.len or self.len < 1:
            raise ValueError(f"Sequence.len must be a positive integer, got {self.len!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"Sequence.d must be a positive integer, got {self.d!r}")
        data = _frozen_f32(self.data)
        if data.size != self.len * self.d:
            raise ValueError(
                f"Sequence data has {data.size} elements, expected len*d = {self.len * self.d}"
            )
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr) -> Sequence:
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValueError(f"expected an (L, d) array, got shape {arr.shape}")
        return cls(arr.shape[0], arr.shape[1], arr)

    @property
    def array(self) -> np.ndarray:
        return self.data.reshape(self.len, self.d)

    def __repr__(self) -> str:
        return f"Sequence(len={self.len}, d={self.d})"


def _check_index(fmap: FeatureMap, i: int, j: int, c: int) -> None:
    for axis, idx, bound in (("i (row)", i, fmap.h), ("j (col)", j, fmap.w), ("c (channel)", c, fmap.d)):
        if not 0 <= idx < bound:
            raise IndexError(f"index {axis}={idx} out of bounds for extent {bound}")


def get(fmap: FeatureMap, i: int, j: int, c: int) -> float:
    _check_index(fmap, i, j, c)
    return float(fmap.data[(i * fmap.w + j) * fmap.d + c])


def set_value(fmap: FeatureMap, i: int, j: int, c: int, value: float) -> FeatureMap:
    """Return a copy of ``fmap`` with element ``(i, j, c)`` replaced."""
    _check_index(fmap, i, j, c)
    data = fmap.data.copy()
    data[(i * fmap.w + j) * fmap.d + c] = value
    return FeatureMap(fmap.h, fmap.w, fmap.d, data)


def splitmix64(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Outputs ``offset .. offset+count-1`` of the SplitMix64 stream for ``seed``."""
    s = np.uint64(seed % (1 << 64))
    k = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = s + k * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def seeded_uniform(shape, seed: int, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """Deterministic float32 array of the given shape, uniform on ``[low, high)``."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    count = int(np.prod(shape, dtype=np.int64))
    q = (splitmix64(seed, count) >> np.uint64(40)).astype(np.float64)
    unit = q / float(1 << 23) - 1.0
    if (low, high) != (-1.0, 1.0):
        unit = low + (unit + 1.0) * 0.5 * (high - low)
    return unit.astype(np.float32).reshape(shape)


def fill_seeded(h: int, w: int, d: int, seed: int) -> FeatureMap:
    return FeatureMap(h, w, d, seeded_uniform(h * w * d, seed))


def write_qmap(path, fmap: FeatureMap) -> None:
    """Write ``fmap`` as a 16-byte little-endian header followed by float32 data."""
    payload = _HEADER.pack(QMAP_MAGIC, fmap.h, fmap.w, fmap.d)
    payload += fmap.data.astype("<f4").tobytes()
    Path(path).write_bytes(payload)


def read_qmap(path) -> FeatureMap:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated QMAP header ({len(raw)} bytes)")
    magic, h, w, d = _HEADER.unpack_from(raw)
    if magic != QMAP_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {QMAP_MAGIC!r}")
    expected = _HEADER.size + 4 * h * w * d
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {h}x{w}x{d}, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return FeatureMap(h, w, d, data.astype(np.float32))
