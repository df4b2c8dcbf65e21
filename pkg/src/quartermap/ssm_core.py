"""Selective state space recurrence (S6) with sequential and associative-scan evaluators.

Per channel ``c`` and state ``s`` the discrete system is::

    h[t, c, s] = a_bar[t, c, s] * h[t-1, c, s] + b_bar[t, c, s] * u[t, c]
    y[t, c]    = sum_s c_t[t, s] * h[t, c, s] + d_skip[c] * u[t, c]

with ``A = -exp(a_log)`` diagonal, zero-order-hold discretization using the
input-dependent step ``delta[t, c]``, and ``b_t``, ``c_t`` linear projections
of ``u[t]``. Work is done in float64 and rounded to float32 on the way out.

Array-level entry points accept leading batch axes on both the input and the
parameters, which is how SS2D runs its four directions in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import Sequence, seeded_uniform

__all__ = [
    "SsmBlockParams",
    "ScanElement",
    "combine",
    "softplus",
    "softplus_inverse",
    "zoh_discretize",
    "select_params",
    "ssm_step",
    "sequential_recurrence",
    "associative_scan",
    "discretize_sequence",
    "selective_scan_arrays",
    "selective_scan_sequential",
    "selective_scan_parallel",
    "TAYLOR_THRESHOLD",
    "SCAN_METHODS",
]

TAYLOR_THRESHOLD = 1e-6
SCAN_METHODS = ("sequential", "parallel")


@dataclass(frozen=True, eq=False)
class SsmBlockParams:
    """S6 parameters for one scan direction.

    Shapes (for ``d`` channels and ``n_state`` states): ``a_log (d, n)``,
    ``w_b (n, d)``, ``w_c (n, d)``, ``w_delta (d,)``, ``delta_bias (d,)``,
    ``d_skip (d,)``. Any of them may carry one shared leading axis after
    :meth:`stack`.
    """

    a_log: np.ndarray
    w_b: np.ndarray
    w_c: np.ndarray
    w_delta: np.ndarray
    delta_bias: np.ndarray
    d_skip: np.ndarray

    def __post_init__(self):
        d, n = self.a_log.shape[-2:]
        lead = self.a_log.shape[:-2]
        expected = {
            "w_b": lead + (n, d),
            "w_c": lead + (n, d),
            "w_delta": lead + (d,),
            "delta_bias": lead + (d,),
            "d_skip": lead + (d,),
        }
        for name, shape in expected.items():
            got = np.shape(getattr(self, name))
            if got != shape:
                raise ValueError(f"SsmBlockParams.{name} has shape {got}, expected {shape}")
        if not np.all(np.isfinite(self.a_log)):
            raise ValueError("a_log must be finite")

    @property
    def d(self) -> int:
        return self.a_log.shape[-2]

    @property
    def n_state(self) -> int:
        return self.a_log.shape[-1]

    @property
    def A(self) -> np.ndarray:
        return -np.exp(np.asarray(self.a_log, dtype=np.float64))

    @classmethod
    def seeded(
        cls,
        d: int,
        n_state: int,
        seed: int,
        proj_scale: float = 0.5,
        d_skip: float | None = 1.0,
    ) -> SsmBlockParams:
        """S4D-real style initialization driven by the repo generator.

        ``A[c, s] = -(s + 1)``, projections uniform on ``[-proj_scale, proj_scale]``,
        and ``delta_bias`` chosen so that ``softplus(delta_bias[c]) = 0.01 * (1 + c % 10)``.
        ``d_skip=None`` draws the skip weights from the generator as well.
        """
        a_log = np.tile(np.log(np.arange(1, n_state + 1, dtype=np.float64)), (d, 1))
        w_b = seeded_uniform((n_state, d), seed * 8 + 1, -proj_scale, proj_scale)
        w_c = seeded_uniform((n_state, d), seed * 8 + 2, -proj_scale, proj_scale)
        w_delta = seeded_uniform(d, seed * 8 + 3, -proj_scale, proj_scale)
        target = 0.01 * (1 + np.arange(d) % 10)
        delta_bias = softplus_inverse(target)
        if d_skip is None:
            skip = seeded_uniform(d, seed * 8 + 4, -0.5, 0.5)
        else:
            skip = np.full(d, d_skip, dtype=np.float64)
        return cls(a_log, w_b, w_c, w_delta, delta_bias, skip)

    @classmethod
    def stack(cls, params) -> SsmBlockParams:
        params = list(params)
        fields = ("a_log", "w_b", "w_c", "w_delta", "delta_bias", "d_skip")
        return cls(*(np.stack([np.asarray(getattr(p, f)) for p in params]) for f in fields))

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "a_log": self.a_log,
            "w_b": self.w_b,
            "w_c": self.w_c,
            "w_delta": self.w_delta,
            "delta_bias": self.delta_bias,
            "d_skip": self.d_skip,
        }


@dataclass(frozen=True)
class ScanElement:
    """One step of ``h -> a_bar * h + bx``; composes with :func:`combine`."""

    a_bar: float
    bx: float

    def then(self, other: ScanElement) -> ScanElement:
        return combine(self, other)


def combine(first: ScanElement, second: ScanElement) -> ScanElement:
    # apply `first`, then `second`
    return ScanElement(second.a_bar * first.a_bar, second.a_bar * first.bx + second.bx)


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 0.0))))
    return out if out.ndim else float(out)


def softplus_inverse(y):
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ValueError("softplus_inverse needs strictly positive input")
    out = y + np.log(-np.expm1(-y))
    return out if out.ndim else float(out)


def zoh_discretize(delta, a, b):
    """Zero-order hold for a diagonal system: ``(exp(delta*a), (exp(delta*a) - 1) / a * b)``.

    Broadcasts over arrays. When ``|delta * a| < 1e-6`` the input gain falls
    back to its limit ``delta * b``.
    """
    delta = np.asarray(delta, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(~(delta > 0)):
        raise ValueError("zoh_discretize requires delta > 0")
    da = delta * a
    a_bar = np.exp(da)
    small = np.abs(da) < TAYLOR_THRESHOLD
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(small, delta, np.expm1(da) / np.where(small, 1.0, a))
    b_bar = gain * b
    if a_bar.ndim == 0 and b_bar.ndim == 0:
        return float(a_bar), float(b_bar)
    return a_bar, b_bar


def select_params(u_t, p: SsmBlockParams):
    """Input-dependent ``(b_t, c_t, delta_t)`` for one input vector (or a stack of them)."""
    u_t = np.asarray(u_t, dtype=np.float64)
    if u_t.shape[-1] != p.d:
        raise ValueError(f"input has {u_t.shape[-1]} channels, parameters expect {p.d}")
    b_t = u_t @ np.asarray(p.w_b, dtype=np.float64).T
    c_t = u_t @ np.asarray(p.w_c, dtype=np.float64).T
    shared = u_t @ np.asarray(p.w_delta, dtype=np.float64)
    delta_t = softplus(np.asarray(shared)[..., None] + np.asarray(p.delta_bias, dtype=np.float64))
    return b_t, c_t, np.asarray(delta_t)


def ssm_step(h_prev, u_tc: float, a_bar, b_bar, c_t, d_skip_c: float):
    h_prev, a_bar, b_bar, c_t = (np.asarray(v, dtype=np.float64) for v in (h_prev, a_bar, b_bar, c_t))
    h = a_bar * h_prev + b_bar * u_tc
    y = float(np.dot(c_t, h) + d_skip_c * u_tc)
    return h, y


def sequential_recurrence(a, x, axis: int = 0) -> np.ndarray:
    """All states of ``h_t = a_t * h_{t-1} + x_t`` (``h_0 = 0``) by a plain loop over ``axis``."""
    a = np.moveaxis(np.asarray(a, dtype=np.float64), axis, 0)
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    h = np.empty(np.broadcast_shapes(a.shape, x.shape))
    prev = np.zeros(h.shape[1:])
    for t in range(h.shape[0]):
        prev = a[t] * prev + x[t]
        h[t] = prev
    return np.moveaxis(h, 0, axis)


def associative_scan(a, x, axis: int = 0) -> np.ndarray:
    """Same states as :func:`sequential_recurrence`, via a Blelloch up-sweep/down-sweep.

    Elements ``(a, x)`` combine as ``(a1, x1) then (a2, x2) = (a2*a1, a2*x1 + x2)``.
    The length is padded to a power of two with the identity ``(1, 0)``. Every
    level is one vectorized operation over the independent pairs, so the loop
    depth is ``2*log2(L)`` while total work stays ``O(L)``.
    """
    a = np.moveaxis(np.asarray(a, dtype=np.float64), axis, 0)
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    shape = np.broadcast_shapes(a.shape, x.shape)
    length = shape[0]
    size = 1 << max(length - 1, 0).bit_length()
    A = np.ones((size,) + shape[1:])
    X = np.zeros((size,) + shape[1:])
    A[:length] = a
    X[:length] = x

    # up-sweep: node 2s-1+2sk accumulates the reduction of its subtree
    step = 1
    while step < size:
        left = slice(step - 1, size, 2 * step)
        right = slice(2 * step - 1, size, 2 * step)
        X[right] += A[right] * X[left]
        A[right] *= A[left]
        step *= 2

    # down-sweep to exclusive prefixes; only the x-part of each prefix is needed
    X[size - 1] = 0.0
    step = size // 2
    while step >= 1:
        left = slice(step - 1, size, 2 * step)
        right = slice(2 * step - 1, size, 2 * step)
        x_left = X[left].copy()
        X[left] = X[right]
        X[right] = A[left] * X[right] + x_left
        step //= 2

    h = a * X[:length] + x
    return np.moveaxis(h, 0, axis)


def discretize_sequence(u, p: SsmBlockParams):
    """Per-timestep ``(a_bar, bx, c_t)`` for inputs ``u (..., L, D)``.

    ``a_bar`` and ``bx = b_bar * u`` have shape ``(..., L, D, N)``; ``c_t`` is ``(..., L, N)``.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != p.d:
        raise ValueError(f"input has {u.shape[-1]} channels, parameters expect {p.d}")
    w_b = np.asarray(p.w_b, dtype=np.float64)
    w_c = np.asarray(p.w_c, dtype=np.float64)
    w_delta = np.asarray(p.w_delta, dtype=np.float64)
    bias = np.asarray(p.delta_bias, dtype=np.float64)
    A = p.A

    b_t = np.matmul(u, np.swapaxes(w_b, -1, -2))
    c_t = np.matmul(u, np.swapaxes(w_c, -1, -2))
    shared = np.matmul(u, w_delta[..., :, None])
    delta = softplus(shared + bias[..., None, :])

    da = delta[..., None] * A[..., None, :, :]
    a_bar = np.exp(da)
    small = np.abs(da) < TAYLOR_THRESHOLD
    gain = np.expm1(da) / A[..., None, :, :]
    if small.any():
        gain = np.where(small, np.broadcast_to(delta[..., None], da.shape), gain)
    gain *= b_t[..., :, None, :]
    gain *= u[..., None]
    return a_bar, gain, c_t


def selective_scan_arrays(u, p: SsmBlockParams, method: str = "parallel") -> np.ndarray:
    """Selective scan on raw arrays ``u (..., L, D)``; returns float32 of the same shape."""
    if method not in SCAN_METHODS:
        raise ValueError(f"unknown scan method {method!r}; choose one of {SCAN_METHODS}")
    u64 = np.asarray(u, dtype=np.float64)
    a_bar, bx, c_t = discretize_sequence(u64, p)
    if method == "parallel":
        h = associative_scan(a_bar, bx, axis=-3)
    else:
        h = sequential_recurrence(a_bar, bx, axis=-3)
    y = np.matmul(h, c_t[..., None])[..., 0]
    y += np.asarray(p.d_skip, dtype=np.float64)[..., None, :] * u64
    return y.astype(np.float32)


def _check_seq(seq: Sequence, p: SsmBlockParams) -> None:
    if seq.d != p.d:
        raise ValueError(f"sequence has {seq.d} channels, parameters expect {p.d}")
    if p.a_log.ndim != 2:
        raise ValueError("sequence scans take parameters for a single direction")


def selective_scan_sequential(seq: Sequence, p: SsmBlockParams) -> Sequence:
    _check_seq(seq, p)
    return Sequence.from_array(selective_scan_arrays(seq.array, p, method="sequential"))


def selective_scan_parallel(seq: Sequence, p: SsmBlockParams) -> Sequence:
    _check_seq(seq, p)
    return Sequence.from_array(selective_scan_arrays(seq.array, p, method="parallel"))
