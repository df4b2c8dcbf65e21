"""Invariant suites behind ``bench validate``, plus the scripted mutation faults.

Each check is a function of one integer seed. It either returns quietly or
raises :class:`InvariantBreach` with a message that carries the inputs needed
to reproduce it; the runner turns that into a ``FAIL module/check`` line.
Re-running with the same ``--seed`` rebuilds exactly the same inputs.

``CHECKLIST`` maps every documented invariant of every module to the check
that enforces it. The test suite asserts the mapping is complete.
"""

from __future__ import annotations

import math
import tempfile
from contextlib import ExitStack, contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from unittest import mock

import numpy as np

from . import bench, model, pruning, ss2d, ssm_core, tensor_core
from .profiling import Profiler
from .pruning import QuarterMapConfig, SkipPolicy, Upsample
from .ssm_core import ScanElement, SsmBlockParams
from .tensor_core import FeatureMap, Sequence, fill_seeded, seeded_uniform

__all__ = [
    "InvariantBreach",
    "CheckResult",
    "ValidationReport",
    "CHECKS",
    "CHECKLIST",
    "FAULTS",
    "inject_fault",
    "run_validation",
]

MODULES = ("tensor_core", "ssm_core", "ss2d", "quartermap", "model", "bench")


class InvariantBreach(AssertionError):
    pass


@dataclass
class CheckResult:
    module: str
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.module}/{self.name}" + (f": {self.detail}" if self.detail else "")


@dataclass
class ValidationReport:
    seed: int
    fault: str | None = None
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[CheckResult]:
        return [r for r in self.results if not r.passed]

    @property
    def failed_modules(self) -> list[str]:
        return sorted({r.module for r in self.failures}, key=MODULES.index)

    def render(self) -> str:
        lines = [r.line() for r in self.results]
        tail = "all suites passed" if self.passed else f"{len(self.failures)} failed in " + ", ".join(self.failed_modules)
        head = f"validation seed={self.seed}" + (f" fault={self.fault}" if self.fault else "")
        return "\n".join([head, *lines, tail])


@dataclass(frozen=True)
class Check:
    module: str
    name: str
    func: object
    timing: bool = False


CHECKS: list[Check] = []


def _check(module: str, name: str, timing: bool = False):
    def register(func):
        CHECKS.append(Check(module, name, func, timing))
        return func

    return register


def _require(cond, message: str) -> None:
    if not cond:
        raise InvariantBreach(message)


def _rel_err(got, want) -> float:
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    scale = max(float(np.max(np.abs(want), initial=0.0)), 1e-30)
    return float(np.max(np.abs(got - want), initial=0.0)) / scale


def _random_params(d: int, n: int, seed: int, scale: float = 0.5) -> SsmBlockParams:
    return SsmBlockParams.seeded(d, n, seed, proj_scale=scale, d_skip=None)


def _four_params(d: int, n: int, seed: int) -> list[SsmBlockParams]:
    return [_random_params(d, n, seed * 4 + k) for k in range(4)]


# --------------------------------------------------------------------- tensor_core


@_check("tensor_core", "container_lengths")
def _container_lengths(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        h, w, d = (int(v) for v in rng.integers(1, 9, size=3))
        fm = fill_seeded(h, w, d, seed)
        _require(fm.data.size == h * w * d, f"fill_seeded({h},{w},{d},{seed}) has {fm.data.size} values")
        for bad in (h * w * d - 1, h * w * d + 1):
            try:
                FeatureMap(h, w, d, np.zeros(max(bad, 0), np.float32))
            except ValueError:
                continue
            raise InvariantBreach(f"FeatureMap({h},{w},{d}) accepted {bad} values")
        seq = Sequence(h * w, d, fm.data)
        _require(seq.data.size == seq.len * seq.d, f"Sequence({h * w},{d}) length law broken")
        try:
            Sequence(h * w, d, fm.data[:-1])
        except ValueError:
            continue
        raise InvariantBreach(f"Sequence({h * w},{d}) accepted {h * w * d - 1} values")


@_check("tensor_core", "finite_outputs")
def _finite_outputs(seed):
    x = fill_seeded(6, 5, 3, seed)
    params = _four_params(3, 4, seed)
    outputs = {"ss2d_forward": ss2d.ss2d_forward(x, params)}
    for method in Upsample:
        cfg = QuarterMapConfig(m=2, n=1, upsample=method)
        outputs[f"quartermap_ss2d[{method.value}]"] = pruning.quartermap_ss2d(x, params, cfg)
    outputs["prune"] = pruning.prune(x, 3, 2)
    outputs["upsample_bicubic"] = pruning.upsample_bicubic(x, 11, 9)
    cfg = model.preset("micro", seed=seed)
    net = model.build_model(cfg)
    imgs = bench.seeded_images(1, cfg.input_hw, seed)
    outs, _ = model.forward(net, [FeatureMap.from_array(i) for i in imgs], QuarterMapConfig(k=1))
    outputs["forward[micro]"] = outs[0]
    for name, fm in outputs.items():
        _require(fm.is_finite(), f"{name} produced non-finite values (seed={seed})")


@_check("tensor_core", "get_set_round_trip")
def _get_set(seed):
    rng = np.random.default_rng(seed)
    fm = fill_seeded(4, 3, 5, seed)
    for _ in range(50):
        i, j, c = int(rng.integers(4)), int(rng.integers(3)), int(rng.integers(5))
        v = float(np.float32(rng.normal()))
        got = tensor_core.set_value(fm, i, j, c, v).get(i, j, c)
        _require(got == v, f"set_value then get at ({i},{j},{c}) gave {got}, wrote {v} (seed={seed})")


@_check("tensor_core", "layout_law")
def _layout(seed):
    rng = np.random.default_rng(seed)
    h, w, d = (int(v) for v in rng.integers(1, 7, size=3))
    fm = FeatureMap(h, w, d, np.arange(h * w * d, dtype=np.float32))
    visited = [fm.get(i, j, c) for i in range(h) for j in range(w) for c in range(d)]
    _require(all(b > a for a, b in zip(visited, visited[1:])), f"layout not row-major/channel-fastest for {h}x{w}x{d}")


@_check("tensor_core", "generator_contract")
def _generator(seed):
    a = fill_seeded(5, 4, 3, seed).data
    b = fill_seeded(5, 4, 3, seed).data
    _require(np.array_equal(a.view(np.uint32), b.view(np.uint32)), f"fill_seeded not deterministic for seed={seed}")
    _require(not np.array_equal(a, fill_seeded(5, 4, 3, seed + 1).data), f"seeds {seed} and {seed + 1} collide")
    _require(a.min() >= -1.0 and a.max() <= 1.0, f"fill_seeded(seed={seed}) left [-1, 1]")


@_check("tensor_core", "qmap_round_trip")
def _qmap(seed):
    fm = fill_seeded(3, 7, 2, seed)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "x.qmap"
        tensor_core.write_qmap(path, fm)
        back = tensor_core.read_qmap(path)
        _require(path.stat().st_size == 16 + 4 * fm.data.size, "QMAP file size is not header + 4*h*w*d")
    _require(back.shape == fm.shape and np.array_equal(back.data, fm.data), f"QMAP round trip changed data (seed={seed})")


# --------------------------------------------------------------------- ssm_core


@_check("ssm_core", "negative_A")
def _negative_a(seed):
    rng = np.random.default_rng(seed)
    p = SsmBlockParams(
        rng.normal(size=(4, 3)) * 3, np.zeros((3, 4)), np.zeros((3, 4)), np.zeros(4), np.zeros(4), np.zeros(4)
    )
    _require(np.all(p.A < 0), f"A not strictly negative for random a_log (seed={seed})")
    _require(np.all(_random_params(5, 6, seed).A < 0), "seeded initialization produced A >= 0")


@_check("ssm_core", "positive_delta")
def _positive_delta(seed):
    p = _random_params(6, 4, seed, scale=2.0)
    u = seeded_uniform((200, 6), seed) * 20.0
    _, _, delta = ssm_core.select_params(u, p)
    _require(np.all(delta > 0), f"delta <= 0 for some input (seed={seed}, min={delta.min()})")


@_check("ssm_core", "softplus_values")
def _softplus(seed):
    _require(abs(ssm_core.softplus(0.0) - math.log(2)) < 1e-12, "softplus(0) != ln 2")
    _require(abs(ssm_core.softplus(40.0) / 40.0 - 1) < 1e-6, "softplus(40) != 40")
    _require(abs(ssm_core.softplus(-40.0) / math.exp(-40) - 1) < 1e-6, "softplus(-40) != exp(-40)")


@_check("ssm_core", "combine_associativity")
def _associativity(seed):
    vals = seeded_uniform((200, 6), seed).astype(np.float64)
    for row in vals:
        e1, e2, e3 = (ScanElement(float(a), float(x)) for a, x in row.reshape(3, 2))
        left = e1.then(e2).then(e3)
        right = e1.then(e2.then(e3))
        err = _rel_err([left.a_bar, left.bx], [right.a_bar, right.bx])
        _require(err <= 1e-6, f"combine not associative for {row.tolist()} (rel err {err:.2e}, seed={seed})")


def _rk4_reference(delta, a, b, steps: int = 200):
    delta, a, b = (np.asarray(v, dtype=np.float64) for v in (delta, a, b))
    h = delta / steps
    decay = np.ones_like(delta)
    forced = np.zeros_like(delta)
    for _ in range(steps):
        for state, drive in ((decay, 0.0), (forced, b)):
            k1 = a * state + drive
            k2 = a * (state + 0.5 * h * k1) + drive
            k3 = a * (state + 0.5 * h * k2) + drive
            k4 = a * (state + h * k3) + drive
            state += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return decay, forced


@_check("ssm_core", "zoh_reference")
def _zoh(seed):
    rng = np.random.default_rng(seed)
    delta = rng.uniform(0.01, 1.0, 100)
    a = rng.uniform(-4.0, -0.1, 100)
    b = rng.uniform(-2.0, 2.0, 100)
    decay, forced = _rk4_reference(delta, a, b)
    for i in range(100):
        a_bar, b_bar = ssm_core.zoh_discretize(float(delta[i]), float(a[i]), float(b[i]))
        args = f"delta={delta[i]!r}, a={a[i]!r}, b={b[i]!r}"
        _require(abs(a_bar - decay[i]) <= 1e-6 * abs(decay[i]), f"zoh_discretize a_bar off for {args} (seed={seed})")
        _require(abs(b_bar - forced[i]) <= 1e-6 * abs(forced[i]) + 1e-12, f"zoh_discretize b_bar off for {args} (seed={seed})")
    a_bar, b_bar = ssm_core.zoh_discretize(1e-9, -1.0, 1.0)
    _require(abs(a_bar - 1) < 1e-8 and abs(b_bar - 1e-9) < 1e-15, "Taylor branch limit wrong at delta=1e-9")
    # the vectorized sequence path must agree with the scalar rule
    p = _random_params(3, 2, seed)
    u = seeded_uniform((5, 3), seed)
    a_seq, bx_seq, _ = ssm_core.discretize_sequence(u, p)
    b_t, _, delta_t = ssm_core.select_params(u, p)
    t, c, s = 4, 2, 1
    a_ref, b_ref = ssm_core.zoh_discretize(float(delta_t[t, c]), float(p.A[c, s]), float(b_t[t, s]))
    _require(_rel_err([a_seq[t, c, s], bx_seq[t, c, s]], [a_ref, b_ref * float(u[t, c])]) < 1e-12,
             f"discretize_sequence disagrees with zoh_discretize (seed={seed})")
    try:
        ssm_core.zoh_discretize(0.0, -1.0, 1.0)
    except ValueError:
        return
    raise InvariantBreach("zoh_discretize accepted delta=0")


@_check("ssm_core", "scan_equivalence")
def _scan_equivalence(seed):
    for length in (1, 2, 3, 17, 256, 4096):
        for d in (1, 4):
            for n in (1, 8):
                sub = seed * 1000 + length * 16 + d * 4 + n
                p = _random_params(d, n, sub)
                seq = Sequence.from_array(seeded_uniform((length, d), sub))
                ref = ssm_core.selective_scan_sequential(seq, p).array
                par = ssm_core.selective_scan_parallel(seq, p).array
                err = _rel_err(par, ref)
                _require(err <= 1e-5, f"parallel vs sequential rel err {err:.2e} at L={length}, D={d}, N={n}, sub-seed={sub}")
                if length == 1:
                    _require(np.array_equal(par, ref), f"L=1 parallel scan not bit-identical (sub-seed={sub})")


@_check("ssm_core", "stability")
def _stability(seed):
    p = _random_params(4, 6, seed)
    u = np.asarray(seeded_uniform((64, 4), seed), dtype=np.float64)
    t0 = 20
    u[t0:] = 0.0
    a_bar, bx, _ = ssm_core.discretize_sequence(u, p)
    h = ssm_core.sequential_recurrence(a_bar, bx, axis=0)
    norms = np.linalg.norm(h.reshape(64, -1), axis=1)
    _require(np.all(np.diff(norms[t0 - 1:]) <= 1e-15), f"state norm grew after input stopped at t={t0} (seed={seed})")


@_check("ssm_core", "linearity")
def _linearity(seed):
    # frozen selection: reuse (a_bar, b_bar, c_t) from one input for every probe
    p = _random_params(3, 4, seed)
    u0 = seeded_uniform((32, 3), seed)
    a_bar, bx0, c_t = ssm_core.discretize_sequence(u0, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        b_bar = np.where(u0[..., None] != 0, bx0 / u0[..., None], 0.0)
    skip = np.asarray(p.d_skip, dtype=np.float64)

    def run(u, scan):
        h = scan(a_bar, b_bar * u[..., None], axis=0)
        return np.einsum("tcs,ts->tc", h, c_t) + skip * u

    u1 = np.asarray(seeded_uniform((32, 3), seed + 1), np.float64)
    u2 = np.asarray(seeded_uniform((32, 3), seed + 2), np.float64)
    for scan in (ssm_core.sequential_recurrence, ssm_core.associative_scan):
        combo = run(2.5 * u1 - 0.75 * u2, scan)
        err = _rel_err(combo, 2.5 * run(u1, scan) - 0.75 * run(u2, scan))
        _require(err <= 1e-6, f"{scan.__name__} output not linear in u (rel err {err:.2e}, seed={seed})")


# --------------------------------------------------------------------- ss2d


def _shapes(seed, count, hi=33):
    rng = np.random.default_rng(seed)
    return [tuple(int(v) for v in (rng.integers(1, hi + 1), rng.integers(1, hi + 1), rng.integers(1, 4))) for _ in range(count)]


@_check("ss2d", "round_trip")
def _round_trip(seed):
    for h, w, d in _shapes(seed, 50):
        x = fill_seeded(h, w, d, seed)
        back = ss2d.cross_merge(ss2d.cross_scan(x), h, w)
        _require(np.array_equal(back.data, 4 * x.data),
                 f"cross_merge(cross_scan(x)) != 4*x for shape {h}x{w}x{d} (fill_seeded seed={seed})")


@_check("ss2d", "direction_pairs")
def _pairs(seed):
    for h, w, _ in _shapes(seed, 20, hi=12):
        for direction in ss2d.DIRECTIONS:
            fwd = ss2d.traversal_order(h, w, direction)
            back = ss2d.traversal_order(h, w, direction.inverse_pair)
            _require(np.array_equal(fwd[::-1], back), f"{direction.name} reversed != {direction.inverse_pair.name} at {h}x{w}")


@_check("ss2d", "shape_preservation")
def _ss2d_shape(seed):
    for h, w, d in _shapes(seed, 8, hi=9):
        out = ss2d.ss2d_forward(fill_seeded(h, w, d, seed), _four_params(d, 2, seed))
        _require(out.shape == (h, w, d), f"ss2d_forward changed shape {h}x{w}x{d} -> {out.shape}")


@_check("ss2d", "permutation")
def _permutation(seed):
    for h, w, d in _shapes(seed, 10, hi=10):
        x = fill_seeded(h, w, d, seed)
        rows = x.array.reshape(-1, d)
        key = np.lexsort(rows.T[::-1])
        for direction, seq in zip(ss2d.DIRECTIONS, ss2d.cross_scan(x)):
            got = seq.array
            _require(np.array_equal(got[np.lexsort(got.T[::-1])], rows[key]),
                     f"{direction.name} is not a permutation of the channel vectors at {h}x{w}x{d} (seed={seed})")


@_check("ss2d", "merge_order")
def _merge_order(seed):
    h, w, d = 5, 7, 3
    seqs = [fill_seeded(h * w, 1, d, seed * 4 + k).array.reshape(h * w, d) for k in range(4)]
    # independent index oracle: position p of direction k came from traversal_order[k][t] == p
    acc = np.zeros((h * w, d))
    for k in range(4):
        order = ss2d.traversal_order(h, w, ss2d.ScanDirection(k))
        aligned = np.zeros((h * w, d))
        for t, pos in enumerate(order):
            aligned[pos] = seqs[k][t]
        acc += aligned
    merged = ss2d.cross_merge([Sequence.from_array(s) for s in seqs], h, w)
    _require(np.array_equal(merged.data, acc.astype(np.float32).ravel()),
             f"cross_merge disagrees with the index oracle at {h}x{w}x{d} (seed={seed})")
    # directions scanned in any order merge to the same bits
    x = fill_seeded(4, 6, 2, seed)
    params = _four_params(2, 3, seed)
    scans = ss2d.cross_scan(x)
    ys = [None] * 4
    for k in reversed(range(4)):
        ys[k] = ssm_core.selective_scan_parallel(scans[k], params[k])
    _require(np.array_equal(ss2d.cross_merge(ys, 4, 6).data, ss2d.ss2d_forward(x, params).data),
             f"SS2D output depends on direction execution order (seed={seed})")


# --------------------------------------------------------------------- quartermap


@_check("quartermap", "config_contract")
def _config(seed):
    for kwargs in (dict(k=0), dict(m=2, n=3), dict(m=0), dict(n=0)):
        try:
            QuarterMapConfig(**kwargs)
        except ValueError:
            continue
        raise InvariantBreach(f"QuarterMapConfig accepted {kwargs}")


@_check("quartermap", "shape_law")
def _shape_law(seed):
    x_cache = {}
    for h in range(1, 34):
        for w in range(1, 34):
            x = x_cache.setdefault((h, w), np.zeros((h, w, 2), np.float32))
            for m in range(1, 9):
                got = pruning.prune_array(x, m, 1).shape
                want = (math.ceil(h / m), math.ceil(w / m), 2)
                _require(got == want, f"prune of {h}x{w}x2 with m={m}, n=1 gave {got[:2]}, expected {want[:2]}")
    for extent, m, n in ((6, 3, 2), (7, 3, 2), (9, 4, 3)):
        got = pruning.retained_indices(extent, m, n)
        want = [i for i in range(extent) if i % m < n]
        _require(got == want, f"retained_indices({extent}, {m}, {n}) = {got}, expected {want}")


@_check("quartermap", "idempotent_projection")
def _idempotent(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        m = int(rng.integers(2, 5))
        h, w = (m * int(v) for v in rng.integers(1, 6, size=2))
        x = fill_seeded(h, w, 2, seed)
        small = pruning.prune(x, m, 1)
        again = pruning.prune(pruning.upsample_nearest(small, h, w), m, 1)
        _require(np.array_equal(again.data, small.data), f"prune(upsample(prune(x))) != prune(x) at {h}x{w}, m={m} (seed={seed})")


@_check("quartermap", "end_to_end_shape")
def _qm_shape(seed):
    params = _four_params(3, 2, seed)
    for h, w, _ in _shapes(seed, 6, hi=11):
        x = fill_seeded(h, w, 3, seed)
        for m, n in ((2, 1), (3, 2), (4, 1)):
            for method in Upsample:
                out = pruning.quartermap_ss2d(x, params, QuarterMapConfig(m=m, n=n, upsample=method))
                _require(out.shape == x.shape, f"quartermap_ss2d {h}x{w}, m={m}, n={n}, {method.value} -> {out.shape}")


@_check("quartermap", "disabled_identity")
def _disabled(seed):
    for h, w, d in _shapes(seed, 5, hi=9):
        x = fill_seeded(h, w, d, seed)
        params = _four_params(d, 3, seed)
        for method in Upsample:
            a = pruning.quartermap_ss2d(x, params, QuarterMapConfig(m=1, n=1, upsample=method))
            _require(np.array_equal(a.data, ss2d.ss2d_forward(x, params).data),
                     f"m=1 path differs from plain SS2D at {h}x{w}x{d}, {method.value} (seed={seed})")


@_check("quartermap", "work_reduction")
def _work(seed):
    rng = np.random.default_rng(seed)
    params = _four_params(2, 2, seed)
    for _ in range(10):
        h, w = (int(v) for v in rng.integers(1, 17, size=2))
        for m in (2, 3):
            prof = Profiler()
            pruning.quartermap_ss2d_array(fill_seeded(h, w, 2, seed).array, params, QuarterMapConfig(m=m), profiler=prof)
            got = prof.scan_lengths[-1][0]
            _require(got == math.ceil(h / m) * math.ceil(w / m),
                     f"pruned scan length {got} at {h}x{w}, m={m}; expected ceil law")
    for e in (2, 8, 16, 32):
        prof = Profiler()
        pruning.quartermap_ss2d_array(fill_seeded(e, e, 2, seed).array, params, QuarterMapConfig(), profiler=prof)
        _require(prof.scan_lengths[-1][0] * 4 == e * e, f"m=2 scan length not a quarter at {e}x{e}")


@_check("quartermap", "block_selection")
def _selection(seed):
    rng = np.random.default_rng(seed)
    cases = [((2, 2, 8, 2), 3, SkipPolicy.EXCLUDE_FIRST_LAYER, {4, 7, 10, 13})]
    for _ in range(10):
        depths = tuple(int(v) for v in rng.integers(1, 6, size=4))
        cases.append((depths, int(rng.integers(1, 5)), list(SkipPolicy)[int(rng.integers(2))], None))
    for depths, k, policy, expected in cases:
        skip = depths[0] if policy is SkipPolicy.EXCLUDE_FIRST_LAYER else 2
        want = {g for g in range(sum(depths)) if g >= skip and (g - skip + 1) % k == 0}
        if expected is not None:
            want = expected
        got = pruning.pruned_blocks(depths, QuarterMapConfig(k=k, skip_policy=policy))
        _require(got == want, f"pruned blocks {sorted(got)} != {sorted(want)} for depths={depths}, k={k}, {policy.value}")


# --------------------------------------------------------------------- model


@_check("model", "extent_dim_laws")
def _extent_laws(seed):
    cfg = model.preset("tiny")
    _require([cfg.extent(s) for s in range(4)] == [32, 16, 8, 4], "tiny@128 extents are not 32,16,8,4")
    _require([cfg.dim(s) for s in range(4)] == [96, 192, 384, 768], "tiny dims are not 96,192,384,768")
    micro = model.preset("micro", seed=seed)
    net = model.build_model(micro)
    outs, rep = model.forward_arrays(net, bench.seeded_images(1, micro.input_hw, seed))
    for g, stage, _ in micro.block_layout():
        _require(rep.scan_lengths[g] == micro.extent(stage) ** 2, f"block {g} scanned {rep.scan_lengths[g]} positions")
        if stage > 0:
            _require(micro.extent(stage) ** 2 * 4 == micro.extent(stage - 1) ** 2, "length does not drop by 4 per stage")
    _require(outs[0].shape == (micro.extent(3), micro.extent(3), micro.dim(3)),
             f"micro output shape {outs[0].shape} (seed={seed})")


@_check("model", "determinism")
def _determinism(seed):
    cfg = model.preset("micro", seed=seed)
    imgs = bench.seeded_images(2, cfg.input_hw, seed)
    a, _ = model.forward_arrays(model.build_model(cfg), imgs, QuarterMapConfig(k=1))
    b, _ = model.forward_arrays(model.build_model(cfg), imgs, QuarterMapConfig(k=1))
    _require(all(np.array_equal(x, y) for x, y in zip(a, b)), f"micro forward not reproducible for seed={seed}")


@_check("model", "flop_consistency")
def _flops(seed):
    for name in ("tiny", "micro"):
        cfg = model.preset(name)
        for qm in (None, QuarterMapConfig(k=1), QuarterMapConfig(k=3), QuarterMapConfig(k=2, m=3, upsample="bicubic")):
            table = model.flop_count(cfg, qm)
            whole = table.embed + sum(table.downsample) + sum(r["total"] for r in table.blocks)
            _require(table.total == whole, f"{name}: per-block FLOPs do not sum to the model total for {qm}")
            _require(sum(s["total"] for s in table.stages()) + table.embed + sum(table.downsample) == table.total,
                     f"{name}: per-stage FLOPs do not sum to the model total for {qm}")
    cfg = model.preset("tiny")
    base, pruned = model.flop_count(cfg), model.flop_count(cfg, QuarterMapConfig(k=3))
    expected = sum(0.75 * base.blocks[g]["scan_path"] for g in pruning.pruned_blocks(cfg.depths, QuarterMapConfig(k=3)))
    _require(base.scan_path_total - pruned.scan_path_total == expected, "k=3 scan-path saving is not 0.75 x pruned blocks")
    same = model.flop_count(cfg, QuarterMapConfig(m=1, n=1))
    _require(same.as_dict() == base.as_dict(), "m=1 FLOP table differs from baseline")


@_check("model", "scan_length_counters")
def _counters(seed):
    cfg = model.preset("micro", seed=seed)
    qm = QuarterMapConfig(k=1, m=2, n=1)
    _, rep = model.forward_arrays(model.build_model(cfg), bench.seeded_images(1, cfg.input_hw, seed), qm)
    table = model.flop_count(cfg, qm)
    selected = pruning.pruned_blocks(cfg.depths, qm)
    for row in table.blocks:
        g, e = row["block"], cfg.extent(row["stage"])
        measured = rep.scan_lengths[g]
        _require(row["length"] == measured,
                 f"FLOP table length {row['length']} != measured scan length {measured} at block {g} (micro, seed={seed})")
        if g in selected:
            _require(measured == math.ceil(e / 2) ** 2, f"pruned block {g} scanned {measured}, expected ceil(H/2)*ceil(W/2)")


# --------------------------------------------------------------------- bench


@_check("bench", "report_components")
def _components(seed):
    cfg = model.preset("micro", seed=seed)
    rep = bench.run_benchmark(cfg, QuarterMapConfig(k=1, upsample="bilinear"), batch=2, repeats=1, warmup=0, seed=seed)
    parts = rep.scan_kernel_ms + rep.prune_upsample_ms + rep.crossscan_merge_ms
    _require(parts <= rep.total_ms + 1e-9, f"attributed time {parts:.3f} ms exceeds total {rep.total_ms:.3f} ms")
    _require(abs(parts + rep.other_ms - rep.total_ms) < 1e-6, "other_ms is not the unattributed remainder")


@_check("bench", "csv_schema")
def _csv(seed):
    cfg = model.preset("micro", seed=seed)
    rows = bench.benchmark_rows(cfg, QuarterMapConfig(k=1), batch=1, repeats=1, warmup=0, seed=seed)
    text = bench.write_csv(rows)
    lines = text.splitlines()
    _require(lines[0].startswith("# "), "CSV report lacks the timing note line")
    _require(tuple(lines[1].split(",")) == bench.CSV_COLUMNS, f"CSV header drifted: {lines[1]}")
    _require(len(lines) == 2 + len(rows), "CSV row count mismatch")
    try:
        bench.SweepSpec("mn", repeats=2)
    except ValueError:
        return
    raise InvariantBreach("SweepSpec accepted repeats < 3")


@_check("bench", "throughput_reproducibility", timing=True)
def _reproducible(seed):
    # desk defaults; millisecond-scale micro forwards are dominated by scheduler jitter
    cfg = model.preset("tiny", seed=seed)
    first = bench.run_benchmark(cfg, None, batch=8, repeats=5, warmup=2, seed=seed)
    second = bench.run_benchmark(cfg, None, batch=8, repeats=5, warmup=2, seed=seed)
    ratio = second.images_per_second / first.images_per_second
    _require(0.85 <= ratio <= 1.15, f"back-to-back throughput ratio {ratio:.3f} outside +-15% (tiny@128, batch 8, seed={seed})")


# --------------------------------------------------------------------- checklist

CHECKLIST = {
    "tensor_core": {
        "FeatureMap data length equals h*w*d": "container_lengths",
        "Sequence data length equals len*d": "container_lengths",
        "FeatureMap entries finite after every operation": "finite_outputs",
        "get after set returns the written value": "get_set_round_trip",
        "c-then-j-then-i iteration ascends the flat index": "layout_law",
        "fill_seeded deterministic, seed-sensitive, in [-1, 1]": "generator_contract",
        "QMAP fixture format round trip": "qmap_round_trip",
    },
    "ssm_core": {
        "A entries strictly negative": "negative_A",
        "delta strictly positive for all inputs": "positive_delta",
        "softplus closed forms and asymptotes": "softplus_values",
        "combine is associative": "combine_associativity",
        "ZOH matches continuous-time integration": "zoh_reference",
        "parallel scan matches sequential": "scan_equivalence",
        "state norm non-increasing once input stops": "stability",
        "output linear in u for frozen selection": "linearity",
    },
    "ss2d": {
        "cross_merge(cross_scan(x)) == 4x exactly": "round_trip",
        "directions form two mutually inverse pairs": "direction_pairs",
        "ss2d_forward preserves shape": "shape_preservation",
        "cross_scan outputs are permutations of channel vectors": "permutation",
        "merge order fixed; result independent of execution order": "merge_order",
    },
    "quartermap": {
        "1 <= n <= m and k >= 1": "config_contract",
        "prune shape follows the ceiling law": "shape_law",
        "prune(upsample_nearest(prune(x))) == prune(x)": "idempotent_projection",
        "quartermap_ss2d preserves shape": "end_to_end_shape",
        "m=1 path bit-identical to SS2D": "disabled_identity",
        "scan length after prune follows the ceiling law": "work_reduction",
        "block selection follows the modular rule": "block_selection",
    },
    "model": {
        "extent halves and dim doubles per stage": "extent_dim_laws",
        "same config and seed give identical outputs": "determinism",
        "per-block FLOPs sum to the model total": "flop_consistency",
        "pruned scan length counter equals ceil(H/2)*ceil(W/2)": "scan_length_counters",
    },
    "bench": {
        "StageReport components sum to at most the total": "report_components",
        "CSV column set fixed": "csv_schema",
        "SweepSpec repeats >= 3": "csv_schema",
        "throughput reproducible within 15% back to back": "throughput_reproducibility",
    },
}


# --------------------------------------------------------------------- faults


def _flipped_inverse_orders(original):
    def patched(h, w):
        inv = np.array(original(h, w))
        if h * w >= 2:
            inv[0, [0, 1]] = inv[0, [1, 0]]
        return inv

    return patched


def _swapped_combine_scan(a, x, axis=0):
    # combine applied as (second, first): x-part becomes a1*x2 + x1
    a = np.moveaxis(np.asarray(a, dtype=np.float64), axis, 0)
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    h = np.empty(np.broadcast_shapes(a.shape, x.shape))
    acc_a, acc_x = np.ones(h.shape[1:]), np.zeros(h.shape[1:])
    for t in range(h.shape[0]):
        acc_a, acc_x = a[t] * acc_a, acc_a * x[t] + acc_x
        h[t] = acc_x
    return np.moveaxis(h, 0, axis)


def _off_by_one_retained(extent, m, n):
    return [i for i in range(extent) if i % m <= n]


def _printed_zoh(delta, a, b):
    delta, a, b = (np.asarray(v, dtype=np.float64) for v in (delta, a, b))
    if np.any(~(delta > 0)):
        raise ValueError("zoh_discretize requires delta > 0")
    a_bar = np.exp(delta * a)
    b_bar = np.exp(delta * a - 1.0) / a * b
    if a_bar.ndim == 0:
        return float(a_bar), float(b_bar)
    return a_bar, b_bar


def _floor_extent(extent, m, n):
    return extent * n // m


FAULTS = {
    "cross_merge_index": ("ss2d", "swap two entries of the ROW_FORWARD inverse permutation used by cross_merge"),
    "scan_combine_order": ("ssm_core", "apply the scan combine with its operands swapped"),
    "retained_off_by_one": ("quartermap", "keep i % m <= n instead of i % m < n"),
    "zoh_printed_form": ("ssm_core", "input gain exp(delta*a - 1)/a*b instead of (exp(delta*a) - 1)/a*b"),
    "flop_floor_extent": ("model", "count pruned extents with floor instead of ceiling"),
}


@contextmanager
def inject_fault(name: str | None):
    if name is None:
        yield
        return
    if name not in FAULTS:
        raise ValueError(f"unknown fault {name!r}; choose one of {sorted(FAULTS)}")
    with ExitStack() as stack:
        if name == "cross_merge_index":
            stack.enter_context(mock.patch.object(ss2d, "_inverse_orders", _flipped_inverse_orders(ss2d._inverse_orders)))
        elif name == "scan_combine_order":
            stack.enter_context(mock.patch.object(ssm_core, "associative_scan", _swapped_combine_scan))
        elif name == "retained_off_by_one":
            stack.enter_context(mock.patch.object(pruning, "retained_indices", _off_by_one_retained))
        elif name == "zoh_printed_form":
            stack.enter_context(mock.patch.object(ssm_core, "zoh_discretize", _printed_zoh))
        else:
            stack.enter_context(mock.patch.object(pruning, "pruned_extent", _floor_extent))
        yield


def run_validation(seed: int = 0, fault: str | None = None, timing: bool = False, modules=None) -> ValidationReport:
    """Run every registered check (timing checks only when asked) and collect results."""
    report = ValidationReport(seed=seed, fault=fault)
    wanted = set(modules) if modules else set(MODULES)
    with inject_fault(fault):
        for check in CHECKS:
            if check.module not in wanted or (check.timing and not timing):
                continue
            try:
                check.func(seed)
            except InvariantBreach as exc:
                report.results.append(CheckResult(check.module, check.name, False, str(exc)))
            except Exception as exc:  # a crash inside a suite is a failure of that module too
                report.results.append(CheckResult(check.module, check.name, False, f"{type(exc).__name__}: {exc} (seed={seed})"))
            else:
                report.results.append(CheckResult(check.module, check.name, True))
    return report

