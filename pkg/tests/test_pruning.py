import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from quartermap import pruning, ss2d
from quartermap.profiling import Profiler
from quartermap.pruning import (
    QuarterMapConfig,
    SkipPolicy,
    Upsample,
    prune,
    pruned_blocks,
    quartermap_ss2d,
    retained_indices,
    should_prune,
    upsample_bicubic,
    upsample_bilinear,
    upsample_nearest,
)
from quartermap.ssm_core import SsmBlockParams
from quartermap.tensor_core import FeatureMap, fill_seeded

TINY = (2, 2, 8, 2)


def four(d, n=2, seed=0):
    return [SsmBlockParams.seeded(d, n, seed * 4 + k, d_skip=None) for k in range(4)]


# config ----------------------------------------------------------------------


def test_config_defaults():
    cfg = QuarterMapConfig()
    assert (cfg.k, cfg.m, cfg.n, cfg.upsample, cfg.skip_policy) == (3, 2, 1, Upsample.NEAREST, SkipPolicy.EXCLUDE_FIRST_LAYER)
    assert QuarterMapConfig(upsample="bicubic", skip_policy="first-two").upsample is Upsample.BICUBIC


@pytest.mark.parametrize("kwargs", [dict(k=0), dict(m=0), dict(n=0), dict(m=2, n=3), dict(upsample="area")])
def test_config_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        QuarterMapConfig(**kwargs)


# retained_indices -------------------------------------------------------------


@pytest.mark.parametrize(
    "extent,m,n,expected",
    [(8, 2, 1, [0, 2, 4, 6]), (7, 2, 1, [0, 2, 4, 6]), (8, 4, 1, [0, 4]), (6, 3, 2, [0, 1, 3, 4])],
)
def test_retained_examples(extent, m, n, expected):
    assert retained_indices(extent, m, n) == expected == oracles.retained(extent, m, n)


def test_retained_rejects_n_above_m():
    with pytest.raises(ValueError, match="n=3"):
        retained_indices(5, 2, 3)
    with pytest.raises(ValueError):
        retained_indices(0, 2, 1)


@settings(max_examples=200, deadline=None)
@given(extent=st.integers(1, 80), m=st.integers(1, 9), data=st.data())
def test_retained_matches_block_walk(extent, m, data):
    n = data.draw(st.integers(1, m))
    got = retained_indices(extent, m, n)
    assert got == oracles.retained(extent, m, n)
    assert len(got) == pruning.pruned_extent(extent, m, n)
    if n == 1:
        assert len(got) == math.ceil(extent / m)


# prune -----------------------------------------------------------------------


def test_prune_m1_identity():
    x = fill_seeded(5, 4, 3, 0)
    assert np.array_equal(prune(x, 1, 1).data, x.data)


def test_prune_quarter_even_grid():
    x = fill_seeded(8, 8, 3, 1)
    out = prune(x, 2, 1)
    assert out.shape == (4, 4, 3)
    assert np.array_equal(out.array, x.array[::2, ::2])


def test_prune_matches_gather_oracle():
    x = fill_seeded(5, 3, 2, 2)
    out = prune(x, 2, 1)
    assert out.shape == (3, 2, 2)
    assert np.array_equal(out.array, oracles.prune(x.array, 2, 1))
    assert out.get(2, 1, 1) == x.get(4, 2, 1)


def test_prune_shape_law_exhaustive():
    for h in range(1, 34):
        for w in range(1, 34):
            x = np.zeros((h, w, 1), np.float32)
            for m in range(1, 9):
                assert pruning.prune_array(x, m, 1).shape == (math.ceil(h / m), math.ceil(w / m), 1)


def test_ceil_shape_helper():
    assert pruning.ceil_shape(7, 9, 2) == (4, 5)
    assert pruning.ceil_shape(9, 9, 3, 2) == (6, 6)


# upsampling ------------------------------------------------------------------


def test_nearest_single_source():
    out = upsample_nearest(FeatureMap(1, 1, 1, [2.5]), 3, 3)
    assert out.shape == (3, 3, 1) and np.all(out.data == 2.5)


def test_nearest_factor_two_tiles():
    y = FeatureMap(2, 2, 1, [1, 2, 3, 4])
    out = upsample_nearest(y, 4, 4).array[..., 0]
    assert out.tolist() == [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]


def test_nearest_matches_floor_oracle():
    y = fill_seeded(3, 3, 2, 4)
    assert np.array_equal(upsample_nearest(y, 7, 7).array, oracles.upsample_nearest(y.array, 7, 7))


@pytest.mark.parametrize("method", list(Upsample))
def test_constant_map_stays_constant(method):
    y = FeatureMap(3, 2, 2, np.full(12, -1.25))
    out = pruning.upsample_array(y.array, 7, 5, method)
    assert np.allclose(out, -1.25, atol=1e-6)


def test_bilinear_closed_form_weights():
    # sources {0, 1} at 2 -> 4: half-pixel coords -0.25, 0.25, 0.75, 1.25 clamp to 0, .25, .75, 1
    y = FeatureMap(2, 1, 1, [0.0, 1.0])
    out = upsample_bilinear(y, 4, 1).data
    assert out.tolist() == [0.0, 0.25, 0.75, 1.0]


def test_bilinear_matches_oracle():
    y = fill_seeded(3, 4, 2, 7)
    got = upsample_bilinear(y, 7, 9).array
    assert np.allclose(got, oracles.upsample_bilinear(y.array, 7, 9), atol=1e-6)


def test_bicubic_matches_oracle():
    y = fill_seeded(4, 3, 2, 8)
    got = upsample_bicubic(y, 9, 8).array
    assert np.allclose(got, oracles.upsample_bicubic(y.array, 9, 8), atol=1e-6)


def test_bicubic_reproduces_ramp_away_from_border():
    src = 8
    ramp = np.arange(src, dtype=np.float32)
    y = FeatureMap.from_array(np.tile(ramp[:, None, None], (1, 3, 1)))
    out = upsample_bicubic(y, 2 * src, 3).array[:, 1, 0]
    coords = (np.arange(2 * src) + 0.5) / 2 - 0.5
    interior = (coords >= 1) & (coords <= src - 2)
    assert np.max(np.abs(out[interior] - coords[interior])) <= 1e-5


def test_keys_kernel_partition_of_unity():
    for frac in np.linspace(0, 1, 11):
        taps = [oracles.keys(frac - off) for off in (-1, 0, 1, 2)]
        assert sum(taps) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(pruning._keys_weights(np.array([frac - o for o in (-1, 0, 1, 2)])), taps)


def test_upsample_refuses_to_shrink():
    y = fill_seeded(4, 4, 1, 0)
    for fn in (upsample_nearest, upsample_bilinear, upsample_bicubic):
        with pytest.raises(ValueError, match="shrink"):
            fn(y, 3, 5)


def test_upsample_same_size_is_copy():
    y = fill_seeded(3, 3, 2, 1)
    for method in Upsample:
        assert np.array_equal(pruning.upsample_array(y.array, 3, 3, method), y.array)


@settings(max_examples=50, deadline=None)
@given(m=st.integers(2, 5), a=st.integers(1, 6), b=st.integers(1, 6), seed=st.integers(0, 1000))
def test_idempotent_projection(m, a, b, seed):
    h, w = m * a, m * b
    x = fill_seeded(h, w, 2, seed)
    small = prune(x, m, 1)
    assert np.array_equal(prune(upsample_nearest(small, h, w), m, 1).data, small.data)


# block selection -------------------------------------------------------------


def test_tiny_k3_first_layer():
    cfg = QuarterMapConfig(k=3)
    assert pruned_blocks(TINY, cfg) == {4, 7, 10, 13} == oracles.pruned_blocks(TINY, 3)


def test_k1_everything_outside_first_layer():
    assert pruned_blocks(TINY, QuarterMapConfig(k=1)) == set(range(2, 14))


@pytest.mark.parametrize("k", [1, 2, 3, 4, 7])
def test_first_layer_never_pruned(k):
    cfg = QuarterMapConfig(k=k)
    assert not any(should_prune(b, 0, b, cfg, TINY) for b in range(2))


def test_first_two_blocks_policy():
    cfg = QuarterMapConfig(k=3, skip_policy="first-two")
    assert pruned_blocks(TINY, cfg) == oracles.pruned_blocks(TINY, 3, skip_first_layer=False)
    # first layer of depth 1: the policies disagree on global block 1
    depths = (1, 2, 2, 1)
    assert 1 in pruned_blocks(depths, QuarterMapConfig(k=1))
    assert 1 not in pruned_blocks(depths, QuarterMapConfig(k=1, skip_policy="first-two"))


@settings(max_examples=100, deadline=None)
@given(depths=st.tuples(*[st.integers(1, 6)] * 4), k=st.integers(1, 6), first_layer=st.booleans())
def test_selection_matches_enumeration(depths, k, first_layer):
    policy = SkipPolicy.EXCLUDE_FIRST_LAYER if first_layer else SkipPolicy.EXCLUDE_FIRST_TWO_BLOCKS
    cfg = QuarterMapConfig(k=k, skip_policy=policy)
    assert pruned_blocks(depths, cfg) == oracles.pruned_blocks(depths, k, first_layer)


def test_layer_override():
    cfg = QuarterMapConfig(layers=(2,))
    assert pruned_blocks(TINY, cfg) == set(range(4, 12))
    assert cfg.as_dict()["layers"] == "2"


def test_should_prune_checks_consistency():
    with pytest.raises(ValueError, match="inconsistent"):
        should_prune(5, 1, 0, QuarterMapConfig(), TINY)
    with pytest.raises(ValueError, match="does not exist"):
        should_prune(2, 1, 2, QuarterMapConfig(), TINY)


# quartermap_ss2d -------------------------------------------------------------


def test_disabled_config_matches_ss2d():
    x = fill_seeded(6, 7, 3, 2)
    params = four(3)
    for method in Upsample:
        out = quartermap_ss2d(x, params, QuarterMapConfig(m=1, n=1, upsample=method))
        assert np.array_equal(out.data, ss2d.ss2d_forward(x, params).data)


def test_internal_length_quartered():
    prof = Profiler()
    pruning.quartermap_ss2d_array(fill_seeded(8, 8, 2, 0).array, four(2), QuarterMapConfig(), profiler=prof)
    assert prof.scan_lengths[-1] == [16]
    assert prof.seconds["prune_upsample"] > 0


def test_composition_oracle():
    # random 8x8x4, seed 3
    x = fill_seeded(8, 8, 4, 3)
    params = four(4, 3, 3)
    small = oracles.prune(x.array, 2, 1)
    want = oracles.upsample_nearest(oracles.ss2d(small, params), 8, 8)
    got = quartermap_ss2d(x, params, QuarterMapConfig()).array
    assert np.max(np.abs(got - want)) <= 1e-5 * np.max(np.abs(want))


@settings(max_examples=20, deadline=None)
@given(h=st.integers(1, 12), w=st.integers(1, 12), m=st.integers(1, 4), method=st.sampled_from(list(Upsample)))
def test_output_shape_preserved(h, w, m, method):
    x = fill_seeded(h, w, 2, h + w)
    out = quartermap_ss2d(x, four(2), QuarterMapConfig(m=m, upsample=method))
    assert out.shape == x.shape
    assert out.is_finite()
