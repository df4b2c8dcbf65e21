import json

import numpy as np
import pytest

import oracles
from quartermap import model as qmodel
from quartermap.model import block_flops, build_model, export_weights, flop_count, forward, forward_arrays, preset
from quartermap.profiling import Profiler
from quartermap.pruning import QuarterMapConfig
from quartermap.tensor_core import FeatureMap, fill_seeded, read_qmap


def images(cfg, count, seed):
    return [fill_seeded(cfg.input_hw, cfg.input_hw, 3, seed * 100 + i) for i in range(count)]


@pytest.fixture(scope="module")
def micro():
    return build_model(preset("micro"))


def test_presets():
    tiny = preset("tiny")
    assert tiny.depths == (2, 2, 8, 2) and tiny.base_dim == 96
    assert preset("small").depths == preset("base").depths == (2, 2, 15, 2)
    assert preset("base").base_dim == 128
    assert preset("micro").num_blocks == 4
    with pytest.raises(ValueError, match="unknown preset"):
        preset("huge")


def test_extents_and_dims_tiny_128():
    cfg = preset("tiny", input_hw=128)
    assert [cfg.extent(s) for s in range(4)] == [32, 16, 8, 4]
    assert [cfg.dim(s) for s in range(4)] == [96, 192, 384, 768]
    lengths = [cfg.extent(s) ** 2 for s in range(4)]
    assert all(a == 4 * b for a, b in zip(lengths, lengths[1:]))


def test_indivisible_input_names_factor():
    with pytest.raises(ValueError, match="32"):
        preset("tiny", input_hw=100)


@pytest.mark.parametrize("kwargs", [dict(depths=(1, 1, 1)), dict(base_dim=0), dict(scan_method="fft")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        qmodel.ModelConfig(**kwargs)


def test_block_layout_order():
    cfg = preset("tiny")
    layout = list(cfg.block_layout())
    assert len(layout) == 14
    assert layout[4] == (4, 2, 0) and layout[-1] == (13, 3, 1)


def test_same_seed_bit_identical():
    cfg = preset("micro", seed=4)
    xs = images(cfg, 2, 1)
    a, _ = forward(build_model(cfg), xs)
    b, _ = forward(build_model(cfg), xs)
    for u, v in zip(a, b):
        assert np.array_equal(u.data.view(np.uint32), v.data.view(np.uint32))
    c, _ = forward(build_model(preset("micro", seed=5)), xs)
    assert not np.array_equal(a[0].data, c[0].data)


def test_tiny_output_shape():
    cfg = preset("tiny", input_hw=128)
    outs, report = forward(build_model(cfg), images(cfg, 2, 5))
    assert [o.shape for o in outs] == [(4, 4, 768)] * 2
    assert all(o.is_finite() for o in outs)
    assert report.batch == 2 and report.images_per_second > 0


def test_disabled_pruning_identical(micro):
    xs = images(micro.cfg, 2, 0)
    base, _ = forward(micro, xs)
    for k in (1, 2, 5):
        outs, _ = forward(micro, xs, QuarterMapConfig(k=k, m=1, n=1))
        assert all(np.array_equal(a.data, b.data) for a, b in zip(base, outs))


def test_micro_scan_lengths_quartered(micro):
    qm = QuarterMapConfig(k=1, m=2, n=1)
    _, base = forward(micro, images(micro.cfg, 1, 0))
    _, rep = forward(micro, images(micro.cfg, 1, 0), qm)
    # micro at 32: extents 8, 4, 2, 1; block 0 sits in the skipped first layer
    assert base.scan_lengths == {0: 64, 1: 16, 2: 4, 3: 1}
    assert rep.scan_lengths == {0: 64, 1: 4, 2: 1, 3: 1}


def test_pruning_changes_output(micro):
    xs = images(micro.cfg, 1, 2)
    base, _ = forward(micro, xs)
    outs, _ = forward(micro, xs, QuarterMapConfig(k=1))
    assert not np.array_equal(base[0].data, outs[0].data)


def test_input_shape_mismatch(micro):
    with pytest.raises(ValueError, match="model expects"):
        forward(micro, [FeatureMap.zeros(16, 16, 3)])
    with pytest.raises(ValueError):
        forward(micro, [FeatureMap.zeros(32, 32, 4)])
    with pytest.raises(TypeError):
        forward(micro, [np.zeros((32, 32, 3))])


def test_threads_do_not_change_outputs(micro):
    xs = [x.array for x in images(micro.cfg, 4, 3)]
    seq, r1 = forward_arrays(micro, xs, QuarterMapConfig(k=1))
    par, r2 = forward_arrays(micro, xs, QuarterMapConfig(k=1), threads=3)
    assert all(np.array_equal(a, b) for a, b in zip(seq, par))
    assert r1.scan_lengths == r2.scan_lengths and r2.batch == 4


def test_report_components_bounded(micro):
    _, rep = forward(micro, images(micro.cfg, 2, 0), QuarterMapConfig(k=1))
    parts = rep.scan_kernel_ms + rep.prune_upsample_ms + rep.crossscan_merge_ms
    assert parts <= rep.total_ms + 1e-9
    assert rep.other_ms == pytest.approx(rep.total_ms - parts, abs=1e-6)


# FLOPs -----------------------------------------------------------------------


def test_pruned_block_is_quarter_of_scan_path():
    for e in (2, 4, 8, 32):
        full = block_flops(e, e, 96, 4)
        pruned = block_flops(e, e, 96, 4, QuarterMapConfig())
        assert 4 * pruned["scan_path"] == full["scan_path"]
        assert pruned["length"] * 4 == full["length"]
        assert pruned["upsample"] == 0


def test_upsample_flops_per_method():
    e, d = 8, 16
    assert block_flops(e, e, d, 4, QuarterMapConfig(upsample="bilinear"))["upsample"] == 8 * e * e * d
    assert block_flops(e, e, d, 4, QuarterMapConfig(upsample="bicubic"))["upsample"] == 32 * e * e * d


def test_scan_flops_closed_form():
    row = block_flops(4, 6, 8, 3)
    assert row["scan"] == 4 * 24 * 8 * 3 * qmodel.SCAN_FLOPS_PER_ELEMENT
    assert row["projection"] == 4 * 24 * 8 * 3 * 2


def test_disabled_flop_table_identical():
    cfg = preset("tiny")
    assert flop_count(cfg, QuarterMapConfig(m=1, n=1)).as_dict() == flop_count(cfg, None).as_dict()


def test_k3_reduction_matches_enumeration():
    cfg = preset("tiny", input_hw=128)
    base = flop_count(cfg)
    pruned = flop_count(cfg, QuarterMapConfig(k=3))
    chosen = oracles.pruned_blocks(cfg.depths, 3)
    want = sum(0.75 * row["scan_path"] for row in base.blocks if row["block"] in chosen)
    assert base.total - pruned.total == want
    assert [r["block"] for r in pruned.blocks if r["pruned"]] == sorted(chosen)


def test_flop_table_sums():
    table = flop_count(preset("tiny"), QuarterMapConfig(k=2))
    stages = table.stages()
    assert sum(s["total"] for s in stages) == sum(r["total"] for r in table.blocks)
    assert table.total == table.embed + sum(table.downsample) + sum(s["total"] for s in stages)
    assert [s["blocks"] for s in stages] == [2, 2, 8, 2]


# export ----------------------------------------------------------------------


def test_export_weights_manifest(tmp_path, micro):
    path = export_weights(micro, tmp_path / "w")
    manifest = json.loads(path.read_text())
    assert manifest["config"]["depths"] == [1, 1, 1, 1]
    names = [e["name"] for e in manifest["arrays"]]
    assert len(names) == len(set(names))
    assert names[0] == "patch_embed" and names[-1] == "downsample2"
    for entry in manifest["arrays"][:6]:
        fm = read_qmap(tmp_path / "w" / entry["file"])
        assert fm.h * fm.w * fm.d == int(np.prod(entry["shape"]))
    embed = read_qmap(tmp_path / "w" / "patch_embed.qmap")
    assert np.array_equal(embed.array[..., 0], micro.patch_embed)


def test_profiler_is_per_item(micro):
    prof = Profiler()
    qmodel.forward_image(micro, images(micro.cfg, 1, 0)[0].array, None, prof)
    assert prof.total > 0 and prof.seconds["scan"] > 0
    assert sorted(prof.scan_lengths) == [0, 1, 2, 3]
