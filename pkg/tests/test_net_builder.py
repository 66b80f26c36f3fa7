import numpy as np
import pytest

from repGhostToolkit.errors import ConfigError, ShapeError
from repGhostToolkit.initializers import ParamFactory
from repGhostToolkit.net_builder import (
    ConvBnAct,
    GhostModule,
    bottleneck_branch_counts,
    build_ghostnet,
    build_repghostnet,
    conv_macs,
    convert_network,
    count_flops,
    count_operators,
    count_params,
    enumerate_concat_sites,
    intra_module_joins,
    is_deploy,
    load_architecture,
    load_parameters,
    make_divisible,
    named_parameters,
    network_forward,
    verify_network,
)
from repGhostToolkit.reparam import RepGhostModuleDeploy
from repGhostToolkit.tensor_core import Layout, Tensor, max_abs_diff, tensor_from_seed

WIDTHS = [0.5, 0.58, 1.0, 1.11, 1.3, 1.5]


@pytest.fixture(scope="module")
def repghost_1x():
    return build_repghostnet(1.0, seed=0)


@pytest.fixture(scope="module")
def ghost_1x():
    return build_ghostnet(1.0, seed=0)


@pytest.mark.parametrize("c, divisor, expected", [(16, 4, 16), (16 * 0.5, 4, 8), (36 * 1.3, 4, 48), (1, 4, 4),
                                                  (18, 4, 20), (5, 4, 8)])
def test_make_divisible(c, divisor, expected):
    assert make_divisible(c, divisor) == expected


def test_architecture_table_rows():
    table = load_architecture()
    assert len(table.rows) == 16
    assert [row.stride for row in table.rows].count(2) == 4
    assert (table.stem_channels, table.head_channels, table.fc_channels, table.num_classes) == (16, 960, 1280, 1000)


def test_width_one_channel_sequences(repghost_1x):
    outs = [block.module2.out_channels for block in repghost_1x.blocks]
    mids = [block.module1.out_channels for block in repghost_1x.blocks]
    assert outs == [16, 24, 24, 40, 40, 80, 80, 80, 80, 112, 112, 160, 160, 160, 160, 160]
    assert mids == [8, 24, 36, 36, 60, 120, 100, 120, 120, 240, 336, 336, 480, 480, 480, 480]


def test_half_width_stem():
    assert build_repghostnet(0.5).stem.conv.c_out == 8


def test_ghost_middle_is_twice_table_mid(ghost_1x):
    mids = [block.module1.out_channels for block in ghost_1x.blocks]
    assert mids[:3] == [16, 48, 72]
    assert isinstance(ghost_1x.blocks[0].module1, GhostModule)


def test_non_positive_width_rejected():
    with pytest.raises(ConfigError):
        build_repghostnet(0.0)
    with pytest.raises(ConfigError):
        build_ghostnet(-1.0)


@pytest.mark.parametrize("width, target", [(0.5, 2.3e6), (1.0, 4.1e6), (1.3, 5.5e6), (1.5, 6.6e6)])
def test_fused_repghost_params(width, target):
    params = count_params(build_repghostnet(width), fused=True)
    assert abs(params - target) <= 0.03 * target, f"{width}x: {params}"


@pytest.mark.parametrize("width, target", [(0.5, 2.6e6), (1.0, 5.2e6)])
def test_ghost_params(width, target):
    params = count_params(build_ghostnet(width), fused=True)
    assert abs(params - target) <= 0.03 * target, f"{width}x: {params}"


@pytest.mark.parametrize("width, target", [(0.5, 43e6), (1.0, 142e6), (1.3, 231e6), (1.5, 301e6)])
def test_repghost_flops(width, target):
    flops = count_flops(build_repghostnet(width), (224, 224), fused=True)
    assert abs(flops - target) <= 0.05 * target, f"{width}x: {flops}"


def test_ghost_flops(ghost_1x):
    flops = count_flops(ghost_1x, (224, 224))
    assert abs(flops - 141e6) <= 0.05 * 141e6


def test_single_layer_counts():
    conv = ParamFactory(0).conv(3, 16, 3, bias=True)
    assert count_params(ConvBnAct(conv)) == 448
    assert conv_macs(ParamFactory(0).conv(16, 32, 1), (56, 56)) == 1_605_632


def test_train_form_reports_more_params(repghost_1x):
    train = count_params(repghost_1x, fused=False)
    fused = count_params(repghost_1x, fused=True)
    assert train > fused
    # BN layers carry no MACs, so the default branch set costs the same convs in both forms
    assert count_flops(repghost_1x, fused=False) == count_flops(repghost_1x, fused=True)


@pytest.mark.parametrize("width", WIDTHS)
def test_repghost_cheaper_than_ghost(width):
    assert count_params(build_repghostnet(width)) < count_params(build_ghostnet(width))


@pytest.mark.parametrize("width", WIDTHS)
def test_group_four_channels_non_decreasing(width):
    net = build_repghostnet(width)
    outs = [block.module2.out_channels for block in net.blocks[5:11]]
    assert outs == sorted(outs)


@pytest.mark.parametrize("width", [0.5, 1.0])
def test_shortcut_ablation_keeps_counts(width):
    with_shortcut = build_repghostnet(width, use_shortcut=True)
    without = build_repghostnet(width, use_shortcut=False)
    assert count_params(with_shortcut) == count_params(without)
    assert count_flops(with_shortcut) == count_flops(without)
    removed = sum(1 for a, b in zip(with_shortcut.blocks, without.blocks) if a.has_shortcut and not b.has_shortcut)
    assert removed == 11
    assert all(b.downsample is None or b.has_shortcut for b in without.blocks)


def test_concat_sites(ghost_1x):
    sites = enumerate_concat_sites(ghost_1x)
    assert len(sites) == 32
    assert all(site.m1_shape == site.m2_shape for site in sites)
    assert sites[0].m1_shape == (1, 8, 112, 112)

    half = enumerate_concat_sites(build_ghostnet(0.5))
    assert len(half) == 32
    assert half[0].m1_shape == (1, 4, 112, 112)


def test_repghost_deploy_has_no_concat(repghost_1x):
    assert enumerate_concat_sites(convert_network(repghost_1x)) == []


def test_add_reuse_ghost_has_no_concat():
    net = build_ghostnet(0.5, reuse="add")
    assert enumerate_concat_sites(net) == []
    assert intra_module_joins(net) == 32


def test_deploy_structure(repghost_1x):
    deploy = convert_network(repghost_1x)
    ops = count_operators(deploy)
    assert ops["batch_norm"] == 0
    assert ops["concat"] == 0
    assert intra_module_joins(deploy) == 0
    assert bottleneck_branch_counts(deploy) == [2] * 16
    assert is_deploy(deploy) and not is_deploy(repghost_1x)
    assert all(isinstance(b.module1, RepGhostModuleDeploy) for b in deploy.blocks)


def test_train_form_has_parallel_branches(repghost_1x):
    assert count_operators(repghost_1x)["batch_norm"] > 0
    assert all(count > 2 for count in bottleneck_branch_counts(repghost_1x))


def test_convert_twice_equals_once():
    net = build_repghostnet(0.5, seed=1)
    once = convert_network(net)
    twice = convert_network(once)
    for (name_a, a), (name_b, b) in zip(named_parameters(once), named_parameters(twice)):
        assert name_a == name_b
        assert np.array_equal(a, b), name_a


def test_unfusible_variant_rejected_by_convert():
    with pytest.raises(ConfigError):
        convert_network(build_repghostnet(0.5, variant="bn+relu"))


def test_ghost_conversion_keeps_function():
    net = build_ghostnet(0.5, seed=2)
    report = verify_network(net, trials=1, input_hw=(64, 64))
    assert report.passed, report.max_abs_diff


@pytest.mark.parametrize("width", [0.5, 1.0, 1.3])
def test_network_fusion_equivalence(width):
    net = build_repghostnet(width, seed=7)
    report = verify_network(net, trials=5, input_hw=(224, 224))
    assert report.passed, f"{width}x: max diff {report.max_abs_diff}"


@pytest.mark.parametrize("width", [0.58, 1.11, 1.5])
def test_network_fusion_equivalence_other_widths(width):
    report = verify_network(build_repghostnet(width, seed=3), trials=2, input_hw=(64, 64))
    assert report.passed, f"{width}x: max diff {report.max_abs_diff}"


def test_forward_zero_input_is_finite():
    net = build_repghostnet(0.5)
    logits = network_forward(net, Tensor(np.zeros((1, 3, 32, 32), dtype=np.float32)))
    assert logits.shape == (1, 1000, 1, 1)
    assert np.all(np.isfinite(logits.logical()))


def test_forward_batch_independence():
    net = build_ghostnet(0.5, seed=4)
    x = tensor_from_seed((2, 3, 64, 64), Layout.NCHW, 5)
    both = network_forward(net, x).logical()
    for i in range(2):
        single = network_forward(net, Tensor.from_logical(x.logical()[i:i + 1]))
        assert np.abs(both[i:i + 1] - single.logical()).max() <= 1e-5


def test_threaded_forward_matches_serial():
    net = build_repghostnet(0.5, seed=6)
    x = tensor_from_seed((3, 3, 48, 48), Layout.NHWC, 1)
    serial = network_forward(net, x)
    threaded = network_forward(net, x, threads=2)
    assert max_abs_diff(serial, threaded) <= 1e-5


def test_forward_rejects_wrong_channels():
    with pytest.raises(ShapeError):
        network_forward(build_repghostnet(0.5), tensor_from_seed((1, 4, 32, 32)))


def test_load_parameters_round_trip_and_validation():
    a = build_repghostnet(0.5, seed=1)
    b = build_repghostnet(0.5, seed=2)
    restored = load_parameters(b, dict(named_parameters(a)))
    x = tensor_from_seed((1, 3, 32, 32), Layout.NCHW, 0)
    assert network_forward(restored, x) == network_forward(a, x)

    mapping = dict(named_parameters(a))
    mapping["stem.conv.weight"] = np.zeros((4, 3, 3, 3), dtype=np.float32)
    with pytest.raises(ConfigError, match="stem.conv.weight"):
        load_parameters(b, mapping)


def test_custom_architecture_file(tmp_path):
    content = load_architecture().model_dump()
    path = tmp_path / "arch.txt"
    rows = ["# tiny", "input operator mid out se stride", "224^2x3 Conv3x3 - 16 - 2"]
    for row in content["rows"][:3]:
        se = "1" if row["use_se"] else "-"
        rows.append(f"{row['input_hw']}^2x{row['in_channels']} RG-bneck {row['c_mid_half']} {row['c_out']} "
                    f"{se} {row['stride']}")
    rows += ["56^2x24 Conv1x1 - 96 - 1", "56^2x96 AvgPool - 96 - -", "1^2x96 Conv1x1 - 128 - 1",
             "1^2x128 Conv1x1 - 10 - 1"]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    table = load_architecture(str(path), identifier="tiny")
    net = build_repghostnet(1.0, table=table)
    assert len(net.blocks) == 3 and net.out_channels == 10
    assert network_forward(net, tensor_from_seed((1, 3, 32, 32))).shape == (1, 10, 1, 1)

    with pytest.raises(ConfigError):
        load_architecture(str(path), identifier="missing")
