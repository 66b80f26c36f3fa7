from .tensor_core import Layout, Rng, Tensor, layout_convert, max_abs_diff, tensor_from_seed
from .nn_ops import (
    BatchNormParams,
    Conv2dParams,
    SEParams,
    add_elementwise,
    batch_norm_infer,
    concat_channels,
    conv2d,
    global_avg_pool,
    hard_sigmoid,
    profile_ops,
    relu,
    se_forward,
    slice_channels,
)
from .reparam import (
    BranchKind,
    RepGhostModuleDeploy,
    RepGhostModuleTrain,
    as_train_form,
    bn_to_depthwise_kernel,
    fold_bn_into_conv,
    forward_deploy,
    forward_train,
    fuse_module,
    pad_kernel_to,
    verify_equivalence,
)
from .net_builder import (
    NetworkSpec,
    build_ghostnet,
    build_repghostnet,
    convert_network,
    count_flops,
    count_params,
    enumerate_concat_sites,
    make_divisible,
    network_forward,
)
from .bench import BenchConfig, BenchReport, bench_concat_vs_add_suite, bench_network, bench_operator
from .weights_io import load_archive, save_archive
from .main import run_cli

__all__ = [
    "Layout",
    "Rng",
    "Tensor",
    "layout_convert",
    "max_abs_diff",
    "tensor_from_seed",
    "BatchNormParams",
    "Conv2dParams",
    "SEParams",
    "add_elementwise",
    "batch_norm_infer",
    "concat_channels",
    "conv2d",
    "global_avg_pool",
    "hard_sigmoid",
    "profile_ops",
    "relu",
    "se_forward",
    "slice_channels",
    "BranchKind",
    "RepGhostModuleDeploy",
    "RepGhostModuleTrain",
    "as_train_form",
    "bn_to_depthwise_kernel",
    "fold_bn_into_conv",
    "forward_deploy",
    "forward_train",
    "fuse_module",
    "pad_kernel_to",
    "verify_equivalence",
    "NetworkSpec",
    "build_ghostnet",
    "build_repghostnet",
    "convert_network",
    "count_flops",
    "count_params",
    "enumerate_concat_sites",
    "make_divisible",
    "network_forward",
    "BenchConfig",
    "BenchReport",
    "bench_concat_vs_add_suite",
    "bench_network",
    "bench_operator",
    "load_archive",
    "save_archive",
    "run_cli",
]
