import os
import sys
import json
import time
import argparse
import logging
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from .bench import BenchConfig, bench_concat_vs_add_suite, bench_network, write_report
from .errors import ConfigError, RepGhostError
from .net_builder import (
    DEFAULT_INPUT_HW,
    Network,
    build_network,
    convert_network,
    count_flops,
    count_params,
    has_unfusible_modules,
    is_deploy,
    load_architecture,
    make_network_spec,
    verify_network,
)
from .reparam import DEFAULT_VARIANT, REPARAM_VARIANTS
from .tensor_core import Layout
from .weights_io import count_bn_entries, load_archive, read_manifest, save_archive

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2

SUBCOMMANDS = ("count", "convert", "verify", "bench-op", "bench-net", "export", "import")


class CliConfig(BaseModel):
    """Validated command-line settings."""
    subcommand: Literal[SUBCOMMANDS]
    arch: Literal["repghost", "ghost"] = "repghost"
    width: float = Field(1.0, gt=0, description="Width multiplier")
    no_shortcut: bool = False
    seed: int = 0
    layout: Layout = Layout.NCHW
    batch_sizes: List[int] = Field(default_factory=lambda: [1, 2, 8, 32], min_length=1)
    iters: int = Field(100, ge=1)
    warmup: int = Field(10, ge=0)
    input_hw: Tuple[int, int] = DEFAULT_INPUT_HW
    weights: Optional[str] = None
    out: Optional[str] = None
    format: Literal["text", "machine"] = "text"
    arch_file: Optional[str] = None
    variant: str = DEFAULT_VARIANT
    reuse: Literal["concat", "add"] = "concat"
    trials: int = Field(5, ge=1)
    tol: float = Field(1e-4, gt=0)
    deploy: bool = False
    baseline_add: bool = False
    threads: int = Field(1, ge=1, description="Forward threads for untimed commands (REPGHOST_THREADS)")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--arch", choices=["repghost", "ghost"], default="repghost", help="Network family.")
    common.add_argument("--width", type=float, default=1.0, help="Width multiplier (> 0).")
    common.add_argument("--no-shortcut", action="store_true", help="Remove identity shortcuts (ablation).")
    common.add_argument("--seed", type=int, default=0, help="Seed for weights and inputs.")
    common.add_argument("--layout", choices=[l.value for l in Layout], default="nchw", help="Tensor layout.")
    common.add_argument("--batch-sizes", type=int, nargs="+", default=[1, 2, 8, 32], help="Benchmark batch sizes.")
    common.add_argument("--iters", type=int, default=100, help="Timed iterations per measurement.")
    common.add_argument("--warmup", type=int, default=10, help="Untimed warmup iterations.")
    common.add_argument("--input-hw", type=int, nargs=2, default=list(DEFAULT_INPUT_HW), metavar=("H", "W"),
                        help="Input spatial size.")
    common.add_argument("--weights", type=str, help="Weight archive to load instead of seeded init.")
    common.add_argument("--out", type=str, help="Output path (archive or report).")
    common.add_argument("--format", choices=["text", "machine"], default="text", help="Output format.")
    common.add_argument("--arch-file", type=str, help="Architecture table file (defaults to the bundled one).")
    common.add_argument("--variant", choices=sorted(REPARAM_VARIANTS), default=DEFAULT_VARIANT,
                        help="Re-parameterization branch set of every RepGhost module.")
    common.add_argument("--reuse", choices=["concat", "add"], default="concat",
                        help="Feature reuse operator of Ghost modules.")
    common.add_argument("--trials", type=int, default=5, help="Random inputs for verify.")
    common.add_argument("--tol", type=float, default=1e-4, help="Pass threshold for verify.")

    parser = argparse.ArgumentParser(
        prog="repGhostToolkit",
        description="Build, re-parameterize, verify, count and benchmark GhostNet / RepGhostNet on CPU."
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("count", parents=[common], help="Print parameter and FLOPs counts (train and fused).")
    sub.add_parser("convert", parents=[common], help="Fuse a train-form network and write the deploy archive.")
    sub.add_parser("verify", parents=[common], help="Check train vs deploy equivalence on seeded inputs.")
    sub.add_parser("bench-op", parents=[common], help="Time concat vs add at every concat site.")
    bench_net = sub.add_parser("bench-net", parents=[common], help="Time whole-network forwards.")
    bench_net.add_argument("--baseline-add", action="store_true",
                           help="Also time the add-reuse Ghost network and report the concat/add share diff.")
    bench_net.add_argument("--train-form", action="store_true", help="Time the train form instead of deploy.")
    export = sub.add_parser("export", parents=[common], help="Write a seeded network to an archive.")
    export.add_argument("--deploy", action="store_true", help="Convert before writing.")
    sub.add_parser("import", parents=[common], help="Load an archive and report what it holds.")
    return parser


def _threads_from_env() -> int:
    raw = os.getenv("REPGHOST_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"REPGHOST_THREADS must be an integer, got '{raw}'")
    if threads < 1:
        raise ConfigError(f"REPGHOST_THREADS must be >= 1, got {threads}")
    return threads


def _make_spec(cfg: CliConfig, arch: Optional[str] = None, reuse: Optional[str] = None):
    table = load_architecture(cfg.arch_file) if cfg.arch_file else None
    return make_network_spec(arch or cfg.arch, cfg.width, use_shortcut=not cfg.no_shortcut, variant=cfg.variant,
                             reuse=reuse or cfg.reuse, table=table)


def _network(cfg: CliConfig) -> Network:
    spec = _make_spec(cfg)
    if cfg.weights:
        return load_archive(cfg.weights, spec)
    return build_network(spec, cfg.seed)


def _emit(cfg: CliConfig, text: str, payload: dict):
    output = json.dumps(payload, indent=4) if cfg.format == "machine" else text
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as f:
            f.write(output + "\n")
        logger.info("Wrote report to %s", cfg.out)
    else:
        print(output)


def _cmd_count(cfg: CliConfig) -> int:
    net = _network(cfg)
    hw = tuple(cfg.input_hw)
    payload = {"arch": cfg.arch, "width": cfg.width, "variant": cfg.variant, "input_hw": list(hw),
               "params_train": count_params(net, fused=False), "flops_train": count_flops(net, hw, fused=False)}
    if has_unfusible_modules(net):
        logger.warning("Variant '%s' cannot be fused; reporting train-form counts only", cfg.variant)
    else:
        payload["params_fused"] = count_params(net, fused=True)
        payload["flops_fused"] = count_flops(net, hw, fused=True)
        payload["params_delta"] = payload["params_train"] - payload["params_fused"]
    text = "\n".join(f"{key}={value}" for key, value in payload.items())
    _emit(cfg, text, payload)
    return EXIT_OK


def _cmd_convert(cfg: CliConfig) -> int:
    if not cfg.out:
        raise ConfigError("convert needs --out for the deploy archive")
    net = _network(cfg)
    deploy = convert_network(net)
    size = save_archive(deploy, cfg.out)
    print(f"deploy archive {cfg.out}: {count_params(deploy, fused=False)} params, {size} bytes")
    return EXIT_OK


def _cmd_verify(cfg: CliConfig) -> int:
    net = _network(cfg)
    if is_deploy(net):
        raise ConfigError("verify needs a train-form network; the loaded archive is already converted")
    report = verify_network(net, trials=cfg.trials, tol=cfg.tol, input_hw=tuple(cfg.input_hw), seed=cfg.seed,
                            threads=cfg.threads)
    payload = report.model_dump()
    text = (f"trials={report.trials} max_abs_diff={report.max_abs_diff:.3e} tol={report.tol:.1e} "
            f"result={'PASS' if report.passed else 'FAIL'}")
    _emit(cfg, text, payload)
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def _bench_config(cfg: CliConfig) -> BenchConfig:
    return BenchConfig(iterations=cfg.iters, warmup=cfg.warmup, batch_sizes=cfg.batch_sizes, layout=cfg.layout)


def _emit_report(cfg: CliConfig, report):
    if cfg.out:
        write_report(report, cfg.out, cfg.format)
        logger.info("Wrote benchmark report to %s", cfg.out)
    else:
        print(report.to_json() if cfg.format == "machine" else report.to_text())


def _cmd_bench_op(cfg: CliConfig) -> int:
    net = _network(cfg)
    _emit_report(cfg, bench_concat_vs_add_suite(net, _bench_config(cfg)))
    return EXIT_OK


def _cmd_bench_net(cfg: CliConfig, train_form: bool = False) -> int:
    net = _network(cfg)
    if cfg.arch == "repghost" and not train_form and not is_deploy(net):
        net = convert_network(net)
    baseline = None
    if cfg.baseline_add:
        baseline = build_network(_make_spec(cfg, arch="ghost", reuse="add"), cfg.seed)
    bench_cfg = _bench_config(cfg)
    report = bench_network(net, bench_cfg, baseline=baseline, batch=bench_cfg.batch_sizes[0],
                           input_hw=tuple(cfg.input_hw))
    _emit_report(cfg, report)
    return EXIT_OK


def _cmd_export(cfg: CliConfig) -> int:
    if not cfg.out:
        raise ConfigError("export needs --out")
    net = build_network(_make_spec(cfg), cfg.seed)
    if cfg.deploy:
        net = convert_network(net)
    size = save_archive(net, cfg.out)
    print(f"wrote {cfg.out} ({size} bytes, {'deploy' if cfg.deploy else 'train'} form)")
    return EXIT_OK


def _cmd_import(cfg: CliConfig) -> int:
    if not cfg.weights:
        raise ConfigError("import needs --weights")
    manifest = read_manifest(cfg.weights)
    net = load_archive(cfg.weights, _make_spec(cfg))
    payload = {
        "path": cfg.weights,
        "deploy": bool(manifest.get("deploy")),
        "tensors": len(manifest["tensors"]),
        "bn_entries": count_bn_entries(cfg.weights),
        "params": count_params(net, fused=False),
    }
    text = "\n".join(f"{key}={value}" for key, value in payload.items())
    _emit(cfg, text, payload)
    return EXIT_OK


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Parse `argv`, run one subcommand and return its exit code."""
    load_dotenv()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 on --help
        code = e.code if isinstance(e.code, int) else EXIT_USAGE
        if code != EXIT_OK:
            parser.print_help(sys.stderr)
        return code

    try:
        cfg = CliConfig(
            subcommand=args.subcommand,
            arch=args.arch,
            width=args.width,
            no_shortcut=args.no_shortcut,
            seed=args.seed,
            layout=args.layout,
            batch_sizes=args.batch_sizes,
            iters=args.iters,
            warmup=args.warmup,
            input_hw=tuple(args.input_hw),
            weights=args.weights,
            out=args.out,
            format=args.format,
            arch_file=args.arch_file,
            variant=args.variant,
            reuse=args.reuse,
            trials=args.trials,
            tol=args.tol,
            deploy=getattr(args, "deploy", False),
            baseline_add=getattr(args, "baseline_add", False),
            threads=_threads_from_env(),
        )
        if cfg.subcommand == "count":
            return _cmd_count(cfg)
        if cfg.subcommand == "convert":
            return _cmd_convert(cfg)
        if cfg.subcommand == "verify":
            return _cmd_verify(cfg)
        if cfg.subcommand == "bench-op":
            return _cmd_bench_op(cfg)
        if cfg.subcommand == "bench-net":
            return _cmd_bench_net(cfg, train_form=getattr(args, "train_form", False))
        if cfg.subcommand == "export":
            return _cmd_export(cfg)
        return _cmd_import(cfg)
    except ValidationError as e:
        logger.error("Invalid arguments: %s", e)
        return EXIT_USAGE
    except (RepGhostError, OSError) as e:
        logger.error(e)
        return EXIT_USAGE


def cli() -> None:
    """Command-line interface for repGhostToolkit."""
    logging.basicConfig(level=logging.INFO, format='%(levelname)s: %(message)s')
    start_time = time.time()
    code = run_cli()
    logging.info(f"Total elapsed time: {time.time() - start_time:.2f} seconds")
    sys.exit(code)


if __name__ == "__main__":
    cli()
