"""
Operator and network micro-benchmarks.

Timing follows a mobile-latency protocol: single thread, warmup runs,
then `iterations` timed runs whose mean is reported. Inputs are allocated
before the timed region, and only the operator call is timed.
"""
import json
import os
import time
import logging
import platform
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .errors import ConfigError, ShapeError
from .net_builder import DEFAULT_INPUT_HW, Network, enumerate_concat_sites, network_forward
from .nn_ops import add_elementwise, concat_channels, global_avg_pool, hard_sigmoid, profile_ops, relu
from .tensor_core import Layout, tensor_from_seed

logger = logging.getLogger(__name__)


class BenchConfig(BaseModel):
    iterations: int = Field(100, ge=1, description="Timed runs per measurement")
    warmup: int = Field(10, ge=0, description="Untimed runs before measuring")
    batch_sizes: List[int] = Field(default_factory=lambda: [1, 2, 8, 32], min_length=1)
    layout: Layout = Field(Layout.NCHW, description="Physical layout of every benchmark input")
    threads: Literal[1] = Field(1, description="Timed regions always run on one thread")


class BenchEntry(BaseModel):
    label: str
    op: str
    shape: Tuple[int, int, int, int]
    batch: int
    layout: Layout
    mean_ms: float
    std_ms: float
    min_ms: float
    median_ms: float
    site: Optional[str] = None
    share: Optional[float] = None


class BenchReport(BaseModel):
    entries: List[BenchEntry] = Field(default_factory=list)
    environment: Dict[str, str] = Field(default_factory=dict)
    totals: Dict[str, float] = Field(default_factory=dict, description="Accumulated ms per label")
    ratios: Dict[str, float] = Field(default_factory=dict, description="concat/add median-sum ratio per batch size")
    shares: Dict[str, float] = Field(default_factory=dict, description="Fraction of network time per operator type")
    baseline_shares: Dict[str, float] = Field(default_factory=dict)
    diff: Optional[float] = Field(None, description="share(concat) - share(add) across the paired runs")
    notice: str = ""

    def to_text(self) -> str:
        lines = []
        for e in self.entries:
            share = "-" if e.share is None else f"{e.share:.4f}"
            lines.append(f"label={e.label} layout={e.layout.value} batch={e.batch} mean_ms={e.mean_ms:.4f} "
                         f"std_ms={e.std_ms:.4f} min_ms={e.min_ms:.4f} share={share}")
        for key, value in self.totals.items():
            lines.append(f"total {key} ms={value:.4f}")
        for key, value in self.ratios.items():
            lines.append(f"ratio concat/add batch={key} {value:.3f}")
        if self.diff is not None:
            lines.append(f"diff concat-add share={self.diff:+.4f}")
        if self.notice:
            lines.append(f"notice {self.notice}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return self.model_dump_json(indent=4)

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        return cls.model_validate_json(text)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([e.model_dump(mode="json") for e in self.entries])


def environment_info(cfg: BenchConfig) -> Dict[str, str]:
    return {
        "host": platform.node(),
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": str(cfg.threads),
        "blas_threads_env": os.environ.get("OMP_NUM_THREADS", "unset"),
    }


def time_callable(fn: Callable[[], object], cfg: BenchConfig) -> Dict[str, float]:
    """Per-run milliseconds of `fn` after `cfg.warmup` untimed runs."""
    for _ in range(cfg.warmup):
        fn()
    samples = np.empty(cfg.iterations)
    for i in range(cfg.iterations):
        start = time.perf_counter()
        fn()
        samples[i] = (time.perf_counter() - start) * 1e3
    return {
        "mean_ms": float(samples.mean()),
        "std_ms": float(samples.std()),
        "min_ms": float(samples.min()),
        "median_ms": float(np.median(samples)),
    }


_UNARY_OPS = {"relu": relu, "avgpool": global_avg_pool, "hard_sigmoid": hard_sigmoid}
_BINARY_OPS = {"add": add_elementwise, "concat": concat_channels}
BENCH_OPS = sorted(_UNARY_OPS) + sorted(_BINARY_OPS)


def _check_operands(op: str, shapes: Sequence[Tuple[int, int, int, int]]):
    if op in _UNARY_OPS:
        if len(shapes) != 1:
            raise ShapeError(f"'{op}' takes one input, got {len(shapes)} shapes")
    elif op in _BINARY_OPS:
        if len(shapes) != 2:
            raise ShapeError(f"'{op}' takes two inputs, got {len(shapes)} shapes")
        a, b = shapes
        if op == "add" and tuple(a) != tuple(b):
            raise ShapeError(f"add needs identical shapes, got {tuple(a)} and {tuple(b)}")
        if op == "concat" and (a[0], a[2], a[3]) != (b[0], b[2], b[3]):
            raise ShapeError(f"concat needs identical n, h, w, got {tuple(a)} and {tuple(b)}")
    else:
        raise ConfigError(f"Unknown benchmark operator '{op}'. Choose from {BENCH_OPS}")


def bench_operator(op: str, shapes: Sequence[Tuple[int, int, int, int]], cfg: BenchConfig,
                   label: Optional[str] = None, site: Optional[str] = None, seed: int = 0) -> BenchEntry:
    _check_operands(op, shapes)
    inputs = [tensor_from_seed(shape, cfg.layout, seed + i) for i, shape in enumerate(shapes)]
    fn = _UNARY_OPS.get(op) or _BINARY_OPS[op]
    stats = time_callable(lambda: fn(*inputs), cfg)
    return BenchEntry(label=label or op, op=op, shape=tuple(shapes[0]), batch=shapes[0][0], layout=cfg.layout,
                      site=site, **stats)


def concat_add_totals(report: BenchReport, stat: str = "median_ms") -> pd.DataFrame:
    """
    Per-batch sums of `stat` over the concat and add entries of a suite report,
    with a `ratio` column (concat / add).

    Medians by default: a single call at bs=1 takes tens of microseconds, so
    means are dominated by interpreter overhead and scheduler outliers.
    """
    frame = report.to_frame()
    pairs = frame[frame["op"].isin(["concat", "add"])]
    table = pairs.pivot_table(index="batch", columns="op", values=stat, aggfunc="sum")
    table["ratio"] = table["concat"] / table["add"]
    return table


def bench_concat_vs_add_suite(net: Network, cfg: BenchConfig) -> BenchReport:
    """Time concat(M1, M2) against add(M1, M2) at every concat site of `net` and every batch size."""
    report = BenchReport(environment=environment_info(cfg))
    sites = enumerate_concat_sites(net)
    if not sites:
        report.notice = "network has no concat sites; nothing to compare"
        logger.warning(report.notice)
        return report

    for batch in cfg.batch_sizes:
        for site in sites:
            m1 = (batch,) + tuple(site.m1_shape[1:])
            m2 = (batch,) + tuple(site.m2_shape[1:])
            for op in ("concat", "add"):
                entry = bench_operator(op, [m1, m2], cfg, label=f"{site.scope}/{op}", site=site.scope)
                report.entries.append(entry)

    for batch, row in concat_add_totals(report).iterrows():
        report.totals[f"concat@bs{batch}"] = float(row["concat"])
        report.totals[f"add@bs{batch}"] = float(row["add"])
        report.ratios[str(batch)] = float(row["ratio"])
        logger.info("batch %d (%s): concat %.3f ms, add %.3f ms (median sums over %d sites)",
                    batch, cfg.layout.value, row["concat"], row["add"], len(sites))
    return report


def _profile_network(net: Network, cfg: BenchConfig, batch: int, input_hw, prefix: str):
    x = tensor_from_seed((batch, net.in_channels) + tuple(input_hw), cfg.layout, 0)
    for _ in range(cfg.warmup):
        network_forward(net, x)
    with profile_ops() as profiler:
        stats = time_callable(lambda: network_forward(net, x), cfg.model_copy(update={"warmup": 0}))
    op_total = sum(profiler.seconds.values())
    shares = {op: seconds / op_total for op, seconds in sorted(profiler.seconds.items())} if op_total > 0 else {}
    entries = [BenchEntry(label=f"{prefix}network", op="network", shape=x.shape, batch=batch, layout=cfg.layout,
                          **stats)]
    for op, share in shares.items():
        per_run_ms = profiler.seconds[op] * 1e3 / cfg.iterations
        entries.append(BenchEntry(label=f"{prefix}{op}", op=op, shape=x.shape, batch=batch, layout=cfg.layout,
                                  mean_ms=per_run_ms, std_ms=0.0, min_ms=per_run_ms, median_ms=per_run_ms,
                                  share=share))
    return stats, shares, entries


def bench_network(net: Network, cfg: BenchConfig, baseline: Optional[Network] = None, batch: int = 1,
                  input_hw=DEFAULT_INPUT_HW) -> BenchReport:
    """
    End-to-end forward timing with a per-operator-type breakdown.

    When `baseline` is given it is timed the same way; `diff` is then the
    concat share of `net` minus the add share of `baseline`, which is the
    Diff column for a concat network paired with its add-reuse twin.
    """
    report = BenchReport(environment=environment_info(cfg))
    stats, shares, entries = _profile_network(net, cfg, batch, input_hw, "")
    report.entries.extend(entries)
    report.shares = shares
    report.totals[f"network@bs{batch}"] = stats["mean_ms"]
    if baseline is not None:
        base_stats, base_shares, base_entries = _profile_network(baseline, cfg, batch, input_hw, "baseline/")
        report.entries.extend(base_entries)
        report.baseline_shares = base_shares
        report.totals[f"baseline@bs{batch}"] = base_stats["mean_ms"]
        report.diff = shares.get("concat", 0.0) - base_shares.get("add", 0.0)
    logger.info("Network forward at batch %d: %.3f ms mean over %d runs", batch, stats["mean_ms"], cfg.iterations)
    return report


def operator_time_share(report: BenchReport, op_type: str) -> float:
    return report.shares.get(op_type, 0.0)


def write_report(report: BenchReport, path: str, fmt: str = "text"):
    with open(path, "w", encoding="utf-8") as f:
        f.write(report.to_json() if fmt == "machine" else report.to_text() + "\n")


def load_report(path: str) -> BenchReport:
    with open(path, "r", encoding="utf-8") as f:
        return BenchReport.model_validate(json.load(f))
