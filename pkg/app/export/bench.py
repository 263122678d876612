# app/export/bench.py
"""
单步推理耗时基准（单线程）
"""
import logging
import time
from typing import Optional

import numpy as np

from app.compose.prune import estimate_ops
from app.schemas.reports import BenchReport
from app.snn.core import SpikingNetwork, network_step, reset_states

logger = logging.getLogger(__name__)

WARMUP_STEPS = 1000


def bench_inference(
    net: SpikingNetwork,
    n_steps: int = 100000,
    inputs: Optional[np.ndarray] = None,
    seed: int = 0,
) -> BenchReport:
    """
    逐步推理计时

    Args:
        net: 网络（通常为剪枝后的合并网络）
        n_steps: 计时步数
        inputs: (T, C) 已归一化的探针输入，循环使用；None 时用标准正态随机输入
        seed: 随机输入种子

    Returns:
        BenchReport：p50/p99/均值（微秒）与运算量估计
    """
    if inputs is None:
        inputs = np.random.default_rng(seed).standard_normal((4096, net.n_inputs))
    inputs = np.asarray(inputs, dtype=net.dtype)
    n_samples = inputs.shape[0]

    states = reset_states(net)
    for t in range(min(WARMUP_STEPS, n_steps)):
        states, _, _ = network_step(net, states, inputs[t % n_samples])

    states = reset_states(net)
    timings = np.empty(n_steps, dtype=np.int64)
    spikes = [0.0] * len(net.layers)
    for t in range(n_steps):
        x = inputs[t % n_samples]
        start = time.perf_counter_ns()
        states, _, record = network_step(net, states, x)
        timings[t] = time.perf_counter_ns() - start
        for k, s in enumerate(record):
            spikes[k] += float(s.sum())

    rates = [spikes[k] / (width * n_steps) for k, width in enumerate(net.widths)]
    ops = estimate_ops(net, rates)
    us = timings / 1e3
    report = BenchReport(
        n_steps=n_steps,
        p50_us=float(np.percentile(us, 50)),
        p99_us=float(np.percentile(us, 99)),
        mean_us=float(us.mean()),
        widths=net.widths,
        ops_dense=ops["dense"],
        ops_at_sparsity=ops["at_sparsity"],
        measured_sparsity=sum(spikes) / (sum(net.widths) * n_steps),
    )
    logger.info(f"⏱️ {net.name} {net.widths}: p50 {report.p50_us:.1f} us, p99 {report.p99_us:.1f} us, "
                f"{report.ops_at_sparsity:.0f} additions/step at sparsity {report.measured_sparsity:.3f}")
    return report
