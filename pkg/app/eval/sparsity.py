# app/eval/sparsity.py
"""
脉冲稀疏度：每步放电神经元比例
"""
from typing import Optional, Sequence

import numpy as np

from app.schemas.reports import SparsityStats
from app.snn.core import SpikingNetwork, run_sequence

N_BINS = 20


def stats_from_fractions(fractions: np.ndarray, per_layer: Optional[Sequence[float]] = None) -> SparsityStats:
    """由每步放电比例序列计算均值与直方图"""
    fractions = np.asarray(fractions, dtype=np.float64).ravel()
    hist, edges = np.histogram(fractions, bins=N_BINS, range=(0.0, 1.0))
    return SparsityStats(
        mean=float(fractions.mean()) if fractions.size else 0.0,
        per_layer=list(per_layer or []),
        histogram=hist.tolist(),
        bin_edges=edges.tolist(),
    )


def sparsity(net: SpikingNetwork, inputs: np.ndarray) -> SparsityStats:
    """
    网络在语料上的稀疏度

    Args:
        net: 网络
        inputs: (B, T, C) 或 (T, C)，已归一化

    Returns:
        SparsityStats：均值、每层放电率、每步放电比例直方图
    """
    inputs = np.asarray(inputs)
    result = run_sequence(net, inputs)
    steps = inputs.shape[-2] * (inputs.shape[0] if inputs.ndim == 3 else 1)
    per_layer = [float(c.sum()) / (c.size * steps) for c in result.spike_counts]
    return stats_from_fractions(result.firing_fraction, per_layer)
