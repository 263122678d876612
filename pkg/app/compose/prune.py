# app/compose/prune.py
"""
按输出贡献剪枝

神经元贡献 = 参考语料上的脉冲总数 × 其所有输出权重绝对值之和（L1）。
输出权重指下一层 w_ff 的对应列，最后一层为 w_decode 的对应列；递归权重不计入。
同分数按编号从小到大优先剪除。
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import PruneRejected, StructuralError
from app.dataset.sequences import SequenceBatch
from app.schemas.reports import PruneReport
from app.snn.core import SpikingNetwork, run_sequence

logger = logging.getLogger(__name__)


def outgoing_l1(net: SpikingNetwork, k: int) -> np.ndarray:
    """第 k 层每个神经元的输出权重 L1 范数"""
    if k + 1 < len(net.layers):
        return np.abs(net.layers[k + 1].w_ff.astype(np.float64)).sum(axis=0)
    return np.abs(net.w_decode.astype(np.float64)).sum(axis=0)


def spike_counts(net: SpikingNetwork, inputs: np.ndarray) -> List[np.ndarray]:
    """参考语料上每层每个神经元的脉冲总数（inputs 已归一化，(B, T, C)）"""
    return run_sequence(net, inputs).spike_counts


def prune_order(scores: np.ndarray) -> np.ndarray:
    """剪除顺序：分数升序，同分编号升序"""
    return np.lexsort((np.arange(scores.size), scores))


def remove_neurons(net: SpikingNetwork, keep: Sequence[np.ndarray]) -> SpikingNetwork:
    """
    保留每层 keep 中的神经元，删除其余神经元在所有相邻矩阵中的行与列（含递归矩阵）

    Args:
        net: 原网络
        keep: 每层保留的神经元编号（升序）

    Returns:
        新网络
    """
    if len(keep) != len(net.layers):
        raise StructuralError("keep indices must be given for every layer")
    out = net.copy()
    for k, idx in enumerate(keep):
        idx = np.asarray(idx, dtype=np.int64)
        layer = out.layers[k]
        layer.tau_mem = layer.tau_mem[idx]
        layer.tau_syn = layer.tau_syn[idx]
        layer.theta = layer.theta[idx]
        layer.frozen_mask = layer.frozen_mask[idx]
        layer.w_ff = layer.w_ff[idx]
        if layer.w_rec is not None:
            layer.w_rec = layer.w_rec[np.ix_(idx, idx)]
        if layer.w_skip is not None:
            layer.w_skip = layer.w_skip[idx]
        if layer.i_bias is not None:
            layer.i_bias = layer.i_bias[idx]
        if k + 1 < len(out.layers):
            out.layers[k + 1].w_ff = out.layers[k + 1].w_ff[:, idx]
        else:
            out.w_decode = out.w_decode[:, idx]
    out.validate()
    return out


def estimate_ops(net: SpikingNetwork, firing_rates: Optional[Sequence[float]] = None) -> Dict[str, float]:
    """
    每步运算量估计

    dense: 由脉冲驱动的突触加法（层间前馈、递归、解码），每个连接记一次
    at_sparsity: 按各层实测放电率缩放后的加法数
    float_macs: 浮点输入编码与指令直通的乘加数（不随稀疏度变化）

    Args:
        net: 网络
        firing_rates: 每层平均放电率，None 时 at_sparsity 等于 dense
    """
    rates = list(firing_rates) if firing_rates is not None else [1.0] * len(net.layers)
    dense = 0.0
    sparse = 0.0
    float_macs = float(net.layers[0].w_ff.size)
    for k, layer in enumerate(net.layers):
        if k > 0:
            dense += layer.w_ff.size
            sparse += layer.w_ff.size * rates[k - 1]
        if layer.w_rec is not None:
            dense += layer.w_rec.size
            sparse += layer.w_rec.size * rates[k]
        if layer.w_skip is not None:
            float_macs += layer.n_hidden * int(np.count_nonzero(np.any(layer.w_skip != 0, axis=0)))
    dense += net.w_decode.size
    sparse += net.w_decode.size * rates[-1]
    return {"dense": dense, "at_sparsity": sparse, "float_macs": float_macs}


def layer_firing_rates(net: SpikingNetwork, inputs: np.ndarray) -> List[float]:
    """每层平均放电率（每神经元每步）"""
    return _rates(spike_counts(net, inputs), inputs.shape[0], inputs.shape[1])


def _rates(counts: List[np.ndarray], n_seq: int, n_steps: int) -> List[float]:
    return [float(c.sum()) / (c.size * n_seq * n_steps) for c in counts]


def _mse(net: SpikingNetwork, corpus: SequenceBatch) -> float:
    out = run_sequence(net, corpus.inputs).outputs
    return float(np.mean((out.astype(np.float64) - corpus.targets.astype(np.float64)) ** 2))


def score_and_prune(
    net: SpikingNetwork,
    corpus: SequenceBatch,
    target_widths: Sequence[int],
    max_mse_ratio: float = 1.01,
) -> Tuple[SpikingNetwork, PruneReport]:
    """
    计算贡献分数并剪枝到目标宽度

    Args:
        net: 合并后的网络
        corpus: 参考语料（merged 角色序列，输入已归一化）
        target_widths: 每层目标宽度
        max_mse_ratio: 剪枝后 / 剪枝前 MSE 的上限

    Returns:
        (剪枝后网络, PruneReport)

    Raises:
        StructuralError: 目标宽度数量不对或大于当前宽度
        PruneRejected: MSE 比值超过上限，不写出任何产物
    """
    if len(corpus) == 0:
        raise StructuralError("reference corpus is empty")
    if len(target_widths) != len(net.layers):
        raise StructuralError(f"target widths {list(target_widths)} do not match {len(net.layers)} layers")
    if any(t > w or t < 1 for t, w in zip(target_widths, net.widths)):
        raise StructuralError(f"target widths {list(target_widths)} must be within 1..{net.widths}")

    counts = spike_counts(net, corpus.inputs)
    scores = [counts[k].astype(np.float64) * outgoing_l1(net, k) for k in range(len(net.layers))]
    keep: List[np.ndarray] = []
    removed: List[List[int]] = []
    for k, (score, target) in enumerate(zip(scores, target_widths)):
        order = prune_order(score)
        drop = np.sort(order[: net.widths[k] - target])
        removed.append(drop.tolist())
        keep.append(np.setdiff1d(np.arange(net.widths[k]), drop))

    pruned = remove_neurons(net, keep)
    mse_before = _mse(net, corpus)
    mse_after = _mse(pruned, corpus)
    if mse_before > 0:
        ratio = mse_after / mse_before
    else:
        ratio = 1.0 if mse_after == 0 else float("inf")

    rates_before = _rates(counts, corpus.inputs.shape[0], corpus.inputs.shape[1])
    report = PruneReport(
        widths_before=net.widths,
        widths_after=pruned.widths,
        scores=[s.tolist() for s in scores],
        removed=removed,
        mse_before=mse_before,
        mse_after=mse_after,
        mse_ratio=ratio,
        ops_before=estimate_ops(net, rates_before),
        ops_after=estimate_ops(pruned, layer_firing_rates(pruned, corpus.inputs)),
    )
    logger.info(f"Prune {net.widths} -> {pruned.widths}: MSE {mse_before:.6f} -> {mse_after:.6f} "
                f"(ratio {ratio:.4f}), dense ops {report.ops_before['dense']:.0f} -> {report.ops_after['dense']:.0f}")
    if ratio > max_mse_ratio:
        raise PruneRejected(ratio, max_mse_ratio)
    pruned.name = "pruned"
    pruned.provenance = {**net.provenance, "created_by": "prune"}
    return pruned, report


def format_prune_report(report: PruneReport) -> str:
    """人类可读的剪枝报告表格"""
    lines = [
        f"{'layer':>5} {'before':>7} {'after':>6} {'removed':>8} {'min kept score':>15}",
        "-" * 46,
    ]
    for k, (before, after) in enumerate(zip(report.widths_before, report.widths_after)):
        removed = set(report.removed[k])
        kept = [s for i, s in enumerate(report.scores[k]) if i not in removed]
        lines.append(f"{k:>5} {before:>7} {after:>6} {len(removed):>8} {min(kept) if kept else 0.0:>15.3f}")
    lines += [
        "-" * 46,
        f"MSE before {report.mse_before:.6f}  after {report.mse_after:.6f}  ratio {report.mse_ratio:.4f}",
        f"dense additions/step {report.ops_before['dense']:.0f} -> {report.ops_after['dense']:.0f}",
        f"additions/step at measured sparsity {report.ops_before['at_sparsity']:.0f} -> "
        f"{report.ops_after['at_sparsity']:.0f}",
        f"score = {report.score_definition}",
    ]
    return "\n".join(lines)
