# app/eval/correlation.py
"""
相关系数-时移曲线
rho(d) 为网络输出与提前 d 步的专家目标之间的 Pearson 相关系数：
输出比目标滞后 k 步时，曲线在 d = k 处取得峰值。
"""
import logging
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd

from app.core.exceptions import InvalidSequenceError
from app.dataset.sequences import SequenceBatch
from app.schemas.reports import CorrelationCurve
from app.snn.core import SpikingNetwork, run_sequence
from app.snn.losses import pearson

logger = logging.getLogger(__name__)


def shifted_pearson(outputs: np.ndarray, targets: np.ndarray, d: int) -> np.ndarray:
    """
    单个时移下逐通道的相关系数（对序列平均）

    Args:
        outputs: (B, T, C) 或 (T, C)
        targets: 同形状
        d: 时移（步），d > 0 表示把输出与更早的目标对齐

    Returns:
        (C,) 相关系数
    """
    out = np.asarray(outputs)
    tgt = np.asarray(targets)
    if out.ndim == 2:
        out, tgt = out[None], tgt[None]
    T = out.shape[1]
    if abs(d) >= T - 1:
        raise InvalidSequenceError(f"shift {d} too large for sequences of length {T}")
    if d >= 0:
        rho, _ = pearson(out[:, d:], tgt[:, :T - d])
    else:
        rho, _ = pearson(out[:, :T + d], tgt[:, -d:])
    return rho.mean(axis=0)


def curve_from_outputs(
    outputs: np.ndarray,
    targets: np.ndarray,
    shift_range: int,
    channels: Sequence[str],
) -> CorrelationCurve:
    """由输出与目标计算 d ∈ [-shift_range, shift_range] 的曲线"""
    shifts = list(range(-shift_range, shift_range + 1))
    rho = [shifted_pearson(outputs, targets, d).tolist() for d in shifts]
    mean_rho = np.mean(np.asarray(rho), axis=1)
    peak = shifts[int(np.argmax(mean_rho))]
    return CorrelationCurve(shifts=shifts, channels=list(channels), rho=rho, peak_shift=peak)


def correlation_vs_shift(net: SpikingNetwork, corpus: SequenceBatch, shift_range: int = 20) -> CorrelationCurve:
    """
    网络在语料上的相关系数-时移曲线

    Args:
        net: 网络
        corpus: 序列（目标应为未时移的专家输出，即 shift = 0）
        shift_range: 最大 |d|
    """
    if corpus.shift != 0:
        logger.warning(f"Correlation corpus targets are already shifted by {corpus.shift} steps")
    outputs = run_sequence(net, corpus.inputs).outputs
    curve = curve_from_outputs(outputs, corpus.targets, shift_range, corpus.target_labels)
    logger.info(f"Correlation peak at shift {curve.peak_shift} for {net.name}")
    return curve


def write_correlation_csv(curve: CorrelationCurve, path: Union[str, Path]) -> None:
    """写出 corr_vs_shift.csv：d 与每个通道的 rho"""
    frame = pd.DataFrame(curve.rho, columns=curve.channels)
    frame.insert(0, "d", curve.shifts)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)


def peak_shifts(curve: CorrelationCurve) -> List[int]:
    """每个通道各自的峰值时移"""
    rho = np.asarray(curve.rho)
    return [curve.shifts[int(i)] for i in np.argmax(rho, axis=0)]
