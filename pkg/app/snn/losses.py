# app/snn/losses.py
"""
损失函数与代理梯度

J = w_mse * MSE + w_corr * (1 - mean(rho))
rho 为逐通道（沿时间轴）的 Pearson 相关系数，再对批和通道平均。
评估模块复用此处的 pearson，保证训练与评估的 rho 定义一致。
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from app.core.exceptions import InvalidSequenceError, StructuralError


def surrogate_grad(x, slope: float):
    """
    缩放反正切的导数，反向传播时替代 Heaviside 导数

    Args:
        x: 膜电位减阈值
        slope: 斜率 s（> 0）

    Returns:
        1 / (1 + (slope * x)^2)
    """
    sx = slope * np.asarray(x)
    return 1.0 / (1.0 + sx * sx)


def surrogate_primitive(x, slope: float):
    """代理梯度的原函数 1/2 + arctan(s*x)/s，用作平滑前向（梯度校验）"""
    return 0.5 + np.arctan(slope * np.asarray(x)) / slope


@dataclass
class LossBreakdown:
    """损失分解"""
    total: float
    mse: float
    pearson_term: float
    rho: List[float]
    degenerate: List[Tuple[int, int]] = field(default_factory=list)  # (序列, 通道)

    def as_dict(self) -> dict:
        return {"total": self.total, "mse": self.mse, "pearson_term": self.pearson_term}


def _as_batch(pred: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise StructuralError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    if pred.ndim == 2:
        pred, target = pred[None], target[None]
    if pred.ndim != 3:
        raise StructuralError(f"expected (T, C) or (B, T, C) series, got shape {pred.shape}")
    if pred.shape[1] < 2:
        raise InvalidSequenceError(f"sequence length {pred.shape[1]} < 2")
    return pred, target


def pearson(pred: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    逐序列、逐通道的 Pearson 相关系数（沿时间轴）

    Args:
        pred: (T, C) 或 (B, T, C)
        target: 同形状

    Returns:
        (rho[B, C], degenerate[B, C])，零方差序列的 rho 记为 0 并标记
    """
    p, q = _as_batch(pred, target)
    p = p.astype(np.float64)
    q = q.astype(np.float64)
    degenerate = (np.ptp(p, axis=1) == 0) | (np.ptp(q, axis=1) == 0)
    pc = p - p.mean(axis=1, keepdims=True)
    qc = q - q.mean(axis=1, keepdims=True)
    num = (pc * qc).sum(axis=1)
    den = np.sqrt((pc * pc).sum(axis=1) * (qc * qc).sum(axis=1))
    safe = np.where(degenerate | (den == 0), 1.0, den)
    rho = np.where(degenerate | (den == 0), 0.0, num / safe)
    return np.clip(rho, -1.0, 1.0), degenerate | (den == 0)


def loss(pred: np.ndarray, target: np.ndarray, mse_weight: float = 1.0, corr_weight: float = 0.5) -> LossBreakdown:
    """
    计算组合损失

    Args:
        pred: 网络输出 (T, C) 或 (B, T, C)
        target: 目标
        mse_weight: MSE 权重
        corr_weight: 相关项权重（默认 1/2）

    Returns:
        LossBreakdown，其中 mse 已乘权重，total = mse + pearson_term
    """
    p, q = _as_batch(pred, target)
    diff = p.astype(np.float64) - q.astype(np.float64)
    mse = mse_weight * float(np.mean(diff * diff))
    rho, degenerate = pearson(p, q)
    pearson_term = corr_weight * (1.0 - float(rho.mean()))
    return LossBreakdown(
        total=mse + pearson_term,
        mse=mse,
        pearson_term=pearson_term,
        rho=rho.mean(axis=0).tolist(),
        degenerate=[(int(b), int(c)) for b, c in np.argwhere(degenerate)],
    )


def loss_grad(pred: np.ndarray, target: np.ndarray, mse_weight: float = 1.0, corr_weight: float = 0.5) -> np.ndarray:
    """
    损失对预测值的梯度 dJ/dpred，形状与 pred 相同

    零方差序列的相关项梯度为 0
    """
    p_in = np.asarray(pred)
    p, q = _as_batch(pred, target)
    p64 = p.astype(np.float64)
    q64 = q.astype(np.float64)
    B, T, C = p.shape

    grad = mse_weight * 2.0 * (p64 - q64) / p64.size

    rho, degenerate = pearson(p64, q64)
    pc = p64 - p64.mean(axis=1, keepdims=True)
    qc = q64 - q64.mean(axis=1, keepdims=True)
    pn = np.sqrt((pc * pc).sum(axis=1, keepdims=True))
    qn = np.sqrt((qc * qc).sum(axis=1, keepdims=True))
    ok = ~degenerate[:, None, :]
    pn = np.where(ok, pn, 1.0)
    qn = np.where(ok, qn, 1.0)
    drho = qc / (pn * qn) - rho[:, None, :] * pc / (pn * pn)
    grad = grad - corr_weight / (B * C) * np.where(ok, drho, 0.0)

    return grad.reshape(p_in.shape).astype(p_in.dtype)
