# app/snn/bptt.py
"""
展开时间的反向传播（BPTT）

前向与 app.snn.core 的更新顺序完全一致，但按批、按时间主序 (T, B, n)
记录中间量；反向用代理梯度替代 Heaviside 导数，复位 v = u * (1 - s)
的梯度精确计入。

两种前向模式：
- binary: 脉冲为 0/1（训练用）
- smooth: 脉冲为代理梯度原函数（梯度校验用，此时梯度是精确导数）
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.core.exceptions import StructuralError, TrainingDiverged
from app.snn.core import SpikingNetwork, layer_input_current
from app.snn.losses import LossBreakdown, loss, loss_grad, surrogate_grad, surrogate_primitive

logger = logging.getLogger(__name__)

MODES = ("binary", "smooth")


@dataclass
class LayerTrace:
    """单层前向记录，时间维在最前"""
    presyn: np.ndarray   # (T, B, n_in) 本层接收的前馈输入
    u: np.ndarray        # (T, B, n) 复位前膜电位
    v: np.ndarray        # (T+1, B, n) 复位后膜电位，下标 0 为初始值
    i: np.ndarray        # (T+1, B, n) 突触电流
    s: np.ndarray        # (T+1, B, n) 脉冲
    fprime: np.ndarray   # (T, B, n) 代理梯度


@dataclass
class ForwardTrace:
    x: np.ndarray            # (T, B, C_in)
    layers: List[LayerTrace]
    raw_out: np.ndarray      # (T, B, C_out) 解码输出
    out: np.ndarray          # (T, B, C_out) 经读出平滑后的输出

    @property
    def outputs(self) -> np.ndarray:
        """(B, T, C_out)"""
        return np.transpose(self.out, (1, 0, 2))


NetworkGrads = Dict[str, np.ndarray]


def _locate_non_finite(arr: np.ndarray) -> Tuple[int, int]:
    """返回首个非有限值的 (时间步, 序列)"""
    idx = np.argwhere(~np.isfinite(arr))
    if idx.size == 0:
        return -1, -1
    return int(idx[0][0]), int(idx[0][1])


def forward_trace(net: SpikingNetwork, inputs: np.ndarray, slope: float, mode: str = "binary") -> ForwardTrace:
    """
    记录中间量的批前向

    Args:
        net: 网络
        inputs: (B, T, C_in)，已归一化
        slope: 代理梯度斜率
        mode: binary / smooth

    Returns:
        ForwardTrace
    """
    if mode not in MODES:
        raise StructuralError(f"unknown forward mode '{mode}'")
    if inputs.ndim != 3 or inputs.shape[2] != net.n_inputs:
        raise StructuralError(f"inputs must be (B, T, {net.n_inputs}), got {inputs.shape}")
    dtype = net.dtype
    x = np.ascontiguousarray(np.transpose(np.asarray(inputs, dtype=dtype), (1, 0, 2)))
    T, B, _ = x.shape

    traces: List[LayerTrace] = []
    a = x
    for layer in net.layers:
        n = layer.n_hidden
        u = np.empty((T, B, n), dtype)
        fprime = np.empty((T, B, n), dtype)
        v = np.zeros((T + 1, B, n), dtype)
        i = np.zeros((T + 1, B, n), dtype)
        s = np.zeros((T + 1, B, n), dtype)

        c = layer_input_current(layer, a, x)

        for t in range(T):
            cur = layer.tau_syn * i[t] + c[t]
            if layer.w_rec is not None:
                cur = cur + s[t] @ layer.w_rec.T
            i[t + 1] = cur
            u[t] = layer.tau_mem * v[t] + i[t]
            z = u[t] - layer.theta
            fprime[t] = surrogate_grad(z, slope)
            if mode == "binary":
                s[t + 1] = z > 0
            else:
                s[t + 1] = surrogate_primitive(z, slope)
            v[t + 1] = u[t] * (1 - s[t + 1])

        traces.append(LayerTrace(presyn=a, u=u, v=v, i=i, s=s, fprime=fprime))
        a = s[1:]

    raw = a @ net.w_decode.T
    out = _ema_forward(raw, net.readout_window)
    return ForwardTrace(x=x, layers=traces, raw_out=raw, out=out)


def _ema_forward(raw: np.ndarray, window: Optional[int]) -> np.ndarray:
    if not window:
        return raw
    alpha = raw.dtype.type(1.0 / window)
    out = np.empty_like(raw)
    z = np.zeros_like(raw[0])
    for t in range(raw.shape[0]):
        z = (1 - alpha) * z + alpha * raw[t]
        out[t] = z
    return out


def _ema_backward(g: np.ndarray, window: Optional[int]) -> np.ndarray:
    if not window:
        return g
    alpha = 1.0 / window
    acc = np.zeros_like(g[0])
    g_raw = np.empty_like(g)
    for t in range(g.shape[0] - 1, -1, -1):
        acc = g[t] + (1 - alpha) * acc
        g_raw[t] = alpha * acc
    return g_raw


def backward(net: SpikingNetwork, trace: ForwardTrace, g_out: np.ndarray) -> NetworkGrads:
    """
    反向传播

    Args:
        net: 网络
        trace: forward_trace 的结果
        g_out: dJ/d(out)，形状 (T, B, C_out)

    Returns:
        以参数名为键的梯度字典（与 app.snn.optim.named_parameters 对应）
    """
    grads: NetworkGrads = {}
    g_raw = _ema_backward(g_out.astype(np.float64), net.readout_window)
    last = trace.layers[-1]
    spikes_last = last.s[1:]
    T, B, _ = g_raw.shape
    grads["w_decode"] = np.einsum("tbo,tbn->on", g_raw, spikes_last)
    g_s = g_raw @ net.w_decode.astype(np.float64)

    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        lt = trace.layers[k]
        n = layer.n_hidden
        tau_m = layer.tau_mem.astype(np.float64)
        tau_s = layer.tau_syn.astype(np.float64)
        w_rec = None if layer.w_rec is None else layer.w_rec.astype(np.float64)

        du_next = np.zeros((B, n))
        di_next = np.zeros((B, n))
        dc = np.empty((T, B, n))
        d_theta = np.zeros(n)
        d_tau_m = np.zeros(n)
        d_tau_s = np.zeros(n)
        d_w_rec = None if w_rec is None else np.zeros((n, n))

        for t in range(T - 1, -1, -1):
            dv = tau_m * du_next
            di = tau_s * di_next + du_next
            ds = g_s[t]
            if w_rec is not None:
                ds = ds + di_next @ w_rec
            u = lt.u[t]
            s = lt.s[t + 1]
            q = lt.fprime[t] * (ds - dv * u)
            du = dv * (1 - s) + q
            d_theta -= q.sum(axis=0)
            d_tau_m += (du * lt.v[t]).sum(axis=0)
            d_tau_s += (di * lt.i[t]).sum(axis=0)
            if d_w_rec is not None:
                d_w_rec += di.T @ lt.s[t]
            dc[t] = di
            du_next, di_next = du, di

        grads[f"layers.{k}.w_ff"] = np.einsum("tbn,tbm->nm", dc, lt.presyn)
        if d_w_rec is not None:
            grads[f"layers.{k}.w_rec"] = d_w_rec
        if layer.w_skip is not None:
            grads[f"layers.{k}.w_skip"] = np.einsum("tbn,tbm->nm", dc, trace.x)
        grads[f"layers.{k}.tau_mem"] = d_tau_m
        grads[f"layers.{k}.tau_syn"] = d_tau_s
        grads[f"layers.{k}.theta"] = d_theta

        frozen = layer.frozen_mask
        if np.any(frozen):
            for name in ("tau_mem", "tau_syn", "theta"):
                grads[f"layers.{k}.{name}"][frozen] = 0.0
            if d_w_rec is not None:
                grads[f"layers.{k}.w_rec"][frozen, :] = 0.0

        if k > 0:
            g_s = dc @ layer.w_ff.astype(np.float64)

    dtype = net.dtype
    return {name: g.astype(dtype) for name, g in grads.items()}


def bptt_grads(
    net: SpikingNetwork,
    inputs: np.ndarray,
    targets: np.ndarray,
    slope: float,
    mse_weight: float = 1.0,
    corr_weight: float = 0.5,
    mode: str = "binary",
    seed: Optional[int] = None,
) -> Tuple[LossBreakdown, NetworkGrads]:
    """
    计算一个批次的损失与全部参数梯度

    Args:
        net: 网络（初始状态为零）
        inputs: (B, T, C_in)
        targets: (B, T, C_out)
        slope: 代理梯度斜率
        mode: binary / smooth
        seed: 仅用于发散诊断信息

    Raises:
        TrainingDiverged: 损失或梯度出现非有限值
    """
    trace = forward_trace(net, inputs, slope, mode)
    if not np.all(np.isfinite(trace.out)):
        step, seq = _locate_non_finite(trace.out)
        raise TrainingDiverged("non-finite network output", sequence=seq, step=step, seed=seed)
    pred = trace.outputs
    breakdown = loss(pred, targets, mse_weight, corr_weight)
    if not np.isfinite(breakdown.total):
        raise TrainingDiverged("non-finite loss", seed=seed)
    g_pred = loss_grad(pred, targets, mse_weight, corr_weight)
    grads = backward(net, trace, np.transpose(g_pred, (1, 0, 2)))
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for {name}", seed=seed)
    return breakdown, grads


def grad_norm(grads: NetworkGrads) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
