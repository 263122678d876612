# app/snn/core.py
"""
CUBA-LIF 脉冲神经网络前向动力学

更新顺序（每层、每步）：
    i' = tau_syn * i + input_current (+ w_rec @ s_prev)
    v' = tau_mem * v + i          # 使用上一步的电流
    s' = v' > theta               # 严格不等式
    v' = 0 where s' == 1          # 硬复位
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import StructuralError

DEFAULT_DTYPE = np.float32


@dataclass
class LayerParams:
    """单层参数（每个神经元独立的泄漏因子与阈值）"""
    tau_mem: np.ndarray
    tau_syn: np.ndarray
    theta: np.ndarray
    w_ff: np.ndarray
    w_rec: Optional[np.ndarray] = None
    frozen_mask: Optional[np.ndarray] = None
    # 非首层的浮点直通输入（合并后的指令通道）
    w_skip: Optional[np.ndarray] = None
    # 常值偏置电流，仅由合并产生（吸收归一化偏移），不参与训练
    i_bias: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.frozen_mask is None:
            self.frozen_mask = np.zeros(self.tau_mem.shape[0], dtype=bool)

    @property
    def n_hidden(self) -> int:
        return int(self.w_ff.shape[0])

    @property
    def n_in(self) -> int:
        return int(self.w_ff.shape[1])

    @property
    def recurrent(self) -> bool:
        return self.w_rec is not None

    @property
    def dtype(self):
        return self.w_ff.dtype

    def validate(self, n_inputs: Optional[int] = None) -> None:
        """检查维度与参数约束"""
        n = self.n_hidden
        for name in ("tau_mem", "tau_syn", "theta", "frozen_mask"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise StructuralError(f"{name} has shape {arr.shape}, expected ({n},)")
        if self.w_rec is not None and self.w_rec.shape != (n, n):
            raise StructuralError(f"w_rec has shape {self.w_rec.shape}, expected ({n}, {n})")
        if self.i_bias is not None and self.i_bias.shape != (n,):
            raise StructuralError(f"i_bias has shape {self.i_bias.shape}, expected ({n},)")
        if self.w_skip is not None:
            if self.w_skip.shape[0] != n or (n_inputs is not None and self.w_skip.shape[1] != n_inputs):
                raise StructuralError(f"w_skip has shape {self.w_skip.shape}, expected ({n}, {n_inputs})")
        if np.any(self.tau_mem < 0) or np.any(self.tau_mem > 1) or np.any(self.tau_syn < 0) or np.any(self.tau_syn > 1):
            raise StructuralError("leak factors must lie in [0, 1]")
        if np.any(self.theta <= 0):
            raise StructuralError("thresholds must be > 0")
        frozen = self.frozen_mask
        if np.any(frozen) and (np.any(self.tau_mem[frozen] != 1) or np.any(self.tau_syn[frozen] != 1)
                               or np.any(self.theta[frozen] != 1)):
            raise StructuralError("frozen integrator neurons must have tau_mem = tau_syn = theta = 1")

    def copy(self) -> "LayerParams":
        def _c(a):
            return None if a is None else a.copy()
        return LayerParams(
            tau_mem=self.tau_mem.copy(), tau_syn=self.tau_syn.copy(), theta=self.theta.copy(),
            w_ff=self.w_ff.copy(), w_rec=_c(self.w_rec), frozen_mask=self.frozen_mask.copy(),
            w_skip=_c(self.w_skip), i_bias=_c(self.i_bias),
        )

    def astype(self, dtype) -> "LayerParams":
        def _c(a):
            return None if a is None else a.astype(dtype)
        return LayerParams(
            tau_mem=self.tau_mem.astype(dtype), tau_syn=self.tau_syn.astype(dtype),
            theta=self.theta.astype(dtype), w_ff=self.w_ff.astype(dtype), w_rec=_c(self.w_rec),
            frozen_mask=self.frozen_mask.copy(), w_skip=_c(self.w_skip), i_bias=_c(self.i_bias),
        )


@dataclass
class LayerState:
    """单层状态：膜电位、突触电流、本步脉冲"""
    v: np.ndarray
    i_syn: np.ndarray
    s: np.ndarray

    @classmethod
    def zeros(cls, n: int, batch_shape: Tuple[int, ...] = (), dtype=DEFAULT_DTYPE) -> "LayerState":
        shape = tuple(batch_shape) + (n,)
        return cls(v=np.zeros(shape, dtype), i_syn=np.zeros(shape, dtype), s=np.zeros(shape, dtype))


@dataclass
class SpikingNetwork:
    """
    多层脉冲网络

    第 0 层的 w_ff 即线性输入编码矩阵 w_encode；其余层的 w_ff 接收上一层本步脉冲。
    w_decode 将最后一层脉冲线性映射为浮点输出。
    """
    layers: List[LayerParams]
    w_decode: np.ndarray
    input_labels: List[str]
    output_labels: List[str]
    name: str = "snn"
    input_mean: Optional[np.ndarray] = None
    input_std: Optional[np.ndarray] = None
    readout_window: Optional[int] = None
    provenance: Dict = field(default_factory=dict)
    metrics: Dict[str, float] = field(default_factory=dict)

    @property
    def w_encode(self) -> np.ndarray:
        return self.layers[0].w_ff

    @property
    def n_inputs(self) -> int:
        return len(self.input_labels)

    @property
    def n_outputs(self) -> int:
        return len(self.output_labels)

    @property
    def widths(self) -> List[int]:
        return [layer.n_hidden for layer in self.layers]

    @property
    def dtype(self):
        return self.w_decode.dtype

    def validate(self) -> None:
        """检查层间维度链是否一致"""
        if not self.layers:
            raise StructuralError("network has no layers")
        if self.layers[0].n_in != self.n_inputs:
            raise StructuralError(
                f"w_encode has {self.layers[0].n_in} columns but {self.n_inputs} input labels")
        for k, layer in enumerate(self.layers):
            if k > 0 and layer.n_in != self.layers[k - 1].n_hidden:
                raise StructuralError(
                    f"layer {k} expects {layer.n_in} inputs, layer {k - 1} has {self.layers[k - 1].n_hidden}")
            layer.validate(self.n_inputs)
        if self.w_decode.shape != (self.n_outputs, self.layers[-1].n_hidden):
            raise StructuralError(
                f"w_decode has shape {self.w_decode.shape}, expected ({self.n_outputs}, {self.layers[-1].n_hidden})")
        for name in ("input_mean", "input_std"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (self.n_inputs,):
                raise StructuralError(f"{name} has shape {arr.shape}, expected ({self.n_inputs},)")

    def normalize_input(self, raw: np.ndarray) -> np.ndarray:
        """按网络携带的训练集统计量归一化原始输入"""
        x = np.asarray(raw, dtype=self.dtype)
        if self.input_mean is None:
            return x
        return (x - self.input_mean) / self.input_std

    def copy(self) -> "SpikingNetwork":
        return replace(
            self,
            layers=[layer.copy() for layer in self.layers],
            w_decode=self.w_decode.copy(),
            input_labels=list(self.input_labels),
            output_labels=list(self.output_labels),
            input_mean=None if self.input_mean is None else self.input_mean.copy(),
            input_std=None if self.input_std is None else self.input_std.copy(),
            provenance=dict(self.provenance),
            metrics=dict(self.metrics),
        )

    def astype(self, dtype) -> "SpikingNetwork":
        net = self.copy()
        net.layers = [layer.astype(dtype) for layer in net.layers]
        net.w_decode = net.w_decode.astype(dtype)
        if net.input_mean is not None:
            net.input_mean = net.input_mean.astype(dtype)
            net.input_std = net.input_std.astype(dtype)
        return net


def layer_step(params: LayerParams, state: LayerState, input_current: np.ndarray) -> Tuple[LayerState, np.ndarray]:
    """
    单层单步更新

    Args:
        params: 层参数
        state: 当前状态（支持任意前导批维度）
        input_current: 本步输入电流，最后一维为 n_hidden

    Returns:
        (新状态, 本步脉冲)
    """
    n = params.n_hidden
    if input_current.shape[-1] != n or state.v.shape[-1] != n or state.i_syn.shape[-1] != n:
        raise StructuralError(
            f"layer_step dimension mismatch: n_hidden={n}, input={input_current.shape}, state={state.v.shape}")

    current = params.tau_syn * state.i_syn + input_current
    if params.w_rec is not None:
        current = current + state.s @ params.w_rec.T
    v = params.tau_mem * state.v + state.i_syn
    fired = v > params.theta
    spikes = fired.astype(v.dtype)
    v = np.where(fired, v.dtype.type(0), v)
    return LayerState(v=v, i_syn=current, s=spikes), spikes


def layer_input_current(layer: LayerParams, presynaptic: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    计算一层的输入电流：前馈 + 直通 + 偏置

    累加在 float64 中进行，最后取整为网络精度；补零的输入列、拆开的直通块
    与单个大矩阵得到相同的 float32 电流。
    """
    wide = np.float64
    current = np.asarray(presynaptic, dtype=wide) @ layer.w_ff.T.astype(wide, copy=False)
    if layer.w_skip is not None:
        current += np.asarray(x, dtype=wide) @ layer.w_skip.T.astype(wide, copy=False)
    if layer.i_bias is not None:
        current += layer.i_bias
    return current.astype(layer.dtype, copy=False)


def network_step(
    net: SpikingNetwork,
    states: Sequence[LayerState],
    x: np.ndarray,
) -> Tuple[List[LayerState], np.ndarray, List[np.ndarray]]:
    """
    整网单步推理（输入已归一化）

    Args:
        net: 网络
        states: 每层状态
        x: 输入向量，最后一维为输入通道数

    Returns:
        (新状态列表, 解码输出, 每层脉冲)
    """
    if x.shape[-1] != net.n_inputs:
        raise StructuralError(f"network_step expects {net.n_inputs} inputs, got {x.shape[-1]}")
    new_states: List[LayerState] = []
    spike_record: List[np.ndarray] = []
    a = x
    for layer, state in zip(net.layers, states):
        current = layer_input_current(layer, a, x)
        state, a = layer_step(layer, state, current)
        new_states.append(state)
        spike_record.append(a)
    output = a @ net.w_decode.T
    return new_states, output, spike_record


def reset_states(net: SpikingNetwork, batch_shape: Tuple[int, ...] = ()) -> List[LayerState]:
    """返回全零的初始状态"""
    return [LayerState.zeros(layer.n_hidden, batch_shape, net.dtype) for layer in net.layers]


@dataclass
class SequenceResult:
    """序列推理结果"""
    outputs: np.ndarray            # (..., T, C_out)
    spike_counts: List[np.ndarray]  # 每层每个神经元的脉冲总数（对批求和）
    firing_fraction: np.ndarray    # (T,) 每步放电神经元比例（对批平均）
    states: List[LayerState]


def run_sequence(
    net: SpikingNetwork,
    inputs: np.ndarray,
    states: Optional[List[LayerState]] = None,
) -> SequenceResult:
    """
    对整段序列推理，inputs 形状为 (T, C) 或 (B, T, C)

    若网络设置了 readout_window，则解码输出经过指数平均。
    """
    inputs = np.asarray(inputs, dtype=net.dtype)
    batched = inputs.ndim == 3
    if not batched:
        inputs = inputs[None]
    B, T, _ = inputs.shape
    if states is None:
        states = reset_states(net, (B,))
    n_total = sum(net.widths)
    outputs = np.zeros((B, T, net.n_outputs), dtype=net.dtype)
    counts = [np.zeros(w, dtype=np.int64) for w in net.widths]
    fraction = np.zeros(T, dtype=np.float64)
    alpha = None if not net.readout_window else net.dtype.type(1.0 / net.readout_window)
    smoothed = np.zeros((B, net.n_outputs), dtype=net.dtype)
    for t in range(T):
        states, out, spikes = network_step(net, states, inputs[:, t])
        if alpha is not None:
            smoothed = (1 - alpha) * smoothed + alpha * out
            out = smoothed
        outputs[:, t] = out
        fired = 0.0
        for k, s in enumerate(spikes):
            counts[k] += s.sum(axis=0).astype(np.int64)
            fired += float(s.sum())
        fraction[t] = fired / (n_total * B)
    if not batched:
        outputs = outputs[0]
    return SequenceResult(outputs=outputs, spike_counts=counts, firing_fraction=fraction, states=states)
