# app/snn/optim.py
"""
参数访问、Adam 优化器与参数约束
"""
import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import StructuralError
from app.snn.core import SpikingNetwork

logger = logging.getLogger(__name__)

# 可训练参数种类；w_skip 与 i_bias 只由合并产生，不参与训练
PARAM_KINDS = ("w_ff", "w_rec", "w_decode", "tau_mem", "tau_syn", "theta")


def named_parameters(net: SpikingNetwork) -> Dict[str, np.ndarray]:
    """
    按固定顺序返回网络参数（数组引用，原地更新即修改网络）

    第 0 层的 w_ff 即输入编码矩阵 w_encode
    """
    params: Dict[str, np.ndarray] = {}
    for k, layer in enumerate(net.layers):
        params[f"layers.{k}.w_ff"] = layer.w_ff
        if layer.w_rec is not None:
            params[f"layers.{k}.w_rec"] = layer.w_rec
        params[f"layers.{k}.tau_mem"] = layer.tau_mem
        params[f"layers.{k}.tau_syn"] = layer.tau_syn
        params[f"layers.{k}.theta"] = layer.theta
    params["w_decode"] = net.w_decode
    return params


def param_kind(name: str) -> str:
    return name.rsplit(".", 1)[-1]


def select_parameters(net: SpikingNetwork, kinds: Optional[Iterable[str]] = None) -> List[str]:
    """
    选出可训练参数名

    Args:
        net: 网络
        kinds: 参数种类子集，None 表示全部

    Returns:
        参数名列表
    """
    wanted = set(PARAM_KINDS if kinds is None else kinds)
    unknown = wanted - set(PARAM_KINDS)
    if unknown:
        raise StructuralError(f"unknown parameter kinds: {sorted(unknown)}")
    return [name for name in named_parameters(net) if param_kind(name) in wanted]


class Adam:
    """
    Adam 优化器（numpy 实现）

    只更新构造时给出的参数名，其余参数保持不变
    """

    def __init__(
        self,
        names: Sequence[str],
        learning_rate: float = 1e-3,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.names = list(names)
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """原地更新参数"""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name in self.names:
            if name not in grads:
                continue
            p = params[name]
            g = grads[name].astype(np.float64)
            m = self._m.get(name)
            if m is None:
                m = np.zeros(p.shape)
                self._v[name] = np.zeros(p.shape)
            v = self._v[name]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self._m[name], self._v[name] = m, v
            update = self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p -= update.astype(p.dtype)


def apply_constraints(
    net: SpikingNetwork,
    tau_min: float = 0.0,
    tau_max: float = 1.0,
    theta_min: float = 0.01,
) -> None:
    """
    每次优化步之后调用：泄漏因子截断到 [tau_min, tau_max]，阈值不低于 theta_min；
    积分神经元的泄漏因子与阈值恢复为 1，其递归输入行保持为 0
    """
    for layer in net.layers:
        np.clip(layer.tau_mem, tau_min, tau_max, out=layer.tau_mem)
        np.clip(layer.tau_syn, tau_min, tau_max, out=layer.tau_syn)
        np.maximum(layer.theta, theta_min, out=layer.theta)
        frozen = layer.frozen_mask
        if np.any(frozen):
            layer.tau_mem[frozen] = 1
            layer.tau_syn[frozen] = 1
            layer.theta[frozen] = 1
            if layer.w_rec is not None:
                layer.w_rec[frozen, :] = 0
