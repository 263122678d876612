# app/sim/controllers/strategies/snn.py
"""
脉冲网络控制策略
按网络输入标签从本步信号中取值，归一化后单步推理，解码输出作为力矩指令
"""
import logging
from typing import Mapping, Optional

import numpy as np

from app.core.exceptions import ConfigError, StructuralError
from app.sim.controllers.base import BaseController
from app.snn.checkpoint import checkpoint_hash, load_checkpoint
from app.snn.core import SpikingNetwork, network_step, reset_states

logger = logging.getLogger(__name__)


class SnnController(BaseController):
    """
    脉冲网络飞行

    可接收合并网络（IMU + 设定值）或单独的控制网络（专家姿态估计 + 设定值），
    由检查点中的输入标签决定取哪些信号
    """

    def __init__(self, network: Optional[SpikingNetwork] = None, checkpoint: Optional[str] = None, **kwargs):
        """
        Args:
            network: 已加载的网络
            checkpoint: 检查点路径（network 为空时读取）
        """
        super().__init__(checkpoint=checkpoint, **kwargs)
        if network is None:
            if checkpoint is None:
                raise ConfigError("SNN controller needs a checkpoint", key="checkpoint")
            network = load_checkpoint(checkpoint)
            self.checkpoint_hash = checkpoint_hash(checkpoint)
        else:
            self.checkpoint_hash = None
        if network.n_outputs != 3:
            raise StructuralError(f"controller network must output 3 torques, got {network.n_outputs}")
        self.network = network
        self._states = reset_states(network)
        self._last_spikes = 0

    def reset(self) -> None:
        self._states = reset_states(self.network)
        self._last_spikes = 0

    def act(self, signals: Mapping[str, float], expert_torque: np.ndarray) -> np.ndarray:
        try:
            raw = np.array([signals[label] for label in self.network.input_labels])
        except KeyError as e:
            raise StructuralError(f"controller input '{e.args[0]}' is not an episode signal") from e
        x = self.network.normalize_input(raw)
        self._states, out, spikes = network_step(self.network, self._states, x)
        self._last_spikes = int(sum(float(s.sum()) for s in spikes))
        return np.clip(out.astype(np.float64), -1.0, 1.0)

    def step_spikes(self) -> int:
        return self._last_spikes

    def n_neurons(self) -> int:
        return sum(self.network.widths)

    def get_controller_name(self) -> str:
        return f"snn:{self.network.name}"
