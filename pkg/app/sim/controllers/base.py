# app/sim/controllers/base.py
"""
控制器抽象基类
定义统一的控制接口，所有具体控制策略必须继承此基类
"""
from abc import ABC, abstractmethod
from typing import Mapping

import numpy as np


class BaseController(ABC):
    """
    控制器抽象基类

    仿真循环每步先运行专家（专家输出总会被记录），再调用 act 得到实际施加的指令。
    """

    def __init__(self, **kwargs):
        """
        初始化控制器

        Args:
            **kwargs: 其他配置参数（如 checkpoint 等）
        """
        self.config = kwargs

    @abstractmethod
    def act(self, signals: Mapping[str, float], expert_torque: np.ndarray) -> np.ndarray:
        """
        计算本步力矩指令

        Args:
            signals: 本步可用信号（IMU、设定值、专家姿态估计），键为回合日志列名
            expert_torque: 专家本步给出的力矩指令

        Returns:
            3 维归一化力矩指令，范围 [-1, 1]
        """
        pass

    def reset(self) -> None:
        """回合开始时重置内部状态（可选实现）"""

    def step_spikes(self) -> int:
        """最近一步的脉冲总数；非脉冲控制器返回 0"""
        return 0

    def n_neurons(self) -> int:
        return 0

    def get_controller_name(self) -> str:
        """返回控制器名称"""
        return self.__class__.__name__
