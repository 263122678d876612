# app/sim/controllers/strategies/expert.py
"""
专家控制策略：直接施加级联 PID 的输出
"""
from typing import Mapping

import numpy as np

from app.sim.controllers.base import BaseController


class ExpertController(BaseController):
    """专家飞行（第 0 轮数据与基线评估）"""

    def act(self, signals: Mapping[str, float], expert_torque: np.ndarray) -> np.ndarray:
        return np.asarray(expert_torque, dtype=np.float64)
