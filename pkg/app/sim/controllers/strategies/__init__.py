"""
控制策略模块
包含所有具体的控制器实现
"""
from app.sim.controllers.strategies.expert import ExpertController
from app.sim.controllers.strategies.snn import SnnController

__all__ = [
    "ExpertController",
    "SnnController",
]
