# app/sim/controllers/service.py
"""
控制器服务层
根据名称实例化控制策略（工厂模式 + 策略模式）
"""
import logging
from typing import Dict, List

from app.core.exceptions import ConfigError
from app.sim.controllers.base import BaseController
from app.sim.controllers.strategies import ExpertController, SnnController

logger = logging.getLogger(__name__)


class ControllerService:
    """
    控制器服务类

    职责：
    1. 根据控制器名称实例化对应的策略
    2. 提供可用控制器列表
    """

    # 控制器注册表（工厂模式）
    # snn-logged-expert 与 snn 行为相同：专家输出在任何模式下都会被记录
    _CONTROLLER_REGISTRY: Dict[str, type] = {
        "expert": ExpertController,
        "pid": ExpertController,
        "snn": SnnController,
        "snn-logged-expert": SnnController,
    }

    @classmethod
    def list_available_controllers(cls) -> List[str]:
        return sorted(cls._CONTROLLER_REGISTRY)

    @classmethod
    def get_controller(cls, name: str = "expert", **kwargs) -> BaseController:
        """
        获取控制器实例

        Args:
            name: 控制器名称
            **kwargs: 传递给控制器的参数（如 checkpoint / network）

        Returns:
            控制器实例

        Raises:
            ConfigError: 控制器名称不存在
        """
        key = name.lower()
        if key not in cls._CONTROLLER_REGISTRY:
            raise ConfigError(
                f"Unknown controller '{name}', available: {cls.list_available_controllers()}", key="controller")
        controller = cls._CONTROLLER_REGISTRY[key](**kwargs)
        logger.debug(f"Created controller: {controller.get_controller_name()}")
        return controller
