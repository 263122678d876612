"""
控制器模块
"""
from app.sim.controllers.base import BaseController
from app.sim.controllers.service import ControllerService

__all__ = ["BaseController", "ControllerService"]
