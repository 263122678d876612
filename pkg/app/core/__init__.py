# app/core/__init__.py
"""
核心配置模块初始化
"""
from app.core.config import settings, PipelineConfig, TrainConfig, load_pipeline_config

__all__ = ["settings", "PipelineConfig", "TrainConfig", "load_pipeline_config"]
