"""
流水线编排：运行目录、产物清单与子命令服务
"""
from app.pipeline.rundir import RunDirectory
from app.pipeline.service import PipelineService, seed_overrides

__all__ = ["RunDirectory", "PipelineService", "seed_overrides"]
