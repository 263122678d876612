# app/schemas/common.py
"""
通用 Schema：运行目录清单
"""
from pydantic import BaseModel, Field
from typing import Dict, Optional


class ArtifactEntry(BaseModel):
    """清单中的单个产物"""
    sha256: str
    kind: str = Field(..., description="episode/stats/checkpoint/report/export/log/config")
    deterministic: bool = Field(True, description="是否参与逐字节可复现比较")


class RunManifest(BaseModel):
    """运行目录清单，所有产物按相对路径登记哈希"""
    version: int = 1
    app: str
    artifacts: Dict[str, ArtifactEntry] = {}
    last_command: Optional[str] = None
