# app/pipeline/rundir.py
"""
运行目录

固定布局：
    <run_dir>/manifest.json     产物清单（相对路径 -> sha256）
    <run_dir>/config.json       最近一次命令使用的完整配置
    <run_dir>/episodes/         回合日志、真值、附属文件、corpus.json
    <run_dir>/stats/            归一化统计量
    <run_dir>/checkpoints/      网络检查点
    <run_dir>/reports/          训练指标、剪枝 / 评估报告、CSV
    <run_dir>/export/           SNNX 导出文件
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Union

from app.core.config import settings
from app.schemas.common import ArtifactEntry, RunManifest
from app.sim.batch import file_sha256

logger = logging.getLogger(__name__)

LAYOUT = ("episodes", "stats", "checkpoints", "reports", "export")
MANIFEST_NAME = "manifest.json"


class RunDirectory:
    """运行目录与产物清单"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self._manifest: Optional[RunManifest] = None

    def init(self) -> "RunDirectory":
        for sub in LAYOUT:
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        return self

    def __getattr__(self, item: str) -> Path:
        # run.episodes / run.checkpoints ...
        if item in LAYOUT:
            return self.root / item
        raise AttributeError(item)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    @property
    def manifest(self) -> RunManifest:
        if self._manifest is None:
            if self.manifest_path.exists():
                self._manifest = RunManifest.model_validate_json(self.manifest_path.read_text(encoding="utf-8"))
            else:
                self._manifest = RunManifest(app=f"{settings.APP_NAME} {settings.APP_VERSION}")
        return self._manifest

    def relative(self, path: Union[str, Path]) -> str:
        return Path(path).resolve().relative_to(self.root.resolve()).as_posix()

    def record(self, path: Union[str, Path], kind: str, deterministic: bool = True) -> str:
        """
        登记产物

        Args:
            path: 产物路径（必须位于运行目录内）
            kind: episode/stats/checkpoint/report/export/log/config
            deterministic: 相同种子重跑是否逐字节一致

        Returns:
            sha256
        """
        digest = file_sha256(Path(path))
        self.manifest.artifacts[self.relative(path)] = ArtifactEntry(
            sha256=digest, kind=kind, deterministic=deterministic)
        return digest

    def save(self, command: Optional[str] = None) -> Path:
        if command:
            self.manifest.last_command = command
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(
            json.dumps(self.manifest.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8")
        return self.manifest_path

    def verify(self) -> List[str]:
        """
        逐个校验清单中的产物

        Returns:
            问题列表（缺失或被修改的文件），为空表示全部一致
        """
        problems = []
        for rel, entry in sorted(self.manifest.artifacts.items()):
            path = self.root / rel
            if not path.exists():
                problems.append(f"missing: {rel}")
            elif file_sha256(path) != entry.sha256:
                problems.append(f"modified: {rel}")
        return problems
