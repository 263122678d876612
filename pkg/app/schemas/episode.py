# app/schemas/episode.py
"""
飞行记录与数据集相关的 Schema
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class EpisodeSeeds(BaseModel):
    """回合种子：主种子与回合序号异或后作为 Philox 密钥"""
    master: int
    index: int
    key: int


class EpisodeSidecar(BaseModel):
    """回合 CSV 的 JSON 附属文件"""
    episode_id: str
    round_tag: str = Field(..., description="expert/snn/disturbed/eval")
    script: str
    controller: str
    seeds: EpisodeSeeds
    n_rows: int
    usable: bool = True
    diverged_at: Optional[int] = None
    diverged_reason: Optional[str] = None
    gains: Dict = {}
    model: Dict = {}
    imu: Dict = {}
    disturbance: Dict = {}
    gyro_bias: List[float] = []
    torque_offset: List[float] = []
    controller_checkpoint: Optional[str] = None


class NormStatsDoc(BaseModel):
    """归一化统计量"""
    labels: List[str]
    mean: List[float]
    std: List[float]
    corpus_hash: str
    sd_convention: str = "population"
    n_rows: int = 0


class CorpusEntry(BaseModel):
    """语料清单中的单个回合"""
    episode_id: str
    path: str
    sha256: str
    round_tag: str


class CorpusManifest(BaseModel):
    """语料清单：回合文件 + 哈希 + 轮次标签"""
    version: int = 1
    episodes: List[CorpusEntry] = []

    def by_round(self) -> Dict[str, List[CorpusEntry]]:
        grouped: Dict[str, List[CorpusEntry]] = {}
        for entry in self.episodes:
            grouped.setdefault(entry.round_tag, []).append(entry)
        return grouped


class BuildReport(BaseModel):
    """序列切分报告"""
    role: str
    shift: int
    seq_len: int
    n_sequences: int = 0
    skipped_short: List[str] = []
    dropped_unusable: List[str] = []
