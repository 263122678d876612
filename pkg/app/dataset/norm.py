# app/dataset/norm.py
"""
归一化统计量
按整个训练语料的所有行计算逐通道均值与总体标准差
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from app.core.exceptions import DataError, ZeroVarianceChannelError
from app.schemas.episode import NormStatsDoc

logger = logging.getLogger(__name__)


@dataclass
class NormStats:
    labels: List[str]
    mean: np.ndarray
    std: np.ndarray
    corpus_hash: str
    n_rows: int = 0

    def select(self, labels: Sequence[str]) -> "NormStats":
        """按标签取子集"""
        missing = [lab for lab in labels if lab not in self.labels]
        if missing:
            raise DataError(f"Normalization stats have no channels {missing}")
        idx = [self.labels.index(lab) for lab in labels]
        return NormStats(list(labels), self.mean[idx], self.std[idx], self.corpus_hash, self.n_rows)

    def to_doc(self) -> NormStatsDoc:
        return NormStatsDoc(labels=self.labels, mean=self.mean.tolist(), std=self.std.tolist(),
                            corpus_hash=self.corpus_hash, n_rows=self.n_rows)

    @classmethod
    def from_doc(cls, doc: NormStatsDoc) -> "NormStats":
        return cls(list(doc.labels), np.asarray(doc.mean), np.asarray(doc.std), doc.corpus_hash, doc.n_rows)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_doc().model_dump(mode="json"), indent=2, sort_keys=True),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NormStats":
        p = Path(path)
        if not p.exists():
            raise DataError("Normalization stats not found", path=str(p))
        return cls.from_doc(NormStatsDoc.model_validate_json(p.read_text(encoding="utf-8")))


class Normalizer:
    """按 NormStats 逐通道归一化，列顺序与 stats.labels 一致"""

    def __init__(self, stats: NormStats):
        self.stats = stats

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != len(self.stats.labels):
            raise DataError(f"Expected {len(self.stats.labels)} channels {self.stats.labels}, got {x.shape[-1]}")
        return (x - self.stats.mean) / self.stats.std


def corpus_hash(episodes) -> str:
    """与回合顺序无关的语料内容哈希"""
    h = hashlib.sha256()
    for ep in sorted(episodes, key=lambda e: e.episode_id):
        h.update(ep.episode_id.encode("utf-8"))
        h.update(np.ascontiguousarray(ep.log.to_numpy(dtype=np.float64)).tobytes())
    return h.hexdigest()


def build_norm_stats(episodes, labels: Sequence[str]) -> NormStats:
    """
    计算归一化统计量

    Args:
        episodes: 回合列表（至少 1 个）
        labels: 需要归一化的通道

    Returns:
        NormStats（总体标准差）

    Raises:
        DataError: 没有回合
        ZeroVarianceChannelError: 某通道在整个语料上方差为 0
    """
    episodes = list(episodes)
    if not episodes:
        raise DataError("Cannot build normalization stats from an empty corpus")
    # 固定按回合编号拼接，结果与输入顺序无关
    ordered = sorted(episodes, key=lambda e: e.episode_id)
    data = np.concatenate([ep.log[list(labels)].to_numpy(dtype=np.float64) for ep in ordered], axis=0)
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    for label, sd in zip(labels, std):
        if not sd > 0:
            raise ZeroVarianceChannelError(label)
    stats = NormStats(list(labels), mean, std, corpus_hash(ordered), n_rows=int(data.shape[0]))
    logger.info(f"Built normalization stats over {len(ordered)} episodes ({stats.n_rows} rows)")
    return stats
