# app/dataset/rounds.py
"""
多轮数据聚合
第 0 轮：专家飞行；第 1 轮：SNN 飞行并记录专家输出；第 2 轮：专家飞行 + 随机扰动。
所有轮次的目标一律取专家列（exp_tq_* / i_*），从不使用 SNN 实际施加的力矩。
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence

from app.core.exceptions import SchemaMismatchError
from app.dataset.norm import NormStats, build_norm_stats

logger = logging.getLogger(__name__)

# 各轮次的飞行方式：(控制器, 是否注入扰动)
ROUND_RECIPES: Dict[str, tuple] = {
    "expert": ("expert", False),
    "snn": ("snn-logged-expert", False),
    "disturbed": ("expert", True),
}


@dataclass
class Corpus:
    """聚合后的语料"""
    episodes: list
    stats: NormStats
    provenance: Dict[str, List[str]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.episodes)

    @property
    def n_rows(self) -> int:
        return sum(ep.n_rows for ep in self.episodes)


def aggregate_rounds(rounds: Mapping[str, Sequence], labels: Sequence[str]) -> Corpus:
    """
    合并多轮数据并在并集上重建归一化统计量

    Args:
        rounds: 轮次标签 -> 回合列表
        labels: 需要归一化的通道

    Returns:
        Corpus，provenance 记录每轮包含的回合编号

    Raises:
        SchemaMismatchError: 各轮次的列不一致
    """
    reference = None
    episodes = []
    provenance: Dict[str, List[str]] = {}
    for tag, eps in rounds.items():
        for ep in eps:
            columns = list(ep.log.columns)
            if reference is None:
                reference = columns
            elif columns != reference:
                raise SchemaMismatchError(f"Round '{tag}' episode {ep.episode_id} has columns {columns}")
            episodes.append(ep)
        provenance[tag] = sorted(ep.episode_id for ep in eps)
    stats = build_norm_stats(episodes, labels)
    logger.info("Aggregated rounds: " + ", ".join(f"{k}={len(v)}" for k, v in provenance.items()))
    return Corpus(episodes=episodes, stats=stats, provenance=provenance)
