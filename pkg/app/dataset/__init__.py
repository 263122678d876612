"""
数据集模块
回合加载、归一化、序列切分与多轮数据聚合
"""
from app.dataset.norm import NormStats, Normalizer, build_norm_stats
from app.dataset.sequences import SequenceBatch, make_sequences, split_episodes
from app.dataset.rounds import Corpus, aggregate_rounds

__all__ = [
    "NormStats",
    "Normalizer",
    "build_norm_stats",
    "SequenceBatch",
    "make_sequences",
    "split_episodes",
    "Corpus",
    "aggregate_rounds",
]
