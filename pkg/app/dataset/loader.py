# app/dataset/loader.py
"""
数据加载器模块
负责从运行目录读取语料清单与回合日志，并缓存已加载的回合
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from app.core.exceptions import DataError
from app.schemas.episode import CorpusEntry, CorpusManifest
from app.sim.batch import file_sha256
from app.sim.episode import Episode, read_episode

logger = logging.getLogger(__name__)

CORPUS_MANIFEST = "episodes/corpus.json"


def load_corpus_manifest(run_dir: Union[str, Path]) -> CorpusManifest:
    path = Path(run_dir) / CORPUS_MANIFEST
    if not path.exists():
        return CorpusManifest()
    return CorpusManifest.model_validate_json(path.read_text(encoding="utf-8"))


def save_corpus_manifest(run_dir: Union[str, Path], manifest: CorpusManifest) -> Path:
    path = Path(run_dir) / CORPUS_MANIFEST
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest.episodes.sort(key=lambda e: e.episode_id)
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8")
    return path


class EpisodeLoader:
    """
    回合加载器

    职责：
    1. 读取语料清单
    2. 按轮次加载回合（pandas），校验文件哈希
    3. 缓存已加载的回合
    """

    def __init__(self, run_dir: Union[str, Path], verify_hashes: bool = True):
        """
        Args:
            run_dir: 运行目录
            verify_hashes: 加载时是否校验回合文件的 sha256
        """
        self.run_dir = Path(run_dir)
        self.verify_hashes = verify_hashes
        self._cache: Dict[str, Episode] = {}

    def manifest(self) -> CorpusManifest:
        return load_corpus_manifest(self.run_dir)

    def load_entry(self, entry: CorpusEntry, with_truth: bool = False) -> Episode:
        """
        加载单个回合

        Raises:
            DataError: 文件哈希与清单不一致
        """
        cache_key = f"{entry.episode_id}_{with_truth}"
        if cache_key in self._cache:
            return self._cache[cache_key]
        path = self.run_dir / entry.path
        if self.verify_hashes and path.exists() and file_sha256(path) != entry.sha256:
            raise DataError(f"Episode {entry.episode_id} does not match its manifest hash", path=str(path))
        episode = read_episode(path, with_truth=with_truth)
        self._cache[cache_key] = episode
        return episode

    def load_round(self, round_tags: Optional[Sequence[str]] = None, with_truth: bool = False) -> List[Episode]:
        """
        加载指定轮次的全部回合

        Args:
            round_tags: 轮次标签列表，None 表示全部

        Returns:
            按回合编号排序的回合列表
        """
        manifest = self.manifest()
        if not manifest.episodes:
            raise DataError("Run directory has no episodes; run gen-data first", path=str(self.run_dir / CORPUS_MANIFEST))
        entries = [e for e in manifest.episodes if round_tags is None or e.round_tag in round_tags]
        if not entries:
            raise DataError(f"No episodes for rounds {list(round_tags or [])}", path=str(self.run_dir / CORPUS_MANIFEST))
        episodes = [self.load_entry(e, with_truth) for e in sorted(entries, key=lambda e: e.episode_id)]
        logger.info(f"Loaded {len(episodes)} episodes from {self.run_dir} (rounds={round_tags or 'all'})")
        return episodes

    def clear_cache(self):
        """清空缓存"""
        self._cache.clear()
        logger.info("Episode loader cache cleared")
