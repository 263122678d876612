# app/sim/batch.py
"""
批量回合生成
回合之间相互独立，可用多进程并行；每个回合的种子由主种子与序号异或得到，
结果按回合序号排序，与并行度无关
"""
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from app.core.config import SimConfig
from app.schemas.episode import CorpusEntry
from app.sim.controllers.service import ControllerService
from app.sim.episode import Episode, make_seeds, run_episode, write_episode

logger = logging.getLogger(__name__)


@dataclass
class EpisodeJob:
    """单个回合任务（可跨进程传递）"""
    sim_config: dict
    script: str
    controller: str
    checkpoint: Optional[str]
    master_seed: int
    index: int
    disturbances: Optional[bool]
    round_tag: str
    out_dir: str = ""
    seconds: Optional[float] = None


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def simulate_job(job: EpisodeJob) -> Episode:
    """只运行回合，不写文件（评估用）"""
    cfg = SimConfig.model_validate(job.sim_config)
    kwargs = {"checkpoint": job.checkpoint} if job.checkpoint else {}
    controller = ControllerService.get_controller(job.controller, **kwargs)
    seeds = make_seeds(job.master_seed, job.index)
    return run_episode(
        cfg, job.script, controller, seeds,
        disturbances=job.disturbances, round_tag=job.round_tag, seconds=job.seconds,
    )


def run_job(job: EpisodeJob) -> CorpusEntry:
    """执行一个回合任务并写出文件"""
    episode = simulate_job(job)
    paths = write_episode(episode, job.out_dir)
    return CorpusEntry(
        episode_id=episode.episode_id,
        path=str(paths["log"].relative_to(Path(job.out_dir).parent)),
        sha256=file_sha256(paths["log"]),
        round_tag=job.round_tag,
    )


def generate_round(
    cfg: SimConfig,
    round_tag: str,
    n_episodes: int,
    out_dir: Path,
    controller: str = "expert",
    checkpoint: Optional[str] = None,
    script: str = "maneuver",
    disturbances: Optional[bool] = None,
    master_seed: Optional[int] = None,
    first_index: int = 0,
    threads: int = 1,
) -> List[CorpusEntry]:
    """
    生成一轮数据

    Args:
        cfg: 仿真配置
        round_tag: 轮次标签（expert / snn / disturbed）
        n_episodes: 回合数
        out_dir: 回合文件目录（run_dir/episodes）
        controller: 控制器名称
        checkpoint: SNN 控制器检查点
        script: 设定值脚本
        disturbances: 是否注入扰动
        master_seed: 主种子，默认 cfg.seed
        first_index: 首个回合序号（不同轮次使用不相交的序号区间）
        threads: 并行进程数

    Returns:
        按回合序号排序的语料条目
    """
    master = cfg.seed if master_seed is None else master_seed
    jobs = [
        EpisodeJob(
            sim_config=cfg.model_dump(mode="json"), script=script, controller=controller,
            checkpoint=checkpoint, master_seed=master, index=first_index + i,
            disturbances=disturbances, round_tag=round_tag, out_dir=str(out_dir),
        )
        for i in range(n_episodes)
    ]
    logger.info(f"Generating round '{round_tag}': {n_episodes} episodes, controller={controller}, threads={threads}")
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(run_job, jobs))
    else:
        entries = [run_job(job) for job in jobs]
    return entries
