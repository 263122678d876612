# app/sim/episode.py
"""
回合仿真与回合文件读写

每个回合产生三个文件：
- <id>.csv        固定表头的 500Hz 日志（IMU、设定值、专家估计、施加力矩、专家力矩、积分项、扰动标记）
- <id>.truth.csv  真实姿态与机体角速度
- <id>.json       附属信息（种子、参数、零偏、是否可用）
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from app.core.config import DT, SimConfig
from app.core.exceptions import DataError, EpisodeDiverged, SchemaMismatchError
from app.schemas.episode import EpisodeSeeds, EpisodeSidecar
from app.sim.controllers.base import BaseController
from app.sim.dynamics import check_envelope, quat_to_euler, sim_step
from app.sim.expert import ExpertPilot
from app.sim.imu import imu_sample, sample_episode_biases
from app.sim.models import (
    EPISODE_COLUMNS,
    ESTIMATE_COLUMNS,
    IMU_COLUMNS,
    SETPOINT_COLUMNS,
    TRUTH_COLUMNS,
    DisturbanceSchedule,
    ImuModel,
    QuadModel,
    SimState,
)
from app.sim.scripts import build_setpoints

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Philox 计数器最后一个字用于区分随机数流
STREAM_SETUP = 0
STREAM_IMU = 1
STREAM_DISTURBANCE = 2
STREAM_SCRIPT = 3


def make_seeds(master: int, index: int) -> EpisodeSeeds:
    """回合种子：主种子与回合序号异或"""
    return EpisodeSeeds(master=master, index=index, key=int(master) ^ int(index))


def episode_rng(seeds: EpisodeSeeds, stream: int) -> np.random.Generator:
    """基于计数器的随机数发生器，每个流独立"""
    counter = np.array([0, 0, 0, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seeds.key, counter=counter))


@dataclass
class Episode:
    """一个回合的完整记录"""
    episode_id: str
    log: pd.DataFrame
    sidecar: EpisodeSidecar
    truth: Optional[pd.DataFrame] = None
    firing_fraction: Optional[np.ndarray] = None

    @property
    def usable(self) -> bool:
        return self.sidecar.usable

    @property
    def n_rows(self) -> int:
        return len(self.log)

    def column(self, name: str) -> np.ndarray:
        return self.log[name].to_numpy(dtype=np.float64)


def run_episode(
    cfg: SimConfig,
    script: str,
    controller: BaseController,
    seeds: EpisodeSeeds,
    disturbances: Optional[bool] = None,
    round_tag: str = "expert",
    episode_id: Optional[str] = None,
    seconds: Optional[float] = None,
) -> Episode:
    """
    运行一个回合

    专家控制器每步都会运行，其输出写入 exp_tq_* 列；实际施加的指令来自 controller。

    Args:
        cfg: 仿真配置
        script: 设定值脚本名
        controller: 控制策略
        seeds: 回合种子
        disturbances: 是否注入扰动，None 表示按配置
        round_tag: 数据轮次标签
        episode_id: 回合编号，默认由轮次与序号生成
        seconds: 回合时长，默认 cfg.episode_seconds

    Returns:
        Episode；状态发散时日志在发散步截断，并标记为不可用
    """
    episode_id = episode_id or f"{round_tag}-{seeds.index:05d}"
    model = QuadModel.from_config(cfg.model)
    setup_rng = episode_rng(seeds, STREAM_SETUP)
    gyro_bias, torque_offset = sample_episode_biases(setup_rng, cfg.imu.gyro_bias_max, cfg.model.torque_offset_max)
    imu_model = ImuModel.from_config(cfg.imu, gyro_bias)
    schedule = DisturbanceSchedule.from_config(cfg.disturbance, cfg.rate_hz, enabled=disturbances)
    imu_rng = episode_rng(seeds, STREAM_IMU)
    dist_rng = episode_rng(seeds, STREAM_DISTURBANCE)
    setpoints = build_setpoints(script, seconds or cfg.episode_seconds, episode_rng(seeds, STREAM_SCRIPT), cfg.maneuver)

    n = setpoints.shape[0]
    rows = np.zeros((n, len(EPISODE_COLUMNS)))
    truth = np.zeros((n, len(TRUTH_COLUMNS)))
    firing = np.zeros(n)
    n_neurons = max(controller.n_neurons(), 1)

    pilot = ExpertPilot(cfg.gains)
    controller.reset()
    state = SimState()
    diverged_at: Optional[int] = None
    reason: Optional[str] = None

    for k in range(n):
        imu = imu_sample(state, imu_model, imu_rng, model.gravity)
        sp = setpoints[k]
        estimate, expert_torque, breakdown = pilot.step(imu, sp)
        signals: Dict[str, float] = dict(zip(IMU_COLUMNS, imu))
        signals.update(zip(SETPOINT_COLUMNS, sp))
        signals.update(zip(ESTIMATE_COLUMNS, estimate))
        command = controller.act(signals, expert_torque)
        firing[k] = controller.step_spikes() / n_neurons
        dist = schedule.step(dist_rng)
        applied = np.clip(command + dist, -1.0, 1.0)

        rows[k] = np.concatenate((
            [k * DT], imu, sp, estimate, applied, expert_torque, breakdown.i, [float(schedule.last_active)],
        ))
        truth[k] = np.concatenate(([k * DT], quat_to_euler(state.quat), state.omega, state.quat))

        torque = model.torque_limit * (applied + torque_offset)
        try:
            state = sim_step(model, state, torque)
        except EpisodeDiverged as e:
            diverged_at, reason = e.step, e.reason
            break
        reason = check_envelope(model, state)
        if reason is not None:
            diverged_at = state.step
            break

    n_rows = n if diverged_at is None else diverged_at
    if diverged_at is not None:
        logger.warning(f"Episode {episode_id} diverged at step {diverged_at}: {reason}; marked unusable")

    sidecar = EpisodeSidecar(
        episode_id=episode_id,
        round_tag=round_tag,
        script=script,
        controller=controller.get_controller_name(),
        seeds=seeds,
        n_rows=n_rows,
        usable=diverged_at is None,
        diverged_at=diverged_at,
        diverged_reason=reason,
        gains=cfg.gains.model_dump(mode="json"),
        model=cfg.model.model_dump(mode="json"),
        imu=cfg.imu.model_dump(mode="json"),
        disturbance={**cfg.disturbance.model_dump(mode="json"), "enabled": schedule.enabled,
                     "onsets": schedule.onsets},
        gyro_bias=gyro_bias.tolist(),
        torque_offset=torque_offset.tolist(),
        controller_checkpoint=getattr(controller, "checkpoint_hash", None),
    )
    return Episode(
        episode_id=episode_id,
        log=pd.DataFrame(rows[:n_rows], columns=EPISODE_COLUMNS),
        sidecar=sidecar,
        truth=pd.DataFrame(truth[:n_rows], columns=TRUTH_COLUMNS),
        firing_fraction=firing[:n_rows] if controller.n_neurons() else None,
    )


def episode_paths(directory: PathLike, episode_id: str) -> Dict[str, Path]:
    d = Path(directory)
    return {
        "log": d / f"{episode_id}.csv",
        "truth": d / f"{episode_id}.truth.csv",
        "sidecar": d / f"{episode_id}.json",
    }


def write_episode(episode: Episode, directory: PathLike) -> Dict[str, Path]:
    """写出回合日志、真值与附属文件"""
    paths = episode_paths(directory, episode.episode_id)
    paths["log"].parent.mkdir(parents=True, exist_ok=True)
    episode.log.to_csv(paths["log"], index=False)
    if episode.truth is not None:
        episode.truth.to_csv(paths["truth"], index=False)
    paths["sidecar"].write_text(
        json.dumps(episode.sidecar.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8")
    return paths


def read_episode(log_path: PathLike, with_truth: bool = False) -> Episode:
    """
    读取回合

    Raises:
        DataError: 文件缺失
        SchemaMismatchError: 表头与固定表头不一致
    """
    log_path = Path(log_path)
    if not log_path.exists():
        raise DataError("Episode file not found", path=str(log_path))
    episode_id = log_path.name[: -len(".csv")]
    paths = episode_paths(log_path.parent, episode_id)
    log = pd.read_csv(log_path, dtype=np.float64)
    if list(log.columns) != EPISODE_COLUMNS:
        raise SchemaMismatchError(f"Unexpected episode header {list(log.columns)}", path=str(log_path))
    if not paths["sidecar"].exists():
        raise DataError("Episode sidecar not found", path=str(paths["sidecar"]))
    sidecar = EpisodeSidecar.model_validate_json(paths["sidecar"].read_text(encoding="utf-8"))
    truth = None
    if with_truth and paths["truth"].exists():
        truth = pd.read_csv(paths["truth"], dtype=np.float64)
    return Episode(episode_id=episode_id, log=log, sidecar=sidecar, truth=truth)
