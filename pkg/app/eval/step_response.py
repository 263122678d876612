# app/eval/step_response.py
"""
闭环阶跃响应评估

同一控制器在同一脚本上重复运行 n_runs 次（每次种子不同），统计：
- 设定 roll 与真实 roll 的 RMSE（全脚本窗口），以及与估计 roll 的 RMSE
- 逐点跨回合标准差的时间平均
- +10° 阶跃的 10%-90% 上升时间
- 脉冲控制器的平均放电比例
任一回合发散则整份报告作废（标记，不静默丢弃）。
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.core.config import SimConfig
from app.core.exceptions import ConfigError
from app.schemas.reports import ClosedLoopReport, EvalReport
from app.sim.batch import EpisodeJob, simulate_job
from app.sim.episode import Episode
from app.sim.scripts import step_window

logger = logging.getLogger(__name__)

RISE_TIME_DEFINITION = "10%-90% of the commanded +10 deg roll step, linear interpolation between samples"
RMSE_REFERENCE = "full script window; rmse_est_deg uses the onboard estimate as reference"


@dataclass
class StepResponseTrace:
    """跨回合的 roll 响应（rad），用于 step_response.csv"""
    controller: str
    t: np.ndarray
    setpoint: np.ndarray
    runs: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.runs.mean(axis=0)

    @property
    def sd(self) -> np.ndarray:
        return self.runs.std(axis=0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "controller": self.controller,
            "t": self.t,
            "setpoint_deg": np.degrees(self.setpoint),
            "mean_deg": np.degrees(self.mean),
            "sd_deg": np.degrees(self.sd),
        })


def _crossing(t: np.ndarray, z: np.ndarray, level: float, start: int = 0) -> Optional[Tuple[float, int]]:
    idx = np.nonzero(z[start:] >= level)[0]
    if idx.size == 0:
        return None
    i = start + int(idx[0])
    if i == 0 or z[i] == z[i - 1]:
        return float(t[i]), i
    frac = (level - z[i - 1]) / (z[i] - z[i - 1])
    return float(t[i - 1] + frac * (t[i] - t[i - 1])), i


def rise_time(t: np.ndarray, y: np.ndarray, y0: float, y1: float) -> Optional[float]:
    """
    10%-90% 上升时间

    Args:
        t: 时间 (s)
        y: 响应
        y0: 阶跃前的值
        y1: 阶跃目标值

    Returns:
        上升时间 (s)；未达到 90% 时返回 None
    """
    if y1 == y0:
        raise ValueError("step magnitude must be non-zero")
    t = np.asarray(t, dtype=np.float64)
    z = (np.asarray(y, dtype=np.float64) - y0) / (y1 - y0)
    low = _crossing(t, z, 0.1)
    if low is None:
        return None
    high = _crossing(t, z, 0.9, low[1])
    if high is None:
        return None
    return high[0] - low[0]


def _run_all(jobs: List[EpisodeJob], threads: int) -> List[Episode]:
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(simulate_job, jobs))
    return [simulate_job(job) for job in jobs]


def step_response_suite(
    cfg: SimConfig,
    controller: str = "expert",
    checkpoint: Optional[str] = None,
    script: str = "step",
    n_runs: int = 10,
    master_seed: int = 0,
    disturbances: bool = False,
    threads: int = 1,
) -> Tuple[EvalReport, Optional[StepResponseTrace]]:
    """
    闭环重复运行评估

    Args:
        cfg: 仿真配置（噪声等按配置）
        controller: 控制器名称
        checkpoint: 脉冲控制器检查点
        script: 设定值脚本，上升时间仅对 step 脚本计算
        n_runs: 重复次数（>= 2）
        master_seed: 主种子，第 i 次运行使用 master ^ i。每次运行的 IMU 零偏、力矩偏置、
            噪声与扰动都由该种子抽取，只有零偏和力矩偏置上限为 0 且无噪声时
            各次运行才完全一致（平均 SD = 0）
        disturbances: 是否注入扰动
        threads: 并行进程数，结果与并行度无关

    Returns:
        (EvalReport, StepResponseTrace)；报告作废时 trace 为 None
    """
    if n_runs < 2:
        raise ConfigError("step response suite needs at least 2 runs", key="eval.n_runs")
    jobs = [
        EpisodeJob(
            sim_config=cfg.model_dump(mode="json"), script=script, controller=controller,
            checkpoint=checkpoint, master_seed=master_seed, index=i,
            disturbances=disturbances, round_tag="eval",
        )
        for i in range(n_runs)
    ]
    logger.info(f"Closed-loop suite: controller={controller}, script={script}, runs={n_runs}")
    episodes = _run_all(jobs, threads)

    report = EvalReport(
        controller=controller,
        checkpoint_hash=episodes[0].sidecar.controller_checkpoint,
        script=script,
        seeds=[ep.sidecar.seeds.key for ep in episodes],
        n_runs=n_runs,
        metadata={"rise_time": RISE_TIME_DEFINITION, "rmse": RMSE_REFERENCE},
    )
    diverged = [ep for ep in episodes if not ep.usable]
    if diverged:
        report.void = True
        report.void_reason = (f"{len(diverged)} of {n_runs} runs diverged: "
                              + ", ".join(f"{ep.episode_id}@{ep.sidecar.diverged_at}" for ep in diverged))
        logger.error(f"❌ Closed-loop report for {controller} voided: {report.void_reason}")
        return report, None

    sp = np.stack([ep.column("sp_roll") for ep in episodes])
    true_roll = np.stack([ep.truth["roll"].to_numpy(dtype=np.float64) for ep in episodes])
    est_roll = np.stack([ep.column("est_roll") for ep in episodes])
    t = episodes[0].column("t")

    rise: List[Optional[float]] = []
    if script == "step":
        w = step_window()
        y0 = float(sp[0, w.start - 1])
        y1 = float(sp[0, w.start])
        for run in true_roll:
            rt = rise_time(t[w] - t[w.start], run[w], y0, y1)
            rise.append(None if rt is None else rt * 1e3)
    reached = [r for r in rise if r is not None]

    firing = [ep.firing_fraction for ep in episodes if ep.firing_fraction is not None]
    report.closed_loop = ClosedLoopReport(
        rmse_true_deg=float(np.degrees(np.sqrt(np.mean((sp - true_roll) ** 2)))),
        rmse_est_deg=float(np.degrees(np.sqrt(np.mean((sp - est_roll) ** 2)))),
        sd_deg=float(np.degrees(true_roll.std(axis=0).mean())),
        rise_time_ms=float(np.mean(reached)) if reached else None,
        rise_times_ms=rise,
        sparsity=float(np.mean([f.mean() for f in firing])) if firing else None,
    )
    cl = report.closed_loop
    logger.info(f"{controller}: RMSE {cl.rmse_true_deg:.3f} deg (est {cl.rmse_est_deg:.3f}), "
                f"SD {cl.sd_deg:.3f} deg, rise {cl.rise_time_ms} ms")
    trace = StepResponseTrace(controller=controller, t=t, setpoint=sp[0], runs=true_roll)
    return report, trace


def write_step_response_csv(traces: Sequence[StepResponseTrace], path: Union[str, Path]) -> None:
    """写出 step_response.csv（长表：每个控制器一段）"""
    frame = pd.concat([tr.to_frame() for tr in traces], ignore_index=True)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
