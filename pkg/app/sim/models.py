# app/sim/models.py
"""
仿真数据模型
刚体参数、IMU 模型、仿真状态、专家控制器内部状态与扰动计划，
以及回合日志的固定列定义
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.core.config import DisturbanceConfig, ImuConfig, QuadModelConfig

# 回合日志 CSV 的固定表头（SI 单位，每 2ms 一行）
IMU_COLUMNS = ["gx", "gy", "gz", "ax", "ay", "az"]
SETPOINT_COLUMNS = ["sp_roll", "sp_pitch", "sp_yaw"]
ESTIMATE_COLUMNS = ["est_roll", "est_pitch", "est_yaw"]
TORQUE_COLUMNS = ["tq_roll", "tq_pitch", "tq_yaw"]
EXPERT_TORQUE_COLUMNS = ["exp_tq_roll", "exp_tq_pitch", "exp_tq_yaw"]
INTEGRAL_COLUMNS = ["i_roll", "i_pitch", "i_yaw"]
EPISODE_COLUMNS = (
    ["t"] + IMU_COLUMNS + SETPOINT_COLUMNS + ESTIMATE_COLUMNS + TORQUE_COLUMNS
    + EXPERT_TORQUE_COLUMNS + INTEGRAL_COLUMNS + ["dist_flag"]
)

# 真值 CSV：真实姿态与机体角速度
TRUTH_COLUMNS = ["t", "roll", "pitch", "yaw", "p", "q", "r", "qw", "qx", "qy", "qz"]

AXES = ("roll", "pitch", "yaw")


@dataclass
class QuadModel:
    """四旋翼转动模型"""
    inertia: np.ndarray
    torque_limit: np.ndarray
    drag: float
    gravity: float
    divergence_tilt_deg: float = 60.0

    @classmethod
    def from_config(cls, cfg: QuadModelConfig) -> "QuadModel":
        return cls(
            inertia=np.asarray(cfg.inertia, dtype=np.float64),
            torque_limit=np.asarray(cfg.torque_limit, dtype=np.float64),
            drag=cfg.drag,
            gravity=cfg.gravity,
            divergence_tilt_deg=cfg.divergence_tilt_deg,
        )


@dataclass
class ImuModel:
    """IMU 模型，零偏在每个回合内为常值"""
    gyro_noise_sd: float
    accel_noise_sd: float
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def from_config(cls, cfg: ImuConfig, gyro_bias: Optional[np.ndarray] = None) -> "ImuModel":
        bias = np.zeros(3) if gyro_bias is None else np.asarray(gyro_bias, dtype=np.float64)
        return cls(gyro_noise_sd=cfg.gyro_noise_sd, accel_noise_sd=cfg.accel_noise_sd, gyro_bias=bias)


@dataclass
class SimState:
    """刚体转动状态：四元数 [w, x, y, z]（机体到世界）与机体角速度"""
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    step: int = 0


@dataclass
class ExpertState:
    """专家控制器内部状态"""
    attitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_rate_error: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class PidBreakdown:
    """级联 PID 各项输出"""
    rate_setpoint: np.ndarray
    p: np.ndarray
    i: np.ndarray
    d: np.ndarray
    i_increment: np.ndarray


@dataclass
class DisturbanceSchedule:
    """
    随机扰动计划

    每步以 probability 触发（已在扰动中时不触发），持续 duration_steps 步，
    作用于随机选取的一个轴，幅值 U(0, max_fraction) 乘随机符号（指令单位）
    """
    probability: float
    duration_steps: int
    max_fraction: float
    axes: List[int]
    enabled: bool = True
    remaining: int = 0
    axis: int = 0
    magnitude: float = 0.0
    onsets: int = 0
    last_active: bool = False

    @classmethod
    def from_config(cls, cfg: DisturbanceConfig, rate_hz: int, enabled: Optional[bool] = None) -> "DisturbanceSchedule":
        return cls(
            probability=cfg.probability,
            duration_steps=max(1, int(round(cfg.duration_s * rate_hz))),
            max_fraction=cfg.max_fraction,
            axes=[AXES.index(a) for a in cfg.axes],
            enabled=cfg.enabled if enabled is None else enabled,
        )

    def step(self, rng: np.random.Generator) -> np.ndarray:
        """
        推进一步并返回本步扰动（指令单位，3 维）

        随机数在每步都按固定顺序抽取，保证不同配置下的序列可比
        """
        draw = rng.random()
        axis = int(rng.integers(len(self.axes)))
        mag = rng.uniform(0.0, self.max_fraction)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        out = np.zeros(3)
        self.last_active = False
        if not self.enabled:
            return out
        if self.remaining == 0 and draw < self.probability:
            self.remaining = self.duration_steps
            self.axis = self.axes[axis]
            self.magnitude = sign * mag
            self.onsets += 1
        if self.remaining > 0:
            out[self.axis] = self.magnitude
            self.remaining -= 1
            self.last_active = True
        return out
