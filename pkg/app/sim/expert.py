# app/sim/expert.py
"""
专家控制器：互补滤波姿态估计 + 级联 PID
外环：姿态误差 -> 角速度设定（P）
内环：角速度误差 -> 归一化力矩指令（P、I、D），积分项带抗饱和限幅
"""
from typing import Tuple

import numpy as np

from app.core.config import DT, PidGainsConfig
from app.sim.imu import accel_tilt
from app.sim.models import ExpertState, PidBreakdown


def wrap_angle(angle):
    """角度折叠到 [-pi, pi)"""
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


def complementary_filter(attitude: np.ndarray, imu: np.ndarray, alpha: float, dt: float = DT) -> np.ndarray:
    """
    互补滤波一步

    roll/pitch: alpha * (att + dt * gyro) + (1 - alpha) * 加速度计倾角
    yaw: 仅陀螺积分
    """
    predicted = attitude + dt * imu[:3]
    tilt = accel_tilt(imu[3:])
    out = predicted.copy()
    out[:2] = alpha * predicted[:2] + (1.0 - alpha) * tilt
    out[2] = wrap_angle(predicted[2])
    return out


def expert_step(
    gains: PidGainsConfig,
    state: ExpertState,
    imu: np.ndarray,
    setpoints: np.ndarray,
    dt: float = DT,
) -> Tuple[ExpertState, np.ndarray, np.ndarray, PidBreakdown]:
    """
    专家控制器单步

    Args:
        gains: 版本化的 PID 参数
        state: 控制器内部状态
        imu: 6 维 IMU 读数
        setpoints: 姿态设定 (roll, pitch, yaw)，rad

    Returns:
        (新状态, 姿态估计, 力矩指令 [-1, 1], PID 分解)
    """
    attitude = complementary_filter(state.attitude, imu, gains.filter_alpha, dt)

    error = np.asarray(setpoints, dtype=np.float64) - attitude
    error[2] = wrap_angle(error[2])
    rate_sp = np.asarray(gains.att_p) * error
    rate_error = rate_sp - imu[:3]

    p_term = np.asarray(gains.rate_p) * rate_error
    i_limit = np.asarray(gains.i_limit)
    integral = np.clip(state.integral + np.asarray(gains.rate_i) * rate_error * dt, -i_limit, i_limit)
    d_term = np.asarray(gains.rate_d) * (rate_error - state.prev_rate_error) / dt

    torque = np.clip(p_term + integral + d_term, -1.0, 1.0)
    breakdown = PidBreakdown(
        rate_setpoint=rate_sp,
        p=p_term,
        i=integral,
        d=d_term,
        i_increment=integral - state.integral,
    )
    new_state = ExpertState(attitude=attitude, integral=integral, prev_rate_error=rate_error)
    return new_state, attitude, torque, breakdown


class ExpertPilot:
    """有状态的专家控制器封装"""

    def __init__(self, gains: PidGainsConfig):
        self.gains = gains
        self.state = ExpertState()

    def reset(self) -> None:
        self.state = ExpertState()

    def step(self, imu: np.ndarray, setpoints: np.ndarray) -> Tuple[np.ndarray, np.ndarray, PidBreakdown]:
        self.state, attitude, torque, breakdown = expert_step(self.gains, self.state, imu, setpoints)
        return attitude, torque, breakdown
