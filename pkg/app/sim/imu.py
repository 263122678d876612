# app/sim/imu.py
"""
IMU 传感器模型
陀螺 = 角速度 + 零偏 + 噪声；加速度计 = 机体系重力方向（悬停假设）+ 噪声
"""
import numpy as np

from app.sim.dynamics import quat_to_rotation
from app.sim.models import ImuModel, SimState


def imu_sample(state: SimState, imu: ImuModel, rng: np.random.Generator, gravity: float = 9.81) -> np.ndarray:
    """
    采样一次 IMU

    Args:
        state: 刚体状态
        imu: IMU 模型
        rng: 噪声随机数发生器
        gravity: 重力加速度

    Returns:
        6 维向量 (gx, gy, gz, ax, ay, az)
    """
    gyro_noise = rng.standard_normal(3) * imu.gyro_noise_sd
    accel_noise = rng.standard_normal(3) * imu.accel_noise_sd
    gyro = state.omega + imu.gyro_bias + gyro_noise
    rot = quat_to_rotation(state.quat)
    accel = rot.T @ np.array([0.0, 0.0, gravity]) + accel_noise
    return np.concatenate((gyro, accel))


def sample_episode_biases(rng: np.random.Generator, gyro_bias_max: float, model_offset_max) -> tuple:
    """抽取每回合常值的陀螺零偏与力矩偏置（均匀分布）"""
    gyro_bias = rng.uniform(-gyro_bias_max, gyro_bias_max, size=3)
    offset_max = np.asarray(model_offset_max, dtype=np.float64)
    torque_offset = rng.uniform(-1.0, 1.0, size=3) * offset_max
    return gyro_bias, torque_offset


def accel_tilt(accel: np.ndarray) -> np.ndarray:
    """由加速度计推算 (roll, pitch)"""
    ax, ay, az = accel
    roll = np.arctan2(ay, az)
    pitch = np.arctan2(-ax, np.sqrt(ay * ay + az * az))
    return np.array([roll, pitch])
