# app/sim/dynamics.py
"""
刚体转动动力学（固定步长 500Hz）与四元数工具
"""
from typing import Optional

import numpy as np

from app.core.config import DT
from app.core.exceptions import EpisodeDiverged
from app.sim.models import QuadModel, SimState


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    """四元数 -> 旋转矩阵（机体到世界）"""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_to_euler(q: np.ndarray) -> np.ndarray:
    """四元数 -> (roll, pitch, yaw)，ZYX 顺序"""
    w, x, y, z = q
    roll = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return np.array([roll, pitch, yaw])


def euler_to_quat(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def tilt_deg(q: np.ndarray) -> float:
    """机体 z 轴与竖直方向的夹角（度）"""
    r22 = 1 - 2 * (q[1] * q[1] + q[2] * q[2])
    return float(np.degrees(np.arccos(np.clip(r22, -1.0, 1.0))))


def sim_step(model: QuadModel, state: SimState, torque: np.ndarray, dt: float = DT) -> SimState:
    """
    前进一步

    Args:
        model: 刚体参数
        state: 当前状态
        torque: 物理力矩 (N·m)
        dt: 步长，固定为 1/500 s

    Returns:
        新状态（四元数用新角速度积分并归一化）

    Raises:
        EpisodeDiverged: 状态出现非有限值
    """
    omega = state.omega
    inertia = model.inertia
    gyroscopic = np.cross(omega, inertia * omega)
    omega_new = omega + dt * (torque - gyroscopic - model.drag * omega) / inertia

    angle = float(np.linalg.norm(omega_new)) * dt
    if angle > 0.0:
        axis = omega_new / np.linalg.norm(omega_new)
        dq = np.concatenate(([np.cos(angle / 2)], np.sin(angle / 2) * axis))
        quat = quat_multiply(state.quat, dq)
    else:
        quat = state.quat.copy()
    quat = quat / np.linalg.norm(quat)

    if not (np.all(np.isfinite(omega_new)) and np.all(np.isfinite(quat))):
        raise EpisodeDiverged(state.step + 1, "non-finite state")
    return SimState(quat=quat, omega=omega_new, step=state.step + 1)


def check_envelope(model: QuadModel, state: SimState) -> Optional[str]:
    """超出飞行包线时返回原因，否则返回 None"""
    tilt = tilt_deg(state.quat)
    if tilt > model.divergence_tilt_deg:
        return f"tilt {tilt:.1f} deg exceeds {model.divergence_tilt_deg:.0f} deg"
    return None
