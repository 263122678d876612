# app/sim/scripts.py
"""
设定值脚本注册表
每个脚本生成 (N, 3) 的姿态设定序列（rad），500Hz
"""
from typing import Callable, Dict, List

import numpy as np

from app.core.config import CONTROL_RATE_HZ, ManeuverConfig
from app.core.exceptions import ConfigError

ScriptFn = Callable[[float, np.random.Generator, ManeuverConfig], np.ndarray]

# 阶跃测试：0° 2s，+10° 1.5s，-10° 1.5s，0° 2.5s（roll 轴）
STEP_PROFILE = [(0.0, 2.0), (10.0, 1.5), (-10.0, 1.5), (0.0, 2.5)]


def _n_steps(seconds: float) -> int:
    return int(round(seconds * CONTROL_RATE_HZ))


def hover_script(seconds: float, rng: np.random.Generator, cfg: ManeuverConfig) -> np.ndarray:
    """水平悬停，设定恒为 0"""
    return np.zeros((_n_steps(seconds), 3))


def step_script(seconds: float, rng: np.random.Generator, cfg: ManeuverConfig) -> np.ndarray:
    """阶跃响应测试脚本，时长固定为 7.5s，忽略 seconds"""
    blocks = [np.full(_n_steps(dur), np.radians(deg)) for deg, dur in STEP_PROFILE]
    roll = np.concatenate(blocks)
    out = np.zeros((roll.size, 3))
    out[:, 0] = roll
    return out


def step_onset_index() -> int:
    """+10° 阶跃开始的步序号"""
    return _n_steps(STEP_PROFILE[0][1])


def step_window() -> slice:
    """+10° 阶跃持续的步区间"""
    start = step_onset_index()
    return slice(start, start + _n_steps(STEP_PROFILE[1][1]))


def maneuver_script(seconds: float, rng: np.random.Generator, cfg: ManeuverConfig) -> np.ndarray:
    """
    随机机动：分段保持的 roll/pitch/yaw 设定，模拟手动飞行

    每段保持时间 U(hold_min, hold_max)，以 zero_probability 回到水平，
    否则在 ±max_angle 内均匀抽取；yaw 在 ±max_yaw 内抽取
    """
    n = _n_steps(seconds)
    out = np.zeros((n, 3))
    t = 0
    while t < n:
        hold = max(1, _n_steps(rng.uniform(cfg.hold_min_s, cfg.hold_max_s)))
        if rng.random() < cfg.zero_probability:
            target = np.zeros(3)
        else:
            angle = np.radians(cfg.max_angle_deg)
            target = np.array([
                rng.uniform(-angle, angle),
                rng.uniform(-angle, angle),
                rng.uniform(-np.radians(cfg.max_yaw_deg), np.radians(cfg.max_yaw_deg)),
            ])
        out[t:t + hold] = target
        t += hold
    return out


def position_script(seconds: float, rng: np.random.Generator, cfg: ManeuverConfig) -> np.ndarray:
    """
    外环位置控制器会给出的 pitch 设定：1s 时前移 1m，6s 时返回原点

    位置外环用理想质点模型 x'' = g * tan(pitch_sp) 计算，不模拟平动动力学
    """
    n = max(_n_steps(seconds), _n_steps(10.0))
    dt = 1.0 / CONTROL_RATE_HZ
    kp, kd, g = 2.0, 2.5, 9.81
    limit = np.radians(cfg.max_angle_deg)
    x = v = 0.0
    out = np.zeros((n, 3))
    for k in range(n):
        t = k * dt
        target = 1.0 if 1.0 <= t < 6.0 else 0.0
        pitch_sp = float(np.clip(np.arctan((kp * (target - x) - kd * v) / g), -limit, limit))
        out[k, 1] = pitch_sp
        v += dt * g * np.tan(pitch_sp)
        x += dt * v
    return out


_SCRIPT_REGISTRY: Dict[str, ScriptFn] = {
    "hover": hover_script,
    "step": step_script,
    "maneuver": maneuver_script,
    "position": position_script,
}


def list_scripts() -> List[str]:
    return sorted(_SCRIPT_REGISTRY)


def build_setpoints(name: str, seconds: float, rng: np.random.Generator, cfg: ManeuverConfig) -> np.ndarray:
    """
    按名称生成设定值序列

    Raises:
        ConfigError: 未知脚本名
    """
    fn = _SCRIPT_REGISTRY.get(name.lower())
    if fn is None:
        raise ConfigError(f"Unknown setpoint script '{name}', available: {list_scripts()}", key="script")
    return fn(seconds, rng, cfg)
