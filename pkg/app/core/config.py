# app/core/config.py
"""
应用配置模块
使用 pydantic-settings 管理进程级配置（环境变量 / .env），
使用 pydantic 模型描述声明式的流水线配置（JSON 文件 + 命令行覆盖）
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from app.core.exceptions import ConfigError

# 仿真与网络全局采用 500Hz 固定步长
CONTROL_RATE_HZ = 500
DT = 1.0 / CONTROL_RATE_HZ


class Settings(BaseSettings):
    """应用配置类"""

    # 应用基本信息
    APP_NAME: str = "Neuromorphic Attitude Pipeline"
    APP_VERSION: str = "1.0.0"

    # 运行目录根路径（未指定 --run-dir 时使用）
    SNN_RUN_ROOT: str = "runs"
    DEFAULT_CONFIG_PATH: str = "configs/default.json"

    # 日志级别
    LOG_LEVEL: str = "INFO"

    class Config:
        env_file = ".env"
        case_sensitive = True


# 创建全局配置实例
settings = Settings()


class _Section(BaseModel):
    """配置段基类：未知键直接报错，避免拼写错误被静默忽略"""
    model_config = ConfigDict(extra="forbid")


Vec3 = Tuple[float, float, float]


class QuadModelConfig(_Section):
    """四旋翼刚体参数"""
    inertia: Vec3 = Field((1.4e-5, 1.4e-5, 2.2e-5), description="转动惯量对角线 (kg·m²)")
    torque_limit: Vec3 = Field((2.0e-3, 2.0e-3, 4.0e-4), description="各轴最大力矩 (N·m)，对应指令 ±1")
    drag: float = Field(7.0e-6, ge=0, description="线性转动阻尼系数 (N·m·s/rad)")
    gravity: float = Field(9.81, gt=0)
    torque_offset_max: Vec3 = Field((0.03, 0.03, 0.01), description="每回合常值力矩偏置上限（指令单位）")
    divergence_tilt_deg: float = Field(60.0, gt=0, description="超过该倾角视为发散")

    @field_validator("inertia", "torque_limit")
    @classmethod
    def _positive(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("entries must be > 0")
        return v


class ImuConfig(_Section):
    """IMU 传感器模型"""
    gyro_noise_sd: float = Field(0.01, ge=0, description="陀螺噪声标准差 (rad/s)")
    gyro_bias_max: float = Field(0.02, ge=0, description="每回合陀螺零偏上限 (rad/s)")
    accel_noise_sd: float = Field(0.05, ge=0, description="加速度计噪声标准差 (m/s²)")


class PidGainsConfig(_Section):
    """专家控制器参数（级联 PID + 互补滤波），调参一次后作为数据冻结"""
    version: str = "cf-sim-v1"
    att_p: Vec3 = (12.0, 12.0, 6.0)
    rate_p: Vec3 = (0.35, 0.35, 1.5)
    rate_i: Vec3 = (2.0, 2.0, 5.0)
    rate_d: Vec3 = (0.002, 0.002, 0.0)
    i_limit: Vec3 = (0.3, 0.3, 0.3)
    filter_alpha: float = Field(0.995, gt=0, lt=1)


class DisturbanceConfig(_Section):
    """随机扰动注入参数"""
    enabled: bool = False
    probability: float = Field(0.01, ge=0, le=1, description="每步触发概率")
    duration_s: float = Field(0.2, gt=0)
    max_fraction: float = Field(0.5, ge=0, le=1, description="扰动幅值上限（最大指令的比例）")
    axes: List[str] = ["roll", "pitch", "yaw"]

    @field_validator("axes")
    @classmethod
    def _known_axes(cls, v):
        unknown = set(v) - {"roll", "pitch", "yaw"}
        if unknown or not v:
            raise ValueError(f"axes must be a non-empty subset of roll/pitch/yaw, got {v}")
        return v


class ManeuverConfig(_Section):
    """随机机动脚本参数（模拟手动飞行）"""
    max_angle_deg: float = 20.0
    max_yaw_deg: float = 30.0
    hold_min_s: float = 0.3
    hold_max_s: float = 1.5
    zero_probability: float = Field(0.3, ge=0, le=1, description="回到水平设定的概率")


class SimConfig(_Section):
    """仿真配置段"""
    model: QuadModelConfig = QuadModelConfig()
    imu: ImuConfig = ImuConfig()
    gains: PidGainsConfig = PidGainsConfig()
    disturbance: DisturbanceConfig = DisturbanceConfig()
    maneuver: ManeuverConfig = ManeuverConfig()
    rate_hz: int = CONTROL_RATE_HZ
    episode_seconds: float = Field(60.0, gt=0)
    seed: int = Field(0, ge=0)

    @field_validator("rate_hz")
    @classmethod
    def _fixed_rate(cls, v):
        if v != CONTROL_RATE_HZ:
            raise ValueError(f"rate_hz is fixed at {CONTROL_RATE_HZ}")
        return v


class DatasetConfig(_Section):
    """数据集配置段"""
    seq_len: int = Field(2000, ge=2)
    shift_d: int = Field(6, ge=0)
    minutes: float = Field(20.0, gt=0, description="每一轮采集的总时长（分钟）")
    rounds: List[str] = ["expert", "snn", "disturbed"]
    test_fraction: float = Field(0.2, ge=0, lt=1)
    split_seed: int = 0


class TrainConfig(_Section):
    """单个子网络的训练配置"""
    widths: List[int] = [150, 150]
    recurrent: List[bool] = [False, True]
    surrogate_slope: float = Field(7.0, description="arctan 代理梯度斜率 s")
    learning_rate: float = Field(1e-3, gt=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = Field(8, ge=1)
    epochs: int = Field(30, ge=1)
    seq_len: int = 2000
    init_seed: int = 0
    tau_min: float = 0.0
    tau_max: float = 1.0
    theta_min: float = 0.01
    mse_weight: float = 1.0
    corr_weight: float = 0.5
    target_time_shift: int = Field(0, description="目标时移 d（步）")
    n_integrators: int = Field(0, ge=0, description="固定参数积分神经元数量")
    readout_window: Optional[int] = Field(None, description="读出指数平均窗口（仅积分器）")
    free_integrators: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.surrogate_slope <= 0:
            raise ValueError("surrogate_slope must be > 0")
        if self.seq_len < 2:
            raise ValueError("seq_len must be >= 2")
        if not 0 <= self.target_time_shift < self.seq_len:
            raise ValueError("target_time_shift must satisfy 0 <= d < seq_len")
        if len(self.recurrent) != len(self.widths):
            raise ValueError("recurrent flags must match widths")
        if self.n_integrators > self.widths[-1]:
            raise ValueError("n_integrators exceeds the last layer width")
        return self


class TrainingConfig(_Section):
    """三个角色的训练配置"""
    estimator: TrainConfig = TrainConfig(widths=[150, 150], recurrent=[False, True])
    integrator: TrainConfig = TrainConfig(
        widths=[10], recurrent=[False], n_integrators=10, readout_window=50, epochs=40
    )
    controller: TrainConfig = TrainConfig(
        widths=[130], recurrent=[True], n_integrators=10, target_time_shift=6
    )


class ComposeConfig(_Section):
    """合并与剪枝配置段"""
    target_widths: List[int] = [150, 100, 80]
    max_mse_ratio: float = Field(1.01, ge=1.0)


class EvalConfig(_Section):
    """评估配置段"""
    scripts: List[str] = ["step"]
    n_runs: int = Field(10, ge=2)
    shift_range: int = Field(20, ge=1)
    seed: int = 1234
    bench_steps: int = Field(100000, ge=1)


class PipelineConfig(_Section):
    """完整流水线配置，默认值即标准实验设置"""
    sim: SimConfig = SimConfig()
    dataset: DatasetConfig = DatasetConfig()
    training: TrainingConfig = TrainingConfig()
    compose: ComposeConfig = ComposeConfig()
    eval: EvalConfig = EvalConfig()


def _parse_override_value(raw: str) -> Any:
    """覆盖值优先按 JSON 字面量解析，失败时按字符串处理"""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    应用 section.key=value 形式的覆盖项

    Args:
        data: 原始配置字典（会被原地修改）
        overrides: 覆盖项列表

    Returns:
        修改后的配置字典
    """
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override must look like section.key=value, got '{item}'", key=item)
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError("Override path crosses a non-section value", key=dotted)
        node[parts[-1]] = _parse_override_value(raw)
    return data


def _first_error_key(exc: ValidationError) -> str:
    errors = exc.errors()
    if not errors:
        return "?"
    return ".".join(str(p) for p in errors[0].get("loc", ()))


def load_pipeline_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> PipelineConfig:
    """
    读取并校验流水线配置

    Args:
        path: JSON 配置文件路径，None 表示使用默认值
        overrides: 命令行覆盖项

    Returns:
        PipelineConfig 实例

    Raises:
        ConfigError: 文件不存在、JSON 非法、未知键或取值非法
    """
    data: Dict[str, Any] = PipelineConfig().model_dump(mode="json")
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError("Config file not found", path=str(p))
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON: {e}", path=str(p)) from e
    data = apply_overrides(data, overrides)
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid pipeline config: {e.errors()[0]['msg']}",
                          key=_first_error_key(e), path=path) from e


def dump_pipeline_config(config: PipelineConfig) -> str:
    """序列化为稳定的 JSON 文本"""
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True)


def config_hash(model: BaseModel) -> str:
    """配置的规范 JSON 的 sha256，用于检查点溯源"""
    canonical = json.dumps(model.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
