# app/core/exceptions.py
"""
流水线异常定义
每一类异常对应一个 CLI 退出码，便于批处理脚本判断失败类别
"""
from typing import Optional


class PipelineError(Exception):
    """流水线异常基类"""

    exit_code: int = 1
    category: str = "error"

    def __init__(self, message: str, *, key: Optional[str] = None, path: Optional[str] = None):
        """
        Args:
            message: 错误描述
            key: 出错的配置键（如果有）
            path: 出错的文件路径（如果有）
        """
        details = []
        if key:
            details.append(f"key={key}")
        if path:
            details.append(f"file={path}")
        suffix = f" [{', '.join(details)}]" if details else ""
        super().__init__(f"{message}{suffix}")
        self.key = key
        self.path = path


class StructuralError(PipelineError, ValueError):
    """维度不匹配等结构性错误（程序缺陷，而非数据问题）"""
    exit_code = 1
    category = "structural"


class ConfigError(PipelineError):
    """配置错误"""
    exit_code = 2
    category = "config"


class DataError(PipelineError):
    """数据错误"""
    exit_code = 3
    category = "data"


class NumericDivergence(PipelineError):
    """数值发散（NaN / Inf）"""
    exit_code = 4
    category = "divergence"


class InvariantRejection(PipelineError):
    """不变量校验失败，产物被拒绝写出"""
    exit_code = 5
    category = "invariant"


class InvalidSequenceError(DataError):
    """序列长度不足（T < 2）"""


class ZeroVarianceChannelError(DataError):
    """零方差通道，无法归一化"""

    def __init__(self, channel: str):
        super().__init__(f"Channel '{channel}' has zero variance over the corpus", key=channel)
        self.channel = channel


class SchemaMismatchError(DataError):
    """数据轮次之间通道表头不一致"""


class MergeError(StructuralError):
    """子网络合并时维度不匹配"""


class PruneRejected(InvariantRejection):
    """剪枝后 MSE 保持率不满足要求"""

    def __init__(self, ratio: float, max_ratio: float):
        super().__init__(f"Prune rejected: MSE ratio {ratio:.6f} exceeds {max_ratio:.4f}")
        self.ratio = ratio
        self.max_ratio = max_ratio


class EpisodeDiverged(NumericDivergence):
    """仿真状态非有限或超出飞行包线"""

    def __init__(self, step: int, reason: str):
        super().__init__(f"Episode diverged at step {step}: {reason}")
        self.step = step
        self.reason = reason


class TrainingDiverged(NumericDivergence):
    """训练损失或梯度出现非有限值"""

    def __init__(self, message: str, *, sequence: Optional[int] = None, step: Optional[int] = None,
                 seed: Optional[int] = None, config_echo: Optional[dict] = None):
        where = []
        if sequence is not None:
            where.append(f"sequence={sequence}")
        if step is not None:
            where.append(f"step={step}")
        if seed is not None:
            where.append(f"seed={seed}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.sequence = sequence
        self.step = step
        self.seed = seed
        self.config_echo = config_echo or {}
