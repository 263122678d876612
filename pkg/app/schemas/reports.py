# app/schemas/reports.py
"""
评估、剪枝与基准测试报告 Schema
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class PruneReport(BaseModel):
    """剪枝报告"""
    widths_before: List[int]
    widths_after: List[int]
    scores: List[List[float]] = Field(..., description="每层每个神经元的贡献分数")
    removed: List[List[int]] = Field(..., description="每层被移除的神经元编号（原始编号）")
    mse_before: float
    mse_after: float
    mse_ratio: float
    ops_before: Dict[str, float]
    ops_after: Dict[str, float]
    score_definition: str = "total spikes x L1 norm of outgoing weights"


class CorrelationCurve(BaseModel):
    """相关系数-时移曲线"""
    shifts: List[int]
    channels: List[str]
    rho: List[List[float]] = Field(..., description="rho[shift_index][channel]")
    peak_shift: int


class SparsityStats(BaseModel):
    """脉冲稀疏度统计"""
    mean: float = Field(..., ge=0, le=1)
    per_layer: List[float]
    histogram: List[int]
    bin_edges: List[float]


class OpenLoopReport(BaseModel):
    mse: List[float]
    channels: List[str]
    correlation: Optional[CorrelationCurve] = None
    sparsity: Optional[SparsityStats] = None


class ClosedLoopReport(BaseModel):
    rmse_true_deg: float = Field(..., ge=0)
    rmse_est_deg: float = Field(..., ge=0, description="以估计姿态为参考")
    sd_deg: float = Field(..., ge=0)
    rise_time_ms: Optional[float] = None
    rise_times_ms: List[Optional[float]] = []
    sparsity: Optional[float] = None
    n_diverged: int = 0


class EvalReport(BaseModel):
    """评估报告"""
    controller: str
    checkpoint_hash: Optional[str] = None
    script: Optional[str] = None
    seeds: List[int] = []
    n_runs: int = 0
    open_loop: Optional[OpenLoopReport] = None
    closed_loop: Optional[ClosedLoopReport] = None
    void: bool = False
    void_reason: Optional[str] = None
    metadata: Dict[str, str] = {}


class BenchReport(BaseModel):
    """单步推理耗时统计"""
    n_steps: int
    p50_us: float
    p99_us: float
    mean_us: float
    widths: List[int]
    ops_dense: float
    ops_at_sparsity: float
    measured_sparsity: float
