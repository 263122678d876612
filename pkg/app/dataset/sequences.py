# app/dataset/sequences.py
"""
训练序列切分

角色与列映射：
- estimator:  IMU(6)              -> est_*（专家互补滤波姿态）
- integrator: est_* + sp_*        -> i_*（减去窗口起点的积分值）
- controller: est_* + sp_*        -> exp_tq_*（时移 d 步）
- merged:     IMU(6) + sp_*       -> exp_tq_*（合并网络的剪枝 / 评估语料）

窗口不重叠；输入按训练集统计量归一化，目标保持物理单位。
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import DataError, InvalidSequenceError, StructuralError
from app.dataset.norm import NormStats, Normalizer
from app.schemas.episode import BuildReport
from app.sim.models import (
    ESTIMATE_COLUMNS,
    EXPERT_TORQUE_COLUMNS,
    IMU_COLUMNS,
    INTEGRAL_COLUMNS,
    SETPOINT_COLUMNS,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoleSpec:
    inputs: Tuple[str, ...]
    targets: Tuple[str, ...]
    subtract_initial: bool = False


ROLES: Dict[str, RoleSpec] = {
    "estimator": RoleSpec(tuple(IMU_COLUMNS), tuple(ESTIMATE_COLUMNS)),
    "integrator": RoleSpec(tuple(ESTIMATE_COLUMNS + SETPOINT_COLUMNS), tuple(INTEGRAL_COLUMNS), True),
    "controller": RoleSpec(tuple(ESTIMATE_COLUMNS + SETPOINT_COLUMNS), tuple(EXPERT_TORQUE_COLUMNS)),
    "merged": RoleSpec(tuple(IMU_COLUMNS + SETPOINT_COLUMNS), tuple(EXPERT_TORQUE_COLUMNS)),
}


def role_spec(role: str) -> RoleSpec:
    if role not in ROLES:
        raise StructuralError(f"unknown dataset role '{role}', expected one of {sorted(ROLES)}")
    return ROLES[role]


@dataclass
class SequenceBatch:
    """定长训练序列批"""
    inputs: np.ndarray           # (B, T, C_in)，已归一化
    targets: np.ndarray          # (B, T, C_out)
    role: str
    shift: int
    input_labels: List[str]
    target_labels: List[str]
    episode_ids: List[str] = field(default_factory=list)
    offsets: List[int] = field(default_factory=list)
    input_mean: Optional[np.ndarray] = None
    input_std: Optional[np.ndarray] = None
    dataset_hash: Optional[str] = None

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def seq_len(self) -> int:
        return int(self.inputs.shape[1])

    def subset(self, index: Sequence[int]) -> "SequenceBatch":
        idx = list(index)
        return SequenceBatch(
            inputs=self.inputs[idx], targets=self.targets[idx], role=self.role, shift=self.shift,
            input_labels=self.input_labels, target_labels=self.target_labels,
            episode_ids=[self.episode_ids[i] for i in idx], offsets=[self.offsets[i] for i in idx],
            input_mean=self.input_mean, input_std=self.input_std, dataset_hash=self.dataset_hash,
        )

    def raw_inputs(self) -> np.ndarray:
        """反归一化的输入"""
        if self.input_mean is None:
            return self.inputs
        return self.inputs * self.input_std + self.input_mean


def window_starts(n_rows: int, seq_len: int, shift: int) -> List[int]:
    """不重叠窗口的起点，满足 start + seq_len + shift <= n_rows"""
    usable = n_rows - shift
    return list(range(0, usable - seq_len + 1, seq_len)) if usable >= seq_len else []


def make_sequences(
    episodes,
    stats: NormStats,
    role: str,
    shift: int = 0,
    seq_len: int = 2000,
    dtype=np.float32,
) -> Tuple[SequenceBatch, BuildReport]:
    """
    把回合切成定长序列

    Args:
        episodes: 回合列表
        stats: 归一化统计量（需包含该角色全部输入通道）
        role: estimator / integrator / controller / merged
        shift: 目标时移 d，targets[t] 对应原始时刻 t + d
        seq_len: 序列长度 T

    Returns:
        (SequenceBatch, BuildReport)，序列按 (回合编号, 窗口序号) 排序

    Raises:
        InvalidSequenceError: seq_len < 2
        DataError: 没有可用序列
    """
    spec = role_spec(role)
    if seq_len < 2:
        raise InvalidSequenceError(f"seq_len {seq_len} < 2")
    if shift < 0 or shift >= seq_len:
        raise InvalidSequenceError(f"shift {shift} must satisfy 0 <= d < seq_len")
    norm = stats.select(spec.inputs)
    normalizer = Normalizer(norm)
    report = BuildReport(role=role, shift=shift, seq_len=seq_len)

    inputs: List[np.ndarray] = []
    targets: List[np.ndarray] = []
    ids: List[str] = []
    offsets: List[int] = []
    for ep in sorted(episodes, key=lambda e: e.episode_id):
        if not ep.usable:
            report.dropped_unusable.append(ep.episode_id)
            continue
        starts = window_starts(ep.n_rows, seq_len, shift)
        if not starts:
            logger.warning(f"Episode {ep.episode_id} has {ep.n_rows} rows, shorter than {seq_len}+{shift}; skipped")
            report.skipped_short.append(ep.episode_id)
            continue
        x = normalizer.normalize(ep.log[list(spec.inputs)].to_numpy(dtype=np.float64))
        y = ep.log[list(spec.targets)].to_numpy(dtype=np.float64)
        for s in starts:
            window = y[s + shift: s + shift + seq_len]
            if spec.subtract_initial:
                window = window - window[0]
            inputs.append(x[s: s + seq_len])
            targets.append(window)
            ids.append(ep.episode_id)
            offsets.append(s)

    if not inputs:
        raise DataError(f"No usable {role} sequences of length {seq_len} (shift {shift})")
    report.n_sequences = len(inputs)
    if report.dropped_unusable:
        logger.warning(f"Dropped {len(report.dropped_unusable)} unusable episodes for role {role}")
    logger.info(f"Built {report.n_sequences} {role} sequences (T={seq_len}, d={shift})")
    batch = SequenceBatch(
        inputs=np.stack(inputs).astype(dtype),
        targets=np.stack(targets).astype(dtype),
        role=role,
        shift=shift,
        input_labels=list(spec.inputs),
        target_labels=list(spec.targets),
        episode_ids=ids,
        offsets=offsets,
        input_mean=norm.mean.astype(dtype),
        input_std=norm.std.astype(dtype),
        dataset_hash=stats.corpus_hash,
    )
    return batch, report


def split_episodes(episodes, test_fraction: float, seed: int = 0) -> Tuple[list, list]:
    """
    按回合划分训练 / 测试集（从不按窗口划分）

    Returns:
        (train, test)，两者的回合编号集合不相交
    """
    ordered = sorted(episodes, key=lambda e: e.episode_id)
    n_test = int(round(len(ordered) * test_fraction))
    if test_fraction > 0 and len(ordered) > 1:
        n_test = min(max(n_test, 1), len(ordered) - 1)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    test_idx = set(int(i) for i in perm[:n_test])
    train = [ep for i, ep in enumerate(ordered) if i not in test_idx]
    test = [ep for i, ep in enumerate(ordered) if i in test_idx]
    return train, test
