# app/snn/training.py
"""
模仿学习训练
- 估计网络：IMU -> 专家姿态估计
- 积分神经元预训练：固定泄漏与阈值为 1，仅训练输入 / 输出权重
- 控制网络：姿态估计 + 设定值 -> 时移后的专家力矩，内含预训练的积分神经元
"""
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.core.config import TrainConfig, config_hash
from app.core.exceptions import StructuralError, TrainingDiverged
from app.dataset.sequences import SequenceBatch
from app.sim.models import IMU_COLUMNS
from app.snn.bptt import bptt_grads, forward_trace, grad_norm
from app.snn.core import DEFAULT_DTYPE, LayerParams, SpikingNetwork
from app.snn.losses import LossBreakdown, loss
from app.snn.optim import Adam, apply_constraints, named_parameters, select_parameters

logger = logging.getLogger(__name__)

# 固定积分神经元只训练输入 / 输出权重
INTEGRATOR_KINDS = ("w_ff", "w_decode")


def init_network(
    widths: Sequence[int],
    recurrent: Sequence[bool],
    input_labels: Sequence[str],
    output_labels: Sequence[str],
    seed: int = 0,
    n_integrators: int = 0,
    name: str = "snn",
    dtype=DEFAULT_DTYPE,
) -> SpikingNetwork:
    """
    初始化网络

    前馈 / 编码 / 解码权重 ~ U(±1/sqrt(fan_in))，递归权重同分布再乘 0.1，
    泄漏因子 ~ U(0.6, 0.95)，阈值为 1。最后一层的前 n_integrators 个神经元
    设为积分神经元（泄漏与阈值固定为 1，无递归输入）。

    随机数按层依次抽取 w_ff、w_rec、tau_mem、tau_syn，最后抽取 w_decode，
    因此 n_integrators 不同的两个网络拥有完全相同的权重。
    """
    if len(widths) != len(recurrent):
        raise StructuralError("recurrent flags must match widths")
    rng = np.random.default_rng(seed)
    layers: List[LayerParams] = []
    n_in = len(input_labels)
    for n, rec in zip(widths, recurrent):
        bound = 1.0 / np.sqrt(n_in)
        w_ff = rng.uniform(-bound, bound, size=(n, n_in))
        w_rec = rng.uniform(-1.0 / np.sqrt(n), 1.0 / np.sqrt(n), size=(n, n)) * 0.1 if rec else None
        tau_mem = rng.uniform(0.6, 0.95, size=n)
        tau_syn = rng.uniform(0.6, 0.95, size=n)
        layers.append(LayerParams(
            tau_mem=tau_mem.astype(dtype), tau_syn=tau_syn.astype(dtype), theta=np.ones(n, dtype),
            w_ff=w_ff.astype(dtype), w_rec=None if w_rec is None else w_rec.astype(dtype),
        ))
        n_in = n
    bound = 1.0 / np.sqrt(widths[-1])
    w_decode = rng.uniform(-bound, bound, size=(len(output_labels), widths[-1])).astype(dtype)

    if n_integrators:
        last = layers[-1]
        if n_integrators > last.n_hidden:
            raise StructuralError(f"n_integrators {n_integrators} exceeds last layer width {last.n_hidden}")
        last.frozen_mask[:n_integrators] = True
        _freeze(last)

    return SpikingNetwork(
        layers=layers, w_decode=w_decode, input_labels=list(input_labels),
        output_labels=list(output_labels), name=name,
    )


def _freeze(layer: LayerParams) -> None:
    frozen = layer.frozen_mask
    layer.tau_mem[frozen] = 1
    layer.tau_syn[frozen] = 1
    layer.theta[frozen] = 1
    if layer.w_rec is not None:
        layer.w_rec[frozen, :] = 0


@dataclass
class EpochMetrics:
    epoch: int
    total: float
    mse: float
    pearson_term: float
    grad_norm: float
    wall_time: float
    test_total: Optional[float] = None


@dataclass
class TrainResult:
    """训练结果：网络、逐轮指标、测试集损失"""
    net: SpikingNetwork
    history: List[EpochMetrics] = field(default_factory=list)
    test_loss: Optional[LossBreakdown] = None

    @property
    def final_loss(self) -> float:
        return self.history[-1].total if self.history else float("nan")

    def metrics_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(m) for m in self.history])

    def write_metrics(self, path: Union[str, Path]) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.metrics_frame().to_csv(path, index=False)


class SnnTrainer:
    """
    BPTT 训练器

    每个小批：前向记录 -> 反向求梯度 -> Adam 更新 -> 参数约束
    """

    def __init__(self, cfg: TrainConfig, trainable_kinds: Optional[Iterable[str]] = None, name: str = "snn"):
        """
        Args:
            cfg: 训练配置
            trainable_kinds: 可训练参数种类，None 表示全部
            name: 日志中使用的名称
        """
        self.cfg = cfg
        self.trainable_kinds = None if trainable_kinds is None else tuple(trainable_kinds)
        self.name = name

    def _grads(self, net: SpikingNetwork, batch: SequenceBatch, index: np.ndarray):
        cfg = self.cfg
        try:
            return bptt_grads(
                net, batch.inputs[index], batch.targets[index], cfg.surrogate_slope,
                cfg.mse_weight, cfg.corr_weight, seed=cfg.init_seed,
            )
        except TrainingDiverged as e:
            seq = None if e.sequence is None or e.sequence < 0 else int(index[e.sequence])
            raise TrainingDiverged(
                f"{self.name}: training diverged", sequence=seq, step=e.step,
                seed=cfg.init_seed, config_echo=cfg.model_dump(mode="json"),
            ) from e

    def evaluate(self, net: SpikingNetwork, batch: SequenceBatch) -> LossBreakdown:
        """二值前向下的损失（按小批推理后拼接）"""
        outputs = []
        for start in range(0, len(batch), self.cfg.batch_size):
            trace = forward_trace(net, batch.inputs[start:start + self.cfg.batch_size], self.cfg.surrogate_slope)
            outputs.append(trace.outputs)
        return loss(np.concatenate(outputs), batch.targets, self.cfg.mse_weight, self.cfg.corr_weight)

    def fit(
        self,
        net: SpikingNetwork,
        train: SequenceBatch,
        test: Optional[SequenceBatch] = None,
    ) -> TrainResult:
        """
        训练网络（原地更新参数）

        Args:
            net: 初始网络
            train: 训练序列
            test: 按回合划分的测试序列（可选）

        Returns:
            TrainResult
        """
        cfg = self.cfg
        params = named_parameters(net)
        names = select_parameters(net, self.trainable_kinds)
        optimizer = Adam(names, cfg.learning_rate, cfg.betas, cfg.eps)
        rng = np.random.default_rng(cfg.init_seed + 1)
        history: List[EpochMetrics] = []

        logger.info(f"Training {self.name}: widths={net.widths}, {len(train)} sequences, "
                    f"T={train.seq_len}, epochs={cfg.epochs}, trainable={sorted({n.rsplit('.', 1)[-1] for n in names})}")
        for epoch in range(1, cfg.epochs + 1):
            started = time.perf_counter()
            perm = rng.permutation(len(train))
            sums = np.zeros(3)
            norms = []
            for start in range(0, len(perm), cfg.batch_size):
                index = perm[start:start + cfg.batch_size]
                breakdown, grads = self._grads(net, train, index)
                optimizer.step(params, grads)
                apply_constraints(net, cfg.tau_min, cfg.tau_max, cfg.theta_min)
                sums += len(index) * np.array([breakdown.total, breakdown.mse, breakdown.pearson_term])
                norms.append(grad_norm({n: grads[n] for n in names if n in grads}))
            sums /= len(perm)
            metrics = EpochMetrics(
                epoch=epoch, total=float(sums[0]), mse=float(sums[1]), pearson_term=float(sums[2]),
                grad_norm=float(np.mean(norms)), wall_time=time.perf_counter() - started,
            )
            history.append(metrics)
            logger.info(f"[{self.name}] epoch {epoch}/{cfg.epochs} total={metrics.total:.5f} "
                        f"mse={metrics.mse:.5f} pearson={metrics.pearson_term:.5f} "
                        f"grad_norm={metrics.grad_norm:.4f} ({metrics.wall_time:.1f}s)")

        result = TrainResult(net=net, history=history)
        if test is not None:
            result.test_loss = self.evaluate(net, test)
            history[-1].test_total = result.test_loss.total
            logger.info(f"[{self.name}] held-out loss {result.test_loss.total:.5f}, rho={np.round(result.test_loss.rho, 3).tolist()}")
        _stamp(net, cfg, train, result, created_by=self.name)
        return result


def _stamp(net: SpikingNetwork, cfg: TrainConfig, train: SequenceBatch, result: TrainResult, created_by: str) -> None:
    net.provenance = {
        "created_by": created_by,
        "train_config_hash": config_hash(cfg),
        "dataset_hash": train.dataset_hash,
        "parents": list(net.provenance.get("parents", [])),
        "extra": {"role": train.role, "shift": str(train.shift), "n_sequences": str(len(train))},
    }
    net.metrics = {"train_loss": result.final_loss}
    if result.test_loss is not None:
        net.metrics["test_loss"] = result.test_loss.total
        net.metrics["test_mse"] = result.test_loss.mse
        net.metrics["test_rho_mean"] = float(np.mean(result.test_loss.rho))


def _attach_normalization(net: SpikingNetwork, batch: SequenceBatch) -> None:
    net.input_mean = None if batch.input_mean is None else batch.input_mean.astype(net.dtype)
    net.input_std = None if batch.input_std is None else batch.input_std.astype(net.dtype)


def _check_role(batch: SequenceBatch, role: str) -> None:
    if batch.role != role:
        raise StructuralError(f"expected {role} sequences, got {batch.role}")


def train_estimator(train: SequenceBatch, test: Optional[SequenceBatch], cfg: TrainConfig) -> TrainResult:
    """
    训练姿态估计网络（仅 IMU 输入，不接收任何指令通道）

    Returns:
        TrainResult，网络默认宽度 150-150
    """
    _check_role(train, "estimator")
    if train.input_labels != IMU_COLUMNS:
        raise StructuralError(f"estimator inputs must be exactly the 6 IMU channels, got {train.input_labels}")
    net = init_network(cfg.widths, cfg.recurrent, train.input_labels, train.target_labels,
                       seed=cfg.init_seed, name="estimator")
    _attach_normalization(net, train)
    return SnnTrainer(cfg, name="estimator").fit(net, train, test)


@dataclass
class IntegratorBlock:
    """预训练的积分神经元：输入权重 (n, C_in) 与输出权重 (C_out, n)"""
    w_ff: np.ndarray
    w_decode: np.ndarray
    input_labels: List[str]
    input_mean: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(self.w_ff.shape[0])

    @classmethod
    def from_network(cls, net: SpikingNetwork) -> "IntegratorBlock":
        if len(net.layers) != 1 or not np.all(net.layers[0].frozen_mask):
            raise StructuralError("integrator block must be a single layer of frozen neurons")
        return cls(w_ff=net.layers[0].w_ff.copy(), w_decode=net.w_decode.copy(),
                   input_labels=list(net.input_labels), input_mean=net.input_mean)


def pretrain_integrators(
    train: SequenceBatch,
    test: Optional[SequenceBatch],
    cfg: TrainConfig,
    free: Optional[bool] = None,
) -> TrainResult:
    """
    积分神经元预训练

    固定版本：n 个积分神经元（泄漏 = 阈值 = 1），只训练输入 / 输出权重，
    解码输出经 readout_window 步指数平均。
    自由版本（对照组）：相同权重初始化，泄漏与阈值按常规初始化并参与训练。

    Args:
        train: integrator 角色序列（目标已减去窗口起点的积分值）
        free: 是否为自由参数对照组，None 时取 cfg.free_integrators
    """
    _check_role(train, "integrator")
    free = cfg.free_integrators if free is None else free
    n = cfg.n_integrators or cfg.widths[-1]
    widths = list(cfg.widths[:-1]) + [n]
    name = "integrator-free" if free else "integrator"
    net = init_network(widths, cfg.recurrent, train.input_labels, train.target_labels,
                       seed=cfg.init_seed, n_integrators=0 if free else n, name=name)
    net.readout_window = cfg.readout_window
    _attach_normalization(net, train)
    kinds = None if free else INTEGRATOR_KINDS
    return SnnTrainer(cfg, trainable_kinds=kinds, name=name).fit(net, train, test)


def compare_integrator_variants(
    train: SequenceBatch,
    test: Optional[SequenceBatch],
    cfg: TrainConfig,
) -> Dict[str, TrainResult]:
    """以相同种子与训练计划分别训练固定 / 自由参数积分块，返回两条损失曲线"""
    results = {
        "fixed": pretrain_integrators(train, test, cfg, free=False),
        "free": pretrain_integrators(train, test, cfg, free=True),
    }
    logger.info(f"Integrator comparison: fixed final={results['fixed'].final_loss:.5f}, "
                f"free final={results['free'].final_loss:.5f}")
    return results


def train_controller(
    train: SequenceBatch,
    test: Optional[SequenceBatch],
    cfg: TrainConfig,
    integrators: Optional[IntegratorBlock] = None,
) -> TrainResult:
    """
    训练控制网络

    输入为专家姿态估计 + 设定值，目标为时移 d 步的专家力矩；
    最后一层前 n_integrators 个神经元为积分神经元，若给出预训练块则用其权重初始化。
    """
    _check_role(train, "controller")
    if any(label in IMU_COLUMNS for label in train.input_labels):
        raise StructuralError("controller inputs must not contain raw IMU channels")
    n_int = cfg.n_integrators
    net = init_network(cfg.widths, cfg.recurrent, train.input_labels, train.target_labels,
                       seed=cfg.init_seed, n_integrators=n_int, name="controller")
    _attach_normalization(net, train)
    if integrators is not None:
        if len(cfg.widths) != 1:
            raise StructuralError("pretrained integrators can only be inserted into a single-layer controller")
        if integrators.n != n_int:
            raise StructuralError(f"integrator block has {integrators.n} neurons, config expects {n_int}")
        if integrators.input_labels != train.input_labels:
            raise StructuralError(f"integrator inputs {integrators.input_labels} differ from {train.input_labels}")
        if integrators.input_mean is not None and net.input_mean is not None and \
                not np.allclose(integrators.input_mean, net.input_mean):
            logger.warning("Integrator block was pretrained with different normalization stats")
        layer = net.layers[0]
        layer.w_ff[:n_int] = integrators.w_ff.astype(net.dtype)
        net.w_decode[:, :n_int] = integrators.w_decode.astype(net.dtype)
        net.provenance["parents"] = ["integrator"]
    if train.shift != cfg.target_time_shift:
        logger.warning(f"Controller sequences use shift {train.shift}, config says {cfg.target_time_shift}")
    return SnnTrainer(cfg, name="controller").fit(net, train, test)


def write_config_echo(cfg: TrainConfig, path: Union[str, Path]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8")

