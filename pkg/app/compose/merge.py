# app/compose/merge.py
"""
子网络合并

估计网络的解码矩阵 W_o 与控制网络输入矩阵 W_i 中姿态部分相乘，得到一个
从估计层脉冲直接到控制层电流的权重块；设定值通道以浮点直通方式接入控制层。
合并网络的输入为 IMU(6) + 设定值(3)，估计层只接收 IMU（指令列为精确的 0）。

控制网络按自身的统计量归一化姿态估计：
    W_i * (W_o s - mu) / sigma = (W_i / sigma) W_o s - W_i (mu / sigma)
后一项为常值，记为控制层的偏置电流 i_bias。
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from app.core.exceptions import MergeError
from app.snn.checkpoint import network_hash
from app.snn.core import LayerParams, SpikingNetwork, network_step, reset_states

logger = logging.getLogger(__name__)


@dataclass
class MergePlan:
    """
    合并计划

    attitude: 控制网络输入标签 -> 估计网络输出标签
    commands: 以直通方式接入的控制网络输入标签（设定值）
    """
    estimator: SpikingNetwork
    controller: SpikingNetwork
    attitude: Dict[str, str]
    commands: List[str]

    def validate(self) -> None:
        covered = list(self.attitude) + list(self.commands)
        if sorted(covered) != sorted(self.controller.input_labels) or len(set(covered)) != len(covered):
            raise MergeError(
                f"controller inputs {self.controller.input_labels} must be covered exactly once by "
                f"attitude {list(self.attitude)} + commands {self.commands}")
        for src in self.attitude.values():
            if src not in self.estimator.output_labels:
                raise MergeError(f"estimator has no output '{src}' (outputs: {self.estimator.output_labels})")
        clash = set(self.commands) & set(self.estimator.input_labels)
        if clash:
            raise MergeError(f"command channels {sorted(clash)} collide with estimator inputs")


def build_merge_plan(estimator: SpikingNetwork, controller: SpikingNetwork) -> MergePlan:
    """控制网络中与估计网络输出同名的通道接估计网络，其余通道作为指令直通"""
    attitude = {lab: lab for lab in controller.input_labels if lab in estimator.output_labels}
    commands = [lab for lab in controller.input_labels if lab not in attitude]
    plan = MergePlan(estimator, controller, attitude, commands)
    plan.validate()
    return plan


def _norm(net: SpikingNetwork) -> Tuple[np.ndarray, np.ndarray]:
    if net.input_mean is None:
        return np.zeros(net.n_inputs), np.ones(net.n_inputs)
    return net.input_mean.astype(np.float64), net.input_std.astype(np.float64)


def merge(plan: MergePlan) -> SpikingNetwork:
    """
    合并估计网络与控制网络

    Args:
        plan: 合并计划

    Returns:
        单个多层网络：估计层 + 控制层，解码矩阵来自控制网络

    Raises:
        MergeError: 维度或通道不匹配
    """
    plan.validate()
    est, ctl = plan.estimator, plan.controller
    if est.readout_window:
        raise MergeError("estimator output is smoothed; only plain linear readouts can be merged")
    first = ctl.layers[0]
    if first.w_skip is not None or first.i_bias is not None:
        raise MergeError("controller's first layer is already merged")
    dtype = np.result_type(est.dtype, ctl.dtype)

    cmd_idx = [ctl.input_labels.index(lab) for lab in plan.commands]
    att_idx = [ctl.input_labels.index(lab) for lab in plan.attitude]
    src_idx = [est.output_labels.index(plan.attitude[lab]) for lab in plan.attitude]
    input_labels = list(est.input_labels) + list(plan.commands)
    n_est_in = est.n_inputs

    mu_e, sd_e = _norm(est)
    mu_c, sd_c = _norm(ctl)

    layers: List[LayerParams] = []
    for k, layer in enumerate(est.layers):
        merged = layer.copy().astype(dtype)
        if k == 0:
            # [E, 0]：指令通道不接入估计层
            w = np.zeros((layer.n_hidden, len(input_labels)), dtype=dtype)
            w[:, :n_est_in] = layer.w_ff
            merged.w_ff = w
        layers.append(merged)

    w_i = first.w_ff.astype(np.float64)
    w_att = w_i[:, att_idx] / sd_c[att_idx]
    w_o = est.w_decode.astype(np.float64)[src_idx]
    if w_att.shape[1] != w_o.shape[0]:
        raise MergeError(f"W_i attitude block {w_att.shape} does not match W_o {w_o.shape}")
    ctl_first = first.copy().astype(dtype)
    ctl_first.w_ff = (w_att @ w_o).astype(dtype)
    ctl_first.i_bias = (-(w_i[:, att_idx] @ (mu_c[att_idx] / sd_c[att_idx]))).astype(dtype)
    skip = np.zeros((first.n_hidden, len(input_labels)))
    skip[:, n_est_in:] = w_i[:, cmd_idx]
    ctl_first.w_skip = skip.astype(dtype)
    layers.append(ctl_first)
    layers.extend(layer.copy().astype(dtype) for layer in ctl.layers[1:])

    net = SpikingNetwork(
        layers=layers,
        w_decode=ctl.w_decode.astype(dtype).copy(),
        input_labels=input_labels,
        output_labels=list(ctl.output_labels),
        name="merged",
        input_mean=np.concatenate((mu_e, mu_c[cmd_idx])).astype(dtype),
        input_std=np.concatenate((sd_e, sd_c[cmd_idx])).astype(dtype),
        provenance={
            "created_by": "merge",
            "parents": [network_hash(est), network_hash(ctl)],
            "extra": {"estimator_widths": "-".join(map(str, est.widths)),
                      "controller_widths": "-".join(map(str, ctl.widths))},
        },
    )
    net.validate()
    logger.info(f"Merged estimator {est.widths} + controller {ctl.widths} -> {net.widths}")
    return net


def pipeline_outputs(plan: MergePlan, raw_inputs: np.ndarray) -> np.ndarray:
    """
    两个网络串联逐步运行：估计网络解码为浮点，再按控制网络的统计量归一化后输入

    Args:
        plan: 合并计划
        raw_inputs: (T, C) 未归一化输入，列顺序与合并网络的 input_labels 一致

    Returns:
        (T, C_out) 控制网络输出
    """
    est, ctl = plan.estimator, plan.controller
    n_est_in = est.n_inputs
    est_states = reset_states(est)
    ctl_states = reset_states(ctl)
    outputs = np.zeros((raw_inputs.shape[0], ctl.n_outputs), dtype=ctl.dtype)
    for t, row in enumerate(np.asarray(raw_inputs)):
        est_states, attitude, _ = network_step(est, est_states, est.normalize_input(row[:n_est_in]))
        ctl_raw = np.zeros(ctl.n_inputs)
        for lab, src in plan.attitude.items():
            ctl_raw[ctl.input_labels.index(lab)] = attitude[est.output_labels.index(src)]
        for j, lab in enumerate(plan.commands):
            ctl_raw[ctl.input_labels.index(lab)] = row[n_est_in + j]
        ctl_states, outputs[t], _ = network_step(ctl, ctl_states, ctl.normalize_input(ctl_raw))
    return outputs


def command_block_is_zero(net: SpikingNetwork, n_estimator_inputs: int) -> bool:
    """估计层（控制层之前的所有层）不接收任何指令输入"""
    first_skip = next((k for k, layer in enumerate(net.layers) if layer.w_skip is not None), len(net.layers))
    if first_skip == 0:
        return False
    return not np.any(net.layers[0].w_ff[:, n_estimator_inputs:])
