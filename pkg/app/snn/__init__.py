"""
脉冲神经网络模块
CUBA-LIF 前向动力学、BPTT 训练与检查点
"""
from app.snn.core import LayerParams, LayerState, SpikingNetwork, layer_step, network_step, reset_states, run_sequence
from app.snn.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "LayerParams",
    "LayerState",
    "SpikingNetwork",
    "layer_step",
    "network_step",
    "reset_states",
    "run_sequence",
    "load_checkpoint",
    "save_checkpoint",
]
