# app/schemas/checkpoint.py
"""
检查点 JSON 文档 Schema
权重按行优先展开存储，并显式记录形状
"""
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

CHECKPOINT_FORMAT = "snn-checkpoint"
CHECKPOINT_VERSION = 1


class MatrixDoc(BaseModel):
    """行优先矩阵"""
    shape: List[int] = Field(..., min_length=2, max_length=2)
    data: List[float]

    @model_validator(mode="after")
    def _size(self):
        if self.shape[0] * self.shape[1] != len(self.data):
            raise ValueError(f"matrix data length {len(self.data)} does not match shape {self.shape}")
        return self


class LayerDoc(BaseModel):
    """单层 CUBA-LIF 参数"""
    n_in: int
    n_hidden: int
    recurrent: bool
    tau_mem: List[float]
    tau_syn: List[float]
    theta: List[float]
    frozen_mask: List[bool]
    w_ff: MatrixDoc
    w_rec: Optional[MatrixDoc] = None
    w_skip: Optional[MatrixDoc] = None
    i_bias: Optional[List[float]] = None


class ProvenanceDoc(BaseModel):
    """溯源信息"""
    created_by: str = Field(..., description="产生该检查点的流水线步骤")
    train_config_hash: Optional[str] = None
    dataset_hash: Optional[str] = None
    parents: List[str] = []
    extra: Dict[str, str] = {}


class CheckpointDocument(BaseModel):
    """版本化的网络检查点"""
    format: Literal["snn-checkpoint"] = CHECKPOINT_FORMAT
    version: int = CHECKPOINT_VERSION
    name: str
    dtype: Literal["float32", "float64"] = "float32"
    input_labels: List[str]
    output_labels: List[str]
    input_mean: Optional[List[float]] = None
    input_std: Optional[List[float]] = None
    readout_window: Optional[int] = None
    layers: List[LayerDoc]
    w_decode: MatrixDoc
    provenance: ProvenanceDoc
    metrics: Dict[str, float] = {}
