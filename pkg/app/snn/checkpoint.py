# app/snn/checkpoint.py
"""
检查点读写
JSON 文档结构见 app.schemas.checkpoint；内容哈希为文件字节的 sha256
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError

from app.core.exceptions import DataError
from app.schemas.checkpoint import CheckpointDocument, LayerDoc, MatrixDoc, ProvenanceDoc
from app.snn.core import LayerParams, SpikingNetwork

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _matrix_doc(arr: Optional[np.ndarray]) -> Optional[MatrixDoc]:
    if arr is None:
        return None
    return MatrixDoc(shape=list(arr.shape), data=arr.ravel(order="C").tolist())


def _matrix(doc: Optional[MatrixDoc], dtype) -> Optional[np.ndarray]:
    if doc is None:
        return None
    return np.asarray(doc.data, dtype=dtype).reshape(doc.shape)


def _vector(values, dtype) -> Optional[np.ndarray]:
    return None if values is None else np.asarray(values, dtype=dtype)


def network_to_document(net: SpikingNetwork) -> CheckpointDocument:
    """网络 -> 检查点文档"""
    layers = [
        LayerDoc(
            n_in=layer.n_in,
            n_hidden=layer.n_hidden,
            recurrent=layer.recurrent,
            tau_mem=layer.tau_mem.tolist(),
            tau_syn=layer.tau_syn.tolist(),
            theta=layer.theta.tolist(),
            frozen_mask=[bool(f) for f in layer.frozen_mask],
            w_ff=_matrix_doc(layer.w_ff),
            w_rec=_matrix_doc(layer.w_rec),
            w_skip=_matrix_doc(layer.w_skip),
            i_bias=None if layer.i_bias is None else layer.i_bias.tolist(),
        )
        for layer in net.layers
    ]
    prov = dict(net.provenance)
    prov.setdefault("created_by", "unknown")
    return CheckpointDocument(
        name=net.name,
        dtype=str(np.dtype(net.dtype)),
        input_labels=list(net.input_labels),
        output_labels=list(net.output_labels),
        input_mean=None if net.input_mean is None else net.input_mean.tolist(),
        input_std=None if net.input_std is None else net.input_std.tolist(),
        readout_window=net.readout_window,
        layers=layers,
        w_decode=_matrix_doc(net.w_decode),
        provenance=ProvenanceDoc(**prov),
        metrics={k: float(v) for k, v in net.metrics.items()},
    )


def network_from_document(doc: CheckpointDocument) -> SpikingNetwork:
    """检查点文档 -> 网络（并校验维度链）"""
    dtype = np.dtype(doc.dtype)
    layers = [
        LayerParams(
            tau_mem=_vector(ld.tau_mem, dtype),
            tau_syn=_vector(ld.tau_syn, dtype),
            theta=_vector(ld.theta, dtype),
            w_ff=_matrix(ld.w_ff, dtype),
            w_rec=_matrix(ld.w_rec, dtype),
            frozen_mask=np.asarray(ld.frozen_mask, dtype=bool),
            w_skip=_matrix(ld.w_skip, dtype),
            i_bias=_vector(ld.i_bias, dtype),
        )
        for ld in doc.layers
    ]
    net = SpikingNetwork(
        layers=layers,
        w_decode=_matrix(doc.w_decode, dtype),
        input_labels=list(doc.input_labels),
        output_labels=list(doc.output_labels),
        name=doc.name,
        input_mean=_vector(doc.input_mean, dtype),
        input_std=_vector(doc.input_std, dtype),
        readout_window=doc.readout_window,
        provenance=doc.provenance.model_dump(),
        metrics=dict(doc.metrics),
    )
    net.validate()
    return net


def dumps_checkpoint(net: SpikingNetwork) -> str:
    """稳定的 JSON 文本（键排序），相同网络得到相同字节"""
    doc = network_to_document(net)
    return json.dumps(doc.model_dump(mode="json"), sort_keys=True, indent=1)


def save_checkpoint(net: SpikingNetwork, path: PathLike) -> str:
    """
    保存检查点

    Args:
        net: 网络
        path: 输出路径

    Returns:
        文件内容的 sha256
    """
    net.validate()
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    data = dumps_checkpoint(net).encode("utf-8")
    p.write_bytes(data)
    digest = hashlib.sha256(data).hexdigest()
    logger.info(f"Saved checkpoint '{net.name}' ({'-'.join(map(str, net.widths))}) to {p} sha256={digest[:12]}")
    return digest


def load_checkpoint(path: PathLike) -> SpikingNetwork:
    """
    读取检查点

    Raises:
        DataError: 文件不存在或格式非法
    """
    p = Path(path)
    if not p.exists():
        raise DataError("Checkpoint not found", path=str(p))
    try:
        doc = CheckpointDocument.model_validate_json(p.read_bytes())
    except ValidationError as e:
        raise DataError(f"Invalid checkpoint document: {e.errors()[0]['msg']}", path=str(p)) from e
    return network_from_document(doc)


def checkpoint_hash(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def network_hash(net: SpikingNetwork) -> str:
    """内存中网络的内容哈希（与保存后的文件哈希一致）"""
    return hashlib.sha256(dumps_checkpoint(net).encode("utf-8")).hexdigest()
