# app/export/blob.py
"""
嵌入式部署导出格式（SNNX）

小端序扁平二进制，供单片机端移植直接读取：
    magic "SNNX" | u16 版本 | u16 标志 | u32 层数 | u32 输入数 | u32 输出数 | i32 读出窗口(-1 无)
    网络名、输入标签、输出标签（u16 长度 + UTF-8）
    [标志位 0] 输入均值、标准差 f32[n_in]
    每层：u32 宽度 | u32 输入数 | u8 层标志(递归/直通/偏置)
          tau_mem, tau_syn, theta f32[n] | frozen u8[n]
          w_ff f32[n, n_in] 行优先 | [w_rec f32[n, n]] | [w_skip f32[n, 网络输入数]] | [i_bias f32[n]]
    w_decode f32[n_out, n_last]
    源检查点哈希（u16 长度 + ASCII）

所有浮点量以 float32 存储；float32 网络导出再导入与原网络逐位一致。
"""
import hashlib
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from app.core.exceptions import DataError
from app.snn.core import LayerParams, SpikingNetwork

logger = logging.getLogger(__name__)

MAGIC = b"SNNX"
FORMAT_VERSION = 1

_HAS_NORM = 0x1
_LAYER_REC = 0x1
_LAYER_SKIP = 0x2
_LAYER_BIAS = 0x4

_F32 = np.dtype("<f4")


@dataclass
class ExportBlob:
    """解码后的导出文件"""
    network: SpikingNetwork
    source_hash: str
    version: int = FORMAT_VERSION


class _Writer:
    def __init__(self):
        self.parts: List[bytes] = []

    def pack(self, fmt: str, *values) -> None:
        self.parts.append(struct.pack("<" + fmt, *values))

    def text(self, value: str) -> None:
        raw = value.encode("utf-8")
        self.pack("H", len(raw))
        self.parts.append(raw)

    def floats(self, arr: np.ndarray) -> None:
        self.parts.append(np.ascontiguousarray(arr, dtype=_F32).tobytes(order="C"))

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError(f"Truncated export blob at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        return struct.unpack(fmt, self._take(struct.calcsize(fmt)))

    def text(self) -> str:
        (n,) = self.unpack("H")
        return self._take(n).decode("utf-8")

    def floats(self, *shape: int) -> np.ndarray:
        count = int(np.prod(shape))
        arr = np.frombuffer(self._take(count * _F32.itemsize), dtype=_F32)
        return arr.astype(np.float32).reshape(shape)

    def mask(self, n: int) -> np.ndarray:
        return np.frombuffer(self._take(n), dtype=np.uint8).astype(bool)


def encode_blob(net: SpikingNetwork, source_hash: str = "") -> bytes:
    """
    编码网络为 SNNX 字节串

    Args:
        net: 网络（非 float32 网络会被转换为 float32）
        source_hash: 源检查点 sha256

    Returns:
        字节串
    """
    net.validate()
    if net.dtype != np.float32:
        logger.warning(f"Exporting {net.dtype} network as float32; outputs will differ from the source")
    w = _Writer()
    flags = _HAS_NORM if net.input_mean is not None else 0
    w.parts.append(MAGIC)
    w.pack("HHIIIi", FORMAT_VERSION, flags, len(net.layers), net.n_inputs, net.n_outputs,
           -1 if net.readout_window is None else int(net.readout_window))
    w.text(net.name)
    for label in net.input_labels + net.output_labels:
        w.text(label)
    if flags & _HAS_NORM:
        w.floats(net.input_mean)
        w.floats(net.input_std)
    for layer in net.layers:
        lflags = ((_LAYER_REC if layer.w_rec is not None else 0)
                  | (_LAYER_SKIP if layer.w_skip is not None else 0)
                  | (_LAYER_BIAS if layer.i_bias is not None else 0))
        w.pack("IIB", layer.n_hidden, layer.n_in, lflags)
        w.floats(layer.tau_mem)
        w.floats(layer.tau_syn)
        w.floats(layer.theta)
        w.parts.append(layer.frozen_mask.astype(np.uint8).tobytes())
        w.floats(layer.w_ff)
        if layer.w_rec is not None:
            w.floats(layer.w_rec)
        if layer.w_skip is not None:
            w.floats(layer.w_skip)
        if layer.i_bias is not None:
            w.floats(layer.i_bias)
    w.floats(net.w_decode)
    w.text(source_hash)
    return w.getvalue()


def decode_blob(data: bytes) -> ExportBlob:
    """
    解码 SNNX 字节串

    Raises:
        DataError: 魔数、版本不符或数据截断
    """
    r = _Reader(data)
    if r._take(4) != MAGIC:
        raise DataError("Not an SNNX export blob (bad magic)")
    version, flags, n_layers, n_inputs, n_outputs, window = r.unpack("HHIIIi")
    if version != FORMAT_VERSION:
        raise DataError(f"Unsupported SNNX version {version}, expected {FORMAT_VERSION}")
    name = r.text()
    input_labels = [r.text() for _ in range(n_inputs)]
    output_labels = [r.text() for _ in range(n_outputs)]
    mean = std = None
    if flags & _HAS_NORM:
        mean = r.floats(n_inputs)
        std = r.floats(n_inputs)
    layers: List[LayerParams] = []
    for _ in range(n_layers):
        n, n_in, lflags = r.unpack("IIB")
        tau_mem, tau_syn, theta = r.floats(n), r.floats(n), r.floats(n)
        frozen = r.mask(n)
        w_ff = r.floats(n, n_in)
        w_rec = r.floats(n, n) if lflags & _LAYER_REC else None
        w_skip = r.floats(n, n_inputs) if lflags & _LAYER_SKIP else None
        i_bias = r.floats(n) if lflags & _LAYER_BIAS else None
        layers.append(LayerParams(tau_mem=tau_mem, tau_syn=tau_syn, theta=theta, w_ff=w_ff, w_rec=w_rec,
                                  frozen_mask=frozen, w_skip=w_skip, i_bias=i_bias))
    w_decode = r.floats(n_outputs, layers[-1].n_hidden if layers else 0)
    source_hash = r.text()
    if r.pos != len(data):
        raise DataError(f"Trailing {len(data) - r.pos} bytes after SNNX payload")
    net = SpikingNetwork(
        layers=layers, w_decode=w_decode, input_labels=input_labels, output_labels=output_labels,
        name=name, input_mean=mean, input_std=std, readout_window=None if window < 0 else window,
        provenance={"created_by": "import", "parents": [source_hash] if source_hash else []},
    )
    try:
        net.validate()
    except Exception as e:
        raise DataError(f"Export blob describes an inconsistent network: {e}") from e
    return ExportBlob(network=net, source_hash=source_hash, version=version)


def export_network(net: SpikingNetwork, path: Union[str, Path], source_hash: Optional[str] = None) -> str:
    """
    写出导出文件

    Returns:
        文件 sha256
    """
    data = encode_blob(net, source_hash or "")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    digest = hashlib.sha256(data).hexdigest()
    logger.info(f"📦 Exported {net.name} {net.widths} to {path} ({len(data)} bytes)")
    return digest


def import_network(path: Union[str, Path]) -> ExportBlob:
    """读取导出文件"""
    path = Path(path)
    if not path.exists():
        raise DataError("Export blob not found", path=str(path))
    try:
        return decode_blob(path.read_bytes())
    except DataError as e:
        raise DataError(str(e), path=str(path)) from e
