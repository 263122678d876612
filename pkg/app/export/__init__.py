from app.export.blob import ExportBlob, decode_blob, encode_blob, export_network, import_network
from app.export.bench import bench_inference

__all__ = ["ExportBlob", "decode_blob", "encode_blob", "export_network", "import_network", "bench_inference"]
