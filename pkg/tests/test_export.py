"""
检查点与 SNNX 导出文件测试
"""
import numpy as np
import pytest

from app.compose.merge import build_merge_plan, merge
from app.core.exceptions import DataError
from app.export.bench import bench_inference
from app.export.blob import decode_blob, encode_blob, export_network, import_network
from app.sim.models import ESTIMATE_COLUMNS, EXPERT_TORQUE_COLUMNS, IMU_COLUMNS, SETPOINT_COLUMNS
from app.snn.checkpoint import dumps_checkpoint, load_checkpoint, network_hash, save_checkpoint
from app.snn.core import run_sequence
from app.snn.training import init_network


@pytest.fixture
def merged():
    est = init_network([6, 5], [False, True], IMU_COLUMNS, ESTIMATE_COLUMNS, seed=1, name="estimator")
    ctl = init_network([4], [True], ESTIMATE_COLUMNS + SETPOINT_COLUMNS, EXPERT_TORQUE_COLUMNS,
                       seed=2, n_integrators=2, name="controller")
    for net in (est, ctl):
        net.input_mean = np.linspace(-0.5, 0.5, net.n_inputs).astype(np.float32)
        net.input_std = np.linspace(0.5, 1.5, net.n_inputs).astype(np.float32)
    return merge(build_merge_plan(est, ctl))


def test_checkpoint_round_trip(merged, tmp_path):
    digest = save_checkpoint(merged, tmp_path / "merged.json")
    loaded = load_checkpoint(tmp_path / "merged.json")
    assert digest == network_hash(merged)
    assert dumps_checkpoint(loaded) == dumps_checkpoint(merged)
    assert loaded.provenance["created_by"] == "merge"
    inputs = np.random.default_rng(0).standard_normal((2, 40, merged.n_inputs))
    np.testing.assert_array_equal(run_sequence(loaded, inputs).outputs, run_sequence(merged, inputs).outputs)


def test_invalid_checkpoint(tmp_path):
    (tmp_path / "bad.json").write_text('{"format": "snn-checkpoint"}')
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "bad.json")
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "missing.json")


def test_blob_round_trip_is_byte_identical(merged):
    data = encode_blob(merged, source_hash="abc123")
    blob = decode_blob(data)
    assert data[:4] == b"SNNX"
    assert blob.source_hash == "abc123"
    assert encode_blob(blob.network, "abc123") == data
    assert blob.network.input_labels == merged.input_labels
    assert blob.network.widths == merged.widths


def test_imported_network_reproduces_outputs(merged, tmp_path):
    export_network(merged, tmp_path / "merged.snnx", "abc123")
    imported = import_network(tmp_path / "merged.snnx").network
    raw = np.random.default_rng(1).normal(0, 2.0, (300, merged.n_inputs))
    np.testing.assert_array_equal(
        run_sequence(imported, imported.normalize_input(raw)).outputs,
        run_sequence(merged, merged.normalize_input(raw)).outputs,
    )
    assert imported.provenance["created_by"] == "import"


def test_corrupted_blobs_are_rejected(merged):
    data = encode_blob(merged)
    with pytest.raises(DataError):
        decode_blob(b"XXXX" + data[4:])
    with pytest.raises(DataError):
        decode_blob(data[:-3])
    with pytest.raises(DataError):
        decode_blob(data + b"\x00")
    with pytest.raises(DataError):
        decode_blob(data[:4] + (99).to_bytes(2, "little") + data[6:])


def test_bench_report(merged):
    report = bench_inference(merged, n_steps=200)
    assert report.n_steps == 200
    assert report.widths == merged.widths
    assert 0 < report.p50_us <= report.p99_us
    assert 0.0 <= report.measured_sparsity <= 1.0
    assert report.ops_at_sparsity <= report.ops_dense
