"""
配置、运行目录、命令行与端到端流水线测试
"""
import json
from pathlib import Path

import numpy as np
import pytest

from app.core.config import PipelineConfig, load_pipeline_config
from app.core.exceptions import ConfigError, DataError, InvariantRejection
from app.pipeline.rundir import RunDirectory
from app.pipeline.service import PipelineService, seed_overrides
from main import main

# 桌面规模之外的最小配置：2s 回合、窄网络、单轮训练
TINY_OVERRIDES = [
    "sim.episode_seconds=2",
    "dataset.minutes=0.1",
    "dataset.seq_len=200",
    "training.estimator.widths=[8,6]",
    "training.estimator.epochs=1",
    "training.estimator.seq_len=200",
    "training.estimator.batch_size=4",
    "training.integrator.widths=[3]",
    "training.integrator.n_integrators=3",
    "training.integrator.readout_window=10",
    "training.integrator.epochs=1",
    "training.integrator.seq_len=200",
    "training.controller.widths=[5]",
    "training.controller.n_integrators=3",
    "training.controller.epochs=1",
    "training.controller.seq_len=200",
    "compose.target_widths=[8,5,4]",
    "compose.max_mse_ratio=1000",
    "eval.n_runs=2",
    "eval.shift_range=5",
    "eval.bench_steps=50",
]


def test_default_config_file_matches_models():
    path = Path(__file__).resolve().parent.parent / "configs" / "default.json"
    assert load_pipeline_config(str(path)) == PipelineConfig()


def test_overrides_are_parsed_as_json():
    cfg = load_pipeline_config(None, ["sim.seed=7", "compose.target_widths=[10,5,3]", "eval.scripts=[\"hover\"]"])
    assert cfg.sim.seed == 7
    assert cfg.compose.target_widths == [10, 5, 3]
    assert cfg.eval.scripts == ["hover"]


def test_unknown_key_names_the_key():
    with pytest.raises(ConfigError) as exc:
        load_pipeline_config(None, ["training.estimator.widht=[3]"])
    assert exc.value.key == "training.estimator.widht"


def test_invalid_values_are_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_pipeline_config(None, ["training.controller.target_time_shift=5000"])
    with pytest.raises(ConfigError):
        load_pipeline_config(None, ["sim.rate_hz=1000"])
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_pipeline_config(str(tmp_path / "bad.json"))
    with pytest.raises(ConfigError):
        load_pipeline_config(str(tmp_path / "missing.json"))


def test_seed_overrides():
    cfg = load_pipeline_config(None, seed_overrides(3))
    assert cfg.sim.seed == 3
    assert cfg.dataset.split_seed == 3
    assert cfg.eval.seed == 4
    assert cfg.training.controller.init_seed == 3


def test_run_directory_detects_modified_files(tmp_path):
    run = RunDirectory(tmp_path / "run").init()
    artifact = run.reports / "a.json"
    artifact.write_text("{}")
    run.record(artifact, "report")
    run.save("test")

    reopened = RunDirectory(tmp_path / "run")
    assert reopened.verify() == []
    assert reopened.manifest.artifacts["reports/a.json"].kind == "report"
    artifact.write_text('{"x": 1}')
    assert reopened.verify() == ["modified: reports/a.json"]
    artifact.unlink()
    assert reopened.verify() == ["missing: reports/a.json"]


def test_cli_exit_codes(tmp_path):
    assert main(["--run-dir", str(tmp_path / "run"), "--set", "sim.bogus=1", "verify"]) == 2
    assert main(["--run-dir", str(tmp_path / "run"), "verify"]) == 0
    assert main(["--run-dir", str(tmp_path / "run"), "train-est"]) == 3


def test_snn_round_requires_a_merged_checkpoint(tmp_path):
    service = PipelineService(load_pipeline_config(None, TINY_OVERRIDES), RunDirectory(tmp_path / "run"))
    with pytest.raises(DataError):
        service.gen_data(rounds=["snn"])
    with pytest.raises(ConfigError):
        service.gen_data(rounds=["bogus"])


def test_end_to_end_pipeline(tmp_path):
    """gen-data -> train -> merge -> prune -> eval -> export -> bench -> verify"""
    service = PipelineService(load_pipeline_config(None, TINY_OVERRIDES), RunDirectory(tmp_path / "run"))
    run = service.run

    assert service.gen_data(rounds=["expert"]) == {"expert": 3}
    rounds = json.loads((run.stats / "rounds.json").read_text())
    assert len(rounds["expert"]) == 3

    est = service.train_est()
    assert est.net.widths == [8, 6]
    assert np.isfinite(est.final_loss)
    assert set(service.train_integrator(compare=True)) == {"fixed", "free"}
    assert (run.reports / "integrator_variants.csv").exists()
    ctl = service.train_ctl()
    assert ctl.net.layers[0].frozen_mask[:3].all()

    merged = service.merge()
    assert merged.widths == [8, 6, 5]
    pruned = service.prune()
    assert pruned.widths == [8, 5, 4]
    assert json.loads((run.reports / "prune.json").read_text())["widths_after"] == [8, 5, 4]

    reports = service.eval()
    assert "open_loop" in reports
    assert (run.reports / "corr_vs_shift.csv").exists()
    assert (run.reports / "summary_step" / "ablation.csv").exists()
    assert not reports["expert_step"].void

    blob = service.export()
    assert blob.suffix == ".snnx"
    imported = service.import_blob(str(blob))
    assert imported.widths == pruned.widths
    service.bench(str(blob))
    assert json.loads((run.reports / "bench.json").read_text())["n_steps"] == 50

    assert service.verify() == []
    (run.checkpoints / "pruned.json").write_text("{}")
    with pytest.raises(InvariantRejection):
        service.verify()


def _deterministic_hashes(root):
    service = PipelineService(load_pipeline_config(None, TINY_OVERRIDES), RunDirectory(root))
    service.gen_data(rounds=["expert"])
    service.train_est()
    service.train_integrator()
    service.train_ctl()
    service.merge()
    service.prune()
    service.export()
    return {path: entry.sha256 for path, entry in service.run.manifest.artifacts.items() if entry.deterministic}


def test_same_seed_gives_identical_artifacts(tmp_path):
    first = _deterministic_hashes(tmp_path / "a")
    second = _deterministic_hashes(tmp_path / "b")
    assert any(path.startswith("checkpoints/") for path in first)
    assert any(path.startswith("export/") for path in first)
    assert first == second


def test_parallel_generation_matches_serial(tmp_path):
    hashes = []
    for threads in (1, 2):
        service = PipelineService(load_pipeline_config(None, TINY_OVERRIDES), RunDirectory(tmp_path / f"t{threads}"),
                                  threads=threads)
        service.gen_data(rounds=["expert"])
        hashes.append({path: entry.sha256 for path, entry in service.run.manifest.artifacts.items()
                       if entry.kind in ("episode", "stats")})
    assert len(hashes[0]) > 3
    assert hashes[0] == hashes[1]
