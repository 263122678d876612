# app/pipeline/service.py
"""
流水线服务层
每个子命令对应一个方法：读取运行目录中的上游产物，调用对应模块，写出产物并登记到清单
"""
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from app.compose.merge import build_merge_plan, merge
from app.compose.prune import format_prune_report, score_and_prune
from app.core.config import PipelineConfig, TrainConfig, dump_pipeline_config
from app.core.exceptions import ConfigError, DataError, InvariantRejection
from app.dataset.loader import EpisodeLoader, load_corpus_manifest, save_corpus_manifest
from app.dataset.norm import NormStats
from app.dataset.rounds import ROUND_RECIPES, aggregate_rounds
from app.dataset.sequences import SequenceBatch, make_sequences, split_episodes
from app.eval.correlation import write_correlation_csv
from app.eval.report import open_loop_report, write_ablation, write_report
from app.eval.step_response import StepResponseTrace, step_response_suite, write_step_response_csv
from app.export.bench import bench_inference
from app.export.blob import export_network, import_network
from app.pipeline.rundir import RunDirectory
from app.schemas.reports import EvalReport
from app.sim.batch import generate_round
from app.sim.episode import episode_paths
from app.sim.models import ESTIMATE_COLUMNS, IMU_COLUMNS, SETPOINT_COLUMNS
from app.snn.checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from app.snn.core import SpikingNetwork
from app.snn.training import (
    IntegratorBlock,
    TrainResult,
    compare_integrator_variants,
    pretrain_integrators,
    train_controller,
    train_estimator,
    write_config_echo,
)

logger = logging.getLogger(__name__)

NORM_LABELS = IMU_COLUMNS + ESTIMATE_COLUMNS + SETPOINT_COLUMNS
NORM_STATS_FILE = "norm.json"
# 各轮次的回合序号区间互不相交
ROUND_INDEX_STRIDE = 100000


class PipelineService:
    """
    流水线服务类

    职责：
    1. 管理运行目录中的上游 / 下游产物
    2. 把子命令委托给 sim / dataset / snn / compose / eval / export 模块
    3. 每个产物写出后登记 sha256
    """

    def __init__(self, config: PipelineConfig, run_dir: RunDirectory, threads: int = 1):
        """
        Args:
            config: 流水线配置
            run_dir: 运行目录
            threads: 回合生成 / 闭环评估的并行进程数。训练不使用该参数：
                每个小批的梯度在单进程内按固定顺序计算，结果与 threads 无关
        """
        self.config = config
        self.run = run_dir.init()
        self.threads = max(1, int(threads))
        self._loader: Optional[EpisodeLoader] = None

    # ------------------------------------------------------------------ helpers

    @property
    def loader(self) -> EpisodeLoader:
        if self._loader is None:
            self._loader = EpisodeLoader(self.run.root)
        return self._loader

    def _finish(self, command: str) -> None:
        config_path = self.run.root / "config.json"
        config_path.write_text(dump_pipeline_config(self.config), encoding="utf-8")
        self.run.record(config_path, "config")
        self.run.save(command)
        logger.info(f"✅ {command} finished, manifest: {self.run.manifest_path}")

    def checkpoint_path(self, name: str) -> Path:
        """检查点名称（如 estimator / pruned）或显式路径"""
        if name.endswith(".json") or "/" in name:
            return Path(name)
        return self.run.checkpoints / f"{name}.json"

    def _load(self, name: str) -> SpikingNetwork:
        return load_checkpoint(self.checkpoint_path(name))

    def _save_network(self, net: SpikingNetwork, name: str) -> Path:
        path = self.checkpoint_path(name)
        save_checkpoint(net, path)
        self.run.record(path, "checkpoint")
        return path

    def _save_training(self, result: TrainResult, name: str, cfg: TrainConfig) -> Path:
        path = self._save_network(result.net, name)
        metrics = self.run.reports / f"{name}.metrics.csv"
        result.write_metrics(metrics)
        # 含墙钟时间，不参与逐字节比较
        self.run.record(metrics, "log", deterministic=False)
        echo = self.run.reports / f"{name}.config_echo.json"
        write_config_echo(cfg, echo)
        self.run.record(echo, "config")
        return path

    def _stats(self) -> NormStats:
        return NormStats.load(self.run.stats / NORM_STATS_FILE)

    def _split(self, rounds: Optional[Sequence[str]] = None):
        episodes = self.loader.load_round(rounds)
        ds = self.config.dataset
        return split_episodes(episodes, ds.test_fraction, ds.split_seed)

    def sequences(
        self,
        role: str,
        shift: int,
        seq_len: int,
        rounds: Optional[Sequence[str]] = None,
    ) -> Tuple[SequenceBatch, Optional[SequenceBatch]]:
        """按回合划分后切分训练 / 测试序列"""
        stats = self._stats()
        train_eps, test_eps = self._split(rounds)
        train, report = make_sequences(train_eps, stats, role, shift=shift, seq_len=seq_len)
        self._write_json(self.run.reports / f"build_{role}.json", report.model_dump(mode="json"), "report")
        test = None
        if test_eps:
            try:
                test, _ = make_sequences(test_eps, stats, role, shift=shift, seq_len=seq_len)
            except DataError as e:
                logger.warning(f"No held-out {role} sequences: {e}")
        return train, test

    def _write_json(self, path: Path, payload: dict, kind: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        self.run.record(path, kind)

    # ------------------------------------------------------------------ gen-data

    def gen_data(
        self,
        minutes: Optional[float] = None,
        rounds: Optional[Sequence[str]] = None,
        snn_checkpoint: Optional[str] = None,
    ) -> Dict[str, int]:
        """
        生成训练语料并重建归一化统计量

        Args:
            minutes: 每轮总时长（分钟），默认 dataset.minutes
            rounds: 轮次列表，默认 dataset.rounds
            snn_checkpoint: snn 轮次使用的检查点，默认 pruned（其次 merged）

        Returns:
            每轮生成的回合数
        """
        sim = self.config.sim
        explicit = rounds is not None
        rounds = list(rounds or self.config.dataset.rounds)
        minutes = self.config.dataset.minutes if minutes is None else minutes
        n_episodes = max(1, math.ceil(minutes * 60.0 / sim.episode_seconds))
        unknown = [r for r in rounds if r not in ROUND_RECIPES]
        if unknown:
            raise ConfigError(f"Unknown rounds {unknown}, available: {list(ROUND_RECIPES)}", key="dataset.rounds")

        manifest = load_corpus_manifest(self.run.root)
        produced: Dict[str, int] = {}
        for tag in rounds:
            controller, disturbed = ROUND_RECIPES[tag]
            checkpoint = None
            if controller.startswith("snn"):
                checkpoint = self._snn_round_checkpoint(snn_checkpoint)
                if checkpoint is None:
                    if explicit:
                        raise DataError("snn round needs a merged or pruned checkpoint; run merge first",
                                        path=str(self.checkpoint_path("merged")))
                    logger.warning("⚠️ Skipping snn round: no merged checkpoint yet")
                    continue
            entries = generate_round(
                sim, tag, n_episodes, self.run.episodes,
                controller=controller, checkpoint=checkpoint, disturbances=disturbed,
                first_index=list(ROUND_RECIPES).index(tag) * ROUND_INDEX_STRIDE, threads=self.threads,
            )
            manifest.episodes = [e for e in manifest.episodes if e.round_tag != tag] + entries
            for entry in entries:
                for kind, path in episode_paths(self.run.episodes, entry.episode_id).items():
                    if path.exists():
                        self.run.record(path, "episode")
            produced[tag] = len(entries)

        corpus_path = save_corpus_manifest(self.run.root, manifest)
        self.run.record(corpus_path, "episode")
        self._rebuild_stats()
        self._finish("gen-data")
        return produced

    def _snn_round_checkpoint(self, name: Optional[str]) -> Optional[str]:
        candidates = [name] if name else ["pruned", "merged"]
        for candidate in candidates:
            path = self.checkpoint_path(candidate)
            if path.exists():
                return str(path)
        return None

    def _rebuild_stats(self) -> NormStats:
        self.loader.clear_cache()
        by_round = {}
        for tag in load_corpus_manifest(self.run.root).by_round():
            by_round[tag] = [ep for ep in self.loader.load_round([tag]) if ep.usable]
        corpus = aggregate_rounds(by_round, NORM_LABELS)
        path = self.run.stats / NORM_STATS_FILE
        corpus.stats.save(path)
        self.run.record(path, "stats")
        self._write_json(self.run.stats / "rounds.json", corpus.provenance, "stats")
        return corpus.stats

    # ------------------------------------------------------------------ training

    def train_est(self, name: str = "estimator") -> TrainResult:
        cfg = self.config.training.estimator
        train, test = self.sequences("estimator", cfg.target_time_shift, cfg.seq_len)
        result = train_estimator(train, test, cfg)
        self._save_training(result, name, cfg)
        self._finish("train-est")
        return result

    def train_integrator(self, compare: bool = False, name: str = "integrator") -> Dict[str, TrainResult]:
        """
        积分神经元预训练；compare=True 时同时训练自由参数对照组并输出两条损失曲线
        """
        cfg = self.config.training.integrator
        train, test = self.sequences("integrator", 0, cfg.seq_len)
        if compare:
            results = compare_integrator_variants(train, test, cfg)
            self._save_training(results["fixed"], name, cfg)
            self._save_training(results["free"], f"{name}_free", cfg)
            curves = pd.DataFrame({
                "epoch": [m.epoch for m in results["fixed"].history],
                "fixed": [m.total for m in results["fixed"].history],
                "free": [m.total for m in results["free"].history],
            })
            path = self.run.reports / "integrator_variants.csv"
            curves.to_csv(path, index=False)
            self.run.record(path, "report")
        else:
            results = {"fixed": pretrain_integrators(train, test, cfg, free=False)}
            self._save_training(results["fixed"], name, cfg)
        self._finish("train-integrator")
        return results

    def train_ctl(
        self,
        name: str = "controller",
        use_integrators: bool = True,
        rounds: Optional[Sequence[str]] = None,
    ) -> TrainResult:
        """
        训练控制网络

        Args:
            name: 检查点名称（消融实验中区分变体）
            use_integrators: 是否载入预训练积分块（不存在时随机初始化积分神经元）
            rounds: 使用的数据轮次，None 表示全部
        """
        cfg = self.config.training.controller
        train, test = self.sequences("controller", cfg.target_time_shift, cfg.seq_len, rounds)
        block = None
        integrator_path = self.checkpoint_path("integrator")
        if use_integrators and cfg.n_integrators > 0:
            if integrator_path.exists():
                block = IntegratorBlock.from_network(load_checkpoint(integrator_path))
            else:
                logger.warning("⚠️ No pretrained integrator checkpoint; integrator neurons start untrained")
        result = train_controller(train, test, cfg, integrators=block)
        if block is not None:
            result.net.provenance["parents"] = [checkpoint_hash(integrator_path)]
        self._save_training(result, name, cfg)
        self._finish("train-ctl")
        return result

    # ------------------------------------------------------------------ compose

    def merge(self, estimator: str = "estimator", controller: str = "controller", name: str = "merged") -> SpikingNetwork:
        plan = build_merge_plan(self._load(estimator), self._load(controller))
        net = merge(plan)
        self._save_network(net, name)
        self._finish("merge")
        return net

    def reference_corpus(self, shift: Optional[int] = None, held_out: bool = False) -> SequenceBatch:
        """merged 角色的参考语料：held_out=True 取测试回合，否则取训练回合"""
        ds = self.config.dataset
        train, test = self.sequences("merged", ds.shift_d if shift is None else shift, ds.seq_len)
        if held_out:
            if test is None:
                raise DataError("No held-out episodes for evaluation; raise dataset.test_fraction")
            return test
        return train

    def prune(self, source: str = "merged", name: str = "pruned") -> SpikingNetwork:
        """剪枝；被拒绝时不写出任何产物"""
        cc = self.config.compose
        net = self._load(source)
        pruned, report = score_and_prune(net, self.reference_corpus(), cc.target_widths, cc.max_mse_ratio)
        pruned.provenance["parents"] = [checkpoint_hash(self.checkpoint_path(source))]
        self._save_network(pruned, name)
        self._write_json(self.run.reports / "prune.json", report.model_dump(mode="json"), "report")
        text = self.run.reports / "prune.txt"
        text.write_text(format_prune_report(report) + "\n", encoding="utf-8")
        self.run.record(text, "report")
        self._finish("prune")
        return pruned

    # ------------------------------------------------------------------ eval

    def closed_loop(
        self,
        controller: str = "snn",
        checkpoint: Optional[str] = None,
        script: str = "step",
        n_runs: Optional[int] = None,
        tag: Optional[str] = None,
        finish: bool = True,
    ) -> Tuple[EvalReport, Optional[StepResponseTrace]]:
        """单个控制器的闭环重复评估"""
        ec = self.config.eval
        ckpt_path = None
        if controller.startswith("snn"):
            ckpt_path = str(self.checkpoint_path(checkpoint or self._default_eval_checkpoint()))
        report, trace = step_response_suite(
            self.config.sim, controller=controller, checkpoint=ckpt_path, script=script,
            n_runs=n_runs or ec.n_runs, master_seed=ec.seed, threads=self.threads,
        )
        tag = tag or (checkpoint or controller)
        write_report(report, self.run.reports / f"closed_loop_{tag}_{script}.json")
        self.run.record(self.run.reports / f"closed_loop_{tag}_{script}.json", "report")
        if trace is not None:
            trace.controller = tag
        if finish:
            self._finish("closed-loop")
        return report, trace

    def _default_eval_checkpoint(self) -> str:
        return "pruned" if self.checkpoint_path("pruned").exists() else "merged"

    def eval(self, checkpoint: Optional[str] = None) -> Dict[str, EvalReport]:
        """
        开环 + 闭环评估

        开环：held-out 回合上的逐通道 MSE、相关系数-时移曲线、稀疏度（目标不时移）
        闭环：专家与 SNN 在每个评估脚本上各重复 n_runs 次
        """
        ec = self.config.eval
        checkpoint = checkpoint or self._default_eval_checkpoint()
        net = self._load(checkpoint)
        corpus = self.reference_corpus(shift=0, held_out=True)
        open_loop = EvalReport(
            controller="snn",
            checkpoint_hash=checkpoint_hash(self.checkpoint_path(checkpoint)),
            open_loop=open_loop_report(net, corpus, ec.shift_range),
        )
        write_report(open_loop, self.run.reports / "eval_open_loop.json")
        self.run.record(self.run.reports / "eval_open_loop.json", "report")
        corr = self.run.reports / "corr_vs_shift.csv"
        write_correlation_csv(open_loop.open_loop.correlation, corr)
        self.run.record(corr, "report")

        reports: Dict[str, EvalReport] = {"open_loop": open_loop}
        for script in ec.scripts:
            traces: List[StepResponseTrace] = []
            summary: Dict[str, EvalReport] = {}
            for controller, tag in (("expert", "expert"), ("snn", checkpoint)):
                report, trace = self.closed_loop(controller, checkpoint if controller == "snn" else None,
                                                 script, tag=tag, finish=False)
                summary[tag] = report
                reports[f"{tag}_{script}"] = report
                if trace is not None:
                    traces.append(trace)
            if traces:
                path = self.run.reports / f"step_response_{script}.csv"
                write_step_response_csv(traces, path)
                self.run.record(path, "report")
            out_dir = self.run.reports / f"summary_{script}"
            write_ablation(summary, out_dir)
            for f in sorted(out_dir.iterdir()):
                self.run.record(f, "report")
            self._check_ratio(summary, checkpoint, script)
        self._finish("eval")
        return reports

    @staticmethod
    def _check_ratio(summary: Dict[str, EvalReport], checkpoint: str, script: str) -> None:
        expert, snn = summary.get("expert"), summary.get(checkpoint)
        if expert and snn and expert.closed_loop and snn.closed_loop and expert.closed_loop.rmse_true_deg > 0:
            ratio = snn.closed_loop.rmse_true_deg / expert.closed_loop.rmse_true_deg
            logger.info(f"{script}: SNN/expert RMSE ratio {ratio:.2f}")

    # ------------------------------------------------------------------ export

    def export(self, checkpoint: str = "pruned", name: Optional[str] = None) -> Path:
        source = self.checkpoint_path(checkpoint)
        net = load_checkpoint(source)
        path = self.run.export / f"{name or source.stem}.snnx"
        export_network(net, path, checkpoint_hash(source))
        self.run.record(path, "export")
        self._finish("export")
        return path

    def import_blob(self, path: str, name: str = "imported") -> SpikingNetwork:
        blob = import_network(path)
        self._save_network(blob.network, name)
        self._finish("import")
        return blob.network

    def bench(self, source: str = "pruned", n_steps: Optional[int] = None) -> Path:
        """
        推理基准；source 可以是 .snnx 导出文件或检查点名称

        有语料时用 held-out 回合的真实输入作为探针，否则用随机输入
        """
        if source.endswith(".snnx"):
            net = import_network(source).network
        else:
            net = self._load(source)
        bench_inputs = None
        try:
            corpus = self.reference_corpus(shift=0, held_out=True)
            bench_inputs = corpus.inputs.reshape(-1, corpus.inputs.shape[-1])
        except DataError as e:
            logger.warning(f"Benchmarking with random inputs: {e}")
        report = bench_inference(net, n_steps or self.config.eval.bench_steps, inputs=bench_inputs)
        path = self.run.reports / "bench.json"
        path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
        self.run.record(path, "log", deterministic=False)
        self._finish("bench")
        return path

    # ------------------------------------------------------------------ verify

    def verify(self) -> List[str]:
        """
        校验运行目录中所有登记产物的哈希

        Raises:
            InvariantRejection: 存在缺失或被修改的文件
        """
        problems = self.run.verify()
        for p in problems:
            logger.error(f"❌ {p}")
        if problems:
            raise InvariantRejection(f"{len(problems)} artifacts do not match the manifest",
                                     path=str(self.run.manifest_path))
        logger.info(f"✅ {len(self.run.manifest.artifacts)} artifacts verified")
        return problems


def seed_overrides(seed: int) -> List[str]:
    """--seed 展开为覆盖项：仿真、训练初始化、数据划分与评估种子"""
    overrides = [f"sim.seed={seed}", f"dataset.split_seed={seed}", f"eval.seed={seed + 1}"]
    overrides += [f"training.{role}.init_seed={seed}" for role in ("estimator", "integrator", "controller")]
    return overrides

