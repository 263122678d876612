# main.py
"""
流水线命令行主入口

使用方法:
    python main.py [全局参数] <子命令> [子命令参数]

示例:
    python main.py --run-dir runs/demo gen-data --minutes 10 --rounds expert
    python main.py --run-dir runs/demo train-est
    python main.py --run-dir runs/demo --set training.controller.target_time_shift=0 train-ctl --name baseline
    python main.py --run-dir runs/demo verify

退出码: 0 成功 / 1 结构错误 / 2 配置错误 / 3 数据错误 / 4 数值发散 / 5 不变量校验失败
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

# BLAS 线程数在 numpy 首次导入时读取
THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")

logger = logging.getLogger("main")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snn-pipeline",
        description="脉冲神经网络四旋翼姿态估计与控制流水线",
    )
    parser.add_argument("--config", help="JSON 配置文件（默认 DEFAULT_CONFIG_PATH）")
    parser.add_argument("--run-dir", help="运行目录（默认 $SNN_RUN_ROOT）")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="配置覆盖项，如 sim.seed=3，可重复")
    parser.add_argument("--seed", type=int, help="统一设置仿真、训练、划分与评估种子")
    parser.add_argument("--threads", type=int, default=1,
                        help="回合生成 / 闭环评估的并行进程数；训练与剪枝始终单进程、按固定顺序归约")
    parser.add_argument("--deterministic", action="store_true", help="BLAS 单线程并强制串行执行")
    parser.add_argument("--log-level", help="日志级别（默认 LOG_LEVEL）")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="仿真生成训练语料")
    p.add_argument("--minutes", type=float, help="每轮总时长（分钟）")
    p.add_argument("--rounds", help="逗号分隔的轮次：expert,snn,disturbed")
    p.add_argument("--snn-checkpoint", help="snn 轮次使用的检查点")

    p = sub.add_parser("train-est", help="训练姿态估计网络")
    p.add_argument("--name", default="estimator")

    p = sub.add_parser("train-integrator", help="积分神经元预训练")
    p.add_argument("--name", default="integrator")
    p.add_argument("--compare", action="store_true", help="同时训练自由参数对照组")

    p = sub.add_parser("train-ctl", help="训练控制网络")
    p.add_argument("--name", default="controller")
    p.add_argument("--no-integrators", action="store_true", help="不载入预训练积分块")
    p.add_argument("--rounds", help="逗号分隔的训练数据轮次（默认全部）")

    p = sub.add_parser("merge", help="合并估计网络与控制网络")
    p.add_argument("--estimator", default="estimator")
    p.add_argument("--controller", default="controller")
    p.add_argument("--name", default="merged")

    p = sub.add_parser("prune", help="按贡献分数剪枝")
    p.add_argument("--source", default="merged")
    p.add_argument("--name", default="pruned")

    p = sub.add_parser("eval", help="开环 + 闭环评估")
    p.add_argument("--checkpoint", help="默认 pruned（不存在时 merged）")

    p = sub.add_parser("closed-loop", help="单个控制器的闭环重复评估")
    p.add_argument("--controller", default="snn")
    p.add_argument("--checkpoint")
    p.add_argument("--script", default="step")
    p.add_argument("--runs", type=int)
    p.add_argument("--tag", help="报告文件名中的标签")

    p = sub.add_parser("export", help="导出 SNNX 部署文件")
    p.add_argument("--checkpoint", default="pruned")
    p.add_argument("--name")

    p = sub.add_parser("import", help="SNNX 文件转回检查点")
    p.add_argument("path")
    p.add_argument("--name", default="imported")

    p = sub.add_parser("bench", help="单步推理耗时基准")
    p.add_argument("--source", default="pruned", help="检查点名称或 .snnx 文件")
    p.add_argument("--steps", type=int)

    sub.add_parser("verify", help="校验运行目录中所有产物的哈希")
    return parser


def _split(value: Optional[str]) -> Optional[List[str]]:
    return [v.strip() for v in value.split(",") if v.strip()] if value else None


def run_command(service, args: argparse.Namespace) -> None:
    """把子命令分派到 PipelineService"""
    cmd = args.command
    if cmd == "gen-data":
        produced = service.gen_data(args.minutes, _split(args.rounds), args.snn_checkpoint)
        logger.info(f"Episodes per round: {produced}")
    elif cmd == "train-est":
        service.train_est(args.name)
    elif cmd == "train-integrator":
        service.train_integrator(compare=args.compare, name=args.name)
    elif cmd == "train-ctl":
        service.train_ctl(args.name, use_integrators=not args.no_integrators, rounds=_split(args.rounds))
    elif cmd == "merge":
        service.merge(args.estimator, args.controller, args.name)
    elif cmd == "prune":
        service.prune(args.source, args.name)
    elif cmd == "eval":
        service.eval(args.checkpoint)
    elif cmd == "closed-loop":
        service.closed_loop(args.controller, args.checkpoint, args.script, args.runs, args.tag)
    elif cmd == "export":
        service.export(args.checkpoint, args.name)
    elif cmd == "import":
        service.import_blob(args.path, args.name)
    elif cmd == "bench":
        service.bench(args.source, args.steps)
    elif cmd == "verify":
        service.verify()


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.deterministic:
        for var in THREAD_ENV_VARS:
            os.environ[var] = "1"
        args.threads = 1

    from app.core.config import load_pipeline_config, settings
    from app.core.exceptions import PipelineError
    from app.pipeline.rundir import RunDirectory
    from app.pipeline.service import PipelineService, seed_overrides

    logging.basicConfig(
        level=(args.log_level or settings.LOG_LEVEL).upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    try:
        config_path = args.config
        if config_path is None and os.path.exists(settings.DEFAULT_CONFIG_PATH):
            config_path = settings.DEFAULT_CONFIG_PATH
        overrides = (seed_overrides(args.seed) if args.seed is not None else []) + list(args.overrides)
        config = load_pipeline_config(config_path, overrides)
        run_dir = RunDirectory(args.run_dir or settings.SNN_RUN_ROOT)
        logger.info("=" * 60)
        logger.info(f"{settings.APP_NAME} {settings.APP_VERSION}: {args.command} in {run_dir.root}")
        logger.info("=" * 60)
        run_command(PipelineService(config, run_dir, threads=args.threads), args)
    except PipelineError as e:
        logger.error(f"❌ [{e.category}] {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"❌ Unexpected error: {e}", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
