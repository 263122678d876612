"""
消融实验脚本
依次训练四个控制网络变体，与同一个估计网络合并后做闭环阶跃评估，输出对比表

变体：
    baseline         d=0，仅专家轮次数据，无预训练积分块
    shifted          d=6，仅专家轮次数据
    shifted_aug      d=6，全部轮次（含 SNN 飞行轮次与扰动轮次）
    full             d=6，全部轮次，预训练积分块

使用方法:
    python scripts/run_ablation.py --run-dir runs/ablation [--minutes 20] [--threads 4]

运行时间较长（桌面规模数小时），建议离线执行
"""
import argparse
import os
import sys

# 添加项目根目录到 Python 路径
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.core.config import load_pipeline_config
from app.core.exceptions import PipelineError
from app.eval.report import ablation_table, write_ablation
from app.pipeline.rundir import RunDirectory
from app.pipeline.service import PipelineService
import logging

# 配置日志
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

BASE_ROUNDS = ["expert", "disturbed"]


def _with_shift(service: PipelineService, shift: int) -> None:
    ctl = service.config.training.controller
    service.config.training.controller = ctl.model_copy(update={"target_time_shift": shift})


def _variant(service: PipelineService, name: str, shift: int, rounds, integrators: bool) -> str:
    logger.info(f"Training variant '{name}' (d={shift}, rounds={rounds or 'all'}, integrators={integrators})")
    _with_shift(service, shift)
    service.train_ctl(f"ctl_{name}", use_integrators=integrators, rounds=rounds)
    service.merge(controller=f"ctl_{name}", name=f"merged_{name}")
    return f"merged_{name}"


def run_ablation(run_dir: str, config_path: str = None, minutes: float = None, threads: int = 1):
    """训练全部变体并输出闭环对比表"""
    logger.info("=" * 60)
    logger.info("Starting ablation study")
    logger.info("=" * 60)

    config = load_pipeline_config(config_path)
    service = PipelineService(config, RunDirectory(run_dir), threads=threads)
    default_shift = config.training.controller.target_time_shift

    try:
        service.gen_data(minutes, BASE_ROUNDS)
        service.train_est()
        service.train_integrator(compare=True)

        checkpoints = {
            "baseline": _variant(service, "baseline", 0, ["expert"], integrators=False),
            "shifted": _variant(service, "shifted", default_shift, ["expert"], integrators=False),
        }
        # SNN 飞行轮次：由 shifted 变体驾驶，记录专家输出
        service.gen_data(minutes, ["snn"], snn_checkpoint=checkpoints["shifted"])
        checkpoints["shifted_aug"] = _variant(service, "shifted_aug", default_shift, None, integrators=False)
        checkpoints["full"] = _variant(service, "full", default_shift, None, integrators=True)

        reports = {}
        expert, _ = service.closed_loop("expert", script="step", tag="expert", finish=False)
        reports["expert PID"] = expert
        for name, ckpt in checkpoints.items():
            report, _ = service.closed_loop("snn", ckpt, script="step", tag=name, finish=False)
            reports[name] = report

        write_ablation(reports, service.run.reports / "ablation")
        for f in sorted((service.run.reports / "ablation").iterdir()):
            service.run.record(f, "report")
        service.run.save("ablation")
        logger.info("\n" + ablation_table(reports))
        logger.info("✅ Ablation study completed successfully!")

    except PipelineError as e:
        logger.error(f"❌ Ablation failed [{e.category}]: {e}", exc_info=True)
        raise

    logger.info("=" * 60)
    logger.info("Ablation process completed")
    logger.info("=" * 60)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="控制网络消融实验")
    parser.add_argument("--run-dir", default="runs/ablation")
    parser.add_argument("--config")
    parser.add_argument("--minutes", type=float)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    run_ablation(args.run_dir, args.config, args.minutes, args.threads)
