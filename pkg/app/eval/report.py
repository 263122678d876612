# app/eval/report.py
"""
报告汇总与输出
"""
import json
import logging
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np
import pandas as pd

from app.dataset.sequences import SequenceBatch
from app.eval.correlation import correlation_vs_shift
from app.eval.sparsity import sparsity
from app.schemas.reports import EvalReport, OpenLoopReport
from app.snn.core import SpikingNetwork, run_sequence

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ["variant", "rmse_deg", "rmse_est_deg", "sd_deg", "rise_time_ms", "sparsity", "void"]


def open_loop_report(net: SpikingNetwork, corpus: SequenceBatch, shift_range: int = 20) -> OpenLoopReport:
    """
    开环评估：逐通道 MSE、相关系数-时移曲线、稀疏度

    Args:
        net: 网络
        corpus: 评估语料（目标未时移）
        shift_range: 时移范围
    """
    outputs = run_sequence(net, corpus.inputs).outputs.astype(np.float64)
    mse = np.mean((outputs - corpus.targets.astype(np.float64)) ** 2, axis=(0, 1))
    return OpenLoopReport(
        mse=mse.tolist(),
        channels=list(corpus.target_labels),
        correlation=correlation_vs_shift(net, corpus, shift_range),
        sparsity=sparsity(net, corpus.inputs),
    )


def report_json(report: EvalReport) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True)


def write_report(report: EvalReport, path: Union[str, Path]) -> Path:
    """写出报告 JSON（键排序，固定种子下逐字节一致）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_json(report), encoding="utf-8")
    return path


def load_report(path: Union[str, Path]) -> EvalReport:
    return EvalReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def ablation_frame(reports: Mapping[str, EvalReport]) -> pd.DataFrame:
    """
    消融对比表

    Args:
        reports: 变体名 -> 闭环评估报告（顺序即表格行顺序）

    Returns:
        DataFrame，作废的报告指标为空
    """
    rows = []
    for variant, report in reports.items():
        cl = report.closed_loop
        rows.append({
            "variant": variant,
            "rmse_deg": cl.rmse_true_deg if cl else None,
            "rmse_est_deg": cl.rmse_est_deg if cl else None,
            "sd_deg": cl.sd_deg if cl else None,
            "rise_time_ms": cl.rise_time_ms if cl else None,
            "sparsity": cl.sparsity if cl else None,
            "void": report.void,
        })
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)


def _fmt(value: Optional[float], digits: int) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "-"
    return f"{value:.{digits}f}"


def ablation_table(reports: Mapping[str, EvalReport]) -> str:
    """文本形式的消融对比表"""
    header = f"{'variant':<28} {'RMSE':>7} {'RMSE(est)':>9} {'avg SD':>7} {'avg RT':>8} {'sparsity':>8}"
    lines = [header, "-" * len(header)]
    for _, row in ablation_frame(reports).iterrows():
        name = row["variant"] + (" (void)" if row["void"] else "")
        lines.append(
            f"{name:<28} {_fmt(row['rmse_deg'], 2):>7} {_fmt(row['rmse_est_deg'], 2):>9} "
            f"{_fmt(row['sd_deg'], 2):>7} {_fmt(row['rise_time_ms'], 0):>8} {_fmt(row['sparsity'], 3):>8}"
        )
    return "\n".join(lines)


def write_ablation(reports: Mapping[str, EvalReport], directory: Union[str, Path]) -> None:
    """写出 ablation.csv 与 ablation.txt"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ablation_frame(reports).to_csv(directory / "ablation.csv", index=False)
    (directory / "ablation.txt").write_text(ablation_table(reports) + "\n", encoding="utf-8")
    logger.info(f"Ablation table written to {directory}")
