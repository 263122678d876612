from app.eval.correlation import correlation_vs_shift, write_correlation_csv
from app.eval.report import ablation_table, open_loop_report, write_report
from app.eval.sparsity import sparsity
from app.eval.step_response import rise_time, step_response_suite, write_step_response_csv

__all__ = [
    "correlation_vs_shift",
    "write_correlation_csv",
    "ablation_table",
    "open_loop_report",
    "write_report",
    "sparsity",
    "rise_time",
    "step_response_suite",
    "write_step_response_csv",
]
