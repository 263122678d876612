"""
网络组合模块
子网络合并与按贡献剪枝
"""
from app.compose.merge import MergePlan, build_merge_plan, merge
from app.compose.prune import estimate_ops, score_and_prune

__all__ = ["MergePlan", "build_merge_plan", "merge", "estimate_ops", "score_and_prune"]
