# app/schemas/__init__.py
"""
Schema 模块初始化
"""
from app.schemas.checkpoint import CheckpointDocument, LayerDoc, MatrixDoc, ProvenanceDoc
from app.schemas.episode import (
    EpisodeSeeds,
    EpisodeSidecar,
    NormStatsDoc,
    CorpusEntry,
    CorpusManifest,
    BuildReport,
)
from app.schemas.reports import (
    PruneReport,
    CorrelationCurve,
    SparsityStats,
    OpenLoopReport,
    ClosedLoopReport,
    EvalReport,
    BenchReport,
)
from app.schemas.common import ArtifactEntry, RunManifest

__all__ = [
    "CheckpointDocument",
    "LayerDoc",
    "MatrixDoc",
    "ProvenanceDoc",
    "EpisodeSeeds",
    "EpisodeSidecar",
    "NormStatsDoc",
    "CorpusEntry",
    "CorpusManifest",
    "BuildReport",
    "PruneReport",
    "CorrelationCurve",
    "SparsityStats",
    "OpenLoopReport",
    "ClosedLoopReport",
    "EvalReport",
    "BenchReport",
    "ArtifactEntry",
    "RunManifest",
]
