"""Experimentation harness for multilabel clinical NER.

Corpus ingestion and IO/BIO tag codecs, imbalance-aware data splitting,
class weighting and oversampling, threshold-swept micro/macro evaluation,
and a few-shot LLM extraction client with exact span alignment.
"""

__version__ = "0.1.0"

from .corpus import (
    BIO,
    IO,
    CorpusError,
    Document,
    EntitySpan,
    LabelVocabulary,
    TagMatrix,
    Token,
    decode,
    encode,
    ingest,
    project_spans,
    tokenize,
)
from .imbalance import ClassWeights, LabelStats, OversamplePlan, class_weights, label_stats, oversample
from .metrics import (
    EvaluationError,
    MetricsReport,
    PRCurve,
    PredictionSet,
    confusion,
    pr_curve,
    score,
    sweep_threshold,
)
from .stratify import (
    SplitAssignment,
    SplitQualityReport,
    SplitSpec,
    split,
    split_iterative,
    split_quality,
    split_random,
)

__all__ = [
    "BIO",
    "IO",
    "ClassWeights",
    "CorpusError",
    "Document",
    "EntitySpan",
    "EvaluationError",
    "LabelStats",
    "LabelVocabulary",
    "MetricsReport",
    "OversamplePlan",
    "PRCurve",
    "PredictionSet",
    "SplitAssignment",
    "SplitQualityReport",
    "SplitSpec",
    "TagMatrix",
    "Token",
    "class_weights",
    "confusion",
    "decode",
    "encode",
    "ingest",
    "label_stats",
    "oversample",
    "pr_curve",
    "project_spans",
    "score",
    "split",
    "split_iterative",
    "split_quality",
    "split_random",
    "sweep_threshold",
    "tokenize",
]
