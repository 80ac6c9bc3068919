"""Predict which machine-translated segments need post-editing, and what skipping the rest saves."""

from mtpe.corpus import (
    DEFAULT_BUCKETS,
    Label,
    LabeledSegment,
    LangPair,
    LengthBucket,
    TranslationUnit,
    corpus_stats,
    derive_label,
    edit_distance,
    label_corpus,
    label_unit,
    normalize_text,
    normalized_edit_distance,
    source_length,
)
from mtpe.metrics import (
    ConfusionMatrix,
    MetricsReport,
    Prediction,
    SavingsParams,
    accuracy,
    confusion_from,
    evaluate,
    lai_false_rate,
    scenario1,
    scenario2,
    type2_rate,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_BUCKETS",
    "Label",
    "LabeledSegment",
    "LangPair",
    "LengthBucket",
    "TranslationUnit",
    "corpus_stats",
    "derive_label",
    "edit_distance",
    "label_corpus",
    "label_unit",
    "normalize_text",
    "normalized_edit_distance",
    "source_length",
    "ConfusionMatrix",
    "MetricsReport",
    "Prediction",
    "SavingsParams",
    "accuracy",
    "confusion_from",
    "evaluate",
    "lai_false_rate",
    "scenario1",
    "scenario2",
    "type2_rate",
]
