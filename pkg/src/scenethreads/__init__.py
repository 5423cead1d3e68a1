"""Conversation threads in screenplay scenes: parsing, annotation, link prediction, metrics, analytics."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402
from .screenplay import (  # noqa: E402
    RawDocument, Scene, Utterance, emit_canonical, normalize_speaker, normalize_text, parse_screenplay,
    read_canonical, segment_sentences,
)
from .annotation import (  # noqa: E402
    ColumnMap, GoldLinks, ThreadPartition, emit_gold, links_to_partition, postprocess, read_annotations, read_gold,
)
from .linkmodel import (  # noqa: E402
    ScorerModel, TrainingConfig, extract_features, predict_links, predict_previous_baseline, train,
)
from .metrics import MetricsReport, Unit, agreement, bootstrap_ci, evaluate  # noqa: E402
from .threads import thread_stats, validate_links  # noqa: E402
from .analytics import floor_claiming, ingest_metadata, thread_length_by_era  # noqa: E402

__all__ = [
    "BACKEND", "RawDocument", "Scene", "Utterance", "emit_canonical", "normalize_speaker", "normalize_text",
    "parse_screenplay", "read_canonical", "segment_sentences", "ColumnMap", "GoldLinks", "ThreadPartition",
    "emit_gold", "links_to_partition", "postprocess", "read_annotations", "read_gold", "ScorerModel",
    "TrainingConfig", "extract_features", "predict_links", "predict_previous_baseline", "train", "MetricsReport",
    "Unit", "agreement", "bootstrap_ci", "evaluate", "thread_stats", "validate_links", "floor_claiming",
    "ingest_metadata", "thread_length_by_era",
]
