from .records import (
    Dataset,
    Gender,
    RawEthnicity,
    MappedEthnicity,
    MappedEmotion,
    RawAttributeRecord,
    SampleRecord,
    UnknownLabelError,
    map_emotion,
    map_ethnicity,
    finalize_mappings,
)
from .corrections import AuditEntry, CorrectionRule, apply_heuristic_corrections, load_ledger, save_ledger
from .predictor import AnnotationError, AttributePredictor, CommandPredictor, TablePredictor, annotate_attributes
from .manifest import (
    DistributionReport,
    DuplicateKeyError,
    Manifest,
    build_manifest,
    ingest_dataset_index,
    load_manifest,
    save_manifest,
    summarize_distribution,
)
from .synth import ClipTruth, SynthSpec, synthesize_desk_corpus

__all__ = [
    "Dataset",
    "Gender",
    "RawEthnicity",
    "MappedEthnicity",
    "MappedEmotion",
    "RawAttributeRecord",
    "SampleRecord",
    "UnknownLabelError",
    "map_emotion",
    "map_ethnicity",
    "finalize_mappings",
    "AuditEntry",
    "CorrectionRule",
    "apply_heuristic_corrections",
    "load_ledger",
    "save_ledger",
    "AnnotationError",
    "AttributePredictor",
    "CommandPredictor",
    "TablePredictor",
    "annotate_attributes",
    "DistributionReport",
    "DuplicateKeyError",
    "Manifest",
    "build_manifest",
    "ingest_dataset_index",
    "load_manifest",
    "save_manifest",
    "summarize_distribution",
    "ClipTruth",
    "SynthSpec",
    "synthesize_desk_corpus",
]
