"""Vulnerability evaluation management: catalog ingestion, CVSS scoring,
prompt generation, batched inference, draft post-correction, and review."""

from .catalog import (
    Asset,
    ComponentRef,
    DuplicateRecord,
    Evaluation,
    Notification,
    Provenance,
    Store,
    UnknownReference,
    VersionConflict,
    VexCategory,
    VexJustification,
    match_components,
)
from .cskg import Cskg, Enrichment, build_graph, capecs_for_cve, enrich_notification
from .cvss import (
    CvssScores,
    CvssVector,
    MalformedVector,
    MissingPart,
    UnparsableDescription,
    describe_to_vector,
    describe_vector,
    parse_vector,
    score_vector,
    serialize_vector,
    severity_rating,
)
from .evalmetrics import MetricReport, evaluate_run, micro_f1, rouge_l
from .inference import (
    Backend,
    BackendUnavailable,
    BatchPlan,
    GenParams,
    HttpBackend,
    MockBackend,
    PartialFailure,
    generate_evaluation_drafts,
    plan_batches,
    run_prompts,
)
from .ingest import (
    CapecEntry,
    CveRecord,
    CweEntry,
    FeedFormat,
    MalformedFeed,
    RawFeed,
    Severity,
    UnsupportedFormat,
    clean_text,
    parse_capec_catalog,
    parse_cve_feed,
    parse_cwe_catalog,
)
from .postprocess import CorrectionReport, RawDraft, apply_rules, assemble_evaluation
from .promptgen import (
    IncompleteContext,
    InstructionKind,
    PromptContext,
    SftEntry,
    build_context,
    build_sft_entries,
    filter_corpus,
    render_prompt,
)
from .service import ReviewService, create_app

__version__ = "0.1.0"

__all__ = [
    "Asset",
    "Backend",
    "BackendUnavailable",
    "BatchPlan",
    "CapecEntry",
    "ComponentRef",
    "CorrectionReport",
    "Cskg",
    "CveRecord",
    "CvssScores",
    "CvssVector",
    "CweEntry",
    "DuplicateRecord",
    "Enrichment",
    "Evaluation",
    "FeedFormat",
    "GenParams",
    "HttpBackend",
    "IncompleteContext",
    "InstructionKind",
    "MalformedFeed",
    "MalformedVector",
    "MetricReport",
    "MissingPart",
    "MockBackend",
    "Notification",
    "PartialFailure",
    "PromptContext",
    "Provenance",
    "RawDraft",
    "RawFeed",
    "ReviewService",
    "Severity",
    "SftEntry",
    "Store",
    "UnknownReference",
    "UnparsableDescription",
    "UnsupportedFormat",
    "VersionConflict",
    "VexCategory",
    "VexJustification",
    "apply_rules",
    "assemble_evaluation",
    "build_context",
    "build_graph",
    "build_sft_entries",
    "capecs_for_cve",
    "clean_text",
    "create_app",
    "describe_to_vector",
    "describe_vector",
    "enrich_notification",
    "evaluate_run",
    "filter_corpus",
    "generate_evaluation_drafts",
    "match_components",
    "micro_f1",
    "parse_capec_catalog",
    "parse_cve_feed",
    "parse_cwe_catalog",
    "parse_vector",
    "plan_batches",
    "render_prompt",
    "rouge_l",
    "run_prompts",
    "score_vector",
    "serialize_vector",
    "severity_rating",
]
