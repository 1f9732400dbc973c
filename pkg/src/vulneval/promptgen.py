"""Prompt and corpus construction: pretraining documents, SFT entries, and
zero-shot inference prompts in the fixed Alpaca layout.

Layout (every block, including each labeled field, separated by one blank
line; no trailing whitespace)::

    <preamble sentence>

    ### Instruction: <instruction text>

    ### Input:

    Organization: ...

    (one labeled block per populated field)

    ### Response:

The Mitigations line appears only in InternalComment prompts; Prerequisites
and Typical severity appear for every kind.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .catalog import (
    Asset,
    ComponentRef,
    Evaluation,
    Notification,
    match_components,
)
from .cskg import Enrichment
from .cvss import describe_vector, parse_vector
from .ingest import CveRecord, Severity

logger = logging.getLogger(__name__)

PREAMBLE = (
    "Below is an instruction that describes a task, paired with an input that "
    "provides further context. Write a response that appropriately completes "
    "the request."
)

STOP_MARKER = "<STOP>"

MAX_SFT_TOKENS = 1024


class IncompleteContext(ValueError):
    """A required prompt field is empty; message names the missing labels."""


class InstructionKind(str, Enum):
    CATEGORY = "Category"
    INTERNAL_COMMENT = "InternalComment"
    CUSTOMER_COMMENT = "CustomerComment"
    VECTOR = "Vector"

    @property
    def instruction(self) -> str:
        return _INSTRUCTION_TEXT[self]


_INSTRUCTION_TEXT = {
    InstructionKind.CATEGORY: "What is the category?",
    InstructionKind.INTERNAL_COMMENT: "Generate internal comment.",
    InstructionKind.CUSTOMER_COMMENT: "Generate customer comment.",
    InstructionKind.VECTOR: "Generate environmental vectors.",
}


@dataclass
class PromptContext:
    """Everything a prompt needs, already cleaned."""

    organization: str = ""
    software: str = ""
    product: str = ""
    notification_text: str = ""
    prerequisites: list[str] = field(default_factory=list)
    typical_severity: Severity = Severity.UNKNOWN
    mitigations: list[str] = field(default_factory=list)
    common_components: list[ComponentRef] = field(default_factory=list)
    base_temporal_description: str = ""
    cvss_version: str = ""


@dataclass
class SftEntry:
    kind: InstructionKind
    prompt: str
    response: str
    token_count: int
    complete: bool = True

    @property
    def text(self) -> str:
        """Full training text; the response block follows the marker inline."""
        return f"{self.prompt} {self.response}"


# ---------------------------------------------------------------------------
# Tokenizers


class Tokenizer:
    """Deterministic token counter."""

    def count(self, text: str) -> int:
        raise NotImplementedError


class WhitespacePieceTokenizer(Tokenizer):
    """Approximate counter: each whitespace word costs ceil(len/4) pieces.

    Subadditive per word, so count(a+b) <= count(a)+count(b)+1 holds for any
    concatenation (the +1 covers two words merging across the seam).
    """

    piece_length = 4

    def count(self, text: str) -> int:
        return sum(
            max(1, math.ceil(len(word) / self.piece_length)) for word in text.split()
        )


class VocabularyTokenizer(Tokenizer):
    """Greedy longest-match against a vocabulary, per whitespace word;
    unmatched characters fall back to one token each."""

    def __init__(self, vocabulary: Sequence[str]):
        self.vocabulary = frozenset(tok for tok in vocabulary if tok)
        self._max_len = max((len(tok) for tok in self.vocabulary), default=1)

    @classmethod
    def from_file(cls, path: str) -> "VocabularyTokenizer":
        with open(path, encoding="utf-8") as handle:
            return cls([line.rstrip("\n") for line in handle])

    def count(self, text: str) -> int:
        total = 0
        for word in text.split():
            pos = 0
            while pos < len(word):
                for end in range(min(len(word), pos + self._max_len), pos, -1):
                    if word[pos:end] in self.vocabulary:
                        pos = end
                        break
                else:
                    pos += 1
                total += 1
        return total


DEFAULT_TOKENIZER = WhitespacePieceTokenizer()


# ---------------------------------------------------------------------------
# Rendering


def render_enrichment_list(items: list[str]) -> str:
    """Single item verbatim; several items numbered "(1) ... (2) ..."."""
    if not items:
        return ""
    if len(items) == 1:
        return items[0]
    return " ".join(f"({i}) {item}" for i, item in enumerate(items, start=1))


_REQUIRED_LABELS = (
    "Organization",
    "Software",
    "Product",
    "Notification",
    "Base and Temporal Vectors",
    "CVSS Version",
)


def _input_lines(ctx: PromptContext, kind: InstructionKind) -> list[tuple[str, str]]:
    severity = ""
    if ctx.typical_severity is not Severity.UNKNOWN:
        severity = f"{ctx.typical_severity.display}."
    lines = [
        ("Organization", ctx.organization),
        ("Software", ctx.software),
        ("Product", ctx.product),
        ("Notification", ctx.notification_text),
        ("Prerequisites", render_enrichment_list(ctx.prerequisites)),
        ("Typical severity", severity),
    ]
    if kind is InstructionKind.INTERNAL_COMMENT:
        lines.append(("Mitigations", render_enrichment_list(ctx.mitigations)))
    lines.extend(
        [
            (
                "Components present in software",
                ", ".join(c.render() for c in ctx.common_components),
            ),
            ("Base and Temporal Vectors", ctx.base_temporal_description),
            ("CVSS Version", ctx.cvss_version),
        ]
    )
    missing = [label for label, value in lines if label in _REQUIRED_LABELS and not value]
    if missing:
        raise IncompleteContext(", ".join(missing))
    return [(label, value) for label, value in lines if value]


def render_prompt(ctx: PromptContext, kind: InstructionKind) -> str:
    """The exact Alpaca prompt, ending with the "### Response:" marker."""
    blocks = [PREAMBLE, f"### Instruction: {kind.instruction}", "### Input:"]
    blocks.extend(f"{label}: {value}" for label, value in _input_lines(ctx, kind))
    blocks.append("### Response:")
    return "\n\n".join(blocks)


def build_context(
    asset: Asset,
    notification: Notification,
    enrichment: Optional[Enrichment] = None,
) -> PromptContext:
    """Assemble the prompt context for one (asset, notification) pair."""
    enrichment = enrichment or notification.enrichment or Enrichment()
    description = ""
    vector = notification.base_temporal_vector
    if vector is not None:
        description = describe_vector(vector)
    return PromptContext(
        organization=asset.organization,
        software=asset.software_name,
        product=asset.product_label,
        notification_text=notification.description,
        prerequisites=list(enrichment.prerequisites),
        typical_severity=enrichment.typical_severity,
        mitigations=list(enrichment.mitigations),
        common_components=match_components(asset, notification),
        base_temporal_description=description,
        cvss_version=notification.cvss_version,
    )


# ---------------------------------------------------------------------------
# SFT entries


def gold_response(evaluation: Evaluation, kind: InstructionKind) -> tuple[str, bool]:
    """Gold response text for the kind plus a completeness flag."""
    if kind is InstructionKind.CATEGORY:
        category = evaluation.vex_category.value
        if evaluation.vex_justification is None:
            return f"Category: {category}", True
        return f"{evaluation.vex_justification.display}. Category: {category}", True
    if kind is InstructionKind.INTERNAL_COMMENT:
        return evaluation.internal_comment, bool(evaluation.internal_comment)
    if kind is InstructionKind.CUSTOMER_COMMENT:
        return evaluation.customer_comment, bool(evaluation.customer_comment)
    vector = evaluation.environmental_vector
    if vector is None or not vector.has_environmental:
        return "", False
    return describe_vector(vector, parts={"environmental"}), True


def build_sft_entries(
    evaluation: Evaluation,
    ctx: PromptContext,
    tokenizer: Optional[Tokenizer] = None,
) -> list[SftEntry]:
    """One entry per instruction kind; missing gold fields mark entries incomplete."""
    tokenizer = tokenizer or DEFAULT_TOKENIZER
    entries = []
    for kind in InstructionKind:
        gold, present = gold_response(evaluation, kind)
        prompt = render_prompt(ctx, kind)
        response = f"{gold}\n{STOP_MARKER}"
        entries.append(
            SftEntry(
                kind=kind,
                prompt=prompt,
                response=response,
                token_count=tokenizer.count(f"{prompt} {response}"),
                complete=present,
            )
        )
    return entries


def filter_corpus(
    entries: list[SftEntry], max_tokens: int = MAX_SFT_TOKENS
) -> tuple[list[SftEntry], list[SftEntry]]:
    """Partition into (kept, dropped): kept = complete and within budget."""
    kept, dropped = [], []
    for entry in entries:
        if entry.complete and entry.token_count <= max_tokens:
            kept.append(entry)
        else:
            dropped.append(entry)
    return kept, dropped


# ---------------------------------------------------------------------------
# Pretraining documents


def build_dapt_document(cve: CveRecord) -> str:
    """One pretraining document: title, description, vector description,
    affected/unaffected versions, mitigations; absent sections omitted."""
    sections = []
    if cve.title:
        sections.append(cve.title)
    if cve.description:
        sections.append(cve.description)
    if cve.cvss_vector and cve.cvss_version in ("3.0", "3.1"):
        try:
            sections.append(describe_vector(parse_vector(cve.cvss_vector)))
        except ValueError:
            logger.warning("%s: unparsable vector %r", cve.id, cve.cvss_vector)
    if cve.affected_versions:
        sections.append("Affected versions: " + ", ".join(cve.affected_versions) + ".")
    if cve.unaffected_versions:
        sections.append("Unaffected versions: " + ", ".join(cve.unaffected_versions) + ".")
    if cve.mitigations:
        sections.append("Mitigations: " + cve.mitigations)
    return " ".join(sections)


# ---------------------------------------------------------------------------
# Corpus splitting


def split_records(records: list, ratios: Sequence[float], seed: int) -> list[list]:
    """Shuffle deterministically and split by the ratio list (sums to 1)."""
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    shuffled = list(records)
    random.Random(seed).shuffle(shuffled)
    splits: list[list] = []
    start = 0
    for i, ratio in enumerate(ratios):
        if i == len(ratios) - 1:
            end = len(shuffled)
        else:
            end = start + round(len(shuffled) * ratio)
        splits.append(shuffled[start:end])
        start = end
    return splits


def parse_split_spec(spec: str) -> list[float]:
    """Parse "0.9/0.05/0.05" (commas also accepted) into ratio floats."""
    ratios = [float(part) for part in spec.replace(",", "/").split("/") if part]
    if not ratios:
        raise ValueError(f"empty split spec {spec!r}")
    return ratios
