"""Raw completion parsing and the four deterministic correction rules.

The rules, in application order:

    R1  NotAffected evaluations carry no environmental vector.
    R2  Justification text outside the configured vocabulary becomes Other.
    R3  Justification Other with an empty customer comment copies the
        internal comment into the customer comment.
    R4  Affected evaluations get justification None, and their vector text is
        parsed (description grammar or vector string); unparsable or missing
        vectors are cleared and flagged.

A rule is reported as fired only when it changed the working state, which
makes a second application over its own output a no-op.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .catalog import Evaluation, VexCategory, VexJustification, JUSTIFICATION_DISPLAY
from .cvss import CvssVector, describe_to_vector, describe_vector, parse_vector
from .promptgen import STOP_MARKER, gold_response

logger = logging.getLogger(__name__)

REVIEW_PRIORITY_FLAG = "review-priority"

FLAG_CATEGORY_UNDETERMINED = "category-undetermined"
FLAG_VECTOR_UNPARSABLE = "vector-unparsable"
FLAG_VECTOR_MISSING = "vector-missing"
FLAG_CUSTOMER_FROM_INTERNAL = "customer-comment-from-internal"

_CATEGORY_SPLIT_RE = re.compile(r"category\s*:", re.IGNORECASE)
_NORMALIZE_RE = re.compile(r"[^a-z0-9]+")


@dataclass
class RawDraft:
    """The four raw completions for one (asset, notification) pair."""

    category_text: str = ""
    internal_text: str = ""
    customer_text: str = ""
    vector_text: str = ""


@dataclass
class CorrectionReport:
    rules_fired: list[str] = field(default_factory=list)
    fields_changed: list[str] = field(default_factory=list)

    def fire(self, rule: str, *fields: str) -> None:
        if rule not in self.rules_fired:
            self.rules_fired.append(rule)
        for name in fields:
            if name not in self.fields_changed:
                self.fields_changed.append(name)


def strip_stop(text: str) -> str:
    """Cut at the stop marker and trim."""
    return text.split(STOP_MARKER, 1)[0].strip()


def _normalize_label(text: str) -> str:
    return _NORMALIZE_RE.sub("", text.lower())


def parse_category(text: str) -> tuple[Optional[VexCategory], str]:
    """Split on the last "Category:" token.

    Returns (category, justification candidate); category is None when the
    trailing token is not Affected/NotAffected (undetermined).
    """
    matches = list(_CATEGORY_SPLIT_RE.finditer(text))
    if not matches:
        return None, ""
    last = matches[-1]
    candidate = _normalize_label(text[last.end():])
    justification = text[: last.start()].strip()
    if candidate == "affected":
        return VexCategory.AFFECTED, justification
    if candidate == "notaffected":
        return VexCategory.NOT_AFFECTED, justification
    return None, ""


# ---------------------------------------------------------------------------
# Justification vocabulary


_BUILTIN_ALIASES: dict[VexJustification, list[str]] = {
    VexJustification.COMPONENT_NOT_PRESENT: [
        "Component is not present",
        "Component not present in the product",
        "Component not present in product",
        "The component is not present in the product",
    ],
    VexJustification.VULNERABLE_CODE_NOT_PRESENT: [
        "Vulnerable code is not present",
        "Vulnerable code not present in the product",
    ],
    VexJustification.VULNERABLE_CODE_NOT_IN_EXECUTE_PATH: [
        "Vulnerable code not in the execute path",
        "Vulnerable code is not in the execute path",
    ],
    VexJustification.VULNERABLE_CODE_CANNOT_BE_CONTROLLED: [
        "Vulnerable code cannot be controlled by an adversary",
    ],
    VexJustification.INLINE_MITIGATIONS_ALREADY_EXIST: [
        "Inline mitigation already exists",
    ],
    VexJustification.OTHER: [],
}


def build_alias_index(
    extra: Optional[dict[str, list[str]]] = None,
) -> dict[str, VexJustification]:
    """Normalized alias -> justification; enum tokens and display phrases
    are always included, extra entries extend them (label file support)."""
    index: dict[str, VexJustification] = {}
    for justification in VexJustification:
        aliases = [justification.value, JUSTIFICATION_DISPLAY[justification]]
        aliases += _BUILTIN_ALIASES.get(justification, [])
        if extra:
            aliases += extra.get(justification.value, [])
        for alias in aliases:
            index[_normalize_label(alias)] = justification
    return index


_DEFAULT_ALIAS_INDEX = build_alias_index()


def match_justification(
    text: str, aliases: Optional[dict[str, VexJustification]] = None
) -> tuple[bool, Optional[VexJustification]]:
    """(matched, value); empty text and "None" match the None justification."""
    index = aliases if aliases is not None else _DEFAULT_ALIAS_INDEX
    normalized = _normalize_label(text)
    if normalized in ("", "none"):
        return True, None
    value = index.get(normalized)
    if value is None:
        return False, None
    return True, value


# ---------------------------------------------------------------------------
# Rule application


def _copy_evaluation(evaluation: Evaluation) -> Evaluation:
    vector = evaluation.environmental_vector
    return replace(
        evaluation,
        environmental_vector=CvssVector(vector.version, dict(vector.metrics)) if vector else None,
        flags=list(evaluation.flags),
        history=[dict(h) for h in evaluation.history],
    )


def _parse_vector_text(text: str) -> Optional[CvssVector]:
    try:
        if text.startswith("CVSS:"):
            return parse_vector(text, require_base=False)
        fragment = describe_to_vector(text)
    except ValueError:
        return None
    return fragment if fragment.metrics else None


def apply_rules(draft: RawDraft, parsed: Evaluation) -> tuple[Evaluation, CorrectionReport]:
    """Apply R1..R4 to the parsed evaluation, using draft texts where the
    structured fields are still unresolved. Total and idempotent; never
    edits the category itself."""
    working = _copy_evaluation(parsed)
    report = CorrectionReport()

    # R1: NotAffected never carries a vector.
    if working.vex_category is VexCategory.NOT_AFFECTED and working.environmental_vector:
        working.environmental_vector = None
        report.fire("R1", "environmental_vector")

    # R2: vocabulary enforcement for NotAffected justifications.
    if working.vex_category is VexCategory.NOT_AFFECTED and working.vex_justification is None:
        _, justification_text = parse_category(strip_stop(draft.category_text))
        matched, value = match_justification(justification_text)
        if matched:
            if value is not None:
                working.vex_justification = value
        else:
            working.vex_justification = VexJustification.OTHER
            report.fire("R2", "vex_justification")

    # R4: Affected normalization: justification None, vector must parse.
    # Runs before R3 so a stray Other justification on an Affected draft is
    # cleared rather than triggering the comment copy.
    if working.vex_category is VexCategory.AFFECTED:
        if working.vex_justification is not None:
            working.vex_justification = None
            report.fire("R4", "vex_justification")
        if working.environmental_vector is None:
            vector_text = strip_stop(draft.vector_text)
            if not vector_text:
                if FLAG_VECTOR_MISSING not in working.flags:
                    working.flags.append(FLAG_VECTOR_MISSING)
                    report.fire("R4", "flags")
            else:
                vector = _parse_vector_text(vector_text)
                if vector is not None:
                    working.environmental_vector = vector
                    report.fire("R4", "environmental_vector")
                elif FLAG_VECTOR_UNPARSABLE not in working.flags:
                    working.flags.append(FLAG_VECTOR_UNPARSABLE)
                    report.fire("R4", "flags")

    # R3: generation error left the customer comment empty.
    if (
        working.vex_justification is VexJustification.OTHER
        and not working.customer_comment
        and working.internal_comment
    ):
        working.customer_comment = working.internal_comment
        if FLAG_CUSTOMER_FROM_INTERNAL not in working.flags:
            working.flags.append(FLAG_CUSTOMER_FROM_INTERNAL)
        report.fire("R3", "customer_comment")

    report.rules_fired.sort()
    return working, report


def assemble_evaluation(
    draft: RawDraft, template: Evaluation
) -> tuple[Evaluation, CorrectionReport]:
    """Parse the four raw completions into the template evaluation and
    correct it. Undetermined categories default to NotAffected + Other and
    are flagged for priority review."""
    working = _copy_evaluation(template)
    category, _ = parse_category(strip_stop(draft.category_text))
    if category is None:
        working.vex_category = VexCategory.NOT_AFFECTED
        working.vex_justification = VexJustification.OTHER
        for flag in (FLAG_CATEGORY_UNDETERMINED, REVIEW_PRIORITY_FLAG):
            if flag not in working.flags:
                working.flags.append(flag)
    else:
        working.vex_category = category
        working.vex_justification = None
    working.internal_comment = strip_stop(draft.internal_text)
    working.customer_comment = strip_stop(draft.customer_text)
    working.environmental_vector = None
    return apply_rules(draft, working)


def draft_from_evaluation(evaluation: Evaluation) -> RawDraft:
    """Rebuild the raw-draft view of a stored evaluation, used when rules are
    re-applied after an expert correction."""
    from .promptgen import InstructionKind

    category_text, _ = gold_response(evaluation, InstructionKind.CATEGORY)
    vector = evaluation.environmental_vector
    return RawDraft(
        category_text=category_text,
        internal_text=evaluation.internal_comment,
        customer_text=evaluation.customer_comment,
        vector_text=describe_vector(vector) if vector else "",
    )
