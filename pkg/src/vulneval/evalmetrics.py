"""Scoring generated evaluations against expert gold data.

Comments score with ROUGE-L (token-level LCS F-measure, lowercase whitespace
tokenization, no stemming); category, justification, and vector score with
micro-F1, vectors decomposed into per-metric labels ("MAV=N", "CR=H") first.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .catalog import Evaluation
from .cvss import CvssVector

logger = logging.getLogger(__name__)


class LengthMismatch(ValueError):
    """Prediction and gold lists differ in length."""


class AlignmentFailure(ValueError):
    """Generated and gold sets do not pair up; orphan keys are attached."""

    def __init__(self, message: str, orphans: list):
        super().__init__(message)
        self.orphans = orphans


def rouge_l(candidate: str, reference: str) -> float:
    """LCS-based F-measure over lowercase whitespace tokens; 0 when either
    side is empty."""
    cand = candidate.lower().split()
    ref = reference.lower().split()
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def _lcs_length(a: list[str], b: list[str]) -> int:
    # One-row DP; b is the inner dimension.
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            if token == other:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[len(b)]


def micro_f1(predictions: Sequence[set], gold: Sequence[set]) -> float:
    """Global TP/FP/FN over all instances and labels; empty-everywhere
    agreement scores 1.0."""
    if len(predictions) != len(gold):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(gold)} gold")
    tp = fp = fn = 0
    for predicted, expected in zip(predictions, gold):
        predicted, expected = set(predicted), set(expected)
        tp += len(predicted & expected)
        fp += len(predicted - expected)
        fn += len(expected - predicted)
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return 1.0
    return 2 * tp / denominator


def vector_labels(vector: Optional[CvssVector]) -> set[str]:
    """Per-metric labels for micro-F1, e.g. {"MAV=N", "CR=H"}."""
    if vector is None:
        return set()
    return {f"{metric}={value}" for metric, value in vector.metrics.items()}


@dataclass
class MetricReport:
    vex_category_f1: float = 0.0
    vex_justification_f1: float = 0.0
    vector_f1: float = 0.0
    internal_rouge_l: float = 0.0
    customer_rouge_l: float = 0.0
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "vex_category_f1": self.vex_category_f1,
            "vex_justification_f1": self.vex_justification_f1,
            "vector_f1": self.vector_f1,
            "internal_rouge_l": self.internal_rouge_l,
            "customer_rouge_l": self.customer_rouge_l,
            "counts": dict(self.counts),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [
            ("VEXCategory (micro-F1)", self.vex_category_f1, self.counts.get("vex_category", 0)),
            (
                "VEXJustification (micro-F1)",
                self.vex_justification_f1,
                self.counts.get("vex_justification", 0),
            ),
            ("Vector (micro-F1)", self.vector_f1, self.counts.get("vector", 0)),
            ("InternalComment (ROUGE-L)", self.internal_rouge_l, self.counts.get("internal", 0)),
            ("CustomerComment (ROUGE-L)", self.customer_rouge_l, self.counts.get("customer", 0)),
        ]
        width = max(len(name) for name, _, _ in rows)
        lines = [f"{'Evaluation':<{width}}  Score   N"]
        for name, value, n in rows:
            lines.append(f"{name:<{width}}  {value:.3f}  {n:>4}")
        return "\n".join(lines)


def _pair_index(evaluations: Sequence[Evaluation], side: str) -> dict[tuple, Evaluation]:
    index: dict[tuple, Evaluation] = {}
    duplicates = []
    for evaluation in evaluations:
        key = (evaluation.asset_id, evaluation.notification_id)
        if key in index:
            duplicates.append(key)
        index[key] = evaluation
    if duplicates:
        raise AlignmentFailure(f"duplicate {side} pairs: {duplicates}", duplicates)
    return index


def evaluate_run(
    generated: Sequence[Evaluation], gold: Sequence[Evaluation]
) -> MetricReport:
    """Align by (asset_id, notification_id) and score every evaluation type.

    Comment ROUGE-L means run over pairs whose gold comment is non-empty;
    orphan pairs on either side raise AlignmentFailure rather than being
    dropped.
    """
    generated_index = _pair_index(generated, "generated")
    gold_index = _pair_index(gold, "gold")
    orphans = sorted(set(generated_index) ^ set(gold_index))
    if orphans:
        raise AlignmentFailure(f"unmatched pairs: {orphans}", orphans)

    keys = sorted(generated_index)
    category_pred, category_gold = [], []
    justification_pred, justification_gold = [], []
    vector_pred, vector_gold = [], []
    internal_scores, customer_scores = [], []
    for key in keys:
        pred, expected = generated_index[key], gold_index[key]
        category_pred.append({pred.vex_category.value})
        category_gold.append({expected.vex_category.value})
        justification_pred.append(
            {pred.vex_justification.value if pred.vex_justification else "None"}
        )
        justification_gold.append(
            {expected.vex_justification.value if expected.vex_justification else "None"}
        )
        vector_pred.append(vector_labels(pred.environmental_vector))
        vector_gold.append(vector_labels(expected.environmental_vector))
        if expected.internal_comment:
            internal_scores.append(rouge_l(pred.internal_comment, expected.internal_comment))
        if expected.customer_comment:
            customer_scores.append(rouge_l(pred.customer_comment, expected.customer_comment))

    def mean(values: list[float]) -> float:
        return sum(values) / len(values) if values else 0.0

    return MetricReport(
        vex_category_f1=micro_f1(category_pred, category_gold),
        vex_justification_f1=micro_f1(justification_pred, justification_gold),
        vector_f1=micro_f1(vector_pred, vector_gold),
        internal_rouge_l=mean(internal_scores),
        customer_rouge_l=mean(customer_scores),
        counts={
            "vex_category": len(keys),
            "vex_justification": len(keys),
            "vector": len(keys),
            "internal": len(internal_scores),
            "customer": len(customer_scores),
        },
    )
