"""CVSS v3.1 / v3.0 vectors: parsing, scoring, and prose descriptions.

Scoring follows the FIRST specification formulas exactly, including the
version-specific round-up function and the v3.1 change to the modified
impact sub-score for Scope:Changed. "X" (Not Defined) is normalized to an
absent metric everywhere: canonical vectors and descriptions never carry it.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

SUPPORTED_VERSIONS = ("3.0", "3.1")

BASE_METRICS = ("AV", "AC", "PR", "UI", "S", "C", "I", "A")
TEMPORAL_METRICS = ("E", "RL", "RC")
ENVIRONMENTAL_METRICS = ("CR", "IR", "AR", "MAV", "MAC", "MPR", "MUI", "MS", "MC", "MI", "MA")
METRIC_ORDER = BASE_METRICS + TEMPORAL_METRICS + ENVIRONMENTAL_METRICS

METRIC_VALUES: dict[str, tuple[str, ...]] = {
    "AV": ("N", "A", "L", "P"),
    "AC": ("L", "H"),
    "PR": ("N", "L", "H"),
    "UI": ("N", "R"),
    "S": ("U", "C"),
    "C": ("N", "L", "H"),
    "I": ("N", "L", "H"),
    "A": ("N", "L", "H"),
    "E": ("X", "U", "P", "F", "H"),
    "RL": ("X", "O", "T", "W", "U"),
    "RC": ("X", "U", "R", "C"),
    "CR": ("X", "L", "M", "H"),
    "IR": ("X", "L", "M", "H"),
    "AR": ("X", "L", "M", "H"),
    "MAV": ("X", "N", "A", "L", "P"),
    "MAC": ("X", "L", "H"),
    "MPR": ("X", "N", "L", "H"),
    "MUI": ("X", "N", "R"),
    "MS": ("X", "U", "C"),
    "MC": ("X", "N", "L", "H"),
    "MI": ("X", "N", "L", "H"),
    "MA": ("X", "N", "L", "H"),
}

METRIC_NAMES = {
    "AV": "Attack Vector",
    "AC": "Attack Complexity",
    "PR": "Privileges Required",
    "UI": "User Interaction",
    "S": "Scope",
    "C": "Confidentiality",
    "I": "Integrity",
    "A": "Availability",
    "E": "Exploit Code Maturity",
    "RL": "Remediation Level",
    "RC": "Report Confidence",
    "CR": "Confidentiality Requirement",
    "IR": "Integrity Requirement",
    "AR": "Availability Requirement",
    "MAV": "Modified Attack Vector",
    "MAC": "Modified Attack Complexity",
    "MPR": "Modified Privileges Required",
    "MUI": "Modified User Interaction",
    "MS": "Modified Scope",
    "MC": "Modified Confidentiality",
    "MI": "Modified Integrity",
    "MA": "Modified Availability",
}

_BASE_VALUE_NAMES: dict[str, dict[str, str]] = {
    "AV": {"N": "Network", "A": "Adjacent", "L": "Local", "P": "Physical"},
    "AC": {"L": "Low", "H": "High"},
    "PR": {"N": "None", "L": "Low", "H": "High"},
    "UI": {"N": "None", "R": "Required"},
    "S": {"U": "Unchanged", "C": "Changed"},
    "C": {"N": "None", "L": "Low", "H": "High"},
    "I": {"N": "None", "L": "Low", "H": "High"},
    "A": {"N": "None", "L": "Low", "H": "High"},
}

VALUE_NAMES: dict[str, dict[str, str]] = {
    **_BASE_VALUE_NAMES,
    "E": {"U": "Unproven", "P": "Proof-of-Concept", "F": "Functional", "H": "High"},
    "RL": {"O": "Official Fix", "T": "Temporary Fix", "W": "Workaround", "U": "Unavailable"},
    "RC": {"U": "Unknown", "R": "Reasonable", "C": "Confirmed"},
    "CR": {"L": "Low", "M": "Medium", "H": "High"},
    "IR": {"L": "Low", "M": "Medium", "H": "High"},
    "AR": {"L": "Low", "M": "Medium", "H": "High"},
    **{f"M{m}": dict(values) for m, values in _BASE_VALUE_NAMES.items()},
}

_WEIGHT_AV = {"N": 0.85, "A": 0.62, "L": 0.55, "P": 0.2}
_WEIGHT_AC = {"L": 0.77, "H": 0.44}
# PR weight depends on the (modified) scope in effect.
_WEIGHT_PR = {
    "U": {"N": 0.85, "L": 0.62, "H": 0.27},
    "C": {"N": 0.85, "L": 0.68, "H": 0.5},
}
_WEIGHT_UI = {"N": 0.85, "R": 0.62}
_WEIGHT_CIA = {"N": 0.0, "L": 0.22, "H": 0.56}
_WEIGHT_E = {"U": 0.91, "P": 0.94, "F": 0.97, "H": 1.0}
_WEIGHT_RL = {"O": 0.95, "T": 0.96, "W": 0.97, "U": 1.0}
_WEIGHT_RC = {"U": 0.92, "R": 0.96, "C": 1.0}
_WEIGHT_REQ = {"L": 0.5, "M": 1.0, "H": 1.5}


class MalformedVector(ValueError):
    """Vector text violates the grammar; message names the offending token."""


class UnparsableDescription(ValueError):
    """Description contains sentences outside the fixed grammar."""

    def __init__(self, message: str, unknown_sentences: list[str] | None = None):
        super().__init__(message)
        self.unknown_sentences = unknown_sentences or []


class MissingPart(ValueError):
    """A requested vector part has no metrics present."""


@dataclass
class CvssVector:
    """A vector or vector fragment: version plus canonically ordered metrics.

    Construction normalizes metric order, drops X values, and rejects unknown
    metrics or values. Fragments (e.g. environmental metrics alone, as emitted
    by describe_to_vector) are legal; parse_vector and score_vector enforce
    base completeness where the full grammar demands it.
    """

    version: str
    metrics: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.version not in SUPPORTED_VERSIONS:
            raise MalformedVector(f"unsupported CVSS version {self.version!r}")
        unknown = set(self.metrics) - set(METRIC_ORDER)
        if unknown:
            raise MalformedVector(f"unknown metric {sorted(unknown)[0]}")
        normalized: dict[str, str] = {}
        for metric in METRIC_ORDER:
            if metric not in self.metrics:
                continue
            value = self.metrics[metric]
            if value not in METRIC_VALUES[metric]:
                raise MalformedVector(f"unknown value {metric}:{value}")
            if value != "X":
                normalized[metric] = value
        self.metrics = normalized

    def get(self, metric: str) -> Optional[str]:
        return self.metrics.get(metric)

    @property
    def is_complete(self) -> bool:
        return all(m in self.metrics for m in BASE_METRICS)

    @property
    def has_temporal(self) -> bool:
        return any(m in self.metrics for m in TEMPORAL_METRICS)

    @property
    def has_environmental(self) -> bool:
        return any(m in self.metrics for m in ENVIRONMENTAL_METRICS)


@dataclass(frozen=True)
class CvssScores:
    version: str
    base: float
    impact: float
    exploitability: float
    temporal: Optional[float] = None
    environmental: Optional[float] = None

    @property
    def severity(self) -> str:
        return severity_rating(self.base)


def severity_rating(score: float) -> str:
    """Qualitative rating for a 0.0..10.0 score."""
    if score <= 0.0:
        return "None"
    if score <= 3.9:
        return "Low"
    if score <= 6.9:
        return "Medium"
    if score <= 8.9:
        return "High"
    return "Critical"


def parse_vector(text: str, require_base: bool = True) -> CvssVector:
    """Parse "CVSS:3.x/..." vector text; MalformedVector names the bad token.

    require_base=False admits stored fragments (internal round-trips only).
    """
    if not isinstance(text, str) or not text.startswith("CVSS:"):
        raise MalformedVector("missing CVSS version prefix")
    tokens = text.split("/")
    version = tokens[0][len("CVSS:"):]
    if version not in SUPPORTED_VERSIONS:
        raise MalformedVector(f"unsupported CVSS version {version!r}")
    metrics: dict[str, str] = {}
    for token in tokens[1:]:
        key, sep, value = token.partition(":")
        if not sep or not key or not value:
            raise MalformedVector(f"malformed token {token!r}")
        if key not in METRIC_VALUES:
            raise MalformedVector(f"unknown metric {token!r}")
        if value not in METRIC_VALUES[key]:
            raise MalformedVector(f"unknown value {token!r}")
        if key in metrics:
            raise MalformedVector(f"duplicate metric {token!r}")
        metrics[key] = value
    vector = CvssVector(version=version, metrics=metrics)
    if require_base and not vector.is_complete:
        missing = [m for m in BASE_METRICS if m not in vector.metrics]
        raise MalformedVector(f"missing mandatory metric {'/'.join(missing)}")
    return vector


def serialize_vector(vector: CvssVector) -> str:
    """Canonical vector text: fixed metric order, X omitted."""
    parts = [f"CVSS:{vector.version}"]
    parts.extend(f"{m}:{vector.metrics[m]}" for m in METRIC_ORDER if m in vector.metrics)
    return "/".join(parts)


_PART_METRICS = {
    "base": BASE_METRICS,
    "temporal": TEMPORAL_METRICS,
    "environmental": ENVIRONMENTAL_METRICS,
}


def describe_vector(vector: CvssVector, parts: Optional[set[str]] = None) -> str:
    """Render metrics as "<Name> is <Value>." sentences in canonical order.

    parts selects among {"base", "temporal", "environmental"}; None means
    every part that has metrics present. Requesting a part with no present
    metrics raises MissingPart.
    """
    if parts is None:
        selected = set(_PART_METRICS)
    else:
        unknown = set(parts) - set(_PART_METRICS)
        if unknown:
            raise MissingPart(f"unknown part {sorted(unknown)[0]!r}")
        selected = set(parts)
        for part in sorted(selected):
            if not any(m in vector.metrics for m in _PART_METRICS[part]):
                raise MissingPart(f"vector has no {part} metrics")
    wanted = [m for part in _PART_METRICS if part in selected for m in _PART_METRICS[part]]
    sentences = [
        f"{METRIC_NAMES[m]} is {VALUE_NAMES[m][vector.metrics[m]]}."
        for m in METRIC_ORDER
        if m in vector.metrics and m in wanted
    ]
    return " ".join(sentences)


def _sentence_lookup() -> dict[str, tuple[str, str]]:
    table: dict[str, tuple[str, str]] = {}
    for metric in METRIC_ORDER:
        for value, value_name in VALUE_NAMES[metric].items():
            sentence = f"{METRIC_NAMES[metric]} is {value_name}".lower()
            table[sentence] = (metric, value)
    return table


_SENTENCES = _sentence_lookup()


def describe_to_vector(text: str, version: str = "3.1") -> CvssVector:
    """Inverse of describe_vector; the result may be a fragment.

    Tolerates surrounding whitespace and a missing final period; raises
    UnparsableDescription listing every unrecognized sentence.
    """
    metrics: dict[str, str] = {}
    unknown: list[str] = []
    for chunk in text.split("."):
        sentence = re.sub(r"\s+", " ", chunk).strip()
        if not sentence:
            continue
        entry = _SENTENCES.get(sentence.lower())
        if entry is None:
            unknown.append(sentence)
            continue
        metric, value = entry
        if metric in metrics:
            raise UnparsableDescription(f"duplicate metric sentence for {metric}", [sentence])
        metrics[metric] = value
    if unknown:
        raise UnparsableDescription(
            "unrecognized sentences: " + "; ".join(repr(s) for s in unknown), unknown
        )
    return CvssVector(version=version, metrics=metrics)


def _roundup(value: float, version: str) -> float:
    if version == "3.0":
        return math.ceil(value * 10) / 10
    # v3.1 spec Appendix A: integer arithmetic to dodge float artifacts.
    scaled = int(math.floor(value * 100000 + 0.5))
    if scaled % 10000 == 0:
        return scaled / 100000
    return (math.floor(scaled / 10000) + 1) / 10


def score_vector(vector: CvssVector) -> CvssScores:
    """Base, temporal, and environmental scores per the FIRST formulas.

    Temporal is None when no temporal metric is present; environmental is
    None when no environmental metric is present.
    """
    if not vector.is_complete:
        raise MalformedVector("cannot score a vector fragment missing base metrics")
    m = vector.metrics
    version = vector.version
    scope_changed = m["S"] == "C"

    iss = 1 - (1 - _WEIGHT_CIA[m["C"]]) * (1 - _WEIGHT_CIA[m["I"]]) * (1 - _WEIGHT_CIA[m["A"]])
    if scope_changed:
        impact = 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02) ** 15
    else:
        impact = 6.42 * iss
    exploitability = (
        8.22
        * _WEIGHT_AV[m["AV"]]
        * _WEIGHT_AC[m["AC"]]
        * _WEIGHT_PR[m["S"]][m["PR"]]
        * _WEIGHT_UI[m["UI"]]
    )
    if impact <= 0:
        base = 0.0
    elif scope_changed:
        base = _roundup(min(1.08 * (impact + exploitability), 10), version)
    else:
        base = _roundup(min(impact + exploitability, 10), version)

    e_weight = _WEIGHT_E.get(m.get("E", ""), 1.0)
    rl_weight = _WEIGHT_RL.get(m.get("RL", ""), 1.0)
    rc_weight = _WEIGHT_RC.get(m.get("RC", ""), 1.0)
    temporal = None
    if vector.has_temporal:
        temporal = _roundup(base * e_weight * rl_weight * rc_weight, version)

    environmental = None
    if vector.has_environmental:
        environmental = _environmental_score(
            vector, e_weight * rl_weight * rc_weight
        )

    return CvssScores(
        version=version,
        base=base,
        impact=impact,
        exploitability=exploitability,
        temporal=temporal,
        environmental=environmental,
    )


def _environmental_score(vector: CvssVector, temporal_product: float) -> float:
    m = vector.metrics
    version = vector.version

    def effective(modified: str, base_metric: str) -> str:
        return m.get(modified) or m[base_metric]

    ms = effective("MS", "S")
    scope_changed = ms == "C"
    mc = _WEIGHT_CIA[effective("MC", "C")]
    mi = _WEIGHT_CIA[effective("MI", "I")]
    ma = _WEIGHT_CIA[effective("MA", "A")]
    cr = _WEIGHT_REQ.get(m.get("CR", ""), 1.0)
    ir = _WEIGHT_REQ.get(m.get("IR", ""), 1.0)
    ar = _WEIGHT_REQ.get(m.get("AR", ""), 1.0)

    miss = min(1 - (1 - mc * cr) * (1 - mi * ir) * (1 - ma * ar), 0.915)
    if scope_changed:
        if version == "3.1":
            modified_impact = 7.52 * (miss - 0.029) - 3.25 * (miss * 0.9731 - 0.02) ** 13
        else:
            modified_impact = 7.52 * (miss - 0.029) - 3.25 * (miss - 0.02) ** 15
    else:
        modified_impact = 6.42 * miss

    modified_exploitability = (
        8.22
        * _WEIGHT_AV[effective("MAV", "AV")]
        * _WEIGHT_AC[effective("MAC", "AC")]
        * _WEIGHT_PR[ms][effective("MPR", "PR")]
        * _WEIGHT_UI[effective("MUI", "UI")]
    )

    if modified_impact <= 0:
        return 0.0
    if scope_changed:
        inner = _roundup(min(1.08 * (modified_impact + modified_exploitability), 10), version)
    else:
        inner = _roundup(min(modified_impact + modified_exploitability, 10), version)
    return _roundup(inner * temporal_product, version)
