"""Asset, notification, and evaluation store with component matching.

Records round-trip through JSONL (one record per line, field names matching
the dataclasses). Persistence is an append-only JSONL journal replayed on
open; concurrent writers are fenced by per-record optimistic versioning.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Iterable, Optional

from .cskg import Enrichment
from .cvss import CvssVector, parse_vector, serialize_vector
from .ingest import Severity

logger = logging.getLogger(__name__)


class UnknownReference(KeyError):
    """An evaluation points at an asset or notification that does not exist."""

    def __str__(self) -> str:
        # KeyError.__str__ repr-quotes the message; keep it plain for API details.
        return str(self.args[0]) if self.args else ""


class VersionConflict(RuntimeError):
    """Concurrent write detected: stored record version moved on."""


class DuplicateRecord(ValueError):
    """Asset uniqueness (organization, software_name, software_version) violated."""


class VexCategory(str, Enum):
    AFFECTED = "Affected"
    NOT_AFFECTED = "NotAffected"


class VexJustification(str, Enum):
    COMPONENT_NOT_PRESENT = "ComponentNotPresent"
    VULNERABLE_CODE_NOT_PRESENT = "VulnerableCodeNotPresent"
    VULNERABLE_CODE_NOT_IN_EXECUTE_PATH = "VulnerableCodeNotInExecutePath"
    VULNERABLE_CODE_CANNOT_BE_CONTROLLED = "VulnerableCodeCannotBeControlledByAdversary"
    INLINE_MITIGATIONS_ALREADY_EXIST = "InlineMitigationsAlreadyExist"
    OTHER = "Other"

    @property
    def display(self) -> str:
        return JUSTIFICATION_DISPLAY[self]


JUSTIFICATION_DISPLAY = {
    VexJustification.COMPONENT_NOT_PRESENT: "Component not present",
    VexJustification.VULNERABLE_CODE_NOT_PRESENT: "Vulnerable code not present",
    VexJustification.VULNERABLE_CODE_NOT_IN_EXECUTE_PATH: "Vulnerable code not in execute path",
    VexJustification.VULNERABLE_CODE_CANNOT_BE_CONTROLLED: (
        "Vulnerable code cannot be controlled by adversary"
    ),
    VexJustification.INLINE_MITIGATIONS_ALREADY_EXIST: "Inline mitigations already exist",
    VexJustification.OTHER: "Other",
}


class Provenance(str, Enum):
    AI_DRAFT = "AiDraft"
    EXPERT_ACCEPTED = "ExpertAccepted"
    EXPERT_CORRECTED = "ExpertCorrected"


_WS_RE = re.compile(r"\s+")


def _normalize(text: str) -> str:
    return _WS_RE.sub(" ", text).strip().casefold()


@dataclass(frozen=True)
class ComponentRef:
    """A third-party component; version may carry a wildcard suffix "x"."""

    name: str
    vendor: str
    version: str

    def render(self) -> str:
        return f"{self.name} - {self.vendor} - {self.version}"

    @classmethod
    def from_text(cls, text: str) -> "ComponentRef":
        parts = text.rsplit(" - ", 2)
        if len(parts) != 3 or not parts[0].strip() or not parts[1].strip():
            raise ValueError(f"component text must be 'name - vendor - version': {text!r}")
        return cls(name=parts[0].strip(), vendor=parts[1].strip(), version=parts[2].strip())

    def key(self) -> tuple[str, str]:
        return (_normalize(self.name), _normalize(self.vendor))

    def matches(self, pattern: "ComponentRef") -> bool:
        """True when (name, vendor) agree and version satisfies the pattern."""
        if self.key() != pattern.key():
            return False
        return _version_matches(_normalize(self.version), _normalize(pattern.version))


def _version_matches(version: str, pattern: str) -> bool:
    # "15.7.x" matches any version with prefix "15.7." (including "15.7.x").
    if pattern.endswith(".x"):
        return version.startswith(pattern[:-1])
    return version == pattern


@dataclass
class Asset:
    id: str
    organization: str
    software_name: str
    software_version: str
    product_label: str
    components: list[ComponentRef] = field(default_factory=list)
    created_at: str = ""
    updated_at: str = ""
    version: int = 0


@dataclass
class Notification:
    id: str
    description: str
    cve_ids: list[str] = field(default_factory=list)
    affected_components: list[ComponentRef] = field(default_factory=list)
    base_temporal_vector: Optional[CvssVector] = None
    cvss_version: str = ""
    enrichment: Optional[Enrichment] = None
    created_at: str = ""
    updated_at: str = ""
    version: int = 0


@dataclass
class Evaluation:
    id: str
    asset_id: str
    notification_id: str
    vex_category: VexCategory = VexCategory.NOT_AFFECTED
    vex_justification: Optional[VexJustification] = None
    internal_comment: str = ""
    customer_comment: str = ""
    environmental_vector: Optional[CvssVector] = None
    provenance: Provenance = Provenance.AI_DRAFT
    flags: list[str] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    reviewer: Optional[str] = None
    review_duration_seconds: Optional[float] = None
    created_at: str = ""
    updated_at: str = ""
    version: int = 0


def check_evaluation_invariants(evaluation: Evaluation) -> list[str]:
    """Violated-invariant messages; empty when the record is consistent."""
    problems = []
    if evaluation.vex_category is VexCategory.AFFECTED and evaluation.vex_justification is not None:
        problems.append("Affected evaluation must have justification None")
    if (
        evaluation.vex_category is VexCategory.NOT_AFFECTED
        and evaluation.environmental_vector is not None
    ):
        problems.append("NotAffected evaluation must not carry an environmental vector")
    return problems


def match_components(asset: Asset, notification: Notification) -> list[ComponentRef]:
    """Asset components matched by any notification component, inventory order."""
    return [
        component
        for component in asset.components
        if any(component.matches(pattern) for pattern in notification.affected_components)
    ]


def notification_from_cve(
    cve, enrichment: Optional[Enrichment] = None, notification_id: Optional[str] = None
) -> Notification:
    """Build a Notification from an ingested CVE record.

    Affected entries that parse as "name - vendor - version" become component
    patterns; other version strings are skipped (they only feed pretraining
    documents). v2 vectors are stored as version text but never parsed.
    """
    components = []
    for text in cve.affected_versions:
        try:
            components.append(ComponentRef.from_text(text))
        except ValueError:
            continue
    vector = None
    if cve.cvss_vector and cve.cvss_version in ("3.0", "3.1"):
        try:
            vector = parse_vector(cve.cvss_vector)
        except ValueError:
            logger.warning("%s: unparsable vector %r", cve.id, cve.cvss_vector)
    return Notification(
        id=notification_id or cve.id,
        description=cve.description,
        cve_ids=[cve.id],
        affected_components=components,
        base_temporal_vector=vector,
        cvss_version=cve.cvss_version or "",
        enrichment=enrichment,
    )


# ---------------------------------------------------------------------------
# JSONL codecs


def component_to_dict(component: ComponentRef) -> dict:
    return {"name": component.name, "vendor": component.vendor, "version": component.version}


def component_from_dict(data: dict) -> ComponentRef:
    return ComponentRef(
        name=data["name"], vendor=data["vendor"], version=str(data.get("version", ""))
    )


def enrichment_to_dict(enrichment: Enrichment) -> dict:
    return {
        "prerequisites": list(enrichment.prerequisites),
        "typical_severity": enrichment.typical_severity.value,
        "mitigations": list(enrichment.mitigations),
        "capec_ids": list(enrichment.contributing_capec_ids),
    }


def enrichment_from_dict(data: dict) -> Enrichment:
    return Enrichment(
        prerequisites=list(data.get("prerequisites") or []),
        typical_severity=Severity(data.get("typical_severity") or "Unknown"),
        mitigations=list(data.get("mitigations") or []),
        contributing_capec_ids=list(data.get("capec_ids") or []),
    )


def asset_to_dict(asset: Asset) -> dict:
    return {
        "id": asset.id,
        "organization": asset.organization,
        "software_name": asset.software_name,
        "software_version": asset.software_version,
        "product_label": asset.product_label,
        "components": [component_to_dict(c) for c in asset.components],
        "created_at": asset.created_at,
        "updated_at": asset.updated_at,
        "version": asset.version,
    }


def asset_from_dict(data: dict) -> Asset:
    return Asset(
        id=str(data["id"]),
        organization=data.get("organization", ""),
        software_name=data.get("software_name", ""),
        software_version=data.get("software_version", ""),
        product_label=data.get("product_label", ""),
        components=[component_from_dict(c) for c in data.get("components") or []],
        created_at=data.get("created_at", ""),
        updated_at=data.get("updated_at", ""),
        version=int(data.get("version", 0)),
    )


def notification_to_dict(notification: Notification) -> dict:
    vector = notification.base_temporal_vector
    return {
        "id": notification.id,
        "description": notification.description,
        "cve_ids": list(notification.cve_ids),
        "affected_components": [component_to_dict(c) for c in notification.affected_components],
        "base_temporal_vector": serialize_vector(vector) if vector else None,
        "cvss_version": notification.cvss_version,
        "enrichment": enrichment_to_dict(notification.enrichment)
        if notification.enrichment
        else None,
        "created_at": notification.created_at,
        "updated_at": notification.updated_at,
        "version": notification.version,
    }


def notification_from_dict(data: dict) -> Notification:
    vector_text = data.get("base_temporal_vector")
    enrichment = data.get("enrichment")
    return Notification(
        id=str(data["id"]),
        description=data.get("description", ""),
        cve_ids=[str(c) for c in data.get("cve_ids") or []],
        affected_components=[component_from_dict(c) for c in data.get("affected_components") or []],
        base_temporal_vector=parse_vector(vector_text) if vector_text else None,
        cvss_version=data.get("cvss_version", ""),
        enrichment=enrichment_from_dict(enrichment) if enrichment else None,
        created_at=data.get("created_at", ""),
        updated_at=data.get("updated_at", ""),
        version=int(data.get("version", 0)),
    )


def evaluation_to_dict(evaluation: Evaluation) -> dict:
    vector = evaluation.environmental_vector
    return {
        "id": evaluation.id,
        "asset_id": evaluation.asset_id,
        "notification_id": evaluation.notification_id,
        "vex_category": evaluation.vex_category.value,
        "vex_justification": evaluation.vex_justification.value
        if evaluation.vex_justification
        else None,
        "internal_comment": evaluation.internal_comment,
        "customer_comment": evaluation.customer_comment,
        "environmental_vector": serialize_vector(vector) if vector else None,
        "provenance": evaluation.provenance.value,
        "flags": list(evaluation.flags),
        "history": [dict(h) for h in evaluation.history],
        "reviewer": evaluation.reviewer,
        "review_duration_seconds": evaluation.review_duration_seconds,
        "created_at": evaluation.created_at,
        "updated_at": evaluation.updated_at,
        "version": evaluation.version,
    }


def evaluation_from_dict(data: dict) -> Evaluation:
    vector_text = data.get("environmental_vector")
    justification = data.get("vex_justification")
    return Evaluation(
        id=str(data["id"]),
        asset_id=str(data["asset_id"]),
        notification_id=str(data["notification_id"]),
        vex_category=VexCategory(data.get("vex_category", "NotAffected")),
        vex_justification=VexJustification(justification) if justification else None,
        internal_comment=data.get("internal_comment", ""),
        customer_comment=data.get("customer_comment", ""),
        # Stored vectors may be environmental fragments; completeness is not
        # required on read-back.
        environmental_vector=parse_vector(vector_text, require_base=False)
        if vector_text
        else None,
        provenance=Provenance(data.get("provenance", "AiDraft")),
        flags=[str(f) for f in data.get("flags") or []],
        history=[dict(h) for h in data.get("history") or []],
        reviewer=data.get("reviewer"),
        review_duration_seconds=data.get("review_duration_seconds"),
        created_at=data.get("created_at", ""),
        updated_at=data.get("updated_at", ""),
        version=int(data.get("version", 0)),
    )


# ---------------------------------------------------------------------------
# Store


class Store:
    """In-memory store over the three record kinds with secondary indexes.

    When journal_path is given, every write is appended to a JSONL journal
    that is replayed on open, so close/reopen preserves all records.
    """

    def __init__(
        self,
        journal_path: Optional[str] = None,
        clock: Optional[Callable[[], datetime]] = None,
    ):
        self._lock = threading.RLock()
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._journal_path = journal_path
        self._journal = None
        self.assets: dict[str, Asset] = {}
        self.notifications: dict[str, Notification] = {}
        self.evaluations: dict[str, Evaluation] = {}
        self._asset_uniq: dict[tuple[str, str, str], str] = {}
        self._assets_by_component: dict[tuple[str, str], set[str]] = {}
        self._notifs_by_component: dict[tuple[str, str], set[str]] = {}
        self._notifs_by_cve: dict[str, set[str]] = {}
        self._evals_by_pair: dict[tuple[str, str], str] = {}
        self._evals_by_provenance: dict[Provenance, set[str]] = {p: set() for p in Provenance}
        self._id_counter = 0
        if journal_path and os.path.exists(journal_path):
            self._replay(journal_path)
        if journal_path:
            self._journal = open(journal_path, "a", encoding="utf-8")

    def close(self) -> None:
        with self._lock:
            if self._journal:
                self._journal.close()
                self._journal = None

    def now(self) -> str:
        return self._clock().isoformat()

    def new_id(self, prefix: str) -> str:
        with self._lock:
            self._id_counter += 1
            return f"{prefix}-{self._id_counter:06d}"

    # -- journal ------------------------------------------------------------

    def _replay(self, path: str) -> None:
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                kind, record = entry["kind"], entry["record"]
                if kind == "asset":
                    self._index_asset(asset_from_dict(record))
                elif kind == "notification":
                    self._index_notification(notification_from_dict(record))
                elif kind == "evaluation":
                    self._index_evaluation(evaluation_from_dict(record))

    def _append_journal(self, kind: str, record: dict) -> None:
        if self._journal:
            self._journal.write(json.dumps({"kind": kind, "record": record}) + "\n")
            self._journal.flush()

    # -- indexing -----------------------------------------------------------

    def _index_asset(self, asset: Asset) -> None:
        previous = self.assets.get(asset.id)
        if previous:
            self._asset_uniq.pop(
                (previous.organization, previous.software_name, previous.software_version), None
            )
            for component in previous.components:
                self._assets_by_component.get(component.key(), set()).discard(asset.id)
        self.assets[asset.id] = asset
        self._asset_uniq[(asset.organization, asset.software_name, asset.software_version)] = (
            asset.id
        )
        for component in asset.components:
            self._assets_by_component.setdefault(component.key(), set()).add(asset.id)

    def _index_notification(self, notification: Notification) -> None:
        previous = self.notifications.get(notification.id)
        if previous:
            for component in previous.affected_components:
                self._notifs_by_component.get(component.key(), set()).discard(notification.id)
            for cve_id in previous.cve_ids:
                self._notifs_by_cve.get(cve_id, set()).discard(notification.id)
        self.notifications[notification.id] = notification
        for component in notification.affected_components:
            self._notifs_by_component.setdefault(component.key(), set()).add(notification.id)
        for cve_id in notification.cve_ids:
            self._notifs_by_cve.setdefault(cve_id, set()).add(notification.id)

    def _index_evaluation(self, evaluation: Evaluation) -> None:
        previous = self.evaluations.get(evaluation.id)
        if previous:
            self._evals_by_provenance[previous.provenance].discard(evaluation.id)
        self.evaluations[evaluation.id] = evaluation
        self._evals_by_pair[(evaluation.asset_id, evaluation.notification_id)] = evaluation.id
        self._evals_by_provenance[evaluation.provenance].add(evaluation.id)

    # -- CRUD ---------------------------------------------------------------

    def _bump(self, record, existing) -> None:
        now = self.now()
        if existing is None:
            if record.version not in (0, 1):
                raise VersionConflict(f"{record.id}: record is new but carries version {record.version}")
            record.version = 1
            record.created_at = record.created_at or now
        else:
            if record.version != existing.version:
                raise VersionConflict(
                    f"{record.id}: expected version {existing.version}, got {record.version}"
                )
            record.version = existing.version + 1
            record.created_at = existing.created_at
        record.updated_at = now

    def upsert_asset(self, asset: Asset) -> Asset:
        with self._lock:
            uniq_key = (asset.organization, asset.software_name, asset.software_version)
            holder = self._asset_uniq.get(uniq_key)
            if holder is not None and holder != asset.id:
                raise DuplicateRecord(
                    f"asset {holder} already holds {uniq_key!r}"
                )
            self._bump(asset, self.assets.get(asset.id))
            self._index_asset(asset)
            self._append_journal("asset", asset_to_dict(asset))
            return asset

    def upsert_notification(self, notification: Notification) -> Notification:
        with self._lock:
            self._bump(notification, self.notifications.get(notification.id))
            self._index_notification(notification)
            self._append_journal("notification", notification_to_dict(notification))
            return notification

    def upsert_evaluation(self, evaluation: Evaluation) -> Evaluation:
        with self._lock:
            if evaluation.asset_id not in self.assets:
                raise UnknownReference(f"unknown asset {evaluation.asset_id}")
            if evaluation.notification_id not in self.notifications:
                raise UnknownReference(f"unknown notification {evaluation.notification_id}")
            self._bump(evaluation, self.evaluations.get(evaluation.id))
            self._index_evaluation(evaluation)
            self._append_journal("evaluation", evaluation_to_dict(evaluation))
            return evaluation

    def get_asset(self, asset_id: str) -> Asset:
        try:
            return self.assets[asset_id]
        except KeyError:
            raise UnknownReference(f"unknown asset {asset_id}") from None

    def get_notification(self, notification_id: str) -> Notification:
        try:
            return self.notifications[notification_id]
        except KeyError:
            raise UnknownReference(f"unknown notification {notification_id}") from None

    def get_evaluation(self, evaluation_id: str) -> Evaluation:
        try:
            return self.evaluations[evaluation_id]
        except KeyError:
            raise UnknownReference(f"unknown evaluation {evaluation_id}") from None

    def evaluation_for_pair(self, asset_id: str, notification_id: str) -> Optional[Evaluation]:
        eval_id = self._evals_by_pair.get((asset_id, notification_id))
        return self.evaluations.get(eval_id) if eval_id else None

    def list_evaluations(
        self,
        provenance: Optional[Provenance] = None,
        category: Optional[VexCategory] = None,
        organization: Optional[str] = None,
        notification_id: Optional[str] = None,
        product: Optional[str] = None,
    ) -> list[Evaluation]:
        if provenance is not None:
            candidates: Iterable[Evaluation] = (
                self.evaluations[eid] for eid in sorted(self._evals_by_provenance[provenance])
            )
        else:
            candidates = (self.evaluations[eid] for eid in sorted(self.evaluations))
        out = []
        for evaluation in candidates:
            if category is not None and evaluation.vex_category is not category:
                continue
            if notification_id is not None and evaluation.notification_id != notification_id:
                continue
            if organization is not None or product is not None:
                asset = self.assets.get(evaluation.asset_id)
                if asset is None:
                    continue
                if organization is not None and asset.organization != organization:
                    continue
                if product is not None and asset.product_label != product:
                    continue
            out.append(evaluation)
        return out

    # -- matching -----------------------------------------------------------

    def applicable_assets(self, notification: Notification) -> list[str]:
        """Asset ids with a non-empty component intersection, ordered by id.

        The component index narrows the candidate set; the result equals a
        full scan because match_components re-verifies every candidate.
        """
        candidates: set[str] = set()
        for pattern in notification.affected_components:
            candidates |= self._assets_by_component.get(pattern.key(), set())
        return sorted(
            asset_id
            for asset_id in candidates
            if match_components(self.assets[asset_id], notification)
        )

    def applicable_notifications(self, asset: Asset) -> list[str]:
        """Notification ids applicable to the asset, ordered by id."""
        candidates: set[str] = set()
        for component in asset.components:
            candidates |= self._notifs_by_component.get(component.key(), set())
        return sorted(
            notification_id
            for notification_id in candidates
            if match_components(asset, self.notifications[notification_id])
        )

    # -- bulk JSONL ---------------------------------------------------------

    def load_jsonl(self, kind: str, path: str) -> int:
        """Import records from a JSONL file; returns the record count."""
        loaders = {
            "assets": (asset_from_dict, self.upsert_asset),
            "notifications": (notification_from_dict, self.upsert_notification),
            "evaluations": (evaluation_from_dict, self.upsert_evaluation),
        }
        decode, upsert = loaders[kind]
        count = 0
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                record = decode(json.loads(line))
                existing = getattr(self, kind).get(record.id)
                if existing is not None:
                    record.version = existing.version
                upsert(record)
                count += 1
        return count

    def dump_jsonl(self, kind: str, path: str) -> int:
        encoders = {
            "assets": asset_to_dict,
            "notifications": notification_to_dict,
            "evaluations": evaluation_to_dict,
        }
        encode = encoders[kind]
        records = getattr(self, kind)
        with open(path, "w", encoding="utf-8") as handle:
            for record_id in sorted(records):
                handle.write(json.dumps(encode(records[record_id])) + "\n")
        return len(records)
