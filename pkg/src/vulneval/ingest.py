"""Catalog ingestion: CVE/CWE/CAPEC feed parsing and shared text cleaning.

Supported feed formats:

1. Compact fixture JSON (the test-surface format)::

    {"cves": [{"id", "title", "description", "vector", "version",
               "cwe_ids": [...], "affected": [...], "unaffected": [...],
               "mitigations"}]}
    {"cwes": [{"id", "name", "description", "related_capec": [...]}]}
    {"capecs": [{"id", "name", "severity", "prerequisites": [...],
                 "mitigations": [...]}]}

2. NVD API 2.0 response (best-effort subset)::

    {"vulnerabilities": [{"cve": {"id": "CVE-...", ...}}, ...]}

3. MITRE CWE / CAPEC catalog XML (namespace-agnostic subset).

Unknown fields are ignored everywhere.
"""

from __future__ import annotations

import json
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

logger = logging.getLogger(__name__)

CVE_ID_RE = re.compile(r"^CVE-\d{4}-\d{4,}$")
CWE_ID_RE = re.compile(r"^CWE-\d+$")
CAPEC_ID_RE = re.compile(r"^CAPEC-\d+$")

# Scheme-prefixed tokens plus bare "www."-prefixed tokens.
_URL_RE = re.compile(r"\b[a-zA-Z][a-zA-Z0-9+.\-]*://\S+|\bwww\.\S+")
_WS_RE = re.compile(r"\s+")


class MalformedFeed(ValueError):
    """Feed bytes could not be parsed; message carries the position."""


class UnsupportedFormat(ValueError):
    """Feed format is not accepted by the invoked parser."""


class FeedFormat(str, Enum):
    NVD_JSON = "NvdJson"
    COMPACT_FIXTURE_JSON = "CompactFixtureJson"
    CWE_XML = "CweXml"
    CAPEC_XML = "CapecXml"
    COMPACT_CWE_JSON = "CompactCweJson"
    COMPACT_CAPEC_JSON = "CompactCapecJson"


class Severity(str, Enum):
    """CAPEC typical severity; Unknown stands in for absent or unmapped text."""

    VERY_LOW = "VeryLow"
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    VERY_HIGH = "VeryHigh"
    UNKNOWN = "Unknown"

    @classmethod
    def from_text(cls, text: str | None) -> "Severity":
        """Map catalog severity text onto the enum, case-insensitively."""
        if not text:
            return cls.UNKNOWN
        key = re.sub(r"[\s_\-]+", "", text).lower()
        return _SEVERITY_BY_KEY.get(key, cls.UNKNOWN)

    @property
    def rank(self) -> int:
        """Ordering VeryLow < Low < Medium < High < VeryHigh; Unknown ranks lowest."""
        return _SEVERITY_RANK[self]

    @property
    def display(self) -> str:
        """Human-readable form, e.g. "Very High"."""
        return re.sub(r"(?<=[a-z])(?=[A-Z])", " ", self.value)


_SEVERITY_BY_KEY = {s.value.lower(): s for s in Severity}
_SEVERITY_RANK = {
    Severity.UNKNOWN: 0,
    Severity.VERY_LOW: 1,
    Severity.LOW: 2,
    Severity.MEDIUM: 3,
    Severity.HIGH: 4,
    Severity.VERY_HIGH: 5,
}


@dataclass(frozen=True)
class RawFeed:
    """Opaque feed bytes with a declared (never sniffed) format."""

    data: bytes
    format: FeedFormat
    source_uri: Optional[str] = None


@dataclass
class CveRecord:
    id: str
    title: str = ""
    description: str = ""
    cvss_vector: Optional[str] = None
    cvss_version: Optional[str] = None
    cwe_ids: list[str] = field(default_factory=list)
    affected_versions: list[str] = field(default_factory=list)
    unaffected_versions: list[str] = field(default_factory=list)
    mitigations: Optional[str] = None


@dataclass
class CweEntry:
    id: str
    name: str = ""
    description: str = ""
    related_capec_ids: list[str] = field(default_factory=list)


@dataclass
class CapecEntry:
    id: str
    name: str = ""
    prerequisites: list[str] = field(default_factory=list)
    typical_severity: Severity = Severity.UNKNOWN
    mitigations: list[str] = field(default_factory=list)


@dataclass
class ParseResult:
    """Parsed records plus the count of items skipped for invariant violations."""

    records: list
    skipped: int = 0
    skip_reasons: list[str] = field(default_factory=list)

    def skip(self, reason: str) -> None:
        self.skipped += 1
        self.skip_reasons.append(reason)


def clean_text(raw: str | bytes) -> str:
    """Strip URLs and invalid UTF-8, collapse whitespace runs, trim.

    Total and idempotent on any input.
    """
    if isinstance(raw, bytes):
        text = raw.decode("utf-8", errors="ignore")
    else:
        # Scrub lone surrogates and other unencodable code points.
        text = raw.encode("utf-8", errors="ignore").decode("utf-8", errors="ignore")
    # Removal can expose a new URL token (e.g. "htt www.a p://b"); iterate to
    # a fixpoint so a second clean_text pass is a no-op.
    while True:
        stripped = _URL_RE.sub("", text)
        if stripped == text:
            break
        text = stripped
    return _WS_RE.sub(" ", text).strip()


def _load_json(feed: RawFeed):
    try:
        return json.loads(feed.data.decode("utf-8", errors="strict"))
    except UnicodeDecodeError as exc:
        raise MalformedFeed(f"feed is not UTF-8 at byte {exc.start}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFeed(
            f"invalid JSON at line {exc.lineno} column {exc.colno} (char {exc.pos})"
        ) from exc


def _load_xml(feed: RawFeed) -> ET.Element:
    try:
        return ET.fromstring(feed.data)
    except ET.ParseError as exc:
        line, col = exc.position
        raise MalformedFeed(f"invalid XML at line {line} column {col}") from exc


def _local_name(tag: str) -> str:
    return tag.split("}")[-1]


def _iter_named(root: ET.Element, name: str):
    for elem in root.iter():
        if _local_name(elem.tag) == name:
            yield elem


def _element_text(elem: ET.Element | None) -> str:
    if elem is None:
        return ""
    return "".join(elem.itertext())


def _find_named(elem: ET.Element, name: str) -> ET.Element | None:
    for child in elem.iter():
        if child is not elem and _local_name(child.tag) == name:
            return child
    return None


def _infer_cvss_version(vector: str | None, explicit: str | None) -> str | None:
    if explicit:
        return explicit
    if not vector:
        return None
    if vector.startswith("CVSS:3.1/"):
        return "3.1"
    if vector.startswith("CVSS:3.0/"):
        return "3.0"
    return "2.0"


def parse_cve_feed(feed: RawFeed) -> ParseResult:
    """Parse an NVD 2.0 or compact-fixture CVE feed into CveRecords.

    Descriptions pass through clean_text; items with a missing/invalid id or
    an empty cleaned description are skipped and counted.
    """
    if feed.format is FeedFormat.COMPACT_FIXTURE_JSON:
        items = _compact_items(feed, "cves")
        raw_records = [_cve_from_compact(item) for item in items]
    elif feed.format is FeedFormat.NVD_JSON:
        doc = _load_json(feed)
        if not isinstance(doc, dict) or not isinstance(doc.get("vulnerabilities"), list):
            raise MalformedFeed("NVD feed missing 'vulnerabilities' array")
        raw_records = [_cve_from_nvd(item) for item in doc["vulnerabilities"]]
    else:
        raise UnsupportedFormat(f"{feed.format.value} is not a CVE feed format")

    result = ParseResult(records=[])
    for record in raw_records:
        if not record.id:
            result.skip("item without id")
            continue
        if not CVE_ID_RE.match(record.id):
            result.skip(f"invalid CVE id {record.id!r}")
            continue
        if not record.description:
            result.skip(f"{record.id}: empty description after cleaning")
            continue
        result.records.append(record)
    if result.skipped:
        logger.info("CVE feed: %d parsed, %d skipped", len(result.records), result.skipped)
    return result


def _compact_items(feed: RawFeed, key: str) -> list:
    doc = _load_json(feed)
    if not isinstance(doc, dict) or not isinstance(doc.get(key), list):
        raise MalformedFeed(f"compact feed missing {key!r} array")
    return doc[key]


def _cve_from_compact(item: dict) -> CveRecord:
    vector = item.get("vector") or None
    mitigations = item.get("mitigations")
    return CveRecord(
        id=str(item.get("id") or ""),
        title=clean_text(item.get("title") or ""),
        description=clean_text(item.get("description") or ""),
        cvss_vector=vector,
        cvss_version=_infer_cvss_version(vector, item.get("version")),
        cwe_ids=[str(c) for c in item.get("cwe_ids") or []],
        affected_versions=[str(v) for v in item.get("affected") or []],
        unaffected_versions=[str(v) for v in item.get("unaffected") or []],
        mitigations=clean_text(mitigations) if mitigations else None,
    )


def _cve_from_nvd(item: dict) -> CveRecord:
    cve = item.get("cve") or {}
    description = ""
    for desc in cve.get("descriptions") or []:
        if desc.get("lang") == "en":
            description = desc.get("value") or ""
            break
    else:
        if cve.get("descriptions"):
            description = cve["descriptions"][0].get("value") or ""

    vector = None
    version = None
    metrics = cve.get("metrics") or {}
    for key in ("cvssMetricV31", "cvssMetricV30", "cvssMetricV2"):
        entries = metrics.get(key) or []
        if entries:
            data = entries[0].get("cvssData") or {}
            vector = data.get("vectorString")
            version = data.get("version")
            break

    cwe_ids: list[str] = []
    for weakness in cve.get("weaknesses") or []:
        for desc in weakness.get("description") or []:
            value = desc.get("value") or ""
            if CWE_ID_RE.match(value) and value not in cwe_ids:
                cwe_ids.append(value)

    return CveRecord(
        id=str(cve.get("id") or ""),
        title="",
        description=clean_text(description),
        cvss_vector=vector,
        cvss_version=_infer_cvss_version(vector, version),
        cwe_ids=cwe_ids,
    )


def parse_cwe_catalog(feed: RawFeed) -> ParseResult:
    """Parse a CWE catalog, capturing CAPEC cross-references."""
    if feed.format is FeedFormat.COMPACT_CWE_JSON:
        entries = [
            CweEntry(
                id=str(item.get("id") or ""),
                name=clean_text(item.get("name") or ""),
                description=clean_text(item.get("description") or ""),
                related_capec_ids=[str(c) for c in item.get("related_capec") or []],
            )
            for item in _compact_items(feed, "cwes")
        ]
    elif feed.format is FeedFormat.CWE_XML:
        root = _load_xml(feed)
        entries = []
        for weakness in _iter_named(root, "Weakness"):
            related = [
                f"CAPEC-{ref.get('CAPEC_ID')}"
                for ref in _iter_named(weakness, "Related_Attack_Pattern")
                if ref.get("CAPEC_ID")
            ]
            entries.append(
                CweEntry(
                    id=f"CWE-{weakness.get('ID')}" if weakness.get("ID") else "",
                    name=clean_text(weakness.get("Name") or ""),
                    description=clean_text(_element_text(_find_named(weakness, "Description"))),
                    related_capec_ids=related,
                )
            )
    else:
        raise UnsupportedFormat(f"{feed.format.value} is not a CWE catalog format")

    return _dedupe_by_id(entries, CWE_ID_RE, "CWE")


def parse_capec_catalog(feed: RawFeed) -> ParseResult:
    """Parse a CAPEC catalog; severity text maps onto the enum, unknown → Unknown."""
    if feed.format is FeedFormat.COMPACT_CAPEC_JSON:
        entries = [
            CapecEntry(
                id=str(item.get("id") or ""),
                name=clean_text(item.get("name") or ""),
                prerequisites=_clean_list(item.get("prerequisites") or []),
                typical_severity=Severity.from_text(item.get("severity")),
                mitigations=_clean_list(item.get("mitigations") or []),
            )
            for item in _compact_items(feed, "capecs")
        ]
    elif feed.format is FeedFormat.CAPEC_XML:
        root = _load_xml(feed)
        entries = []
        for pattern in _iter_named(root, "Attack_Pattern"):
            prereqs = [_element_text(p) for p in _iter_named(pattern, "Prerequisite")]
            mitigations = [_element_text(m) for m in _iter_named(pattern, "Mitigation")]
            entries.append(
                CapecEntry(
                    id=f"CAPEC-{pattern.get('ID')}" if pattern.get("ID") else "",
                    name=clean_text(pattern.get("Name") or ""),
                    prerequisites=_clean_list(prereqs),
                    typical_severity=Severity.from_text(
                        _element_text(_find_named(pattern, "Typical_Severity"))
                    ),
                    mitigations=_clean_list(mitigations),
                )
            )
    else:
        raise UnsupportedFormat(f"{feed.format.value} is not a CAPEC catalog format")

    return _dedupe_by_id(entries, CAPEC_ID_RE, "CAPEC")


def _clean_list(items: list) -> list[str]:
    cleaned = (clean_text(str(item)) for item in items)
    return [text for text in cleaned if text]


def _dedupe_by_id(entries: list, id_re: re.Pattern, kind: str) -> ParseResult:
    result = ParseResult(records=[])
    seen: set[str] = set()
    for entry in entries:
        if not entry.id:
            result.skip(f"{kind} entry without id")
            continue
        if not id_re.match(entry.id):
            result.skip(f"invalid {kind} id {entry.id!r}")
            continue
        if entry.id in seen:
            result.skip(f"duplicate {kind} id {entry.id}")
            continue
        seen.add(entry.id)
        result.records.append(entry)
    return result


def fetch_feed(path_or_url: str, fmt: FeedFormat) -> RawFeed:
    """Read feed bytes from a local path or an http(s) URL."""
    if path_or_url.startswith(("http://", "https://")):
        import requests

        response = requests.get(path_or_url, timeout=60)
        response.raise_for_status()
        return RawFeed(data=response.content, format=fmt, source_uri=path_or_url)
    with open(path_or_url, "rb") as handle:
        return RawFeed(data=handle.read(), format=fmt, source_uri=path_or_url)
