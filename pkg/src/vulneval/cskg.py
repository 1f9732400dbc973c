"""Cybersecurity knowledge graph: CVE -> CWE -> CAPEC linkage and enrichment."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .ingest import CapecEntry, CveRecord, CweEntry, Severity

logger = logging.getLogger(__name__)

_CAPEC_NUM_RE = re.compile(r"^CAPEC-(\d+)$")


@dataclass
class Enrichment:
    """Attack-pattern context aggregated over every CAPEC reachable from a CVE."""

    prerequisites: list[str] = field(default_factory=list)
    typical_severity: Severity = Severity.UNKNOWN
    mitigations: list[str] = field(default_factory=list)
    contributing_capec_ids: list[str] = field(default_factory=list)


@dataclass
class Cskg:
    """Directed graph over CVE, CWE, and CAPEC nodes.

    Dangling references (a CVE naming an unloaded CWE, a CWE naming an
    unloaded CAPEC) are kept as diagnostics, never silently dropped edges.
    """

    cves: dict[str, CveRecord] = field(default_factory=dict)
    cwes: dict[str, CweEntry] = field(default_factory=dict)
    capecs: dict[str, CapecEntry] = field(default_factory=dict)
    dangling: list[str] = field(default_factory=list)

    @classmethod
    def build(
        cls,
        cves: list[CveRecord],
        cwes: list[CweEntry],
        capecs: list[CapecEntry],
    ) -> "Cskg":
        graph = cls(
            cves={c.id: c for c in cves},
            cwes={w.id: w for w in cwes},
            capecs={p.id: p for p in capecs},
        )
        for cve in graph.cves.values():
            for cwe_id in cve.cwe_ids:
                if cwe_id not in graph.cwes:
                    graph.dangling.append(f"{cve.id} -> {cwe_id}")
        for cwe in graph.cwes.values():
            for capec_id in cwe.related_capec_ids:
                if capec_id not in graph.capecs:
                    graph.dangling.append(f"{cwe.id} -> {capec_id}")
        if graph.dangling:
            logger.info("knowledge graph has %d dangling references", len(graph.dangling))
        return graph

    def capecs_for_cve(self, cve_id: str) -> list[CapecEntry]:
        """All CAPECs reachable via the CVE's CWEs, ascending by CAPEC number.

        Unknown CVE ids and dangling edges contribute nothing.
        """
        cve = self.cves.get(cve_id)
        if cve is None:
            return []
        found: dict[str, CapecEntry] = {}
        for cwe_id in cve.cwe_ids:
            cwe = self.cwes.get(cwe_id)
            if cwe is None:
                continue
            for capec_id in cwe.related_capec_ids:
                capec = self.capecs.get(capec_id)
                if capec is not None:
                    found[capec_id] = capec
        return [found[cid] for cid in sorted(found, key=_capec_number)]

    def enrich(self, cve_id: str) -> Enrichment:
        """Aggregate prerequisites, severity, and mitigations over reachable CAPECs.

        List items are deduplicated preserving first-seen order across CAPECs in
        ascending id order; severity is the maximum, with Unknown treated as
        absent unless it is the only value.
        """
        capecs = self.capecs_for_cve(cve_id)
        enrichment = Enrichment(contributing_capec_ids=[c.id for c in capecs])
        severities: list[Severity] = []
        for capec in capecs:
            _extend_unique(enrichment.prerequisites, capec.prerequisites)
            _extend_unique(enrichment.mitigations, capec.mitigations)
            severities.append(capec.typical_severity)
        known = [s for s in severities if s is not Severity.UNKNOWN]
        if known:
            enrichment.typical_severity = max(known, key=lambda s: s.rank)
        return enrichment

    def enrich_many(self, cve_ids: list[str]) -> Enrichment:
        """Aggregate enrichment over every CVE in a combined notification."""
        merged = Enrichment()
        severities: list[Severity] = []
        for cve_id in cve_ids:
            single = self.enrich(cve_id)
            _extend_unique(merged.prerequisites, single.prerequisites)
            _extend_unique(merged.mitigations, single.mitigations)
            _extend_unique(merged.contributing_capec_ids, single.contributing_capec_ids)
            severities.append(single.typical_severity)
        known = [s for s in severities if s is not Severity.UNKNOWN]
        if known:
            merged.typical_severity = max(known, key=lambda s: s.rank)
        return merged

    @property
    def cve_to_cwe(self) -> dict[str, set[str]]:
        return {cve.id: set(cve.cwe_ids) for cve in self.cves.values() if cve.cwe_ids}

    @property
    def cwe_to_capec(self) -> dict[str, set[str]]:
        return {
            cwe.id: set(cwe.related_capec_ids)
            for cwe in self.cwes.values()
            if cwe.related_capec_ids
        }

    @property
    def capec_index(self) -> dict[str, CapecEntry]:
        return self.capecs

    def to_json(self) -> str:
        """Adjacency export for debugging and the CLI."""
        doc = {
            "cve_to_cwe": {k: sorted(v) for k, v in self.cve_to_cwe.items()},
            "cwe_to_capec": {
                k: sorted(v, key=_capec_number) for k, v in self.cwe_to_capec.items()
            },
            "dangling": sorted(self.dangling),
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _capec_number(capec_id: str) -> int:
    match = _CAPEC_NUM_RE.match(capec_id)
    return int(match.group(1)) if match else 0


def _extend_unique(target: list[str], items: list[str]) -> None:
    for item in items:
        if item not in target:
            target.append(item)


def build_graph(
    cves: list[CveRecord], cwes: list[CweEntry], capecs: list[CapecEntry]
) -> Cskg:
    """Link the three catalogs into one graph."""
    return Cskg.build(cves, cwes, capecs)


def capecs_for_cve(graph: Cskg, cve_id: str) -> list[CapecEntry]:
    """Attack patterns reachable from one CVE."""
    return graph.capecs_for_cve(cve_id)


def enrich_notification(graph: Cskg, cve_ids: list[str]) -> Enrichment:
    """Aggregate enrichment over a notification's constituent CVEs."""
    return graph.enrich_many(cve_ids)
