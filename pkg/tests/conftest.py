"""Shared fixtures: parsed catalogs, the worked example from the product
documentation set, and synthetic stores for end-to-end runs."""

from __future__ import annotations

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from vulneval.catalog import Asset, ComponentRef, Notification, Store
from vulneval.cskg import Cskg
from vulneval.cvss import parse_vector
from vulneval.ingest import (
    FeedFormat,
    RawFeed,
    parse_capec_catalog,
    parse_cve_feed,
    parse_cwe_catalog,
)

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
GOLDEN = os.path.join(os.path.dirname(__file__), "golden")

RST_VECTOR = "CVSS:3.1/AV:L/AC:H/PR:L/UI:R/S:U/C:H/I:H/A:H/E:U/RL:O/RC:C"

RST_COMPONENTS = [
    "Intel Chipset Device Software - Intel - 10.1.1.44",
    "Intel Graphics Drivers - Intel - 21.20.x",
    "Intel Management Engine Components Installer Driver - Intel - 11.7.0.1043",
    "Intel Network Connections - Intel - 25.0",
    "Intel Trusted Connect Service Client - Intel - 1.47.715.0",
    "Rapid Storage Technology (RST) - Intel - 15.7.x",
]


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def golden_text(name: str) -> str:
    with open(os.path.join(GOLDEN, name), encoding="utf-8") as handle:
        return handle.read()


def load_feed(name: str, fmt: FeedFormat) -> RawFeed:
    with open(fixture_path(name), "rb") as handle:
        return RawFeed(data=handle.read(), format=fmt)


@pytest.fixture(scope="session")
def cve_records():
    return parse_cve_feed(load_feed("cve_feed.json", FeedFormat.COMPACT_FIXTURE_JSON)).records


@pytest.fixture(scope="session")
def cwe_entries():
    return parse_cwe_catalog(load_feed("cwe_catalog.json", FeedFormat.COMPACT_CWE_JSON)).records


@pytest.fixture(scope="session")
def capec_entries():
    return parse_capec_catalog(
        load_feed("capec_catalog.json", FeedFormat.COMPACT_CAPEC_JSON)
    ).records


@pytest.fixture(scope="session")
def graph(cve_records, cwe_entries, capec_entries):
    return Cskg.build(cve_records, cwe_entries, capec_entries)


@pytest.fixture()
def rst_asset() -> Asset:
    return Asset(
        id="AST-RST",
        organization="DI-DnA",
        software_name="Syngo Carbon Monitoring",
        software_version="VB12A",
        product_label="Syngo Carbon Monitoring VB12A",
        components=[ComponentRef.from_text(text) for text in RST_COMPONENTS],
    )


@pytest.fixture()
def rst_notification(graph) -> Notification:
    return Notification(
        id="NTF-RST",
        description=(
            "Uncontrolled search path in some Intel RST software may allow an "
            "authenticated user to potentially enable escalation of privilege "
            "via local access."
        ),
        cve_ids=["CVE-2022-43456"],
        affected_components=[ComponentRef.from_text(text) for text in RST_COMPONENTS],
        base_temporal_vector=parse_vector(RST_VECTOR),
        cvss_version="3.1",
        enrichment=graph.enrich_many(["CVE-2022-43456"]),
    )


@pytest.fixture()
def store(tmp_path) -> Store:
    instance = Store(journal_path=str(tmp_path / "journal.jsonl"))
    yield instance
    instance.close()
