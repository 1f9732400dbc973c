"""Review service and REST layer tests."""

from datetime import datetime, timedelta, timezone

import pytest
from fastapi.testclient import TestClient

from vulneval.catalog import (
    Asset,
    ComponentRef,
    Evaluation,
    Notification,
    Provenance,
    Store,
    VexCategory,
    VexJustification,
)
from vulneval.cvss import CvssVector, parse_vector
from vulneval.inference import MockBackend, RST_INTERNAL_COMMENT
from vulneval.service import (
    EXPERT_BASELINE_SECONDS,
    AlreadyReviewed,
    BusyError,
    InvariantViolation,
    ReviewAction,
    ReviewActionKind,
    ReviewService,
    UnknownEvaluation,
    create_app,
)


class SteppingClock:
    """Advances one second per call so record timestamps are distinct."""

    def __init__(self):
        self.current = datetime(2024, 1, 1, tzinfo=timezone.utc)

    def __call__(self):
        self.current += timedelta(seconds=1)
        return self.current


BASE_VECTOR = "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"


def make_service(rst_asset, rst_notification, journal=None):
    store = Store(journal_path=journal, clock=SteppingClock())
    store.upsert_asset(rst_asset)
    store.upsert_notification(rst_notification)
    # A second pair whose components trigger the component-absent responses.
    store.upsert_asset(
        Asset(
            id="AST-SSL",
            organization="DI-DnA",
            software_name="Imaging Console",
            software_version="2.0",
            product_label="Imaging Console 2.0",
            components=[
                ComponentRef(name="OpenSSL", vendor="OpenSSL Project", version="1.1.1k"),
                ComponentRef(name="Log4j", vendor="Apache", version="2.17.0"),
            ],
        )
    )
    store.upsert_notification(
        Notification(
            id="NTF-SSL",
            description="Buffer overflow in OpenSSL may allow remote code execution.",
            cve_ids=["CVE-2024-0001"],
            affected_components=[
                ComponentRef(name="OpenSSL", vendor="OpenSSL Project", version="1.1.x")
            ],
            base_temporal_vector=parse_vector(BASE_VECTOR),
            cvss_version="3.1",
        )
    )
    return ReviewService(store, MockBackend(), export_dir=".")


@pytest.fixture
def service(rst_asset, rst_notification, tmp_path):
    return make_service(rst_asset, rst_notification, journal=str(tmp_path / "journal.jsonl"))


def run_and_queue(service):
    service.run_batch()
    return service.review_queue()


# -- batch orchestration ---------------------------------------------------------


def test_run_batch_creates_drafts_once(service):
    first = service.run_batch()
    assert first.drafts_created == 2
    assert first.notifications_processed == 2
    assert first.skipped_existing == 0
    assert first.failures == {}
    assert first.run_id == "RUN-0001"
    assert first.finished_at > first.started_at

    second = service.run_batch(since="")
    assert second.drafts_created == 0
    assert second.skipped_existing == 2
    assert second.run_id == "RUN-0002"


def test_run_batch_incremental_since_previous_run(service):
    service.run_batch()
    # Nothing changed since the first run, so no pairs are even considered.
    follow_up = service.run_batch()
    assert follow_up.drafts_created == 0
    assert follow_up.skipped_existing == 0
    assert follow_up.notifications_processed == 0


def test_run_batch_picks_up_new_assets(service, rst_notification):
    service.run_batch()
    service.store.upsert_asset(
        Asset(
            id="AST-SSL2",
            organization="DI-DnA",
            software_name="Archive Node",
            software_version="1.0",
            product_label="Archive Node 1.0",
            components=[
                ComponentRef(name="OpenSSL", vendor="OpenSSL Project", version="1.1.2")
            ],
        )
    )
    run = service.run_batch()
    assert run.drafts_created == 1
    pair = service.store.evaluation_for_pair("AST-SSL2", "NTF-SSL")
    assert pair is not None


def test_run_batch_busy(service):
    assert service._batch_lock.acquire(blocking=False)
    try:
        with pytest.raises(BusyError):
            service.run_batch()
    finally:
        service._batch_lock.release()


def test_run_batch_never_overwrites_reviewed(service):
    queue = run_and_queue(service)
    accepted = service.submit_review(
        ReviewAction(evaluation_id=queue[0].id, action=ReviewActionKind.ACCEPT)
    )
    run = service.run_batch(since="")
    assert run.drafts_created == 0
    assert service.store.get_evaluation(accepted.id).provenance is Provenance.EXPERT_ACCEPTED


# -- review queue -----------------------------------------------------------------


def test_review_queue_orders_affected_first(service):
    queue = run_and_queue(service)
    assert [e.vex_category for e in queue] == [
        VexCategory.AFFECTED,
        VexCategory.NOT_AFFECTED,
    ]
    assert queue[0].asset_id == "AST-RST"
    assert queue[1].asset_id == "AST-SSL"


def test_review_queue_flags_outrank_recency(service):
    run_and_queue(service)
    store = service.store
    # Two extra Affected drafts: an older flagged one must outrank a newer
    # clean one; among clean drafts newer comes first.
    older = Evaluation(
        id="EV-FLAGGED",
        asset_id="AST-SSL",
        notification_id="NTF-SSL",
        vex_category=VexCategory.AFFECTED,
        provenance=Provenance.AI_DRAFT,
        flags=["vector-missing"],
    )
    store.upsert_evaluation(older)
    newer = Evaluation(
        id="EV-CLEAN",
        asset_id="AST-RST",
        notification_id="NTF-SSL",
        vex_category=VexCategory.AFFECTED,
        provenance=Provenance.AI_DRAFT,
    )
    store.upsert_evaluation(newer)
    ordered = [e.id for e in service.review_queue()]
    flagged_pos = ordered.index("EV-FLAGGED")
    clean_pos = ordered.index("EV-CLEAN")
    assert flagged_pos < clean_pos
    # The clean newer draft still precedes the clean older RST draft.
    rst_draft = service.store.evaluation_for_pair("AST-RST", "NTF-RST")
    assert clean_pos < ordered.index(rst_draft.id)


def test_review_queue_filters(service):
    run_and_queue(service)
    only_ssl = service.review_queue(notification_id="NTF-SSL")
    assert [e.asset_id for e in only_ssl] == ["AST-SSL"]
    assert service.review_queue(product="Syngo Carbon Monitoring VB12A")[0].asset_id == "AST-RST"
    assert service.review_queue(category=VexCategory.NOT_AFFECTED)[0].asset_id == "AST-SSL"


# -- review workflow -----------------------------------------------------------------


def test_accept_review(service):
    queue = run_and_queue(service)
    draft = queue[0]
    reviewed = service.submit_review(
        ReviewAction(
            evaluation_id=draft.id,
            action=ReviewActionKind.ACCEPT,
            reviewer="analyst",
            duration_seconds=42.0,
        )
    )
    assert reviewed.provenance is Provenance.EXPERT_ACCEPTED
    assert reviewed.reviewer == "analyst"
    assert reviewed.review_duration_seconds == 42.0
    assert reviewed.version == draft.version + 1
    assert len(reviewed.history) == 1
    snapshot = reviewed.history[0]
    assert snapshot["provenance"] == "AiDraft"
    assert snapshot["fields"]["internal_comment"] == draft.internal_comment
    # Content untouched by an accept.
    assert reviewed.internal_comment == RST_INTERNAL_COMMENT


def test_accept_rejects_corrections(service):
    queue = run_and_queue(service)
    with pytest.raises(InvariantViolation):
        service.submit_review(
            ReviewAction(
                evaluation_id=queue[0].id,
                action=ReviewActionKind.ACCEPT,
                corrected_fields={"internal_comment": "nope"},
            )
        )


def test_correct_requires_fields(service):
    queue = run_and_queue(service)
    with pytest.raises(InvariantViolation):
        service.submit_review(
            ReviewAction(evaluation_id=queue[0].id, action=ReviewActionKind.CORRECT)
        )


def test_correct_rejects_unknown_fields(service):
    queue = run_and_queue(service)
    with pytest.raises(InvariantViolation):
        service.submit_review(
            ReviewAction(
                evaluation_id=queue[0].id,
                action=ReviewActionKind.CORRECT,
                corrected_fields={"provenance": "ExpertAccepted"},
            )
        )


def test_correct_edits_comment(service):
    queue = run_and_queue(service)
    draft = queue[0]
    reviewed = service.submit_review(
        ReviewAction(
            evaluation_id=draft.id,
            action=ReviewActionKind.CORRECT,
            corrected_fields={"internal_comment": "Revised by the product expert."},
            reviewer="analyst",
        )
    )
    assert reviewed.provenance is Provenance.EXPERT_CORRECTED
    assert reviewed.internal_comment == "Revised by the product expert."
    # Untouched fields survive the merge.
    assert reviewed.customer_comment == draft.customer_comment
    assert reviewed.environmental_vector == draft.environmental_vector


def test_correct_category_flip_reapplies_rules(service):
    queue = run_and_queue(service)
    draft = queue[0]
    assert draft.environmental_vector is not None
    reviewed = service.submit_review(
        ReviewAction(
            evaluation_id=draft.id,
            action=ReviewActionKind.CORRECT,
            corrected_fields={
                "vex_category": "NotAffected",
                "vex_justification": "ComponentNotPresent",
            },
        )
    )
    # R1 strips the now-disallowed vector from the corrected record.
    assert reviewed.vex_category is VexCategory.NOT_AFFECTED
    assert reviewed.environmental_vector is None


def test_correct_affected_justification_cleared(service):
    queue = run_and_queue(service)
    not_affected = queue[1]
    reviewed = service.submit_review(
        ReviewAction(
            evaluation_id=not_affected.id,
            action=ReviewActionKind.CORRECT,
            corrected_fields={
                "vex_category": "Affected",
                "environmental_vector": "CVSS:3.1/MAV:N/CR:H",
            },
        )
    )
    # R4 guarantees Affected records carry no justification.
    assert reviewed.vex_category is VexCategory.AFFECTED
    assert reviewed.vex_justification is None
    assert reviewed.environmental_vector.metrics == {"MAV": "N", "CR": "H"}


def test_correct_rejects_bad_vector_string(service):
    queue = run_and_queue(service)
    with pytest.raises(InvariantViolation):
        service.submit_review(
            ReviewAction(
                evaluation_id=queue[0].id,
                action=ReviewActionKind.CORRECT,
                corrected_fields={"environmental_vector": "CVSS:3.1/XX:Y"},
            )
        )


def test_review_twice_conflicts(service):
    queue = run_and_queue(service)
    action = ReviewAction(evaluation_id=queue[0].id, action=ReviewActionKind.ACCEPT)
    service.submit_review(action)
    with pytest.raises(AlreadyReviewed):
        service.submit_review(action)


def test_review_unknown_evaluation(service):
    with pytest.raises(UnknownEvaluation):
        service.submit_review(
            ReviewAction(evaluation_id="EV-missing", action=ReviewActionKind.ACCEPT)
        )


# -- export and stats -------------------------------------------------------------


def test_export_retraining(service, tmp_path):
    queue = run_and_queue(service)
    for draft in queue:
        service.submit_review(
            ReviewAction(evaluation_id=draft.id, action=ReviewActionKind.ACCEPT)
        )
    out = str(tmp_path / "retraining.jsonl")
    result = service.export_retraining(path=out)
    # The Affected pair yields all four entries; the NotAffected one has no
    # environmental vector, so its vector entry is dropped as incomplete.
    assert result == {"path": out, "kept": 7, "dropped": 1}
    import json

    rows = [json.loads(line) for line in open(out, encoding="utf-8")]
    assert len(rows) == 7
    assert {row["kind"] for row in rows} == {
        "Category",
        "InternalComment",
        "CustomerComment",
        "Vector",
    }
    for row in rows:
        assert row["response"].endswith("\n<STOP>")
        assert row["tokens"] > 0
        assert "### Response:" in row["prompt"]


def test_export_retraining_since_filter(service, tmp_path):
    queue = run_and_queue(service)
    service.submit_review(
        ReviewAction(evaluation_id=queue[0].id, action=ReviewActionKind.ACCEPT)
    )
    out = str(tmp_path / "retraining.jsonl")
    future = datetime(2030, 1, 1, tzinfo=timezone.utc).isoformat()
    assert service.export_retraining(since=future, path=out)["kept"] == 0
    past = datetime(2020, 1, 1, tzinfo=timezone.utc).isoformat()
    assert service.export_retraining(since=past, path=out)["kept"] == 4
    # Naive timestamps are read as UTC rather than raising on comparison.
    assert service.export_retraining(since="2030-01-01T00:00:00", path=out)["kept"] == 0
    assert service.export_retraining(since="2020-01-01T00:00:00", path=out)["kept"] == 4


def test_stats(service):
    queue = run_and_queue(service)
    service.submit_review(
        ReviewAction(
            evaluation_id=queue[0].id,
            action=ReviewActionKind.ACCEPT,
            duration_seconds=100.0,
        )
    )
    service.submit_review(
        ReviewAction(
            evaluation_id=queue[1].id,
            action=ReviewActionKind.CORRECT,
            corrected_fields={"customer_comment": "Edited."},
            duration_seconds=88.0,
        )
    )
    stats = service.stats()
    assert stats["assets"] == 2
    assert stats["notifications"] == 2
    assert stats["evaluations"] == 2
    assert stats["drafts_pending"] == 0
    assert stats["reviewed"] == 2
    assert stats["accepted"] == 1
    assert stats["corrected"] == 1
    assert stats["acceptance_rate"] == 0.5
    assert stats["mean_review_duration_seconds"] == 94.0
    assert stats["reviews_with_duration"] == 2
    assert stats["time_saved_seconds"] == 2 * (EXPERT_BASELINE_SECONDS - 94.0)


def test_stats_empty_store(tmp_path):
    service = ReviewService(Store(), MockBackend())
    stats = service.stats()
    assert stats["acceptance_rate"] == 0.0
    assert stats["time_saved_seconds"] == 0.0


# -- REST layer --------------------------------------------------------------------


@pytest.fixture
def client(service):
    return TestClient(create_app(service))


def test_healthz_open_even_with_auth(rst_asset, rst_notification):
    service = make_service(rst_asset, rst_notification)
    service.auth_token = "sekrit"
    client = TestClient(create_app(service))
    assert client.get("/healthz").status_code == 200
    assert client.get("/stats").status_code == 401
    ok = client.get("/stats", headers={"Authorization": "Bearer sekrit"})
    assert ok.status_code == 200
    wrong = client.get("/stats", headers={"Authorization": "Bearer nope"})
    assert wrong.status_code == 401


def test_post_asset_and_notification(client, service):
    response = client.post(
        "/assets",
        json={
            "organization": "DI-DnA",
            "software_name": "New Scanner",
            "software_version": "1.0",
            "product_label": "New Scanner 1.0",
            "components": ["OpenSSL - OpenSSL Project - 1.1.1"],
        },
    )
    assert response.status_code == 200
    created = response.json()
    assert created["id"].startswith("AST-")
    assert created["components"] == [
        {"name": "OpenSSL", "vendor": "OpenSSL Project", "version": "1.1.1"}
    ]
    assert created["version"] == 1

    response = client.post(
        "/notifications",
        json={
            "description": "Heap overflow in zlib inflate.",
            "cve_ids": ["CVE-2024-0002"],
            "affected_components": ["zlib - zlib - 1.2.x"],
            "base_temporal_vector": BASE_VECTOR,
            "cvss_version": "3.1",
        },
    )
    assert response.status_code == 200
    assert response.json()["id"].startswith("NTF-")


def test_get_asset_and_notification_records(client):
    asset = client.get("/assets/AST-RST")
    assert asset.status_code == 200
    assert asset.json()["product_label"] == "Syngo Carbon Monitoring VB12A"
    names = [component["name"] for component in asset.json()["components"]]
    assert "Rapid Storage Technology (RST)" in names

    notification = client.get("/notifications/NTF-RST")
    assert notification.status_code == 200
    assert notification.json()["enrichment"]["typical_severity"] == "VeryHigh"
    assert notification.json()["base_temporal_vector"].startswith("CVSS:3.1/")

    assert client.get("/assets/AST-missing").status_code == 404
    assert client.get("/notifications/NTF-missing").status_code == 404


def test_post_asset_validation_errors(client):
    assert client.post("/assets", json={"organization": "x"}).status_code == 422
    body = {
        "organization": "DI-DnA",
        "software_name": "Syngo Carbon Monitoring",
        "software_version": "VB12A",
        "product_label": "Clone",
    }
    assert client.post("/assets", json=body).status_code == 409  # name+version taken


def test_batch_run_endpoint(client):
    response = client.post("/batch/run", json={})
    assert response.status_code == 200
    body = response.json()
    assert body["drafts_created"] == 2
    assert body["failures"] == {}


def test_evaluations_listing_and_pagination(client):
    client.post("/batch/run", json={})
    page = client.get("/evaluations", params={"limit": 1}).json()
    assert page["total"] == 2
    assert len(page["items"]) == 1
    assert page["items"][0]["vex_category"] == "Affected"
    assert page["next_cursor"] == "1"
    page2 = client.get(
        "/evaluations", params={"limit": 1, "cursor": page["next_cursor"]}
    ).json()
    assert page2["items"][0]["vex_category"] == "NotAffected"
    assert page2["next_cursor"] is None


def test_evaluations_status_filters(client, service):
    client.post("/batch/run", json={})
    queue = service.review_queue()
    client.post(f"/evaluations/{queue[0].id}/review", json={"action": "Accept"})

    drafts_only = client.get("/evaluations", params={"status": "AiDraft"}).json()
    assert [e["provenance"] for e in drafts_only["items"]] == ["AiDraft"]
    accepted = client.get("/evaluations", params={"status": "ExpertAccepted"}).json()
    assert [e["id"] for e in accepted["items"]] == [queue[0].id]
    everything = client.get("/evaluations").json()
    assert everything["total"] == 2
    # Pending drafts precede reviewed records in the unfiltered listing.
    assert [e["provenance"] for e in everything["items"]] == ["AiDraft", "ExpertAccepted"]

    assert client.get("/evaluations", params={"status": "Nonsense"}).status_code == 422
    assert client.get("/evaluations", params={"category": "Wrong"}).status_code == 422
    assert client.get("/evaluations", params={"cursor": "abc"}).status_code == 422


def test_evaluation_detail_and_review_endpoint(client, service):
    client.post("/batch/run", json={})
    queue = service.review_queue()
    evaluation_id = queue[0].id

    detail = client.get(f"/evaluations/{evaluation_id}")
    assert detail.status_code == 200
    assert detail.json()["asset_id"] == "AST-RST"
    missing_detail = client.get("/evaluations/EV-missing")
    assert missing_detail.status_code == 404
    # KeyError repr-quoting must not leak into the error payload.
    assert missing_detail.json()["detail"] == "unknown evaluation EV-missing"

    assert (
        client.post(f"/evaluations/{evaluation_id}/review", json={"action": "Frobnicate"})
        .status_code
        == 422
    )
    reviewed = client.post(
        f"/evaluations/{evaluation_id}/review",
        json={"action": "Correct", "corrected_fields": {"customer_comment": "Edited."},
              "reviewer": "analyst", "duration_seconds": 61.5},
    )
    assert reviewed.status_code == 200
    body = reviewed.json()
    assert body["provenance"] == "ExpertCorrected"
    assert body["customer_comment"] == "Edited."
    assert body["reviewer"] == "analyst"
    assert body["review_duration_seconds"] == 61.5

    again = client.post(f"/evaluations/{evaluation_id}/review", json={"action": "Accept"})
    assert again.status_code == 409
    missing = client.post("/evaluations/EV-missing/review", json={"action": "Accept"})
    assert missing.status_code == 404
    invalid = client.post(
        f"/evaluations/{service.review_queue()[0].id}/review",
        json={"action": "Correct", "corrected_fields": {}},
    )
    assert invalid.status_code == 422


def test_export_and_stats_endpoints(client, service, tmp_path):
    service.export_dir = str(tmp_path)
    client.post("/batch/run", json={})
    queue = service.review_queue()
    client.post(
        f"/evaluations/{queue[0].id}/review",
        json={"action": "Accept", "duration_seconds": 90.0},
    )
    export = client.get("/export/retraining").json()
    assert export["kept"] == 4
    assert client.get("/export/retraining?since=2030-01-01T00:00:00").json()["kept"] == 0
    bad_since = client.get("/export/retraining?since=yesterdayish")
    assert bad_since.status_code == 422
    assert (
        client.post("/batch/run", json={"since": "yesterdayish"}).status_code == 422
    )
    stats = client.get("/stats").json()
    assert stats["accepted"] == 1
    assert stats["time_saved_seconds"] == EXPERT_BASELINE_SECONDS - 90.0


def test_config_and_validation_endpoints(client):
    justifications = client.get("/config/justifications").json()
    assert justifications["none_label"] == "None"
    assert "ComponentNotPresent" in justifications["justifications"]
    assert len(justifications["justifications"]) == len(VexJustification)

    valid = client.post("/cvss/validate", json={"text": BASE_VECTOR}).json()
    assert valid["valid"] is True
    assert valid["metrics"]["AV"] == "N"
    described = client.post(
        "/cvss/validate", json={"text": "Modified Attack Vector is Local."}
    ).json()
    assert described == {"valid": True, "metrics": {"MAV": "L"}, "error": None}
    invalid = client.post("/cvss/validate", json={"text": "garbage"}).json()
    assert invalid["valid"] is False
    assert invalid["error"]
    for blank in ({}, {"text": ""}, {"text": "   "}):
        blank_result = client.post("/cvss/validate", json=blank).json()
        assert blank_result == {
            "valid": False,
            "metrics": {},
            "error": "empty vector text",
        }
