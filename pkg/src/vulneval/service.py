"""REST review service: batch draft generation, prioritized review queue,
expert correction workflow, and retraining-corpus export."""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Optional, Sequence

from .catalog import (
    DuplicateRecord,
    Evaluation,
    Provenance,
    Store,
    UnknownReference,
    VersionConflict,
    VexCategory,
    VexJustification,
    asset_from_dict,
    asset_to_dict,
    check_evaluation_invariants,
    evaluation_to_dict,
    notification_from_cve,
    notification_from_dict,
    notification_to_dict,
)
from .cskg import Cskg
from .cvss import describe_to_vector, parse_vector
from .inference import Backend, PartialFailure, generate_evaluation_drafts
from .postprocess import REVIEW_PRIORITY_FLAG, apply_rules, draft_from_evaluation
from .promptgen import build_context, build_sft_entries, filter_corpus

logger = logging.getLogger(__name__)

EXPERT_BASELINE_SECONDS = 194.0


class UnknownEvaluation(KeyError):
    pass


class AlreadyReviewed(RuntimeError):
    pass


class InvariantViolation(ValueError):
    pass


class BusyError(RuntimeError):
    """A batch run is already in flight."""


class ReviewActionKind(str, Enum):
    ACCEPT = "Accept"
    CORRECT = "Correct"


@dataclass
class ReviewAction:
    evaluation_id: str
    action: ReviewActionKind
    corrected_fields: dict = field(default_factory=dict)
    reviewer: str = ""
    duration_seconds: Optional[float] = None


@dataclass
class BatchRun:
    run_id: str
    started_at: str
    finished_at: str = ""
    notifications_processed: int = 0
    drafts_created: int = 0
    skipped_existing: int = 0
    failures: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "notifications_processed": self.notifications_processed,
            "drafts_created": self.drafts_created,
            "skipped_existing": self.skipped_existing,
            "failures": dict(self.failures),
        }


def _parse_timestamp(value: str) -> datetime:
    """Parse an ISO timestamp, treating naive input as UTC so comparisons
    against stored aware timestamps never raise."""
    parsed = datetime.fromisoformat(value)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed


def _timestamp_after(value: str, since: Optional[str]) -> bool:
    if not since:
        return True
    if not value:
        return False
    return _parse_timestamp(value) > _parse_timestamp(since)


class ReviewService:
    """Pure-Python orchestration over Store + Backend; the FastAPI layer in
    create_app is a thin adapter."""

    def __init__(
        self,
        store: Store,
        backend: Backend,
        graph: Optional[Cskg] = None,
        auth_token: Optional[str] = None,
        export_dir: Optional[str] = None,
    ):
        self.store = store
        self.backend = backend
        self.graph = graph
        self.auth_token = auth_token
        self.export_dir = export_dir or "."
        self._batch_lock = threading.Lock()
        self._run_counter = 0
        self.last_run_at: Optional[str] = None

    # -- batch orchestration --------------------------------------------

    def run_batch(self, since: Optional[str] = None) -> BatchRun:
        """Draft every missing (asset, notification) pair touched by data new
        since `since` (default: the previous run). At most one run in flight;
        reviewed evaluations are never overwritten."""
        if not self._batch_lock.acquire(blocking=False):
            raise BusyError("a batch run is already in flight")
        try:
            effective_since = since if since is not None else self.last_run_at
            self._run_counter += 1
            run = BatchRun(
                run_id=f"RUN-{self._run_counter:04d}", started_at=self.store.now()
            )
            pairs_by_notification: dict[str, list[str]] = {}
            for notification in self.store.notifications.values():
                if _timestamp_after(notification.updated_at, effective_since):
                    for asset_id in self.store.applicable_assets(notification):
                        pairs_by_notification.setdefault(notification.id, []).append(asset_id)
            for asset in self.store.assets.values():
                if _timestamp_after(asset.updated_at, effective_since):
                    for notification_id in self.store.applicable_notifications(asset):
                        bucket = pairs_by_notification.setdefault(notification_id, [])
                        if asset.id not in bucket:
                            bucket.append(asset.id)

            for notification_id in sorted(pairs_by_notification):
                run.notifications_processed += 1
                fresh = []
                for asset_id in sorted(set(pairs_by_notification[notification_id])):
                    if self.store.evaluation_for_pair(asset_id, notification_id) is None:
                        fresh.append(asset_id)
                    else:
                        run.skipped_existing += 1
                if not fresh:
                    continue
                try:
                    drafts = generate_evaluation_drafts(
                        self.backend, self.store, notification_id, asset_ids=fresh
                    )
                except PartialFailure as exc:
                    drafts = exc.drafts
                    for asset_id, message in exc.errors.items():
                        run.failures[f"{notification_id}/{asset_id}"] = message
                except Exception as exc:  # keep the run going per notification
                    run.failures[notification_id] = str(exc)
                    continue
                for draft in drafts:
                    self.store.upsert_evaluation(draft)
                    run.drafts_created += 1

            run.finished_at = self.store.now()
            self.last_run_at = run.started_at
            logger.info(
                "%s: %d drafts, %d skipped, %d failures",
                run.run_id,
                run.drafts_created,
                run.skipped_existing,
                len(run.failures),
            )
            return run
        finally:
            self._batch_lock.release()

    # -- review workflow --------------------------------------------------

    def review_queue(
        self,
        organization: Optional[str] = None,
        product: Optional[str] = None,
        notification_id: Optional[str] = None,
        category: Optional[VexCategory] = None,
    ) -> list[Evaluation]:
        """Pending drafts: Affected first, then flagged, then newest; ids
        break remaining ties so the order is total."""
        drafts = self.store.list_evaluations(
            provenance=Provenance.AI_DRAFT,
            organization=organization,
            product=product,
            notification_id=notification_id,
            category=category,
        )

        def sort_key(evaluation: Evaluation):
            affected_rank = 0 if evaluation.vex_category is VexCategory.AFFECTED else 1
            flagged_rank = 0 if evaluation.flags else 1
            created = evaluation.created_at
            age_rank = -datetime.fromisoformat(created).timestamp() if created else 0.0
            return (affected_rank, flagged_rank, age_rank, evaluation.id)

        return sorted(drafts, key=sort_key)

    def submit_review(self, action: ReviewAction) -> Evaluation:
        try:
            evaluation = self.store.get_evaluation(action.evaluation_id)
        except UnknownReference:
            raise UnknownEvaluation(action.evaluation_id) from None
        if evaluation.provenance is not Provenance.AI_DRAFT:
            raise AlreadyReviewed(f"{evaluation.id} is already {evaluation.provenance.value}")
        if action.action is ReviewActionKind.ACCEPT and action.corrected_fields:
            raise InvariantViolation("Accept must not carry corrected fields")
        if action.action is ReviewActionKind.CORRECT and not action.corrected_fields:
            raise InvariantViolation("Correct must change at least one field")

        snapshot = {
            "provenance": evaluation.provenance.value,
            "recorded_at": self.store.now(),
            "fields": {
                key: value
                for key, value in evaluation_to_dict(evaluation).items()
                if key
                in (
                    "vex_category",
                    "vex_justification",
                    "internal_comment",
                    "customer_comment",
                    "environmental_vector",
                    "flags",
                )
            },
        }

        if action.action is ReviewActionKind.ACCEPT:
            updated = replace(
                evaluation, flags=list(evaluation.flags), history=list(evaluation.history)
            )
            updated.provenance = Provenance.EXPERT_ACCEPTED
        else:
            merged = self._merge_correction(evaluation, action.corrected_fields)
            updated, report = apply_rules(draft_from_evaluation(merged), merged)
            if report.rules_fired:
                logger.info("%s: correction re-fired %s", updated.id, report.rules_fired)
            updated.provenance = Provenance.EXPERT_CORRECTED
        problems = check_evaluation_invariants(updated)
        if problems:
            raise InvariantViolation("; ".join(problems))
        updated.history = evaluation.history + [snapshot]
        updated.reviewer = action.reviewer or updated.reviewer
        updated.review_duration_seconds = action.duration_seconds
        return self.store.upsert_evaluation(updated)

    def _merge_correction(self, evaluation: Evaluation, fields: dict) -> Evaluation:
        allowed = {
            "vex_category",
            "vex_justification",
            "internal_comment",
            "customer_comment",
            "environmental_vector",
        }
        unknown = set(fields) - allowed
        if unknown:
            raise InvariantViolation(f"unknown corrected fields: {sorted(unknown)}")
        merged_dict = evaluation_to_dict(evaluation)
        merged_dict.update(fields)
        try:
            from .catalog import evaluation_from_dict

            merged = evaluation_from_dict(merged_dict)
        except (ValueError, KeyError) as exc:
            raise InvariantViolation(f"invalid correction: {exc}") from None
        merged.flags = list(evaluation.flags)
        merged.history = list(evaluation.history)
        return merged

    # -- export and stats --------------------------------------------------

    def export_retraining(self, since: Optional[str] = None, path: Optional[str] = None) -> dict:
        """Render reviewed evaluations into filtered SFT entries on disk."""
        import json

        reviewed = [
            evaluation
            for evaluation in self.store.list_evaluations()
            if evaluation.provenance
            in (Provenance.EXPERT_ACCEPTED, Provenance.EXPERT_CORRECTED)
            and _timestamp_after(evaluation.updated_at, since)
        ]
        kept_entries = []
        dropped = 0
        for evaluation in sorted(reviewed, key=lambda e: e.id):
            asset = self.store.get_asset(evaluation.asset_id)
            notification = self.store.get_notification(evaluation.notification_id)
            ctx = build_context(asset, notification)
            entries = build_sft_entries(evaluation, ctx)
            kept, lost = filter_corpus(entries)
            kept_entries.extend(kept)
            dropped += len(lost)
        path = path or os.path.join(self.export_dir, "retraining.jsonl")
        with open(path, "w", encoding="utf-8") as handle:
            for entry in kept_entries:
                handle.write(
                    json.dumps(
                        {
                            "kind": entry.kind.value,
                            "prompt": entry.prompt,
                            "response": entry.response,
                            "tokens": entry.token_count,
                        }
                    )
                    + "\n"
                )
        return {"path": path, "kept": len(kept_entries), "dropped": dropped}

    def stats(self) -> dict:
        evaluations = list(self.store.evaluations.values())
        accepted = sum(1 for e in evaluations if e.provenance is Provenance.EXPERT_ACCEPTED)
        corrected = sum(1 for e in evaluations if e.provenance is Provenance.EXPERT_CORRECTED)
        reviewed = accepted + corrected
        durations = [
            e.review_duration_seconds
            for e in evaluations
            if e.provenance is not Provenance.AI_DRAFT and e.review_duration_seconds is not None
        ]
        mean_duration = sum(durations) / len(durations) if durations else 0.0
        time_saved = len(durations) * (EXPERT_BASELINE_SECONDS - mean_duration)
        return {
            "assets": len(self.store.assets),
            "notifications": len(self.store.notifications),
            "evaluations": len(evaluations),
            "drafts_pending": sum(
                1 for e in evaluations if e.provenance is Provenance.AI_DRAFT
            ),
            "reviewed": reviewed,
            "accepted": accepted,
            "corrected": corrected,
            "acceptance_rate": accepted / reviewed if reviewed else 0.0,
            "mean_review_duration_seconds": mean_duration,
            "reviews_with_duration": len(durations),
            "expert_baseline_seconds": EXPERT_BASELINE_SECONDS,
            "time_saved_seconds": time_saved,
        }

    # -- ingest helpers -----------------------------------------------------

    def add_asset(self, body: dict) -> dict:
        body = dict(body)
        _require_fields(body, ("organization", "software_name", "software_version"))
        body.setdefault("id", self.store.new_id("AST"))
        body.setdefault("product_label", f"{body['software_name']} {body['software_version']}")
        body["components"] = _normalize_components(body.get("components"))
        asset = asset_from_dict(body)
        existing = self.store.assets.get(asset.id)
        if existing is not None and "version" not in body:
            asset.version = existing.version
        return asset_to_dict(self.store.upsert_asset(asset))

    def add_notification(self, body: dict) -> dict:
        body = dict(body)
        _require_fields(body, ("description",))
        body.setdefault("id", self.store.new_id("NTF"))
        body["affected_components"] = _normalize_components(body.get("affected_components"))
        notification = notification_from_dict(body)
        if notification.enrichment is None and self.graph is not None:
            notification.enrichment = self.graph.enrich_many(notification.cve_ids)
        existing = self.store.notifications.get(notification.id)
        if existing is not None and "version" not in body:
            notification.version = existing.version
        return notification_to_dict(self.store.upsert_notification(notification))


def _require_fields(body: dict, names: Sequence[str]) -> None:
    missing = [name for name in names if not body.get(name)]
    if missing:
        raise ValueError(f"missing required fields: {missing}")


def _normalize_components(raw) -> list[dict]:
    from .catalog import ComponentRef, component_to_dict

    normalized = []
    for item in raw or []:
        if isinstance(item, str):
            normalized.append(component_to_dict(ComponentRef.from_text(item)))
        else:
            normalized.append(item)
    return normalized


# ---------------------------------------------------------------------------
# FastAPI layer


def create_app(service: ReviewService):
    from fastapi import Depends, FastAPI, Header, HTTPException

    app = FastAPI(title="vulneval review service")

    def require_auth(authorization: Optional[str] = Header(None)) -> None:
        if not service.auth_token:
            return
        if authorization != f"Bearer {service.auth_token}":
            raise HTTPException(status_code=401, detail="invalid or missing bearer token")

    guarded = [Depends(require_auth)]

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/assets", dependencies=guarded)
    def post_asset(body: dict):
        try:
            return service.add_asset(body)
        except DuplicateRecord as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except VersionConflict as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/assets/{asset_id}", dependencies=guarded)
    def get_asset(asset_id: str):
        try:
            return asset_to_dict(service.store.get_asset(asset_id))
        except UnknownReference as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/notifications", dependencies=guarded)
    def post_notification(body: dict):
        try:
            return service.add_notification(body)
        except VersionConflict as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/notifications/{notification_id}", dependencies=guarded)
    def get_notification(notification_id: str):
        try:
            return notification_to_dict(service.store.get_notification(notification_id))
        except UnknownReference as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    def require_timestamp(since: Optional[str]) -> Optional[str]:
        if since:
            try:
                _parse_timestamp(since)
            except ValueError:
                raise HTTPException(status_code=422, detail=f"bad since timestamp {since!r}")
        return since

    @app.post("/batch/run", dependencies=guarded)
    def post_batch_run(body: Optional[dict] = None):
        try:
            run = service.run_batch(since=require_timestamp((body or {}).get("since")))
        except BusyError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return run.to_dict()

    @app.get("/evaluations", dependencies=guarded)
    def get_evaluations(
        status: Optional[str] = None,
        category: Optional[str] = None,
        org: Optional[str] = None,
        product: Optional[str] = None,
        notification: Optional[str] = None,
        limit: int = 100,
        cursor: Optional[str] = None,
    ):
        try:
            category_filter = VexCategory(category) if category else None
        except ValueError:
            raise HTTPException(status_code=422, detail=f"unknown category {category!r}")
        if status in (None, "", Provenance.AI_DRAFT.value):
            records = service.review_queue(
                organization=org,
                product=product,
                notification_id=notification,
                category=category_filter,
            )
            if status is None:
                # No status filter: reviewed records follow the pending queue.
                records += [
                    e
                    for e in service.store.list_evaluations(
                        category=category_filter,
                        organization=org,
                        product=product,
                        notification_id=notification,
                    )
                    if e.provenance is not Provenance.AI_DRAFT
                ]
        else:
            try:
                provenance = Provenance(status)
            except ValueError:
                raise HTTPException(status_code=422, detail=f"unknown status {status!r}")
            records = service.store.list_evaluations(
                provenance=provenance,
                category=category_filter,
                organization=org,
                product=product,
                notification_id=notification,
            )
        offset = 0
        if cursor:
            try:
                offset = max(0, int(cursor))
            except ValueError:
                raise HTTPException(status_code=422, detail=f"bad cursor {cursor!r}")
        window = records[offset : offset + max(1, limit)]
        next_cursor = offset + len(window)
        return {
            "items": [evaluation_to_dict(e) for e in window],
            "total": len(records),
            "next_cursor": str(next_cursor) if next_cursor < len(records) else None,
        }

    @app.get("/evaluations/{evaluation_id}", dependencies=guarded)
    def get_evaluation(evaluation_id: str):
        try:
            return evaluation_to_dict(service.store.get_evaluation(evaluation_id))
        except UnknownReference as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/evaluations/{evaluation_id}/review", dependencies=guarded)
    def post_review(evaluation_id: str, body: dict):
        try:
            action = ReviewAction(
                evaluation_id=evaluation_id,
                action=ReviewActionKind(body.get("action", "")),
                corrected_fields=body.get("corrected_fields") or {},
                reviewer=body.get("reviewer", ""),
                duration_seconds=body.get("duration_seconds"),
            )
        except ValueError:
            raise HTTPException(
                status_code=422, detail=f"action must be one of {[k.value for k in ReviewActionKind]}"
            )
        try:
            return evaluation_to_dict(service.submit_review(action))
        except UnknownEvaluation as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except AlreadyReviewed as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except InvariantViolation as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/export/retraining", dependencies=guarded)
    def get_export(since: Optional[str] = None):
        return service.export_retraining(since=require_timestamp(since))

    @app.get("/stats", dependencies=guarded)
    def get_stats():
        return service.stats()

    @app.get("/config/justifications", dependencies=guarded)
    def get_justifications():
        return {"justifications": [j.value for j in VexJustification], "none_label": "None"}

    @app.post("/cvss/validate", dependencies=guarded)
    def post_cvss_validate(body: dict):
        text = str(body.get("text", "")).strip()
        if not text:
            # Blank input must not read as a valid vector.
            return {"valid": False, "metrics": {}, "error": "empty vector text"}
        try:
            if text.startswith("CVSS:"):
                vector = parse_vector(text, require_base=False)
            else:
                vector = describe_to_vector(text)
        except ValueError as exc:
            return {"valid": False, "metrics": {}, "error": str(exc)}
        return {"valid": True, "metrics": dict(vector.metrics), "error": None}

    return app
