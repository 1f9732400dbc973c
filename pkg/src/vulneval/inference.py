"""Generation backends and adaptive batch planning.

Prompts shorter than the threshold (default 920 tokens) run at the model's
default context length; the rest run in an extended bucket sized to
150 + the longest member. Backends satisfy one HTTP contract:

    POST {base_url}/generate
    {"prompts": ["..."], "params": {...}} -> {"completions": ["..."]}

A deterministic mock backend keeps the whole pipeline testable offline.
"""

from __future__ import annotations

import hashlib
import logging
import re
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .catalog import Evaluation, Provenance, Store
from .postprocess import RawDraft, assemble_evaluation
from .promptgen import (
    DEFAULT_TOKENIZER,
    InstructionKind,
    STOP_MARKER,
    Tokenizer,
    build_context,
    render_prompt,
)

logger = logging.getLogger(__name__)

BATCH_THRESHOLD = 920
EXTENDED_HEADROOM = 150

# Sized from the observed field lengths (notification/internal/customer
# texts run about 200/70/50 words).
MAX_NEW_TOKENS = {
    InstructionKind.CATEGORY: 60,
    InstructionKind.INTERNAL_COMMENT: 200,
    InstructionKind.CUSTOMER_COMMENT: 150,
    InstructionKind.VECTOR: 200,
}


class BackendUnavailable(RuntimeError):
    """Backend unreachable after bounded retries."""


class PartialFailure(RuntimeError):
    """Some assets produced drafts, some failed; both halves are attached."""

    def __init__(self, drafts: list, errors: dict[str, str]):
        super().__init__(f"{len(errors)} of {len(drafts) + len(errors)} assets failed")
        self.drafts = drafts
        self.errors = errors


@dataclass
class GenParams:
    beam_size: int = 1
    temperature: float = 0.0
    top_p: float = 1.0
    max_new_tokens: int = 150
    stop_sequence: str = STOP_MARKER

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")

    def to_payload(self, context_length: Optional[int] = None) -> dict:
        payload = {
            "beam_size": self.beam_size,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_new_tokens": self.max_new_tokens,
            "stop_sequence": self.stop_sequence,
        }
        if context_length is not None:
            payload["context_length"] = context_length
        return payload


@dataclass
class Bucket:
    context_length: Optional[int]
    indices: list[int] = field(default_factory=list)


@dataclass
class BatchPlan:
    buckets: list[Bucket] = field(default_factory=list)
    threshold: int = BATCH_THRESHOLD


def plan_batches(prompt_tokens: Sequence[int], threshold: int = BATCH_THRESHOLD) -> BatchPlan:
    """Partition prompt indices into the default bucket (< threshold) and one
    extended bucket sized 150 + the longest member; empty buckets omitted."""
    default = Bucket(context_length=None)
    long_indices = []
    for i, count in enumerate(prompt_tokens):
        if count < threshold:
            default.indices.append(i)
        else:
            long_indices.append(i)
    plan = BatchPlan(threshold=threshold)
    if default.indices:
        plan.buckets.append(default)
    if long_indices:
        longest = max(prompt_tokens[i] for i in long_indices)
        plan.buckets.append(Bucket(context_length=EXTENDED_HEADROOM + longest, indices=long_indices))
    return plan


class Backend:
    """Abstract completion generator; implementations preserve prompt order."""

    def generate(
        self,
        prompts: Sequence[str],
        params: GenParams,
        context_length: Optional[int] = None,
    ) -> list[str]:
        raise NotImplementedError


def _truncate_at_stop(text: str, stop: str) -> str:
    head, sep, _ = text.partition(stop)
    return head + sep if sep else text


def run_prompts(
    backend: Backend,
    prompts: Sequence[str],
    params: GenParams,
    tokenizer: Optional[Tokenizer] = None,
    threshold: int = BATCH_THRESHOLD,
) -> list[str]:
    """Execute prompts per the batch plan; completion i matches prompt i."""
    tokenizer = tokenizer or DEFAULT_TOKENIZER
    plan = plan_batches([tokenizer.count(p) for p in prompts], threshold)
    completions: list[Optional[str]] = [None] * len(prompts)
    for bucket in plan.buckets:
        batch = [prompts[i] for i in bucket.indices]
        outputs = backend.generate(batch, params, context_length=bucket.context_length)
        if len(outputs) != len(batch):
            raise BackendUnavailable(
                f"backend returned {len(outputs)} completions for {len(batch)} prompts"
            )
        for index, output in zip(bucket.indices, outputs):
            completions[index] = _truncate_at_stop(output, params.stop_sequence)
    return [c if c is not None else "" for c in completions]


class HttpBackend(Backend):
    """Client for the POST /generate contract with bounded retry."""

    def __init__(
        self,
        base_url: str,
        auth_token: Optional[str] = None,
        timeout: float = 120.0,
        retries: int = 3,
        backoff_seconds: float = 1.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.auth_token = auth_token
        self.timeout = timeout
        self.retries = retries
        self.backoff_seconds = backoff_seconds

    def generate(
        self,
        prompts: Sequence[str],
        params: GenParams,
        context_length: Optional[int] = None,
    ) -> list[str]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        payload = {"prompts": list(prompts), "params": params.to_payload(context_length)}
        delay = self.backoff_seconds
        last_error: Exception | None = None
        for attempt in range(1, self.retries + 1):
            try:
                response = requests.post(
                    f"{self.base_url}/generate",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
                if response.status_code >= 500:
                    raise requests.RequestException(f"server error {response.status_code}")
                response.raise_for_status()
                return list(response.json()["completions"])
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                logger.warning("generate attempt %d/%d failed: %s", attempt, self.retries, exc)
                if attempt < self.retries:
                    time.sleep(delay)
                    delay *= 2
        raise BackendUnavailable(f"backend at {self.base_url} unavailable: {last_error}")


# ---------------------------------------------------------------------------
# Mock backend


_INSTRUCTION_RE = re.compile(r"^### Instruction: (.+)$", re.MULTILINE)
_INPUT_RE = re.compile(r"### Input:\n\n(.*)\n\n### Response:", re.DOTALL)

_KIND_BY_INSTRUCTION = {kind.instruction: kind for kind in InstructionKind}


@dataclass
class MockFixture:
    """Canned responses for prompts touching the named components."""

    name: str
    component_names: list[str]
    responses: dict[InstructionKind, str]


RST_INTERNAL_COMMENT = (
    "The vulnerability deployed in the system is controlled. Exploitation of "
    "this vulnerability requires privileged local access and high Attack "
    "Complexity. Exploitability score (0.8) is below threshold. Device access "
    "is protected by username and password. The application is executed in "
    "Kiosk mode. PII is encrypted in the database. The database cannot be "
    "accessed remotely. Firewall rules are configured. The system is "
    "protected by whitelisting."
)

DEFAULT_MOCK_FIXTURES = [
    MockFixture(
        name="intel-rst",
        component_names=[
            "Rapid Storage Technology (RST)",
            "Intel Chipset Device Software",
            "Intel Graphics Drivers",
            "Intel Management Engine Components Installer Driver",
            "Intel Network Connections",
            "Intel Trusted Connect Service Client",
        ],
        responses={
            InstructionKind.CATEGORY: "Category: Affected",
            InstructionKind.INTERNAL_COMMENT: RST_INTERNAL_COMMENT,
            InstructionKind.CUSTOMER_COMMENT: (
                "The vulnerability is controlled in the product. Exploitation "
                "requires privileged local access. No customer action is required."
            ),
            InstructionKind.VECTOR: (
                "Modified Attack Vector is Local. Modified Attack Complexity is "
                "High. Confidentiality Requirement is High. Integrity Requirement "
                "is High. Availability Requirement is Medium."
            ),
        },
    ),
    MockFixture(
        name="component-absent",
        component_names=["OpenSSL", "Log4j", "zlib"],
        responses={
            InstructionKind.CATEGORY: "Component not present. Category: NotAffected",
            InstructionKind.INTERNAL_COMMENT: (
                "The affected component is not shipped with the product. The "
                "vulnerable library is absent from the installation media."
            ),
            InstructionKind.CUSTOMER_COMMENT: (
                "The product does not contain the affected component. No action "
                "is required."
            ),
            InstructionKind.VECTOR: "Modified Attack Vector is Network.",
        },
    ),
    MockFixture(
        name="generic-affected",
        component_names=[],
        responses={
            InstructionKind.CATEGORY: "Category: Affected",
            InstructionKind.INTERNAL_COMMENT: (
                "The vulnerability affects a component deployed in the system. "
                "Exploitation is constrained by the product network configuration. "
                "Compensating controls limit the exposure."
            ),
            InstructionKind.CUSTOMER_COMMENT: (
                "A fix for the affected component is planned for the next "
                "maintenance release. Restrict network access to the system as a "
                "precaution."
            ),
            InstructionKind.VECTOR: (
                "Modified Attack Vector is Adjacent. Confidentiality Requirement "
                "is High. Integrity Requirement is Medium. Availability "
                "Requirement is Medium."
            ),
        },
    ),
]


class MockBackend(Backend):
    """Deterministic fixture-table backend.

    A prompt is keyed by (instruction kind, SHA-256 of its Input section);
    exact keys registered via register() win, otherwise the nearest fixture
    by component-name overlap answers, ties broken by lowest fixture-name
    hash. Every completion ends with the stop sequence.
    """

    def __init__(self, fixtures: Optional[list[MockFixture]] = None):
        self.fixtures = fixtures if fixtures is not None else list(DEFAULT_MOCK_FIXTURES)
        self._exact: dict[tuple[InstructionKind, str], str] = {}
        self.calls: list[dict] = []

    @staticmethod
    def input_hash(input_section: str) -> str:
        return hashlib.sha256(input_section.encode("utf-8")).hexdigest()

    def register(self, kind: InstructionKind, input_section: str, response: str) -> None:
        self._exact[(kind, self.input_hash(input_section))] = response

    def _nearest_fixture(self, input_section: str) -> MockFixture:
        lowered = input_section.lower()

        def sort_key(fixture: MockFixture):
            overlap = sum(1 for name in fixture.component_names if name.lower() in lowered)
            name_hash = hashlib.sha256(fixture.name.encode("utf-8")).hexdigest()
            return (-overlap, name_hash)

        return min(self.fixtures, key=sort_key)

    def _complete(self, prompt: str, params: GenParams) -> str:
        instruction = _INSTRUCTION_RE.search(prompt)
        input_match = _INPUT_RE.search(prompt)
        kind = _KIND_BY_INSTRUCTION.get(instruction.group(1)) if instruction else None
        input_section = input_match.group(1) if input_match else prompt
        if kind is None:
            return f"Unrecognized instruction.\n{params.stop_sequence}"
        exact = self._exact.get((kind, self.input_hash(input_section)))
        if exact is not None:
            response = exact
        else:
            response = self._nearest_fixture(input_section).responses[kind]
        return f"{response}\n{params.stop_sequence}"

    def generate(
        self,
        prompts: Sequence[str],
        params: GenParams,
        context_length: Optional[int] = None,
    ) -> list[str]:
        self.calls.append({"n": len(prompts), "context_length": context_length})
        return [self._complete(prompt, params) for prompt in prompts]


# ---------------------------------------------------------------------------
# Draft generation


def params_for_kind(kind: InstructionKind, params: Optional[GenParams] = None) -> GenParams:
    base = params or GenParams()
    return replace(base, max_new_tokens=MAX_NEW_TOKENS[kind])


def generate_evaluation_drafts(
    backend: Backend,
    store: Store,
    notification_id: str,
    params: Optional[GenParams] = None,
    asset_ids: Optional[Sequence[str]] = None,
    tokenizer: Optional[Tokenizer] = None,
) -> list[Evaluation]:
    """Render the four prompts per applicable asset, run them through the
    backend, and assemble corrected draft evaluations (not yet stored).

    Raises PartialFailure when only a subset of assets produced drafts.
    """
    notification = store.get_notification(notification_id)
    if asset_ids is None:
        asset_ids = store.applicable_assets(notification)
    prompts_by_kind: dict[InstructionKind, list[str]] = {k: [] for k in InstructionKind}
    prompt_assets: list[str] = []
    errors: dict[str, str] = {}
    for asset_id in asset_ids:
        asset = store.get_asset(asset_id)
        try:
            ctx = build_context(asset, notification)
            rendered = {kind: render_prompt(ctx, kind) for kind in InstructionKind}
        except ValueError as exc:
            errors[asset_id] = str(exc)
            continue
        prompt_assets.append(asset_id)
        for kind in InstructionKind:
            prompts_by_kind[kind].append(rendered[kind])

    completions_by_kind = {
        kind: run_prompts(backend, prompts_by_kind[kind], params_for_kind(kind, params), tokenizer)
        for kind in InstructionKind
    }

    drafts = []
    for position, asset_id in enumerate(prompt_assets):
        raw = RawDraft(
            category_text=completions_by_kind[InstructionKind.CATEGORY][position],
            internal_text=completions_by_kind[InstructionKind.INTERNAL_COMMENT][position],
            customer_text=completions_by_kind[InstructionKind.CUSTOMER_COMMENT][position],
            vector_text=completions_by_kind[InstructionKind.VECTOR][position],
        )
        template = Evaluation(
            id=store.new_id("EV"),
            asset_id=asset_id,
            notification_id=notification_id,
            provenance=Provenance.AI_DRAFT,
        )
        evaluation, report = assemble_evaluation(raw, template)
        if report.rules_fired:
            logger.debug("%s: rules fired %s", evaluation.id, report.rules_fired)
        drafts.append(evaluation)

    if errors and drafts:
        raise PartialFailure(drafts, errors)
    if errors:
        raise PartialFailure([], errors)
    return drafts
