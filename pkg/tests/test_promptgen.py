"""Prompt rendering, SFT corpus assembly, and tokenizer tests."""

import pytest

from vulneval.catalog import Evaluation, VexCategory, VexJustification
from vulneval.cvss import CvssVector, parse_vector
from vulneval.promptgen import (
    MAX_SFT_TOKENS,
    PREAMBLE,
    STOP_MARKER,
    IncompleteContext,
    InstructionKind,
    PromptContext,
    VocabularyTokenizer,
    WhitespacePieceTokenizer,
    build_context,
    build_dapt_document,
    build_sft_entries,
    filter_corpus,
    gold_response,
    parse_split_spec,
    render_enrichment_list,
    render_prompt,
    split_records,
)

from conftest import golden_text


def make_evaluation(**overrides):
    fields = dict(
        id="EV-1",
        asset_id="AST-RST",
        notification_id="NTF-RST",
        vex_category=VexCategory.AFFECTED,
        internal_comment="Exploitation requires local access.",
        customer_comment="No action required.",
        environmental_vector=CvssVector("3.1", {"MAV": "L", "MAC": "H", "CR": "H", "IR": "H", "AR": "M"}),
    )
    fields.update(overrides)
    return Evaluation(**fields)


# -- prompt rendering ---------------------------------------------------------


def test_internal_comment_prompt_matches_golden(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    prompt = render_prompt(ctx, InstructionKind.INTERNAL_COMMENT)
    assert prompt == golden_text("rst_prompt.txt")


def test_prompt_block_structure(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    prompt = render_prompt(ctx, InstructionKind.INTERNAL_COMMENT)
    blocks = prompt.split("\n\n")
    assert blocks[0] == PREAMBLE
    assert blocks[1] == "### Instruction: Generate internal comment."
    assert blocks[2] == "### Input:"
    assert blocks[-1] == "### Response:"
    # Every labeled field sits in its own block.
    labels = [b.split(":", 1)[0] for b in blocks[3:-1]]
    assert labels == [
        "Organization",
        "Software",
        "Product",
        "Notification",
        "Prerequisites",
        "Typical severity",
        "Mitigations",
        "Components present in software",
        "Base and Temporal Vectors",
        "CVSS Version",
    ]


def test_mitigations_only_in_internal_comment_prompt(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    for kind in InstructionKind:
        prompt = render_prompt(ctx, kind)
        if kind is InstructionKind.INTERNAL_COMMENT:
            assert "Mitigations:" in prompt
        else:
            assert "Mitigations:" not in prompt


def test_instruction_lines_per_kind(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    expected = {
        InstructionKind.CATEGORY: "What is the category?",
        InstructionKind.INTERNAL_COMMENT: "Generate internal comment.",
        InstructionKind.CUSTOMER_COMMENT: "Generate customer comment.",
        InstructionKind.VECTOR: "Generate environmental vectors.",
    }
    for kind, text in expected.items():
        assert f"### Instruction: {text}" in render_prompt(ctx, kind)


def test_optional_fields_omitted_when_empty(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    ctx.prerequisites = []
    ctx.mitigations = []
    ctx.common_components = []
    prompt = render_prompt(ctx, InstructionKind.INTERNAL_COMMENT)
    assert "Prerequisites:" not in prompt
    assert "Mitigations:" not in prompt
    assert "Components present in software:" not in prompt


def test_missing_required_field_raises_with_label(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    ctx.notification_text = ""
    with pytest.raises(IncompleteContext) as err:
        render_prompt(ctx, InstructionKind.CATEGORY)
    assert "Notification" in str(err.value)


def test_build_context_fields(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    assert ctx.organization == "DI-DnA"
    assert ctx.software == "Syngo Carbon Monitoring"
    assert ctx.product == "Syngo Carbon Monitoring VB12A"
    assert ctx.cvss_version == "3.1"
    assert ctx.base_temporal_description == golden_text("rst_description.txt")
    assert len(ctx.common_components) == 6


def test_enrichment_list_rendering():
    assert render_enrichment_list([]) == ""
    assert render_enrichment_list(["only item"]) == "only item"
    assert render_enrichment_list(["a", "b", "c"]) == "(1) a (2) b (3) c"


# -- gold responses -----------------------------------------------------------


def test_gold_response_category_without_justification():
    evaluation = make_evaluation(vex_justification=None)
    text, complete = gold_response(evaluation, InstructionKind.CATEGORY)
    assert text == "Category: Affected"
    assert complete


def test_gold_response_category_with_justification():
    evaluation = make_evaluation(
        vex_category=VexCategory.NOT_AFFECTED,
        vex_justification=VexJustification.COMPONENT_NOT_PRESENT,
        environmental_vector=None,
    )
    text, complete = gold_response(evaluation, InstructionKind.CATEGORY)
    assert text == "Component not present. Category: NotAffected"
    assert complete


def test_gold_response_vector_describes_environmental():
    evaluation = make_evaluation()
    text, complete = gold_response(evaluation, InstructionKind.VECTOR)
    assert complete
    # Canonical order: requirements first, then modified base metrics.
    assert text == (
        "Confidentiality Requirement is High. Integrity Requirement is High. "
        "Availability Requirement is Medium. Modified Attack Vector is Local. "
        "Modified Attack Complexity is High."
    )


def test_gold_response_incomplete_fields():
    evaluation = make_evaluation(internal_comment="", environmental_vector=None)
    assert gold_response(evaluation, InstructionKind.INTERNAL_COMMENT) == ("", False)
    assert gold_response(evaluation, InstructionKind.VECTOR) == ("", False)
    # A base-only vector carries no environmental metrics to describe.
    base_only = make_evaluation(
        environmental_vector=parse_vector("CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H")
    )
    assert gold_response(base_only, InstructionKind.VECTOR) == ("", False)


# -- SFT corpus -----------------------------------------------------------------


def test_sft_entry_text_matches_golden(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    evaluation = make_evaluation(
        internal_comment=golden_text("rst_sft.txt").split("### Response: ", 1)[1].rsplit("\n<STOP>", 1)[0]
    )
    entries = build_sft_entries(evaluation, ctx)
    internal = next(e for e in entries if e.kind is InstructionKind.INTERNAL_COMMENT)
    assert internal.text == golden_text("rst_sft.txt")


def test_build_sft_entries_covers_all_kinds(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    entries = build_sft_entries(make_evaluation(), ctx)
    assert [e.kind for e in entries] == list(InstructionKind)
    assert all(e.complete for e in entries)
    assert all(e.response.endswith(f"\n{STOP_MARKER}") for e in entries)
    assert all(e.token_count > 0 for e in entries)


def test_build_sft_entries_marks_missing_gold_incomplete(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    entries = build_sft_entries(make_evaluation(customer_comment=""), ctx)
    incomplete = [e.kind for e in entries if not e.complete]
    assert incomplete == [InstructionKind.CUSTOMER_COMMENT]


def test_sft_prompt_response_reparse(rst_asset, rst_notification):
    ctx = build_context(rst_asset, rst_notification)
    for entry in build_sft_entries(make_evaluation(), ctx):
        prompt, _, response = entry.text.partition("### Response: ")
        assert prompt + "### Response:" == entry.prompt
        assert response == entry.response


def test_filter_corpus_by_budget_and_completeness():
    from vulneval.promptgen import SftEntry

    def entry(tokens, complete=True):
        return SftEntry(
            kind=InstructionKind.CATEGORY,
            prompt="p",
            response="r",
            token_count=tokens,
            complete=complete,
        )

    short = entry(900)
    long = entry(1025)
    missing = entry(100, complete=False)
    kept, dropped = filter_corpus([short, long, missing])
    assert kept == [short]
    assert dropped == [long, missing]
    assert MAX_SFT_TOKENS == 1024


# -- tokenizers ------------------------------------------------------------------


def test_whitespace_piece_tokenizer():
    tokenizer = WhitespacePieceTokenizer()
    assert tokenizer.count("") == 0
    assert tokenizer.count("hi") == 1
    assert tokenizer.count("word") == 1
    assert tokenizer.count("multisyllabic") == 4  # 13 chars -> ceil(13/4)
    assert tokenizer.count("a bb ccc dddd") == 4


def test_whitespace_piece_tokenizer_subadditive():
    import random

    tokenizer = WhitespacePieceTokenizer()
    rng = random.Random(7)
    words = ["lorem", "ipsum", "x", "hyperventilation", "12345678"]
    for _ in range(100):
        left = " ".join(rng.choices(words, k=rng.randint(0, 5)))
        right = " ".join(rng.choices(words, k=rng.randint(0, 5)))
        joined = f"{left} {right}".strip()
        assert tokenizer.count(joined) == tokenizer.count(left) + tokenizer.count(right)


def test_vocabulary_tokenizer_greedy_longest_match():
    tokenizer = VocabularyTokenizer(["alpha", "alphabet", "bet"])
    assert tokenizer.count("alphabet") == 1  # longest match wins
    assert tokenizer.count("alphabets") == 2  # alphabet + fallback "s"
    assert tokenizer.count("alpha bet") == 2
    assert tokenizer.count("xyz") == 3  # unmatched chars count one each


# -- pretraining documents -------------------------------------------------------


def test_build_dapt_document_sections(cve_records):
    record = next(c for c in cve_records if c.id == "CVE-2022-43456")
    document = build_dapt_document(record)
    assert document.startswith(record.title)
    assert "Attack Vector is Local." in document
    assert "Affected versions:" in document
    assert "Unaffected versions: 16.0.0." in document
    assert "Mitigations:" in document
    # Single space between sections, no stray double spaces from joins.
    assert "  " not in document


def test_build_dapt_document_skips_unparsed_vector(cve_records):
    record = next(c for c in cve_records if c.id == "CVE-2009-0042")
    document = build_dapt_document(record)
    assert "Attack Vector" not in document


# -- corpus splits ----------------------------------------------------------------


def test_split_records_deterministic_partition():
    records = list(range(100))
    first = split_records(records, [0.9, 0.05, 0.05], seed=0)
    second = split_records(records, [0.9, 0.05, 0.05], seed=0)
    assert first == second
    assert [len(part) for part in first] == [90, 5, 5]
    combined = sorted(x for part in first for x in part)
    assert combined == records
    shuffled = split_records(records, [0.9, 0.05, 0.05], seed=1)
    assert shuffled != first


def test_split_records_rejects_bad_ratios():
    with pytest.raises(ValueError):
        split_records([1, 2], [0.5, 0.2], seed=0)


def test_parse_split_spec():
    assert parse_split_spec("0.9/0.05/0.05") == [0.9, 0.05, 0.05]
    assert parse_split_spec("0.9,0.05,0.05") == [0.9, 0.05, 0.05]
    with pytest.raises(ValueError):
        parse_split_spec("")
    with pytest.raises(ValueError):
        parse_split_spec("half/half")
    # Ratio-sum validation happens at split time, not parse time.
    with pytest.raises(ValueError):
        split_records([1, 2], parse_split_spec("0.5/0.2"), seed=0)
