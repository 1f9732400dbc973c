"""Command-line interface.

Subcommands: ingest, cskg, cvss, load, corpus, generate, score, serve.
State lives in a data directory (default ./vulneval_data) holding the store
journal plus cached normalized catalogs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import catalog, cskg, cvss, evalmetrics, ingest, promptgen
from .inference import Backend, HttpBackend, MockBackend, generate_evaluation_drafts
from .service import ReviewService, create_app

logger = logging.getLogger(__name__)

ENV_BACKEND_URL = "VULNEVAL_BACKEND_URL"
ENV_BACKEND_TOKEN = "VULNEVAL_BACKEND_TOKEN"


def _data_dir(args) -> str:
    os.makedirs(args.data_dir, exist_ok=True)
    return args.data_dir


def _open_store(args) -> catalog.Store:
    return catalog.Store(journal_path=os.path.join(_data_dir(args), "journal.jsonl"))


def _make_backend(name: str, url: str | None) -> Backend:
    if name == "mock":
        return MockBackend()
    base_url = url or os.environ.get(ENV_BACKEND_URL)
    if not base_url:
        raise SystemExit(f"http backend needs --url or ${ENV_BACKEND_URL}")
    return HttpBackend(base_url, auth_token=os.environ.get(ENV_BACKEND_TOKEN))


def _feed_format(path: str, json_format: ingest.FeedFormat, xml_format: ingest.FeedFormat):
    return xml_format if path.lower().endswith(".xml") else json_format


def _load_catalogs(args):
    cves = cwes = capecs = None
    if args.cve:
        feed = ingest.fetch_feed(args.cve, ingest.FeedFormat(args.format))
        cves = ingest.parse_cve_feed(feed)
    if args.cwe:
        fmt = _feed_format(args.cwe, ingest.FeedFormat.COMPACT_CWE_JSON, ingest.FeedFormat.CWE_XML)
        cwes = ingest.parse_cwe_catalog(ingest.fetch_feed(args.cwe, fmt))
    if args.capec:
        fmt = _feed_format(
            args.capec, ingest.FeedFormat.COMPACT_CAPEC_JSON, ingest.FeedFormat.CAPEC_XML
        )
        capecs = ingest.parse_capec_catalog(ingest.fetch_feed(args.capec, fmt))
    return cves, cwes, capecs


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)


def cmd_ingest(args) -> int:
    data_dir = _data_dir(args)
    cves, cwes, capecs = _load_catalogs(args)
    if cves is None:
        raise SystemExit("ingest requires --cve")
    graph = cskg.Cskg.build(
        cves.records,
        cwes.records if cwes else [],
        capecs.records if capecs else [],
    )
    cve_path = os.path.join(data_dir, "cves.jsonl")
    with open(cve_path, "w", encoding="utf-8") as handle:
        for record in cves.records:
            handle.write(json.dumps(record.__dict__) + "\n")
    _write_json(os.path.join(data_dir, "graph.json"), json.loads(graph.to_json()))

    store = _open_store(args)
    created = 0
    for record in cves.records:
        enrichment = graph.enrich_many([record.id])
        notification = catalog.notification_from_cve(record, enrichment=enrichment)
        existing = store.notifications.get(notification.id)
        if existing is not None:
            notification.version = existing.version
        store.upsert_notification(notification)
        created += 1
    store.close()
    print(
        f"ingested {len(cves.records)} CVEs ({cves.skipped} skipped), "
        f"{len(graph.cwes)} CWEs, {len(graph.capecs)} CAPECs; "
        f"{created} notifications; {len(graph.dangling)} dangling references"
    )
    return 0


def cmd_cskg_export(args) -> int:
    if args.cve or args.cwe or args.capec:
        cves, cwes, capecs = _load_catalogs(args)
        graph = cskg.Cskg.build(
            cves.records if cves else [],
            cwes.records if cwes else [],
            capecs.records if capecs else [],
        )
        output = graph.to_json()
    else:
        # No feeds given: dump the graph the last ingest wrote.
        graph_path = os.path.join(_data_dir(args), "graph.json")
        if not os.path.exists(graph_path):
            raise SystemExit(f"no feeds given and {graph_path} does not exist; run ingest first")
        with open(graph_path, encoding="utf-8") as handle:
            output = handle.read().rstrip("\n")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(output + "\n")
        print(f"wrote {args.out}")
    else:
        print(output)
    return 0


def cmd_cvss(args) -> int:
    vector = cvss.parse_vector(args.vector)
    if args.cvss_command == "score":
        scores = cvss.score_vector(vector)
        temporal = f"{scores.temporal:.1f}" if scores.temporal is not None else "-"
        environmental = (
            f"{scores.environmental:.1f}" if scores.environmental is not None else "-"
        )
        print(f"base: {scores.base:.1f}")
        print(f"temporal: {temporal}")
        print(f"environmental: {environmental}")
    else:
        print(cvss.describe_vector(vector))
    return 0


def cmd_load(args) -> int:
    store = _open_store(args)
    for kind, path in (
        ("assets", args.assets),
        ("notifications", args.notifications),
        ("evaluations", args.evaluations),
    ):
        if path:
            count = store.load_jsonl(kind, path)
            print(f"loaded {count} {kind}")
    store.close()
    return 0


def cmd_corpus_build(args) -> int:
    data_dir = _data_dir(args)
    store = _open_store(args)
    try:
        ratios = promptgen.parse_split_spec(args.split)
    except ValueError as exc:
        raise SystemExit(f"bad --split {args.split!r}: {exc}")

    entries = []
    for evaluation in sorted(store.evaluations.values(), key=lambda e: e.id):
        if evaluation.provenance is catalog.Provenance.AI_DRAFT:
            continue
        asset = store.get_asset(evaluation.asset_id)
        notification = store.get_notification(evaluation.notification_id)
        ctx = promptgen.build_context(asset, notification)
        entries.extend(promptgen.build_sft_entries(evaluation, ctx))
    kept, dropped = promptgen.filter_corpus(entries)
    splits = promptgen.split_records(kept, ratios, args.seed)
    names = ["train", "validation", "test"][: len(splits)]
    for name, split in zip(names, splits):
        path = os.path.join(data_dir, f"sft_{name}.jsonl")
        with open(path, "w", encoding="utf-8") as handle:
            for entry in split:
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
        print(f"sft {name}: {len(split)} entries")
    print(f"sft dropped: {len(dropped)}")

    cve_path = os.path.join(data_dir, "cves.jsonl")
    if os.path.exists(cve_path):
        documents = []
        with open(cve_path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    record = ingest.CveRecord(**json.loads(line))
                    text = promptgen.build_dapt_document(record)
                    if text:
                        documents.append(text)
        dapt_splits = promptgen.split_records(documents, [0.9, 0.1], args.seed)
        for name, split in zip(["train", "validation"], dapt_splits):
            path = os.path.join(data_dir, f"dapt_{name}.jsonl")
            with open(path, "w", encoding="utf-8") as handle:
                for text in split:
                    handle.write(json.dumps({"text": text}) + "\n")
            print(f"dapt {name}: {len(split)} documents")
    store.close()
    return 0


def cmd_generate(args) -> int:
    store = _open_store(args)
    backend = _make_backend(args.backend, args.url)
    drafts = generate_evaluation_drafts(backend, store, args.notification)
    stored = 0
    for draft in drafts:
        existing = store.evaluation_for_pair(draft.asset_id, draft.notification_id)
        if existing is not None:
            print(f"skipping existing evaluation for {draft.asset_id}")
            continue
        store.upsert_evaluation(draft)
        stored += 1
        print(f"{draft.id}: {draft.asset_id} -> {draft.vex_category.value}")
    store.close()
    skipped = len(drafts) - stored
    print(f"{stored} drafts" + (f" ({skipped} skipped)" if skipped else ""))
    return 0


def _read_evaluations(path: str) -> list[catalog.Evaluation]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(catalog.evaluation_from_dict(json.loads(line)))
    return records


def cmd_score(args) -> int:
    generated = _read_evaluations(args.generated)
    gold = _read_evaluations(args.gold)
    report = evalmetrics.evaluate_run(generated, gold)
    print(report.to_table())
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as handle:
            handle.write(report.to_json() + "\n")
        print(f"wrote {args.json_out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    store = _open_store(args)
    backend = _make_backend(args.backend, args.url)
    service = ReviewService(
        store,
        backend,
        auth_token=args.auth_token,
        export_dir=_data_dir(args),
    )
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vulneval")
    parser.add_argument(
        "--data-dir", default="./vulneval_data", help="state directory (journal, corpora)"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="parse catalog feeds and build notifications")
    p_ingest.add_argument("--cve", required=True, help="CVE feed path or URL")
    p_ingest.add_argument("--cwe", help="CWE catalog path (xml or compact json)")
    p_ingest.add_argument("--capec", help="CAPEC catalog path (xml or compact json)")
    p_ingest.add_argument(
        "--format",
        default=ingest.FeedFormat.COMPACT_FIXTURE_JSON.value,
        choices=[ingest.FeedFormat.NVD_JSON.value, ingest.FeedFormat.COMPACT_FIXTURE_JSON.value],
        help="CVE feed format",
    )
    p_ingest.set_defaults(func=cmd_ingest)

    p_cskg = sub.add_parser("cskg", help="knowledge graph utilities")
    cskg_sub = p_cskg.add_subparsers(dest="cskg_command", required=True)
    p_export = cskg_sub.add_parser("export", help="export the adjacency JSON")
    p_export.add_argument("--cve", help="CVE feed path or URL")
    p_export.add_argument("--cwe", help="CWE catalog path")
    p_export.add_argument("--capec", help="CAPEC catalog path")
    p_export.add_argument(
        "--format", default=ingest.FeedFormat.COMPACT_FIXTURE_JSON.value
    )
    p_export.add_argument("--out", help="output path (default stdout)")
    p_export.set_defaults(func=cmd_cskg_export)

    p_cvss = sub.add_parser("cvss", help="score or describe a vector")
    cvss_sub = p_cvss.add_subparsers(dest="cvss_command", required=True)
    for name in ("score", "describe"):
        p = cvss_sub.add_parser(name)
        p.add_argument("vector")
        p.set_defaults(func=cmd_cvss)

    p_load = sub.add_parser("load", help="import JSONL datasets")
    p_load.add_argument("--assets")
    p_load.add_argument("--notifications")
    p_load.add_argument("--evaluations")
    p_load.set_defaults(func=cmd_load)

    p_corpus = sub.add_parser("corpus", help="corpus building")
    corpus_sub = p_corpus.add_subparsers(dest="corpus_command", required=True)
    p_build = corpus_sub.add_parser("build")
    p_build.add_argument("--split", default="0.9/0.05/0.05")
    p_build.add_argument("--seed", type=int, default=0)
    p_build.set_defaults(func=cmd_corpus_build)

    p_generate = sub.add_parser("generate", help="draft evaluations for a notification")
    p_generate.add_argument("--notification", required=True)
    p_generate.add_argument("--backend", default="mock", choices=["mock", "http"])
    p_generate.add_argument("--url", help="http backend base URL")
    p_generate.set_defaults(func=cmd_generate)

    p_score = sub.add_parser("score", help="score generated evaluations against gold")
    p_score.add_argument("--generated", required=True)
    p_score.add_argument("--gold", required=True)
    p_score.add_argument("--json-out")
    p_score.set_defaults(func=cmd_score)

    p_serve = sub.add_parser("serve", help="run the review service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--backend", default="mock", choices=["mock", "http"])
    p_serve.add_argument("--url", help="http backend base URL")
    p_serve.add_argument("--auth-token")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ingest.MalformedFeed, ingest.UnsupportedFormat, cvss.MalformedVector) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
