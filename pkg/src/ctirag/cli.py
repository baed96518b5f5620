"""Command-line interface.

Default mode is the interactive query loop; ``--ingest`` runs the offline
pipeline and exits. ``eval run ...`` drives the benchmark harness and
``serve`` starts the HTTP service.
"""

from __future__ import annotations

import argparse
import json
import sys
import uuid
import webbrowser
from pathlib import Path

from .corpus import CorpusError
from .embedding import embedder_from_env
from .engine import EngineConfig, Session, answer_query, handle_command, ingest_directory
from .gateway import Gateway, GatewayError, MalformedModelRef, ModelRef
from .kgraph import write_graph_html
from .vectorstore import VectorStoreError, VectorStore

USE_DATA_DIR = "__data_dir__"


def _engine_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctirag", description="Ask questions over a threat-intel corpus.")
    parser.add_argument("--data-dir", default="./data", help="directory of source documents")
    parser.add_argument("--store-path", default="./store", help="vector store directory")
    parser.add_argument(
        "--ingest",
        nargs="?",
        const=USE_DATA_DIR,
        metavar="DIR",
        help="ingest DIR (default: --data-dir) into the store and exit",
    )
    parser.add_argument("--model", help="provider:model to chat with (prompted if omitted)")
    parser.add_argument("--top-k", type=int, default=6, help="chunks retrieved per question")
    parser.add_argument("--no-browser", action="store_true", help="do not open graph HTML in a browser")
    parser.add_argument("--mock-script", metavar="FILE", help="JSON script for the mock provider")
    parser.add_argument("--session-dir", default="./sessions", help="where transcripts and graphs are written")
    parser.add_argument("--skip-unreadable", action="store_true", help="skip unreadable files instead of aborting")
    return parser


def _run_ingest(args) -> int:
    source = args.data_dir if args.ingest == USE_DATA_DIR else args.ingest
    embedder = embedder_from_env()
    try:
        store = ingest_directory(
            source,
            args.store_path,
            embedder,
            on_error="skip" if args.skip_unreadable else "abort",
        )
    except (CorpusError, VectorStoreError) as exc:
        print(f"ingest failed: {exc}", file=sys.stderr)
        return 1
    print(f"Ingested {store.stats()['count']} chunks into {args.store_path}")
    return 0


def _resolve_model(args, gateway: Gateway) -> ModelRef:
    raw = args.model
    if not raw:
        raw = input("Model (provider:model): ").strip()
    ref = ModelRef.parse(raw)
    if not gateway.knows_provider(ref.provider):
        raise GatewayError(f"unknown provider {ref.provider!r} (UnknownProvider)")
    return ref


def run_cli(args) -> int:
    """Interactive loop: questions go through the engine, slash lines are
    session commands; each answered turn writes its graph HTML and one
    transcript line."""
    if args.ingest:
        return _run_ingest(args)

    embedder = embedder_from_env()
    gateway = Gateway(mock_script=args.mock_script)
    try:
        model = _resolve_model(args, gateway)
    except (MalformedModelRef, GatewayError) as exc:
        print(f"cannot start session: {exc}", file=sys.stderr)
        return 2
    try:
        store = VectorStore.open(args.store_path)
    except VectorStoreError as exc:
        print(f"cannot open store at {args.store_path}: {exc} (run --ingest first)", file=sys.stderr)
        return 2
    if store.dim != embedder.dim:
        print(f"store dim {store.dim} does not match embedder dim {embedder.dim}", file=sys.stderr)
        return 2

    config = EngineConfig(model=model, top_k=args.top_k)
    session = Session(store=store, embedder=embedder, gateway=gateway, config=config)
    session_id = uuid.uuid4().hex[:8]
    session_dir = Path(args.session_dir)
    session_dir.mkdir(parents=True, exist_ok=True)
    transcript_path = session_dir / f"transcript_{session_id}.jsonl"

    print(f"ctirag session {session_id} (model {model.canonical()}, /help for commands)")
    with open(transcript_path, "a", encoding="utf-8") as transcript:
        while True:
            try:
                line = input("> ").strip()
            except EOFError:
                break
            if not line:
                continue
            if line.startswith("/"):
                outcome = handle_command(session, line)
                if outcome.kind == "quit":
                    break
                print(outcome.message)
                continue
            try:
                result = answer_query(session, line)
            except (GatewayError, VectorStoreError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                continue
            print(result.answer)
            graph_path = session_dir / f"graph_{session_id}_{session.turn_counter}.html"
            write_graph_html(result.graph, graph_path, title=f"Turn {session.turn_counter}")
            if not args.no_browser:
                webbrowser.open(graph_path.resolve().as_uri())
            transcript.write(
                json.dumps(
                    {
                        "turn": session.turn_counter,
                        "question": line,
                        "hit_ids": [hit.chunk_id for hit in result.hits],
                        "answer": result.answer,
                        "skipped_triples": result.skipped_triples,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    print(f"Transcript: {transcript_path}")
    return 0


# ---------------------------------------------------------------------------
# eval subcommand
# ---------------------------------------------------------------------------


def _eval_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctirag eval", description="Benchmark harness.")
    sub = parser.add_subparsers(dest="action", required=True)
    run = sub.add_parser("run", help="run the benchmark")
    run.add_argument("--dataset", required=True, help="JSON array of QA items")
    run.add_argument("--corpus", required=True, help="directory of source documents")
    run.add_argument("--models", required=True, help="comma-separated provider:model list")
    run.add_argument("--rounds", type=int, default=3)
    run.add_argument("--judge", required=True, help="provider:model used as judge")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--top-k", type=int, default=6)
    run.add_argument("--mock-script", metavar="FILE")
    run.add_argument("--use-llm-counts", action="store_true", help="judge-counted metric denominators")
    run.add_argument("--parallelism", type=int, default=1)
    return parser


def _run_eval(argv) -> int:
    from . import evalsuite

    args = _eval_parser().parse_args(argv)
    embedder = embedder_from_env()
    gateway = Gateway(mock_script=args.mock_script)
    out = Path(args.out)
    try:
        models = [ModelRef.parse(part) for part in args.models.split(",") if part.strip()]
        judge = ModelRef.parse(args.judge)
        dataset = evalsuite.load_dataset(args.dataset)
        store = ingest_directory(args.corpus, out / "store", embedder)
        result = evalsuite.run_benchmark(
            dataset,
            models,
            rounds=args.rounds,
            judge_model=judge,
            store=store,
            embedder=embedder,
            gateway=gateway,
            top_k=args.top_k,
            use_llm_counts=args.use_llm_counts,
            parallelism=args.parallelism,
        )
    except (evalsuite.EvalError, GatewayError, CorpusError, VectorStoreError, MalformedModelRef) as exc:
        print(f"benchmark failed: {exc}", file=sys.stderr)
        return 1
    paths = evalsuite.write_outputs(result, out, dataset)
    for row in result.report["rounds"] + result.report["models"]:
        pct = "n/a" if row["match_pct"] is None else f"{row['match_pct']:.2f}%"
        print(f"{row['name']:<40} {row['category']:<6} {pct}")
    print(f"records: {len(result.records)}, outputs in {out}")
    if result.report["error_count"]:
        print(f"note: {result.report['error_count']} item(s) recorded an error", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# serve subcommand
# ---------------------------------------------------------------------------


def _serve_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctirag serve", description="HTTP service for the web UI.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--data-dir", default="./data")
    parser.add_argument("--store-path", default="./store")
    parser.add_argument("--model", default="mock:scripted", help="default session model")
    parser.add_argument("--mock-script", metavar="FILE")
    parser.add_argument("--webui-dir", default="frontend/dist", help="static UI bundle to serve at /")
    parser.add_argument("--top-k", type=int, default=6)
    return parser


def _run_serve(argv) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    args = _serve_parser().parse_args(argv)
    webui = Path(args.webui_dir)
    config = ServiceConfig(
        data_dir=Path(args.data_dir),
        store_path=Path(args.store_path),
        model=args.model,
        top_k=args.top_k,
        mock_script=args.mock_script,
        webui_dir=webui if webui.is_dir() else None,
    )
    app = create_app(config, embedder=embedder_from_env())
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "eval":
        return _run_eval(argv[1:])
    if argv and argv[0] == "serve":
        return _run_serve(argv[1:])
    return run_cli(_engine_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
