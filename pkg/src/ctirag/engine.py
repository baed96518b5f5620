"""Per-query pipeline orchestration and interactive session state.

Each query runs embed -> retrieve -> assemble context -> answer completion ->
graph completion, then appends the exchange to the conversation. Graph
extraction failures never fail the answer: they degrade to an empty graph
with a warning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .corpus import ChunkConfig, chunk_corpus, load_directory
from .embedding import Embedder
from .gateway import (
    Conversation,
    Gateway,
    GatewayError,
    MalformedModelRef,
    ModelRef,
    build_graph_prompt,
    build_rag_prompt,
)
from .kgraph import KGraphError, KnowledgeGraph, NoTriplesFound, build_graph, parse_triples
from .vectorstore import SearchHit, StoredChunk, VectorStore

logger = logging.getLogger(__name__)

HELP_TEXT = """Commands:
  /quit                           exit the session
  /help                           show this message
  /clean_history                  reset the conversation (model kept)
  /change_model <provider:model>  switch the active model (history kept)
Anything else is sent to the engine as a question."""


@dataclass
class EngineConfig:
    model: ModelRef
    top_k: int = 6
    context_joiner: str = "\n\n"
    graph_enabled: bool = True

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class QueryResult:
    answer: str
    graph: KnowledgeGraph
    hits: list[SearchHit]
    context: str
    skipped_triples: int


@dataclass
class Session:
    store: VectorStore
    embedder: Embedder
    gateway: Gateway
    config: EngineConfig
    conversation: Conversation = None  # type: ignore[assignment]
    turn_counter: int = 0

    def __post_init__(self):
        if self.conversation is None:
            self.conversation = Conversation(active_model=self.config.model)


@dataclass
class CommandOutcome:
    kind: str  # "quit" | "help" | "ok" | "error"
    message: str
    code: str | None = None


def answer_query(session: Session, question: str) -> QueryResult:
    """Run the full pipeline for one question and record the exchange."""
    if not question or not question.strip():
        raise ValueError("question must be non-empty")

    query_vec = session.embedder.embed_text(question)
    hits = session.store.top_k(query_vec, session.config.top_k)
    context = session.config.context_joiner.join(hit.text for hit in hits)

    bundle = build_rag_prompt(question, context, session.conversation)
    answer = session.gateway.complete(session.conversation.active_model, bundle.messages)

    graph = KnowledgeGraph()
    skipped = 0
    if session.config.graph_enabled and context:
        try:
            graph_bundle = build_graph_prompt(context)
            raw = session.gateway.complete(session.conversation.active_model, graph_bundle.messages)
            parsed = parse_triples(raw)
            graph = build_graph(parsed.triples)
            skipped = parsed.skipped
        except NoTriplesFound as exc:
            skipped = exc.skipped
            logger.warning("graph extraction produced no triples: %s", exc)
        except (GatewayError, KGraphError) as exc:
            logger.warning("graph extraction failed, continuing without a graph: %s", exc)

    session.conversation.append_exchange(question, answer)
    session.turn_counter += 1
    return QueryResult(answer=answer, graph=graph, hits=hits, context=context, skipped_triples=skipped)


def handle_command(session: Session, line: str) -> CommandOutcome:
    """Interpret a "/" command against the session."""
    parts = line.strip().split(maxsplit=1)
    command = parts[0]
    argument = parts[1] if len(parts) > 1 else ""

    if command == "/quit":
        return CommandOutcome("quit", "bye")
    if command == "/help":
        return CommandOutcome("help", HELP_TEXT)
    if command == "/clean_history":
        session.conversation.clear_history()
        return CommandOutcome("ok", "conversation history cleared")
    if command == "/change_model":
        try:
            ref = ModelRef.parse(argument)
        except MalformedModelRef as exc:
            return CommandOutcome("error", str(exc), code="malformed_model_ref")
        if not session.gateway.knows_provider(ref.provider):
            return CommandOutcome("error", f"unknown provider {ref.provider!r}", code="unknown_provider")
        session.conversation.switch_model(ref)
        return CommandOutcome("ok", f"model set to {ref.canonical()}")
    return CommandOutcome("error", f"unknown command {command!r} (try /help)", code="unknown_command")


def ingest_directory(
    data_dir,
    store_path,
    embedder: Embedder,
    cfg: ChunkConfig | None = None,
    pdf_extractor=None,
    on_error: str = "abort",
) -> VectorStore:
    """Offline pipeline: load -> chunk -> embed -> rebuild the store."""
    docs = load_directory(data_dir, pdf_extractor=pdf_extractor, on_error=on_error)
    chunks = chunk_corpus(docs, cfg)
    vectors = embedder.embed_batch([chunk.text for chunk in chunks])
    stored = [
        StoredChunk(
            chunk_id=chunk.chunk_id,
            vector=vector,
            text=chunk.text,
            metadata={
                "source": chunk.source,
                "page_index": chunk.page_index,
                "chunk_index_on_page": chunk.chunk_index_on_page,
            },
        )
        for chunk, vector in zip(chunks, vectors)
    ]
    return VectorStore.rebuild(store_path, stored, dim=embedder.dim)
