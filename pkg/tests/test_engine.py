import pytest

from ctirag.corpus import ChunkConfig, chunk_corpus, load_directory
from ctirag.embedding import HashedEmbedder
from ctirag.engine import (
    CommandOutcome,
    EngineConfig,
    Session,
    answer_query,
    handle_command,
    ingest_directory,
)
from ctirag.gateway import Gateway, GatewayError, ModelRef
from ctirag.vectorstore import StoredChunk, VectorStore

from conftest import BOLA_QUESTION, bola_mock_script

MOCK_MODEL = ModelRef.parse("mock:scripted")


def make_store(tmp_path, texts, dim=384):
    emb = HashedEmbedder(dim=dim)
    chunks = [
        StoredChunk(f"doc.txt_p0_c{i}", vec, text, {"source": "doc.txt", "page_index": 0, "chunk_index_on_page": i})
        for i, (text, vec) in enumerate(zip(texts, emb.embed_batch(texts)))
    ]
    return VectorStore.rebuild(tmp_path / "store", chunks, dim=dim), emb


def make_session(store, emb, script, top_k=6, graph_enabled=True):
    gateway = Gateway(mock_script=script)
    config = EngineConfig(model=MOCK_MODEL, top_k=top_k, graph_enabled=graph_enabled)
    return Session(store=store, embedder=emb, gateway=gateway, config=config)


TEXTS = [
    "Ransomware encrypts files and demands payment in cryptocurrency.",
    "Phishing emails lure victims into revealing credentials.",
    "A botnet is a network of compromised machines under one controller.",
    "Zero day vulnerabilities are unknown to the vendor.",
    "Lateral movement lets attackers reach high value systems.",
    "Multifactor authentication blocks most credential stuffing.",
    "Patch management closes known vulnerabilities quickly.",
]


def test_answer_query_full_pipeline(tmp_path):
    store, emb = make_store(tmp_path, TEXTS)
    session = make_session(store, emb, [{"match": "Question:", "response": "scripted answer"}])
    result = answer_query(session, "How does ransomware work?")
    assert result.answer == "scripted answer"
    assert 1 <= len(result.hits) <= 6
    assert result.context == "\n\n".join(h.text for h in result.hits)
    assert session.turn_counter == 1
    assert [t.role for t in session.conversation.turns] == ["user", "assistant"]
    # ransomware chunk should rank first for a ransomware question
    assert result.hits[0].chunk_id == "doc.txt_p0_c0"


def test_answer_query_empty_store(tmp_path):
    store = VectorStore.rebuild(tmp_path / "s", [], dim=384)
    session = make_session(store, HashedEmbedder(dim=384), [{"match": "", "response": "echo: {{last_user}}"}])
    result = answer_query(session, "anything at all?")
    assert result.hits == []
    assert result.context == ""
    assert result.answer.startswith("echo:")
    assert result.graph.nodes == []
    assert result.skipped_triples == 0


def test_answer_query_requires_question(tmp_path):
    store, emb = make_store(tmp_path, TEXTS[:2])
    session = make_session(store, emb, [])
    with pytest.raises(ValueError):
        answer_query(session, "   ")


def test_graph_failure_never_breaks_answer(tmp_path):
    store, emb = make_store(tmp_path, TEXTS)
    script = [
        {"match": "Return ONLY a JSON array", "response": "total garbage, no json"},
        {"match": "Question:", "response": "the answer"},
    ]
    session = make_session(store, emb, script)
    result = answer_query(session, "what is phishing?")
    assert result.answer == "the answer"
    assert result.graph.nodes == [] and result.graph.edges == []
    assert len(session.conversation.turns) == 2


def test_graph_skipped_elements_counted(tmp_path):
    store, emb = make_store(tmp_path, TEXTS)
    raw = '[{"subject":"A","relationship":"r","object":"B"}, {"bad": true}]'
    script = [
        {"match": "Return ONLY a JSON array", "response": raw},
        {"match": "Question:", "response": "fine"},
    ]
    session = make_session(store, emb, script)
    result = answer_query(session, "what is a botnet?")
    assert result.skipped_triples == 1
    assert result.graph.edges == [("A", "r", "B")]


def test_graph_disabled_skips_graph_call(tmp_path):
    store, emb = make_store(tmp_path, TEXTS)
    # no graph entry in the script: a graph call would raise MockScriptMiss,
    # which would be swallowed; instead assert no graph appears at all
    session = make_session(store, emb, [{"match": "Question:", "response": "x"}], graph_enabled=False)
    result = answer_query(session, "what is a zero day?")
    assert result.graph.nodes == []


def test_answer_error_propagates_and_leaves_state(tmp_path):
    store, emb = make_store(tmp_path, TEXTS)
    session = make_session(store, emb, [])  # empty script: every call misses
    with pytest.raises(GatewayError):
        answer_query(session, "anything?")
    assert session.conversation.turns == []
    assert session.turn_counter == 0


def test_retrieval_is_deterministic(tmp_path):
    store, emb = make_store(tmp_path, TEXTS)
    session = make_session(store, emb, [{"match": "", "response": "const"}], graph_enabled=False)
    first = answer_query(session, "credential attacks?")
    second = answer_query(session, "credential attacks?")
    assert [h.chunk_id for h in first.hits] == [h.chunk_id for h in second.hits]
    assert first.context == second.context
    assert first.answer == second.answer
    assert session.turn_counter == 2
    assert len(session.conversation.turns) == 4


def test_history_passed_to_model(tmp_path):
    store, emb = make_store(tmp_path, TEXTS)
    session = make_session(store, emb, [{"match": "", "response": "a"}], graph_enabled=False)
    answer_query(session, "first question?")
    bundle_capture = []
    original = session.gateway.complete

    def spy(model, messages, timeout=None):
        bundle_capture.append(list(messages))
        return original(model, messages, timeout)

    session.gateway.complete = spy
    answer_query(session, "second question?")
    messages = bundle_capture[0]
    assert [m.role for m in messages] == ["system", "user", "assistant", "user"]
    assert messages[1].content == "first question?"


# ---------------------------------------------------------------------------
# BOLA golden path
# ---------------------------------------------------------------------------


def test_bola_worked_example(tmp_path, bola_corpus_dir, bola_answer, bola_triples_raw):
    emb = HashedEmbedder()
    store = ingest_directory(bola_corpus_dir, tmp_path / "store", emb)
    gateway = Gateway(mock_script=bola_mock_script(bola_answer, bola_triples_raw))
    session = Session(store=store, embedder=emb, gateway=gateway, config=EngineConfig(model=MOCK_MODEL))

    result = answer_query(session, BOLA_QUESTION)
    assert "Broken Object Level Authorization" in result.answer
    assert len(result.graph.nodes) == 14
    assert len(result.graph.edges) == 10
    assert result.graph.edges[0] == ("BOLA", "arises from", "APIs exposing object identifiers")
    assert result.skipped_triples == 0
    assert len(result.hits) <= 6
    assert "Insecure Direct Object Reference" in result.context


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


@pytest.fixture
def command_session(tmp_path):
    store, emb = make_store(tmp_path, TEXTS[:3])
    return make_session(store, emb, [{"match": "", "response": "a"}], graph_enabled=False)


def test_clean_history_keeps_model(command_session):
    for question in ("q one?", "q two?", "q three?"):
        answer_query(command_session, question)
    outcome = handle_command(command_session, "/clean_history")
    assert outcome.kind == "ok"
    assert command_session.conversation.turns == []
    assert command_session.conversation.active_model == MOCK_MODEL


def test_change_model_keeps_history(command_session):
    answer_query(command_session, "q?")
    outcome = handle_command(command_session, "/change_model openai:gpt-4o")
    assert outcome.kind == "ok"
    assert command_session.conversation.active_model == ModelRef("openai", "gpt-4o")
    assert len(command_session.conversation.turns) == 2


def test_change_model_malformed(command_session):
    outcome = handle_command(command_session, "/change_model nonsense")
    assert outcome == CommandOutcome("error", outcome.message, code="malformed_model_ref")


def test_change_model_unknown_provider(command_session):
    outcome = handle_command(command_session, "/change_model nosuch:m")
    assert outcome.code == "unknown_provider"
    assert command_session.conversation.active_model == MOCK_MODEL


def test_unknown_command_leaves_state(command_session):
    answer_query(command_session, "q?")
    before = list(command_session.conversation.turns)
    outcome = handle_command(command_session, "/frobnicate")
    assert outcome.code == "unknown_command"
    assert command_session.conversation.turns == before


def test_quit_and_help(command_session):
    assert handle_command(command_session, "/quit").kind == "quit"
    help_outcome = handle_command(command_session, "/help")
    assert help_outcome.kind == "help"
    for token in ("/quit", "/help", "/clean_history", "/change_model"):
        assert token in help_outcome.message


# ---------------------------------------------------------------------------
# ingest pipeline
# ---------------------------------------------------------------------------


def test_ingest_directory_counts(tmp_path, bola_corpus_dir):
    emb = HashedEmbedder(dim=96)
    store = ingest_directory(bola_corpus_dir, tmp_path / "store", emb)
    expected = chunk_corpus(load_directory(bola_corpus_dir), ChunkConfig())
    assert store.stats() == {"count": len(expected), "dim": 96}
    assert len(expected) > 1
