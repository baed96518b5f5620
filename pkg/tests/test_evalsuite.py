import json

import pytest

from ctirag.embedding import HashedEmbedder
from ctirag.engine import ingest_directory
from ctirag.evalsuite import (
    BenchmarkResult,
    EvalError,
    Judge,
    MetricScores,
    QAItem,
    UnparseableJudgeOutput,
    build_report,
    context_relevance,
    faithfulness,
    load_dataset,
    run_benchmark,
    self_eval_match,
    split_sentences,
    write_outputs,
)
from ctirag.gateway import Gateway, ModelRef

JUDGE = ModelRef.parse("mock:judge")


def scripted_judge(entries, use_llm_counts=False):
    return Judge(Gateway(mock_script=entries), JUDGE, use_llm_counts=use_llm_counts)


def statements_script(statements, verdicts, extra=()):
    """Judge script: decomposition returns the statements; each statement gets
    its scripted verdict."""
    entries = [{"match": "individual factual statements", "response": "\n".join(statements)}]
    entries += [
        {"match": stmt, "response": "Yes" if verdict else "No"}
        for stmt, verdict in zip(statements, verdicts)
    ]
    entries += list(extra)
    return entries


# ---------------------------------------------------------------------------
# sentence splitter (pinned denominator)
# ---------------------------------------------------------------------------


def test_split_sentences_basic():
    text = "One is here. Two follows! Three asks? Four ends"
    assert split_sentences(text) == ["One is here.", "Two follows!", "Three asks?", "Four ends"]


def test_split_sentences_requires_two_chars():
    # "A." has two non-whitespace chars and counts; a bare "!" does not
    assert split_sentences("A. ok. !") == ["A.", "ok."]
    assert split_sentences("! ? .") == []


def test_split_sentences_ignores_inline_dots():
    assert split_sentences("Version 1.2 shipped. Done.") == ["Version 1.2 shipped.", "Done."]


def test_split_sentences_empty():
    assert split_sentences("") == []
    assert split_sentences("   ") == []


# ---------------------------------------------------------------------------
# faithfulness
# ---------------------------------------------------------------------------


def test_faithfulness_four_of_five():
    statements = [f"statement number {i} stands alone" for i in range(5)]
    judge = scripted_judge(statements_script(statements, [True, True, True, True, False]))
    result = faithfulness("answer text", "context text", judge)
    assert result.score == pytest.approx(0.8)
    assert result.verdicts == [True, True, True, True, False]


def test_faithfulness_all_supported():
    statements = ["alpha fact", "beta fact", "gamma fact"]
    judge = scripted_judge(statements_script(statements, [True, True, True]))
    assert faithfulness("a", "c", judge).score == pytest.approx(1.0)


def test_faithfulness_unsupported_claim_is_flagged():
    # hand-labeled fixture: the middle claim is absent from the context
    statements = [
        "The loader arrived by email attachment",
        "The loader mined cryptocurrency",
        "The campaign targeted banks",
    ]
    judge = scripted_judge(statements_script(statements, [True, False, True]))
    result = faithfulness("answer", "context about email and banks", judge)
    assert result.score == pytest.approx(2 / 3)
    assert result.statements[result.verdicts.index(False)] == "The loader mined cryptocurrency"


def test_faithfulness_no_statements_is_undefined():
    # bullet markers with no content strip to zero statements
    judge = scripted_judge([{"match": "individual factual statements", "response": "- \n* "}])
    result = faithfulness("answer", "context", judge)
    assert result.score is None
    assert result.reason == "no_statements"


def test_faithfulness_fixture_table():
    # hand-computed ratios over a spread of verdict patterns
    cases = [(1, [True]), (2, [True, False]), (4, [False] * 4), (6, [True] * 5 + [False])]
    for n, verdicts in cases:
        statements = [f"stmt {i} of {n}" for i in range(n)]
        judge = scripted_judge(statements_script(statements, verdicts))
        expected = sum(verdicts) / n
        assert faithfulness("a", "c", judge).score == pytest.approx(expected)


def test_faithfulness_strips_numbering_from_decomposition():
    raw = "1. first fact\n2) second fact\n- third fact\n* fourth fact"
    entries = [{"match": "individual factual statements", "response": raw}]
    entries += [{"match": "fact", "response": "Yes"}]
    judge = scripted_judge(entries)
    result = faithfulness("a", "c", judge)
    assert result.statements == ["first fact", "second fact", "third fact", "fourth fact"]
    assert result.score == 1.0


def test_faithfulness_monotone_in_verdicts():
    statements = [f"s{i} claim" for i in range(4)]
    scores = []
    for flips in range(5):
        verdicts = [i < flips for i in range(4)]
        judge = scripted_judge(statements_script(statements, verdicts))
        scores.append(faithfulness("a", "c", judge).score)
    assert scores == sorted(scores)


def test_faithfulness_llm_counted_variant():
    statements = ["one fact", "two fact", "three fact"]
    extra = [{"match": "Count how many lines", "responses": ["2", "1"]}]
    judge = scripted_judge(statements_script(statements, [True, True, False], extra), use_llm_counts=True)
    result = faithfulness("a", "c", judge)
    assert result.llm_counts == {"yes": 2, "no": 1}
    assert result.score == pytest.approx(2 / 3)


def test_verdict_reprompt_then_error():
    statements = ["only statement here"]
    entries = [
        {"match": "individual factual statements", "response": "only statement here"},
        {"match": "only statement here", "response": "perhaps, hard to say"},
    ]
    judge = scripted_judge(entries)
    with pytest.raises(UnparseableJudgeOutput):
        faithfulness("a", "c", judge)


def test_verdict_reprompt_recovers():
    entries = [
        {"match": "individual factual statements", "response": "single claim"},
        {"match": "single claim", "responses": ["hmm", "Yes."]},
    ]
    judge = scripted_judge(entries)
    assert faithfulness("a", "c", judge).score == 1.0


# ---------------------------------------------------------------------------
# context relevance
# ---------------------------------------------------------------------------


def make_context(n):
    return " ".join(f"Sentence number {i} talks about topic {i}." for i in range(n))


def test_context_relevance_two_of_twentyfive():
    context = make_context(25)
    assert len(split_sentences(context)) == 25
    relevant = "Sentence number 3 talks about topic 3.\nSentence number 17 talks about topic 17."
    judge = scripted_judge([{"match": "relevant to answering", "response": relevant}])
    result = context_relevance("what about topics 3 and 17?", context, judge)
    assert result.score == pytest.approx(0.08)
    assert result.relevant_count == 2
    assert result.total_sentences == 25


def test_context_relevance_none():
    judge = scripted_judge([{"match": "relevant to answering", "response": "NONE"}])
    result = context_relevance("q", make_context(10), judge)
    assert result.score == 0.0
    assert result.relevant_count == 0


def test_context_relevance_all():
    context = make_context(4)
    judge = scripted_judge([{"match": "relevant to answering", "response": context.replace(". ", ".\n")}])
    assert context_relevance("q", context, judge).score == pytest.approx(1.0)


def test_context_relevance_empty_context_is_undefined():
    judge = scripted_judge([])
    result = context_relevance("q", "", judge)
    assert result.score is None
    assert result.reason == "empty_context"


def test_context_relevance_clamped_to_one():
    context = make_context(2)
    lines = "\n".join(f"invented line {i}" for i in range(5))
    judge = scripted_judge([{"match": "relevant to answering", "response": lines}])
    assert context_relevance("q", context, judge).score == 1.0


def test_context_relevance_fixture_table():
    for relevant_n, total_n in [(0, 5), (1, 5), (3, 12), (5, 5), (2, 25), (7, 20)]:
        context = make_context(total_n)
        lines = "\n".join(f"Sentence number {i} talks about topic {i}." for i in range(relevant_n)) or "NONE"
        judge = scripted_judge([{"match": "relevant to answering", "response": lines}])
        result = context_relevance("q", context, judge)
        assert result.score == pytest.approx(relevant_n / total_n)


def test_context_relevance_llm_counted_variant():
    context = make_context(8)
    entries = [
        {"match": "relevant to answering", "response": "Sentence number 0 talks about topic 0."},
        {"match": "Count how many lines", "response": "1"},
        {"match": "Count the number of sentences", "response": "8"},
    ]
    judge = scripted_judge(entries, use_llm_counts=True)
    result = context_relevance("q", context, judge)
    assert result.score == pytest.approx(1 / 8)
    assert result.llm_counts == {"relevant": 1, "total": 8}


# ---------------------------------------------------------------------------
# self-eval match
# ---------------------------------------------------------------------------


def test_self_eval_match_yes_no():
    judge = scripted_judge([{"match": "semantically equivalent", "response": "Yes"}])
    assert self_eval_match("same thing", "same thing", judge) == "yes"
    judge = scripted_judge([{"match": "semantically equivalent", "response": "No, they differ."}])
    assert self_eval_match("a", "b", judge) == "no"


def test_self_eval_match_paraphrase_fixture():
    # hand-validated as semantically equivalent
    rag = "The Royal Mail was hit by the LockBit ransomware group in January 2023."
    ref = "LockBit targeted the UK's Royal Mail in January 2023."
    judge = scripted_judge([{"match": "semantically equivalent", "response": "Yes"}])
    verdict, raw = judge.match(rag, ref)
    assert verdict == "yes"
    assert raw == "Yes"


def test_self_eval_match_unparseable_after_reprompt():
    judge = scripted_judge([{"match": "semantically equivalent", "response": "maybe"}])
    with pytest.raises(UnparseableJudgeOutput):
        self_eval_match("a", "b", judge)


# ---------------------------------------------------------------------------
# dataset loading
# ---------------------------------------------------------------------------


def test_load_dataset(tmp_path):
    payload = [
        {"id": "q1", "question": "What?", "reference_answer": "That.", "source_doc": "a.txt"},
        {"question": "Who?", "reference_answer": "Them."},
    ]
    path = tmp_path / "ds.json"
    path.write_text(json.dumps(payload))
    items = load_dataset(path)
    assert items[0] == QAItem("q1", "What?", "That.", "a.txt")
    assert items[1].id == "1"
    with pytest.raises(ValueError):
        QAItem("x", "", "ref")


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


def benchmark_script(bad_questions_by_model=None):
    """Full mock script: models answer, judge decomposes/verdicts/matches.

    Answers embed GOODANS/BADANS markers; the match judge keys off them.
    """
    entries = []
    for model, bad_questions in (bad_questions_by_model or {}).items():
        entries += [
            {"model": model, "match": bad, "response": f"BADANS from {model}"} for bad in bad_questions
        ]
    entries += [
        {"match": "individual factual statements", "response": "only one statement"},
        {"match": "only one statement", "response": "Yes"},
        {"match": "relevant to answering", "response": "NONE"},
        {"match": "BADANS", "response": "No"},
        {"match": "semantically equivalent", "response": "Yes"},
        {"match": "", "response": "GOODANS canned answer"},
    ]
    return entries


@pytest.fixture
def small_bench(tmp_path, bola_corpus_dir):
    emb = HashedEmbedder(dim=96)
    store = ingest_directory(bola_corpus_dir, tmp_path / "store", emb)
    dataset = [QAItem(f"q{i}", f"question number {i} about APIs?", f"reference {i}") for i in range(4)]
    return store, emb, dataset


def test_benchmark_shape_and_determinism(small_bench):
    store, emb, dataset = small_bench
    models = [ModelRef.parse("mock:m1"), ModelRef.parse("mock:m2")]
    gateway = Gateway(mock_script=benchmark_script())
    result = run_benchmark(dataset, models, rounds=3, judge_model=JUDGE, store=store, embedder=emb, gateway=gateway)

    assert len(result.records) == 4 * 2 * 3
    assert len(result.report["rounds"]) == 3
    assert len(result.report["models"]) == 2
    assert all(row["match_pct"] == 100.0 for row in result.report["rounds"] + result.report["models"])
    # identical hits across rounds and models for the same item
    by_item = {}
    for record in result.records:
        by_item.setdefault(record.item_id, set()).add(tuple(record.hits))
    assert all(len(variants) == 1 for variants in by_item.values())
    assert all(record.error is None for record in result.records)


def test_benchmark_differentiated_percentages(small_bench):
    store, emb, dataset = small_bench
    models = [ModelRef.parse("mock:mA"), ModelRef.parse("mock:mB")]
    script = benchmark_script(
        bad_questions_by_model={"mA": ["question number 0"], "mB": ["question number 0", "question number 1"]}
    )
    gateway = Gateway(mock_script=script)
    result = run_benchmark(dataset, models, rounds=1, judge_model=JUDGE, store=store, embedder=emb, gateway=gateway)
    rows = {row["name"]: row["match_pct"] for row in result.report["models"]}
    assert rows["mock:mA"] == 75.0  # 3/4
    assert rows["mock:mB"] == 50.0  # 2/4


def test_benchmark_percentages_equal_recomputation(small_bench):
    store, emb, dataset = small_bench
    models = [ModelRef.parse("mock:mA"), ModelRef.parse("mock:mB")]
    script = benchmark_script(bad_questions_by_model={"mA": ["question number 2"]})
    gateway = Gateway(mock_script=script)
    result = run_benchmark(dataset, models, rounds=2, judge_model=JUDGE, store=store, embedder=emb, gateway=gateway)
    for row in result.report["models"]:
        relevant = [r for r in result.records if r.model == row["name"] and r.error is None]
        yes = sum(1 for r in relevant if r.scores.match == "yes")
        assert row["match_pct"] == pytest.approx(100.0 * yes / len(relevant))


def test_benchmark_item_failures_are_recorded_not_fatal(small_bench):
    store, emb, dataset = small_bench
    # no catch-all answer entry for model "broken": its items fail
    script = [
        {"model": "ok", "match": "", "response": "GOODANS"},
        {"match": "individual factual statements", "response": "s1"},
        {"match": "s1", "response": "Yes"},
        {"match": "relevant to answering", "response": "NONE"},
        {"match": "semantically equivalent", "response": "Yes"},
    ]
    gateway = Gateway(mock_script=script)
    models = [ModelRef.parse("mock:ok"), ModelRef.parse("mock:broken")]
    result = run_benchmark(dataset, models, rounds=1, judge_model=JUDGE, store=store, embedder=emb, gateway=gateway)
    errors = [r for r in result.records if r.error is not None]
    assert len(errors) == len(dataset)
    assert all(r.model == "mock:broken" for r in errors)
    assert result.report["error_count"] == len(dataset)
    rows = {row["name"]: row["match_pct"] for row in result.report["models"]}
    assert rows["mock:ok"] == 100.0
    assert rows["mock:broken"] is None


def test_benchmark_reproducible_bit_for_bit(small_bench, tmp_path):
    store, emb, dataset = small_bench
    models = [ModelRef.parse("mock:m1")]
    blobs = []
    for run in range(2):
        gateway = Gateway(mock_script=benchmark_script())
        result = run_benchmark(dataset, models, rounds=2, judge_model=JUDGE, store=store, embedder=emb, gateway=gateway)
        out = tmp_path / f"run{run}"
        paths = write_outputs(result, out, dataset)
        blobs.append(tuple(p.read_bytes() for p in paths.values()))
    assert blobs[0] == blobs[1]


def test_write_outputs_files(small_bench, tmp_path):
    store, emb, dataset = small_bench
    gateway = Gateway(mock_script=benchmark_script())
    result = run_benchmark(dataset, [ModelRef.parse("mock:m1")], rounds=1, judge_model=JUDGE, store=store, embedder=emb, gateway=gateway)
    paths = write_outputs(result, tmp_path / "out", dataset)
    assert all(p.exists() for p in paths.values())
    lines = paths["records"].read_text().strip().splitlines()
    assert len(lines) == len(result.records)
    report_csv = paths["report_csv"].read_text().splitlines()
    assert report_csv[0] == "name,category,match_pct"
    assert "100.00%" in report_csv[1]
    worksheet = paths["worksheet"].read_text().splitlines()
    assert worksheet[0] == "item,rag_answer,reference,judge_verdict,human"
    assert len(worksheet) == 1 + len(result.records)
    histogram = paths["histogram"].read_text().splitlines()
    assert histogram[0] == "model,round,match_count"


def test_build_report_on_empty():
    report = build_report([])
    assert report["rounds"] == [] and report["models"] == []
    assert report["mean_faithfulness"] is None
