"""Benchmark harness: judge-based metrics and multi-round multi-model runs.

Faithfulness = supported statements / total statements in the answer.
Context relevance = relevant sentences / total sentences in the context.
Self-evaluation match = judge's yes/no on semantic equivalence with the
reference answer. Verdicts are counted programmatically by default; the
judge-counted variant sits behind ``use_llm_counts`` for fidelity runs.
Undefined scores (zero denominators) stay None with a reason, never 0 or 1.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .engine import EngineConfig, Session, answer_query
from .gateway import ChatTurn, Gateway, GatewayError, ModelRef
from .vectorstore import VectorStore

logger = logging.getLogger(__name__)

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
_LEADING_MARK_RE = re.compile(r"^\s*(?:[-*•]|\d{1,3}[.)])\s+")
_INT_RE = re.compile(r"-?\d+")


class EvalError(Exception):
    pass


class JudgeUnavailable(EvalError):
    pass


class UnparseableJudgeOutput(EvalError):
    pass


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    reference_answer: str
    source_doc: str = ""

    def __post_init__(self):
        if not self.question or not self.reference_answer:
            raise ValueError(f"QAItem {self.id!r} needs question and reference_answer")


@dataclass
class MetricScores:
    faithfulness: float | None = None
    faithfulness_reason: str | None = None
    context_relevance: float | None = None
    context_relevance_reason: str | None = None
    match: str = "error"  # "yes" | "no" | "error"


@dataclass
class EvalRecord:
    item_id: str
    model: str
    round: int
    hits: list[str]
    rag_answer: str
    scores: MetricScores
    judge_raw_match: str = ""
    error: str | None = None


@dataclass
class FaithfulnessResult:
    score: float | None
    statements: list[str]
    verdicts: list[bool]
    reason: str | None = None
    llm_counts: dict | None = None


@dataclass
class RelevanceResult:
    score: float | None
    relevant_count: int
    total_sentences: int
    reason: str | None = None
    llm_counts: dict | None = None


@dataclass
class BenchmarkResult:
    records: list[EvalRecord]
    report: dict


def load_dataset(path: str | Path) -> list[QAItem]:
    """Dataset file: JSON array of {id, question, reference_answer, source_doc}."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise EvalError("dataset must be a JSON array")
    return [
        QAItem(
            id=str(entry.get("id", index)),
            question=entry["question"],
            reference_answer=entry["reference_answer"],
            source_doc=entry.get("source_doc", ""),
        )
        for index, entry in enumerate(payload)
    ]


def split_sentences(text: str) -> list[str]:
    """Pinned deterministic splitter: cut after '.', '!' or '?' followed by
    whitespace (or end of text); a sentence needs >= 2 non-whitespace chars."""
    segments = _SENTENCE_SPLIT_RE.split(text)
    return [seg for seg in segments if len([c for c in seg if not c.isspace()]) >= 2]


class Judge:
    """All LLM-judge calls behind one object so prompts stay in one place."""

    def __init__(self, gateway: Gateway, model: ModelRef, use_llm_counts: bool = False):
        self.gateway = gateway
        self.model = model
        self.use_llm_counts = use_llm_counts

    def _template(self, name: str) -> string.Template:
        text = resources.files("ctirag.prompts").joinpath(name).read_text(encoding="utf-8")
        return string.Template(text)

    def _ask(self, prompt: str) -> str:
        try:
            return self.gateway.complete(self.model, [ChatTurn("user", prompt)])
        except GatewayError as exc:
            raise JudgeUnavailable(str(exc)) from exc

    def decompose(self, answer: str) -> list[str]:
        raw = self._ask(self._template("judge_decompose.txt").substitute(answer=answer))
        statements = []
        for line in raw.splitlines():
            line = _LEADING_MARK_RE.sub("", line).strip()
            if line:
                statements.append(line)
        return statements

    def _yes_no(self, prompt: str) -> str:
        raw = self._ask(prompt)
        verdict = _parse_yes_no(raw)
        if verdict is None:
            raw = self._ask(prompt + "\n\n" + self._template("judge_reprompt.txt").substitute().strip())
            verdict = _parse_yes_no(raw)
            if verdict is None:
                raise UnparseableJudgeOutput(f"judge said {raw[:120]!r}")
        return verdict

    def verdict(self, statement: str, context: str) -> bool:
        prompt = self._template("judge_verdict.txt").substitute(context=context, statement=statement)
        return self._yes_no(prompt) == "yes"

    def relevant_sentences(self, question: str, context: str) -> list[str]:
        prompt = self._template("judge_relevant.txt").substitute(context=context, question=question)
        raw = self._ask(prompt)
        lines = [line.strip() for line in raw.splitlines() if line.strip()]
        if len(lines) == 1 and lines[0].strip().upper() == "NONE":
            return []
        return lines

    def match(self, rag_answer: str, reference: str) -> tuple[str, str]:
        """Returns (verdict, raw judge output)."""
        prompt = self._template("judge_match.txt").substitute(reference=reference, answer=rag_answer)
        raw = self._ask(prompt)
        verdict = _parse_yes_no(raw)
        if verdict is None:
            raw = self._ask(prompt + "\n\n" + self._template("judge_reprompt.txt").substitute().strip())
            verdict = _parse_yes_no(raw)
            if verdict is None:
                raise UnparseableJudgeOutput(f"judge said {raw[:120]!r}")
        return verdict, raw

    def count_lines(self, lines: list[str]) -> int:
        prompt = self._template("judge_count_lines.txt").substitute(lines="\n".join(lines))
        return _parse_int(self._ask(prompt))

    def count_sentences(self, text: str) -> int:
        prompt = self._template("judge_count_sentences.txt").substitute(text=text)
        return _parse_int(self._ask(prompt))


def _parse_yes_no(raw: str) -> str | None:
    tokens = raw.strip().split()
    if not tokens:
        return None
    head = tokens[0].strip(".,:;!\"'").casefold()
    if head in ("yes", "no"):
        return head
    return None


def _parse_int(raw: str) -> int:
    match = _INT_RE.search(raw)
    if match is None:
        raise UnparseableJudgeOutput(f"expected a number, judge said {raw[:120]!r}")
    return int(match.group())


def faithfulness(answer: str, context: str, judge: Judge) -> FaithfulnessResult:
    """Supported statements over total statements, per the judge."""
    if not answer:
        raise ValueError("answer must be non-empty")
    statements = judge.decompose(answer)
    if not statements:
        return FaithfulnessResult(None, [], [], reason="no_statements")
    verdicts = [judge.verdict(statement, context) for statement in statements]
    yes = sum(verdicts)
    total = len(statements)
    llm_counts = None
    if judge.use_llm_counts:
        verdict_lines = ["Yes" if v else "No" for v in verdicts]
        yes_counted = judge.count_lines([line for line in verdict_lines if line == "Yes"])
        no_counted = judge.count_lines([line for line in verdict_lines if line == "No"])
        llm_counts = {"yes": yes_counted, "no": no_counted}
        yes, total = yes_counted, yes_counted + no_counted
        if total == 0:
            return FaithfulnessResult(None, statements, verdicts, reason="no_statements", llm_counts=llm_counts)
    return FaithfulnessResult(min(max(yes / total, 0.0), 1.0), statements, verdicts, llm_counts=llm_counts)


def context_relevance(question: str, context: str, judge: Judge) -> RelevanceResult:
    """Judge-selected relevant sentences over the pinned sentence count."""
    if not context:
        return RelevanceResult(None, 0, 0, reason="empty_context")
    relevant = judge.relevant_sentences(question, context)
    total = len(split_sentences(context))
    llm_counts = None
    relevant_count = len(relevant)
    if judge.use_llm_counts:
        relevant_count = judge.count_lines(relevant) if relevant else 0
        total = judge.count_sentences(context)
        llm_counts = {"relevant": relevant_count, "total": total}
    if total == 0:
        return RelevanceResult(None, relevant_count, 0, reason="no_sentences", llm_counts=llm_counts)
    return RelevanceResult(
        min(max(relevant_count / total, 0.0), 1.0), relevant_count, total, llm_counts=llm_counts
    )


def self_eval_match(rag_answer: str, reference: str, judge: Judge) -> str:
    if not rag_answer or not reference:
        raise ValueError("both answers must be non-empty")
    verdict, _ = judge.match(rag_answer, reference)
    return verdict


# ---------------------------------------------------------------------------
# benchmark runner
# ---------------------------------------------------------------------------


def run_benchmark(
    dataset: list[QAItem],
    models: list[ModelRef],
    rounds: int,
    judge_model: ModelRef,
    *,
    store: VectorStore,
    embedder,
    gateway: Gateway,
    top_k: int = 6,
    use_llm_counts: bool = False,
    parallelism: int = 1,
) -> BenchmarkResult:
    """Evaluate every (round, model, item); item failures are recorded, not fatal."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    judge = Judge(gateway, judge_model, use_llm_counts=use_llm_counts)
    records: list[EvalRecord] = []
    baseline_hits: dict[str, list[str]] = {}

    def evaluate(round_no: int, model: ModelRef, item: QAItem) -> EvalRecord:
        record = EvalRecord(
            item_id=item.id, model=model.canonical(), round=round_no, hits=[], rag_answer="", scores=MetricScores()
        )
        try:
            config = EngineConfig(model=model, top_k=top_k, graph_enabled=False)
            session = Session(store=store, embedder=embedder, gateway=gateway, config=config)
            result = answer_query(session, item.question)
            record.hits = [hit.chunk_id for hit in result.hits]
            record.rag_answer = result.answer

            faith = faithfulness(result.answer, result.context, judge)
            record.scores.faithfulness = faith.score
            record.scores.faithfulness_reason = faith.reason
            relevance = context_relevance(item.question, result.context, judge)
            record.scores.context_relevance = relevance.score
            record.scores.context_relevance_reason = relevance.reason
            verdict, raw = judge.match(result.answer, item.reference_answer)
            record.scores.match = verdict
            record.judge_raw_match = raw
        except (EvalError, GatewayError, ValueError) as exc:
            record.error = f"{type(exc).__name__}: {exc}"
            logger.warning("item %s failed in round %d with %s: %s", item.id, round_no, model.canonical(), exc)
        return record

    for round_no in range(1, rounds + 1):
        for model in models:
            if parallelism > 1:
                with ThreadPoolExecutor(max_workers=parallelism) as pool:
                    round_records = list(
                        pool.map(lambda item: evaluate(round_no, model, item), dataset)
                    )
            else:
                round_records = [evaluate(round_no, model, item) for item in dataset]
            records.extend(round_records)

    for record in records:
        if record.error is not None:
            continue
        seen = baseline_hits.setdefault(record.item_id, record.hits)
        if record.hits != seen:
            raise EvalError(
                f"retrieval determinism violated for item {record.item_id!r}: {record.hits} != {seen}"
            )

    return BenchmarkResult(records=records, report=build_report(records))


def _pct(yes: int, decided: int) -> float | None:
    return round(100.0 * yes / decided, 2) if decided else None


def build_report(records: list[EvalRecord]) -> dict:
    """Aggregate match percentages per round and per model, metric means, and
    per-(model, round) match-count histogram data."""
    rounds = sorted({r.round for r in records})
    models = []
    for record in records:
        if record.model not in models:
            models.append(record.model)

    def group_pct(selector) -> float | None:
        selected = [r for r in records if selector(r) and r.error is None]
        decided = [r for r in selected if r.scores.match in ("yes", "no")]
        return _pct(sum(1 for r in decided if r.scores.match == "yes"), len(decided))

    round_rows = [
        {"name": f"Round {n}", "category": "Round", "match_pct": group_pct(lambda r, n=n: r.round == n)}
        for n in rounds
    ]
    model_rows = [
        {"name": m, "category": "Model", "match_pct": group_pct(lambda r, m=m: r.model == m)}
        for m in models
    ]

    defined_faith = [r.scores.faithfulness for r in records if r.scores.faithfulness is not None]
    defined_rel = [r.scores.context_relevance for r in records if r.scores.context_relevance is not None]
    histogram = [
        {
            "model": m,
            "round": n,
            "match_count": sum(
                1
                for r in records
                if r.model == m and r.round == n and r.error is None and r.scores.match == "yes"
            ),
        }
        for m in models
        for n in rounds
    ]
    return {
        "rounds": round_rows,
        "models": model_rows,
        "mean_faithfulness": (sum(defined_faith) / len(defined_faith)) if defined_faith else None,
        "mean_context_relevance": (sum(defined_rel) / len(defined_rel)) if defined_rel else None,
        "record_count": len(records),
        "error_count": sum(1 for r in records if r.error is not None),
        "undefined_faithfulness": sum(
            1 for r in records if r.error is None and r.scores.faithfulness is None
        ),
        "undefined_context_relevance": sum(
            1 for r in records if r.error is None and r.scores.context_relevance is None
        ),
        "histogram": histogram,
    }


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def write_outputs(
    result: BenchmarkResult, out_dir: str | Path, dataset: list[QAItem] | None = None
) -> dict[str, Path]:
    """Write records.jsonl, report.json, report.csv, histogram.csv and the
    manual-review worksheet; returns the paths."""
    references = {item.id: item.reference_answer for item in dataset} if dataset else {}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "records": out / "records.jsonl",
        "report_json": out / "report.json",
        "report_csv": out / "report.csv",
        "histogram": out / "histogram.csv",
        "worksheet": out / "review_worksheet.csv",
    }

    with open(paths["records"], "w", encoding="utf-8") as fh:
        for record in result.records:
            fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")

    paths["report_json"].write_text(json.dumps(result.report, indent=2, sort_keys=True), encoding="utf-8")

    with open(paths["report_csv"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "category", "match_pct"])
        for row in result.report["rounds"] + result.report["models"]:
            pct = row["match_pct"]
            writer.writerow([row["name"], row["category"], "" if pct is None else f"{pct:.2f}%"])

    with open(paths["histogram"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "round", "match_count"])
        for row in result.report["histogram"]:
            writer.writerow([row["model"], row["round"], row["match_count"]])

    with open(paths["worksheet"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item", "rag_answer", "reference", "judge_verdict", "human"])
        for record in result.records:
            writer.writerow(
                [record.item_id, record.rag_answer, references.get(record.item_id, ""), record.scores.match, ""]
            )

    return paths
