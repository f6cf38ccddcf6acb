"""Data model and dataset ingestion for RAG evaluation runs.

Handles the standard qrels relevance-judgment format, line-delimited record
files, and a harness that turns a text generator into synthetic
query/passage sets.
"""

from __future__ import annotations

import json
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TYPE_CHECKING

if TYPE_CHECKING:
    from ragmeter.providers import GenerationParams, TextGenerator


class QrelsFormatError(ValueError):
    """A qrels line that does not follow `topic iteration doc grade`."""

    def __init__(self, line_no: int, raw_line: str, reason: str):
        self.line_no = line_no
        self.raw_line = raw_line
        super().__init__(f"qrels line {line_no}: {reason}: {raw_line!r}")


class RecordFileError(ValueError):
    """A record file with invalid rows or duplicate ids.

    Carries every row-level problem plus the count of rows that did parse,
    so callers can verify no row was silently dropped.
    """

    def __init__(self, row_errors: Sequence[str], valid_count: int):
        self.row_errors = list(row_errors)
        self.valid_count = valid_count
        summary = "; ".join(self.row_errors[:5])
        if len(self.row_errors) > 5:
            summary += f"; ... ({len(self.row_errors)} problems total)"
        super().__init__(f"record file invalid: {summary}")


class SyntheticGenerationError(RuntimeError):
    """Generator failed mid-run; reports how many records completed."""

    def __init__(self, completed: int, cause: BaseException):
        self.completed = completed
        super().__init__(
            f"generator failed after {completed} completed record(s): {cause}"
        )


@dataclass(frozen=True)
class EvalRecord:
    """One (query, answer, contexts, optional ground truth) unit under evaluation.

    The answer may be empty for records produced by the synthetic harness,
    which are meant to be filled in by a RAG run before evaluation.
    """

    id: str
    query: str
    answer: str
    contexts: tuple[str, ...] = ()
    ground_truth: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if not self.query.strip():
            raise ValueError(f"record {self.id!r}: query must be non-empty")
        object.__setattr__(self, "contexts", tuple(self.contexts))

    def to_dict(self) -> dict:
        doc = {
            "id": self.id,
            "query": self.query,
            "answer": self.answer,
            "contexts": list(self.contexts),
        }
        if self.ground_truth is not None:
            doc["ground_truth"] = self.ground_truth
        return doc


@dataclass(frozen=True)
class RecordSet:
    """A labelled, immutable collection of evaluation records."""

    label: str
    records: tuple[EvalRecord, ...]

    def __post_init__(self):
        if not self.label:
            raise ValueError("record set label must be non-empty")
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for record in self.records:
            if record.id in seen:
                raise ValueError(f"duplicate record id {record.id!r} in set {self.label!r}")
            seen.add(record.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass(frozen=True)
class QrelsEntry:
    """One relevance judgment: (topic, document, integer grade)."""

    topic_id: str
    doc_id: str
    relevance: int

    def __post_init__(self):
        if re.search(r"\s", self.topic_id) or re.search(r"\s", self.doc_id):
            raise ValueError("qrels ids must be whitespace-free")
        if self.relevance < 0:
            raise ValueError(f"relevance grade must be >= 0, got {self.relevance}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Instructions for generating one topical record set."""

    topic_label: str
    prompt_template: str
    count: int

    def __post_init__(self):
        if not self.topic_label:
            raise ValueError("topic_label must be non-empty")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        lowered = self.prompt_template.lower()
        if "passage" not in lowered or "question" not in lowered:
            raise ValueError(
                "prompt_template must instruct the generator to produce a "
                "passage and a question"
            )


@dataclass(frozen=True)
class SkippedTranscript:
    """Diagnostic for a generator transcript that could not be parsed."""

    index: int
    reason: str
    transcript: str


@dataclass(frozen=True)
class SyntheticResult:
    records: RecordSet
    skipped: tuple[SkippedTranscript, ...]
    raw_transcripts: tuple[str, ...]


def parse_qrels(stream: str | Iterable[str]) -> list[QrelsEntry]:
    """Parse qrels lines `topic iteration doc grade` into entries, in file order.

    The iteration column is discarded. Blank lines are skipped. Malformed
    lines raise :class:`QrelsFormatError` carrying the line number.
    """
    if isinstance(stream, str):
        lines: Iterable[str] = stream.splitlines()
    else:
        lines = stream
    entries: list[QrelsEntry] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 4:
            raise QrelsFormatError(line_no, raw.rstrip("\n"), "expected at least 4 fields")
        topic_id, _iteration, doc_id, grade_text = fields[0], fields[1], fields[2], fields[3]
        try:
            grade = int(grade_text)
        except ValueError:
            raise QrelsFormatError(
                line_no, raw.rstrip("\n"), f"grade {grade_text!r} is not an integer"
            ) from None
        try:
            entries.append(QrelsEntry(topic_id, doc_id, grade))
        except ValueError as exc:
            raise QrelsFormatError(line_no, raw.rstrip("\n"), str(exc)) from None
    return entries


def serialize_qrels(entries: Iterable[QrelsEntry]) -> str:
    """Render entries back to the 4-column text format (iteration written as 0)."""
    return "".join(f"{e.topic_id} 0 {e.doc_id} {e.relevance}\n" for e in entries)


def filter_by_grade(entries: Iterable[QrelsEntry], grade: int) -> list[QrelsEntry]:
    """Entries whose relevance equals `grade`, original order preserved."""
    return [e for e in entries if e.relevance == grade]


def sample_without_replacement(items: Sequence, k: int, seed: int) -> list:
    """Seeded uniform sample of `k` items without replacement."""
    if k > len(items):
        raise ValueError(f"cannot sample {k} items from {len(items)}")
    return random.Random(seed).sample(list(items), k)


def _record_from_json_line(line: str, line_no: int) -> EvalRecord:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"line {line_no}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ValueError(f"line {line_no}: expected an object, got {type(doc).__name__}")
    record_id = str(doc.get("id", "")).strip()
    if not record_id:
        raise ValueError(f"line {line_no}: missing record id")
    for required in ("query", "answer"):
        value = doc.get(required)
        if not isinstance(value, str) or not value.strip():
            raise ValueError(f"line {line_no}: record {record_id!r} missing {required}")
    contexts = doc.get("contexts", [])
    if not isinstance(contexts, list) or not all(isinstance(c, str) for c in contexts):
        raise ValueError(f"line {line_no}: record {record_id!r} contexts must be a list of strings")
    ground_truth = doc.get("ground_truth")
    if ground_truth is not None and not isinstance(ground_truth, str):
        raise ValueError(f"line {line_no}: record {record_id!r} ground_truth must be a string")
    return EvalRecord(
        id=record_id,
        query=doc["query"],
        answer=doc["answer"],
        contexts=tuple(contexts),
        ground_truth=ground_truth or None,
    )


def _record_from_delimited_line(line: str, line_no: int) -> EvalRecord:
    columns = line.rstrip("\n").split("\t")
    if len(columns) < 3:
        raise ValueError(f"line {line_no}: expected at least id, query, answer columns")
    record_id = columns[0].strip()
    if not record_id:
        raise ValueError(f"line {line_no}: missing record id")
    query, answer = columns[1], columns[2]
    if not query.strip():
        raise ValueError(f"line {line_no}: record {record_id!r} missing query")
    if not answer.strip():
        raise ValueError(f"line {line_no}: record {record_id!r} missing answer")
    ground_truth = columns[3] if len(columns) > 3 and columns[3] else None
    contexts = tuple(c for c in columns[4:] if c)
    return EvalRecord(
        id=record_id, query=query, answer=answer, contexts=contexts, ground_truth=ground_truth
    )


RECORD_FORMATS = ("structured-lines", "delimited")


def load_record_set(
    source: str | Path, fmt: str = "structured-lines", *, label: str | None = None
) -> RecordSet:
    """Load a record set from a file, one record per non-blank line.

    `structured-lines` is one JSON object per line with fields
    {id, query, answer, contexts[], ground_truth?}; `delimited` is
    tab-separated `id, query, answer, ground_truth, context...` columns.
    Every bad row is collected and reported via :class:`RecordFileError`;
    nothing is silently dropped.
    """
    if fmt not in RECORD_FORMATS:
        raise ValueError(f"unknown record format {fmt!r}; expected one of {RECORD_FORMATS}")
    path = Path(source)
    parse_row = _record_from_json_line if fmt == "structured-lines" else _record_from_delimited_line
    records: list[EvalRecord] = []
    errors: list[str] = []
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                record = parse_row(raw, line_no)
            except ValueError as exc:
                errors.append(str(exc))
                continue
            if record.id in seen_ids:
                errors.append(f"line {line_no}: duplicate record id {record.id!r}")
                continue
            seen_ids.add(record.id)
            records.append(record)
    if errors:
        raise RecordFileError(errors, valid_count=len(records))
    return RecordSet(label=label or path.stem, records=tuple(records))


def save_record_set(record_set: RecordSet, path: str | Path) -> None:
    """Write a record set in the structured-lines format (UTF-8, one object per line)."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in record_set.records:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


_PASSAGE_RE = re.compile(r"passage\s*:", re.IGNORECASE)
_QUESTION_RE = re.compile(r"question\s*:", re.IGNORECASE)


def _parse_synthetic_transcript(transcript: str) -> tuple[str, str] | str:
    """Extract (passage, question) from a transcript, or a skip reason."""
    passage_match = _PASSAGE_RE.search(transcript)
    question_match = _QUESTION_RE.search(transcript)
    if passage_match is None:
        return "no Passage section"
    if question_match is None:
        return "no Question section"
    if question_match.start() > passage_match.start():
        passage = transcript[passage_match.end() : question_match.start()]
        question = transcript[question_match.end() :]
    else:
        question = transcript[question_match.end() : passage_match.start()]
        passage = transcript[passage_match.end() :]
    passage, question = passage.strip(), question.strip()
    # A question can run into trailing boilerplate; keep its first paragraph.
    question = question.split("\n\n")[0].strip()
    if not passage:
        return "empty Passage section"
    if not question:
        return "empty Question section"
    return passage, question


def generate_synthetic(
    spec: SyntheticSpec,
    generator: TextGenerator,
    *,
    params: GenerationParams | None = None,
    parallelism: int = 1,
) -> SyntheticResult:
    """Generate `spec.count` passage/question records via `generator`.

    Answers are left empty so a RAG run can fill them in later. Transcripts
    that lack a parseable Passage or Question section are skipped and
    reported in the result. A generator failure aborts the run with
    :class:`SyntheticGenerationError` naming the completed count.
    """
    transcripts: list[str | None] = [None] * spec.count

    def run_one(index: int) -> str:
        return generator.complete(spec.prompt_template, params)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(run_one, i) for i in range(spec.count)]
            failure: BaseException | None = None
            for i, future in enumerate(futures):
                try:
                    transcripts[i] = future.result()
                except Exception as exc:
                    failure = failure or exc
            if failure is not None:
                completed = sum(1 for t in transcripts if t is not None)
                raise SyntheticGenerationError(completed, failure)
    else:
        for i in range(spec.count):
            try:
                transcripts[i] = run_one(i)
            except Exception as exc:
                raise SyntheticGenerationError(i, exc) from exc

    records: list[EvalRecord] = []
    skipped: list[SkippedTranscript] = []
    for i, transcript in enumerate(transcripts):
        assert transcript is not None
        parsed = _parse_synthetic_transcript(transcript)
        if isinstance(parsed, str):
            skipped.append(SkippedTranscript(index=i, reason=parsed, transcript=transcript))
            continue
        passage, question = parsed
        records.append(
            EvalRecord(
                id=f"{spec.topic_label}-{i + 1:04d}",
                query=question,
                answer="",
                contexts=(passage,),
            )
        )
    return SyntheticResult(
        records=RecordSet(label=spec.topic_label, records=tuple(records)),
        skipped=tuple(skipped),
        raw_transcripts=tuple(t for t in transcripts if t is not None),
    )
