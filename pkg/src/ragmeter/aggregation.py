"""Relevance-statement enhancement and single-score consolidation.

The four metric scores are rendered into fixed prose statements appended to
the answer; a pair scorer then maps (query, enhanced answer) to one logit.
Logits are the primary output; the logistic-normalized value is carried
alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from ragmeter.corpus import EvalRecord
from ragmeter.judge import load_template
from ragmeter.metrics import METRICS, MetricVector
from ragmeter.providers import PairScorer

DEFAULT_SCORER_MODEL = "ms-marco-MiniLM-L-12-v2"


class MissingMetricError(ValueError):
    """Enhancement requires all four metrics to be computed."""

    def __init__(self, metric: str, record_id: str):
        self.metric = metric
        self.record_id = record_id
        super().__init__(f"record {record_id!r}: metric {metric} not computed")


class AggregationError(RuntimeError):
    """The pair scorer failed while consolidating a record."""


@dataclass(frozen=True)
class EnhancedAnswer:
    original_answer: str
    rendered: str
    statement_scores: Mapping[str, float]


@dataclass(frozen=True)
class AggregateScore:
    logit: float
    normalized: float


def expit(x: float) -> float:
    """Logistic function 1 / (1 + e^-x), stable for large |x|."""
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _statement_paragraphs() -> list[str]:
    return load_template("enhancement.txt").splitlines()


def enhance_answer(
    record: EvalRecord, metrics: MetricVector, contexts_included: bool = True
) -> EnhancedAnswer:
    """Render the answer with the four score statements appended.

    Scores are rendered at full precision. The context block (the retrieved
    chunks as a quoted list) is included by default and dropped when
    `contexts_included` is false.
    """
    scores: dict[str, float] = {}
    for metric in METRICS:
        result = metrics.result(metric)
        if result.value is None:
            raise MissingMetricError(metric, record.id)
        scores[metric] = float(result.value)
    preamble, context_block, relevance, precision, recall, faithfulness = _statement_paragraphs()
    slots = {
        "answer": record.answer,
        "contexts": repr(list(record.contexts)),
        "answer_relevance": repr(scores["answer_relevance"]),
        "retrieval_precision": repr(scores["retrieval_precision"]),
        "retrieval_recall": repr(scores["retrieval_recall"]),
        "faithfulness": repr(scores["faithfulness"]),
    }
    paragraphs = [preamble]
    if contexts_included:
        paragraphs.append(context_block)
    paragraphs += [relevance, precision, recall, faithfulness]
    rendered = "\n\n".join(paragraphs)
    for key, value in slots.items():
        rendered = rendered.replace("{" + key + "}", value)
    return EnhancedAnswer(record.answer, rendered, scores)


def aggregate(record: EvalRecord, enhanced: EnhancedAnswer, scorer: PairScorer) -> AggregateScore:
    """Score (query, enhanced answer) and normalize the logit."""
    try:
        logit = float(scorer.score(record.query, enhanced.rendered))
    except Exception as exc:
        raise AggregationError(f"scorer failed on record {record.id!r}: {exc}") from exc
    return AggregateScore(logit=logit, normalized=expit(logit))


def rank_records(scores: Iterable[tuple[str, AggregateScore]]) -> list[tuple[str, AggregateScore]]:
    """Descending by logit; ties broken by record id ascending."""
    return sorted(scores, key=lambda item: (-item[1].logit, item[0]))
