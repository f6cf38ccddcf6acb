"""Interfaces to external model services plus deterministic in-process stubs.

Three capabilities are modelled: text generation (the judge), text
embedding, and pair scoring (a cross-encoder returning a relevance logit).
Each has an HTTP adapter for hosted backends and a stub for offline,
bit-reproducible runs.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np


class ProviderError(RuntimeError):
    """Base class for provider failures."""


class ProviderHTTPError(ProviderError):
    """Non-retryable HTTP status from a backend."""

    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"HTTP {status}: {body}")


class ProviderTimeoutError(ProviderError):
    """Retry budget exhausted on transient failures."""


class ProviderResponseError(ProviderError):
    """Backend responded but the body could not be interpreted."""


class ScriptMissError(ProviderError):
    """A scripted generator received a prompt no matcher covers."""

    def __init__(self, prompt: str):
        self.prompt_prefix = prompt[:80]
        super().__init__(f"no script matches prompt starting {self.prompt_prefix!r}")


class MissingScoreStatementError(ProviderError):
    """A linear pair scorer candidate lacks one of the four score sentences."""

    def __init__(self, metric: str):
        self.metric = metric
        super().__init__(f"candidate text has no {metric} score statement")


@dataclass(frozen=True)
class GenerationParams:
    """Decoding parameters; defaults pin near-deterministic generation."""

    temperature: float = 0.0
    top_p: float = 0.01
    max_tokens: int = 1024
    seed: int | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


class TextGenerator(Protocol):
    def complete(self, prompt: str, params: GenerationParams | None = None) -> str: ...


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


class PairScorer(Protocol):
    def score(self, query: str, candidate: str) -> float: ...


@dataclass(frozen=True)
class ProviderBundle:
    """The providers one evaluation run needs."""

    generator: TextGenerator
    embedder: Embedder
    scorer: PairScorer | None = None


class ScriptedGenerator:
    """Test double returning canned transcripts keyed by prompt substrings.

    A matcher is a substring or a tuple of substrings that must all occur in
    the prompt; the first matching entry (insertion order) wins. A matcher
    may map to a sequence of responses, consumed round-robin across calls,
    which lets one prompt yield several distinct transcripts. Unmatched
    prompts raise :class:`ScriptMissError` when strict, otherwise return the
    fallback text.
    """

    identifier = "stub:scripted"

    def __init__(
        self,
        transcripts: Mapping[str | tuple[str, ...], str | Sequence[str]],
        *,
        strict: bool = True,
        fallback: str = "",
    ):
        self._entries: list[tuple[tuple[str, ...], list[str]]] = []
        for matcher, response in transcripts.items():
            needles = (matcher,) if isinstance(matcher, str) else tuple(matcher)
            responses = [response] if isinstance(response, str) else list(response)
            if not responses:
                raise ValueError(f"matcher {matcher!r} has no responses")
            self._entries.append((needles, responses))
        self._strict = strict
        self._fallback = fallback
        self._cursors = [0] * len(self._entries)
        self._lock = threading.Lock()

    def complete(self, prompt: str, params: GenerationParams | None = None) -> str:
        for slot, (needles, responses) in enumerate(self._entries):
            if all(needle in prompt for needle in needles):
                with self._lock:
                    cursor = self._cursors[slot]
                    self._cursors[slot] = cursor + 1
                return responses[cursor % len(responses)]
        if self._strict:
            raise ScriptMissError(prompt)
        return self._fallback


def _token_axis(token: str, dimension: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dimension


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashEmbedder:
    """Deterministic bag-of-tokens embedder for offline runs.

    Each token adds one unit to a sha256-hashed axis; tokens listed in
    `keyword_channels` additionally boost a dedicated axis so topical texts
    cluster. Vectors are L2-normalized; empty (token-free) text maps to the
    all-zeros vector, whose cosine against anything is defined as 0.
    """

    def __init__(
        self,
        dimension: int,
        keyword_channels: Mapping[str, int] | None = None,
        *,
        keyword_boost: float = 4.0,
    ):
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        channels = dict(keyword_channels or {})
        for keyword, axis in channels.items():
            if not 0 <= axis < dimension:
                raise ValueError(f"keyword {keyword!r} axis {axis} outside dimension {dimension}")
        self.dimension = dimension
        self._channels = channels
        self._boost = keyword_boost
        self.identifier = f"stub:hash-{dimension}"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for token in _TOKEN_RE.findall(text.lower()):
            vec[_token_axis(token, self.dimension)] += 1.0
            axis = self._channels.get(token)
            if axis is not None:
                vec[axis] += self._boost
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec


_SCORE_STATEMENT_PATTERNS = (
    ("answer_relevance", re.compile(r"the answer relevancy score is:\s*(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)")),
    ("retrieval_precision", re.compile(r"the context precision score is:\s*(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)")),
    ("retrieval_recall", re.compile(r"the context recall score is:\s*(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)")),
    ("faithfulness", re.compile(r"the faithfulness score is:\s*(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)")),
)


class LinearPairScorer:
    """Test double scoring enhanced answers as an affine combination.

    Reads the four score sentences rendered into an enhanced answer and
    returns bias + sum(w_i * score_i). Weights follow the statement order
    in the enhanced text: answer relevance, context precision, context
    recall, faithfulness.
    """

    identifier = "stub:linear"

    def __init__(self, weights: Sequence[float], bias: float = 0.0):
        if len(weights) != 4:
            raise ValueError(f"expected 4 weights, got {len(weights)}")
        self.weights = tuple(float(w) for w in weights)
        self.bias = float(bias)

    def score(self, query: str, candidate: str) -> float:
        logit = self.bias
        for weight, (metric, pattern) in zip(self.weights, _SCORE_STATEMENT_PATTERNS):
            match = pattern.search(candidate)
            if match is None:
                raise MissingScoreStatementError(metric)
            logit += weight * float(match.group(1))
        return logit

    @staticmethod
    def extract_scores(candidate: str) -> dict[str, float]:
        """The four statement scores present in an enhanced answer."""
        scores: dict[str, float] = {}
        for metric, pattern in _SCORE_STATEMENT_PATTERNS:
            match = pattern.search(candidate)
            if match is None:
                raise MissingScoreStatementError(metric)
            scores[metric] = float(match.group(1))
        return scores


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with jitter; retries 429/5xx and transport faults."""

    attempts: int = 3
    base_delay: float = 0.25


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to reach one hosted model endpoint.

    `auth_env` names the environment variable holding the bearer token; the
    token value itself is never recorded anywhere. `response_path` is a
    dot-separated path into the response JSON overriding the dialect
    default.
    """

    url: str
    model: str = ""
    dialect: str = "prompt"
    auth_env: str | None = None
    response_path: str | None = None
    timeout: float = 30.0

    def __post_init__(self):
        if self.dialect not in ("prompt", "messages"):
            raise ValueError(f"unknown dialect {self.dialect!r}")


Transport = Callable[[str, bytes, Mapping[str, str], float], tuple[int, bytes]]


def _urllib_transport(url: str, payload: bytes, headers: Mapping[str, str], timeout: float):
    request = urllib.request.Request(url, data=payload, headers=dict(headers), method="POST")
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


def _walk_response(doc: object, path: str) -> object:
    node = doc
    for part in path.split("."):
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ProviderResponseError(f"response path {path!r}: bad index {part!r}") from None
        elif isinstance(node, dict):
            if part not in node:
                raise ProviderResponseError(f"response path {path!r}: missing key {part!r}")
            node = node[part]
        else:
            raise ProviderResponseError(f"response path {path!r}: cannot descend into {type(node).__name__}")
    return node


class _HttpProvider:
    """Shared POST-with-retries plumbing for the three HTTP adapters."""

    def __init__(
        self,
        config: EndpointConfig,
        *,
        transport: Transport | None = None,
        retry: RetryPolicy | None = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter_seed: int | None = None,
    ):
        self.config = config
        self._transport = transport or _urllib_transport
        self._retry = retry or RetryPolicy()
        self._sleep = sleep
        self._rng = random.Random(jitter_seed)
        self._rng_lock = threading.Lock()

    @property
    def identifier(self) -> str:
        return f"http:{self.config.model or 'default'}@{self.config.url}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env:
            token = os.environ.get(self.config.auth_env)
            if not token:
                raise ProviderError(
                    f"auth token environment variable {self.config.auth_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _delay(self, attempt: int) -> float:
        with self._rng_lock:
            jitter = self._rng.random()
        return self._retry.base_delay * (2**attempt) * (0.5 + jitter)

    def _post(self, payload: dict) -> object:
        headers = self._headers()
        body = json.dumps(payload).encode("utf-8")
        last_transient = "no attempt made"
        for attempt in range(self._retry.attempts):
            try:
                status, raw = self._transport(self.config.url, body, headers, self.config.timeout)
            except Exception as exc:
                last_transient = f"transport failure: {exc}"
            else:
                if status == 200:
                    try:
                        return json.loads(raw.decode("utf-8"))
                    except (ValueError, UnicodeDecodeError) as exc:
                        raise ProviderResponseError(f"response is not JSON: {exc}") from None
                if status == 429 or 500 <= status < 600:
                    last_transient = f"HTTP {status}"
                else:
                    raise ProviderHTTPError(status, raw[:200].decode("utf-8", "replace"))
            if attempt + 1 < self._retry.attempts:
                self._sleep(self._delay(attempt))
        raise ProviderTimeoutError(
            f"{self._retry.attempts} attempts exhausted; last failure: {last_transient}"
        )


class HttpGenerator(_HttpProvider):
    """Text-generation adapter speaking either a prompt- or messages-style API."""

    def complete(self, prompt: str, params: GenerationParams | None = None) -> str:
        params = params or GenerationParams()
        payload: dict = {
            "model": self.config.model,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            payload["seed"] = params.seed
        if self.config.dialect == "messages":
            payload["messages"] = [{"role": "user", "content": prompt}]
            default_path = "choices.0.message.content"
        else:
            payload["prompt"] = prompt
            default_path = "completion"
        doc = self._post(payload)
        text = _walk_response(doc, self.config.response_path or default_path)
        if not isinstance(text, str):
            raise ProviderResponseError(f"completion field is {type(text).__name__}, not text")
        return text


class HttpEmbedder(_HttpProvider):
    """Embedding adapter: POST {model, input} and read back one vector."""

    def embed(self, text: str) -> np.ndarray:
        doc = self._post({"model": self.config.model, "input": text})
        value = _walk_response(doc, self.config.response_path or "embedding")
        try:
            vector = np.asarray(value, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ProviderResponseError(f"embedding field is not numeric: {exc}") from None
        if vector.ndim != 1 or vector.size == 0 or not np.all(np.isfinite(vector)):
            raise ProviderResponseError("embedding must be a non-empty finite 1-d vector")
        return vector


class HttpPairScorer(_HttpProvider):
    """Cross-encoder adapter: POST {query, candidate} and read back one logit."""

    def score(self, query: str, candidate: str) -> float:
        payload: dict = {"query": query, "candidate": candidate}
        if self.config.model:
            payload["model"] = self.config.model
        doc = self._post(payload)
        value = _walk_response(doc, self.config.response_path or "score")
        try:
            logit = float(value)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            raise ProviderResponseError(f"score field is {type(value).__name__}, not a number") from None
        if not math.isfinite(logit):
            raise ProviderResponseError(f"score is not finite: {logit}")
        return logit
