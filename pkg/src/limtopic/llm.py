"""Chat providers, prompt templates, response parsing, and the response cache.

Templates live as editable text files under ``data/prompts/`` with the
placeholders [DOCUMENTS], [KEYWORD], [SEED WORD], and [TITLE]. Rendering is
pure substitution; a rendered prompt never carries an unresolved placeholder.
Responses are cached by SHA-256 of ``model || rendered prompt`` so re-runs at
temperature 0 make no provider calls.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, Sequence

import requests

from .errors import ConfigError, ParseError, TransportError
from .textutil import approx_tokens
from .topicmodel import SeedTopicList, Topic

log = logging.getLogger(__name__)

_PROMPTS = Path(__file__).resolve().parent / "data" / "prompts"

PLACEHOLDERS = ("[DOCUMENTS]", "[KEYWORD]", "[SEED WORD]", "[TITLE]")

TEMPLATE_FILES = {
    "seed_words": "seed_words.txt",
    "title_system": "title_system.txt",
    "title_example": "title_example.txt",
    "title_main": "title_main.txt",
    "title_plus_summary": "title_plus_summary.txt",
    "summarize": "summarize.txt",
    "judge": "judge.txt",
}

JUDGE_METRICS = (
    "grammaticality",
    "readability",
    "cohesiveness",
    "understandability",
    "likability",
    "coherence",
    "relevance",
    "fluency",
    "description_quality",
)

# the published rubric labels are inconsistent; map every spelling seen to a field
_METRIC_ALIASES = {
    "grammaticality": "grammaticality",
    "grammatically": "grammaticality",
    "gramm": "grammaticality",
    "grammar": "grammaticality",
    "readability": "readability",
    "cohesiveness": "cohesiveness",
    "understandability": "understandability",
    "likability": "likability",
    "likeability": "likability",
    "coherence": "coherence",
    "relevance": "relevance",
    "fluency": "fluency",
    "description quality": "description_quality",
    "description_quality": "description_quality",
    "overall description quality": "description_quality",
    "describing": "description_quality",
    "description": "description_quality",
}


def load_template(name: str, directory: str | Path | None = None) -> str:
    """Template text by canonical name; trailing newline stripped."""
    try:
        filename = TEMPLATE_FILES[name]
    except KeyError:
        raise ConfigError(f"unknown template {name!r}") from None
    root = Path(directory) if directory else _PROMPTS
    return (root / filename).read_text(encoding="utf-8").rstrip("\n")


def render(template_text: str, substitutions: dict[str, str]) -> str:
    """Substitute placeholders; any placeholder left unresolved is an error."""
    out = template_text
    for placeholder, value in substitutions.items():
        out = out.replace(placeholder, value)
    for placeholder in PLACEHOLDERS:
        if placeholder in out:
            raise ParseError(f"rendered prompt still contains {placeholder}")
    return out


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str

    def render(self, substitutions: dict[str, str]) -> str:
        return render(self.text, substitutions)


@dataclass
class LlmExchange:
    template_name: str
    prompt: str
    response: str
    cache_key: str
    prompt_tokens: int
    response_tokens: int
    cached: bool
    parsed: Any = None


@dataclass(frozen=True)
class JudgeScores:
    grammaticality: int
    readability: int
    cohesiveness: int
    understandability: int
    likability: int
    coherence: int
    relevance: int
    fluency: int
    description_quality: int

    def __post_init__(self) -> None:
        for name in JUDGE_METRICS:
            value = getattr(self, name)
            if not 1 <= value <= 5:
                raise ValueError(f"{name} score {value} outside the 1-5 rubric")

    def as_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in JUDGE_METRICS}


@dataclass
class JudgeBatch:
    scores: list[tuple[str, JudgeScores]] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)


@dataclass(frozen=True)
class TopicSummary:
    text: str
    word_count: int
    in_range: bool  # inside the accepted [100, 180] word band


def cache_key(model: str, messages: Sequence[dict[str, str]]) -> str:
    rendered = json.dumps(list(messages), ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(f"{model}\x00{rendered}".encode("utf-8")).hexdigest()


class ResponseCache:
    """Directory of raw responses keyed by cache key; writers serialized."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.txt"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def put(self, key: str, response: str) -> None:
        with self._lock:
            tmp = self._path(key).with_suffix(".tmp")
            tmp.write_text(response, encoding="utf-8")
            tmp.replace(self._path(key))


class ChatProvider(Protocol):
    provider_id: str
    model: str
    context_tokens: int
    temperature: float

    def complete(self, messages: Sequence[dict[str, str]]) -> str: ...


class HttpChatProvider:
    """OpenAI-compatible chat-completions client with retry and backoff."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "LIMTOPIC_API_KEY",
        context_tokens: int = 16385,
        temperature: float = 0.0,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.context_tokens = context_tokens
        self.temperature = temperature
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.provider_id = f"openai-chat:{model}"
        self.calls = 0

    def complete(self, messages: Sequence[dict[str, str]]) -> str:
        self.calls += 1
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise ConfigError(f"environment variable {self.api_key_env} is not set")
        payload = {
            "model": self.model,
            "messages": list(messages),
            "temperature": self.temperature,
        }
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        last_exc: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, ValueError, IndexError) as exc:
                last_exc = exc
                if attempt < self.retries - 1:
                    time.sleep(self.backoff * (2**attempt))
        raise TransportError(f"chat endpoint failed after {self.retries} attempts: {last_exc}")


class StubChatProvider:
    """Offline chat provider.

    Looks up a canned exchange in ``fixtures_dir`` by cache key first; when no
    fixture exists it synthesizes a deterministic, parseable response from the
    prompt itself.
    """

    def __init__(
        self,
        model: str = "stub-chat",
        fixtures_dir: str | Path | None = None,
        context_tokens: int = 16385,
        temperature: float = 0.0,
    ):
        self.model = model
        self.fixtures_dir = Path(fixtures_dir) if fixtures_dir else None
        self.context_tokens = context_tokens
        self.temperature = temperature
        self.provider_id = f"stub-chat:{model}"
        self.calls = 0

    def complete(self, messages: Sequence[dict[str, str]]) -> str:
        self.calls += 1
        if self.fixtures_dir is not None:
            path = self.fixtures_dir / f"{cache_key(self.model, messages)}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
        return self._synthesize("\n".join(m["content"] for m in messages))

    def _synthesize(self, content: str) -> str:
        if "Rate each prompt out of 5 ratings" in content:
            digest = hashlib.sha256(f"{self.model}\x00{content}".encode("utf-8")).digest()
            lines = [
                f"{name.replace('_', ' ').title()}: {3 + digest[i] % 3}"
                for i, name in enumerate(JUDGE_METRICS)
            ]
            return "\n".join(lines)
        if "concise topic names" in content:
            return "\n".join(SeedTopicList.default().phrases)
        if "summarize the following texts within 130-140 words" in content:
            body = content.split("?", 1)[1] if "?" in content else content
            words = body.split()
            return " ".join(words[:135]) if words else ""
        if "Topic Summary: <texts>" in content:
            label = self._label(content)
            body = " ".join(self._documents(content).split()[:60])
            return f"topic: {label} Topic Summary: {body}"
        if "create a short label" in content:
            return self._label(content)
        return "OK"

    @staticmethod
    def _label(content: str) -> str:
        matches = re.findall(r"keyword: (.+)", content)
        if not matches:
            return "General Research Limitations"
        words = [w.strip(" '\".") for w in matches[-1].split(",")]
        words = [w for w in words if w][:3]
        return " ".join(w.title() for w in words) + " Limitations"

    @staticmethod
    def _documents(content: str) -> str:
        m = re.search(r"documents: (.+?)(?:\nThe topic is described|$)", content, re.DOTALL)
        return m.group(1) if m else content


class ChatClient:
    """Caching wrapper around a chat provider; records every exchange."""

    def __init__(self, provider: ChatProvider, cache: ResponseCache | None = None):
        self.provider = provider
        self.cache = cache
        self.exchanges: list[LlmExchange] = []
        self._lock = threading.Lock()

    @property
    def context_tokens(self) -> int:
        return self.provider.context_tokens

    def complete(
        self, messages: Sequence[dict[str, str]], template_name: str = ""
    ) -> tuple[str, LlmExchange]:
        key = cache_key(self.provider.model, messages)
        cached = self.cache.get(key) if self.cache is not None else None
        if cached is not None:
            response = cached
        else:
            response = self.provider.complete(messages)
            if self.cache is not None:
                self.cache.put(key, response)
        prompt_text = "\n".join(m["content"] for m in messages)
        exchange = LlmExchange(
            template_name=template_name,
            prompt=prompt_text,
            response=response,
            cache_key=key,
            prompt_tokens=approx_tokens(prompt_text),
            response_tokens=approx_tokens(response),
            cached=cached is not None,
        )
        with self._lock:
            self.exchanges.append(exchange)
        return response, exchange


def _fit_documents(docs: Sequence[str], make_prompt, budget_tokens: int) -> list[str]:
    """Tail-truncate whole documents until the rendered prompt fits the budget."""
    kept = list(docs)
    while len(kept) > 1 and approx_tokens(make_prompt(kept)) > budget_tokens:
        kept.pop()
    if approx_tokens(make_prompt(kept)) > budget_tokens:
        log.warning("prompt exceeds the token budget even with a single document")
    return kept


def _budget(client: ChatClient, reserve_tokens: int) -> int:
    return max(client.context_tokens - reserve_tokens, 1)


def _parse_phrase_list(text: str) -> list[str]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) == 1 and "," in lines[0]:
        items = [p for p in lines[0].split(",")]
    else:
        items = lines
    phrases: list[str] = []
    seen: set[str] = set()
    for item in items:
        item = re.sub(r"^\s*(?:[-*•]|\d+\s*[.)])\s*", "", item.strip())
        item = item.strip(" '\"`").strip()
        if not item or len(item.split()) > 3:
            continue
        key = item.lower()
        if key in seen:
            continue
        seen.add(key)
        phrases.append(item)
    return phrases


def generate_seed_words(
    corpus_sample: str,
    client: ChatClient,
    reserve_tokens: int = 512,
    template_dir: str | Path | None = None,
) -> SeedTopicList:
    """Ask the model for concise topic names; fall back to the bundled list.

    Responses are parsed as line- or comma-delimited phrases; phrases longer
    than three words are rejected and fewer than ten survivors triggers the
    bundled fallback list.
    """
    template = load_template("seed_words", template_dir)

    def make_prompt(docs: list[str]) -> str:
        return render(template, {"[DOCUMENTS]": "\n".join(docs)})

    sample_lines = corpus_sample.splitlines() or [""]
    kept = _fit_documents(sample_lines, make_prompt, _budget(client, reserve_tokens))
    if len(kept) < len(sample_lines):
        log.warning("corpus sample truncated from %d to %d lines", len(sample_lines), len(kept))
    response, exchange = client.complete(
        [{"role": "user", "content": make_prompt(kept)}], template_name="seed_words"
    )
    phrases = _parse_phrase_list(response)
    if len(phrases) < 10:
        log.warning("seed-word response yielded %d phrases; using the bundled list", len(phrases))
        fallback = SeedTopicList.default()
        exchange.parsed = fallback.phrases
        return fallback
    exchange.parsed = phrases
    return SeedTopicList(phrases)


def _clean_title(raw: str) -> str:
    lines = [ln for ln in raw.strip().splitlines() if ln.strip()]
    if not lines:
        return ""
    title = lines[0].strip()
    title = re.sub(r"^(topic|label|title)\s*[:=]\s*", "", title, flags=re.IGNORECASE)
    title = title.strip().strip("\"'`“”‘’").strip()
    title = re.sub(r"[.!?,;:]+$", "", title).strip()
    return title.strip("\"'`“”‘’").strip()


def _title_messages(topic: Topic, mode: str, budget_tokens: int, template_dir=None) -> list[dict[str, str]]:
    system = load_template("title_system", template_dir)
    main = load_template("title_main", template_dir)
    keyword = ", ".join(w for w, _ in topic.topic_words)
    docs = [d for d in topic.representative_text.split("\n") if d.strip()]
    prefix = ""
    if mode == "few_shot":
        # exactly one example block, never more
        prefix = load_template("title_example", template_dir) + "\n\n"

    def make_prompt(kept: list[str]) -> str:
        block = "\n".join(f"- {d}" for d in kept)
        return prefix + render(main, {"[DOCUMENTS]": block, "[KEYWORD]": keyword})

    kept = _fit_documents(docs, make_prompt, budget_tokens)
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": make_prompt(kept)},
    ]


def generate_title(
    topic: Topic,
    mode: str,
    client: ChatClient,
    reserve_tokens: int = 512,
    template_dir: str | Path | None = None,
) -> str:
    """Title a topic from its representative documents and topic words.

    The cleaned title must be 2-15 words; a bad response earns one corrective
    re-prompt before a ParseError.
    """
    if mode not in ("zero_shot", "few_shot"):
        raise ConfigError(f"unknown titling mode {mode!r}")
    messages = _title_messages(topic, mode, _budget(client, reserve_tokens), template_dir)
    template_name = "title_few_shot" if mode == "few_shot" else "title_zero_shot"
    response, exchange = client.complete(messages, template_name=template_name)
    title = _clean_title(response)
    if not 2 <= len(title.split()) <= 15:
        retry = list(messages) + [
            {"role": "assistant", "content": response},
            {"role": "user", "content": "Return only the topic label as plain text, between 2 and 15 words."},
        ]
        response, exchange = client.complete(retry, template_name=template_name)
        title = _clean_title(response)
        if not 2 <= len(title.split()) <= 15:
            raise ParseError(
                f"topic {topic.topic_id}: title not parseable after re-prompt: {response!r}"
            )
    exchange.parsed = title
    return title


_TITLE_FIELD_RE = re.compile(
    r"\btopic\s*:\s*(.*?)(?=\btopic\s+summary\s*:|$)", re.IGNORECASE | re.DOTALL
)
_SUMMARY_FIELD_RE = re.compile(
    r"\btopic\s+summary\s*:\s*(.*?)(?=\btopic\s*:|$)", re.IGNORECASE | re.DOTALL
)


def _parse_title_and_summary(text: str) -> tuple[str, str]:
    title_m = _TITLE_FIELD_RE.search(text)
    summary_m = _SUMMARY_FIELD_RE.search(text)
    title = _clean_title(title_m.group(1)) if title_m else ""
    summary = summary_m.group(1).strip() if summary_m else ""
    if not title or not summary:
        missing = [name for name, value in (("topic", title), ("Topic Summary", summary)) if not value]
        raise ParseError(f"response is missing field(s): {', '.join(missing)}")
    return title, summary


def generate_title_and_summary(
    topic: Topic,
    client: ChatClient,
    reserve_tokens: int = 512,
    template_dir: str | Path | None = None,
) -> tuple[str, str]:
    """Single-prompt variant that yields both a label and a short summary."""
    template = load_template("title_plus_summary", template_dir)
    keyword = ", ".join(w for w, _ in topic.topic_words)
    docs = [d for d in topic.representative_text.split("\n") if d.strip()]

    def make_prompt(kept: list[str]) -> str:
        return render(template, {"[DOCUMENTS]": " ".join(kept), "[KEYWORD]": keyword})

    kept = _fit_documents(docs, make_prompt, _budget(client, reserve_tokens))
    messages = [{"role": "user", "content": make_prompt(kept)}]
    response, exchange = client.complete(messages, template_name="title_plus_summary")
    try:
        parsed = _parse_title_and_summary(response)
    except ParseError:
        retry = list(messages) + [
            {"role": "assistant", "content": response},
            {
                "role": "user",
                "content": "Answer strictly in the format: topic: <topic label> Topic Summary: <texts>",
            },
        ]
        response, exchange = client.complete(retry, template_name="title_plus_summary")
        parsed = _parse_title_and_summary(response)
    exchange.parsed = parsed
    return parsed


SUMMARY_WORD_RANGE = (100, 180)


def summarize_topic(
    title: str,
    representative_text: str,
    client: ChatClient,
    reserve_tokens: int = 512,
    template_dir: str | Path | None = None,
) -> TopicSummary:
    """Summarize a topic's representative text, emphasizing its limitations.

    The prompt asks for 130-140 words; word counts outside [100, 180] are
    flagged but accepted.
    """
    if not representative_text.strip():
        raise ParseError("representative text is empty")
    template = load_template("summarize", template_dir)
    docs = [d for d in representative_text.split("\n") if d.strip()]

    def make_prompt(kept: list[str]) -> str:
        return render(template, {"[TITLE]": title, "[DOCUMENTS]": "\n".join(kept)})

    kept = _fit_documents(docs, make_prompt, _budget(client, reserve_tokens))
    messages = [{"role": "user", "content": make_prompt(kept)}]
    response, exchange = client.complete(messages, template_name="summarize")
    text = response.strip()
    if not text:
        retry = list(messages) + [
            {"role": "assistant", "content": response},
            {"role": "user", "content": "Please provide the 130-140 word summary."},
        ]
        response, exchange = client.complete(retry, template_name="summarize")
        text = response.strip()
        if not text:
            raise ParseError("summary response is empty after re-prompt")
    count = len(text.split())
    low, high = SUMMARY_WORD_RANGE
    in_range = low <= count <= high
    if not in_range:
        log.warning("summary word count %d outside [%d, %d]", count, low, high)
    summary = TopicSummary(text=text, word_count=count, in_range=in_range)
    exchange.parsed = summary
    return summary


def _parse_judge_scores(text: str) -> JudgeScores:
    found: dict[str, int] = {}
    for chunk in re.split(r"[,\n]+", text):
        m = re.match(r"\s*[-*]?\s*([A-Za-z_ ]+?)\s*[:=]\s*([0-9]+)", chunk)
        if not m:
            continue
        name = _METRIC_ALIASES.get(re.sub(r"\s+", " ", m.group(1)).strip().lower())
        if name is None:
            continue
        value = int(m.group(2))
        if not 1 <= value <= 5:
            raise ParseError(f"{name} score {value} outside the 1-5 rubric")
        found.setdefault(name, value)
    missing = [name for name in JUDGE_METRICS if name not in found]
    if missing:
        raise ParseError(f"judge response missing metric(s): {', '.join(missing)}")
    return JudgeScores(**found)


def judge_summaries(
    summaries: Sequence[tuple[str, str, str]],
    client: ChatClient,
    template_dir: str | Path | None = None,
) -> JudgeBatch:
    """Rate (model_tag, title, summary) triples on the nine-metric rubric.

    Per-summary parse failures are collected rather than aborting the batch.
    """
    if not summaries:
        raise ValueError("no summaries to judge")
    template = load_template("judge", template_dir)
    batch = JudgeBatch()
    for model_tag, title, summary in summaries:
        prompt = render(template, {"[TITLE]": title, "[DOCUMENTS]": summary})
        messages = [{"role": "user", "content": prompt}]
        response, exchange = client.complete(messages, template_name="judge")
        try:
            scores = _parse_judge_scores(response)
        except ParseError:
            retry = list(messages) + [
                {"role": "assistant", "content": response},
                {
                    "role": "user",
                    "content": "List all nine metrics, one per line, as 'Metric: score' with scores 1-5.",
                },
            ]
            response, exchange = client.complete(retry, template_name="judge")
            try:
                scores = _parse_judge_scores(response)
            except ParseError as exc:
                batch.errors.append((model_tag, str(exc)))
                continue
        exchange.parsed = scores
        batch.scores.append((model_tag, scores))
    return batch
