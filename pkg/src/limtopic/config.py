"""Run configuration: a flat ``key = value`` file parsed into a dataclass.

Unknown keys are rejected so typos fail fast. ``fingerprint`` hashes every
behavior-affecting parameter plus the *contents* of the seed/stopword/pattern
files (never their paths), so identical runs in different directories produce
identical artifacts.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .topicmodel import TopicModelConfig

_DATA = Path(__file__).resolve().parent / "data"

# keys whose values are filesystem locations; excluded from the fingerprint
_PATH_KEYS = {
    "corpus_path",
    "workdir",
    "cache_dir",
    "seed_words_path",
    "checklist_path",
    "stopwords_path",
    "fixtures_dir",
    "reference_texts_path",
}
# execution knobs that cannot change outputs
_EXECUTION_KEYS = {"max_parallel"}


@dataclass
class PipelineConfig:
    corpus_path: str = ""
    workdir: str = "out"
    cache_dir: str = ""  # empty -> <workdir>/cache

    stub: bool = False
    stub_dimension: int = 64
    fixtures_dir: str = ""  # optional canned-exchange directory for the stub chat provider

    embed_base_url: str = "https://api.openai.com/v1"
    embed_model: str = "text-embedding-3-small"
    embed_dimension: int = 1536
    embed_batch_limit: int = 100
    chat_base_url: str = "https://api.openai.com/v1"
    chat_model: str = "gpt-4-turbo-preview"
    chat_context_tokens: int = 16385
    api_key_env: str = "LIMTOPIC_API_KEY"
    max_parallel: int = 4
    reserve_tokens: int = 512

    seed_words_path: str = ""
    checklist_path: str = ""
    stopwords_path: str = ""
    seed_source: str = "file"  # file | llm
    # optional JSON {topic_id: text} replacing representative docs as the
    # reference for the summary metrics
    reference_texts_path: str = ""

    min_words: int = 15
    min_df: int = 1

    min_topic_size: int = 10
    zero_shot_min_similarity: float = 0.75
    target_topic_count: int | None = None
    max_auto_topics: int = 35
    n_top_words: int = 10
    n_representative_docs: int = 4
    random_seed: int = 0
    reduction: str = "none"
    pca_components: int = 7

    prompt_mode: str = "few_shot"  # zero_shot | few_shot
    title_prompt: str = "title"  # title | title_plus_summary

    judge_models: tuple[str, ...] = ()
    judge_sample_size: int = 15
    judge_seed: int = 7
    coherence_window: int = 10

    def topic_config(self) -> TopicModelConfig:
        return TopicModelConfig(
            min_topic_size=self.min_topic_size,
            zero_shot_min_similarity=self.zero_shot_min_similarity,
            target_topic_count=self.target_topic_count,
            max_auto_topics=self.max_auto_topics,
            n_top_words=self.n_top_words,
            n_representative_docs=self.n_representative_docs,
            random_seed=self.random_seed,
            reduction=self.reduction,
            pca_components=self.pca_components,
        )

    @property
    def resolved_cache_dir(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else Path(self.workdir) / "cache"

    @property
    def resolved_seed_words_path(self) -> Path:
        return Path(self.seed_words_path) if self.seed_words_path else _DATA / "seed_words.txt"

    @property
    def resolved_checklist_path(self) -> Path:
        return Path(self.checklist_path) if self.checklist_path else _DATA / "checklist_patterns.txt"

    @property
    def resolved_stopwords_path(self) -> Path:
        return Path(self.stopwords_path) if self.stopwords_path else _DATA / "stopwords.txt"

    def validate(self, require_corpus: bool = True) -> None:
        if require_corpus:
            if not self.corpus_path:
                raise ConfigError("corpus_path is not set")
            if not Path(self.corpus_path).exists():
                raise ConfigError(f"corpus_path {self.corpus_path!r} does not exist")
        for label, path in (
            ("seed_words_path", self.resolved_seed_words_path),
            ("checklist_path", self.resolved_checklist_path),
            ("stopwords_path", self.resolved_stopwords_path),
        ):
            if not path.exists():
                raise ConfigError(f"{label} {str(path)!r} does not exist")
        if self.reference_texts_path and not Path(self.reference_texts_path).exists():
            raise ConfigError(
                f"reference_texts_path {self.reference_texts_path!r} does not exist"
            )
        if self.prompt_mode not in ("zero_shot", "few_shot"):
            raise ConfigError(f"prompt_mode must be zero_shot or few_shot, got {self.prompt_mode!r}")
        if self.title_prompt not in ("title", "title_plus_summary"):
            raise ConfigError(f"title_prompt must be title or title_plus_summary")
        if self.seed_source not in ("file", "llm"):
            raise ConfigError(f"seed_source must be file or llm, got {self.seed_source!r}")
        if not self.stub and not os.environ.get(self.api_key_env, ""):
            raise ConfigError(
                f"environment variable {self.api_key_env} is not set and stub mode is off"
            )
        self.topic_config().validate()

    def params(self) -> dict[str, object]:
        """Behavior-affecting parameters, path- and execution-key free."""
        out: dict[str, object] = {}
        for f in fields(self):
            if f.name in _PATH_KEYS or f.name in _EXECUTION_KEYS:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    def fingerprint(self) -> str:
        payload = {
            "params": self.params(),
            "seed_words": self.resolved_seed_words_path.read_text(encoding="utf-8"),
            "checklist": self.resolved_checklist_path.read_text(encoding="utf-8"),
            "stopwords": self.resolved_stopwords_path.read_text(encoding="utf-8"),
            "references": (
                Path(self.reference_texts_path).read_text(encoding="utf-8")
                if self.reference_texts_path
                else ""
            ),
        }
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def snapshot_text(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(value)
            elif value is None:
                value = "auto"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_BOOL_VALUES = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def _coerce(name: str, value: str, target_type: type) -> object:
    if name == "target_topic_count":
        if value.lower() in ("auto", "none", ""):
            return None
        return int(value)
    if name == "judge_models":
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if target_type is bool:
        try:
            return _BOOL_VALUES[value.lower()]
        except KeyError:
            raise ConfigError(f"{name}: expected a boolean, got {value!r}") from None
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    return value


def load_config(path: str | Path, overrides: dict[str, object] | None = None) -> PipelineConfig:
    """Read a config file, apply CLI overrides, and return the dataclass."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(path)!r}: {exc}") from exc
    raw = parse_config_text(text)
    known = {f.name: f for f in fields(PipelineConfig)}
    values: dict[str, object] = {}
    for key, text_value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        hint = known[key].type
        if "bool" in str(hint):
            target: type = bool
        elif "float" in str(hint):
            target = float
        elif "int" in str(hint):
            target = int
        else:
            target = str
        try:
            values[key] = _coerce(key, text_value, target)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)
