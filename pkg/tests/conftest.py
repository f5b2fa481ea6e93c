from __future__ import annotations

from pathlib import Path

import pytest

from limtopic.config import PipelineConfig

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS_PATH = FIXTURES / "corpus_fixture.jsonl"
LABELS_PATH = FIXTURES / "corpus_labels.json"
SEEDS_PATH = FIXTURES / "seed_phrases.txt"


def make_pipeline_config(tmp_path: Path, **overrides) -> PipelineConfig:
    """Stub-mode config for the bundled fixture corpus; caller overrides win."""
    base = dict(
        corpus_path=str(CORPUS_PATH),
        workdir=str(tmp_path / "work"),
        cache_dir=str(tmp_path / "cache"),
        stub=True,
        stub_dimension=64,
        chat_model="stub-writer",
        seed_words_path=str(SEEDS_PATH),
        min_topic_size=2,
        zero_shot_min_similarity=0.3,
        n_top_words=6,
        n_representative_docs=3,
        judge_models=("judge-a", "judge-b"),
        judge_sample_size=15,
        judge_seed=7,
        max_parallel=1,
    )
    base.update(overrides)
    return PipelineConfig(**base)


@pytest.fixture
def pipeline_config(tmp_path):
    return make_pipeline_config(tmp_path)


class ScriptedChatProvider:
    """Chat provider that replays a fixed list of responses."""

    def __init__(self, responses, model="scripted", context_tokens=16385):
        self.responses = list(responses)
        self.model = model
        self.context_tokens = context_tokens
        self.temperature = 0.0
        self.provider_id = f"scripted:{model}"
        self.calls = 0

    def complete(self, messages):
        self.calls += 1
        if not self.responses:
            raise AssertionError("scripted provider ran out of responses")
        return self.responses.pop(0)


@pytest.fixture
def scripted_provider():
    return ScriptedChatProvider
