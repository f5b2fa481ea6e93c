from __future__ import annotations

import numpy as np
import pytest

from conftest import ScriptedChatProvider

from limtopic.errors import ParseError
from limtopic.llm import (
    ChatClient,
    JudgeScores,
    ResponseCache,
    StubChatProvider,
    cache_key,
    generate_seed_words,
    generate_title,
    generate_title_and_summary,
    judge_summaries,
    load_template,
    render,
    summarize_topic,
    _parse_judge_scores,
    _title_messages,
)
from limtopic.textutil import approx_tokens
from limtopic.topicmodel import Topic

FIG5_TITLE = "Challenges on Dense Retrieval Models in Information Retrieval"
FIG6_TITLE = (
    "Challenges and limitations in Clinical Data Usage and NLP Model Evaluation in Healthcare"
)
TABLE12_SUMMARY = (
    "In this text elucidates significant constraints encountered in the use of clinical data "
    "for NLP model evaluation, particularly in healthcare settings. The study's reliance on a "
    "single clinical cohort limits its generalizability, raising concerns about the "
    "representativeness of the data due to possible biases in gender, age, race distributions."
)
JUDGE_FIXTURE = (
    "Gramm: 5, Readability: 4, Cohesiveness: 5, Understandability: 4, Likability: 4, "
    "Coherence: 5, Relevance: 5, Fluency: 4, Description Quality: 5"
)


def make_topic(
    docs=("However, it is unclear how it may be adapted for the single-representation dense retrieval prf model.",
          "In addition, in this setting the reranker depends on the first-stage retriever."),
    words=(("retrieval", 2.0), ("dense", 1.5), ("model", 1.2), ("ranking", 1.0)),
):
    return Topic(
        topic_id=0,
        member_ids=[f"m{i}" for i in range(len(docs))],
        centroid=np.zeros(4),
        topic_words=list(words),
        representative_text="\n".join(docs),
        rank=1,
    )


def client_for(responses, cache=None, **provider_kwargs):
    return ChatClient(ScriptedChatProvider(responses, **provider_kwargs), cache)


# -------------------------------------------------------------- templates


def test_render_rejects_unresolved_placeholders():
    with pytest.raises(ParseError, match=r"\[KEYWORD\]"):
        render(load_template("title_main"), {"[DOCUMENTS]": "d"})


def test_title_prompt_byte_matches_template_substitution():
    topic = make_topic()
    messages = _title_messages(topic, "zero_shot", budget_tokens=10_000)
    docs_block = "\n".join(f"- {d}" for d in topic.representative_text.split("\n"))
    keyword = ", ".join(w for w, _ in topic.topic_words)
    expected = load_template("title_main").replace("[DOCUMENTS]", docs_block).replace(
        "[KEYWORD]", keyword
    )
    assert messages[0]["content"] == load_template("title_system")
    assert messages[1]["content"] == expected


def test_few_shot_prompt_contains_exactly_one_example_block():
    topic = make_topic()
    example = load_template("title_example")
    few = _title_messages(topic, "few_shot", budget_tokens=10_000)[1]["content"]
    zero = _title_messages(topic, "zero_shot", budget_tokens=10_000)[1]["content"]
    assert few.count(example) == 1
    assert example not in zero


def test_summarize_prompt_byte_matches_template_substitution(scripted_provider):
    client = client_for(["word " * 135])
    topic = make_topic()
    summarize_topic("Some Title", topic.representative_text, client)
    expected = load_template("summarize").replace("[TITLE]", "Some Title").replace(
        "[DOCUMENTS]", topic.representative_text
    )
    assert client.exchanges[0].prompt == expected


def test_judge_prompt_byte_matches_template_substitution():
    client = client_for([JUDGE_FIXTURE])
    judge_summaries([("gpt", "A Title", "A summary.")], client)
    expected = load_template("judge").replace("[TITLE]", "A Title").replace(
        "[DOCUMENTS]", "A summary."
    )
    assert client.exchanges[0].prompt == expected


# ------------------------------------------------------------- seed words


def test_seed_words_from_bundled_list_text():
    from limtopic.topicmodel import SeedTopicList

    table = "\n".join(SeedTopicList.default().phrases)
    client = client_for([table])
    seeds = generate_seed_words("sample corpus text", client)
    assert len(seeds.phrases) == 27
    assert "Generalizability" in seeds.phrases
    assert "Hyperparameter" in seeds.phrases


def test_seed_words_dedup_then_fallback():
    client = client_for(["1. Bias\n2. Bias"])
    seeds = generate_seed_words("sample", client)
    # dedup leaves one phrase -> below 10 -> bundled fallback list
    assert len(seeds.phrases) == 27


def test_seed_words_well_formed_response_preserves_order():
    phrases = [f"topic {i}" for i in range(30)]
    client = client_for(["\n".join(phrases)])
    seeds = generate_seed_words("sample", client)
    assert seeds.phrases == phrases


def test_seed_words_rejects_long_phrases():
    listing = "\n".join(["one two three four"] * 5 + [f"name {i}" for i in range(12)])
    client = client_for([listing])
    seeds = generate_seed_words("sample", client)
    assert all(len(p.split()) <= 3 for p in seeds.phrases)
    assert len(seeds.phrases) == 12


# ----------------------------------------------------------------- titles


def test_title_cleanup_strips_label_and_quotes():
    client = client_for(['Label: "Gender Bias in Language Models"'])
    title = generate_title(make_topic(), "zero_shot", client)
    assert title == "Gender Bias in Language Models"


def test_title_empty_response_reprompts_then_fails():
    provider = ScriptedChatProvider(["", ""])
    client = ChatClient(provider)
    with pytest.raises(ParseError):
        generate_title(make_topic(), "few_shot", client)
    assert provider.calls == 2


def test_title_overlong_response_reprompts_then_recovers():
    sixteen = " ".join(["word"] * 16)
    client = client_for([sixteen, "Compact Topic Label"])
    assert generate_title(make_topic(), "zero_shot", client) == "Compact Topic Label"


def test_title_fig5_fixture_exchange(tmp_path):
    # canned exchange keyed by cache key, served from the fixtures directory
    provider = StubChatProvider(model="fixture-model", fixtures_dir=tmp_path)
    topic = make_topic()
    messages = _title_messages(topic, "few_shot",
                               budget_tokens=provider.context_tokens - 512)
    (tmp_path / f"{cache_key(provider.model, messages)}.txt").write_text(FIG5_TITLE)
    title = generate_title(topic, "few_shot", ChatClient(provider))
    assert title == FIG5_TITLE


def test_title_mode_validated():
    with pytest.raises(Exception):
        generate_title(make_topic(), "three_shot", client_for(["t"]))


# ------------------------------------------------------- title + summary


def test_title_and_summary_fig6_fixture():
    response = f"topic: {FIG6_TITLE} Topic Summary: {TABLE12_SUMMARY}"
    client = client_for([response])
    title, summary = generate_title_and_summary(make_topic(), client)
    assert title == FIG6_TITLE
    assert summary.startswith("In this text elucidates significant constraints")


def test_title_and_summary_missing_field_errors_after_retry():
    provider = ScriptedChatProvider(["Topic Summary: only summary", "Topic Summary: again"])
    client = ChatClient(provider)
    with pytest.raises(ParseError):
        generate_title_and_summary(make_topic(), client)
    assert provider.calls == 2


def test_title_and_summary_reversed_field_order():
    client = client_for(["Topic Summary: the summary text. topic: A Reversed Title"])
    title, summary = generate_title_and_summary(make_topic(), client)
    assert title == "A Reversed Title"
    assert summary == "the summary text."


# -------------------------------------------------------------- summarize


def test_summary_in_range_not_flagged():
    client = client_for([" ".join(["word"] * 135)])
    out = summarize_topic("T Title", "some documents", client)
    assert out.word_count == 135
    assert out.in_range


def test_summary_out_of_range_flagged_but_accepted():
    client = client_for([" ".join(["word"] * 90)])
    out = summarize_topic("T Title", "some documents", client)
    assert out.word_count == 90
    assert not out.in_range


def test_summary_table12_fixture():
    client = client_for([TABLE12_SUMMARY])
    out = summarize_topic(FIG6_TITLE, "clinical cohort text", client)
    assert out.text.startswith("In this text elucidates significant constraints")


def test_summary_empty_after_retry_is_parse_error():
    provider = ScriptedChatProvider(["", "  "])
    with pytest.raises(ParseError):
        summarize_topic("T", "docs", ChatClient(provider))
    assert provider.calls == 2


# ------------------------------------------------------------------ judge


def test_judge_fixture_parses_to_expected_scores():
    scores = _parse_judge_scores(JUDGE_FIXTURE)
    assert scores == JudgeScores(5, 4, 5, 4, 4, 5, 5, 4, 5)


def test_judge_score_out_of_rubric_is_parse_error_not_clamp():
    bad = JUDGE_FIXTURE.replace("Gramm: 5", "Gramm: 6")
    with pytest.raises(ParseError, match="outside the 1-5 rubric"):
        _parse_judge_scores(bad)


def test_judge_batch_collects_per_summary_errors():
    good = JUDGE_FIXTURE
    bad = "Grammaticality: 5"  # missing eight metrics, twice (retry also fails)
    client = client_for([good, bad, bad, good])
    batch = judge_summaries(
        [("m1", "t1", "s1"), ("m2", "t2", "s2"), ("m3", "t3", "s3")], client
    )
    assert len(batch.scores) == 2
    assert len(batch.errors) == 1
    assert batch.errors[0][0] == "m2"


def test_judge_alias_table_normalizes_labels():
    text = JUDGE_FIXTURE.replace("Gramm:", "Grammatically:").replace(
        "Description Quality:", "description_quality:"
    )
    assert _parse_judge_scores(text).grammaticality == 5


# -------------------------------------------------------- cache + budget


def test_cache_hit_makes_zero_provider_calls(tmp_path):
    cache = ResponseCache(tmp_path / "responses")
    first_provider = ScriptedChatProvider([" ".join(["word"] * 130)])
    out1 = summarize_topic("T Label", "documents here", ChatClient(first_provider, cache))
    second_provider = ScriptedChatProvider([])  # would raise if called
    out2 = summarize_topic("T Label", "documents here", ChatClient(second_provider, cache))
    assert second_provider.calls == 0
    assert out1 == out2


def test_documents_tail_truncated_whole_never_mid_document():
    docs = [f"document number {i} " + "filler " * 30 for i in range(10)]
    topic = make_topic(docs=tuple(docs))
    messages = _title_messages(topic, "zero_shot", budget_tokens=150)
    prompt = messages[1]["content"]
    kept = [d for d in docs if f"- {d}" in prompt]
    assert 1 <= len(kept) < 10
    assert kept == docs[: len(kept)]  # tail truncation keeps a prefix
    for doc in docs:
        present = doc in prompt
        prefix_present = doc[: len(doc) // 2] in prompt
        assert present == prefix_present  # never a partial document
    assert approx_tokens(prompt) <= 150 or len(kept) == 1


def test_exchange_records_cache_key_and_tokens():
    client = client_for([" ".join(["word"] * 120)])
    summarize_topic("T Label", "some docs", client)
    exchange = client.exchanges[0]
    assert exchange.cache_key == cache_key("scripted", [{"role": "user", "content": exchange.prompt}])
    assert exchange.prompt_tokens == approx_tokens(exchange.prompt)
    assert exchange.template_name == "summarize"


# ------------------------------------------------------------------- stub


def test_stub_provider_synthesizes_parseable_everything():
    stub = StubChatProvider(model="stub-x")
    topic = make_topic()
    client = ChatClient(stub)
    title = generate_title(topic, "few_shot", client)
    assert 2 <= len(title.split()) <= 15
    t2, s2 = generate_title_and_summary(topic, client)
    assert t2 and s2
    summary = summarize_topic(title, topic.representative_text, client)
    assert summary.text
    batch = judge_summaries([("m", title, summary.text)], client)
    assert len(batch.scores) == 1
    seeds = generate_seed_words("sample corpus", client)
    assert len(seeds.phrases) >= 10


def test_stub_provider_is_deterministic():
    topic = make_topic()
    t1 = generate_title(topic, "few_shot", ChatClient(StubChatProvider(model="s")))
    t2 = generate_title(topic, "few_shot", ChatClient(StubChatProvider(model="s")))
    assert t1 == t2
