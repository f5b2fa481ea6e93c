"""Staged pipeline: extract -> preprocess -> model -> titles -> summarize ->
judge -> evaluate, with every intermediate written to the workdir as plain
JSON/JSONL/CSV so runs are inspectable and resumable.

Stage outputs are deterministic for a fixed config, corpus, and seed; with
warm caches a repeat run makes zero provider calls and reproduces topics.json,
metrics.csv, and report.md byte for byte.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import corpus as corpus_mod
from . import llm as llm_mod
from . import metrics as metrics_mod
from . import preprocess as preprocess_mod
from . import topicmodel as topicmodel_mod
from .config import PipelineConfig
from .embed import (
    EmbeddingMatrix,
    HttpEmbeddingProvider,
    StubEmbeddingProvider,
    VectorCache,
    embed_batch,
)
from .errors import ConfigError, MetricUndefinedError, PipelineError
from .llm import ChatClient, HttpChatProvider, ResponseCache, StubChatProvider
from .preprocess import CleanRecord
from .topicmodel import SeedTopicList, Topic

log = logging.getLogger(__name__)


@dataclass
class Providers:
    embed: object
    chat: ChatClient
    judges: list[tuple[str, ChatClient]]
    vectors: VectorCache

    @property
    def embed_calls(self) -> int:
        return int(getattr(self.embed, "calls", 0))

    @property
    def chat_calls(self) -> int:
        total = int(getattr(self.chat.provider, "calls", 0))
        for _, client in self.judges:
            total += int(getattr(client.provider, "calls", 0))
        return total


def make_providers(cfg: PipelineConfig) -> Providers:
    cache_root = cfg.resolved_cache_dir
    vectors = VectorCache(cache_root / "vectors")
    responses = ResponseCache(cache_root / "responses")
    if cfg.stub:
        embed_provider = StubEmbeddingProvider(dimension=cfg.stub_dimension)
        fixtures = cfg.fixtures_dir or None
        chat = ChatClient(
            StubChatProvider(model=cfg.chat_model, fixtures_dir=fixtures,
                             context_tokens=cfg.chat_context_tokens),
            responses,
        )
        judges = [
            (m, ChatClient(StubChatProvider(model=m, fixtures_dir=fixtures,
                                            context_tokens=cfg.chat_context_tokens), responses))
            for m in cfg.judge_models
        ]
    else:
        embed_provider = HttpEmbeddingProvider(
            base_url=cfg.embed_base_url,
            model=cfg.embed_model,
            dimension=cfg.embed_dimension,
            api_key_env=cfg.api_key_env,
            batch_limit=cfg.embed_batch_limit,
        )
        chat = ChatClient(
            HttpChatProvider(
                base_url=cfg.chat_base_url,
                model=cfg.chat_model,
                api_key_env=cfg.api_key_env,
                context_tokens=cfg.chat_context_tokens,
            ),
            responses,
        )
        judges = [
            (m, ChatClient(HttpChatProvider(base_url=cfg.chat_base_url, model=m,
                                            api_key_env=cfg.api_key_env,
                                            context_tokens=cfg.chat_context_tokens), responses))
            for m in cfg.judge_models
        ]
    return Providers(embed=embed_provider, chat=chat, judges=judges, vectors=vectors)


def _workdir(cfg: PipelineConfig) -> Path:
    path = Path(cfg.workdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dump_json(path: Path, payload: object) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
                    encoding="utf-8")


# ---------------------------------------------------------------- extract

def stage_extract(cfg: PipelineConfig, providers: Providers) -> None:
    workdir = _workdir(cfg)
    docs = list(corpus_mod.iter_corpus(cfg.corpus_path))
    if not docs:
        raise ConfigError("no documents in corpus")
    records = []
    for doc in docs:
        rec = corpus_mod.extract_record(doc)
        if rec is not None:
            records.append(rec)
    stats = corpus_mod.corpus_stats(records, docs)
    corpus_mod.write_records_jsonl(records, workdir / "records.jsonl")
    (workdir / "stats.csv").write_text(corpus_mod.stats_to_csv(stats), encoding="utf-8")

    print(f"[extract] {len(docs)} documents -> {len(records)} records "
          f"({stats.total_explicit} explicit, {stats.total_implicit} implicit, "
          f"{len(docs) - len(records)} without)")
    print(f"  {'category':<16}{'explicit':>9}{'implicit':>9}")
    for cat, (e, i) in stats.per_category.items():
        print(f"  {cat:<16}{e:>9}{i:>9}")


# ------------------------------------------------------------- preprocess

def _write_clean(path: Path, records: Sequence[CleanRecord],
                 meta: dict[str, tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            mode, heading = meta.get(rec.doc_id, ("", ""))
            fh.write(json.dumps({
                "doc_id": rec.doc_id,
                "mode": mode,
                "source_heading": heading,
                "text": rec.text,
                "word_count": rec.word_count,
            }, ensure_ascii=False) + "\n")


def read_clean(path: str | Path) -> list[CleanRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                blob = json.loads(line)
                out.append(CleanRecord(blob["doc_id"], blob["text"], blob["word_count"]))
    return out


def stage_preprocess(cfg: PipelineConfig, providers: Providers) -> None:
    workdir = _workdir(cfg)
    records = corpus_mod.read_records_jsonl(workdir / "records.jsonl")
    patterns = preprocess_mod.load_patterns(cfg.resolved_checklist_path)
    cleaned = preprocess_mod.filter_records(records, min_words=cfg.min_words, patterns=patterns)
    meta = {r.doc_id: (r.mode, r.source_heading) for r in records}
    _write_clean(workdir / "clean.jsonl", cleaned, meta)
    print(f"[preprocess] kept {len(cleaned)} of {len(records)} records "
          f"(>= {cfg.min_words} words after cleaning)")


# ------------------------------------------------------------------ model

def _load_seeds(cfg: PipelineConfig, providers: Providers, clean: Sequence[CleanRecord]) -> SeedTopicList:
    if cfg.seed_source == "llm":
        sample = "\n".join(r.text for r in clean[:50])
        return llm_mod.generate_seed_words(sample, providers.chat,
                                           reserve_tokens=cfg.reserve_tokens)
    return SeedTopicList.from_file(cfg.resolved_seed_words_path)


def stage_model(cfg: PipelineConfig, providers: Providers) -> None:
    workdir = _workdir(cfg)
    clean = read_clean(workdir / "clean.jsonl")
    if not clean:
        raise ConfigError("no cleaned records to model")
    matrix = embed_batch([r.text for r in clean], providers.embed, providers.vectors,
                         max_parallel=cfg.max_parallel)
    seeds = _load_seeds(cfg, providers, clean)
    seed_matrix = embed_batch(seeds.phrases, providers.embed, providers.vectors)
    stopwords = topicmodel_mod.load_stopwords(str(cfg.resolved_stopwords_path))
    model = topicmodel_mod.fit(clean, matrix, seeds, seed_matrix, cfg.topic_config(),
                               stopwords=stopwords, min_df=cfg.min_df)
    payload = {
        "fingerprint": cfg.fingerprint(),
        "seed_phrases": seeds.phrases,
        "vocabulary": model.vocabulary,
        "topics": [
            {
                "topic_id": t.topic_id,
                "rank": t.rank,
                "size": t.size,
                "member_ids": t.member_ids,
                "topic_words": [[w, weight] for w, weight in t.topic_words],
                "representative_text": t.representative_text,
            }
            for t in model.topics
        ],
        "assignments": model.assignments,
        "diagnostics": {k: v for k, v in model.diagnostics.items() if k != "objective_traces"},
    }
    _dump_json(workdir / "model.json", payload)
    print(f"[model] {len(model.topics)} topics, {len(model.outlier_ids)} outliers, "
          f"{model.diagnostics['n_locked']} records pre-assigned to seeds")


def _topics_from_model_json(blob: dict) -> list[Topic]:
    topics = []
    for t in blob["topics"]:
        topics.append(Topic(
            topic_id=t["topic_id"],
            member_ids=list(t["member_ids"]),
            centroid=np.zeros(1),
            topic_words=[(w, float(x)) for w, x in t["topic_words"]],
            representative_text=t["representative_text"],
            rank=t["rank"],
        ))
    return sorted(topics, key=lambda t: t.topic_id)


def _map_topics(topics: Sequence[Topic], fn: Callable[[Topic], object],
                max_parallel: int) -> dict[int, object]:
    if max_parallel > 1 and len(topics) > 1:
        with ThreadPoolExecutor(max_workers=max_parallel) as pool:
            results = list(pool.map(fn, topics))
    else:
        results = [fn(t) for t in topics]
    return {t.topic_id: r for t, r in zip(topics, results)}


# ----------------------------------------------------------------- titles

def stage_titles(cfg: PipelineConfig, providers: Providers) -> None:
    workdir = _workdir(cfg)
    blob = json.loads((workdir / "model.json").read_text(encoding="utf-8"))
    topics = _topics_from_model_json(blob)

    if cfg.title_prompt == "title_plus_summary":
        def one(topic: Topic) -> tuple[str, str]:
            return llm_mod.generate_title_and_summary(topic, providers.chat,
                                                      reserve_tokens=cfg.reserve_tokens)
        results = _map_topics(topics, one, cfg.max_parallel)
        titles = {str(tid): pair[0] for tid, pair in results.items()}
        drafts = {str(tid): pair[1] for tid, pair in results.items()}
    else:
        def one(topic: Topic) -> str:
            return llm_mod.generate_title(topic, cfg.prompt_mode, providers.chat,
                                          reserve_tokens=cfg.reserve_tokens)
        results = _map_topics(topics, one, cfg.max_parallel)
        titles = {str(tid): title for tid, title in results.items()}
        drafts = {}
    _dump_json(workdir / "titles.json", {"titles": titles, "draft_summaries": drafts})
    print(f"[titles] generated {len(titles)} titles ({cfg.prompt_mode})")


# -------------------------------------------------------------- summarize

def stage_summarize(cfg: PipelineConfig, providers: Providers) -> None:
    workdir = _workdir(cfg)
    blob = json.loads((workdir / "model.json").read_text(encoding="utf-8"))
    titles = json.loads((workdir / "titles.json").read_text(encoding="utf-8"))["titles"]
    topics = _topics_from_model_json(blob)

    def one(topic: Topic) -> llm_mod.TopicSummary:
        return llm_mod.summarize_topic(titles[str(topic.topic_id)], topic.representative_text,
                                       providers.chat, reserve_tokens=cfg.reserve_tokens)

    results = _map_topics(topics, one, cfg.max_parallel)
    summaries = {
        str(tid): {"text": s.text, "word_count": s.word_count, "in_range": s.in_range}
        for tid, s in results.items()
    }
    _dump_json(workdir / "summaries.json", summaries)

    merged = []
    for t in blob["topics"]:
        tid = str(t["topic_id"])
        merged.append({
            "topic_id": t["topic_id"],
            "rank": t["rank"],
            "size": t["size"],
            "topic_words": t["topic_words"],
            "representative_text": t["representative_text"],
            "title": titles[tid],
            "summary": summaries[tid]["text"],
            "member_ids": t["member_ids"],
        })
    payload = {
        "config": {"fingerprint": blob["fingerprint"], "params": cfg.params()},
        "topics": merged,
        "assignments": blob["assignments"],
    }
    _dump_json(workdir / "topics.json", payload)
    flagged = sum(1 for s in results.values() if not s.in_range)
    print(f"[summarize] {len(results)} summaries, {flagged} outside the word band")


# ------------------------------------------------------------------ judge

def stage_judge(cfg: PipelineConfig, providers: Providers) -> None:
    workdir = _workdir(cfg)
    if not providers.judges:
        log.warning("no judge models configured; skipping judge stage")
        return
    blob = json.loads((workdir / "topics.json").read_text(encoding="utf-8"))
    topics = sorted(blob["topics"], key=lambda t: t["topic_id"])
    if not topics:
        raise ConfigError("no topics to judge")
    sample_size = cfg.judge_sample_size
    if sample_size > len(topics):
        log.warning("judge_sample_size %d exceeds %d topics; using all topics",
                    sample_size, len(topics))
        sample_size = len(topics)
    indices = metrics_mod.sample_judged(len(topics), sample_size, cfg.judge_seed)
    triples = [(cfg.chat_model, topics[i]["title"], topics[i]["summary"]) for i in indices]

    pooled: list[tuple[str, llm_mod.JudgeScores]] = []
    errors: list[tuple[str, str]] = []
    for judge_model, client in providers.judges:
        batch = llm_mod.judge_summaries(triples, client)
        pooled.extend(batch.scores)
        errors.extend((f"{judge_model}:{tag}", msg) for tag, msg in batch.errors)
    for tag, msg in errors:
        log.warning("judge parse failure for %s: %s", tag, msg)
    means = metrics_mod.aggregate_judge(pooled)

    lines = ["model_tag,metric,mean"]
    for tag in sorted(means):
        for metric in llm_mod.JUDGE_METRICS:
            lines.append(f"{tag},{metric},{means[tag][metric]:.6f}")
    (workdir / "judge_scores.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"[judge] {len(pooled)} ratings from {len(providers.judges)} judge(s) "
          f"over {sample_size} sampled summaries")


# --------------------------------------------------------------- evaluate

def _nan_or(value: float | None) -> float:
    return float("nan") if value is None else float(value)


def stage_evaluate(cfg: PipelineConfig, providers: Providers) -> None:
    workdir = _workdir(cfg)
    clean = read_clean(workdir / "clean.jsonl")
    blob = json.loads((workdir / "topics.json").read_text(encoding="utf-8"))
    topics = sorted(blob["topics"], key=lambda t: t["topic_id"])
    assignments = blob["assignments"]

    matrix = embed_batch([r.text for r in clean], providers.embed, providers.vectors,
                         max_parallel=cfg.max_parallel)
    labels = [assignments[r.doc_id] for r in clean]
    try:
        sil = metrics_mod.silhouette(matrix, labels)
    except MetricUndefinedError as exc:
        log.warning("silhouette undefined: %s", exc)
        sil = float("nan")

    texts = [r.text for r in clean]
    stopwords = topicmodel_mod.load_stopwords(str(cfg.resolved_stopwords_path))
    vocabulary = topicmodel_mod.build_vocabulary(clean, stopwords, min_df=cfg.min_df)

    word_lists = [[w for w, _ in t["topic_words"]] for t in topics]
    coh_words = metrics_mod.coherence_npmi(word_lists, texts, window=cfg.coherence_window)
    keyword_lists = []
    for t in topics:
        keywords = topicmodel_mod.keybert_keywords(
            t["representative_text"], vocabulary, providers.embed, cfg.n_top_words,
            cache=providers.vectors,
        )
        keyword_lists.append([w for w, _ in keywords])
    coh_keywords = metrics_mod.coherence_npmi(keyword_lists, texts, window=cfg.coherence_window)

    references: dict[str, str] = {}
    if cfg.reference_texts_path:
        references = json.loads(Path(cfg.reference_texts_path).read_text(encoding="utf-8"))

    # one embedding pass covers every token used by the recall metric
    all_tokens = sorted({
        tok
        for t in topics
        for tok in metrics_mod.tokenize(t["summary"])
        + metrics_mod.tokenize(references.get(str(t["topic_id"]), t["representative_text"]))
    })
    token_matrix = embed_batch(all_tokens, providers.embed, providers.vectors,
                               max_parallel=cfg.max_parallel)
    token_vectors = dict(zip(all_tokens, token_matrix.rows))

    per_topic: dict[str, dict[int, float]] = {
        "rouge1_f1": {}, "rouge2_f1": {}, "rougeL_f1": {}, "bleu": {},
        "bertscore_recall": {}, "coherence_topic_words": {}, "coherence_keywords": {},
        "summary_word_count": {},
    }
    for pos, t in enumerate(topics):
        tid = t["topic_id"]
        cand = t["summary"]
        ref = references.get(str(tid), t["representative_text"])
        per_topic["rouge1_f1"][tid] = metrics_mod.rouge_n(cand, ref, 1).f1
        per_topic["rouge2_f1"][tid] = metrics_mod.rouge_n(cand, ref, 2).f1
        per_topic["rougeL_f1"][tid] = metrics_mod.rouge_l(cand, ref).f1
        per_topic["bleu"][tid] = metrics_mod.bleu(cand, ref)
        per_topic["bertscore_recall"][tid] = metrics_mod.bertscore_recall(
            cand, ref, lambda tok: token_vectors[tok]
        )
        per_topic["summary_word_count"][tid] = float(len(cand.split()))
        if coh_words.per_topic[pos] is not None:
            per_topic["coherence_topic_words"][tid] = coh_words.per_topic[pos]
        if coh_keywords.per_topic[pos] is not None:
            per_topic["coherence_keywords"][tid] = coh_keywords.per_topic[pos]

    report = metrics_mod.MetricReport.build(
        per_topic,
        corpus={"silhouette": sil},
        params={"coherence_window": cfg.coherence_window, "bleu_smoothing": "add-1 on zero counts"},
    )
    lines = ["topic_id,metric,value"]
    lines += [",".join(row) for row in report.csv_rows()]
    (workdir / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_report(cfg, workdir)
    print(f"[evaluate] silhouette={sil:.4f} "
          f"coherence(topic_words)={_nan_or(coh_words.mean):.4f} "
          f"coherence(keywords)={_nan_or(coh_keywords.mean):.4f}")


# ----------------------------------------------------------------- report

def _read_metrics_csv(path: Path) -> dict[str, dict[str, float]]:
    table: dict[str, dict[str, float]] = {}
    lines = path.read_text(encoding="utf-8").splitlines()[1:]
    for line in lines:
        topic_id, metric, value = line.split(",")
        table.setdefault(metric, {})[topic_id] = float(value)
    return table


def write_report(cfg: PipelineConfig, workdir: Path | None = None) -> None:
    workdir = workdir or _workdir(cfg)
    for needed in ("topics.json", "metrics.csv"):
        if not (workdir / needed).exists():
            raise ConfigError(f"{needed} not found in {workdir}; run the pipeline first")
    blob = json.loads((workdir / "topics.json").read_text(encoding="utf-8"))
    table = _read_metrics_csv(workdir / "metrics.csv")
    fingerprint = blob["config"]["fingerprint"]
    embed_label = "stub" if cfg.stub else cfg.embed_model
    model_label = f"{embed_label} + {cfg.chat_model} ({cfg.prompt_mode})"

    def mean_of(metric: str) -> str:
        value = table.get(metric, {}).get("mean")
        if metric == "silhouette":
            value = table.get(metric, {}).get("corpus")
        return "n/a" if value is None or math.isnan(value) else f"{value:.4f}"

    out = [
        "# Pipeline report",
        "",
        f"Config fingerprint: `{fingerprint}`",
        "",
        "## Topic modeling quality",
        "",
        "| Model | Topics | Silhouette | Coherence (topic words) | Coherence (keywords) |",
        "|---|---|---|---|---|",
        f"| {model_label} | {len(blob['topics'])} | {mean_of('silhouette')} | "
        f"{mean_of('coherence_topic_words')} | {mean_of('coherence_keywords')} |",
        "",
        "## Summarization quality",
        "",
        ("Reference text per topic: human-written references. "
         if cfg.reference_texts_path
         else "Reference text per topic: its representative documents. ")
        + "BLEU smoothing: add-1 on zero n-gram counts.",
        "",
        "| Model | ROUGE-1 | ROUGE-2 | ROUGE-L | BLEU | Embedding recall |",
        "|---|---|---|---|---|---|",
        f"| {cfg.chat_model} | {mean_of('rouge1_f1')} | {mean_of('rouge2_f1')} | "
        f"{mean_of('rougeL_f1')} | {mean_of('bleu')} | {mean_of('bertscore_recall')} |",
    ]

    judge_path = workdir / "judge_scores.csv"
    if judge_path.exists():
        rows = judge_path.read_text(encoding="utf-8").splitlines()[1:]
        by_model: dict[str, dict[str, float]] = {}
        for row in rows:
            tag, metric, mean = row.split(",")
            by_model.setdefault(tag, {})[metric] = float(mean)
        out += ["", "## Judge ratings", ""]
        models = sorted(by_model)
        out.append("| Metric | " + " | ".join(models) + " |")
        out.append("|---" * (len(models) + 1) + "|")
        for metric in llm_mod.JUDGE_METRICS:
            cells = " | ".join(f"{by_model[m].get(metric, float('nan')):.2f}" for m in models)
            out.append(f"| {metric} | {cells} |")

    out += ["", "## Topics", "", "| Rank | Topic id | Size | Title |", "|---|---|---|---|"]
    for t in sorted(blob["topics"], key=lambda t: t["rank"]):
        out.append(f"| {t['rank']} | {t['topic_id']} | {t['size']} | {t['title']} |")
    (workdir / "report.md").write_text("\n".join(out) + "\n", encoding="utf-8")


# ----------------------------------------------------------------- ablate

def run_ablation(cfg: PipelineConfig, fractions: Sequence[float]) -> Path:
    if not fractions:
        raise ConfigError("no subset fractions given")
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise ConfigError("subset fractions must lie in (0, 1]")
    if list(fractions) != sorted(fractions):
        raise ConfigError("subset fractions must be ascending")
    providers = make_providers(cfg)
    workdir = _workdir(cfg)
    if not (workdir / "clean.jsonl").exists():
        stage_extract(cfg, providers)
        stage_preprocess(cfg, providers)
    clean = read_clean(workdir / "clean.jsonl")
    matrix = embed_batch([r.text for r in clean], providers.embed, providers.vectors,
                         max_parallel=cfg.max_parallel)
    seeds = _load_seeds(cfg, providers, clean)
    seed_matrix = embed_batch(seeds.phrases, providers.embed, providers.vectors)
    stopwords = topicmodel_mod.load_stopwords(str(cfg.resolved_stopwords_path))

    rng = np.random.default_rng(cfg.random_seed)
    order = rng.permutation(len(clean))
    rows = ["fraction,n_records,silhouette,coherence"]
    for fraction in fractions:
        m = max(1, math.floor(fraction * len(clean)))
        if m < len(seeds.phrases):
            log.warning("fraction %.3f keeps %d records < %d seeds; skipped",
                        fraction, m, len(seeds.phrases))
            continue
        subset = sorted(int(i) for i in order[:m])
        sub_records = [clean[i] for i in subset]
        sub_matrix = EmbeddingMatrix(rows=matrix.rows[subset], provider_id=matrix.provider_id,
                                     dimension=matrix.dimension)
        model = topicmodel_mod.fit(sub_records, sub_matrix, seeds, seed_matrix,
                                   cfg.topic_config(), stopwords=stopwords, min_df=cfg.min_df)
        labels = [model.assignments[r.doc_id] for r in sub_records]
        try:
            sil = metrics_mod.silhouette(sub_matrix, labels)
        except MetricUndefinedError:
            sil = float("nan")
        coherence = metrics_mod.coherence_npmi(
            [[w for w, _ in t.topic_words] for t in model.topics],
            [r.text for r in sub_records],
            window=cfg.coherence_window,
        ).mean
        rows.append(f"{fraction},{m},{sil:.9f},{_nan_or(coherence):.9f}")
    path = workdir / "ablation.csv"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"[ablate] wrote {len(rows) - 1} rows to {path}")
    return path


# -------------------------------------------------------------------- run

STAGES: list[tuple[str, tuple[str, ...], Callable[[PipelineConfig, Providers], None]]] = [
    ("extract", ("records.jsonl", "stats.csv"), stage_extract),
    ("preprocess", ("clean.jsonl",), stage_preprocess),
    ("model", ("model.json",), stage_model),
    ("titles", ("titles.json",), stage_titles),
    ("summarize", ("summaries.json", "topics.json"), stage_summarize),
    ("judge", ("judge_scores.csv",), stage_judge),
    ("evaluate", ("metrics.csv", "report.md"), stage_evaluate),
]


def _stage_outputs_exist(workdir: Path, outputs: tuple[str, ...]) -> bool:
    return all((workdir / name).exists() for name in outputs)


def _write_run_log(workdir: Path, executed: list[str], skipped: list[str],
                   providers: Providers) -> None:
    _dump_json(workdir / "run_log.json", {
        "executed": executed,
        "skipped": skipped,
        "embed_calls": providers.embed_calls,
        "chat_calls": providers.chat_calls,
    })


def run_pipeline(cfg: PipelineConfig, resume: bool = False) -> dict:
    """Run every stage in order; with resume=True, stages whose outputs all
    exist are skipped. Completed stage outputs are kept when a later stage fails."""
    cfg.validate()
    workdir = _workdir(cfg)
    (workdir / "config_snapshot.cfg").write_text(cfg.snapshot_text(), encoding="utf-8")
    providers = make_providers(cfg)
    executed: list[str] = []
    skipped: list[str] = []
    for name, outputs, fn in STAGES:
        if name == "judge" and not cfg.judge_models:
            skipped.append(name)
            continue
        if resume and _stage_outputs_exist(workdir, outputs):
            skipped.append(name)
            continue
        try:
            fn(cfg, providers)
        except PipelineError as exc:
            _write_run_log(workdir, executed, skipped, providers)
            raise type(exc)(f"stage '{name}' failed: {exc}") from exc
        except Exception as exc:
            _write_run_log(workdir, executed, skipped, providers)
            raise PipelineError(f"stage '{name}' failed: {exc}") from exc
        executed.append(name)
    _write_run_log(workdir, executed, skipped, providers)
    return {"executed": executed, "skipped": skipped,
            "embed_calls": providers.embed_calls, "chat_calls": providers.chat_calls}


def run_single_stage(cfg: PipelineConfig, stage: str) -> None:
    """Run one stage, building any missing upstream artifacts first."""
    cfg.validate()
    workdir = _workdir(cfg)
    (workdir / "config_snapshot.cfg").write_text(cfg.snapshot_text(), encoding="utf-8")
    providers = make_providers(cfg)
    names = [name for name, _, _ in STAGES]
    if stage not in names:
        raise ConfigError(f"unknown stage {stage!r}")
    for name, outputs, fn in STAGES:
        if name == stage:
            fn(cfg, providers)
            return
        if name == "judge" and not cfg.judge_models:
            continue
        if not _stage_outputs_exist(workdir, outputs):
            fn(cfg, providers)
