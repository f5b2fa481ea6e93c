from __future__ import annotations

import json
from pathlib import Path

import pytest

from conftest import CORPUS_PATH, FIXTURES, SEEDS_PATH, make_pipeline_config

from limtopic.cli import main
from limtopic.config import PipelineConfig, load_config, parse_config_text
from limtopic.errors import ConfigError


def write_config(tmp_path: Path, **overrides) -> tuple[Path, PipelineConfig]:
    cfg = make_pipeline_config(tmp_path, **overrides)
    lines = [
        f"corpus_path = {cfg.corpus_path}",
        f"workdir = {cfg.workdir}",
        f"cache_dir = {cfg.cache_dir}",
        f"stub = {str(cfg.stub).lower()}",
        f"chat_model = {cfg.chat_model}",
        f"seed_words_path = {cfg.seed_words_path}",
        f"min_topic_size = {cfg.min_topic_size}",
        f"zero_shot_min_similarity = {cfg.zero_shot_min_similarity}",
        f"n_top_words = {cfg.n_top_words}",
        f"n_representative_docs = {cfg.n_representative_docs}",
        f"judge_models = {','.join(cfg.judge_models)}",
        f"max_parallel = {cfg.max_parallel}",
    ]
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(lines) + "\n")
    return path, cfg


# ------------------------------------------------------------- config file


def test_parse_config_text_flat_keys():
    parsed = parse_config_text("# comment\nworkdir = out\nstub = true\n")
    assert parsed == {"workdir": "out", "stub": "true"}


def test_config_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("no_such_key = 1\n")
    with pytest.raises(ConfigError, match="no_such_key"):
        load_config(path)


def test_config_round_trips_types(tmp_path):
    path, _ = write_config(tmp_path)
    cfg = load_config(path)
    assert cfg.stub is True
    assert cfg.min_topic_size == 2
    assert cfg.zero_shot_min_similarity == pytest.approx(0.3)
    assert cfg.judge_models == ("judge-a", "judge-b")


def test_config_target_topic_count_auto(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("target_topic_count = auto\n")
    assert load_config(path).target_topic_count is None
    path.write_text("target_topic_count = 12\n")
    assert load_config(path).target_topic_count == 12


def test_bad_config_line_is_config_error(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("just words without equals\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_config_file_exits_2(capsys):
    assert main(["run", "--config", "/nonexistent/place.cfg"]) == 2
    assert "cannot read config file" in capsys.readouterr().err


# ---------------------------------------------------------------- extract


def test_cmd_extract_reproduces_fixture_stats(tmp_path, capsys):
    path, cfg = write_config(tmp_path)
    assert main(["extract", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "9 records (5 explicit, 4 implicit, 3 without)" in out
    stats = (Path(cfg.workdir) / "stats.csv").read_text()
    assert "findings,1,1" in stats and "long,2,2" in stats and "short,2,1" in stats
    records = [
        json.loads(line)
        for line in (Path(cfg.workdir) / "records.jsonl").read_text().splitlines()
    ]
    labels = json.loads((FIXTURES / "corpus_labels.json").read_text())
    assert {r["doc_id"]: r["mode"] for r in records} == {
        k: v for k, v in labels.items() if v != "none"
    }


def test_cmd_extract_empty_corpus_exits_2(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    path, _ = write_config(tmp_path, corpus_path=str(empty))
    assert main(["extract", "--config", str(path)]) == 2
    assert "no documents" in capsys.readouterr().err


def test_cmd_extract_rerun_is_byte_identical(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["extract", "--config", str(path)]) == 0
    work = Path(cfg.workdir)
    first = {(p.name): p.read_bytes() for p in (work / "records.jsonl", work / "stats.csv")}
    assert main(["extract", "--config", str(path)]) == 0
    second = {(p.name): p.read_bytes() for p in (work / "records.jsonl", work / "stats.csv")}
    assert first == second


def test_malformed_corpus_line_exits_4(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x", "sections": "oops"}\n')
    path, _ = write_config(tmp_path, corpus_path=str(bad))
    assert main(["extract", "--config", str(path)]) == 4
    assert "sections" in capsys.readouterr().err


# --------------------------------------------------------------------- run


def test_cmd_run_matches_committed_golden_topics(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    produced = (Path(cfg.workdir) / "topics.json").read_bytes()
    golden = (FIXTURES / "golden_topics.json").read_bytes()
    assert produced == golden


def test_cmd_run_missing_api_key_fails_before_any_work(tmp_path, monkeypatch):
    monkeypatch.delenv("LIMTOPIC_API_KEY", raising=False)
    path, cfg = write_config(tmp_path, stub=False)
    assert main(["run", "--config", str(path)]) == 2
    assert not (Path(cfg.workdir) / "records.jsonl").exists()


def test_cmd_run_second_invocation_identical_and_zero_calls(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    work = Path(cfg.workdir)
    artifacts = ("topics.json", "metrics.csv", "report.md")
    first = {a: (work / a).read_bytes() for a in artifacts}
    assert main(["run", "--config", str(path)]) == 0
    second = {a: (work / a).read_bytes() for a in artifacts}
    assert first == second
    log = json.loads((work / "run_log.json").read_text())
    assert log["embed_calls"] == 0
    assert log["chat_calls"] == 0


def test_resume_after_titles_reruns_only_downstream_stages(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    work = Path(cfg.workdir)
    for name in ("summaries.json", "topics.json", "judge_scores.csv", "metrics.csv", "report.md"):
        (work / name).unlink()
    assert main(["run", "--config", str(path), "--resume"]) == 0
    log = json.loads((work / "run_log.json").read_text())
    assert log["executed"] == ["summarize", "judge", "evaluate"]
    assert log["skipped"] == ["extract", "preprocess", "model", "titles"]


def test_stage_isolation_reproduces_deleted_artifact(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    work = Path(cfg.workdir)
    original = (work / "topics.json").read_bytes()
    (work / "topics.json").unlink()
    (work / "summaries.json").unlink()
    assert main(["run", "--config", str(path), "--resume"]) == 0
    assert (work / "topics.json").read_bytes() == original


def test_report_subcommand_regenerates_identical_report(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    work = Path(cfg.workdir)
    original = (work / "report.md").read_bytes()
    (work / "report.md").unlink()
    assert main(["report", "--config", str(path)]) == 0
    assert (work / "report.md").read_bytes() == original


def test_report_embeds_config_fingerprint(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    report = (Path(cfg.workdir) / "report.md").read_text()
    assert cfg.fingerprint() in report


def test_config_snapshot_written_to_workdir(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    snapshot = (Path(cfg.workdir) / "config_snapshot.cfg").read_text()
    assert f"corpus_path = {cfg.corpus_path}" in snapshot
    assert "random_seed = 0" in snapshot


def test_run_single_stage_builds_missing_upstream(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["model", "--config", str(path)]) == 0
    work = Path(cfg.workdir)
    assert (work / "records.jsonl").exists()
    assert (work / "clean.jsonl").exists()
    assert (work / "model.json").exists()


# ------------------------------------------------------------------ ablate


def test_ablate_writes_nested_rows(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["ablate", "--config", str(path), "--subset-fractions", "0.5,0.8,1.0"]) == 0
    rows = (Path(cfg.workdir) / "ablation.csv").read_text().splitlines()
    assert rows[0] == "fraction,n_records,silhouette,coherence"
    counts = [int(r.split(",")[1]) for r in rows[1:]]
    assert counts == sorted(counts)
    assert counts[-1] == 9
    assert len(rows) == 4


def test_ablate_fraction_zero_exits_2(tmp_path, capsys):
    path, _ = write_config(tmp_path)
    assert main(["ablate", "--config", str(path), "--subset-fractions", "0,0.5"]) == 2


def test_ablate_subset_smaller_than_seeds_skipped(tmp_path):
    path, cfg = write_config(tmp_path)
    # 0.2 of 9 records -> 1 record < 3 seeds -> skipped with warning
    assert main(["ablate", "--config", str(path), "--subset-fractions", "0.2,1.0"]) == 0
    rows = (Path(cfg.workdir) / "ablation.csv").read_text().splitlines()
    assert len(rows) == 2  # header + the 1.0 row


def test_ablate_unsorted_fractions_exit_2(tmp_path):
    path, _ = write_config(tmp_path)
    assert main(["ablate", "--config", str(path), "--subset-fractions", "0.9,0.5"]) == 2


# -------------------------------------------------------------- exit codes


def test_transport_error_maps_to_exit_3(tmp_path, monkeypatch):
    from limtopic.errors import TransportError

    def boom(cfg, resume=False):
        raise TransportError("endpoint unreachable")

    monkeypatch.setattr("limtopic.cli.run_pipeline", boom)
    path, _ = write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 3


def test_stage_failure_names_the_stage(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json}\n")
    path, _ = write_config(tmp_path, corpus_path=str(bad))
    assert main(["run", "--config", str(path)]) == 4
    assert "stage 'extract' failed" in capsys.readouterr().err


def test_overrides_without_config_file(tmp_path, capsys):
    workdir = tmp_path / "w"
    code = main(["extract", "--corpus", str(CORPUS_PATH), "--workdir", str(workdir), "--stub"])
    assert code == 0
    assert (workdir / "records.jsonl").exists()


def test_human_reference_switch_changes_summary_metrics(tmp_path):
    path, cfg = write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    work = Path(cfg.workdir)

    def metric(name, topic="0"):
        for line in (work / "metrics.csv").read_text().splitlines()[1:]:
            tid, m, v = line.split(",")
            if tid == topic and m == name:
                return float(v)
        raise AssertionError(f"{name} missing")

    assert metric("rouge1_f1") == pytest.approx(1.0)  # stub summary echoes the reference

    refs = tmp_path / "refs.json"
    refs.write_text(json.dumps({"0": "entirely different human written reference text"}))
    extra = path.read_text() + f"reference_texts_path = {refs}\n"
    path.write_text(extra)
    assert main(["evaluate", "--config", str(path)]) == 0
    assert metric("rouge1_f1") < 1.0
