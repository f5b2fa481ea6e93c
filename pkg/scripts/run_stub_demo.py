#!/usr/bin/env python3
"""Offline demo: run the full pipeline on the bundled fixture corpus.

Uses the deterministic stub providers, so it needs no API key and finishes in
well under a second. Artifacts land in --workdir (default demo_out/).
"""
from __future__ import annotations

import argparse
from pathlib import Path

from limtopic.config import PipelineConfig
from limtopic.pipeline import run_pipeline

REPO = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="demo_out")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = PipelineConfig(
        corpus_path=str(REPO / "tests" / "fixtures" / "corpus_fixture.jsonl"),
        workdir=args.workdir,
        stub=True,
        chat_model="stub-writer",
        seed_words_path=str(REPO / "tests" / "fixtures" / "seed_phrases.txt"),
        min_topic_size=2,
        zero_shot_min_similarity=0.3,
        n_top_words=6,
        n_representative_docs=3,
        judge_models=("judge-a", "judge-b"),
        random_seed=args.seed,
    )
    log = run_pipeline(cfg)
    print(f"\nexecuted stages: {', '.join(log['executed'])}")
    print(f"provider calls: embed={log['embed_calls']} chat={log['chat_calls']}")
    print(f"artifacts: {Path(args.workdir).resolve()}")
    print("re-run this script to watch the warm cache drop provider calls to zero")


if __name__ == "__main__":
    main()
