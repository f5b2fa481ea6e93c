#!/usr/bin/env python3
"""Corpus-size ablation: model quality on nested subsets of the fixture corpus.

Writes (fraction, n_records, silhouette, coherence) rows to
<workdir>/ablation.csv and prints them.
"""
from __future__ import annotations

import argparse
from pathlib import Path

from limtopic.config import PipelineConfig
from limtopic.pipeline import run_ablation

REPO = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="ablation_out")
    ap.add_argument("--fractions", default="0.5,0.8,1.0",
                    help="comma list of ascending fractions in (0, 1]")
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
        random_seed=args.seed,
    )
    path = run_ablation(cfg, [float(f) for f in args.fractions.split(",")])
    print()
    print(path.read_text().strip())


if __name__ == "__main__":
    main()
