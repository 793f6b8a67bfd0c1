#!/usr/bin/env python3
"""Robustness of wider concatenations under extreme compression.

Two synthetic families share one latent code: a four-source concatenation
(128 dims) and a two-source one (64 dims), each source observing its own
latent slice plus independent query noise. Both are crushed to the same
sign-hash budget and scored; the wider family should keep more of its
retrieval quality as the bit budget shrinks.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from embfuse.evaluation import Lsh, Raw, evaluate_pipeline
from embfuse.lsh import LshProjector
from embfuse.synthetic import complementary_source_family, family_task


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=300)
    parser.add_argument("--queries", type=int, default=100)
    parser.add_argument("--noise", type=float, default=1.0)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--budgets", type=int, nargs="+", default=[256, 128, 64, 32])
    args = parser.parse_args()

    print(f"{'bits':>6} {'seed':>5} {'4-source':>9} {'2-source':>9}")
    for budget in args.budgets:
        wins = 0
        for seed in range(args.seeds):
            doc_parts, query_parts, qrels, doc_ids, query_ids = \
                complementary_source_family(args.docs, args.queries, 4,
                                            source_dim=32, noise=args.noise,
                                            seed=100 + seed)
            wide = family_task(doc_parts, query_parts, qrels, doc_ids, query_ids, 4)
            narrow = family_task(doc_parts, query_parts, qrels, doc_ids, query_ids, 2)
            if budget == 0:
                wide_score = evaluate_pipeline(wide, Raw()).mean
                narrow_score = evaluate_pipeline(narrow, Raw()).mean
            else:
                wide_score = evaluate_pipeline(
                    wide, Lsh(LshProjector(128, budget, seed=500 + seed))).mean
                narrow_score = evaluate_pipeline(
                    narrow, Lsh(LshProjector(64, budget, seed=500 + seed))).mean
            wins += wide_score > narrow_score
            print(f"{budget:>6} {seed:>5} {wide_score:>9.4f} {narrow_score:>9.4f}")
        print(f"{budget:>6} wider representation wins {wins}/{args.seeds}\n")


if __name__ == "__main__":
    main()
