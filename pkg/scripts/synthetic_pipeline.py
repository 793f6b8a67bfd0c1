#!/usr/bin/env python3
"""Desk-scale end-to-end experiment on synthetic data.

Builds a low-rank corpus, trains a decoder on it, and prints a grid of
mean nDCG@10 for raw retrieval, decoder prefixes, percentile-quantized
codes at several bit widths, and sign-hash codes at several projection
widths. Everything is seeded and CPU-cheap (about ten seconds).
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from embfuse.decoder import TrainConfig, train
from embfuse.evaluation import Decoder, Lsh, Quantized, Raw, evaluate_pipeline
from embfuse.lsh import LshProjector, compression_factor
from embfuse.quantizer import calibrate
from embfuse.synthetic import planted_neighbor_task


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=2000)
    parser.add_argument("--dims", type=int, default=64)
    parser.add_argument("--rank", type=int, default=8)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--noise", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    basis = rng.normal(size=(args.rank, args.dims))
    corpus = (rng.normal(size=(args.rows, args.rank)) @ basis).astype(np.float32)

    config = TrainConfig(batch_size=256, epochs=args.epochs, seed=args.seed)
    t0 = time.perf_counter()
    checkpoint = train(corpus, config, stops=(args.rank, 2 * args.rank))
    print(f"trained decoder {args.dims}->{2 * args.rank} in "
          f"{time.perf_counter() - t0:.1f}s, "
          f"best held-out loss {min(checkpoint.val_loss_history):.2e}")

    docs = (rng.normal(size=(500, args.rank)) @ basis).astype(np.float32)
    task = planted_neighbor_task(docs, 200, noise=args.noise, seed=args.seed + 1)

    rows = [("raw", evaluate_pipeline(task, Raw()).mean)]
    for stop in (args.rank, 2 * args.rank):
        transform = Decoder(checkpoint.model, stop=stop)
        rows.append((transform.label, evaluate_pipeline(task, transform).mean))

    full = Decoder(checkpoint.model, stop=2 * args.rank)
    reference = full.apply(corpus)
    for bits in (1, 2, 4, 8):
        cal = calibrate(reference, bits=bits)
        label = f"{full.label}+quantize[b={bits}]"
        rows.append((label, evaluate_pipeline(task, [full, Quantized(cal)]).mean))

    for d_proj in (32, 64, 256):
        projector = LshProjector(args.dims, d_proj, seed=args.seed + 2)
        label = (f"lsh[{d_proj}] "
                 f"({compression_factor(args.dims, 32, d_proj):.0f}x)")
        rows.append((label, evaluate_pipeline(task, Lsh(projector)).mean))

    width = max(len(label) for label, _ in rows)
    print(f"\n{'representation'.ljust(width)}  mean nDCG@10")
    for label, score in rows:
        print(f"{label.ljust(width)}  {score:.5f}")


if __name__ == "__main__":
    main()
