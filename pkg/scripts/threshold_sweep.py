#!/usr/bin/env python3
"""Sweep the retention threshold and watch the tree shrink.

Counts once at a fixed depth, then rebuilds the tree for each threshold
value and prints node count plus AUC on the training corpus. Node count
must be non-increasing along the sweep; AUC usually holds up long after
most of the tree is gone, which is the whole argument for pruning.
"""

from __future__ import annotations

import argparse

from flowlang.evaluate import evaluate
from flowlang.pst import PstParams, build_tree, count_contexts, score_sequence
from flowlang.synth import GenConfig, corpus_to_sequences, demo_spec_pair, generate_corpus


def float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--length-min", type=int, default=20)
    parser.add_argument("--length-max", type=int, default=50)
    parser.add_argument("--anomaly-fraction", type=float, default=0.05)
    parser.add_argument("--alphabet", type=int, default=8)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--depth", type=int, default=8)
    parser.add_argument("--epsilon", type=float, default=1e-4)
    parser.add_argument(
        "--thresholds", type=float_list,
        default=[0.0, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2])
    args = parser.parse_args()

    background, anomaly = demo_spec_pair(args.alphabet)
    cfg = GenConfig(
        n_sequences=args.n, length_min=args.length_min,
        length_max=args.length_max, anomaly_fraction=args.anomaly_fraction,
        seed=args.seed)
    corpus = generate_corpus(background, anomaly, cfg)
    sequences, vocab = corpus_to_sequences(corpus, args.alphabet)
    counts = count_contexts((s.token_ids for s in sequences), args.depth)
    print(f"corpus: {len(sequences)} sequences, depth {args.depth}, "
          f"seed {args.seed}")
    print(f"{'threshold':>10} {'nodes':>7} {'auc':>8}")

    previous_nodes = None
    for threshold in args.thresholds:
        params = PstParams(depth=args.depth, threshold=threshold,
                           epsilon=args.epsilon)
        tree = build_tree(counts, params, vocab)
        triples = []
        for i, s in enumerate(sequences):
            texts = [vocab.token_of(t) for t in s.token_ids]
            triples.append((f"{i:08d}", score_sequence(tree, texts), s.label))
        report = evaluate(triples)
        marker = ""
        if previous_nodes is not None and tree.node_count > previous_nodes:
            marker = "  <- grew, should never happen"
        print(f"{threshold:>10g} {tree.node_count:>7} {report.auc:>8.4f}{marker}")
        previous_nodes = tree.node_count
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
