#!/usr/bin/env python3
"""Merge benchmark: does the learned blend beat the external score alone?

The external score is informative for only half the candidates; the
aggregated sentence-score sum is informative throughout.  Reports P@50 on
held-out pairs for both rankings.
"""

import argparse

from relembed.experiments import merge_improvement_trial


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--pairs", type=int, default=160)
    parser.add_argument("--relations", type=int, default=4)
    parser.add_argument("--corrupted", type=float, default=0.5)
    args = parser.parse_args()

    wins = 0
    print(f"{'seed':>4}  {'base P@50':>10}  {'merged P@50':>12}  {'w1':>6}  {'w2':>6}  {'cap':>6}")
    for seed in range(args.seeds):
        t = merge_improvement_trial(
            seed,
            num_pairs=args.pairs,
            num_relations=args.relations,
            corrupted_fraction=args.corrupted,
        )
        wins += t.merged_p50 > t.base_p50
        mm = t.merge_model
        print(
            f"{seed:>4}  {t.base_p50:>10.3f}  {t.merged_p50:>12.3f}"
            f"  {mm.w1:>6.2f}  {mm.w2:>6.2f}  {mm.cap:>6.2f}"
        )
    print(f"\nmerged ranking wins in {wins}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
