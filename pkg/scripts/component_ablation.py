"""Cumulative component ablation on the adversarially trained MLP desk suite.

Scores plain PGD, then ODI+PGD, +multi-target, +momentum and finally the
real-target initialisation, each under the full strict quota.

    python3 scripts/component_ablation.py --seeds 0 1 2
"""

import argparse
import time

from advcomp import ThreatModel
from advcomp.attacks import ablation_ladder
from advcomp.harness import DefenseSuite, score
from advcomp.suites import mlp_suite

STRICT = {"backward": 100, "forward": 200, "strict": True}


def ladder(seed, tm):
    models, data = mlp_suite(seed=seed)
    suite = DefenseSuite(f"mlp-desk-{seed}", models)
    rows = [("PGD", score(suite, data, "pgd", tm, STRICT).aggregate_percent)]
    for label, cfg in ablation_ladder().items():
        rows.append((label, score(suite, data, "rrt_mt_mim", tm, STRICT, params=cfg).aggregate_percent))
    return rows


def main():
    ap = argparse.ArgumentParser(description="component ablation ladder")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--epsilon", type=float, default=8 / 255)
    args = ap.parse_args()
    tm = ThreatModel(args.epsilon)
    for seed in args.seeds:
        t0 = time.perf_counter()
        rows = ladder(seed, tm)
        print(f"seed {seed} ({time.perf_counter() - t0:.1f}s)")
        prev = None
        for label, pct in rows:
            delta = "" if prev is None else f"  ({pct - prev:+.3f})"
            print(f"  {label:<16} {pct:7.3f}{delta}")
            prev = pct


if __name__ == "__main__":
    main()
