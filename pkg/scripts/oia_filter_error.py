"""Measure how often the outside-inside filter discards attackable samples.

Compares OIA's filter decisions with exhaustive grid verification on the
2-d grid suite and prints false-negative and false-positive rates.

    python3 scripts/oia_filter_error.py --resolution 64
"""

import argparse

from advcomp import BudgetLedger, ThreatModel
from advcomp.attacks import OIAConfig, run_attack
from advcomp.engine import derive_seed
from advcomp.oracle import grid_oracle, measure_filter_error
from advcomp.suites import grid_suite


def main():
    ap = argparse.ArgumentParser(description="OIA filter error against grid verification")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--outer-factor", type=float, default=2.0)
    ap.add_argument("--epsilon", type=float, default=8 / 255)
    args = ap.parse_args()
    tm = ThreatModel(args.epsilon)
    models, data = grid_suite(seed=args.seed)
    cfg = OIAConfig(outer_factor=args.outer_factor)
    fn = att = fp = rob = 0
    for mid, model in models:
        verdict = grid_oracle(model, data.data, data.labels, tm, args.resolution)
        out = run_attack("oia", model, data, tm, cfg, ledger=BudgetLedger(data.n, strict=True),
                         seed=derive_seed(args.seed, mid))
        err = measure_filter_error(out.status, verdict)
        fn, att = fn + err["false_negatives"], att + err["attackable"]
        fp, rob = fp + err["false_positives"], rob + err["robust"]
        print(f"{mid}: attackable {err['attackable']}, filtered-but-attackable {err['false_negatives']} "
              f"(FNR {float(err['false_negative_rate']):.4f}), kept-but-robust {err['false_positives']} "
              f"(FPR {float(err['false_positive_rate']):.4f}), success {int(out.success.sum())}/{data.n}")
    print(f"pooled FNR {fn}/{att} = {fn / max(att, 1):.4f}; pooled FPR {fp}/{rob} = {fp / max(rob, 1):.4f}")


if __name__ == "__main__":
    main()
