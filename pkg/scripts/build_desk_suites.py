"""Build the desk suites on disk plus a benchmark config that covers all of them.

    python3 scripts/build_desk_suites.py --out desk
    advcomp run --config desk/benchmark.json
"""

import argparse
import json
from pathlib import Path

from advcomp import save_dataset
from advcomp.attacks import COMPETITION
from advcomp.harness import save_suite
from advcomp import suites

BUILDERS = {"linear": suites.linear_suite, "mlp": suites.mlp_suite, "grid": suites.grid_suite}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kinds", nargs="+", default=sorted(BUILDERS), choices=sorted(BUILDERS))
    args = ap.parse_args()
    out = Path(args.out)
    groups = []
    for kind in args.kinds:
        models, data = BUILDERS[kind](seed=args.seed)
        save_suite(f"{kind}-desk", models, out / kind)
        save_dataset(data, out / kind / "eval.adset")
        groups.append({"name": kind, "suite": f"{kind}/suite.json", "dataset": f"{kind}/eval.adset"})
        print(f"{kind}: {len(models)} models, {data.n} samples, dim {data.dim}, {data.num_classes} classes")
    attacks = [{"name": "pgd", "pipeline": "pgd"}] + [{"name": n, "pipeline": n} for n in COMPETITION]
    quota = {"backward": 100, "forward": 200, "strict": True}
    # staged LAFEAT needs at least four classes, so the 3-class grid suite gets its own config
    grid = [g for g in groups if g["name"] == "grid"]
    if grid:
        cfg = {"seed": args.seed, "quota": quota, "out_dir": "results-grid", "run_groups": grid,
               "attacks": [a for a in attacks if a["pipeline"] != "lafeat_staged"]}
        (out / "benchmark_grid.json").write_text(json.dumps(cfg, indent=2) + "\n")
        print(f"wrote {out / 'benchmark_grid.json'}")
    cfg = {"epsilon": "8/255", "seed": args.seed, "workers": 4, "persist_adversarial": True, "quota": quota,
           "run_groups": [g for g in groups if g["name"] != "grid"], "attacks": attacks}
    (out / "benchmark.json").write_text(json.dumps(cfg, indent=2) + "\n")
    print(f"wrote {out / 'benchmark.json'}")


if __name__ == "__main__":
    main()
