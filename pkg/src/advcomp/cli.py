"""Command-line entry point: ``advcomp {run,attack,train-defense,verify,oracle,make-suite}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .attacks import PIPELINES, ALIASES
from .data import load_dataset, save_dataset
from .errors import AdvCompError
from .models import LinearModel, save_model
from .oracle import grid_oracle, linear_oracle
from .threat import ThreatModel, parse_epsilon
from .training import TrainConfig, train_tiny_defense


def cmd_run(args):
    reports = harness.run_benchmark(args.config, workers=args.workers, out_dir=args.out)
    if reports:
        print(harness.format_table(reports), end="")
    else:
        print("no attacks configured; nothing to run")


def cmd_attack(args):
    suite = harness.load_suite(args.suite)
    data = load_dataset(args.dataset)
    tm = ThreatModel(parse_epsilon(args.epsilon))
    out = Path(args.out)
    quota = {"backward": args.backward_budget, "forward": args.forward_budget, "strict": args.strict}
    params = json.loads(args.params) if args.params else None
    report = harness.score(suite, data, args.attack, tm, quota, params=params, seed=args.seed,
                           dataset_name=str(Path(args.dataset).resolve()),
                           adv_dir=out.parent / f"{out.stem}_adv")
    harness.emit_report(report, out)
    print(f"{report.attack}: aggregate {report.aggregate_percent:.3f}")


def cmd_train(args):
    data = load_dataset(args.dataset)
    cfg = TrainConfig(epochs=args.epochs, pgd_steps=args.pgd_steps, epsilon=parse_epsilon(args.epsilon),
                      lr=args.lr, seed=args.seed, hidden=tuple(args.hidden), activation=args.activation)
    model = train_tiny_defense(args.arch, data, cfg)
    save_model(model, args.out)
    print(f"saved {args.arch} to {args.out}")


def cmd_verify(args):
    result = harness.verify_report(harness.load_suite(args.suite), args.report)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0 if result["ok"] else 1


def cmd_oracle(args):
    suite = harness.load_suite(args.suite)
    data = load_dataset(args.dataset)
    suite.check_dataset(data)
    tm = ThreatModel(parse_epsilon(args.epsilon))
    out = {"method": args.method, "epsilon": tm.epsilon, "models": {}}
    for mid, model in suite.models:
        if args.method == "linear" or (args.method == "auto" and isinstance(model, LinearModel)):
            v = linear_oracle(model, data.data, data.labels, tm)
        else:
            v = grid_oracle(model, data.data, data.labels, tm, args.resolution)
        out["models"][mid] = v.to_dict()
        print(f"{mid}: {sum(a == 'attackable' for a in v.verdicts)}/{data.n} attackable")
    Path(args.out).write_text(json.dumps(out, sort_keys=True) + "\n")


def cmd_make_suite(args):
    from . import suites
    builders = {"linear": suites.linear_suite, "mlp": suites.mlp_suite, "grid": suites.grid_suite}
    models, data = builders[args.kind](seed=args.seed)
    out = Path(args.out)
    harness.save_suite(f"{args.kind}-desk", models, out)
    save_dataset(data, out / "eval.adset")
    print(f"wrote {len(models)} models and {data.n} samples to {out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advcomp", description="Budgeted L-inf attack benchmark")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="run a whole benchmark config")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("attack", help="score one attack on one suite")
    s.add_argument("--attack", required=True, choices=sorted(PIPELINES) + sorted(ALIASES))
    s.add_argument("--suite", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--epsilon", default="8/255")
    s.add_argument("--backward-budget", type=int, default=100)
    s.add_argument("--forward-budget", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--strict", action="store_true")
    s.add_argument("--params", help="JSON object of pipeline parameters")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_attack)

    s = sub.add_parser("train-defense", help="adversarially train a tiny model")
    s.add_argument("--arch", required=True, choices=("linear", "mlp"))
    s.add_argument("--dataset", required=True)
    s.add_argument("--epsilon", default="8/255")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--pgd-steps", type=int, default=7)
    s.add_argument("--lr", type=float, default=0.1)
    s.add_argument("--hidden", type=int, nargs="+", default=[32])
    s.add_argument("--activation", default="tanh")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("verify", help="re-check a stored report's adversarial examples")
    s.add_argument("--suite", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(fn=cmd_verify)

    s = sub.add_parser("oracle", help="write ground-truth robustness verdicts")
    s.add_argument("--suite", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--epsilon", default="8/255")
    s.add_argument("--method", choices=("auto", "linear", "grid"), default="auto")
    s.add_argument("--resolution", type=int, default=64)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_oracle)

    s = sub.add_parser("make-suite", help="build a desk suite and its evaluation set")
    s.add_argument("--kind", choices=("linear", "mlp", "grid"), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_make_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args) or 0
    except (AdvCompError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
