"""Suite loading, suite-level scoring, benchmark orchestration and reports.

A benchmark config is a JSON file::

    {
      "epsilon": "8/255",
      "quota": {"backward": 100, "forward": 200, "strict": true},
      "seed": 0,
      "workers": 1,
      "out_dir": "results",
      "persist_adversarial": false,
      "run_groups": [{"name": "stage1", "suite": "suite.json", "dataset": "eval.adset"}],
      "attacks": [{"name": "pgd", "pipeline": "pgd", "params": {"steps": 100}}]
    }

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .attacks import declared_budget, get_pipeline, run_attack
from .attacks.common import config_to_dict
from .budget import BudgetLedger
from .data import ImageBatch, load_dataset, save_dataset
from .engine import derive_seed
from .errors import BudgetExceeded, ConfigurationError, LoadError, QuotaViolation
from .models import load_model, save_model
from .threat import ThreatModel, is_feasible, parse_epsilon, project

SUITE_FORMAT = "advcomp-suite/1"
FORMATS = ("structured-json", "plain-table")


@dataclass
class DefenseSuite:
    name: str
    models: list  # [(model_id, model)]
    bundles: list = field(default_factory=list)

    def __post_init__(self):
        ids = [m for m, _ in self.models]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"suite {self.name!r} has duplicate model ids")
        shapes = {(m.input_dim, m.num_classes) for _, m in self.models}
        if len(shapes) > 1:
            raise ConfigurationError(f"suite {self.name!r} mixes input dims or class counts: {sorted(shapes)}")

    def check_dataset(self, batch: ImageBatch) -> None:
        for mid, m in self.models:
            if (m.input_dim, m.num_classes) != (batch.dim, batch.num_classes):
                raise ConfigurationError(
                    f"model {mid} expects dim={m.input_dim}, classes={m.num_classes}; "
                    f"dataset has dim={batch.dim}, classes={batch.num_classes}")


def save_suite(name, models, directory) -> Path:
    """Write every model bundle plus a manifest listing them in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for mid, model in models:
        save_model(model, directory / mid)
        entries.append({"id": mid, "bundle": mid})
    path = directory / "suite.json"
    path.write_text(json.dumps({"format": SUITE_FORMAT, "name": name, "models": entries},
                               indent=2, sort_keys=True) + "\n")
    return path


def load_suite(path) -> DefenseSuite:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"{path}: unreadable suite manifest ({exc})") from exc
    if manifest.get("format") != SUITE_FORMAT:
        raise LoadError(f"{path}: not a suite manifest")
    models, bundles = [], []
    for entry in manifest.get("models", []):
        bundle = path.parent / entry["bundle"]
        models.append((entry["id"], load_model(bundle)))
        bundles.append(str(bundle))
    return DefenseSuite(manifest.get("name", path.stem), models, bundles)


@dataclass
class ScoreReport:
    attack: str
    pipeline: str
    params: dict
    run_group: str
    suite: str
    dataset: str
    epsilon: float
    quota: dict
    seed: int
    model_ids: list
    rates: list
    aggregate: float
    aggregate_percent: float
    usage: list
    adversarial: list
    wall_clock_seconds: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "ScoreReport":
        names = {f.name for f in fields(cls)}
        if set(d) != names:
            raise LoadError(f"report fields differ: missing {sorted(names - set(d))}, extra {sorted(set(d) - names)}")
        return cls(**d)


def _round_into_box(v, lo, hi) -> np.ndarray:
    """Round to float32 without leaving [lo, hi] (which holds float32 endpoints' neighbours)."""
    r = v.astype(np.float32)
    over = r.astype(np.float64) > hi
    r[over] = np.nextafter(r[over], np.float32(-np.inf))
    under = r.astype(np.float64) < lo
    r[under] = np.nextafter(r[under], np.float32(np.inf))
    return r


def finalize_candidates(candidates, x, tm: ThreatModel) -> np.ndarray:
    """Project onto the feasible set and store on the float32 grid of the dataset format."""
    lo, hi = tm.bounds(x)
    return _round_into_box(project(candidates, x, tm), lo, hi)


def score(suite: DefenseSuite, dataset: ImageBatch, attack: str, tm: ThreatModel, quota=None, *,
          params=None, seed=0, label=None, run_group="", dataset_name="", adv_dir=None) -> ScoreReport:
    """Mean over models of the misclassification rate under ``attack``.

    Each model gets a fresh ledger and rng streams derived from (seed, model id).
    Candidates are projected, rounded to float32 and re-scored with a fresh,
    unmetered forward pass.
    """
    if not suite.models:
        raise ConfigurationError("suite is empty")
    if dataset.n == 0:
        raise ConfigurationError("dataset is empty")
    suite.check_dataset(dataset)
    quota = {"backward": 100, "forward": 200, "strict": False, **(quota or {})}
    pipe = get_pipeline(attack)
    cfg = params if isinstance(params, pipe.config) else pipe.config.from_dict(params)
    t0 = time.perf_counter()
    rates, usage, adversarial = [], [], []
    for mid, model in suite.models:
        ledger = BudgetLedger(dataset.n, quota["backward"], quota["forward"], strict=quota["strict"])
        try:
            out = run_attack(pipe.name, model, dataset, tm, cfg, ledger=ledger, seed=derive_seed(seed, mid))
        except BudgetExceeded as exc:
            raise QuotaViolation(f"{pipe.name} on {mid}: quota exceeded in phase {ledger.phase!r}: {exc}") from exc
        if quota["strict"] and not ledger.within_quota():
            raise QuotaViolation(f"{pipe.name} on {mid}: quota exceeded in phase {ledger.phase!r}")
        adv = finalize_candidates(out.candidates, dataset.data, tm)
        wrong = np.argmax(model.forward(adv.astype(np.float64)), axis=1) != dataset.labels
        rates.append(float(wrong.mean()))
        usage.append({k: v for k, v in out.usage.items() if not k.startswith("per_image")})
        if adv_dir is not None:
            adversarial.append(_persist(Path(adv_dir), mid, adv, dataset, wrong, out.success))
    aggregate = float(np.mean(rates))
    return ScoreReport(
        attack=label or attack, pipeline=pipe.name, params=config_to_dict(cfg), run_group=run_group,
        suite=suite.name, dataset=dataset_name, epsilon=float(tm.epsilon), quota=quota, seed=int(seed),
        model_ids=[m for m, _ in suite.models], rates=rates, aggregate=aggregate,
        aggregate_percent=100.0 * aggregate, usage=usage, adversarial=adversarial,
        wall_clock_seconds=time.perf_counter() - t0,
    )


def _persist(adv_dir: Path, mid, adv, dataset, wrong, claimed) -> str:
    adv_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(ImageBatch(adv, dataset.labels, dataset.num_classes), adv_dir / f"{mid}.adset")
    sidecar = {"model": mid, "misclassified": wrong.astype(int).tolist(),
               "attack_success": np.asarray(claimed).astype(int).tolist()}
    (adv_dir / f"{mid}.flags.json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    return f"{adv_dir.name}/{mid}.adset"


def verify_report(suite: DefenseSuite, report_path, *, tol=1e-6) -> dict:
    """Re-check feasibility and stored flags of a report's persisted adversarial examples."""
    report_path = Path(report_path)
    report = ScoreReport.from_dict(json.loads(report_path.read_text()))
    if not report.adversarial:
        raise ConfigurationError(f"{report_path}: report has no persisted adversarial examples")
    original = load_dataset(report.dataset)
    tm = ThreatModel(report.epsilon)
    models = dict(suite.models)
    result = {"models": {}, "ok": True}
    for mid, rel, rate in zip(report.model_ids, report.adversarial, report.rates):
        if mid not in models:
            raise ConfigurationError(f"model {mid} from the report is not in the suite")
        adv_path = report_path.parent / rel
        adv = load_dataset(adv_path)
        flags = json.loads(adv_path.with_name(f"{mid}.flags.json").read_text())
        feasible = is_feasible(adv.data, original.data, tm, tol)
        wrong = np.argmax(models[mid].forward(adv.data), axis=1) != original.labels
        entry = {
            "feasible": bool(feasible.all()),
            "flags_match": wrong.astype(int).tolist() == flags["misclassified"],
            "rate_match": float(wrong.mean()) == rate,
        }
        result["models"][mid] = entry
        result["ok"] &= all(entry.values())
    return result


# -- benchmark -----------------------------------------------------------------

def load_config(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: unreadable config ({exc})") from exc
    base = path.parent
    unknown = set(cfg) - {"epsilon", "quota", "seed", "workers", "out_dir", "persist_adversarial",
                          "run_groups", "attacks"}
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    cfg.setdefault("epsilon", "8/255")
    cfg["quota"] = {"backward": 100, "forward": 200, "strict": True, **cfg.get("quota", {})}
    cfg.setdefault("seed", 0)
    cfg.setdefault("workers", 1)
    cfg.setdefault("persist_adversarial", False)
    cfg["out_dir"] = str(base / cfg.get("out_dir", "results"))
    cfg.setdefault("attacks", [])
    groups = []
    for g in cfg.get("run_groups", []):
        groups.append({"name": g["name"], "suite": str(base / g["suite"]), "dataset": str(base / g["dataset"])})
    cfg["run_groups"] = groups
    return cfg


def preflight(cfg) -> dict:
    """Load everything a run needs before any attack starts."""
    missing = [p for g in cfg["run_groups"] for p in (g["suite"], g["dataset"]) if not Path(p).exists()]
    if missing:
        raise LoadError(f"missing files: {missing}")
    for a in cfg["attacks"]:
        pipe = get_pipeline(a["pipeline"])
        pipe.config.from_dict(a.get("params"))
        if cfg["quota"]["strict"]:
            need = declared_budget(pipe.name, cfg["quota"]["backward"])
            if need["avg_forward"] > cfg["quota"]["forward"]:
                raise ConfigurationError(
                    f"{a['name']}: declared forward budget {need['avg_forward']} exceeds quota {cfg['quota']['forward']}")
    names = [a["name"] for a in cfg["attacks"]]
    if len(set(names)) != len(names):
        raise ConfigurationError("attack names must be unique")
    loaded = {}
    for g in cfg["run_groups"]:
        suite, data = load_suite(g["suite"]), load_dataset(g["dataset"])
        if not suite.models:
            raise ConfigurationError(f"run group {g['name']}: suite is empty")
        suite.check_dataset(data)
        loaded[g["name"]] = (suite, data)
    return loaded


def run_benchmark(config_path, *, workers=None, out_dir=None) -> list:
    cfg = load_config(config_path)
    if out_dir is not None:
        cfg["out_dir"] = str(out_dir)
    loaded = preflight(cfg)
    tm = ThreatModel(parse_epsilon(cfg["epsilon"]))
    out = Path(cfg["out_dir"])
    cells = [(g, a) for g in cfg["run_groups"] for a in cfg["attacks"]]

    def run_cell(cell):
        g, a = cell
        suite, data = loaded[g["name"]]
        adv_dir = out / g["name"] / f"{a['name']}_adv" if cfg["persist_adversarial"] else None
        return score(suite, data, a["pipeline"], tm, cfg["quota"], params=a.get("params"), seed=cfg["seed"],
                     label=a["name"], run_group=g["name"], dataset_name=str(Path(g["dataset"]).resolve()),
                     adv_dir=adv_dir)

    n_workers = workers if workers is not None else cfg["workers"]
    with ThreadPoolExecutor(max_workers=max(1, int(n_workers))) as pool:
        reports = list(pool.map(run_cell, cells))
    out.mkdir(parents=True, exist_ok=True)
    for r in reports:
        emit_report(r, out / r.run_group / f"{r.attack}.json")
    if reports:
        emit_report(reports, out / "leaderboard.txt", "plain-table")
    return reports


# -- emission ------------------------------------------------------------------

def leaderboard(reports) -> list:
    """Rows ``(attack, {group: percent}, mean percent)`` sorted by mean, best first."""
    groups = list(dict.fromkeys(r.run_group for r in reports))
    table = {}
    for r in reports:
        table.setdefault(r.attack, {})[r.run_group] = r.aggregate_percent
    rows = [(a, cols, float(np.mean(list(cols.values())))) for a, cols in table.items()]
    rows.sort(key=lambda row: (-row[2], row[0]))
    return groups, rows


def format_table(reports) -> str:
    groups, rows = leaderboard(reports)
    header = ["attack"] + groups + (["mean"] if len(groups) > 1 else [])
    body = []
    for attack, cols, mean in rows:
        cells = [f"{cols[g]:.3f}" if g in cols else "-" for g in groups]
        body.append([attack] + cells + ([f"{mean:.3f}"] if len(groups) > 1 else []))
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in [header] + body]
    return "\n".join(lines) + "\n"


def report_json(report: ScoreReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_report(text: str) -> ScoreReport:
    return ScoreReport.from_dict(json.loads(text))


def emit_report(report, path, fmt="structured-json") -> Path:
    """Write one report (or a list, for the plain table) to ``path``."""
    if fmt not in FORMATS:
        raise ConfigurationError(f"format must be one of {FORMATS}")
    reports = report if isinstance(report, (list, tuple)) else [report]
    for r in reports:
        if not r.model_ids:
            raise ConfigurationError(f"report for {r.attack!r} covers an empty suite")
    if fmt == "structured-json":
        if len(reports) != 1:
            raise ConfigurationError("structured-json takes exactly one report")
        text = report_json(reports[0])
    else:
        text = format_table(reports)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
