"""Grid sweeps over seeds, bootstrap summaries, pair selection and CSV tables."""
from __future__ import annotations

import concurrent.futures
import csv
import json
import logging
import os
import traceback
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .models import ModelSpec, save_checkpoint
from .qasm import CircuitLog, log_points
from .rl import DqnConfig, dqn_train
from .training import SlConfig, load_dataset, train_sl

log = logging.getLogger(__name__)

TASKS = {
    "iris": {"kind": "sl", "n_inputs": 4, "n_outputs": 3},
    "wine": {"kind": "sl", "n_inputs": 13, "n_outputs": 3},
    "wdbc": {"kind": "sl", "n_inputs": 30, "n_outputs": 2},
    "frozenlake": {"kind": "rl", "n_inputs": 4, "n_outputs": 4},
}
WORKERS_ENV = "VQCBENCH_WORKERS"
DEFAULTS_PATH = Path(__file__).with_name("data") / "defaults.json"


def task_info(task: str) -> dict:
    task = task.lower()
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {sorted(TASKS)}")
    return TASKS[task]


@dataclass
class GridSpec:
    task: str
    nn_hidden_layers: tuple = (1, 2, 3)
    nn_nodes: tuple = (3, 6, 9, 12)
    vqc_encodings: tuple = ("amp", "ang")
    vqc_layers: tuple = (1, 2, 3, 4, 5, 6)

    @classmethod
    def default(cls, task: str) -> "GridSpec":
        task_info(task)
        if task.lower() == "wdbc":
            return cls("wdbc", (1, 2), (3, 6, 9), ("amp",), (1, 2, 3, 4, 5, 6))
        return cls(task.lower())

    def configs(self, family: str | None = None) -> list[ModelSpec]:
        info = task_info(self.task)
        out = []
        if family in (None, "nn"):
            for h in self.nn_hidden_layers:
                for n in self.nn_nodes:
                    out.append(ModelSpec("nn", info["n_inputs"], info["n_outputs"], hidden_layers=h, nodes=n))
        if family in (None, "vqc"):
            for e in self.vqc_encodings:
                for lay in self.vqc_layers:
                    out.append(ModelSpec("vqc", info["n_inputs"], info["n_outputs"], embedding=e, layers=lay))
        return out


def load_defaults(path=None) -> dict:
    """Training defaults and grids; a user file overrides keys of the bundled one."""
    data = json.loads(DEFAULTS_PATH.read_text())
    if path is not None:
        user = json.loads(Path(path).read_text())
        for section, values in user.items():
            if isinstance(values, dict) and isinstance(data.get(section), dict):
                data[section].update(values)
            else:
                data[section] = values
    return data


def sl_config_from(defaults: dict) -> SlConfig:
    names = {f.name for f in fields(SlConfig)}
    return SlConfig(**{k: v for k, v in defaults.get("sl", {}).items() if k in names})


def dqn_config_from(defaults: dict) -> DqnConfig:
    names = {f.name for f in fields(DqnConfig)}
    return DqnConfig(**{k: v for k, v in defaults.get("rl", {}).items() if k in names})


def grid_from(defaults: dict, task: str) -> GridSpec:
    grid = defaults.get("grids", {}).get(task.lower())
    if grid is None:
        return GridSpec.default(task)
    return GridSpec(task.lower(), *(tuple(grid[k]) for k in ("nn_hidden_layers", "nn_nodes", "vqc_encodings", "vqc_layers")))


# -- single runs ---------------------------------------------------------------------


def run_id(task: str, spec: ModelSpec, seed: int) -> str:
    return f"{task.lower()}_{spec.tag}_{seed}"


@dataclass
class RunRequest:
    task: str
    spec: ModelSpec
    seed: int
    out_dir: str
    sl_config: SlConfig = field(default_factory=SlConfig)
    dqn_config: DqnConfig = field(default_factory=DqnConfig)
    log_circuits: bool = False
    resplit: bool = True

    @property
    def run_id(self) -> str:
        return run_id(self.task, self.spec, self.seed)

    @property
    def metrics_path(self) -> Path:
        return Path(self.out_dir) / f"{self.run_id}.json"


def run_single(req: RunRequest) -> dict:
    """Train one model for one seed and persist metrics, checkpoint and circuit log."""
    info = task_info(req.task)
    artifacts = Path(req.out_dir) / req.run_id
    artifacts.mkdir(parents=True, exist_ok=True)
    recorder = None
    if req.log_circuits and req.spec.family == "vqc":
        total = req.sl_config.epochs if info["kind"] == "sl" else req.dqn_config.episodes
        recorder = CircuitLog(log_points(total), task=req.task)
    if info["kind"] == "sl":
        dataset = load_dataset(req.task, req.seed, resplit=req.resplit)
        result = train_sl(req.spec, dataset, req.sl_config, req.seed, recorder=recorder)
    else:
        result = dqn_train(req.spec, req.dqn_config, req.seed, recorder=recorder)
    metrics = result.metrics.to_dict()
    metrics.update(task=req.task.lower(), run_id=req.run_id, model_tag=req.spec.tag, family=req.spec.family,
                   spec=asdict(req.spec))
    save_checkpoint(result.model, artifacts / "checkpoint.json")
    if recorder is not None:
        recorder.save(artifacts / "circuits.jsonl")
    tmp = req.metrics_path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(metrics, indent=1) + "\n")
    tmp.replace(req.metrics_path)
    return metrics


def _run_guarded(req: RunRequest) -> dict:
    try:
        return run_single(req)
    except Exception as exc:  # reported per run; the sweep continues
        return {"run_id": req.run_id, "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV, "")
    return max(1, int(raw)) if raw.strip() else default


@dataclass
class SweepResult:
    runs: list[dict]
    failures: list[dict]
    skipped: int = 0


def run_grid(spec: GridSpec, seeds=range(10), out_dir="results", family: str | None = None,
             sl_config: SlConfig | None = None, dqn_config: DqnConfig | None = None,
             resume: bool = True, log_circuits: bool = False, resplit: bool = True,
             workers: int | None = None, configs=None) -> SweepResult:
    """Every config x seed; completed runs found on disk are reused when ``resume``.

    Circuit logging, when enabled, applies to seed 0 only.
    """
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    configs = configs if configs is not None else spec.configs(family)
    requests = [
        RunRequest(spec.task, cfg, int(seed), str(out_dir), sl_config or SlConfig(), dqn_config or DqnConfig(),
                   log_circuits and int(seed) == 0, resplit)
        for cfg in configs
        for seed in seeds
    ]
    runs, failures, pending = [], [], []
    for req in requests:
        if resume and req.metrics_path.exists():
            runs.append(json.loads(req.metrics_path.read_text()))
        else:
            pending.append(req)
    skipped = len(runs)
    workers = workers or worker_count()
    if workers > 1 and len(pending) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_guarded, pending))
    else:
        outcomes = [_run_guarded(r) for r in pending]
    for out in outcomes:
        if "error" in out:
            log.error("run %s failed: %s", out["run_id"], out["error"])
            failures.append(out)
        else:
            runs.append(out)
    return SweepResult(runs, failures, skipped)


def load_runs(out_dir, task: str | None = None) -> list[dict]:
    runs = []
    for path in sorted(Path(out_dir).glob("*.json")):
        data = json.loads(path.read_text())
        if "run_id" in data and (task is None or data.get("task") == task.lower()):
            runs.append(data)
    return runs


# -- statistics ----------------------------------------------------------------------


def bootstrap_ci(values, resamples: int = 1000, level: float = 0.95, seed: int = 0) -> tuple[float, float, float]:
    """Sample mean with a percentile-bootstrap interval for the mean."""
    x = np.asarray(values, dtype=float).reshape(-1)
    if len(x) == 0:
        raise ValueError("bootstrap_ci needs at least one value")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(x), size=(resamples, len(x)))
    means = x[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.percentile(means, [100 * alpha, 100 * (1 - alpha)])
    return float(x.mean()), float(low), float(high)


@dataclass
class SummaryRow:
    task: str
    model_id: str
    description: str
    family: str
    model_tag: str
    n_params: int
    n_seeds: int
    metric: float
    metric_low: float
    metric_high: float
    train_seconds: float
    train_seconds_low: float
    train_seconds_high: float
    circuit_seconds: float = 0.0
    per_circuit_seconds: float = 0.0


def primary_metric(run: dict) -> float:
    return run["test_accuracy"] if run.get("kind") == "sl" else run["test_reward"]


def summarize(runs: list[dict]) -> list[SummaryRow]:
    """One row per model config, aggregated over its seeds."""
    groups: dict[tuple, list[dict]] = {}
    for r in runs:
        groups.setdefault((r["task"], r["model_tag"]), []).append(r)
    rows = []
    for (task, tag), group in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[1][0]["family"], kv[1][0]["n_params"], kv[0][1])):
        group.sort(key=lambda r: r["seed"])
        m = bootstrap_ci([primary_metric(r) for r in group])
        t = bootstrap_ci([r["train_seconds"] for r in group])
        first = group[0]
        rows.append(
            SummaryRow(
                task, first["model_id"], first["description"], first["family"], tag, first["n_params"], len(group),
                *m, *t,
                float(np.mean([r.get("circuit_seconds", 0.0) for r in group])),
                float(np.mean([r.get("per_circuit_seconds", 0.0) for r in group])),
            )
        )
    return rows


class NoQualifyingModel(ValueError):
    pass


@dataclass
class PairSelection:
    nn: SummaryRow
    vqc: SummaryRow
    nn_candidates: list[SummaryRow]
    vqc_candidates: list[SummaryRow]


def _find(rows, key: str) -> SummaryRow:
    for r in rows:
        if key in (r.model_id, r.model_tag):
            return r
    raise KeyError(f"no model {key!r} in the summary")


def select_comparable_pair(summary: list[SummaryRow], threshold: float, override=None) -> PairSelection:
    """Per family, the fastest-training model whose mean metric reaches ``threshold``.

    ``override`` is an optional ``(nn_key, vqc_key)``, each a model id such
    as ``NN-75`` or a tag such as ``nn-h1-n9``; it replaces the automatic
    choice but the candidate lists are still reported.
    """
    cands = {fam: [r for r in summary if r.family == fam and r.metric >= threshold] for fam in ("nn", "vqc")}
    if override is not None:
        nn, vqc = _find(summary, override[0]), _find(summary, override[1])
        return PairSelection(nn, vqc, cands["nn"], cands["vqc"])
    for fam, rows in cands.items():
        if not rows:
            raise NoQualifyingModel(f"no {fam.upper()} reaches mean metric {threshold}")
    pick = {fam: min(rows, key=lambda r: (r.train_seconds, r.n_params)) for fam, rows in cands.items()}
    return PairSelection(pick["nn"], pick["vqc"], cands["nn"], cands["vqc"])


def parameter_ratio(vqc_params: int, nn_params: int) -> float:
    return vqc_params / nn_params


@dataclass
class RatioRow:
    task: str
    nn: str
    vqc: str
    parameter_ratio: float
    simulator_time_ratio: float
    hardware_time_ratio: float | None = None


def ratio_row(task: str, pair: PairSelection, hw_seconds: float | None = None) -> RatioRow:
    sim = pair.vqc.train_seconds / pair.nn.train_seconds if pair.nn.train_seconds > 0 else float("nan")
    hw = hw_seconds / pair.nn.train_seconds if hw_seconds is not None and pair.nn.train_seconds > 0 else None
    return RatioRow(task, pair.nn.model_id, pair.vqc.model_id, parameter_ratio(pair.vqc.n_params, pair.nn.n_params), sim, hw)


def _write_rows(path: Path, rows) -> None:
    rows = [asdict(r) for r in rows]
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def curve_rows(runs: list[dict], model_tags) -> list[dict]:
    """Per-epoch/episode mean and bootstrap CI for plotting."""
    out = []
    for tag in model_tags:
        group = sorted((r for r in runs if r["model_tag"] == tag), key=lambda r: r["seed"])
        if not group:
            continue
        if group[0]["kind"] == "sl":
            series = {k: np.array([[e[k] for e in r["epochs"]] for r in group])
                      for k in ("train_loss", "train_accuracy", "val_loss", "val_accuracy")}
        else:
            from .rl import moving_average

            series = {"reward_ma50": np.array([moving_average([e["reward"] for e in r["episodes"]]) for r in group])}
        for name, matrix in series.items():
            for step in range(matrix.shape[1]):
                mean, low, high = bootstrap_ci(matrix[:, step])
                out.append({"model_id": group[0]["model_id"], "model_tag": tag, "series": name,
                            "step": step + 1, "mean": mean, "low": low, "high": high})
    return out


def emit_tables(out_dir, summaries: dict[str, list[SummaryRow]], pairs: dict[str, PairSelection],
                hw_estimates: dict[str, float] | None = None, runs: dict[str, list[dict]] | None = None) -> list[Path]:
    """Per-task summary CSVs, the ratio table, and curve CSVs for the chosen pairs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for task, rows in summaries.items():
        path = out_dir / f"{task}_summary.csv"
        _write_rows(path, rows)
        written.append(path)
    ratios = [ratio_row(task, pair, (hw_estimates or {}).get(task)) for task, pair in pairs.items()]
    path = out_dir / "ratios.csv"
    _write_rows(path, ratios)
    written.append(path)
    for task, pair in pairs.items():
        if runs and task in runs:
            path = out_dir / f"{task}_curves.csv"
            rows = curve_rows(runs[task], [pair.nn.model_tag, pair.vqc.model_tag])
            if rows:
                with path.open("w", newline="") as f:
                    writer = csv.DictWriter(f, fieldnames=list(rows[0]))
                    writer.writeheader()
                    writer.writerows(rows)
                written.append(path)
    return written


def read_csv_rows(path) -> list[dict]:
    with Path(path).open(newline="") as f:
        return list(csv.DictReader(f))
