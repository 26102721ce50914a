"""Command line entry point: ``vqcbench {sl,rl,summarize,export-qasm,estimate-hw}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, kernels
from .models import ModelSpec
from .qasm import estimate_run_hardware_time, export_run_qasm

log = logging.getLogger("vqcbench")


def parse_seeds(text: str) -> list[int]:
    """``"0-9"``, ``"0,3,5"`` or a mix such as ``"0-2,7"``; empty means no seeds."""
    seeds: list[int] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


def _pair(text: str | None):
    if not text:
        return None
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("--pair-override takes NN_ID,VQC_ID (e.g. NN-75,VQC-28)")
    return tuple(parts)


def _add_sweep_args(p: argparse.ArgumentParser, tasks, default_task: str) -> None:
    p.add_argument("--task", choices=tasks, default=default_task)
    p.add_argument("--family", choices=["nn", "vqc"], default=None, help="restrict to one model family")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--grid", action="store_true", help="run the full hyperparameter grid (default)")
    mode.add_argument("--single", action="store_true", help="run one configuration given by the model flags")
    p.add_argument("--hidden-layers", type=int, default=1)
    p.add_argument("--nodes", type=int, default=9)
    p.add_argument("--embedding", choices=["ang", "amp"], default="ang")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--seeds", default="0-9")
    p.add_argument("--out-dir", default="results")
    p.add_argument("--resume", action="store_true", help="skip runs whose metrics file already exists")
    p.add_argument("--pair-override", type=_pair, default=None, metavar="NN_ID,VQC_ID")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--config", default=None, help="JSON file overriding the bundled defaults")
    p.add_argument("--log-circuits", action="store_true", help="log VQC circuits at 5 points for seed 0")
    p.add_argument("--workers", type=int, default=None, help=f"worker processes (default ${harness.WORKERS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqcbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--backend", choices=kernels.available_backends(), default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    sl = sub.add_parser("sl", help="supervised learning sweeps (Iris, Wine, WDBC)")
    _add_sweep_args(sl, ["iris", "wine", "wdbc"], "iris")
    sl.add_argument("--epochs", type=int, default=None)
    sl.add_argument("--fixed-split", action="store_true", help="use the seed-0 split for every seed")

    rl = sub.add_parser("rl", help="deep Q-learning sweeps on Frozen Lake")
    _add_sweep_args(rl, ["frozenlake"], "frozenlake")
    rl.add_argument("--episodes", type=int, default=None)

    summ = sub.add_parser("summarize", help="aggregate stored runs into CSV tables")
    summ.add_argument("--out-dir", default="results")
    summ.add_argument("--task", action="append", choices=sorted(harness.TASKS), default=None)
    summ.add_argument("--pair-override", type=_pair, default=None, metavar="NN_ID,VQC_ID")
    summ.add_argument("--threshold", type=float, default=None)
    summ.add_argument("--config", default=None)

    exp = sub.add_parser("export-qasm", help="write OpenQASM 2 files for a run's logged circuits")
    exp.add_argument("--run", required=True, help="run artifact directory (<out-dir>/<task>_<model>_<seed>)")
    exp.add_argument("--dest", default=None)

    est = sub.add_parser("estimate-hw", help="extrapolate hardware training time from measured circuit times")
    est.add_argument("--run", required=True)
    est.add_argument("--hw-times", required=True, help="CSV with columns circuit_id,hardware_seconds")
    return parser


def _print_summary(task: str, rows, pair) -> None:
    print(f"== {task}")
    for r in rows:
        print(f"  {r.description:<24} metric {r.metric:.3f} [{r.metric_low:.3f}, {r.metric_high:.3f}]"
              f"  train {r.train_seconds:8.2f}s  seeds {r.n_seeds}")
    if pair is not None:
        print(f"  pair: {pair.nn.model_id} vs {pair.vqc.model_id}"
              f" ({len(pair.nn_candidates)} NN / {len(pair.vqc_candidates)} VQC candidates)")


def summarize_tasks(out_dir, tasks, defaults, threshold=None, override=None) -> list[Path]:
    summaries, pairs, runs_by_task = {}, {}, {}
    for task in tasks:
        runs = harness.load_runs(out_dir, task)
        if not runs:
            continue
        rows = harness.summarize(runs)
        summaries[task], runs_by_task[task] = rows, runs
        families = {r.family for r in rows}
        pair = None
        if families == {"nn", "vqc"}:
            limit = threshold if threshold is not None else defaults["thresholds"][task]
            try:
                pair = harness.select_comparable_pair(rows, limit, override)
            except (harness.NoQualifyingModel, KeyError) as exc:
                log.warning("%s: %s", task, exc)
            if pair is not None:
                pairs[task] = pair
        _print_summary(task, rows, pair)
    return harness.emit_tables(out_dir, summaries, pairs, runs=runs_by_task)


def _sweep(args, kind: str) -> int:
    defaults = harness.load_defaults(args.config)
    sl_config = harness.sl_config_from(defaults)
    dqn_config = harness.dqn_config_from(defaults)
    if kind == "sl" and args.epochs is not None:
        sl_config = replace(sl_config, epochs=args.epochs)
    if kind == "rl" and args.episodes is not None:
        dqn_config = replace(dqn_config, episodes=args.episodes)
    grid = harness.grid_from(defaults, args.task)
    configs = None
    if args.single:
        info = harness.task_info(args.task)
        family = args.family or "nn"
        configs = [ModelSpec(family, info["n_inputs"], info["n_outputs"], hidden_layers=args.hidden_layers,
                             nodes=args.nodes, embedding=args.embedding, layers=args.layers)]
    result = harness.run_grid(
        grid, parse_seeds(args.seeds), args.out_dir, family=args.family, sl_config=sl_config,
        dqn_config=dqn_config, resume=args.resume, log_circuits=args.log_circuits,
        resplit=not getattr(args, "fixed_split", False), workers=args.workers, configs=configs,
    )
    print(f"{len(result.runs)} runs ({result.skipped} reused), {len(result.failures)} failed")
    for f in result.failures:
        print(f"  FAILED {f['run_id']}: {f['error']}", file=sys.stderr)
    summarize_tasks(args.out_dir, [args.task], defaults, args.threshold, args.pair_override)
    return 1 if result.failures else 0


def _run_dir(path: str) -> Path:
    p = Path(path)
    if p.suffix == ".json":
        p = p.with_suffix("")
    if not (p / "circuits.jsonl").exists():
        raise SystemExit(f"{p}: no circuits.jsonl (train a VQC with --log-circuits)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if args.backend:
        kernels.set_backend(args.backend)
    if args.command in ("sl", "rl"):
        return _sweep(args, args.command)
    if args.command == "summarize":
        defaults = harness.load_defaults(args.config)
        summarize_tasks(args.out_dir, args.task or sorted(harness.TASKS), defaults, args.threshold, args.pair_override)
        return 0
    if args.command == "export-qasm":
        manifest = export_run_qasm(_run_dir(args.run), args.dest)
        print(manifest)
        return 0
    if args.command == "estimate-hw":
        report = estimate_run_hardware_time(_run_dir(args.run), args.hw_times)
        print(json.dumps(report, indent=1))
        return 0
    return 2  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
