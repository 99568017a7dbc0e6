"""Command-line entry point: ``asisim {train,evaluate,sweep,stats,export-trajectories}``.

Outputs go under ``--out`` or, when omitted, under ``$ASISIM_OUTPUT_ROOT/<command>``
(``runs/<command>`` if the variable is unset). Every output directory gets a
``manifest.yaml`` before any other file is written.

Exit codes: 0 success, 1 runtime failure, 2 bad input (missing file, unparsable
config or results, incompatible checkpoint).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import yaml

from . import __version__
from .config import EnvConfig
from .env import OBS_DIM
from .experiments import ScenarioConfig, enumerate_scenarios, run_sweep, sweep_report
from .io import (FormatError, configs_from, dump_json, format_results, load_config_file, output_root,
                 parse_results, parse_trajectory, write_episode_logs, write_manifest)
from .rl.checkpoint import CheckpointError, load_checkpoint
from .rl.train import train
from .world import LayoutError, default_layout_path, load_layout_file

log = logging.getLogger("asisim")


class UsageError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _layout(args):
    path = _existing(args.layout or default_layout_path(), "layout file")
    try:
        return path, load_layout_file(path)
    except LayoutError as exc:
        raise UsageError(f"invalid layout {path}: {exc}") from None


def _out(args, command: str) -> Path:
    return Path(args.out) if args.out else output_root() / command


def _policy(args):
    if getattr(args, "checkpoint", None):
        path = _existing(args.checkpoint, "checkpoint")
        try:
            return str(path), load_checkpoint(path, expected_obs_dim=OBS_DIM)
        except CheckpointError as exc:
            raise UsageError(f"incompatible checkpoint {path}: {exc}") from None
    return "greedy", "greedy"


# -- train ---------------------------------------------------------------------

def cmd_train(args) -> int:
    layout_path, layout = _layout(args)
    try:
        doc = load_config_file(_existing(args.config, "config file")) if args.config else {}
        ppo, env = configs_from(doc, {"max_steps": args.max_steps})
    except (TypeError, ValueError, yaml.YAMLError) as exc:
        raise UsageError(f"invalid config: {exc}") from None
    out = _out(args, "train")
    write_manifest(out, "train", layout_path, args.seed, ppo, env, {"n_envs": args.n_envs})
    res = train(layout, ppo, env, n_envs=args.n_envs, seed=args.seed, out_dir=out)
    print(f"trained {ppo.max_steps} steps, {res.updates} updates, {len(res.episode_rewards)} episodes -> {out}")
    return 0


# -- evaluate / sweep ------------------------------------------------------------

def _run_and_write(args, scenarios, layout_path, layout, command: str) -> int:
    policy_name, policy = _policy(args)
    out = _out(args, command)
    env = EnvConfig.evaluation(occupant_count=args.occupants)
    write_manifest(out, command, layout_path, args.seed, None, env,
                   {"policy": policy_name, "runs": args.runs, "scenarios": [s.label for s in scenarios]})

    def progress(sc, rows):
        log.info("%s done (%d rows so far)", sc.label, len(rows))

    results = run_sweep(scenarios, layout, policy, env, keep_logs=not args.no_logs, workers=args.workers,
                        progress=progress)
    # the single collector: every file is written here, in sorted order
    (out / "results.csv").write_text(format_results(m.row() for m in results), encoding="utf-8")
    if not args.no_logs:
        for m in results:
            write_episode_logs(out, m)
    print(f"{len(results)} runs over {len(scenarios)} scenario(s) -> {out / 'results.csv'}")
    return 0


def _parse_blocked(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        return tuple(sorted(int(x) for x in text.split(",") if x.strip()))
    except ValueError:
        raise UsageError(f"--blocked expects comma-separated exit ids, got {text!r}") from None


def cmd_evaluate(args) -> int:
    layout_path, layout = _layout(args)
    try:
        sc = ScenarioConfig(_parse_blocked(args.blocked), args.runs, args.occupants, args.seed, layout.exit_ids)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return _run_and_write(args, [sc], layout_path, layout, "evaluate")


def cmd_sweep(args) -> int:
    layout_path, layout = _layout(args)
    counts = (0, 1, 2) if args.blocked == "all" else (int(args.blocked),)
    scenarios = [sc for k in counts
                 for sc in enumerate_scenarios(k, args.runs, args.occupants, args.seed, layout.exit_ids)]
    return _run_and_write(args, scenarios, layout_path, layout, "sweep")


# -- stats -----------------------------------------------------------------------

def cmd_stats(args) -> int:
    path = _existing(args.results, "results file")
    try:
        rows = parse_results(path.read_text(encoding="utf-8"))
        report = sweep_report(rows)
    except (FormatError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None
    text = report.render()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        out.with_suffix(".json").write_text(dump_json(report.to_json()), encoding="utf-8")
        print(f"report -> {out}")
    else:
        sys.stdout.write(text)
    return 0


# -- export-trajectories ------------------------------------------------------------

def collect_trajectories(log_dir: Path) -> dict[str, dict[int, list[tuple[float, float, float]]]]:
    """``{scenario_label: {run_index: [(t, x, y), ...]}}`` from ``logs/<label>/run_XXXX/trajectory.csv``."""
    root = log_dir / "logs" if (log_dir / "logs").is_dir() else log_dir
    found: dict[str, dict[int, list]] = defaultdict(dict)
    for f in sorted(root.glob("*/run_*/trajectory.csv")):
        label, run = f.parent.parent.name, int(f.parent.name.split("_", 1)[1])
        found[label][run] = parse_trajectory(f.read_text(encoding="utf-8"))
    return {k: dict(sorted(v.items())) for k, v in sorted(found.items())}


def cmd_export(args) -> int:
    log_dir = _existing(args.log_dir, "log directory")
    data = collect_trajectories(log_dir)
    if not data:
        raise UsageError(f"no trajectory logs under {log_dir}")
    out = Path(args.out) if args.out else log_dir / "trajectories"
    out.mkdir(parents=True, exist_ok=True)
    for label, runs in data.items():
        if args.format == "json":
            doc = {"scenario": label, "runs": [{"run_index": k, "t": [p[0] for p in pts], "x": [p[1] for p in pts],
                                                "y": [p[2] for p in pts]} for k, pts in runs.items()]}
            (out / f"{label}.json").write_text(json.dumps(doc) + "\n", encoding="utf-8")
        else:
            lines = ["run_index,t,x,y"]
            lines += [f"{k},{t!r},{x!r},{y!r}" for k, pts in runs.items() for t, x, y in pts]
            (out / f"{label}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"exported {sum(len(r) for r in data.values())} trajectories in {len(data)} scenario(s) -> {out}")
    return 0


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asisim", description="Active-shooter evacuation simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the shooter agent with PPO")
    t.add_argument("--layout")
    t.add_argument("--config", help="YAML file with optional 'ppo' and 'env' sections")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--n-envs", type=int, default=4)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    def run_flags(sp):
        sp.add_argument("--layout")
        sp.add_argument("--checkpoint", help="trained policy; the greedy fallback is used when omitted")
        sp.add_argument("--runs", type=int, default=100)
        sp.add_argument("--occupants", type=int, default=100)
        sp.add_argument("--seed", type=int, default=0, help="run k of every scenario uses seed + k")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--no-logs", action="store_true", help="skip per-run event and trajectory files")
        sp.add_argument("--out")

    e = sub.add_parser("evaluate", help="run one exit configuration")
    run_flags(e)
    e.add_argument("--blocked", default="", help="comma-separated closed exit ids, e.g. 5,6")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="run every configuration with 0, 1 or 2 exits closed")
    run_flags(s)
    s.add_argument("--blocked", choices=("0", "1", "2", "all"), default="all")
    s.set_defaults(func=cmd_sweep)

    st = sub.add_parser("stats", help="ANOVA report from a results file")
    st.add_argument("--results", required=True)
    st.add_argument("--out", help="markdown report path; a .json twin is written next to it")
    st.set_defaults(func=cmd_stats)

    x = sub.add_parser("export-trajectories", help="per-scenario shooter trajectory overlays")
    x.add_argument("log_dir")
    x.add_argument("--format", choices=("csv", "json"), default="csv")
    x.add_argument("--out")
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"asisim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"asisim {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
