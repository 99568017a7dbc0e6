"""On-disk formats: results rows, episode logs, trajectories, run manifests, config files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from . import __version__
from .config import EnvConfig, PpoConfig, from_dict, to_dict
from .env import EpisodeEvent

RESULT_FIELDS = ("scenario_label", "run_index", "seed", "evacuation_rate", "harm_rate", "duration_s", "end_reason")
EVENT_FIELDS = ("t", "kind", "subject", "detail")
TRAJECTORY_FIELDS = ("t", "x", "y")
OUTPUT_ROOT_ENV = "ASISIM_OUTPUT_ROOT"


class FormatError(ValueError):
    pass


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _f(x: float) -> str:
    return repr(float(x))


# -- results -------------------------------------------------------------------

def format_results(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in rows:
        w.writerow([r["scenario_label"], int(r["run_index"]), int(r["seed"]), _f(r["evacuation_rate"]),
                    _f(r["harm_rate"]), _f(r["duration_s"]), r["end_reason"]])
    return buf.getvalue()


def parse_results(text: str) -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("results file is empty") from None
    if tuple(header) != RESULT_FIELDS:
        raise FormatError(f"line 1: expected header {','.join(RESULT_FIELDS)}")
    rows, errors = [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(RESULT_FIELDS):
            errors.append(f"line {lineno}: expected {len(RESULT_FIELDS)} fields, got {len(rec)}")
            continue
        try:
            row = {"scenario_label": rec[0], "run_index": int(rec[1]), "seed": int(rec[2]),
                   "evacuation_rate": float(rec[3]), "harm_rate": float(rec[4]), "duration_s": float(rec[5]),
                   "end_reason": rec[6]}
        except ValueError as exc:
            errors.append(f"line {lineno}: {exc}")
            continue
        if not (0 <= row["evacuation_rate"] <= 100 and 0 <= row["harm_rate"] <= 100):
            errors.append(f"line {lineno}: rates must lie in [0, 100]")
            continue
        rows.append(row)
    if errors:
        raise FormatError("malformed results rows:\n" + "\n".join(errors))
    return rows


# -- episode logs ----------------------------------------------------------------

def format_events(events: Sequence[EpisodeEvent]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_FIELDS)
    for e in events:
        w.writerow([e.t, e.kind, e.subject, e.detail])
    return buf.getvalue()


def parse_events(text: str) -> list[EpisodeEvent]:
    out = []
    for lineno, r in enumerate(csv.DictReader(io.StringIO(text)), start=2):
        try:
            out.append(EpisodeEvent(int(r["t"]), r["kind"], int(r["subject"]), r["detail"] or ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"line {lineno}: bad event row ({exc})") from None
    return out


def format_trajectory(points: Sequence[tuple[float, float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_FIELDS)
    for t, x, y in points:
        w.writerow([_f(t), _f(x), _f(y)])
    return buf.getvalue()


def parse_trajectory(text: str) -> list[tuple[float, float, float]]:
    out = []
    for lineno, r in enumerate(csv.DictReader(io.StringIO(text)), start=2):
        try:
            out.append((float(r["t"]), float(r["x"]), float(r["y"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"line {lineno}: bad trajectory row ({exc})") from None
    return out


def episode_dir(root: Path, label: str, run_index: int) -> Path:
    return Path(root) / "logs" / label / f"run_{run_index:04d}"


def write_episode_logs(root: Path, metrics) -> Path:
    d = episode_dir(root, metrics.scenario_label, metrics.run_index)
    d.mkdir(parents=True, exist_ok=True)
    (d / "events.csv").write_text(format_events(metrics.events or []), encoding="utf-8")
    (d / "trajectory.csv").write_text(format_trajectory(metrics.trajectory or []), encoding="utf-8")
    return d


# -- manifest & configs ------------------------------------------------------------

def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, layout_path, seed: int, ppo: PpoConfig | None = None,
                   env: EnvConfig | None = None, extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "tool": "asisim",
        "version": __version__,
        "command": command,
        "layout": str(layout_path),
        "layout_sha256": file_sha256(layout_path),
        "seed": int(seed),
        "started_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": {"ppo": to_dict(ppo) if ppo else None, "env": to_dict(env) if env else None},
    }
    if extra:
        doc.update(extra)
    path = out_dir / "manifest.yaml"
    path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")
    return path


def read_manifest(path) -> dict:
    return yaml.safe_load(Path(path).read_text(encoding="utf-8"))


def load_config_file(path) -> dict:
    """Config files share the layout dialect (YAML): optional ``ppo`` and ``env`` mappings plus top-level keys."""
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: config must be a mapping")
    return doc


def configs_from(doc: dict, ppo_overrides: dict | None = None, env_overrides: dict | None = None,
                 env_factory=EnvConfig.training) -> tuple[PpoConfig, EnvConfig]:
    ppo = from_dict(PpoConfig, doc.get("ppo"), **(ppo_overrides or {}))
    env_doc = to_dict(env_factory())
    env_doc.update(doc.get("env") or {})
    env = from_dict(EnvConfig, env_doc, **(env_overrides or {}))
    return ppo, env


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
