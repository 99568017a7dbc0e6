"""Exit-configuration case study: scenarios, evaluation runs, rates, ANOVA report."""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .config import EVALUATION, EnvConfig
from .env import EPISODE_END, OBS_DIM, OCCUPANT_EVACUATED, TARGET_REACHED, EpisodeEvent, ShooterEnv
from .policies import GreedyPolicy, NetworkPolicy
from .rl.checkpoint import Checkpoint, ObsDimMismatchError, load_checkpoint
from .stats import AnovaResult, one_way_anova
from .world import BuildingLayout

ALL_EXITS = (1, 2, 3, 4, 5, 6)


@dataclass(frozen=True)
class ScenarioConfig:
    blocked: tuple[int, ...] = ()
    runs: int = 100
    occupants: int = 100
    seed_base: int = 0
    exit_ids: tuple[int, ...] = ALL_EXITS

    def __post_init__(self):
        if not set(self.blocked) <= set(self.exit_ids):
            raise ValueError(f"blocked exits {self.blocked} not among {self.exit_ids}")
        if len(self.open_exits) < 1:
            raise ValueError("at least one exit must stay open besides the entrance")

    @property
    def open_exits(self) -> tuple[int, ...]:
        return tuple(i for i in self.exit_ids if i not in self.blocked)

    @property
    def label(self) -> str:
        return scenario_label(self.blocked)


def scenario_label(blocked: Iterable[int]) -> str:
    b = sorted(blocked)
    return "full" if not b else "no-" + "-".join(map(str, b))


def blocked_from_label(label: str) -> tuple[int, ...]:
    if label == "full":
        return ()
    if not label.startswith("no-"):
        raise ValueError(f"unrecognised scenario label {label!r}")
    return tuple(int(x) for x in label[3:].split("-"))


def enumerate_scenarios(n_blocked: int, runs: int = 100, occupants: int = 100, seed_base: int = 0,
                        exit_ids: Sequence[int] = ALL_EXITS) -> list[ScenarioConfig]:
    """All ways to close ``n_blocked`` exits, lexicographic by blocked ids.

    Every scenario shares ``seed_base``, so run ``k`` of each scenario starts
    from the same occupant and shooter spawns.
    """
    if n_blocked not in (0, 1, 2):
        raise ValueError("n_blocked must be 0, 1 or 2")
    return [ScenarioConfig(tuple(c), runs, occupants, seed_base, tuple(exit_ids))
            for c in itertools.combinations(sorted(exit_ids), n_blocked)]


@dataclass
class RunMetrics:
    evacuation_rate: float
    harm_rate: float
    duration_s: float
    end_reason: str
    scenario_label: str = ""
    run_index: int = 0
    seed: int = 0
    trajectory: list | None = field(default=None, repr=False, compare=False)
    events: list | None = field(default=None, repr=False, compare=False)

    def row(self) -> dict:
        return {"scenario_label": self.scenario_label, "run_index": self.run_index, "seed": self.seed,
                "evacuation_rate": self.evacuation_rate, "harm_rate": self.harm_rate,
                "duration_s": self.duration_s, "end_reason": self.end_reason}


def compute_metrics(events: Sequence[EpisodeEvent], n_occupants: int, dt: float = 0.1) -> RunMetrics:
    """Rates from a finished episode's event log. Occupants still hiding or walking count in neither."""
    evac = sum(1 for e in events if e.kind == OCCUPANT_EVACUATED)
    harmed = sum(1 for e in events if e.kind == TARGET_REACHED)
    end = [e for e in events if e.kind == EPISODE_END]
    if not end:
        raise ValueError("event log has no episode_end event")
    n = max(n_occupants, 1)
    return RunMetrics(100.0 * evac / n, 100.0 * harmed / n, round(end[-1].t * dt, 9), end[-1].detail)


def resolve_policy(policy):
    """Accept a policy object, the string "greedy", a checkpoint path or a Checkpoint."""
    if policy is None or policy == "greedy":
        return GreedyPolicy()
    if isinstance(policy, Checkpoint):
        if policy.model.obs_dim != OBS_DIM:
            raise ObsDimMismatchError(f"checkpoint expects {policy.model.obs_dim}-dim observations, "
                                      f"environment produces {OBS_DIM}")
        return NetworkPolicy(policy.model)
    if isinstance(policy, (str, bytes)) or hasattr(policy, "__fspath__"):
        return NetworkPolicy(load_checkpoint(policy, expected_obs_dim=OBS_DIM).model)
    return policy


def run_episode(layout: BuildingLayout, policy, env_cfg: EnvConfig, seed: int,
                open_exits: Iterable[int], keep_logs: bool = True) -> RunMetrics:
    cfg = env_cfg if env_cfg.mode == EVALUATION else replace(env_cfg, mode=EVALUATION)
    env = ShooterEnv(layout, cfg)
    obs = env.reset(np.random.default_rng(seed), open_exits)
    policy.reset()
    while not env.done:
        obs, _, _, _ = env.step(policy.act(obs, env))
    m = compute_metrics(env.events, cfg.occupant_count, cfg.dt)
    n = max(cfg.occupant_count, 1)
    if not (math.isclose(m.evacuation_rate, 100.0 * env.crowd.n_evacuated / n)
            and math.isclose(m.harm_rate, 100.0 * env.crowd.n_harmed / n)):
        raise RuntimeError(f"event log disagrees with occupant counters (seed {seed})")
    m.seed = seed
    if keep_logs:
        m.trajectory = list(env.trajectory)
        m.events = list(env.events)
    return m


def _run_one(args):
    layout, policy, env_cfg, scenario, k, keep_logs = args
    m = run_episode(layout, policy, env_cfg, scenario.seed_base + k, scenario.open_exits, keep_logs)
    m.scenario_label = scenario.label
    m.run_index = k
    return m


def run_scenario(scenario: ScenarioConfig, layout: BuildingLayout, policy="greedy",
                 env_cfg: EnvConfig | None = None, keep_logs: bool = True, workers: int = 1) -> list[RunMetrics]:
    env_cfg = env_cfg or EnvConfig.evaluation(occupant_count=scenario.occupants)
    if env_cfg.occupant_count != scenario.occupants:
        env_cfg = replace(env_cfg, occupant_count=scenario.occupants)
    policy = resolve_policy(policy)
    jobs = [(layout, policy, env_cfg, scenario, k, keep_logs) for k in range(scenario.runs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_run_one, jobs, chunksize=8))
    return [_run_one(j) for j in jobs]


def run_sweep(scenarios: Sequence[ScenarioConfig], layout: BuildingLayout, policy="greedy",
              env_cfg: EnvConfig | None = None, keep_logs: bool = False, workers: int = 1,
              progress=None) -> list[RunMetrics]:
    policy = resolve_policy(policy)
    out = []
    for sc in scenarios:
        out.extend(run_scenario(sc, layout, policy, env_cfg, keep_logs, workers))
        if progress:
            progress(sc, out)
    return sorted(out, key=lambda m: (len(blocked_from_label(m.scenario_label)),
                                      blocked_from_label(m.scenario_label), m.run_index))


# -- report ------------------------------------------------------------------

@dataclass
class ScenarioSummary:
    label: str
    n: int
    evac_mean: float
    evac_sd: float
    harm_mean: float
    harm_sd: float


@dataclass
class SweepReport:
    scenarios: list[ScenarioSummary]
    anovas: dict[str, dict[str, AnovaResult]]
    group_labels: dict[str, list[str]]

    def to_json(self) -> dict:
        return {
            "scenarios": [s.__dict__ for s in self.scenarios],
            "anova": {name: {metric: r.as_dict() for metric, r in res.items()} for name, res in self.anovas.items()},
            "groups": self.group_labels,
        }

    def render(self) -> str:
        lines = ["# Exit configuration sweep", ""]
        titles = {
            "exit_count": "Exit-count effect (full access vs five vs four available exits)",
            "five_exit_configuration": "Configuration effect, five available exits (full access included)",
            "four_exit_configuration": "Configuration effect, four available exits",
        }
        for name, res in self.anovas.items():
            lines.append(f"## {titles.get(name, name)}")
            lines.append("groups: " + ", ".join(self.group_labels[name]))
            for metric, r in res.items():
                lines.append(f"{metric}: {r.summary()}")
                for g, m, s, n in zip(self.group_labels[name], r.means, r.sds, r.ns):
                    lines.append(f"  {g:<10} n={n:<5d} M={m:8.3f}  SD={s:8.3f}")
            lines.append("")
        lines.append("## Scenarios by evacuation rate (descending)")
        lines.append(f"{'scenario':<10} {'n':>5}  {'evacuation rate (%)':>20}  {'harm rate (%)':>16}")
        for s in self.scenarios:
            lines.append(f"{s.label:<10} {s.n:>5d}  {s.evac_mean:>11.2f} +/- {s.evac_sd:5.2f}  "
                         f"{s.harm_mean:>7.2f} +/- {s.harm_sd:5.2f}")
        lines += ["", "## Machine-readable", "```json", json.dumps(self.to_json(), indent=2, sort_keys=True), "```",
                  ""]
        return "\n".join(lines)


def _sd(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def sweep_report(rows: Sequence[RunMetrics | dict]) -> SweepReport:
    by_label: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for r in rows:
        d = r.row() if isinstance(r, RunMetrics) else r
        by_label[d["scenario_label"]].append((float(d["evacuation_rate"]), float(d["harm_rate"])))
    summaries = []
    for label, vals in by_label.items():
        a = np.array(vals)
        summaries.append(ScenarioSummary(label, len(a), float(a[:, 0].mean()), _sd(a[:, 0]), float(a[:, 1].mean()),
                                         _sd(a[:, 1])))
    summaries.sort(key=lambda s: (-s.evac_mean, s.label))

    def order(label):
        b = blocked_from_label(label)
        return (len(b), b)

    labels = sorted(by_label, key=order)
    count_groups: dict[int, list[str]] = defaultdict(list)
    for lb in labels:
        count_groups[len(blocked_from_label(lb))].append(lb)
    n_total = len(ALL_EXITS)

    anovas: dict[str, dict[str, AnovaResult]] = {}
    group_labels: dict[str, list[str]] = {}

    def add(name, groups: dict[str, list[str]]):
        data = {g: np.concatenate([np.array(by_label[lb]) for lb in lbs]) for g, lbs in groups.items()}
        if len(data) < 2 or any(len(v) < 2 for v in data.values()):
            return
        anovas[name] = {metric: one_way_anova([v[:, col] for v in data.values()])
                        for col, metric in ((0, "evacuation_rate"), (1, "harm_rate"))}
        group_labels[name] = list(data)

    add("exit_count", {("full" if k == 0 else f"{n_total - k}-exits"): count_groups[k] for k in sorted(count_groups)})
    five = ([lb for lb in count_groups.get(0, [])] + count_groups.get(1, []))
    if count_groups.get(1):
        add("five_exit_configuration", {lb: [lb] for lb in five})
    if count_groups.get(2):
        add("four_exit_configuration", {lb: [lb] for lb in count_groups[2]})
    if not anovas:
        raise ValueError("ANOVA needs at least 2 groups with at least 2 runs each")
    return SweepReport(summaries, anovas, group_labels)
