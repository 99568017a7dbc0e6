import math

import numpy as np
import pytest

from asisim.config import EnvConfig
from asisim.env import EPISODE_END, OCCUPANT_EVACUATED, TARGET_REACHED, EpisodeEvent, ShooterEnv
from asisim.experiments import (
    ScenarioConfig,
    blocked_from_label,
    compute_metrics,
    enumerate_scenarios,
    run_episode,
    run_scenario,
    run_sweep,
    scenario_label,
    sweep_report,
)
from asisim.policies import GreedyPolicy
from asisim.stats import one_way_anova
from asisim.world import Tag, build_ray_fan, cast_rays


def test_scenario_counts_and_order():
    assert [s.label for s in enumerate_scenarios(0)] == ["full"]
    one = enumerate_scenarios(1)
    assert [s.blocked for s in one] == [(i,) for i in range(1, 7)]
    two = enumerate_scenarios(2)
    assert len(two) == 15 == math.comb(6, 2)
    assert two[0].blocked == (1, 2) and two[-1].blocked == (5, 6)
    assert [s.blocked for s in two] == sorted(s.blocked for s in two)
    assert all(len(s.open_exits) >= 4 for s in two)
    with pytest.raises(ValueError):
        enumerate_scenarios(3)


def test_scenario_validation():
    with pytest.raises(ValueError, match="at least one exit"):
        ScenarioConfig(blocked=(1, 2, 3, 4, 5, 6))
    with pytest.raises(ValueError):
        ScenarioConfig(blocked=(7,))


def test_labels_round_trip():
    for k in (0, 1, 2):
        for sc in enumerate_scenarios(k):
            assert blocked_from_label(sc.label) == sc.blocked
    assert scenario_label([6, 5]) == "no-5-6"


def _log(evac, harmed, n_end=200):
    ev = [EpisodeEvent(3, TARGET_REACHED, i) for i in range(harmed)]
    ev += [EpisodeEvent(5, OCCUPANT_EVACUATED, 100 + i) for i in range(evac)]
    return ev + [EpisodeEvent(n_end, EPISODE_END, -1, "timeout")]


def test_compute_metrics_direct_count():
    m = compute_metrics(_log(40, 35), 100)
    assert (m.evacuation_rate, m.harm_rate) == (40.0, 35.0)
    assert m.duration_s == 20.0 and m.end_reason == "timeout"
    assert compute_metrics(_log(10, 0), 100).harm_rate == 0.0


def test_compute_metrics_requires_end():
    with pytest.raises(ValueError, match="episode_end"):
        compute_metrics(_log(1, 1)[:-1], 10)


def _recount(events, n):
    """Independent scan of terminal events; each occupant may appear once."""
    final = {}
    for e in events:
        if e.kind in (TARGET_REACHED, OCCUPANT_EVACUATED):
            assert e.subject not in final, "an occupant reached two terminal states"
            final[e.subject] = e.kind
    kinds = list(final.values())
    return 100 * kinds.count(OCCUPANT_EVACUATED) / n, 100 * kinds.count(TARGET_REACHED) / n


def test_rates_match_event_recount(office):
    cfg = EnvConfig.evaluation(occupant_count=100)
    for seed in range(4):
        m = run_episode(office, GreedyPolicy(), cfg, seed, office.exit_ids)
        e, h = _recount(m.events, 100)
        assert m.evacuation_rate == pytest.approx(e) and m.harm_rate == pytest.approx(h)
        assert 0 <= m.evacuation_rate + m.harm_rate <= 100
        if m.end_reason == "timeout":
            last = max((e.t for e in m.events if e.kind == TARGET_REACHED), default=0)
            assert m.duration_s == pytest.approx((last + 200) * 0.1)


def test_run_is_deterministic(office):
    sc = ScenarioConfig(runs=1, seed_base=17)
    a, b = run_scenario(sc, office), run_scenario(sc, office)
    assert a[0] == b[0]
    assert a[0].trajectory == b[0].trajectory


def test_paired_seeds_across_scenarios(office):
    full, no1 = (ScenarioConfig(b, runs=2, seed_base=40) for b in ((), (1,)))
    a, b = run_scenario(full, office, keep_logs=False), run_scenario(no1, office, keep_logs=False)
    assert [m.seed for m in a] == [m.seed for m in b] == [40, 41]


def test_closed_exits_act_as_wall(office):
    env = ShooterEnv(office, EnvConfig.evaluation(occupant_count=100))
    env.reset(np.random.default_rng(2), open_exits=[1, 2, 3, 4])
    assert all(not (g.kind == "exit" and g.ref in (5, 6)) for g in env.crowd.goals)
    for eid in (5, 6):
        p = np.asarray(office.portal_goal_point(office.exit(eid).portal))
        portal = office.exit(eid).portal
        mid = (np.asarray(portal.a) + np.asarray(portal.b)) / 2
        direction = mid - p
        origin = p - 0.5 * direction / np.linalg.norm(direction)
        heading = math.atan2(direction[1], direction[0])
        a, b, tag = env.layout.ray_segments
        _, tags = cast_rays(origin, build_ray_fan(heading)[3:4], a, b, tag, np.empty((0, 2)))
        assert tags[0] == Tag.EXTERIOR_WALL


def test_sweep_rows_and_df(office):
    scs = [s for k in (0, 1, 2) for s in enumerate_scenarios(k, runs=2, occupants=5)]
    rows = run_sweep(scs, office, env_cfg=EnvConfig.evaluation(occupant_count=5, max_episode_steps=5))
    assert len(rows) == 22 * 2
    labels = [m.scenario_label for m in rows]
    assert labels[:2] == ["full", "full"] and labels[-1] == "no-5-6"
    rep = sweep_report(rows)
    r = rep.anovas["exit_count"]["evacuation_rate"]
    assert (r.df_between, r.df_within) == (2, 44 - 3)
    # full sweep arithmetic at 100 runs per subcase
    assert 22 * 100 - 3 == 2197


def _rows(spec):
    rng = np.random.default_rng(0)
    out = []
    for label, evac in spec.items():
        for k, v in enumerate(evac):
            out.append({"scenario_label": label, "run_index": k, "seed": k, "evacuation_rate": v,
                        "harm_rate": float(rng.uniform(0, 100 - v)), "duration_s": 20.0, "end_reason": "timeout"})
    return out


def test_report_sort_order():
    rep = sweep_report(_rows({"full": [44, 44], "no-1": [31, 31], "no-2": [40, 40]}))
    assert [s.evac_mean for s in rep.scenarios] == [44, 40, 31]


def test_report_recomputes_means_and_sds():
    rng = np.random.default_rng(5)
    spec = {sc.label: list(rng.uniform(0, 60, 7)) for k in (0, 1, 2) for sc in enumerate_scenarios(k)}
    rows = _rows(spec)
    rep = sweep_report(rows)
    for s in rep.scenarios:
        vals = [r for r in rows if r["scenario_label"] == s.label]
        ev = [r["evacuation_rate"] for r in vals]
        hv = [r["harm_rate"] for r in vals]
        m = sum(ev) / len(ev)
        assert s.evac_mean == pytest.approx(m, rel=1e-12)
        assert s.evac_sd == pytest.approx(math.sqrt(sum((x - m) ** 2 for x in ev) / (len(ev) - 1)), rel=1e-12)
        assert s.harm_mean == pytest.approx(sum(hv) / len(hv), rel=1e-12)
        assert s.n == 7
    five = rep.anovas["five_exit_configuration"]["evacuation_rate"]
    assert (five.df_between, five.df_within) == (6, 7 * 7 - 7)
    assert rep.group_labels["five_exit_configuration"][0] == "full"
    four = rep.anovas["four_exit_configuration"]["harm_rate"]
    assert four.df_between == 14
    count = rep.anovas["exit_count"]["evacuation_rate"]
    groups = [[r["evacuation_rate"] for r in rows if len(blocked_from_label(r["scenario_label"])) == k]
              for k in (0, 1, 2)]
    assert count.F == pytest.approx(one_way_anova(groups).F, rel=1e-12)
    assert "n=7 " in rep.render()


def test_report_single_scenario_fails():
    with pytest.raises(ValueError, match="2 groups"):
        sweep_report(_rows({"full": [1, 2, 3]}))
