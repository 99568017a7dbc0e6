"""Rollout collection over parallel environments and the PPO training loop.

Seeding: ``SeedSequence(seed).spawn(n_envs + 1)``; stream 0 drives network
initialisation, action sampling and minibatch shuffles, stream ``1 + i``
drives every reset of environment ``i``.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import EnvConfig, PpoConfig, config_hash
from ..env import END_MAX_STEPS, OBS_DIM, ShooterEnv
from ..world import BuildingLayout
from .checkpoint import save_checkpoint
from .network import ActorCritic, Adam
from .ppo import Batch, compute_gae, ppo_update

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "mean_reward", "mean_episode_len", "policy_loss", "value_loss", "entropy", "lr", "beta",
              "epsilon")


@dataclass
class TrainResult:
    model: ActorCritic
    log_rows: list[dict]
    episode_rewards: list[float]
    episode_lengths: list[int]
    updates: int
    checkpoints: list[Path] = field(default_factory=list)


def format_log(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for r in rows:
        w.writerow([r["step"]] + [repr(float(r[k])) for k in LOG_FIELDS[1:]])
    return buf.getvalue()


def parse_log(text: str) -> list[dict]:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({k: (int(r[k]) if k == "step" else float(r[k])) for k in LOG_FIELDS})
    return rows


class _Segment:
    def __init__(self):
        self.obs, self.act, self.logp, self.rew, self.val, self.done = [], [], [], [], [], []

    def __len__(self):
        return len(self.obs)


def train(layout: BuildingLayout, cfg: PpoConfig, env_cfg: EnvConfig, n_envs: int = 1, seed: int = 0,
          out_dir: str | os.PathLike | None = None, open_exits=None) -> TrainResult:
    if n_envs < 1:
        raise ValueError("n_envs must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(n_envs + 1)
    rng = np.random.default_rng(streams[0])
    env_rngs = [np.random.default_rng(s) for s in streams[1:]]
    model = ActorCritic(OBS_DIM, 2, cfg.hidden_units, cfg.num_layers, rng)
    opt = Adam(model.params)
    envs = [ShooterEnv(layout, env_cfg) for _ in range(n_envs)]
    raw = np.stack([e.reset(r, open_exits) for e, r in zip(envs, env_rngs)])
    cfg_digest = config_hash(cfg, env_cfg)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)

    def norm(x, update):
        return model.normalizer.normalize(x, update=update) if cfg.normalize else x

    segs = [_Segment() for _ in range(n_envs)]
    buf = {k: [] for k in ("obs", "act", "logp", "adv", "ret", "val")}
    ep_ret = np.zeros(n_envs)
    ep_len = np.zeros(n_envs, dtype=int)
    episode_rewards: list[float] = []
    episode_lengths: list[int] = []
    window_r: list[float] = []
    window_l: list[int] = []
    rows: list[dict] = []
    ckpts: list[Path] = []
    last_stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": model.entropy(), "lr": cfg.learning_rate,
                  "beta": cfg.beta, "epsilon": cfg.epsilon}
    updates = 0
    since_update = 0
    next_summary = cfg.summary_frequency
    step = 0

    def flush(i: int, bootstrap: float):
        s = segs[i]
        if not len(s):
            return
        adv, ret = compute_gae(s.rew, s.val, s.done, bootstrap, cfg.gamma, cfg.lambd)
        buf["obs"].extend(s.obs)
        buf["act"].extend(s.act)
        buf["logp"].extend(s.logp)
        buf["val"].extend(s.val)
        buf["adv"].extend(adv)
        buf["ret"].extend(ret)
        segs[i] = _Segment()

    def summarize():
        nonlocal window_r, window_l
        rows.append({"step": step,
                     "mean_reward": float(np.mean(window_r)) if window_r else float("nan"),
                     "mean_episode_len": float(np.mean(window_l)) if window_l else float("nan"),
                     **{k: last_stats[k] for k in LOG_FIELDS[3:]}})
        log.info("step %d mean reward %.3f over %d episodes", step, rows[-1]["mean_reward"], len(window_r))
        window_r, window_l = [], []

    x = norm(raw, True)
    while step < cfg.max_steps:
        mean, log_std, value = model.forward(x)
        actions = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        logps = model.log_prob(mean, log_std, actions)
        next_raw = np.empty_like(raw)
        ended = []
        for i, env in enumerate(envs):
            obs_i, rb, _, done = env.step(np.clip(actions[i], -1.0, 1.0))
            r = rb.total * cfg.extrinsic_strength
            s = segs[i]
            s.obs.append(x[i])
            s.act.append(actions[i])
            s.logp.append(logps[i])
            s.val.append(value[i])
            s.rew.append(r)
            terminal = done and env.end_reason != END_MAX_STEPS
            s.done.append(float(terminal))
            ep_ret[i] += r
            ep_len[i] += 1
            if done:
                ended.append((i, terminal, obs_i))
                obs_i = env.reset(env_rngs[i], open_exits)
            next_raw[i] = obs_i
        step += n_envs
        since_update += n_envs
        for i, terminal, final_obs in ended:
            boot = 0.0 if terminal else float(model.value(norm(final_obs[None], False))[0])
            flush(i, boot)
            episode_rewards.append(float(ep_ret[i]))
            episode_lengths.append(int(ep_len[i]))
            window_r.append(float(ep_ret[i]))
            window_l.append(int(ep_len[i]))
            ep_ret[i] = 0.0
            ep_len[i] = 0
        raw = next_raw
        x = norm(raw, True)
        full = since_update >= cfg.buffer_size
        if full or any(len(s) >= cfg.time_horizon for s in segs):
            boots = model.value(x)
            for i, s in enumerate(segs):
                if full or len(s) >= cfg.time_horizon:
                    flush(i, float(boots[i]))
        if full:
            batch = Batch(np.array(buf["obs"]), np.array(buf["act"]), np.array(buf["logp"]),
                          np.array(buf["adv"]), np.array(buf["ret"]), np.array(buf["val"]))
            # anneal from where this rollout began so the final buffer still learns
            last_stats = ppo_update(model, opt, batch, cfg, step - since_update, rng)
            updates += 1
            since_update = 0
            buf = {k: [] for k in buf}
            log.debug("update %d at step %d: %s", updates, step, last_stats)
        if step >= next_summary:
            summarize()
            next_summary += cfg.summary_frequency
            if out is not None:
                ckpts.append(_checkpoint(model, step, out, cfg_digest, ckpts, cfg.keep_checkpoints))
                (out / "training_log.csv").write_text(format_log(rows), encoding="utf-8")
    # a closing row so runs shorter than one summary period still leave a log
    if not rows or rows[-1]["step"] != step:
        summarize()
    if out is not None:
        final = out / "final.ckpt"
        save_checkpoint(model, step, final, cfg_digest)
        (out / "training_log.csv").write_text(format_log(rows), encoding="utf-8")
    return TrainResult(model, rows, episode_rewards, episode_lengths, updates, ckpts)


def _checkpoint(model, step, out: Path, digest: str, existing: list[Path], keep: int) -> Path:
    path = out / "checkpoints" / f"step_{step:09d}.ckpt"
    save_checkpoint(model, step, path, digest)
    while len(existing) >= keep:
        old = existing.pop(0)
        old.unlink(missing_ok=True)
    return path
