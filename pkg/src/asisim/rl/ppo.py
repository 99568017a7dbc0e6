"""GAE, linear schedules and the clipped-surrogate PPO update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import PpoConfig
from .network import ActorCritic, Adam


class NonFiniteLossError(FloatingPointError):
    pass


def schedule(initial: float, step: int, max_steps: int, kind: str = "linear") -> float:
    if kind == "constant":
        return initial
    return initial * max(0.0, 1.0 - step / max_steps)


def compute_gae(rewards, values, dones, bootstrap_value: float, gamma: float = 0.99, lam: float = 0.95,
                horizon: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns for one time-ordered stream.

    When ``horizon`` is given the stream is cut every ``horizon`` steps and the
    value at each cut stands in for the rest of the trajectory.
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=float)
    if not (len(r) == len(v) == len(d)):
        raise ValueError(f"length mismatch: rewards {len(r)}, values {len(v)}, dones {len(d)}")
    T = len(r)
    adv = np.zeros(T)
    cuts = list(range(0, T, horizon)) if horizon else [0]
    for lo in cuts:
        hi = min(T, lo + horizon) if horizon else T
        nxt = bootstrap_value if hi == T else v[hi]
        last = 0.0
        for t in range(hi - 1, lo - 1, -1):
            nonterm = 1.0 - d[t]
            delta = r[t] + gamma * nxt * nonterm - v[t]
            last = delta + gamma * lam * nonterm * last
            adv[t] = last
            nxt = v[t]
    return adv, adv + v


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.obs)

    def take(self, idx) -> "Batch":
        return Batch(self.obs[idx], self.actions[idx], self.log_probs[idx], self.advantages[idx],
                     self.returns[idx], self.values[idx])


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-10)


def ppo_loss(model: ActorCritic, batch: Batch, epsilon: float, beta: float, value_coef: float = 0.5,
             with_grads: bool = True):
    """Loss to minimize: -surrogate + value_coef * clipped value loss - beta * entropy.

    Returns (loss, info, grads).
    """
    mean, log_std, value, cache = model.forward_cached(batch.obs)
    B = len(batch)
    std = np.exp(log_std)
    z = (batch.actions - mean) / std
    logp = model.log_prob(mean, log_std, batch.actions)
    ratio = np.exp(logp - batch.log_probs)
    A = batch.advantages
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon)
    unclipped_branch = ratio * A <= clipped * A
    surrogate = np.where(unclipped_branch, ratio * A, clipped * A)
    policy_loss = -surrogate.mean()

    v_clip = batch.values + np.clip(value - batch.values, -epsilon, epsilon)
    sq1 = (value - batch.returns) ** 2
    sq2 = (v_clip - batch.returns) ** 2
    use1 = sq1 >= sq2
    value_loss = np.where(use1, sq1, sq2).mean()

    entropy = model.entropy(log_std)
    loss = policy_loss + value_coef * value_loss - beta * entropy
    info = {"policy_loss": float(policy_loss), "value_loss": float(value_loss), "entropy": float(entropy),
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > epsilon))}
    if not with_grads:
        return float(loss), info, None

    # d(-surrogate)/dlogp, the clipped branch passes no gradient through the ratio
    dsurr_dratio = np.where(unclipped_branch, A, 0.0)
    dlogp = -(dsurr_dratio * ratio) / B
    dmean = dlogp[:, None] * z / std
    dlog_std = (dlogp[:, None] * (z**2 - 1.0)).sum(axis=0) - beta * np.ones_like(log_std)

    inside = np.abs(value - batch.values) < epsilon
    dvalue = np.where(use1, 2.0 * (value - batch.returns), np.where(inside, 2.0 * (v_clip - batch.returns), 0.0))
    dvalue = value_coef * dvalue / B
    grads = model.backward(cache, dmean, dlog_std, dvalue)
    return float(loss), info, grads


def ppo_update(model: ActorCritic, opt: Adam, batch: Batch, cfg: PpoConfig, global_step: int,
               rng: np.random.Generator) -> dict:
    """Three (num_epoch) passes of shuffled minibatches; modifies ``model`` in place."""
    lr = schedule(cfg.learning_rate, global_step, cfg.max_steps, cfg.learning_rate_schedule)
    eps = schedule(cfg.epsilon, global_step, cfg.max_steps, cfg.epsilon_schedule)
    beta = schedule(cfg.beta, global_step, cfg.max_steps, cfg.beta_schedule)
    batch = Batch(batch.obs, batch.actions, batch.log_probs, normalize_advantages(batch.advantages),
                  batch.returns, batch.values)
    n_mb = max(1, len(batch) // cfg.batch_size)
    stats = {"policy_loss": [], "value_loss": [], "entropy": []}
    for _ in range(cfg.num_epoch):
        perm = rng.permutation(len(batch))
        for k in range(n_mb):
            mb = batch.take(perm[k * cfg.batch_size:(k + 1) * cfg.batch_size])
            loss, info, grads = ppo_loss(model, mb, eps, beta, cfg.value_coef)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLossError(f"non-finite PPO loss at step {global_step}: {info}")
            opt.step(model.params, grads, lr)
            for key in stats:
                stats[key].append(info[key])
    if not model.all_finite():
        raise NonFiniteLossError(f"non-finite parameters after update at step {global_step}")
    out = {k: float(np.mean(v)) for k, v in stats.items()}
    out.update(lr=lr, beta=beta, epsilon=eps)
    return out
