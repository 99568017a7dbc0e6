"""Toy-room training smoke run: 200k steps, then first vs last 10% episodic reward.

    python3 scripts/train_toy.py [--seed 0] [--n-envs 4] [--out runs/toy]

Writes a manifest (including the pass margin), the training log and checkpoints.
Exit code 1 when the improvement falls short of the margin.
"""

import argparse
import sys
from pathlib import Path

from asisim.io import write_manifest
from asisim.rl.train import train
from asisim.toy import (
    TOY_LAYOUT_PATH,
    TOY_REWARD_MARGIN,
    first_last_means,
    toy_env_config,
    toy_layout,
    toy_ppo_config,
)


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-envs", type=int, default=4)
    p.add_argument("--max-steps", type=int, default=200_000)
    p.add_argument("--out", default="runs/toy")
    args = p.parse_args(argv)
    out = Path(args.out)
    ppo, env = toy_ppo_config(max_steps=args.max_steps), toy_env_config()
    write_manifest(out, "train", TOY_LAYOUT_PATH, args.seed, ppo, env,
                   {"n_envs": args.n_envs, "reward_margin": TOY_REWARD_MARGIN})
    res = train(toy_layout(), ppo, env, n_envs=args.n_envs, seed=args.seed, out_dir=out)
    first, last = first_last_means(res.episode_rewards)
    ok = last > first + TOY_REWARD_MARGIN
    print(f"{len(res.episode_rewards)} episodes, {res.updates} updates: first 10% {first:.3f}, "
          f"last 10% {last:.3f}, margin {TOY_REWARD_MARGIN} -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(run())
