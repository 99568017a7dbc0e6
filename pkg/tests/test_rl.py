import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asisim.config import PpoConfig
from asisim.env import OBS_DIM
from asisim.rl.checkpoint import (
    CheckpointVersionError,
    CorruptCheckpointError,
    ObsDimMismatchError,
    decode,
    encode,
    load_checkpoint,
    save_checkpoint,
)
from asisim.rl.network import ActorCritic, Adam
from asisim.rl.normalizer import RunningNorm
from asisim.rl.ppo import (
    Batch,
    NonFiniteLossError,
    compute_gae,
    normalize_advantages,
    ppo_loss,
    ppo_update,
    schedule,
)
from asisim.rl.train import LOG_FIELDS, format_log, parse_log, train
from asisim.toy import toy_env_config, toy_ppo_config
from oracles import discounted_returns


# -- normalizer ----------------------------------------------------------------

def test_first_observation_normalizes_to_zero():
    n = RunningNorm(5)
    x = np.array([[3.0, -1.0, 0.0, 7.0, 2.5]])
    np.testing.assert_allclose(n.normalize(x, update=True), 0.0, atol=1e-12)


def test_constant_stream_goes_to_zero():
    n = RunningNorm(3)
    for _ in range(50):
        out = n.normalize(np.full((4, 3), 2.0), update=True)
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 40), min_size=1, max_size=8))
def test_moments_match_two_pass(seed, sizes):
    rng = np.random.default_rng(seed)
    n = RunningNorm(4)
    chunks = [rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 10), (k, 4)) for k in sizes]
    for c in chunks:
        n.update(c)
    allx = np.vstack(chunks)
    mean = sum(allx) / len(allx)
    var = sum((allx - mean) ** 2) / len(allx)
    np.testing.assert_allclose(n.mean, mean, atol=1e-10, rtol=0)
    np.testing.assert_allclose(n.var, var, atol=1e-10, rtol=1e-10)
    assert n.count == len(allx)


def test_normalize_clips_and_freezes():
    n = RunningNorm(1)
    n.update(np.array([[0.0], [1.0]]))
    before = n.state()
    out = n.normalize(np.array([[1e6]]), update=False)
    assert out[0, 0] == 5.0
    assert n.count == before["count"]


# -- network ------------------------------------------------------------------

def test_zero_network():
    m = ActorCritic(OBS_DIM)
    for k in m.params:
        m.params[k][...] = 0.0
    mean, log_std, v = m.forward(np.random.default_rng(0).normal(size=(3, OBS_DIM)))
    assert np.all(mean == 0) and np.all(v == 0) and np.all(log_std == 0)


def test_forward_is_deterministic():
    m = ActorCritic(OBS_DIM, rng=np.random.default_rng(4))
    x = np.random.default_rng(1).normal(size=(2, OBS_DIM))
    a = m.forward(x)
    b = m.forward(x.copy())
    for u, w in zip(a, b):
        np.testing.assert_array_equal(u, w)


def _value_oracle(params, x, layers):
    """Independent scalar loop implementation of the value trunk."""
    out = []
    for row in x:
        h = list(row)
        for i in range(layers):
            W, b = params[f"v.W{i}"], params[f"v.b{i}"]
            h = [math.tanh(sum(h[r] * W[r, c] for r in range(len(h))) + b[c]) for c in range(W.shape[1])]
        W, b = params["v.Wout"], params["v.bout"]
        out.append(sum(h[r] * W[r, 0] for r in range(len(h))) + b[0])
    return np.array(out)


def test_value_head_matches_oracle():
    rng = np.random.default_rng(9)
    m = ActorCritic(OBS_DIM, hidden=16, rng=rng)
    for k in m.params:
        m.params[k] = rng.normal(scale=0.5, size=m.params[k].shape)
    x = rng.normal(size=(5, OBS_DIM))
    np.testing.assert_allclose(m.value(x), _value_oracle(m.params, x, 2), rtol=0, atol=1e-12)


def test_layer_shapes():
    m = ActorCritic(OBS_DIM)
    assert m.params["pi.W0"].shape == (39, 128) and m.params["pi.W1"].shape == (128, 128)
    assert m.params["v.W0"].shape == (39, 128) and m.params["v.Wout"].shape == (128, 1)
    assert m.params["pi.Wout"].shape == (128, 2)
    np.testing.assert_array_equal(m.params["log_std"], 0.0)


# -- GAE ----------------------------------------------------------------------

def test_gae_single_terminal_step():
    adv, ret = compute_gae([2.0], [0.5], [1.0], 99.0)
    assert adv[0] == 1.5 and ret[0] == 2.0


def test_gae_lambda_zero_is_td_error():
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=10), rng.normal(size=10)
    d = np.zeros(10)
    adv, _ = compute_gae(r, v, d, 0.7, gamma=0.9, lam=0.0)
    nxt = np.append(v[1:], 0.7)
    np.testing.assert_allclose(adv, r + 0.9 * nxt - v, rtol=0, atol=1e-15)


def test_gae_gamma_zero():
    rng = np.random.default_rng(1)
    r, v = rng.normal(size=8), rng.normal(size=8)
    adv, _ = compute_gae(r, v, np.zeros(8), 3.0, gamma=0.0, lam=0.95)
    np.testing.assert_array_equal(adv, r - v)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
def test_gae_lambda_one_matches_monte_carlo(seed, T):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=T), rng.normal(size=T)
    dones = (rng.random(T) < 0.2).astype(float)
    boot = float(rng.normal())
    adv, ret = compute_gae(r, v, dones, boot, gamma=0.99, lam=1.0)
    mc = discounted_returns(r, dones, boot, 0.99)
    np.testing.assert_allclose(adv, mc - v, rtol=0, atol=1e-9)
    np.testing.assert_allclose(ret, mc, rtol=0, atol=1e-9)


def test_gae_horizon_bootstraps_at_cuts():
    rng = np.random.default_rng(2)
    r, v = rng.normal(size=10), rng.normal(size=10)
    adv, _ = compute_gae(r, v, np.zeros(10), 0.3, gamma=0.99, lam=1.0, horizon=4)
    # first segment [0, 4) bootstraps from v[4]
    mc = discounted_returns(r[:4], np.zeros(4), v[4], 0.99)
    np.testing.assert_allclose(adv[:4], mc - v[:4], atol=1e-12)
    mc = discounted_returns(r[8:], np.zeros(2), 0.3, 0.99)
    np.testing.assert_allclose(adv[8:], mc - v[8:], atol=1e-12)


def test_gae_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        compute_gae([1, 2], [1], [0, 0], 0.0)


# -- PPO loss ---------------------------------------------------------------------

def _tiny(seed=0, obs=4, hidden=3, B=6):
    rng = np.random.default_rng(seed)
    m = ActorCritic(obs, 2, hidden, 2, rng)
    for k in m.params:
        m.params[k] = rng.normal(scale=0.7, size=m.params[k].shape)
    x = rng.normal(size=(B, obs))
    mean, log_std, v = m.forward(x)
    acts = mean + rng.normal(scale=0.8, size=mean.shape)
    old = m.log_prob(mean, log_std, acts) + rng.normal(scale=0.3, size=B)
    batch = Batch(x, acts, old, rng.normal(size=B), v + rng.normal(size=B), v + rng.normal(scale=0.1, size=B))
    return m, batch


def finite_difference_check(m, batch, eps=0.2, beta=0.01, h=1e-6):
    _, _, grads = ppo_loss(m, batch, eps, beta)
    worst = 0.0
    for k, p in m.params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            lp, _, _ = ppo_loss(m, batch, eps, beta, with_grads=False)
            p[idx] = old - h
            lm, _, _ = ppo_loss(m, batch, eps, beta, with_grads=False)
            p[idx] = old
            num = (lp - lm) / (2 * h)
            ana = grads[k][idx]
            worst = max(worst, abs(num - ana) / max(abs(num) + abs(ana), 1e-8))
    return worst


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_finite_differences(seed):
    m, batch = _tiny(seed)
    assert finite_difference_check(m, batch) < 1e-4


def test_ratio_one_gives_vanilla_policy_gradient():
    m, batch = _tiny(3)
    mean, log_std, _ = m.forward(batch.obs)
    batch.log_probs = m.log_prob(mean, log_std, batch.actions)
    _, _, g = ppo_loss(m, batch, 0.2, 0.0)
    # vanilla: -mean(A * dlogp/dmean), pushed through the network with the same backward pass
    std = np.exp(log_std)
    dmean = -(batch.advantages[:, None] * (batch.actions - mean) / std**2) / len(batch)
    _, _, _, cache = m.forward_cached(batch.obs)
    ref = m.backward(cache, dmean, np.zeros(2), np.zeros(len(batch)))
    for k in ("pi.W0", "pi.W1", "pi.Wout", "pi.bout"):
        np.testing.assert_allclose(g[k], ref[k], rtol=1e-10, atol=1e-12)


def test_clipped_branch_has_zero_ratio_gradient():
    m, batch = _tiny(4, B=1)
    mean, log_std, _ = m.forward(batch.obs)
    batch.log_probs = m.log_prob(mean, log_std, batch.actions) - math.log(1.5)  # ratio 1.5
    batch.advantages = np.array([1.0])
    _, info, g = ppo_loss(m, batch, 0.2, 0.0)
    assert info["clip_fraction"] == 1.0
    for k in ("pi.W0", "pi.Wout", "pi.bout"):
        np.testing.assert_array_equal(g[k], 0.0)


@given(st.integers(0, 2**32 - 1), st.integers(2, 500))
def test_advantage_normalization(seed, n):
    rng = np.random.default_rng(seed)
    a = normalize_advantages(rng.normal(rng.uniform(-100, 100), rng.uniform(0.01, 100), n))
    assert abs(a.mean()) < 1e-6
    assert abs(a.std() - 1.0) < 1e-6


def test_schedule_points():
    assert schedule(3e-4, 0, 5_000_000) == 3e-4
    assert schedule(3e-4, 2_500_000, 5_000_000) == 1.5e-4
    assert schedule(3e-4, 5_000_000, 5_000_000) == 0.0
    assert schedule(0.2, 7_000_000, 5_000_000) == 0.0
    assert schedule(0.2, 7_000_000, 5_000_000, "constant") == 0.2


def test_update_keeps_parameters_finite():
    rng = np.random.default_rng(0)
    m = ActorCritic(OBS_DIM, hidden=16, rng=rng)
    n = 256
    x = rng.normal(size=(n, OBS_DIM))
    mean, log_std, v = m.forward(x)
    acts = mean + rng.normal(size=mean.shape)
    batch = Batch(x, acts, m.log_prob(mean, log_std, acts), rng.normal(size=n), v + rng.normal(size=n), v)
    cfg = PpoConfig(batch_size=64, buffer_size=256, max_steps=1000)
    stats = ppo_update(m, Adam(m.params), batch, cfg, 500, rng)
    assert m.all_finite() and math.isfinite(stats["entropy"])
    assert stats["lr"] == pytest.approx(1.5e-4) and stats["epsilon"] == pytest.approx(0.1)


def test_non_finite_loss_aborts():
    rng = np.random.default_rng(0)
    m = ActorCritic(OBS_DIM, hidden=8, rng=rng)
    n = 64
    x = rng.normal(size=(n, OBS_DIM))
    batch = Batch(x, np.zeros((n, 2)), np.zeros(n), rng.normal(size=n), np.full(n, np.nan), np.zeros(n))
    cfg = PpoConfig(batch_size=64, buffer_size=64, max_steps=1000)
    before = {k: v.copy() for k, v in m.params.items()}
    with pytest.raises(NonFiniteLossError, match="non-finite"):
        ppo_update(m, Adam(m.params), batch, cfg, 0, rng)
    for k in before:
        np.testing.assert_array_equal(m.params[k], before[k])


# -- checkpoints -----------------------------------------------------------------------

def _model():
    m = ActorCritic(OBS_DIM, hidden=32, rng=np.random.default_rng(5))
    m.normalizer.update(np.random.default_rng(6).normal(size=(10, OBS_DIM)))
    return m


def test_checkpoint_round_trip(tmp_path):
    m = _model()
    path = tmp_path / "a.ckpt"
    save_checkpoint(m, 1234, path, "ab" * 32)
    ck = load_checkpoint(path, expected_obs_dim=OBS_DIM)
    assert ck.step == 1234 and ck.cfg_hash == "ab" * 32
    for k in m.params:
        np.testing.assert_array_equal(ck.model.params[k], m.params[k])
    for k, v in m.normalizer.state().items():
        np.testing.assert_array_equal(ck.model.normalizer.state()[k], v)
    assert encode(ck.model, 1234, "ab" * 32) == path.read_bytes()


def test_truncated_checkpoint(tmp_path):
    data = encode(_model(), 1)
    for cut in (10, len(data) // 2, len(data) - 1):
        with pytest.raises(CorruptCheckpointError):
            decode(data[:cut])


def test_flipped_byte_detected():
    data = bytearray(encode(_model(), 1))
    data[200] ^= 0xFF
    with pytest.raises(CorruptCheckpointError):
        decode(bytes(data))


def test_version_mismatch():
    data = bytearray(encode(_model(), 1))
    struct.pack_into("<I", data, 8, 99)
    with pytest.raises(CheckpointVersionError):
        decode(bytes(data))


def test_obs_dim_gate():
    data = encode(_model(), 1)
    assert decode(data, expected_obs_dim=39).model.obs_dim == 39
    with pytest.raises(ObsDimMismatchError, match="39"):
        decode(data, expected_obs_dim=41)


# -- training loop ------------------------------------------------------------------------

def test_log_round_trip():
    rows = [{"step": 5, **{k: 0.1 * i for i, k in enumerate(LOG_FIELDS[1:])}},
            {"step": 9, **{k: -1.0 / 3 for k in LOG_FIELDS[1:]}}]
    assert parse_log(format_log(rows)) == rows


def test_cadence_one_update(toy):
    cfg = PpoConfig(max_steps=20480)
    res = train(toy, cfg, toy_env_config(), n_envs=4, seed=0)
    assert res.updates == 1
    assert len(res.log_rows) <= 1
    assert res.model.all_finite()


def test_same_seed_same_log(toy, tmp_path):
    cfg = toy_ppo_config(max_steps=4096, buffer_size=2048, batch_size=512, summary_frequency=1024)
    a = train(toy, cfg, toy_env_config(), n_envs=2, seed=3, out_dir=tmp_path / "a")
    train(toy, cfg, toy_env_config(), n_envs=2, seed=3, out_dir=tmp_path / "b")
    c = train(toy, cfg, toy_env_config(), n_envs=2, seed=4)
    assert (tmp_path / "a" / "training_log.csv").read_bytes() == (tmp_path / "b" / "training_log.csv").read_bytes()
    assert (tmp_path / "a" / "final.ckpt").read_bytes() == (tmp_path / "b" / "final.ckpt").read_bytes()
    assert format_log(a.log_rows) != format_log(c.log_rows)
    assert len(a.log_rows) == 4 and a.updates == 2


def test_checkpoint_retention(toy, tmp_path):
    cfg = toy_ppo_config(max_steps=4096, buffer_size=1024, batch_size=512, summary_frequency=512,
                         keep_checkpoints=3)
    res = train(toy, cfg, toy_env_config(), n_envs=1, seed=0, out_dir=tmp_path)
    kept = sorted((tmp_path / "checkpoints").glob("*.ckpt"))
    assert len(kept) == 3 and kept == sorted(res.checkpoints)
    assert load_checkpoint(kept[-1]).step == 4096
