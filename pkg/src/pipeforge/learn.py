"""Imitation-then-reinforcement training stack.

Tiny fully-connected networks with hand-written reverse-mode gradients
(numpy only), behavioral cloning for warm starts, a GAIL discriminator
whose capped -log(1-D) surrogate augments the environment reward, and
PPO with generalized advantage estimation. Everything is deterministic
for a fixed seed.
"""
import csv
import json
import os
from dataclasses import dataclass, fields

import numpy as np

from .errors import ProtocolError

# ---------------------------------------------------------------------------
# multilayer perceptrons, by hand
# ---------------------------------------------------------------------------

_ACTIVATIONS = ("tanh", "relu", "none")


@dataclass
class MlpParams:
    """Affine layers with one activation tag; the last layer is linear."""

    weights: list  # of (fan_in, fan_out) arrays
    biases: list  # of (fan_out,) arrays
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up")
        if not self.weights:
            raise ValueError("need at least one layer")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {k}: input dim breaks the chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k}: non-finite parameters")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


def mlp_init(sizes, rng, activation: str = "tanh", final_scale: float = 1.0) -> MlpParams:
    """He-style random init; `final_scale` shrinks the output layer."""
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        fan_in = sizes[k]
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (sizes[k], sizes[k + 1]))
        if k == len(sizes) - 2:
            w *= final_scale
        weights.append(w)
        biases.append(np.zeros(sizes[k + 1]))
    return MlpParams(weights, biases, activation)


def _activate(z, tag):
    if tag == "tanh":
        return np.tanh(z)
    if tag == "relu":
        return np.maximum(z, 0.0)
    return z


def _activate_grad(a, z, tag):
    if tag == "tanh":
        return 1.0 - a**2
    if tag == "relu":
        return (z > 0.0).astype(z.dtype)
    return np.ones_like(z)


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != params.in_dim:
        raise ValueError(f"input dim {h.shape[1]} != first layer dim {params.in_dim}")
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k != last:
            h = _activate(h, params.activation)
    return h[0] if squeeze else h


def mlp_backward(params: MlpParams, x, output_grad):
    """Exact gradients of sum(output * output_grad) w.r.t. all parameters.

    Returns (weight_grads, bias_grads, input_grad).
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != params.in_dim:
        raise ValueError(f"input dim {h.shape[1]} != first layer dim {params.in_dim}")
    g = np.asarray(output_grad, dtype=np.float64)
    g = g[None, :] if squeeze else g
    if g.shape != (h.shape[0], params.out_dim):
        raise ValueError(f"output_grad shape {g.shape} does not match the net")

    last = len(params.weights) - 1
    pre, post = [], [h]
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = post[-1] @ w + b
        pre.append(z)
        post.append(_activate(z, params.activation) if k != last else z)

    wg = [None] * len(params.weights)
    bg = [None] * len(params.biases)
    for k in range(last, -1, -1):
        if k != last:
            g = g * _activate_grad(post[k + 1], pre[k], params.activation)
        wg[k] = post[k].T @ g
        bg[k] = g.sum(axis=0)
        g = g @ params.weights[k].T
    return wg, bg, (g[0] if squeeze else g)


class Adam:
    """Standard Adam over a flat list of parameter arrays (updates in place)."""

    def __init__(self, shapes, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, params, grads, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def _mlp_param_list(net: MlpParams) -> list:
    return list(net.weights) + list(net.biases)


def _mlp_grad_list(wg, bg) -> list:
    return list(wg) + list(bg)


# ---------------------------------------------------------------------------
# policy and discriminator
# ---------------------------------------------------------------------------

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class PolicyParams:
    mean: MlpParams
    log_std: np.ndarray
    value: MlpParams

    def __post_init__(self):
        self.log_std = np.clip(np.asarray(self.log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
        if self.log_std.shape != (self.mean.out_dim,):
            raise ValueError("log_std must match the action dimension")

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.mean.copy(), self.log_std.copy(), self.value.copy())


def policy_init(obs_dim: int, rng, hidden: int = 256, action_dim: int = 3) -> PolicyParams:
    # Exploration std starts well below 1 N: the insertion clearance is ~1 cm,
    # and unit-variance force noise random-walks the tip several cm per
    # approach, so no stochastic rollout would ever succeed.
    return PolicyParams(
        mean=mlp_init((obs_dim, hidden, action_dim), rng, final_scale=0.01),
        log_std=np.full(action_dim, -1.0),
        value=mlp_init((obs_dim, hidden, 1), rng),
    )


def policy_act(policy: PolicyParams, obs, rng=None):
    """Sample an action (or return the mean when rng is None).

    Returns (action, log_prob, value).
    """
    mean = mlp_forward(policy.mean, obs)
    value = float(mlp_forward(policy.value, obs)[0])
    if rng is None:
        action = mean
    else:
        action = mean + np.exp(policy.log_std) * rng.standard_normal(mean.shape)
    return action, float(_gauss_logp(action, mean, policy.log_std)), value


def _gauss_logp(actions, means, log_std):
    std = np.exp(log_std)
    z = (actions - means) / std
    return (-0.5 * z**2 - log_std - _HALF_LOG_2PI).sum(axis=-1)


def policy_entropy(log_std) -> float:
    return float((log_std + _HALF_LOG_2PI + 0.5).sum())


@dataclass
class DiscriminatorParams:
    net: MlpParams

    def copy(self) -> "DiscriminatorParams":
        return DiscriminatorParams(self.net.copy())


def discriminator_init(obs_dim: int, rng, hidden: int = 256, action_dim: int = 3) -> DiscriminatorParams:
    return DiscriminatorParams(mlp_init((obs_dim + action_dim, hidden, hidden, 1), rng))


def discriminator_logits(disc: DiscriminatorParams, obs, actions) -> np.ndarray:
    x = np.concatenate([np.atleast_2d(obs), np.atleast_2d(actions)], axis=1)
    return mlp_forward(disc.net, x)[:, 0]


def discriminator_prob(disc: DiscriminatorParams, obs, actions) -> np.ndarray:
    """D(s, a) strictly inside (0, 1)."""
    z = np.clip(discriminator_logits(disc, obs, actions), -30.0, 30.0)
    return 1.0 / (1.0 + np.exp(-z))


def gail_reward(disc: DiscriminatorParams, obs, actions, strength: float = 0.01,
                cap: float = 10.0) -> np.ndarray:
    """strength * min(-log(1 - D), cap); -log(1-sigmoid(z)) == softplus(z)."""
    z = np.clip(discriminator_logits(disc, obs, actions), -30.0, 30.0)
    surrogate = np.where(z > 0.0, z + np.log1p(np.exp(-z)), np.log1p(np.exp(z)))
    return strength * np.minimum(surrogate, cap)


# ---------------------------------------------------------------------------
# training hyperparameters
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int = 128
    buffer_size: int = 2048
    learning_rate: float = 3e-4
    epochs: int = 3
    gae_lambda: float = 0.95
    gamma: float = 0.99
    extrinsic_strength: float = 1.0
    gail_strength: float = 0.01
    gail_gamma: float = 0.99
    bc_strength: float = 1.0
    bc_steps: int = 10_000
    total_steps: int = 5_000_000
    max_episode_steps: int = 10_000
    summary_every: int = 12_000
    checkpoints_kept: int = 5
    ppo_clip: float = 0.2
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    hidden_units: int = 256
    seed: int = 0
    train_condition: str = "cond1"

    def __post_init__(self):
        for name in ("batch_size", "buffer_size", "epochs", "total_steps",
                     "max_episode_steps", "summary_every", "checkpoints_kept",
                     "hidden_units"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.buffer_size < self.batch_size:
            raise ValueError("buffer_size must be >= batch_size")
        if self.bc_steps < 0:
            raise ValueError("bc_steps must be >= 0")
        if not 0.0 <= self.ppo_clip < 1.0:
            raise ValueError("ppo_clip must be in [0, 1)")
        for name in ("gae_lambda", "gamma", "gail_gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in mapping.items() if k in names})


def linear_lr(config: TrainConfig, global_step: int) -> float:
    """Learning rate decayed linearly, hitting exactly 0 at total_steps."""
    frac = 1.0 - min(global_step, config.total_steps) / config.total_steps
    return config.learning_rate * frac


# ---------------------------------------------------------------------------
# update rules
# ---------------------------------------------------------------------------

def bc_update(policy: PolicyParams, obs_batch, act_batch, lr: float,
              strength: float = 1.0, opt: Adam | None = None):
    """One step on strength * MSE(policy mean, expert action).

    Plain gradient descent unless an Adam instance is supplied. Returns
    the (mutated in place) policy and the pre-step loss.
    """
    obs = np.atleast_2d(np.asarray(obs_batch, dtype=np.float64))
    act = np.atleast_2d(np.asarray(act_batch, dtype=np.float64))
    if len(obs) == 0:
        raise ValueError("empty behavioral-cloning batch")
    if obs.shape[1] != policy.mean.in_dim:
        raise ValueError(
            f"observation dim {obs.shape[1]} does not match the policy ({policy.mean.in_dim})"
        )
    pred = mlp_forward(policy.mean, obs)
    err = pred - act
    loss = strength * float((err**2).mean())
    # d loss / d pred, including the 1/(B*A) of the mean
    gout = strength * 2.0 * err / err.size
    wg, bg, _ = mlp_backward(policy.mean, obs, gout)
    params = _mlp_param_list(policy.mean)
    grads = _mlp_grad_list(wg, bg)
    if opt is None:
        for p, g in zip(params, grads):
            p -= lr * g
    else:
        opt.step(params, grads, lr)
    return policy, loss


def gail_discriminator_update(disc: DiscriminatorParams, expert_obs, expert_act,
                              policy_obs, policy_act_batch, lr: float,
                              opt: Adam | None = None):
    """One binary-cross-entropy step: expert labeled 1, policy labeled 0."""
    eo = np.atleast_2d(np.asarray(expert_obs, dtype=np.float64))
    ea = np.atleast_2d(np.asarray(expert_act, dtype=np.float64))
    po = np.atleast_2d(np.asarray(policy_obs, dtype=np.float64))
    pa = np.atleast_2d(np.asarray(policy_act_batch, dtype=np.float64))
    if len(eo) == 0 or len(po) == 0:
        raise ValueError("discriminator batches must be nonempty")
    if eo.shape[1] != po.shape[1]:
        raise ValueError("expert and policy observation dims differ")

    x = np.concatenate(
        [np.concatenate([eo, ea], axis=1), np.concatenate([po, pa], axis=1)]
    )
    z = mlp_forward(disc.net, x)[:, 0]
    zc = np.clip(z, -30.0, 30.0)
    d = 1.0 / (1.0 + np.exp(-zc))
    ne, npol = len(eo), len(po)
    labels = np.concatenate([np.ones(ne), np.zeros(npol)])
    # mean BCE over both halves; dL/dz = (D - label) / n_half
    loss = float(
        -(np.log(d[:ne] + 1e-12).mean() + np.log(1.0 - d[ne:] + 1e-12).mean()) / 2.0
    )
    gz = (d - labels) / np.where(labels == 1.0, 2.0 * ne, 2.0 * npol)
    wg, bg, _ = mlp_backward(disc.net, x, gz[:, None])
    params = _mlp_param_list(disc.net)
    grads = _mlp_grad_list(wg, bg)
    if opt is None:
        for p, g in zip(params, grads):
            p -= lr * g
    else:
        opt.step(params, grads, lr)
    return disc, loss


def gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0):
    """Generalized advantage estimation with episode-boundary resets.

    All sequences share one length; `last_value` bootstraps the state after
    the final entry (0 when it closed an episode). Returns
    (advantages, returns).
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=bool)
    if not (len(r) == len(v) == len(d)):
        raise ValueError("rewards, values and dones must have equal length")
    adv = np.zeros(len(r))
    carry = 0.0
    next_value = last_value
    for t in range(len(r) - 1, -1, -1):
        live = 0.0 if d[t] else 1.0
        delta = r[t] + gamma * next_value * live - v[t]
        carry = delta + gamma * lam * live * carry
        adv[t] = carry
        next_value = v[t]
    return adv, adv + v


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray  # extrinsic
    gail_rewards: np.ndarray
    dones: np.ndarray
    last_value: float = 0.0

    def __len__(self):
        return len(self.obs)


def ppo_update(policy: PolicyParams, buffer: RolloutBuffer, config, lr: float | None = None,
               rng=None):
    """Clipped-surrogate PPO pass over the buffer (mutates the policy).

    Reward = extrinsic_strength * extrinsic + gail reward (already per
    sample in the buffer); advantages are normalized buffer-wide. Returns
    diagnostics (losses, entropy, mean KL-ish ratio stats).
    """
    n = len(buffer)
    if n < config.batch_size:
        raise ProtocolError(f"buffer has {n} samples, need at least {config.batch_size}")
    if lr is None:
        lr = config.learning_rate
    rng = np.random.default_rng(0) if rng is None else rng

    combined = config.extrinsic_strength * buffer.rewards + buffer.gail_rewards
    adv, returns = gae(
        combined, buffer.values, buffer.dones, config.gamma, config.gae_lambda,
        buffer.last_value,
    )
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    mean_params = _mlp_param_list(policy.mean)
    value_params = _mlp_param_list(policy.value)
    opt_mean = getattr(policy, "_opt_mean", None)
    if opt_mean is None:
        policy._opt_mean = opt_mean = Adam([p.shape for p in mean_params] + [policy.log_std.shape])
        policy._opt_value = Adam([p.shape for p in value_params])
    opt_value = policy._opt_value

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_frac": 0.0}
    passes = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n - config.batch_size + 1, config.batch_size):
            idx = order[start : start + config.batch_size]
            ob, ac = buffer.obs[idx], buffer.actions[idx]
            old_lp, a_hat, ret = buffer.log_probs[idx], adv[idx], returns[idx]

            mean = mlp_forward(policy.mean, ob)
            std = np.exp(policy.log_std)
            zs = (ac - mean) / std
            logp = (-0.5 * zs**2 - policy.log_std - _HALF_LOG_2PI).sum(axis=1)
            ratio = np.exp(logp - old_lp)
            clipped = np.clip(ratio, 1.0 - config.ppo_clip, 1.0 + config.ppo_clip)
            use_raw = ratio * a_hat <= clipped * a_hat  # min() picks the raw branch
            # surrogate gradient flows only through unclipped samples
            glogp = np.where(use_raw, -ratio * a_hat, 0.0) / config.batch_size
            # d logp / d mean = z/std ; d logp / d log_std = z^2 - 1
            gmean = glogp[:, None] * (zs / std)
            glstd = (glogp[:, None] * (zs**2 - 1.0)).sum(axis=0)
            glstd -= config.entropy_coef * np.ones_like(policy.log_std)  # d entropy/d log_std = 1
            wg, bg, _ = mlp_backward(policy.mean, ob, gmean)
            opt_mean.step(
                mean_params + [policy.log_std],
                _mlp_grad_list(wg, bg) + [glstd],
                lr,
            )
            np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX, out=policy.log_std)

            v = mlp_forward(policy.value, ob)[:, 0]
            verr = v - ret
            gv = config.value_coef * 2.0 * verr[:, None] / len(idx)
            wg, bg, _ = mlp_backward(policy.value, ob, gv)
            opt_value.step(value_params, _mlp_grad_list(wg, bg), lr)

            passes += 1
            stats["policy_loss"] += float(-(np.minimum(ratio * a_hat, clipped * a_hat)).mean())
            stats["value_loss"] += float((verr**2).mean())
            stats["entropy"] += policy_entropy(policy.log_std)
            stats["clip_frac"] += float((~use_raw).mean())
    for k in stats:
        stats[k] /= max(passes, 1)
    return policy, stats


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(policy: PolicyParams, path: str, meta: dict) -> None:
    """Write policy parameters plus a JSON metadata blob to an .npz file."""
    arrays = {"log_std": policy.log_std}
    for tag, net in (("mean", policy.mean), ("value", policy.value)):
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            arrays[f"{tag}_w{i}"] = w
            arrays[f"{tag}_b{i}"] = b
    payload = dict(meta)
    payload.setdefault("activation", policy.mean.activation)
    arrays["meta_json"] = np.array(json.dumps(payload, sort_keys=True))
    np.savez(path, **arrays)


def load_checkpoint(path: str):
    """Inverse of save_checkpoint. Returns (policy, meta)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta_json"]))
        act = meta.get("activation", "tanh")

        def net(tag):
            ws, bs, i = [], [], 0
            while f"{tag}_w{i}" in data:
                ws.append(np.array(data[f"{tag}_w{i}"]))
                bs.append(np.array(data[f"{tag}_b{i}"]))
                i += 1
            return MlpParams(ws, bs, act)

        policy = PolicyParams(net("mean"), np.array(data["log_std"]), net("value"))
    return policy, meta


# ---------------------------------------------------------------------------
# the driver: behavioral cloning, then PPO with an optional GAIL bonus
# ---------------------------------------------------------------------------

METRICS_HEADER = ("step", "cum_reward", "success_rate", "disc_expert", "disc_policy")


@dataclass
class TrainResult:
    policy: PolicyParams
    discriminator: DiscriminatorParams | None
    metrics: list  # of dict rows matching METRICS_HEADER
    final_checkpoint: str | None


def _append_metrics_row(rows, out_dir, row):
    rows.append(row)
    if out_dir is None:
        return
    path = os.path.join(out_dir, "metrics.csv")
    new = not os.path.exists(path)
    with open(path, "a", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(METRICS_HEADER)
        writer.writerow([row[k] if k == "step" else repr(row[k]) for k in METRICS_HEADER])


def train(env, config: TrainConfig, expert_data=None, out_dir=None,
          obs_mode: str = "force", config_hash: str = "", log=None) -> TrainResult:
    """Run the full training loop on one environment instance.

    expert_data: (observations, actions) arrays pooled from demonstrations,
    or None to train pure RL (no cloning phase, no discriminator).
    Checkpoints and metrics.csv land in out_dir when given; only the last
    `checkpoints_kept` periodic checkpoints are retained.
    """
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    say = log if log is not None else (lambda s: None)

    init_rng = np.random.default_rng([config.seed, 0])
    act_rng = np.random.default_rng([config.seed, 1])
    update_rng = np.random.default_rng([config.seed, 2])
    episode_seeds = np.random.default_rng([config.seed, 3])
    bc_rng = np.random.default_rng([config.seed, 4])

    obs_dim = len(env.reset(condition=config.train_condition, seed=0))
    policy = policy_init(obs_dim, init_rng, hidden=config.hidden_units)
    disc = None
    disc_opt = None
    if expert_data is not None:
        expert_obs = np.atleast_2d(np.asarray(expert_data[0], dtype=np.float64))
        expert_act = np.atleast_2d(np.asarray(expert_data[1], dtype=np.float64))
        if expert_obs.shape[1] != obs_dim:
            raise ProtocolError(
                f"demo observations are {expert_obs.shape[1]}-dimensional but the "
                f"environment emits {obs_dim}"
            )
        disc = discriminator_init(obs_dim, init_rng, hidden=config.hidden_units)
        disc_opt = Adam([p.shape for p in _mlp_param_list(disc.net)])

    meta = {"config_hash": config_hash, "obs_mode": obs_mode,
            "hidden_units": config.hidden_units, "obs_dim": obs_dim}
    global_step = 0
    rows: list = []
    kept_paths: list = []

    # ---- phase 1: behavioral cloning on the pooled demo transitions ----
    if disc is not None and config.bc_steps > 0:
        bc_opt = Adam([p.shape for p in _mlp_param_list(policy.mean)])
        n_bc = min(config.bc_steps, config.total_steps)
        for _ in range(n_bc):
            idx = bc_rng.integers(0, len(expert_obs), config.batch_size)
            _, loss = bc_update(
                policy, expert_obs[idx], expert_act[idx],
                linear_lr(config, global_step), config.bc_strength, opt=bc_opt,
            )
            global_step += 1
        say(f"cloning done at step {global_step}, final batch loss {loss:.5f}")

    # ---- phase 2: PPO ----
    obs = None
    done = True
    episode_len = 0
    episode_return = 0.0
    window: list = []  # (return, success) per episode since last summary
    last_window: tuple = (0.0, 0.0)
    disc_stats = (float("nan"), float("nan"))
    emitted = global_step // config.summary_every

    while global_step < config.total_steps:
        n = min(config.buffer_size, config.total_steps - global_step)
        n = max(n, config.batch_size)
        b_obs = np.empty((n, obs_dim))
        b_act = np.empty((n, 3))
        b_logp = np.empty(n)
        b_val = np.empty(n)
        b_rew = np.empty(n)
        b_done = np.zeros(n, dtype=bool)

        for t in range(n):
            if done:
                obs = env.reset(condition=config.train_condition,
                                seed=int(episode_seeds.integers(2**31 - 1)))
                done = False
                episode_len = 0
                episode_return = 0.0
            action, logp, value = policy_act(policy, obs, rng=act_rng)
            result = env.step(action)
            b_obs[t], b_act[t] = obs, action
            b_logp[t], b_val[t], b_rew[t] = logp, value, result.reward
            episode_return += result.reward
            episode_len += 1
            obs = result.observation
            if result.done:
                done = True
                b_done[t] = True
                window.append((episode_return, 1.0 if result.success else 0.0))
            elif episode_len >= config.max_episode_steps:
                # timeout, not failure: cut the trace but keep the value of
                # the state beyond the cut via a reward-side bootstrap
                done = True
                b_done[t] = True
                b_rew[t] += config.gamma * float(
                    mlp_forward(policy.value, result.observation)[0]
                )
                window.append((episode_return, 0.0))

        last_value = 0.0 if done else float(mlp_forward(policy.value, obs)[0])

        if disc is not None:
            b_gail = gail_reward(disc, b_obs, b_act, config.gail_strength)
        else:
            b_gail = np.zeros(n)
        buffer = RolloutBuffer(b_obs, b_act, b_logp, b_val, b_rew, b_gail,
                               b_done, last_value)
        lr = linear_lr(config, global_step)
        policy, _ = ppo_update(policy, buffer, config, lr=lr, rng=update_rng)

        if disc is not None:
            ei = update_rng.integers(0, len(expert_obs), config.batch_size)
            pi = update_rng.integers(0, n, config.batch_size)
            disc, _ = gail_discriminator_update(
                disc, expert_obs[ei], expert_act[ei], b_obs[pi], b_act[pi],
                lr, opt=disc_opt,
            )
            disc_stats = (
                float(discriminator_prob(disc, expert_obs[ei], expert_act[ei]).mean()),
                float(discriminator_prob(disc, b_obs[pi], b_act[pi]).mean()),
            )

        global_step += n

        if global_step // config.summary_every > emitted:
            emitted = global_step // config.summary_every
            if window:
                rets, succ = zip(*window)
                last_window = (float(np.mean(rets)), float(np.mean(succ)))
                window.clear()
            row = {"step": global_step, "cum_reward": last_window[0],
                   "success_rate": last_window[1],
                   "disc_expert": disc_stats[0], "disc_policy": disc_stats[1]}
            _append_metrics_row(rows, out_dir, row)
            say(f"step {global_step}: return {row['cum_reward']:.4f}, "
                f"success {row['success_rate']:.2f}")
            if out_dir is not None:
                meta_now = dict(meta, step=global_step)
                path = os.path.join(out_dir, f"checkpoint_{global_step:09d}.npz")
                save_checkpoint(policy, path, meta_now)
                kept_paths.append(path)
                while len(kept_paths) > config.checkpoints_kept:
                    stale = kept_paths.pop(0)
                    if os.path.exists(stale):
                        os.remove(stale)

    final_path = None
    if out_dir is not None:
        final_path = os.path.join(out_dir, "policy_final.npz")
        save_checkpoint(policy, final_path, dict(meta, step=global_step))
    return TrainResult(policy, disc, rows, final_path)
