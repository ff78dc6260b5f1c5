"""Clipped policy-gradient learner (PPO-style) for the pendulum.

The policy is a Gaussian with a tanh-MLP mean and a state-independent log-std;
the critic is a separate MLP. Observations optionally carry the scaled safety
state ``z / z_normalizer`` as a last feature.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from simmer import saute
from simmer.envs import PendulumSpec, pendulum_dynamics, pendulum_observation, pendulum_reset
from simmer.learners.mlp import Adam, clip_grad_norm, init_mlp, mlp_backward, mlp_forward

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
LOG_2PI = math.log(2.0 * math.pi)


class NonFiniteLossError(FloatingPointError):
    """Raised when a policy-gradient loss or gradient stops being finite."""


@dataclass
class PPOConfig:
    hidden: tuple[int, ...] = (64, 64)
    lr: float = 1e-3
    vf_lr: float = 1e-3
    gamma_r: float = 0.95
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    train_epochs: int = 10
    minibatch_size: int = 500
    vf_coef: float = 1.0
    ent_coef: float = 0.0
    max_grad_norm: float = 0.5
    init_log_std: float = 0.0
    normalize_advantages: bool = True


@dataclass
class PolicyParams:
    pi: list[np.ndarray]
    log_std: np.ndarray
    vf: list[np.ndarray]

    @classmethod
    def init(cls, obs_dim, act_dim, hidden, rng, init_log_std=0.0):
        sizes = (obs_dim, *hidden, act_dim)
        return cls(
            pi=init_mlp(sizes, rng, out_scale=0.01),
            log_std=np.full(act_dim, float(init_log_std)),
            vf=init_mlp((obs_dim, *hidden, 1), rng, out_scale=1.0),
        )

    @property
    def obs_dim(self):
        return self.pi[0].shape[0]

    def copy(self):
        return copy.deepcopy(self)

    def flat(self):
        return np.concatenate([p.ravel() for p in (*self.pi, self.log_std, *self.vf)])

    def mean(self, obs):
        return mlp_forward(self.pi, obs)[0]

    def value(self, obs):
        return mlp_forward(self.vf, obs)[0][..., 0]

    def is_finite(self):
        return bool(np.all(np.isfinite(self.flat())))


def gaussian_log_prob(mean, log_std, actions):
    std = np.exp(log_std)
    zs = (actions - mean) / std
    return -0.5 * np.sum(zs**2, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI


@dataclass
class EpochBatch:
    """On-policy data of one epoch; arrays are ``(n_traj, T, ...)``."""

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray  # raw environment reward
    shaped_rewards: np.ndarray  # after -Delta reshaping (== rewards when inactive)
    costs: np.ndarray
    z: np.ndarray  # (n_traj, T + 1), z[:, 0] == budget
    budget: float
    gamma_r: float
    gamma_l: float

    @property
    def n_traj(self):
        return self.rewards.shape[0]

    @property
    def horizon(self):
        return self.rewards.shape[1]

    @property
    def disc_return(self):
        return saute.discounted_cost(self.rewards, self.gamma_r)

    @property
    def disc_cost(self):
        return saute.discounted_cost(self.costs, self.gamma_l)


def make_observation(theta, theta_dot, z, augment, z_normalizer):
    obs = pendulum_observation(theta, theta_dot)
    if augment:
        obs = np.concatenate([obs, (np.asarray(z) / z_normalizer)[..., None]], axis=-1)
    return obs


def collect(
    policy: PolicyParams,
    spec: PendulumSpec,
    augment: bool,
    d_k: float,
    n_traj: int,
    rng: np.random.Generator,
    saute_cfg: saute.SauteConfig,
    gamma_r: float = 0.95,
    z_normalizer: float = 1.0,
    deterministic: bool = False,
) -> EpochBatch:
    """Roll out ``n_traj`` pendulum episodes in lockstep.

    Every episode starts with ``z = d_k`` and runs the full horizon. Reward
    reshaping is applied only when the state is augmented and the constraint
    mode is probability-one.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    T = spec.horizon
    penalty = saute_cfg.delta_penalty if saute_cfg.delta_penalty is not None else T
    reshape = augment and saute_cfg.mode == saute.PROB_ONE
    theta, theta_dot = pendulum_reset(spec, rng, n_traj)
    z = np.full(n_traj, float(d_k))
    obs_dim = policy.obs_dim
    act_dim = policy.log_std.shape[0]

    obs_buf = np.empty((n_traj, T, obs_dim))
    act_buf = np.empty((n_traj, T, act_dim))
    logp_buf = np.empty((n_traj, T))
    rew_buf = np.empty((n_traj, T))
    shaped_buf = np.empty((n_traj, T))
    cost_buf = np.empty((n_traj, T))
    z_buf = np.empty((n_traj, T + 1))
    z_buf[:, 0] = z
    std = np.exp(policy.log_std)
    for t in range(T):
        obs = make_observation(theta, theta_dot, z, augment, z_normalizer)
        mean = policy.mean(obs)
        if deterministic:
            act = mean
        else:
            act = mean + std * rng.standard_normal(mean.shape)
        logp_buf[:, t] = gaussian_log_prob(mean, policy.log_std, act)
        theta, theta_dot, r, c = pendulum_dynamics(theta, theta_dot, act[:, 0], spec)
        obs_buf[:, t] = obs
        act_buf[:, t] = act
        rew_buf[:, t] = r
        shaped_buf[:, t] = saute.reshape_reward(r, z, penalty) if reshape else r
        cost_buf[:, t] = c
        z = saute.z_step(z, c, saute_cfg.gamma_l)
        z_buf[:, t + 1] = z
    return EpochBatch(
        obs=obs_buf,
        actions=act_buf,
        logp=logp_buf,
        rewards=rew_buf,
        shaped_rewards=shaped_buf,
        costs=cost_buf,
        z=z_buf,
        budget=float(d_k),
        gamma_r=gamma_r,
        gamma_l=saute_cfg.gamma_l,
    )


def gae(rewards, values, gamma, lam):
    """GAE over ``(n, T)`` arrays; episodes end at ``T`` with zero bootstrap."""
    n, T = rewards.shape
    adv = np.zeros((n, T))
    last = np.zeros(n)
    for t in reversed(range(T)):
        next_v = values[:, t + 1] if t + 1 < T else 0.0
        delta = rewards[:, t] + gamma * next_v - values[:, t]
        last = delta + gamma * lam * last
        adv[:, t] = last
    return adv, adv + values


def surrogate_and_grad(pi_params, log_std, obs, actions, logp_old, adv, clip_ratio):
    """Mean clipped surrogate objective and its gradient.

    Returns ``(objective, grads)`` where ``grads`` lists the gradients for every
    array of ``pi_params`` followed by the gradient for ``log_std``.
    """
    mean, acts = mlp_forward(pi_params, obs)
    std = np.exp(log_std)
    diff = actions - mean
    logp = -0.5 * np.sum((diff / std) ** 2, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    unclipped_term = ratio * adv
    obj_terms = np.minimum(unclipped_term, clipped * adv)
    n = obs.shape[0]
    objective = float(np.mean(obj_terms))
    # d obj / d logp is ratio * adv where the unclipped branch is the active minimum
    active = unclipped_term <= clipped * adv
    coef = np.where(active, ratio * adv, 0.0) / n
    d_mean = coef[:, None] * diff / std**2
    d_log_std = np.sum(coef[:, None] * ((diff / std) ** 2 - 1.0), axis=0)
    grads = mlp_backward(pi_params, acts, d_mean)
    return objective, [*grads, d_log_std]


def value_loss_and_grad(vf_params, obs, returns):
    v, acts = mlp_forward(vf_params, obs)
    err = v[:, 0] - returns
    loss = float(np.mean(err**2))
    grads = mlp_backward(vf_params, acts, (2.0 * err / obs.shape[0])[:, None])
    return loss, grads


def ppo_loss_and_grad(policy: PolicyParams, obs, actions, logp_old, adv, returns, cfg: PPOConfig):
    """Total loss to minimise plus gradients for ``(pi + log_std)`` and ``vf``."""
    obj, g_pi = surrogate_and_grad(policy.pi, policy.log_std, obs, actions, logp_old, adv, cfg.clip_ratio)
    entropy = float(np.sum(policy.log_std) + 0.5 * policy.log_std.shape[0] * (1.0 + LOG_2PI))
    g_pi = [-g for g in g_pi]
    if cfg.ent_coef:
        g_pi[-1] = g_pi[-1] - cfg.ent_coef * np.ones_like(policy.log_std)
    vf_loss, g_vf = value_loss_and_grad(policy.vf, obs, returns)
    g_vf = [cfg.vf_coef * g for g in g_vf]
    loss = -obj - cfg.ent_coef * entropy + cfg.vf_coef * vf_loss
    return loss, g_pi, g_vf, {"surrogate": obj, "vf_loss": vf_loss, "entropy": entropy}


class PPOOptimizer:
    """Adam state for the actor and critic, kept across epochs."""

    def __init__(self, policy: PolicyParams, cfg: PPOConfig):
        self.pi = Adam([*policy.pi, policy.log_std], lr=cfg.lr)
        self.vf = Adam(policy.vf, lr=cfg.vf_lr)


def flatten_batch(policy: PolicyParams, batch: EpochBatch, cfg: PPOConfig, rewards=None):
    """Flatten an epoch batch into training arrays with GAE advantages.

    ``rewards`` overrides the learning signal (defaults to the shaped rewards).
    """
    rewards = batch.shaped_rewards if rewards is None else rewards
    n, T = rewards.shape
    values = policy.value(batch.obs.reshape(n * T, -1)).reshape(n, T)
    adv, ret = gae(rewards, values, cfg.gamma_r, cfg.gae_lambda)
    return (
        batch.obs.reshape(n * T, -1),
        batch.actions.reshape(n * T, -1),
        batch.logp.reshape(n * T),
        adv.reshape(n * T),
        ret.reshape(n * T),
    )


def pg_update(
    policy: PolicyParams,
    batch: EpochBatch,
    cfg: PPOConfig,
    rng: np.random.Generator,
    optimizer: PPOOptimizer | None = None,
    rewards=None,
) -> tuple[PolicyParams, dict]:
    """Several epochs of minibatch clipped-surrogate ascent on one batch.

    Returns a new :class:`PolicyParams`; the input is not modified.
    Raises :class:`NonFiniteLossError` if the loss or gradients blow up.
    """
    policy = policy.copy()
    if optimizer is None:
        optimizer = PPOOptimizer(policy, cfg)
    obs, act, logp_old, adv, ret = flatten_batch(policy, batch, cfg, rewards)
    if cfg.normalize_advantages:
        std = adv.std()
        adv = adv - adv.mean()
        if std > 1e-8:
            adv = adv / std
    n = obs.shape[0]
    mb = min(cfg.minibatch_size, n)
    info = {}
    for _ in range(cfg.train_epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start : start + mb]
            loss, g_pi, g_vf, info = ppo_loss_and_grad(
                policy, obs[idx], act[idx], logp_old[idx], adv[idx], ret[idx], cfg
            )
            if not np.isfinite(loss):
                raise NonFiniteLossError(f"non-finite policy-gradient loss {loss}")
            g_pi, _ = clip_grad_norm(g_pi, cfg.max_grad_norm)
            g_vf, _ = clip_grad_norm(g_vf, cfg.max_grad_norm)
            optimizer.pi.step([*policy.pi, policy.log_std], g_pi)
            optimizer.vf.step(policy.vf, g_vf)
            np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX, out=policy.log_std)
    if not policy.is_finite():
        raise NonFiniteLossError("policy parameters became non-finite")
    info = dict(info)
    info["loss"] = float(loss)
    return policy, info
