import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simmer.envs import PendulumSpec, load_grid
from simmer.learners.lagrangian import (
    LagrangianState,
    lagrangian_update,
    mix_reward,
    pid_lagrangian_update,
)
from simmer.learners.mlp import Adam, clip_grad_norm, init_mlp, mlp_backward, mlp_forward
from simmer.learners.ppo import (
    PolicyParams,
    PPOConfig,
    collect,
    gae,
    pg_update,
    surrogate_and_grad,
)
from simmer.learners.tabular import (
    Transition,
    greedy_action,
    run_episode,
    tabular_q_update,
)
from simmer.oracle import AugmentedGridMdp, finite_diff_check, value_iteration
from simmer.saute import SauteConfig

SHORT = PendulumSpec(horizon=25)


def _policy(obs_dim=4, hidden=(8, 8), seed=0, log_std=0.0):
    return PolicyParams.init(obs_dim, 1, hidden, np.random.default_rng(seed), log_std)


def _batch(seed=0, n=4, spec=SHORT, augment=True, budget=3.0):
    return collect(_policy(3 + augment), spec, augment, budget, n, np.random.default_rng(seed), SauteConfig())


# --------------------------------------------------------------------------- collect


def test_collect_is_deterministic_for_a_seed():
    a, b = _batch(seed=5), _batch(seed=5)
    for name in ("obs", "actions", "logp", "rewards", "costs", "z"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_collect_zero_variance_policy_is_reproducible():
    policy = _policy(log_std=-20.0)
    cfg = SauteConfig()
    a = collect(policy, SHORT, True, 2.0, 3, np.random.default_rng(1), cfg, deterministic=True)
    b = collect(policy, SHORT, True, 2.0, 3, np.random.default_rng(1), cfg)
    np.testing.assert_allclose(a.actions, b.actions, atol=1e-7)


def test_full_horizon_trajectories():
    batch = collect(_policy(), PendulumSpec(), True, 5.0, 100, np.random.default_rng(0), SauteConfig())
    assert batch.rewards.shape == (100, 200) and batch.z.shape == (100, 201)
    assert np.all(batch.z[:, 0] == 5.0)
    assert np.all(batch.costs >= 0)


@pytest.mark.parametrize("gamma_l", [0.5, 0.99, 1.0])
def test_batch_cost_telescopes_from_logged_z(gamma_l):
    cfg = SauteConfig(gamma_l=gamma_l)
    batch = collect(_policy(), SHORT, True, 4.0, 6, np.random.default_rng(2), cfg)
    T = batch.horizon
    np.testing.assert_allclose(batch.disc_cost, 4.0 - gamma_l**T * batch.z[:, -1], atol=1e-9)


def test_reshaping_only_when_augmented_prob_one():
    plain = _batch(augment=False, budget=0.0)
    np.testing.assert_array_equal(plain.shaped_rewards, plain.rewards)
    avg = collect(_policy(), SHORT, True, 0.0, 4, np.random.default_rng(0), SauteConfig(mode="average"))
    np.testing.assert_array_equal(avg.shaped_rewards, avg.rewards)
    po = _batch(budget=0.0)
    spent = po.z[:, :-1] < 0
    np.testing.assert_array_equal(po.shaped_rewards[spent], -SHORT.horizon)
    np.testing.assert_array_equal(po.shaped_rewards[~spent], po.rewards[~spent])


def test_collect_requires_a_trajectory():
    with pytest.raises(ValueError):
        collect(_policy(), SHORT, True, 1.0, 0, np.random.default_rng(0), SauteConfig())


# --------------------------------------------------------------------------- gradients


def _surrogate_instance(seed, n=5, obs_dim=2, hidden=(2,)):
    rng = np.random.default_rng(seed)
    pi = init_mlp((obs_dim, *hidden, 1), rng, out_scale=1.0)
    log_std = rng.normal(0.0, 0.3, size=1)
    obs = rng.normal(size=(n, obs_dim))
    actions = rng.normal(size=(n, 1))
    logp_old = rng.normal(-1.0, 0.5, size=n)
    adv = rng.normal(size=n)
    return pi, log_std, obs, actions, logp_old, adv


def _surrogate_fn(obs, actions, logp_old, adv, clip_ratio, n_pi):
    def fn(params):
        return surrogate_and_grad(params[:n_pi], params[n_pi], obs, actions, logp_old, adv, clip_ratio)

    return fn


def test_ten_parameter_policy_size():
    pi, log_std, *_ = _surrogate_instance(0)
    assert sum(p.size for p in pi) + log_std.size == 10


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("clip_ratio", [0.2, 100.0])
def test_surrogate_gradient_matches_finite_differences(seed, clip_ratio):
    pi, log_std, obs, actions, logp_old, adv = _surrogate_instance(seed)
    fn = _surrogate_fn(obs, actions, logp_old, adv, clip_ratio, len(pi))
    assert finite_diff_check(fn, [*pi, log_std], h=1e-6) < 1e-4


def test_zero_advantage_gives_zero_policy_gradient():
    pi, log_std, obs, actions, logp_old, _ = _surrogate_instance(1)
    _, grads = surrogate_and_grad(pi, log_std, obs, actions, logp_old, np.zeros(5), 0.2)
    for g in grads:
        np.testing.assert_array_equal(g, 0.0)


def test_zero_advantages_leave_policy_head_unchanged():
    # zero rewards and a zero value head give identically zero advantages
    batch = _batch(augment=False)
    policy = _policy(3)
    value_only = PolicyParams(policy.pi, policy.log_std, [np.zeros_like(v) for v in policy.vf])
    new, _ = pg_update(value_only, batch, PPOConfig(train_epochs=2), np.random.default_rng(0), rewards=np.zeros_like(batch.rewards))
    for before, after in zip((*policy.pi, policy.log_std), (*new.pi, new.log_std)):
        np.testing.assert_array_equal(before, after)


def test_zero_learning_rate_is_bit_exact():
    batch = _batch(augment=True)
    policy = _policy()
    cfg = PPOConfig(lr=0.0, vf_lr=0.0, train_epochs=3)
    new, _ = pg_update(policy, batch, cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(new.flat(), policy.flat())


def test_pg_update_does_not_mutate_input_and_stays_finite():
    batch = _batch()
    policy = _policy()
    before = policy.flat().copy()
    new, info = pg_update(policy, batch, PPOConfig(train_epochs=2), np.random.default_rng(0))
    np.testing.assert_array_equal(policy.flat(), before)
    assert new.is_finite() and np.isfinite(info["loss"])
    assert -20.0 <= new.log_std[0] <= 2.0


def test_gae_with_lambda_one_is_discounted_return_minus_value():
    rng = np.random.default_rng(0)
    rewards, values = rng.random((2, 6)), rng.random((2, 6))
    adv, ret = gae(rewards, values, 0.9, 1.0)
    disc = np.array([[sum(0.9**j * rewards[i, t + j] for j in range(6 - t)) for t in range(6)] for i in range(2)])
    np.testing.assert_allclose(ret, disc, atol=1e-12)
    np.testing.assert_allclose(adv, disc - values, atol=1e-12)


def test_mlp_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    params = init_mlp((3, 5, 4, 2), rng)
    x = rng.normal(size=(7, 3))
    target = rng.normal(size=(7, 2))

    def fn(ps):
        out, acts = mlp_forward(ps, x)
        err = out - target
        return 0.5 * float(np.sum(err**2)), mlp_backward(ps, acts, err)

    assert finite_diff_check(fn, params) < 1e-4


def test_adam_zero_lr_and_grad_clip():
    p = [np.ones(3)]
    Adam(p, lr=0.0).step(p, [np.full(3, 5.0)])
    np.testing.assert_array_equal(p[0], 1.0)
    clipped, norm = clip_grad_norm([np.full(4, 3.0)], 1.0)
    assert norm == pytest.approx(6.0)
    assert np.linalg.norm(clipped[0]) == pytest.approx(1.0)


# --------------------------------------------------------------------------- multipliers


def test_lagrangian_examples():
    assert lagrangian_update(LagrangianState(0.0), 5.0, 5.0, 0.03).lam == 0.0
    assert lagrangian_update(LagrangianState(0.5), -5.0, 5.0, 0.1).lam == 0.0
    assert lagrangian_update(LagrangianState(0.7), 50.0, 5.0, 0.0).lam == 0.7
    assert lagrangian_update(LagrangianState(0.0), 7.0, 5.0, 0.5).lam == pytest.approx(1.0)
    with pytest.raises(ValueError):
        lagrangian_update(LagrangianState(), 1.0, 1.0, -0.1)


def test_pid_lagrangian_examples():
    assert pid_lagrangian_update(LagrangianState(), 25.0, 20.0, 0.1, 0.01).lam == pytest.approx(0.55)
    state = LagrangianState()
    for _ in range(40):
        state = pid_lagrangian_update(state, 20.0, 20.0, 0.1, 0.01)
        assert state.lam == 0.0


@pytest.mark.parametrize("n, e", [(1, 3.0), (7, 0.5), (30, 2.0)])
def test_pid_lagrangian_constant_error_closed_form(n, e):
    state = LagrangianState()
    for _ in range(n):
        state = pid_lagrangian_update(state, 10.0 + e, 10.0, 0.1, 0.01)
    assert state.lam == pytest.approx(0.1 * e + n * 0.01 * e, abs=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40), st.floats(0, 1), st.floats(0, 1))
def test_multipliers_stay_nonnegative(costs, lr, ki):
    a = b = LagrangianState()
    for c in costs:
        a = lagrangian_update(a, c, 0.0, lr)
        b = pid_lagrangian_update(b, c, 0.0, 0.1, ki)
        assert a.lam >= 0.0 and b.lam >= 0.0 and b.integral >= 0.0


def test_mix_reward():
    np.testing.assert_allclose(mix_reward([1.0, 0.5], [0.0, 1.0], 1.0), [0.5, -0.25])
    np.testing.assert_array_equal(mix_reward([1.0, 0.5], [3.0, 1.0], 0.0), [1.0, 0.5])


# --------------------------------------------------------------------------- tabular


def test_tabular_update_examples():
    table = np.zeros((3, 2))
    tr = Transition(0, 1, 4.0, 2, True)
    np.testing.assert_array_equal(tabular_q_update(table, tr, 0.0, 0.9), table)
    out = tabular_q_update(table, tr, 0.25, 0.9)
    assert out[0, 1] == 1.0 and table[0, 1] == 0.0
    table[2] = [3.0, 5.0]
    out = tabular_q_update(table, Transition(0, 0, 1.0, 2, False), 0.5, 0.9)
    assert out[0, 0] == pytest.approx(0.5 * (1.0 + 0.9 * 5.0))


def test_greedy_action_ties_go_to_first():
    assert greedy_action(np.array([1.0, 3.0, 3.0, 0.0])) == 1


def test_tabular_learner_converges_to_oracle_policy():
    grid = load_grid()
    mdp = AugmentedGridMdp(grid, int(grid.budget))
    values, oracle_policy = value_iteration(mdp)
    table = np.zeros((mdp.n_states, 4))
    rng = np.random.default_rng(0)
    n = 20_000
    for k in range(n):
        run_episode(mdp, table, lr=1.0, epsilon=max(0.05, 1.0 - k / n), rng=rng)
    learned = np.array([greedy_action(row) for row in table])
    # compare on every state visited by the oracle's greedy policy from each start
    for i in range(len(grid.starts)):
        s = mdp.start_state(i)
        while not mdp.terminal[s]:
            assert learned[s] == oracle_policy[s]
            assert table[s].max() == pytest.approx(values[s])
            s = int(mdp.next_state[s, oracle_policy[s]])
