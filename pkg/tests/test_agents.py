import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddql.agents import (ATTEMPTED, SUCCEEDED, DelayedQLearning, DirectedDelayedQLearning,
                         EpsGreedyQLearning)
from ddql.harness import trace_run
from ddql.mdp import RIGHT, ChainSpec, FiniteMdp, make_chain, make_micro_mdp
from ddql.params import exploration_bonus, practical_params


def directed(S=2, A=2, **kwargs):
    kwargs.setdefault("gamma", 0.5)
    return DirectedDelayedQLearning(S, A, practical_params(**kwargs))


def one_state_mdp(reward=1.0, discount=0.9):
    return FiniteMdp(np.ones((1, 1, 1)), np.full((1, 1, 1), reward), discount)


# ------------------------------------------------------------ directed: acting


def test_fresh_agent_ties_are_uniform():
    agent = directed(S=1, A=3)
    rng = np.random.default_rng(0)
    counts = np.bincount([agent.act(0, rng) for _ in range(6000)], minlength=3)
    assert np.all(np.abs(counts / 6000 - 1 / 3) < 0.03)


def test_act_prefers_larger_q():
    agent = directed()
    agent.q[0] = [1.2, 1.0]
    agent.e[0] = [0.5, 0.5]
    rng = np.random.default_rng(0)
    assert {agent.act(0, rng) for _ in range(50)} == {0}


def test_act_prefers_larger_e_when_q_ties():
    agent = directed()
    eta = agent.params.eta
    agent.q[0] = [1.0, 1.0]
    agent.e[0] = [eta**2, eta]
    rng = np.random.default_rng(0)
    assert {agent.act(0, rng) for _ in range(50)} == {1}


def test_act_surfaces_corrupted_e():
    agent = directed()
    agent.e[0, 1] = 1.0
    with pytest.raises(ValueError):
        agent.act(0, np.random.default_rng(0))


def test_gamma_e_must_be_open_unit_interval():
    p = practical_params()
    with pytest.raises(ValueError):
        DirectedDelayedQLearning(2, 2, p.replace(gamma_e=0.0))
    with pytest.raises(ValueError):
        practical_params(gamma_e=1.0)


def test_initial_tables():
    agent = directed(gamma=0.9, epsilon1=0.1)
    assert np.allclose(agent.q, 10.0)
    assert np.allclose(agent.e, 0.9)
    assert agent.learn.all() and (agent.n == 0).all()
    assert agent.t == 0 and agent.t_star == 0


# ---------------------------------------------------------- directed: updates


def test_first_visit_overwrites_surrogates():
    agent = directed(gamma=0.5, gamma_e=0.8, epsilon1=0.1, m=400)
    agent.q[1] = [1.5, 1.25]
    agent.e[1] = [0.3, 0.6]
    report = agent.observe(0, 1, 0.25, 1)
    assert report.attempted and not report.succeeded
    assert agent.n[0, 1] == 1
    assert agent.q_surrogate[0, 1] == 0.25 + 0.5 * 1.5
    assert agent.e_surrogate[0, 1] == pytest.approx(0.8 * 0.6)


def test_commit_with_exact_slack_lowers_q_prime_by_epsilon1():
    agent = directed(gamma=0.5, gamma_e=0.5, epsilon1=0.25, m=4)
    assert agent.params.rho == 0.5
    agent.e[0, 0] = 0.25
    agent.e[1] = 0.5
    old_q_prime = agent.score(0, 0)
    report = agent.observe(0, 0, 0.25, 1)
    assert report.succeeded
    # q_surrogate = 0.25 + 0.5 * 2 = 1.25, plus rho / sqrt(1)
    assert agent.q[0, 0] == 1.75
    assert agent.e[0, 0] == 0.25
    assert agent.score(0, 0) == pytest.approx(old_q_prime - 0.25, abs=1e-15)
    assert agent.t_star == 1 and agent.b[0, 0] == 1
    assert agent.n[0, 0] == 0 and agent.q_surrogate[0, 0] == 0.0


def test_learn_cleared_after_m_failures():
    agent = directed(gamma=0.5, epsilon1=0.1, m=3, rho=5.0)
    codes = [agent.observe(0, 0, 0.0, 1) for _ in range(3)]
    assert all(c.attempted and not c.succeeded for c in codes)
    assert not agent.learn[0, 0]
    assert agent.b[0, 0] == 3
    assert agent.n[0, 0] == 0
    assert agent.q_surrogate[0, 0] == 0.0 and agent.e_surrogate[0, 0] == 0.0
    assert not agent.observe(0, 0, 0.0, 1).attempted
    assert agent.n[0, 0] == 0


def test_learn_restored_once_some_value_changed():
    agent = directed(gamma=0.5, epsilon1=0.1, m=3, rho=5.0)
    for _ in range(3):
        agent.observe(0, 0, 0.0, 1)
    agent._clock[1] = agent.t  # a commit elsewhere at the current step
    assert agent.observe(0, 0, 0.0, 1).attempted
    assert agent.learn[0, 0]


def test_attempt_counter_counts_learning_steps():
    agent = directed(gamma=0.5, epsilon1=0.1, m=3, rho=5.0)
    for _ in range(5):
        agent.observe(0, 0, 0.0, 1)
    assert agent.attempts[0, 0] == 3


def test_zero_e_surrogate_gives_zero_bonus():
    agent = directed(gamma=0.5, epsilon1=0.1)
    agent.e[1] = 0.0
    agent.observe(0, 0, 0.0, 1)
    assert agent.e[0, 0] == 0.0
    assert agent.score(0, 0) == agent.q[0, 0]


# --------------------------------------------------------- baseline: delayed


def test_delayed_initialization():
    agent = DelayedQLearning(3, 2, gamma=0.9, m=5, epsilon1=0.01)
    assert np.all(agent.q == pytest.approx(10.0))


def test_delayed_commits_mean_plus_epsilon1():
    agent = DelayedQLearning(2, 2, gamma=0.9, m=5, epsilon1=0.01)
    reports = [agent.observe(0, 0, 0.0, 1) for _ in range(5)]
    assert [r.attempted for r in reports] == [False] * 4 + [True]
    assert reports[-1].succeeded
    # 10 - (0.9 * 10 + 0.01) >= 0.02
    assert agent.q[0, 0] == pytest.approx(9.01)


def test_delayed_failed_attempt_leaves_q_and_clears_learn():
    agent = DelayedQLearning(2, 2, gamma=0.9, m=5, epsilon1=0.01)
    agent.q[0, 0] = 9.015
    reports = [agent.observe(0, 0, 0.0, 1) for _ in range(5)]
    assert reports[-1].attempted and not reports[-1].succeeded
    assert agent.q[0, 0] == 9.015
    assert not agent.learn[0, 0]


# ------------------------------------------------------ baseline: eps-greedy


def test_eps_greedy_full_exploration_is_uniform():
    agent = EpsGreedyQLearning(1, 4, gamma=0.9, explore=1.0)
    agent.q[0] = [5, 0, 0, 0]
    rng = np.random.default_rng(1)
    counts = np.bincount([agent.act(0, rng) for _ in range(8000)], minlength=4)
    assert np.all(np.abs(counts / 8000 - 0.25) < 0.02)


def test_eps_greedy_without_exploration_is_greedy():
    agent = EpsGreedyQLearning(1, 3, gamma=0.9, explore=0.0)
    agent.q[0] = [0.1, 0.7, 0.3]
    rng = np.random.default_rng(2)
    assert {agent.act(0, rng) for _ in range(100)} == {1}


@pytest.mark.parametrize("k", [1, 2, 5, 20])
def test_eps_greedy_unit_step_is_geometric_sum(k):
    agent = EpsGreedyQLearning(1, 1, gamma=0.9, alpha=1.0)
    for _ in range(k):
        agent.observe(0, 0, 1.0, 0)
    assert agent.q[0, 0] == pytest.approx(sum(0.9**i for i in range(k)), rel=1e-14)


def test_eps_greedy_tie_rules():
    rng = np.random.default_rng(0)
    first = EpsGreedyQLearning(1, 2, gamma=0.9, explore=0.0)
    assert {first.act(0, rng) for _ in range(50)} == {0}
    rand = EpsGreedyQLearning(1, 2, gamma=0.9, explore=0.0, tie_break="random")
    assert {rand.act(0, rng) for _ in range(50)} == {0, 1}
    assert first.greedy_policy().tolist() == [[1.0, 0.0]]
    assert rand.greedy_policy().tolist() == [[0.5, 0.5]]


def test_eps_greedy_q_stays_bounded():
    mdp = make_chain(ChainSpec(5), discount=0.9)
    agent = EpsGreedyQLearning(5, 2, gamma=0.9, alpha=0.5, explore=0.5)
    rng = np.random.default_rng(4)
    agent.run(mdp, rng.random(20000), rng.random((20000, 2)))
    assert agent.q.min() >= 0 and agent.q.max() <= 10.0


# ---------------------------------------------------------- both code paths


def make_agents(mdp):
    S, A, g = mdp.num_states, mdp.num_actions, mdp.discount
    return [
        DirectedDelayedQLearning(S, A, practical_params(gamma=g, gamma_e=0.9, m=5)),
        DelayedQLearning(S, A, g, m=5, epsilon1=0.01),
        EpsGreedyQLearning(S, A, g, tie_break="random"),
    ]


@pytest.mark.parametrize("index", range(3))
def test_compiled_run_matches_python_stepping(index):
    mdp = make_chain(ChainSpec(8), discount=0.95)
    fast, slow = make_agents(mdp)[index], make_agents(mdp)[index]
    horizon = 3000
    env, ag = np.random.default_rng(11), np.random.default_rng(12)
    traj = fast.run(mdp, env.random(horizon), ag.random((horizon, 2)))
    trace = trace_run(slow, mdp, np.random.default_rng(11), np.random.default_rng(12), horizon)
    assert np.array_equal(traj.states, trace.states)
    assert np.array_equal(traj.actions, trace.actions)
    assert np.array_equal(traj.rewards, trace.rewards)
    assert np.array_equal(traj.codes > 0, trace.attempted)
    assert np.array_equal(traj.codes == SUCCEEDED, trace.succeeded)
    assert np.array_equal(fast.q, slow.q)


@pytest.mark.parametrize("index", range(3))
def test_chunked_run_matches_single_run(index):
    mdp = make_chain(ChainSpec(6), discount=0.9)
    whole, pieces = make_agents(mdp)[index], make_agents(mdp)[index]
    rng = np.random.default_rng(5)
    env_u, agent_u = rng.random(2000), rng.random((2000, 2))
    full = whole.run(mdp, env_u, agent_u)
    s, rewards = mdp.start_state, []
    for lo in range(0, 2000, 300):
        part = pieces.run(mdp, env_u[lo:lo + 300], agent_u[lo:lo + 300], start=s)
        s = part.final_state
        rewards.append(part.rewards)
    assert np.array_equal(full.rewards, np.concatenate(rewards))
    assert full.final_state == s
    assert np.array_equal(whole.q, pieces.q)


def test_run_rejects_mismatched_mdp():
    agent = directed(S=3, A=2)
    with pytest.raises(ValueError):
        agent.run(make_chain(ChainSpec(4)), np.zeros(3), np.zeros((3, 2)))


def test_observe_rejects_bad_indices():
    agent = directed()
    with pytest.raises(IndexError):
        agent.observe(2, 0, 0.0, 0)
    with pytest.raises(IndexError):
        agent.observe(0, 5, 0.0, 0)


# ------------------------------------------------------ invariant properties


def random_mdp(seed, S, A, gamma):
    rng = np.random.default_rng(seed)
    transition = rng.dirichlet(np.ones(S), size=(S, A))
    reward = rng.random((S, A, S))
    return FiniteMdp(transition, reward, gamma)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 3),
       st.sampled_from([0.5, 0.8, 0.9]), st.sampled_from([0.25, 0.5, 0.9, 0.99]),
       st.sampled_from([0.01, 0.05, 0.2]), st.integers(1, 20))
def test_commit_invariants_on_random_mdps(seed, S, A, gamma, gamma_e, eps1, m):
    mdp = random_mdp(seed, S, A, gamma)
    agent = DirectedDelayedQLearning(
        S, A, practical_params(gamma=gamma, gamma_e=gamma_e, epsilon1=eps1, m=m),
        check_invariants=True)
    trace = trace_run(agent, mdp, np.random.default_rng(seed), np.random.default_rng(seed + 1),
                      1500)
    # E-values need not fall on every commit; everything else must hold
    hard = [v for v in agent.violations if "did not decrease" not in v]
    assert hard == []
    # Q' per pair never increases
    tables = [snap[1] for snap in trace.snapshots]
    for before, after in zip(tables, tables[1:]):
        assert np.all(after <= before + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 3), st.integers(1, 10))
def test_counter_codes_agree_with_tables(seed, S, A, m):
    mdp = random_mdp(seed, S, A, 0.8)
    agent = DirectedDelayedQLearning(S, A, practical_params(gamma=0.8, m=m))
    rng = np.random.default_rng(seed)
    traj = agent.run(mdp, rng.random(800), rng.random((800, 2)))
    assert agent.attempts.sum() == np.count_nonzero(traj.codes >= ATTEMPTED)
    assert agent.successes.sum() == np.count_nonzero(traj.codes == SUCCEEDED)
    assert agent.t == 800
    assert (agent.n >= 0).all() and (agent.n <= m).all()


def test_same_seed_same_trace():
    mdp = make_micro_mdp()
    runs = []
    for _ in range(2):
        agent = directed(gamma=0.5)
        runs.append(trace_run(agent, mdp, np.random.default_rng(3), np.random.default_rng(4), 500))
    assert np.array_equal(runs[0].actions, runs[1].actions)
    assert np.array_equal(runs[0].succeeded, runs[1].succeeded)
    assert np.array_equal(runs[0].q_prime_sa, runs[1].q_prime_sa)


def test_bonus_matches_scalar_function():
    agent = directed(gamma=0.9, epsilon1=0.05)
    agent.e[:] = [[0.3, 0.9], [1e-310, 0.5]]
    p = agent.params
    expected = [[exploration_bonus(x, p.lam, p.eta) for x in row] for row in agent.e]
    assert np.allclose(agent.bonus(), expected)
    assert agent.bonus()[1, 0] == 0.0


def test_directed_learns_right_on_short_chain():
    mdp = make_chain(ChainSpec(5), discount=0.9)
    agent = DirectedDelayedQLearning(5, 2, practical_params(gamma=0.9, m=20))
    rng = np.random.default_rng(0)
    agent.run(mdp, rng.random(50000), rng.random((50000, 2)))
    assert np.all(np.argmax(agent.scores(), axis=1)[:-1] == RIGHT)
    assert math.isfinite(agent.q.sum())
