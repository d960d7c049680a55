"""Tabular agents behind one act/observe interface.

Every agent consumes exactly two uniforms per ``act`` call (an exploration
coin and a tie-break draw, used or not), so a run is a pure function of its
two random streams. The per-step logic lives in compiled kernels that the
Python methods and the whole-run loops share, which keeps the interactive
path and the fast path bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .mdp import FiniteMdp, sample_next
from .params import HyperParams, bonus_from_log, max_successes_per_pair, q_prime_ceiling

NO_UPDATE = 0
ATTEMPTED = 1
SUCCEEDED = 2


@dataclass(frozen=True)
class UpdateReport:
    attempted: bool
    succeeded: bool


def _report(code: int) -> UpdateReport:
    return UpdateReport(attempted=code != NO_UPDATE, succeeded=code == SUCCEEDED)


@dataclass
class Trajectory:
    """Per-step arrays produced by a compiled run."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    codes: np.ndarray
    final_state: int

    @property
    def cumulative_reward(self) -> float:
        return float(self.rewards.sum())


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def argmax_random_tie(values, u):
    best = values[0]
    for k in range(1, values.shape[0]):
        if values[k] > best:
            best = values[k]
    count = 0
    for k in range(values.shape[0]):
        if values[k] == best:
            count += 1
    pick = min(int(u * count), count - 1)
    for k in range(values.shape[0]):
        if values[k] == best:
            if pick == 0:
                return k
            pick -= 1
    return -1


@numba.njit(cache=True)
def _directed_scores(q, e, s, lam, log_eta):
    A = q.shape[1]
    out = np.empty(A)
    for a in range(A):
        out[a] = q[s, a] + bonus_from_log(e[s, a], lam, log_eta)
    return out


@numba.njit(cache=True)
def bonus_table(e, lam, log_eta):
    out = np.empty_like(e)
    for s in range(e.shape[0]):
        for a in range(e.shape[1]):
            out[s, a] = bonus_from_log(e[s, a], lam, log_eta)
    return out


@numba.njit(cache=True)
def directed_act(q, e, s, u_tie, lam, log_eta):
    return argmax_random_tie(_directed_scores(q, e, s, lam, log_eta), u_tie)


@numba.njit(cache=True)
def directed_observe(q, e, qs, es, n, b, learn, clock, attempts, successes, hp, m, s, a, r, s2):
    """One loop body of the directed agent after (s, a) yielded (r, s2).

    ``clock`` holds [t, t_star]; ``hp`` holds [gamma, gamma_e, epsilon1, rho, lam, log_eta].
    """
    gamma, gamma_e, eps1, rho, lam, log_eta = hp[0], hp[1], hp[2], hp[3], hp[4], hp[5]
    clock[0] += 1
    t = clock[0]
    if b[s, a] <= clock[1]:
        learn[s, a] = True
    if not learn[s, a]:
        return NO_UPDATE
    attempts[s, a] += 1
    n[s, a] += 1
    k = n[s, a]
    alpha = 1.0 / k
    qs[s, a] = (1.0 - alpha) * qs[s, a] + alpha * (r + gamma * np.max(q[s2]))
    es[s, a] = (1.0 - alpha) * es[s, a] + alpha * (gamma_e * np.max(e[s2]))
    q_prime = q[s, a] + bonus_from_log(e[s, a], lam, log_eta)
    slack = rho / math.sqrt(k)
    if q_prime - (qs[s, a] + slack + bonus_from_log(es[s, a], lam, log_eta)) >= eps1:
        q[s, a] = qs[s, a] + slack
        e[s, a] = es[s, a]
        clock[1] = t
        n[s, a] = 0
        qs[s, a] = 0.0
        es[s, a] = 0.0
        b[s, a] = t
        successes[s, a] += 1
        return SUCCEEDED
    if k == m:
        n[s, a] = 0
        qs[s, a] = 0.0
        es[s, a] = 0.0
        b[s, a] = t
        if b[s, a] > clock[1]:
            learn[s, a] = False
    return ATTEMPTED


@numba.njit(cache=True)
def delayed_observe(q, acc, n, b, learn, clock, attempts, successes, gamma, eps1, m, s, a, r, s2):
    clock[0] += 1
    t = clock[0]
    if b[s, a] <= clock[1]:
        learn[s, a] = True
    if not learn[s, a]:
        return NO_UPDATE
    n[s, a] += 1
    acc[s, a] += r + gamma * np.max(q[s2])
    if n[s, a] < m:
        return NO_UPDATE
    attempts[s, a] += 1
    estimate = acc[s, a] / m
    n[s, a] = 0
    acc[s, a] = 0.0
    b[s, a] = t
    if q[s, a] - estimate >= 2.0 * eps1:
        q[s, a] = estimate + eps1
        clock[1] = t
        successes[s, a] += 1
        return SUCCEEDED
    if b[s, a] > clock[1]:
        learn[s, a] = False
    return ATTEMPTED


@numba.njit(cache=True)
def eps_greedy_act(q, s, u_explore, u_tie, explore, first_tie):
    if u_explore < explore:
        return min(int(u_tie * q.shape[1]), q.shape[1] - 1)
    if first_tie:
        return np.argmax(q[s])
    return argmax_random_tie(q[s], u_tie)


@numba.njit(cache=True)
def eps_greedy_observe(q, alpha, gamma, s, a, r, s2):
    q[s, a] += alpha * (r + gamma * np.max(q[s2]) - q[s, a])
    return SUCCEEDED


@numba.njit(cache=True)
def _run_directed(cdf, reward, start, env_u, agent_u, q, e, qs, es, n, b, learn, clock,
                  attempts, successes, hp, m):
    horizon = env_u.shape[0]
    states = np.empty(horizon, np.int64)
    actions = np.empty(horizon, np.int64)
    rewards = np.empty(horizon)
    codes = np.empty(horizon, np.int8)
    lam, log_eta = hp[4], hp[5]
    s = start
    for i in range(horizon):
        a = directed_act(q, e, s, agent_u[i, 1], lam, log_eta)
        s2 = sample_next(cdf[s, a], env_u[i])
        r = reward[s, a, s2]
        codes[i] = directed_observe(q, e, qs, es, n, b, learn, clock, attempts, successes,
                                    hp, m, s, a, r, s2)
        states[i] = s
        actions[i] = a
        rewards[i] = r
        s = s2
    return states, actions, rewards, codes, s


@numba.njit(cache=True)
def _run_delayed(cdf, reward, start, env_u, agent_u, q, acc, n, b, learn, clock, attempts,
                 successes, gamma, eps1, m):
    horizon = env_u.shape[0]
    states = np.empty(horizon, np.int64)
    actions = np.empty(horizon, np.int64)
    rewards = np.empty(horizon)
    codes = np.empty(horizon, np.int8)
    s = start
    for i in range(horizon):
        a = argmax_random_tie(q[s], agent_u[i, 1])
        s2 = sample_next(cdf[s, a], env_u[i])
        r = reward[s, a, s2]
        codes[i] = delayed_observe(q, acc, n, b, learn, clock, attempts, successes, gamma,
                                   eps1, m, s, a, r, s2)
        states[i] = s
        actions[i] = a
        rewards[i] = r
        s = s2
    return states, actions, rewards, codes, s


@numba.njit(cache=True)
def _run_eps_greedy(cdf, reward, start, env_u, agent_u, q, alpha, gamma, explore, first_tie):
    horizon = env_u.shape[0]
    states = np.empty(horizon, np.int64)
    actions = np.empty(horizon, np.int64)
    rewards = np.empty(horizon)
    codes = np.empty(horizon, np.int8)
    s = start
    for i in range(horizon):
        a = eps_greedy_act(q, s, agent_u[i, 0], agent_u[i, 1], explore, first_tie)
        s2 = sample_next(cdf[s, a], env_u[i])
        r = reward[s, a, s2]
        codes[i] = eps_greedy_observe(q, alpha, gamma, s, a, r, s2)
        states[i] = s
        actions[i] = a
        rewards[i] = r
        s = s2
    return states, actions, rewards, codes, s


# ----------------------------------------------------------------- agents


class TabularAgent:
    """Shared surface: ``act``, ``observe``, ``run`` and the greedy policy snapshot."""

    name = "agent"

    def __init__(self, num_states: int, num_actions: int):
        self.num_states = num_states
        self.num_actions = num_actions

    def act(self, s: int, rng: np.random.Generator) -> int:
        self._check_state(s)
        u = rng.random(2)
        return int(self._act(s, u[0], u[1]))

    def observe(self, s: int, a: int, r: float, s_next: int) -> UpdateReport:
        self._check_state(s)
        self._check_state(s_next)
        if not 0 <= a < self.num_actions:
            raise IndexError(f"action {a} out of range [0, {self.num_actions})")
        return _report(self._observe(s, a, float(r), s_next))

    def scores(self) -> np.ndarray:
        """Action preferences the agent is greedy in, shape (S, A)."""
        return self.q.copy()

    def score(self, s: int, a: int) -> float:
        return float(self.q[s, a])

    def greedy_policy(self) -> np.ndarray:
        """Stationary policy acting uniformly over the maximizers of ``scores``."""
        scores = self.scores()
        best = scores == scores.max(axis=1, keepdims=True)
        return best / best.sum(axis=1, keepdims=True)

    def run(self, mdp: FiniteMdp, env_u: np.ndarray, agent_u: np.ndarray,
            start: int | None = None) -> Trajectory:
        """Interact with ``mdp`` for ``len(env_u)`` steps using pre-drawn uniforms.

        Row ``i`` of ``agent_u`` is what ``act`` would draw at step ``i`` and
        ``env_u[i]`` what ``step`` would draw, so calling ``run`` on consecutive
        slices (continuing from ``final_state``) matches one long run.
        """
        if mdp.num_states != self.num_states or mdp.num_actions != self.num_actions:
            raise ValueError("agent and MDP disagree on the number of states or actions")
        if agent_u.shape != (env_u.shape[0], 2):
            raise ValueError("agent_u must have shape (horizon, 2)")
        start = mdp.start_state if start is None else start
        states, actions, rewards, codes, final = self._run(mdp, start, env_u, agent_u)
        return Trajectory(states, actions, rewards, codes, int(final))

    def _check_state(self, s):
        if not 0 <= s < self.num_states:
            raise IndexError(f"state {s} out of range [0, {self.num_states})")


class DirectedDelayedQLearning(TabularAgent):
    """Delayed Q-learning driven by an E-value exploration bonus.

    Acts greedily in ``q + lam / sqrt(log_eta e)``. While a pair is learning,
    each visit folds one sample into running surrogates for Q and E and
    commits as soon as the optimistic estimate undercuts the current
    bonus-augmented value by at least ``epsilon1``; after ``m`` fruitless
    samples the surrogates are discarded.

    With ``check_invariants=True`` every commit made through ``observe`` is
    audited and violations are appended to ``violations``.
    """

    name = "directed"

    def __init__(self, num_states: int, num_actions: int, params: HyperParams,
                 check_invariants: bool = False):
        super().__init__(num_states, num_actions)
        if not 0.0 < params.gamma_e < 1.0:
            raise ValueError(f"gamma_e must lie in (0, 1), got {params.gamma_e}")
        self.params = params
        shape = (num_states, num_actions)
        self.q = np.full(shape, params.v_max)
        self.e = np.full(shape, 1.0 - params.epsilon1)
        self.q_surrogate = np.zeros(shape)
        self.e_surrogate = np.zeros(shape)
        self.n = np.zeros(shape, np.int64)
        self.b = np.zeros(shape, np.int64)
        self.learn = np.ones(shape, np.bool_)
        self.attempts = np.zeros(shape, np.int64)
        self.successes = np.zeros(shape, np.int64)
        self._clock = np.zeros(2, np.int64)
        self._hp = np.array([params.gamma, params.gamma_e, params.epsilon1, params.rho,
                             params.lam, params.log_eta])
        self.check_invariants = check_invariants
        self.violations: list[str] = []
        self._success_cap = max_successes_per_pair(params)
        self._q_prime_cap = q_prime_ceiling(params)

    @property
    def t(self) -> int:
        return int(self._clock[0])

    @property
    def t_star(self) -> int:
        return int(self._clock[1])

    def bonus(self) -> np.ndarray:
        return bonus_table(self.e, self.params.lam, self.params.log_eta)

    def scores(self) -> np.ndarray:
        return self.q + self.bonus()

    def score(self, s: int, a: int) -> float:
        return float(self.q[s, a] + bonus_from_log(self.e[s, a], self.params.lam,
                                                   self.params.log_eta))

    def q_prime(self) -> np.ndarray:
        return self.scores()

    def _act(self, s, u_explore, u_tie):
        return directed_act(self.q, self.e, s, u_tie, self.params.lam, self.params.log_eta)

    def _observe(self, s, a, r, s2):
        if self.check_invariants:
            old_q_prime = self.q[s, a] + bonus_from_log(self.e[s, a], self.params.lam,
                                                        self.params.log_eta)
            old_e = self.e[s, a]
        code = directed_observe(self.q, self.e, self.q_surrogate, self.e_surrogate, self.n,
                                self.b, self.learn, self._clock, self.attempts,
                                self.successes, self._hp, self.params.m, s, a, r, s2)
        if self.check_invariants:
            if code == SUCCEEDED:
                self._audit_commit(s, a, old_q_prime, old_e)
            if not 0 <= self.n[s, a] <= self.params.m:
                self.violations.append(f"t={self.t}: n{(s, a)}={self.n[s, a]} outside [0, m]")
        return code

    def _audit_commit(self, s, a, old_q_prime, old_e):
        p = self.params
        t = self.t
        new_q_prime = self.q[s, a] + bonus_from_log(self.e[s, a], p.lam, p.log_eta)
        # the criterion is evaluated in floating point; allow rounding of one subtraction
        tol = 4 * np.finfo(float).eps * max(1.0, abs(old_q_prime))
        if new_q_prime > old_q_prime - p.epsilon1 + tol:
            self.violations.append(
                f"t={t}: Q'{(s, a)} fell by {float(old_q_prime - new_q_prime)!r} < epsilon1")
        if not self.e[s, a] < old_e:
            self.violations.append(f"t={t}: E{(s, a)} did not decrease ({float(old_e)!r} -> {float(self.e[s, a])!r})")
        if not 0.0 < self.e[s, a] <= 1.0 - p.epsilon1:
            self.violations.append(f"t={t}: E{(s, a)}={float(self.e[s, a])!r} outside (0, 1-epsilon1]")
        if self.successes[s, a] > self._success_cap:
            self.violations.append(
                f"t={t}: {self.successes[s, a]} successes for {(s, a)} exceed {self._success_cap}")
        if new_q_prime > self._q_prime_cap:
            self.violations.append(f"t={t}: Q'{(s, a)}={float(new_q_prime)!r} above {self._q_prime_cap!r}")

    def _run(self, mdp, start, env_u, agent_u):
        return _run_directed(mdp.cdf, mdp.reward, start, env_u, agent_u, self.q, self.e,
                             self.q_surrogate, self.e_surrogate, self.n, self.b, self.learn,
                             self._clock, self.attempts, self.successes, self._hp,
                             self.params.m)


class DelayedQLearning(TabularAgent):
    """Delayed Q-learning with optimistic initialization and fixed batches of ``m`` samples.

    A batch commits ``mean + epsilon1`` when the mean target sits at least
    ``2 * epsilon1`` below the current estimate.
    """

    name = "delayed"

    def __init__(self, num_states: int, num_actions: int, gamma: float, m: int,
                 epsilon1: float, r_max: float = 1.0):
        super().__init__(num_states, num_actions)
        if m < 1:
            raise ValueError(f"m must be positive, got {m}")
        self.gamma = gamma
        self.m = int(m)
        self.epsilon1 = epsilon1
        shape = (num_states, num_actions)
        self.q = np.full(shape, r_max / (1.0 - gamma))
        self.accumulator = np.zeros(shape)
        self.n = np.zeros(shape, np.int64)
        self.b = np.zeros(shape, np.int64)
        self.learn = np.ones(shape, np.bool_)
        self.attempts = np.zeros(shape, np.int64)
        self.successes = np.zeros(shape, np.int64)
        self._clock = np.zeros(2, np.int64)

    @property
    def t(self) -> int:
        return int(self._clock[0])

    @property
    def t_star(self) -> int:
        return int(self._clock[1])

    def _act(self, s, u_explore, u_tie):
        return argmax_random_tie(self.q[s], u_tie)

    def _observe(self, s, a, r, s2):
        return delayed_observe(self.q, self.accumulator, self.n, self.b, self.learn,
                               self._clock, self.attempts, self.successes, self.gamma,
                               self.epsilon1, self.m, s, a, r, s2)

    def _run(self, mdp, start, env_u, agent_u):
        return _run_delayed(mdp.cdf, mdp.reward, start, env_u, agent_u, self.q,
                            self.accumulator, self.n, self.b, self.learn, self._clock,
                            self.attempts, self.successes, self.gamma, self.epsilon1, self.m)


class EpsGreedyQLearning(TabularAgent):
    """One-step Q-learning with a constant step size and epsilon-greedy acting.

    Greedy ties go to the lowest action index by default (``tie_break="first"``);
    ``"random"`` spreads them uniformly like the optimistic agents do.
    """

    name = "eps_greedy"

    def __init__(self, num_states: int, num_actions: int, gamma: float, alpha: float = 0.1,
                 explore: float = 0.1, q_init: float = 0.0, tie_break: str = "first"):
        super().__init__(num_states, num_actions)
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        if not 0.0 <= explore <= 1.0:
            raise ValueError(f"explore must lie in [0, 1], got {explore}")
        self.gamma = gamma
        self.alpha = alpha
        self.explore = explore
        if tie_break not in ("first", "random"):
            raise ValueError(f"tie_break must be 'first' or 'random', got {tie_break!r}")
        self.tie_break = tie_break
        self.q = np.full((num_states, num_actions), float(q_init))

    def greedy_policy(self) -> np.ndarray:
        if self.tie_break == "random":
            return super().greedy_policy()
        policy = np.zeros_like(self.q)
        policy[np.arange(self.num_states), np.argmax(self.q, axis=1)] = 1.0
        return policy

    def _act(self, s, u_explore, u_tie):
        return eps_greedy_act(self.q, s, u_explore, u_tie, self.explore,
                              self.tie_break == "first")

    def _observe(self, s, a, r, s2):
        return eps_greedy_observe(self.q, self.alpha, self.gamma, s, a, r, s2)

    def _run(self, mdp, start, env_u, agent_u):
        return _run_eps_greedy(mdp.cdf, mdp.reward, start, env_u, agent_u, self.q,
                               self.alpha, self.gamma, self.explore, self.tie_break == "first")
