"""Dynamic-programming oracles: optimal values, policy evaluation and the known-set diagnostic."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import FiniteMdp
from .agents import bonus_table
from .params import HyperParams


class ConvergenceError(RuntimeError):
    """Raised when a sweep budget runs out before the requested tolerance is reached."""


@dataclass
class SolveResult:
    v_star: np.ndarray
    q_star: np.ndarray
    residual: float
    iterations: int
    residuals: list[float] = field(default_factory=list, repr=False)

    def greedy_policy(self, atol: float = 0.0) -> np.ndarray:
        """Deterministic policy matrix (S, A) picking the lowest-index maximizer."""
        best = np.argmax(self.q_star >= self.q_star.max(axis=1, keepdims=True) - atol, axis=1)
        policy = np.zeros_like(self.q_star)
        policy[np.arange(len(best)), best] = 1.0
        return policy


def bellman_backup(mdp: FiniteMdp, v: np.ndarray) -> np.ndarray:
    """Q(s, a) = sum_s' T(s'|s,a) [r(s,a,s') + gamma v(s')]."""
    return np.einsum("ijk,ijk->ij", mdp.transition, mdp.reward + mdp.discount * v[None, None, :])


def value_iteration(mdp: FiniteMdp, tol: float = 1e-10, max_iter: int = 1_000_000,
                    raise_on_failure: bool = True) -> SolveResult:
    """Synchronous value iteration until ``v_star`` is within ``tol`` of V* in sup-norm.

    Sweeps stop once successive iterates differ by at most ``tol (1-gamma)/gamma``
    (or by rounding noise), which also keeps the Bellman residual below ``tol``.

    ``q_star`` is the backup of the returned ``v_star`` and ``residual`` is
    ``max |max_a q_star - v_star|``, so ``v_star`` matches the row maxima of
    ``q_star`` to within ``residual``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = mdp.discount
    # a change of tol*(1-g)/g bounds the distance to the fixed point by tol
    stop = tol * (1.0 - g) / g if g > 0 else tol
    v = np.zeros(mdp.num_states)
    residuals = []
    for it in range(1, max_iter + 1):
        q = bellman_backup(mdp, v)
        v_new = q.max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        residuals.append(residual)
        v = v_new
        if residual <= max(stop, 8 * np.finfo(float).eps * float(np.max(np.abs(v)))):
            q = bellman_backup(mdp, v)
            final = float(np.max(np.abs(q.max(axis=1) - v)))
            return SolveResult(v, q, final, it, residuals)
    if raise_on_failure:
        raise ConvergenceError(
            f"value iteration stopped after {max_iter} sweeps with residual {residuals[-1]:.3g} > {tol}")
    q = bellman_backup(mdp, v)
    return SolveResult(v, q, float(np.max(np.abs(q.max(axis=1) - v))), max_iter, residuals)


def _check_policy(mdp: FiniteMdp, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.ndim == 1:
        as_matrix = np.zeros((mdp.num_states, mdp.num_actions))
        as_matrix[np.arange(mdp.num_states), policy.astype(int)] = 1.0
        policy = as_matrix
    if policy.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError(f"policy shape {policy.shape} != {(mdp.num_states, mdp.num_actions)}")
    if (policy < 0).any() or not np.allclose(policy.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("policy rows must be probability vectors")
    return policy


def evaluate_policy(mdp: FiniteMdp, policy: np.ndarray, tol: float = 1e-10,
                    max_iter: int = 1_000_000) -> np.ndarray:
    """V^pi for a stationary policy given as (S, A) probabilities or an action per state.

    The linear system is solved directly and then polished by policy-Bellman
    sweeps until their sup-norm residual is at most ``tol``.
    """
    policy = _check_policy(mdp, policy)
    p_pi = np.einsum("ij,ijk->ik", policy, mdp.transition)
    r_pi = np.einsum("ij,ij->i", policy, mdp.expected_reward())
    v = np.linalg.solve(np.eye(mdp.num_states) - mdp.discount * p_pi, r_pi)
    for _ in range(max_iter):
        v_new = r_pi + mdp.discount * p_pi @ v
        residual = np.max(np.abs(v_new - v))
        v = v_new
        if residual <= tol:
            return v
    raise ConvergenceError(f"policy evaluation residual {residual:.3g} > {tol}")


def enumerate_deterministic_policies(mdp: FiniteMdp) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force optimum over all A**S deterministic stationary policies.

    Each policy is evaluated with a direct linear solve, independently of
    value iteration. Returns (V*, Q*).
    """
    S, A = mdp.num_states, mdp.num_actions
    best = np.full(S, -np.inf)
    r_bar = mdp.expected_reward()
    for code in range(A**S):
        actions = [(code // A**s) % A for s in range(S)]
        p_pi = mdp.transition[np.arange(S), actions]
        r_pi = r_bar[np.arange(S), actions]
        v = np.linalg.solve(np.eye(S) - mdp.discount * p_pi, r_pi)
        best = np.maximum(best, v)
    return best, r_bar + mdp.discount * mdp.transition @ best


def bellman_error(mdp: FiniteMdp, q_prime: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Q'(s, a) - (R(s, a) + gamma sum_s' T(s'|s,a) v(s'))."""
    return q_prime - (mdp.expected_reward() + mdp.discount * mdp.transition @ v)


def known_set(mdp: FiniteMdp, q_table: np.ndarray, e_table: np.ndarray, params: HyperParams,
              bootstrap: str = "q") -> np.ndarray:
    """Boolean (S, A) mask of pairs whose bonus-augmented value has Bellman error <= 4 epsilon1.

    ``bootstrap`` picks the next-state value: ``"q"`` uses max_a Q(s', a)
    and ``"q_prime"`` uses max_a Q'(s', a). Uses the true model.
    """
    q_prime = q_table + bonus_table(np.asarray(e_table, dtype=float), params.lam, params.log_eta)
    if bootstrap == "q":
        v = q_table.max(axis=1)
    elif bootstrap == "q_prime":
        v = q_prime.max(axis=1)
    else:
        raise ValueError(f"bootstrap must be 'q' or 'q_prime', got {bootstrap!r}")
    return bellman_error(mdp, q_prime, v) <= 4 * params.epsilon1
