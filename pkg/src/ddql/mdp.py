"""Finite discounted MDPs: representation, validation, sampling and chain builders."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

LEFT = 0
RIGHT = 1

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """A finite MDP with deterministic rewards r(s, a, s').

    ``transition[s, a]`` is the next-state distribution and ``reward[s, a, s']``
    the reward paid on that transition. Arrays are made read-only on
    construction so a single instance can be shared between runs.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    r_max: float = 1.0
    start_state: int = 0
    cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        transition = np.array(self.transition, dtype=np.float64)
        reward = np.array(self.reward, dtype=np.float64)
        if transition.ndim != 3 or transition.shape[0] == 0 or transition.shape[1] == 0:
            raise ValueError(f"transition must have shape (S, A, S), got {transition.shape}")
        if transition.shape[0] != transition.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {transition.shape}")
        if reward.shape != transition.shape:
            raise ValueError(f"reward shape {reward.shape} does not match transition {transition.shape}")
        cdf = np.cumsum(transition, axis=2)
        for arr in (transition, reward, cdf):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "cdf", cdf)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "r_max", float(self.r_max))
        object.__setattr__(self, "start_state", int(self.start_state))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def v_max(self) -> float:
        return self.r_max / (1.0 - self.discount)

    def expected_reward(self) -> np.ndarray:
        """Mean immediate reward R(s, a) = sum_s' T(s'|s,a) r(s,a,s')."""
        return np.einsum("ijk,ijk->ij", self.transition, self.reward)

    def with_discount(self, discount: float) -> FiniteMdp:
        return FiniteMdp(self.transition, self.reward, discount, self.r_max, self.start_state)

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "discount": self.discount,
            "r_max": self.r_max,
            "start_state": self.start_state,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> FiniteMdp:
        for key in ("num_states", "num_actions", "discount", "transition", "reward"):
            if key not in data:
                raise ValueError(f"MDP document is missing field '{key}'")
        mdp = cls(
            transition=np.asarray(data["transition"], dtype=np.float64),
            reward=np.asarray(data["reward"], dtype=np.float64),
            discount=data["discount"],
            r_max=data.get("r_max", 1.0),
            start_state=data.get("start_state", 0),
        )
        if (mdp.num_states, mdp.num_actions) != (data["num_states"], data["num_actions"]):
            raise ValueError(
                f"num_states/num_actions ({data['num_states']}, {data['num_actions']}) "
                f"disagree with transition shape {mdp.transition.shape}"
            )
        return mdp

    def to_json(self) -> str:
        # repr-based float encoding round-trips every double exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> FiniteMdp:
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> FiniteMdp:
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class ChainSpec:
    length: int
    slip_prob: float = 0.2
    small_reward: float = 0.001
    large_reward: float = 1.0

    def __post_init__(self):
        if int(self.length) != self.length or self.length < 2:
            raise ValueError(f"chain length must be an integer >= 2, got {self.length}")
        if not 0.0 <= self.slip_prob < 1.0:
            raise ValueError(f"slip_prob must lie in [0, 1), got {self.slip_prob}")
        if not self.small_reward < self.large_reward:
            raise ValueError("small_reward must be smaller than large_reward")


def make_chain(spec: ChainSpec, discount: float = 0.99) -> FiniteMdp:
    """Build the slippery chain: start at the left end, small reward there, large reward at the right end.

    Each move goes the intended way with probability ``1 - slip_prob`` and the
    opposite way otherwise; moves past either end leave the agent in place.
    Reward depends only on the arrival state, so staying at an end pays again.
    """
    n = spec.length
    transition = np.zeros((n, 2, n))
    for s in range(n):
        left, right = max(s - 1, 0), min(s + 1, n - 1)
        transition[s, LEFT, left] += 1.0 - spec.slip_prob
        transition[s, LEFT, right] += spec.slip_prob
        transition[s, RIGHT, right] += 1.0 - spec.slip_prob
        transition[s, RIGHT, left] += spec.slip_prob
    arrival = np.zeros(n)
    arrival[0] = spec.small_reward
    arrival[n - 1] = spec.large_reward
    reward = np.broadcast_to(arrival, (n, 2, n))
    return FiniteMdp(transition, reward, discount, r_max=max(spec.large_reward, 0.0), start_state=0)


def validate(mdp: FiniteMdp) -> list[str]:
    """Return one message per violated invariant; an empty list means the MDP is valid."""
    problems = []
    S, A = mdp.num_states, mdp.num_actions
    if not 0.0 <= mdp.discount < 1.0:
        problems.append(f"discount {mdp.discount} outside [0, 1)")
    if mdp.r_max < 0:
        problems.append(f"r_max {mdp.r_max} is negative")
    if not 0 <= mdp.start_state < S:
        problems.append(f"start_state {mdp.start_state} outside [0, {S})")
    for s in range(S):
        for a in range(A):
            row = mdp.transition[s, a]
            if (row < 0).any():
                bad = [int(k) for k in np.flatnonzero(row < 0)]
                problems.append(f"transition ({s}, {a}) has negative entries at next states {bad}")
            total = row.sum()
            if abs(total - 1.0) > ROW_SUM_TOL:
                problems.append(
                    f"transition ({s}, {a}) sums to {total:.15g} (deficit {1.0 - total:.3g})"
                )
            for s2 in np.flatnonzero(row > 0):
                r = mdp.reward[s, a, s2]
                if not 0.0 <= r <= mdp.r_max:
                    problems.append(
                        f"reward ({s}, {a}, {int(s2)}) = {r} outside [0, r_max={mdp.r_max}]"
                    )
    return problems


@numba.njit(cache=True)
def sample_next(cdf_row, u):
    """Inverse-CDF draw of the next state from one uniform ``u`` in [0, 1)."""
    n = cdf_row.shape[0]
    for k in range(n):
        if u < cdf_row[k]:
            return k
    # rounding left the last cumulative entry below 1; fall back to the last supported state
    k = n - 1
    while k > 0 and cdf_row[k] == cdf_row[k - 1]:
        k -= 1
    return k


def step(mdp: FiniteMdp, s: int, a: int, rng: np.random.Generator) -> tuple[int, float]:
    """Sample one transition, consuming exactly one uniform draw from ``rng``."""
    if not 0 <= s < mdp.num_states:
        raise IndexError(f"state {s} out of range [0, {mdp.num_states})")
    if not 0 <= a < mdp.num_actions:
        raise IndexError(f"action {a} out of range [0, {mdp.num_actions})")
    s_next = int(sample_next(mdp.cdf[s, a], rng.random()))
    return s_next, float(mdp.reward[s, a, s_next])


def make_micro_mdp(discount: float = 0.5) -> FiniteMdp:
    """Two-state, two-action stochastic MDP used for the theoretical-parameter audits.

    Action 0 tends to stay put, action 1 tends to switch; arriving in state 1 pays 1.
    """
    transition = np.array(
        [
            [[0.75, 0.25], [0.25, 0.75]],
            [[0.25, 0.75], [0.75, 0.25]],
        ]
    )
    reward = np.broadcast_to(np.array([0.0, 1.0]), (2, 2, 2))
    return FiniteMdp(transition, reward, discount, r_max=1.0, start_state=0)
