import numpy as np
import pytest

from ddql.mdp import FiniteMdp

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL/WARN line per acceptance check for the terminal summary."""

    def log(criterion: str, status: str, detail: str) -> None:
        line = f"[{status}] {criterion}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def deterministic_mdp(next_state, rewards, discount):
    """MDP whose action a in state s moves to next_state[s][a] paying rewards[s][a]."""
    next_state = np.asarray(next_state)
    S, A = next_state.shape
    transition = np.zeros((S, A, S))
    reward = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            transition[s, a, next_state[s, a]] = 1.0
            reward[s, a, next_state[s, a]] = rewards[s][a]
    return FiniteMdp(transition, reward, discount, r_max=max(1.0, float(np.max(rewards))))


@pytest.fixture
def make_deterministic():
    return deterministic_mdp
