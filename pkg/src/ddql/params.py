"""Closed-form hyperparameters and bounds for Directed Delayed Q-learning."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba

E_FLOOR = 1e-300
# relative slack for comparing closed forms that are equal by construction
_REL_TOL = 1e-12


def _ceil(x: float) -> int:
    # values such as 1/0.025 land a few ulps above the intended integer
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


@dataclass(frozen=True)
class HyperParams:
    """Free parameters of the directed agent plus the constants derived from them.

    ``epsilon``, ``delta``, ``m1`` and ``m2`` are ``None`` for hand-picked
    (practical) configurations that do not come from the PAC formulas.
    """

    gamma: float
    gamma_e: float
    epsilon1: float
    m: int
    rho: float
    lam: float
    eta: float
    kappa: float
    v_max: float
    epsilon: float | None = None
    delta: float | None = None
    m1: int | None = None
    m2: int | None = None

    @property
    def log_eta(self) -> float:
        return math.log(self.eta)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> HyperParams:
        return HyperParams(**{**asdict(self), **changes})


def bonus_cap(epsilon1: float, eta: float) -> float:
    """Largest bonus scale for which E <= epsilon1 keeps the bonus <= epsilon1."""
    return epsilon1 * math.sqrt(math.log(epsilon1) / math.log(eta))


def check_hyperparams(p: HyperParams) -> list[str]:
    """List violated invariants of ``p``; empty when all hold."""
    problems = []
    if not 0.0 < p.eta < 1.0:
        problems.append(f"eta={p.eta} outside (0, 1)")
    if not 0.0 < p.gamma_e < 1.0:
        problems.append(f"gamma_e={p.gamma_e} outside (0, 1)")
    if not 0.0 < p.epsilon1 < 0.5:
        problems.append(f"epsilon1={p.epsilon1} outside (0, 0.5)")
    if not 0.0 <= p.gamma < 1.0:
        problems.append(f"gamma={p.gamma} outside [0, 1)")
    if p.m < 1:
        problems.append(f"m={p.m} must be a positive integer")
    if p.lam <= 0:
        problems.append(f"lam={p.lam} must be positive")
    if p.rho <= 0:
        problems.append(f"rho={p.rho} must be positive")
    if not problems:
        cap = bonus_cap(p.epsilon1, p.eta)
        if p.lam > cap * (1 + _REL_TOL):
            problems.append(f"lam={p.lam} exceeds epsilon1*sqrt(log_eta epsilon1)={cap}")
        rho_cap = p.epsilon1 * math.sqrt(p.m)
        if p.rho > rho_cap * (1 + _REL_TOL):
            problems.append(f"rho={p.rho} exceeds epsilon1*sqrt(m)={rho_cap}")
    return problems


def derive_params(
    epsilon: float,
    delta: float,
    gamma: float,
    gamma_e: float,
    num_states: int,
    num_actions: int,
    r_max: float = 1.0,
) -> HyperParams:
    """Parameters that make the directed agent PAC-MDP for accuracy ``epsilon`` and confidence ``1 - delta``."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if not 0.0 < gamma_e < 1.0:
        raise ValueError(f"gamma_e must lie in (0, 1), got {gamma_e}")
    if num_states < 1 or num_actions < 1:
        raise ValueError("num_states and num_actions must be positive")
    epsilon1 = epsilon * (1.0 - gamma) / 4.0
    if epsilon1 >= 0.5:
        raise ValueError(f"epsilon*(1-gamma)/4 = {epsilon1} must be below 0.5")
    SA = num_states * num_actions
    kappa = 1.0 / ((1.0 - gamma) * epsilon1)
    v_max = r_max / (1.0 - gamma)
    log_term = math.log(6 * SA * (1 + SA * kappa) / delta)
    m1 = _ceil((1 + gamma * v_max) ** 2 / (2 * epsilon1**2) * log_term)
    m2 = _ceil(gamma_e**2 / (2 * epsilon1**2) * log_term)
    m = max(m1, m2)
    eta = 1.0 - epsilon1
    return HyperParams(
        gamma=gamma,
        gamma_e=gamma_e,
        epsilon1=epsilon1,
        m=m,
        rho=epsilon1 * math.sqrt(m),
        lam=bonus_cap(epsilon1, eta),
        eta=eta,
        kappa=kappa,
        v_max=v_max,
        epsilon=epsilon,
        delta=delta,
        m1=m1,
        m2=m2,
    )


def practical_params(
    gamma: float = 0.99,
    gamma_e: float = 0.99,
    epsilon1: float = 0.01,
    m: int = 10,
    r_max: float = 1.0,
    eta: float | None = None,
    lam: float | None = None,
    rho: float | None = None,
) -> HyperParams:
    """Hand-sized parameters for experiments; unspecified scales follow the PAC relations."""
    if not 0.0 < gamma_e < 1.0:
        raise ValueError(f"gamma_e must lie in (0, 1), got {gamma_e}")
    if not 0.0 < epsilon1 < 1.0:
        raise ValueError(f"epsilon1 must lie in (0, 1), got {epsilon1}")
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    eta = 1.0 - epsilon1 if eta is None else eta
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return HyperParams(
        gamma=gamma,
        gamma_e=gamma_e,
        epsilon1=epsilon1,
        m=int(m),
        rho=epsilon1 * math.sqrt(m) if rho is None else rho,
        lam=bonus_cap(epsilon1, eta) if lam is None else lam,
        eta=eta,
        kappa=1.0 / ((1.0 - gamma) * epsilon1),
        v_max=r_max / (1.0 - gamma),
    )


@numba.njit(cache=True)
def bonus_from_log(e_value, lam, log_eta):
    if e_value >= 1.0:
        raise ValueError("E-value >= 1: the E-table is corrupted")
    if e_value < 0.0:
        raise ValueError("negative E-value: the E-table is corrupted")
    if e_value < E_FLOOR:
        return 0.0
    return lam / math.sqrt(math.log(e_value) / log_eta)


def exploration_bonus(e_value: float, lam: float, eta: float) -> float:
    """Bonus ``lam / sqrt(log_eta(e_value))``; zero once ``e_value`` underflows."""
    if e_value >= 1.0:
        raise ValueError(f"E-value {e_value} >= 1: the E-table is corrupted")
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return bonus_from_log(float(e_value), float(lam), math.log(eta))


def known_set_bound(params: HyperParams, num_states: int, num_actions: int) -> tuple[int, int, int]:
    """(max successful updates, max attempted updates, max steps outside the known set)."""
    SA = num_states * num_actions
    kappa = _ceil(params.kappa)
    m = params.m
    return SA * kappa, SA * m * (1 + SA * kappa), 2 * m * SA * kappa


def max_successes_per_pair(params: HyperParams) -> int:
    """Each success lowers Q' by epsilon1 from its initial value v_max + lam, and Q' stays >= 0."""
    return _ceil((params.v_max + params.lam) / params.epsilon1)


def q_prime_ceiling(params: HyperParams) -> float:
    return params.v_max + math.sqrt(1.0 - params.epsilon1)


def optimism_rho_floor(params: HyperParams, num_states: int, num_actions: int) -> float | None:
    """Smallest rho for which the Azuma step of the optimism argument goes through.

    Returns ``None`` when ``delta`` is unknown (practical parameters).
    """
    if params.delta is None:
        return None
    SA = num_states * num_actions
    inner = 3 * SA * params.m * (1 + SA * params.kappa) / params.delta
    return (1 + params.gamma * params.v_max) * math.sqrt(0.5 * math.log(inner))


def mistake_bound(params: HyperParams, num_states: int, num_actions: int) -> float | None:
    """Leading-order sample-complexity expression with unit constant."""
    if params.epsilon is None or params.delta is None:
        return None
    eps, delta, g = params.epsilon, params.delta, params.gamma
    SA = num_states * num_actions
    return (
        SA
        / (eps**4 * (1 - g) ** 8)
        * math.log(1 / delta)
        * math.log(1 / (eps * (1 - g)))
        * math.log(SA / (delta * eps * (1 - g)))
    )
