"""Seeded experiment execution, aggregation, rendering and run diagnostics."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import agents
from .mdp import ChainSpec, FiniteMdp, make_chain, step, validate
from .params import derive_params, practical_params
from .solver import evaluate_policy, known_set, value_iteration

METHOD_KINDS = ("directed", "delayed", "eps_greedy")
METHOD_LABELS = {
    "directed": "Directed Delayed QL",
    "delayed": "Delayed QL",
    "eps_greedy": "QL + eps-greedy",
}
DEFAULT_GAMMA_ES = (0.99, 0.9, 0.75, 0.5, 0.25)
Z_95 = 1.96

_METHOD_OPTIONS = {
    "directed": {"gamma_e", "m", "epsilon1", "eta", "lam", "rho", "theoretical"},
    "delayed": {"m", "epsilon1"},
    "eps_greedy": {"alpha", "explore", "q_init", "tie_break"},
}
_DIAGNOSTICS = {"mistake_count", "optimism", "escape_count", "epsilon", "known_set_bootstrap"}
_CONFIG_KEYS = {"mdp", "gamma", "methods", "horizon", "num_runs", "base_seed", "diagnostics",
                "output", "workers", "theory"}


class ConfigError(ValueError):
    """A malformed experiment configuration; the message starts with the offending key."""


@dataclass
class MethodConfig:
    kind: str
    options: dict = field(default_factory=dict)

    @property
    def gamma_e(self) -> float | None:
        if self.kind != "directed":
            return None
        return float(self.options.get("gamma_e", 0.99))

    @property
    def label(self) -> str:
        return METHOD_LABELS[self.kind]

    def to_dict(self) -> dict:
        return {"name": self.kind, **self.options}


@dataclass
class ExperimentConfig:
    """One experiment: an environment, the methods to compare and the run protocol.

    ``mdp`` is ``{"chain": {"length": N, ...}}`` or ``{"file": path}``. The
    optional ``theory`` block ``{"epsilon", "delta"}`` switches directed
    methods flagged ``"theoretical": true`` to PAC-derived parameters.
    """

    mdp: dict
    methods: list[MethodConfig]
    gamma: float = 0.99
    horizon: int = 10_000
    num_runs: int = 300
    base_seed: int = 0
    diagnostics: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    workers: int = 1
    theory: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mdp": self.mdp,
            "gamma": self.gamma,
            "methods": [m.to_dict() for m in self.methods],
            "horizon": self.horizon,
            "num_runs": self.num_runs,
            "base_seed": self.base_seed,
            "diagnostics": self.diagnostics,
            "output": self.output,
            "workers": self.workers,
            "theory": self.theory,
        }


def default_methods(gamma_es: Iterable[float] = DEFAULT_GAMMA_ES) -> list[MethodConfig]:
    methods = [MethodConfig("directed", {"gamma_e": float(g)}) for g in gamma_es]
    return methods + [MethodConfig("delayed"), MethodConfig("eps_greedy")]


def _number(value, key, kind=float, low=None, high=None, low_open=False, high_open=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    value = kind(value)
    if low is not None and (value < low or (low_open and value == low)):
        raise ConfigError(f"{key}: {value} is below the allowed range")
    if high is not None and (value > high or (high_open and value == high)):
        raise ConfigError(f"{key}: {value} is above the allowed range")
    return value


def _method_from_dict(data, key) -> MethodConfig:
    if isinstance(data, str):
        data = {"name": data}
    if not isinstance(data, dict):
        raise ConfigError(f"{key}: expected an object or a method name")
    kind = data.get("name")
    if kind not in METHOD_KINDS:
        raise ConfigError(f"{key}.name: unknown method {kind!r}, expected one of {METHOD_KINDS}")
    options = {k: v for k, v in data.items() if k != "name"}
    for opt in options:
        if opt not in _METHOD_OPTIONS[kind]:
            raise ConfigError(f"{key}.{opt}: not an option of method {kind!r}")
    checks = {
        "gamma_e": dict(low=0.0, high=1.0, low_open=True, high_open=True),
        "m": dict(kind=int, low=1),
        "epsilon1": dict(low=0.0, high=1.0, low_open=True, high_open=True),
        "eta": dict(low=0.0, high=1.0, low_open=True, high_open=True),
        "lam": dict(low=0.0, low_open=True),
        "rho": dict(low=0.0, low_open=True),
        "alpha": dict(low=0.0, high=1.0, low_open=True),
        "explore": dict(low=0.0, high=1.0),
        "q_init": dict(),
    }
    for opt, value in options.items():
        if opt in checks:
            options[opt] = _number(value, f"{key}.{opt}", **checks[opt])
    if "tie_break" in options and options["tie_break"] not in ("first", "random"):
        raise ConfigError(f"{key}.tie_break: expected 'first' or 'random'")
    if "theoretical" in options and not isinstance(options["theoretical"], bool):
        raise ConfigError(f"{key}.theoretical: expected true or false")
    return MethodConfig(kind, options)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a parsed config document; every error names the offending key."""
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    for key in data:
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{key}: unknown config key")
    mdp = data.get("mdp", {"chain": {"length": 10}})
    if not isinstance(mdp, dict) or len(mdp) != 1 or next(iter(mdp)) not in ("chain", "file"):
        raise ConfigError("mdp: expected {'chain': {...}} or {'file': path}")
    if "chain" in mdp:
        chain = mdp["chain"]
        if not isinstance(chain, dict):
            raise ConfigError("mdp.chain: expected an object")
        for k in chain:
            if k not in ("length", "slip_prob", "small_reward", "large_reward"):
                raise ConfigError(f"mdp.chain.{k}: unknown chain field")
        if "length" not in chain:
            raise ConfigError("mdp.chain.length: missing")
        _number(chain["length"], "mdp.chain.length", kind=int, low=2)
        if "slip_prob" in chain:
            _number(chain["slip_prob"], "mdp.chain.slip_prob", low=0.0, high=1.0, high_open=True)
    elif not isinstance(mdp["file"], str):
        raise ConfigError("mdp.file: expected a path string")
    methods_raw = data.get("methods")
    if methods_raw is None:
        methods = default_methods()
    else:
        if not isinstance(methods_raw, list) or not methods_raw:
            raise ConfigError("methods: expected a non-empty list")
        methods = [_method_from_dict(m, f"methods[{i}]") for i, m in enumerate(methods_raw)]
    diagnostics = data.get("diagnostics", {})
    if not isinstance(diagnostics, dict):
        raise ConfigError("diagnostics: expected an object")
    for k in diagnostics:
        if k not in _DIAGNOSTICS:
            raise ConfigError(f"diagnostics.{k}: unknown diagnostic")
    theory = data.get("theory", {})
    if not isinstance(theory, dict):
        raise ConfigError("theory: expected an object")
    for k in theory:
        if k not in ("epsilon", "delta"):
            raise ConfigError(f"theory.{k}: unknown field")
    if any(m.options.get("theoretical") for m in methods):
        for k in ("epsilon", "delta"):
            if k not in theory:
                raise ConfigError(f"theory.{k}: required by a theoretical method")
    output = data.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output: expected an object")
    if output.get("format", "table") not in RENDER_FORMATS:
        raise ConfigError(f"output.format: expected one of {RENDER_FORMATS}")
    return ExperimentConfig(
        mdp=mdp,
        methods=methods,
        gamma=_number(data.get("gamma", 0.99), "gamma", low=0.0, high=1.0, high_open=True),
        horizon=_number(data.get("horizon", 10_000), "horizon", kind=int, low=1),
        num_runs=_number(data.get("num_runs", 300), "num_runs", kind=int, low=1),
        base_seed=_number(data.get("base_seed", 0), "base_seed", kind=int, low=0),
        diagnostics=diagnostics,
        output=output,
        workers=_number(data.get("workers", 1), "workers", kind=int, low=1),
        theory=theory,
    )


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON ({exc})") from exc
    return config_from_dict(data)


# ---------------------------------------------------------------- building


def build_mdp(config: ExperimentConfig) -> FiniteMdp:
    if "chain" in config.mdp:
        return make_chain(ChainSpec(**config.mdp["chain"]), discount=config.gamma)
    mdp = FiniteMdp.load(config.mdp["file"]).with_discount(config.gamma)
    problems = validate(mdp)
    if problems:
        raise ConfigError(f"mdp.file: invalid MDP: {problems[0]}")
    return mdp


def directed_params(config: ExperimentConfig, method: MethodConfig, mdp: FiniteMdp):
    opts = method.options
    if opts.get("theoretical"):
        return derive_params(config.theory["epsilon"], config.theory["delta"], mdp.discount,
                             method.gamma_e, mdp.num_states, mdp.num_actions, mdp.r_max)
    return practical_params(
        gamma=mdp.discount,
        gamma_e=method.gamma_e,
        epsilon1=opts.get("epsilon1", 0.01),
        m=opts.get("m", 10),
        r_max=mdp.r_max,
        eta=opts.get("eta"),
        lam=opts.get("lam"),
        rho=opts.get("rho"),
    )


def build_agent(config: ExperimentConfig, method: MethodConfig, mdp: FiniteMdp,
                check_invariants: bool = False) -> agents.TabularAgent:
    S, A = mdp.num_states, mdp.num_actions
    opts = method.options
    if method.kind == "directed":
        return agents.DirectedDelayedQLearning(S, A, directed_params(config, method, mdp),
                                               check_invariants=check_invariants)
    if method.kind == "delayed":
        return agents.DelayedQLearning(S, A, mdp.discount, opts.get("m", 10),
                                       opts.get("epsilon1", 0.01), mdp.r_max)
    return agents.EpsGreedyQLearning(S, A, mdp.discount, opts.get("alpha", 0.1),
                                     opts.get("explore", 0.1), opts.get("q_init", 0.0),
                                     opts.get("tie_break", "first"))


def run_generators(base_seed: int, method_index: int, seed_index: int):
    """(environment, agent) generators for one run, keyed by counters rather than call order."""
    seq = np.random.SeedSequence(base_seed, spawn_key=(method_index, seed_index))
    env_seq, agent_seq = seq.spawn(2)
    return np.random.default_rng(env_seq), np.random.default_rng(agent_seq)


# ------------------------------------------------------------------- runs


@dataclass
class RunRecord:
    method: str
    gamma_e: float | None
    method_index: int
    seed: int
    cumulative_reward: float
    attempted_updates: int
    successful_updates: int
    rewards: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class RunTrace:
    """Step-by-step record of one run plus snapshots of the agent after every value change.

    ``snapshots`` holds ``(step_index, scores, q, e, greedy_policy)``: the
    tables in force from ``step_index`` onward (``e`` is ``None`` for agents
    without E-values).
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    attempted: np.ndarray
    succeeded: np.ndarray
    q_prime_sa: np.ndarray
    snapshots: list

    def policies(self):
        """Yield (first_step, greedy policy matrix) for each snapshot."""
        for start, _, _, _, policy in self.snapshots:
            yield start, policy

    def csv_lines(self) -> Iterable[str]:
        yield "t,s,a,r,s_next,attempted,succeeded,q_prime"
        for i in range(len(self.states)):
            yield (f"{i + 1},{self.states[i]},{self.actions[i]},{self.rewards[i]!r},"
                   f"{self.next_states[i]},{int(self.attempted[i])},{int(self.succeeded[i])},"
                   f"{self.q_prime_sa[i]!r}")


def _snapshot(agent, i):
    e = getattr(agent, "e", None)
    return (i, agent.scores(), agent.q.copy(), None if e is None else e.copy(),
            agent.greedy_policy())


def trace_run(agent: agents.TabularAgent, mdp: FiniteMdp, env_rng, agent_rng,
              horizon: int, snapshot_every: int | None = None) -> RunTrace:
    """Step ``agent`` through ``mdp`` one transition at a time, keeping everything.

    Snapshots are taken at the start and after each step whose update changed
    the agent's values; ``snapshot_every`` adds snapshots at a fixed cadence.
    Consumes the generators exactly like ``agent.run`` so both paths agree.
    """
    states = np.empty(horizon, np.int64)
    actions = np.empty(horizon, np.int64)
    next_states = np.empty(horizon, np.int64)
    rewards = np.empty(horizon)
    attempted = np.zeros(horizon, bool)
    succeeded = np.zeros(horizon, bool)
    q_prime_sa = np.empty(horizon)
    snapshots = [_snapshot(agent, 0)]
    s = mdp.start_state
    for i in range(horizon):
        a = agent.act(s, agent_rng)
        s2, r = step(mdp, s, a, env_rng)
        report = agent.observe(s, a, r, s2)
        states[i], actions[i], next_states[i], rewards[i] = s, a, s2, r
        attempted[i], succeeded[i] = report.attempted, report.succeeded
        if report.succeeded or (snapshot_every and (i + 1) % snapshot_every == 0):
            snapshots.append(_snapshot(agent, i + 1))
        q_prime_sa[i] = agent.score(s, a)
        s = s2
    return RunTrace(states, actions, rewards, next_states, attempted, succeeded, q_prime_sa,
                    snapshots)


def run_single(config: ExperimentConfig, method_index: int, seed: int,
               keep_rewards: bool = False, trace_sink=None, mdp: FiniteMdp | None = None) -> RunRecord:
    """One seeded run of ``config.methods[method_index]``.

    Without diagnostics or ``trace_sink`` the compiled loop is used; otherwise
    the run is stepped in Python, which yields the same trajectory.
    """
    if not 0 <= method_index < len(config.methods):
        raise IndexError(f"method index {method_index} out of range")
    method = config.methods[method_index]
    mdp = build_mdp(config) if mdp is None else mdp
    agent = build_agent(config, method, mdp)
    env_rng, agent_rng = run_generators(config.base_seed, method_index, seed)
    diag = config.diagnostics
    wants_trace = trace_sink is not None or any(
        diag.get(k) for k in ("mistake_count", "optimism", "escape_count"))
    record = RunRecord(method.kind, method.gamma_e, method_index, seed, 0.0, 0, 0)
    if wants_trace:
        trace = trace_run(agent, mdp, env_rng, agent_rng, config.horizon)
        rewards = trace.rewards
        record.attempted_updates = int(trace.attempted.sum())
        record.successful_updates = int(trace.succeeded.sum())
        if trace_sink is not None:
            for line in trace.csv_lines():
                trace_sink(method.kind, method.gamma_e, seed, line)
        record.diagnostics = run_diagnostics(config, agent, mdp, trace)
    else:
        env_u = env_rng.random(config.horizon)
        agent_u = agent_rng.random((config.horizon, 2))
        traj = agent.run(mdp, env_u, agent_u)
        rewards = traj.rewards
        record.attempted_updates = int(np.count_nonzero(traj.codes))
        record.successful_updates = int(np.count_nonzero(traj.codes == agents.SUCCEEDED))
    record.cumulative_reward = float(rewards.sum())
    if keep_rewards:
        record.rewards = rewards
    return record


def _run_chunk(args):
    config_dict, jobs = args
    config = config_from_dict(config_dict)
    mdp = build_mdp(config)
    return [run_single(config, mi, seed, mdp=mdp) for mi, seed in jobs]


def run_experiment(config: ExperimentConfig, workers: int | None = None,
                   trace_sink=None) -> list[RunRecord]:
    """All (method, seed) runs, ordered by method then seed regardless of ``workers``."""
    workers = config.workers if workers is None else workers
    jobs = [(mi, seed) for mi in range(len(config.methods)) for seed in range(config.num_runs)]
    if workers <= 1 or trace_sink is not None:
        mdp = build_mdp(config)
        return [run_single(config, mi, seed, trace_sink=trace_sink, mdp=mdp) for mi, seed in jobs]
    build_mdp(config)  # surface configuration errors before forking
    size = max(1, math.ceil(len(jobs) / (4 * workers)))
    chunks = [jobs[i:i + size] for i in range(0, len(jobs), size)]
    payload = config.to_dict()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = pool.map(_run_chunk, [(payload, chunk) for chunk in chunks])
        return [record for chunk in results for record in chunk]


# ------------------------------------------------------------ diagnostics


def mistake_diagnostic(trace: RunTrace, mdp: FiniteMdp, epsilon: float,
                       v_star: np.ndarray | None = None, tol: float = 1e-10) -> int:
    """Number of steps t with V^{pi_t}(s_t) < V*(s_t) - epsilon.

    ``pi_t`` is the agent's stationary greedy policy in force at step t
    (uniform over tied maximizers), standing in for the value of the
    non-stationary learner; each snapshot is evaluated exactly once.
    """
    if v_star is None:
        v_star = value_iteration(mdp, tol=tol).v_star
    starts = [start for start, _ in trace.policies()] + [len(trace.states)]
    count = 0
    for k, (start, policy) in enumerate(trace.policies()):
        stop = starts[k + 1]
        if stop <= start:
            continue
        v_pi = evaluate_policy(mdp, policy, tol=tol)
        visited = trace.states[start:stop]
        count += int(np.count_nonzero(v_pi[visited] < v_star[visited] - epsilon))
    return count


def escape_count(trace: RunTrace, mdp: FiniteMdp, params, bootstrap: str = "q") -> int:
    """Steps whose experienced pair lies outside the known (low Bellman error) set."""
    starts = [snap[0] for snap in trace.snapshots] + [len(trace.states)]
    count = 0
    for k, (start, _, q, e, _) in enumerate(trace.snapshots):
        stop = starts[k + 1]
        if stop <= start:
            continue
        mask = known_set(mdp, q, e, params, bootstrap=bootstrap)
        count += int(np.count_nonzero(~mask[trace.states[start:stop], trace.actions[start:stop]]))
    return count


def optimism_gap(trace: RunTrace, q_star: np.ndarray) -> float:
    """Smallest Q'(s, a) - Q*(s, a) over all pairs and all snapshots (>= 0 means optimistic throughout)."""
    return float(min(np.min(snap[1] - q_star) for snap in trace.snapshots))


def audit_optimism(agent: agents.TabularAgent, mdp: FiniteMdp, env_rng, agent_rng, horizon: int,
                   q_star: np.ndarray, every: int = 1000) -> float:
    """Smallest Q'(s, a) - Q*(s, a) seen at the start and every ``every`` steps of a compiled run."""
    gap = float(np.min(agent.scores() - q_star))
    s = mdp.start_state
    done = 0
    while done < horizon:
        k = min(every, horizon - done)
        traj = agent.run(mdp, env_rng.random(k), agent_rng.random((k, 2)), start=s)
        s = traj.final_state
        done += k
        gap = min(gap, float(np.min(agent.scores() - q_star)))
    return gap


def run_diagnostics(config: ExperimentConfig, agent, mdp: FiniteMdp, trace: RunTrace) -> dict:
    diag = config.diagnostics
    out = {}
    solve = value_iteration(mdp) if any(
        diag.get(k) for k in ("mistake_count", "optimism")) else None
    if diag.get("mistake_count"):
        out["greedy_snapshot_mistakes"] = mistake_diagnostic(trace, mdp, float(diag.get("epsilon", 0.1)),
                                             v_star=solve.v_star)
    if diag.get("optimism"):
        out["optimism_gap"] = optimism_gap(trace, solve.q_star)
    if diag.get("escape_count") and isinstance(agent, agents.DirectedDelayedQLearning):
        bootstrap = diag.get("known_set_bootstrap", "q")
        out["escapes"] = escape_count(trace, mdp, agent.params, bootstrap)
    return out


# ------------------------------------------------------- aggregate/render


@dataclass
class SummaryRow:
    method: str
    gamma_e: float | None
    mean: float
    ci_half_width: float | None
    n_runs: int

    @property
    def label(self) -> str:
        return METHOD_LABELS.get(self.method, self.method)


@dataclass
class SummaryTable:
    rows: list[SummaryRow]

    def row(self, method: str, gamma_e: float | None = None) -> SummaryRow:
        for row in self.rows:
            if row.method == method and row.gamma_e == gamma_e:
                return row
        raise KeyError((method, gamma_e))


def mean_ci(values) -> tuple[float, float | None]:
    """Mean and normal-approximation 95% half-width; ``None`` width for a single value."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        raise ValueError("no values to aggregate")
    mean = float(values.mean())
    if len(values) < 2:
        return mean, None
    return mean, float(Z_95 * values.std(ddof=1) / math.sqrt(len(values)))


def aggregate(records: Iterable[RunRecord]) -> SummaryTable:
    """Group records by (method, gamma_e) in first-appearance order."""
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        groups.setdefault((rec.method, rec.gamma_e), []).append(rec.cumulative_reward)
    rows = []
    for (method, gamma_e), values in groups.items():
        mean, hw = mean_ci(values)
        rows.append(SummaryRow(method, gamma_e, mean, hw, len(values)))
    return SummaryTable(rows)


RENDER_FORMATS = ("csv", "table", "markdown")


def _fmt_gamma_e(gamma_e):
    return "" if gamma_e is None else f"{gamma_e:g}"


def _fmt_reward(row: SummaryRow) -> str:
    if row.ci_half_width is None:
        return f"{row.mean:.2f}±n/a"
    return f"{row.mean:.2f}±{row.ci_half_width:.2f}"


def emit_table(summary: SummaryTable, fmt: str = "table") -> str:
    """Render ``summary`` as CSV, an aligned text table or a markdown table."""
    if fmt not in RENDER_FORMATS:
        raise ValueError(f"unknown format {fmt!r}, expected one of {RENDER_FORMATS}")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "gamma_e", "mean", "ci_half_width", "n_runs"])
        for row in summary.rows:
            writer.writerow([row.method, _fmt_gamma_e(row.gamma_e), repr(row.mean),
                             "" if row.ci_half_width is None else repr(row.ci_half_width),
                             row.n_runs])
        return buf.getvalue()
    header = ["Method", "gamma_E", "Cumulative reward"]
    body = [[row.label, _fmt_gamma_e(row.gamma_e), _fmt_reward(row)] for row in summary.rows]
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|---|---|---:|"]
        lines += ["| " + " | ".join(cells) + " |" for cells in body]
        return "\n".join(lines) + "\n"
    widths = [max(len(r[i]) for r in [header] + body) for i in range(3)]
    lines = []
    for cells in [header] + body:
        lines.append(f"{cells[0]:<{widths[0]}}  {cells[1]:<{widths[1]}}  {cells[2]:>{widths[2]}}".rstrip())
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


PER_RUN_FIELDS = ["method", "gamma_e", "seed", "cumulative_reward", "attempted_updates",
                  "successful_updates"]


def write_per_run_csv(records: list[RunRecord], path_or_file) -> None:
    extra = sorted({k for rec in records for k in rec.diagnostics})
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PER_RUN_FIELDS + extra)
        for rec in records:
            writer.writerow([rec.method, _fmt_gamma_e(rec.gamma_e), rec.seed,
                             repr(rec.cumulative_reward), rec.attempted_updates,
                             rec.successful_updates] + [rec.diagnostics.get(k, "") for k in extra])
    finally:
        if own:
            fh.close()


def read_per_run_csv(path) -> list[RunRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in PER_RUN_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"{missing[0]}: column missing from per-run CSV {path}")
        method_index: dict[tuple, int] = {}
        for line, row in enumerate(reader, start=2):
            try:
                gamma_e = float(row["gamma_e"]) if row["gamma_e"] else None
                key = (row["method"], gamma_e)
                records.append(RunRecord(
                    method=row["method"],
                    gamma_e=gamma_e,
                    method_index=method_index.setdefault(key, len(method_index)),
                    seed=int(row["seed"]),
                    cumulative_reward=float(row["cumulative_reward"]),
                    attempted_updates=int(row["attempted_updates"]),
                    successful_updates=int(row["successful_updates"]),
                ))
            except ValueError as exc:
                raise ConfigError(f"line {line}: malformed per-run row ({exc})") from exc
    return records
