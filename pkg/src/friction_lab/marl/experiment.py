"""Factorial sweep over alignment, stake and noise levels with seeded replications."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import FrictionLabError, ParameterError, TableError
from ..kernel import KernelTriple, friction
from .agents import AgentConfig, TrainingResult, train_agents
from .env import EnvConfig, make_rewards
from .metrics import (
    NEVER,
    cooperative_optimum,
    convergence_time,
    measured_alignment,
    pareto_inefficiency,
    policy_variance,
    realized_reward,
)

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1

COLUMNS = (
    "alpha_index",
    "sigma_index",
    "epsilon_index",
    "replication",
    "alpha",
    "sigma",
    "epsilon",
    "seed",
    "reward_gap",
    "convergence_time",
    "policy_variance",
    "pareto_inefficiency",
    "measured_alignment",
    "theoretical_friction",
    "error",
)


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def run_seed(master_seed: int, condition: int, replication: int) -> int:
    """Independent 64-bit seed for one run: splitmix64 folded over the three keys."""
    h = splitmix64(int(master_seed) & MASK64)
    h = splitmix64(h ^ int(condition))
    return splitmix64(h ^ int(replication))


@dataclass(frozen=True)
class ExperimentDesign:
    alpha_levels: tuple[float, ...] = (-0.8, -0.4, 0.0, 0.4, 0.8)
    sigma_levels: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    epsilon_levels: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    replications: int = 30
    master_seed: int = 0
    eval_window: float = 0.1
    convergence_delta: float = 0.5
    convergence_window: int = 1
    alignment_samples: int = 10000
    target_scale: float = 0.5

    def __post_init__(self):
        for name in ("alpha_levels", "sigma_levels", "epsilon_levels"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ParameterError(f"{name} must not be empty")
            object.__setattr__(self, name, vals)
        if any(not -1 < a <= 1 for a in self.alpha_levels):
            raise ParameterError("alignment levels must lie in (-1, 1]")
        if any(not 0 <= s <= 1 for s in self.sigma_levels):
            raise ParameterError("stake levels must lie in [0, 1]")
        if any(not 0 <= e <= 1 for e in self.epsilon_levels):
            raise ParameterError("noise levels must lie in [0, 1]")
        if self.replications < 1:
            raise ParameterError("replications must be >= 1")
        if not 0 <= self.master_seed <= MASK64:
            raise ParameterError("master seed must be an unsigned 64-bit integer")

    @property
    def shape(self):
        return len(self.alpha_levels), len(self.sigma_levels), len(self.epsilon_levels)

    def conditions(self):
        """Yield (flat index, (i, j, k), (alpha, sigma, epsilon)) in row-major order."""
        na, ns, ne = self.shape
        for i in range(na):
            for j in range(ns):
                for k in range(ne):
                    yield (i * ns + j) * ne + k, (i, j, k), (
                        self.alpha_levels[i], self.sigma_levels[j], self.epsilon_levels[k])

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in
                ((f, getattr(self, f)) for f in self.__dataclass_fields__)}


@dataclass
class MetricsRecord:
    alpha_index: int
    sigma_index: int
    epsilon_index: int
    replication: int
    alpha: float
    sigma: float
    epsilon: float
    seed: int
    reward_gap: float = math.nan
    convergence_time: int | str = NEVER
    policy_variance: float = math.nan
    pareto_inefficiency: float = math.nan
    measured_alignment: float = math.nan
    theoretical_friction: float = math.nan
    error: str = ""
    final_policy: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return not self.error

    def convergence_value(self, episodes: int) -> float:
        """Numeric convergence time with ``never`` mapped to ``episodes + 1``."""
        return float(episodes + 1) if self.convergence_time == NEVER else float(self.convergence_time)

    def row(self) -> list[str]:
        out = []
        for c in COLUMNS:
            v = getattr(self, c)
            out.append(repr(float(v)) if isinstance(v, float) else str(v))
        return out


def _one_run(args):
    design, env, agent, flat, ijk, levels, rep, backend = args
    alpha, sigma, eps = levels
    seed = run_seed(design.master_seed, flat, rep)
    rec = MetricsRecord(*ijk, rep, alpha, sigma, eps, seed)
    rec.theoretical_friction = friction(KernelTriple(alpha, sigma, eps))
    try:
        rng = np.random.Generator(np.random.PCG64(seed))
        rewards = make_rewards(alpha, sigma, env, rng, design.target_scale)
        result: TrainingResult = train_agents(env, rewards, agent, rng, noise_level=eps, backend=backend)
        opt = cooperative_optimum(rewards, env)
        rec.reward_gap = opt.mean_reward - realized_reward(result.reward_trace, design.eval_window)
        rec.convergence_time = convergence_time(
            result.encoded_trace(), design.convergence_delta, design.convergence_window)
        per_agent = realized_reward(result.agent_rewards, design.eval_window)
        rec.pareto_inefficiency = pareto_inefficiency(per_agent, rewards, env)
        rec.measured_alignment = measured_alignment(rewards, env, design.alignment_samples, rng)
        rec.final_policy = result.encode()
    except FrictionLabError as exc:
        rec.error = f"{exc.kind}: {exc}"
    return rec


def run_experiment(
    design: ExperimentDesign,
    env_cfg: EnvConfig,
    agent_cfg: AgentConfig,
    workers: int = 1,
    backend: str | None = None,
) -> list[MetricsRecord]:
    """Run every condition and replication; records come back in (condition, replication) order.

    Each run draws from its own generator seeded by ``run_seed``, so results do
    not depend on ``workers``. A failing run keeps its row with ``error`` set.
    Policy variance is a per-condition quantity and is copied to each row of
    that condition.
    """
    tasks = [
        (design, env_cfg, agent_cfg, flat, ijk, levels, rep, backend)
        for flat, ijk, levels in design.conditions()
        for rep in range(design.replications)
    ]
    log.info("running %d conditions x %d replications", len(tasks) // design.replications, design.replications)
    if workers <= 1:
        records = [_one_run(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_one_run, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    by_condition: dict[tuple, list[MetricsRecord]] = {}
    for r in records:
        by_condition.setdefault((r.alpha_index, r.sigma_index, r.epsilon_index), []).append(r)
    for group in by_condition.values():
        pols = [r.final_policy for r in group if r.ok]
        var = policy_variance(pols) if len(pols) >= 2 else (0.0 if len(pols) == 1 else math.nan)
        for r in group:
            r.policy_variance = var
    return records


# ---------------------------------------------------------------------------
# CSV


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


_INT = {"alpha_index", "sigma_index", "epsilon_index", "replication", "seed"}
_FLOAT = {"alpha", "sigma", "epsilon", "reward_gap", "policy_variance", "pareto_inefficiency",
          "measured_alignment", "theoretical_friction"}


def _parse_row(cells, line, path):
    vals = {}
    for c, cell in zip(COLUMNS, cells):
        try:
            if c in _INT:
                vals[c] = int(cell)
            elif c in _FLOAT:
                vals[c] = float(cell)
            elif c == "convergence_time":
                vals[c] = cell if cell == NEVER else int(cell)
            else:
                vals[c] = cell
        except ValueError:
            raise TableError(f"column {c!r}: cannot parse {cell!r}", row=line, path=path) from None
    return MetricsRecord(**vals)


def records_from_csv(text: str, path: str | None = None) -> list[MetricsRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != COLUMNS:
        raise TableError(f"header must be {','.join(COLUMNS)}", row=1, path=path)
    out = []
    for cells in reader:
        if not cells:
            continue
        if len(cells) != len(COLUMNS):
            raise TableError(f"expected {len(COLUMNS)} fields, got {len(cells)}", row=reader.line_num, path=path)
        out.append(_parse_row(cells, reader.line_num, path))
    return out


def read_records(path) -> list[MetricsRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return records_from_csv(fh.read(), str(path))
