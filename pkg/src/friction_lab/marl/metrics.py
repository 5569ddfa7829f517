"""Observable coordination-failure measures computed from training traces."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateInputError, ParameterError, UndefinedError
from .env import EnvConfig, RewardParams, optimal_state

NEVER = "never"


@dataclass(frozen=True)
class Optimum:
    state: np.ndarray
    agent_rewards: np.ndarray
    degenerate: np.ndarray

    @property
    def mean_reward(self) -> float:
        return float(self.agent_rewards.mean())


def cooperative_optimum(rewards: RewardParams, cfg: EnvConfig) -> Optimum:
    """Box-constrained maximiser of the agents' summed reward."""
    s, degenerate = optimal_state(rewards, cfg)
    return Optimum(s, rewards(s), degenerate)


def realized_reward(reward_trace, window: float = 0.1) -> float:
    """Mean of the final ``window`` fraction of per-episode rewards (at least one episode)."""
    trace = np.asarray(reward_trace, dtype=float)
    if trace.size == 0:
        raise DegenerateInputError("reward trace is empty")
    if not 0 < window <= 1:
        raise ParameterError("window must lie in (0, 1]")
    k = max(1, int(round(window * trace.shape[0])))
    return float(trace[-k:].mean(axis=0).mean()) if trace.ndim == 1 else trace[-k:].mean(axis=0)


def reward_gap(reward_trace, rewards: RewardParams, cfg: EnvConfig, window: float = 0.1) -> float:
    """Best attainable mean-agent reward minus the realised mean-agent reward."""
    return cooperative_optimum(rewards, cfg).mean_reward - realized_reward(reward_trace, window)


def convergence_time(policy_trace, delta: float = 0.5, window: int = 1):
    """First episode ``e`` (1-based count of changes) after which the policy stays put.

    Returns the smallest ``e >= 1`` such that the max-norm change between
    consecutive encodings is below ``delta`` for ``window`` consecutive
    transitions starting at ``e``; ``NEVER`` when no such run exists. With
    ``window=1`` this is the first sub-threshold change.
    """
    trace = np.asarray(policy_trace, dtype=float)
    if trace.shape[0] < 2:
        raise ParameterError("need at least two policy snapshots")
    if window < 1:
        raise ParameterError("window must be >= 1")
    flat = trace.reshape(trace.shape[0], -1)
    calm = np.max(np.abs(np.diff(flat, axis=0)), axis=1) < delta
    run = 0
    for e, ok in enumerate(calm, start=1):
        run = run + 1 if ok else 0
        if run == window:
            return e - window + 1
    return NEVER


def policy_variance(policies) -> float:
    """Mean squared Euclidean distance of each replication's encoding from the mean encoding."""
    P = [np.asarray(p, dtype=float).ravel() for p in policies]
    if len(P) < 2:
        raise ParameterError("need at least two replications")
    if len({p.shape for p in P}) != 1:
        raise ParameterError("policy encodings differ in length")
    X = np.stack(P)
    return float(np.mean(np.sum((X - X.mean(axis=0)) ** 2, axis=1)))


def scalarization_grid(n: int, resolution: int) -> np.ndarray:
    """All weight vectors on the simplex with entries in multiples of 1/resolution."""
    pts = [c for c in itertools.product(range(resolution + 1), repeat=n - 1) if sum(c) <= resolution]
    return np.array([list(c) + [resolution - sum(c)] for c in pts], dtype=float) / resolution


def pareto_frontier(rewards: RewardParams, cfg: EnvConfig, resolution: int = 100) -> np.ndarray:
    """Reward vectors at the optima of weighted reward sums, one row per weighting."""
    if cfg.n_agents > 6:
        raise ParameterError("frontier sampling supports at most six agents")
    res = resolution if cfg.n_agents <= 3 else max(4, resolution // 10)
    pts = []
    for lam in scalarization_grid(cfg.n_agents, res):
        s, _ = optimal_state(rewards, cfg, lam)
        pts.append(rewards(s))
    if not pts:
        raise DegenerateInputError("empty frontier sample")
    return np.unique(np.array(pts), axis=0)


def pareto_inefficiency(realized, rewards: RewardParams, cfg: EnvConfig, frontier=None) -> float:
    """Euclidean distance from the realised per-agent reward vector to the nearest frontier sample."""
    F = pareto_frontier(rewards, cfg) if frontier is None else np.asarray(frontier, dtype=float)
    if F.size == 0:
        raise DegenerateInputError("empty frontier sample")
    r = np.asarray(realized, dtype=float)
    if r.shape != (F.shape[1],):
        raise ParameterError("realised rewards need one entry per agent")
    return float(np.min(np.linalg.norm(F - r, axis=1)))


def measured_alignment(rewards: RewardParams, cfg: EnvConfig, samples: int, rng: np.random.Generator) -> float:
    """Pearson correlation of agents' rewards over uniformly drawn states.

    Two agents give their pairwise value; more give the mean over pairs.
    """
    if samples < 2:
        raise ParameterError("need at least two samples")
    if cfg.n_agents < 2:
        raise ParameterError("alignment needs at least two agents")
    S = rng.random((samples, cfg.m_resources)) * cfg.cap
    R = rewards(S)
    sd = R.std(axis=0)
    if np.any(sd == 0):
        raise UndefinedError("an agent's reward is constant over the sampled states")
    C = np.corrcoef(R, rowvar=False)
    iu = np.triu_indices(cfg.n_agents, 1)
    return float(np.clip(C[iu].mean(), -1.0, 1.0))


def exact_reward_correlation(rewards: RewardParams, cfg: EnvConfig) -> float:
    """Population correlation of two agents' rewards under uniform states, in closed form.

    Per resource, with s ~ U(0, C) and x = s - c, the reward terms are
    -w (x - d)^2 with d = tau - c. Moments of x up to fourth order give the
    covariance; resources are independent so covariances add.
    """
    if cfg.n_agents != 2:
        raise ParameterError("closed form covers two agents")
    cov = np.zeros((2, 2))
    for j, C in enumerate(cfg.capacity):
        c = C / 2
        m2, m4 = C ** 2 / 12, C ** 4 / 80
        w = rewards.weights[:, j]
        d = rewards.targets[:, j] - c
        # (x - d)^2 = x^2 - 2 d x + d^2; odd moments of x vanish
        for a in range(2):
            for b in range(2):
                e_xy = m4 + 4 * d[a] * d[b] * m2 + d[a] ** 2 * m2 + d[b] ** 2 * m2 + d[a] ** 2 * d[b] ** 2
                mean_a = m2 + d[a] ** 2
                mean_b = m2 + d[b] ** 2
                cov[a, b] += w[a] * w[b] * (e_xy - mean_a * mean_b)
    return float(cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1]))
