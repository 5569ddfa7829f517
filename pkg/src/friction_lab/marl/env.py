"""Shared-resource environment with quadratic target rewards and noisy observations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError

DEFAULT_CAPACITY = 2.0
DEFAULT_STEP = 0.1
DEFAULT_TARGET_SCALE = 0.5


@dataclass(frozen=True)
class EnvConfig:
    n_agents: int = 2
    m_resources: int = 2
    capacity: tuple[float, ...] | float = DEFAULT_CAPACITY
    step_size: float = DEFAULT_STEP
    episode_length: int = 100
    initial_state: tuple[float, ...] | str | None = None

    def __post_init__(self):
        if self.n_agents < 1:
            raise ParameterError("need at least one agent")
        if self.m_resources < 1:
            raise ParameterError("need at least one resource")
        cap = np.broadcast_to(np.asarray(self.capacity, dtype=float), (self.m_resources,))
        if np.any(cap <= 0):
            raise ParameterError("capacities must be > 0")
        if not self.step_size > 0:
            raise ParameterError("step size must be > 0")
        if self.episode_length < 1:
            raise ParameterError("episode length must be >= 1")
        object.__setattr__(self, "capacity", tuple(float(c) for c in cap))
        if self.initial_state == "uniform":
            return
        if isinstance(self.initial_state, str):
            raise ParameterError(f"initial state must be a vector or 'uniform', got {self.initial_state!r}")
        init = cap / 2 if self.initial_state is None else np.asarray(self.initial_state, dtype=float)
        if init.shape != (self.m_resources,) or np.any(init < 0) or np.any(init > cap):
            raise ParameterError("initial state must lie inside the capacity box")
        object.__setattr__(self, "initial_state", tuple(float(x) for x in init))

    @property
    def cap(self) -> np.ndarray:
        return np.array(self.capacity)

    @property
    def random_start(self) -> bool:
        return self.initial_state == "uniform"

    def starts(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Initial resource levels for ``count`` episodes, shape (count, m)."""
        if self.random_start:
            return rng.random((count, self.m_resources)) * self.cap
        return np.tile(np.array(self.initial_state), (count, 1))

    @property
    def action_count(self) -> int:
        return 3 ** self.m_resources

    def to_dict(self):
        return {
            "n_agents": self.n_agents,
            "m_resources": self.m_resources,
            "capacity": list(self.capacity),
            "step_size": self.step_size,
            "episode_length": self.episode_length,
            "initial_state": self.initial_state if self.random_start else list(self.initial_state),
        }


@dataclass(frozen=True)
class RewardParams:
    """R_i(s) = sum_j weights[i, j] * -(s_j - targets[i, j])**2."""

    weights: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        t = np.array(self.targets, dtype=float)
        if w.ndim != 2 or w.shape != t.shape:
            raise ParameterError("weights and targets must be matching agent-by-resource matrices")
        if np.any((w < 0) | (w > 1)):
            raise ParameterError("weights must lie in [0, 1]")
        if not np.all(np.isfinite(t)):
            raise ParameterError("targets must be finite")
        w.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "targets", t)

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0]

    def __call__(self, state) -> np.ndarray:
        """Per-agent rewards; ``state`` may carry leading batch dimensions."""
        s = np.asarray(state, dtype=float)[..., None, :]
        return -np.sum(self.weights * (s - self.targets) ** 2, axis=-1)


def decode_action(index: int, m: int) -> np.ndarray:
    """Map an action index in [0, 3**m) to its request vector in {-1, 0, 1}**m."""
    return np.array([(index // 3 ** j) % 3 - 1 for j in range(m)])


def encode_action(request) -> int:
    return int(sum((int(a) + 1) * 3 ** j for j, a in enumerate(request)))


def action_table(m: int) -> np.ndarray:
    return np.array([decode_action(a, m) for a in range(3 ** m)], dtype=np.int64)


def env_step(state, joint_action, cfg: EnvConfig, rewards: RewardParams | None = None):
    """Advance the resource levels by the mean request; returns (next_state, rewards).

    ``joint_action`` is an agent-by-resource array of requests in {-1, 0, 1}.
    Rewards are evaluated at the next state and are ``None`` when no reward
    parameters are given.
    """
    a = np.asarray(joint_action)
    if a.shape != (cfg.n_agents, cfg.m_resources):
        raise ParameterError(f"joint action must have shape {(cfg.n_agents, cfg.m_resources)}, got {a.shape}")
    if not np.all(np.isin(a, (-1, 0, 1))):
        raise ParameterError("requests must be -1, 0 or +1")
    nxt = np.clip(np.asarray(state, dtype=float) + cfg.step_size * a.mean(axis=0), 0.0, cfg.cap)
    return nxt, (None if rewards is None else rewards(nxt))


def target_loadings(alpha: float, n: int) -> np.ndarray:
    """Matrix L with unit-norm rows and pairwise inner products ``alpha``.

    Non-negative alpha uses a shared factor; negative alpha uses the symmetric
    square root of the equicorrelation matrix, which exists only for
    alpha >= -1/(n-1).
    """
    if not -1.0 <= alpha <= 1.0:
        raise ParameterError("target correlation must lie in [-1, 1]")
    if alpha >= 0:
        L = np.zeros((n, n + 1))
        L[:, 0] = math.sqrt(alpha)
        L[:, 1:] = math.sqrt(1.0 - alpha) * np.eye(n)
        return L
    if n == 2:
        a = math.sqrt(-alpha)
        b = math.sqrt(1.0 + alpha)
        return np.array([[a, b, 0.0], [-a, 0.0, b]])
    if alpha < -1.0 / (n - 1) - 1e-12:
        raise ParameterError(f"correlation {alpha} is infeasible for {n} agents (minimum {-1 / (n - 1):.4f})")
    R = (1 - alpha) * np.eye(n) + alpha * np.ones((n, n))
    vals, vecs = np.linalg.eigh(R)
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def make_rewards(
    alpha_level: float,
    sigma_level: float,
    cfg: EnvConfig,
    rng: np.random.Generator,
    target_scale: float = DEFAULT_TARGET_SCALE,
) -> RewardParams:
    """Draw targets whose cross-agent correlation per resource is ``alpha_level``.

    Targets are centred on the middle of the capacity box with spread
    ``target_scale``. Every weight equals ``sigma_level``, so each agent's
    mean weight is exactly the stake level.
    """
    if not 0.0 <= sigma_level <= 1.0:
        raise ParameterError("stake level must lie in [0, 1]")
    L = target_loadings(alpha_level, cfg.n_agents)
    z = rng.standard_normal((L.shape[1], cfg.m_resources))
    targets = cfg.cap / 2 + target_scale * (L @ z)
    return RewardParams(np.full((cfg.n_agents, cfg.m_resources), float(sigma_level)), targets)


def observe(state, epsilon_level: float, rng: np.random.Generator, n_agents: int = 1) -> np.ndarray:
    """Independent Gaussian views of ``state``, one row per agent, variance ``epsilon_level``."""
    if not 0.0 <= epsilon_level <= 1.0:
        raise ParameterError("noise level must lie in [0, 1]")
    s = np.asarray(state, dtype=float)
    noise = rng.standard_normal((n_agents,) + s.shape)
    return s + math.sqrt(epsilon_level) * noise


def optimal_state(rewards: RewardParams, cfg: EnvConfig, weights=None):
    """Maximiser of the (optionally agent-weighted) reward sum inside the box.

    Returns ``(state, degenerate)`` where ``degenerate`` flags resources whose
    total weight is zero; those sit at the capacity midpoint.
    """
    lam = np.ones(rewards.n_agents) if weights is None else np.asarray(weights, dtype=float)
    W = lam[:, None] * rewards.weights
    total = W.sum(axis=0)
    degenerate = total <= 0
    safe = np.where(degenerate, 1.0, total)
    s = np.where(degenerate, cfg.cap / 2, (W * rewards.targets).sum(axis=0) / safe)
    return np.clip(s, 0.0, cfg.cap), degenerate
