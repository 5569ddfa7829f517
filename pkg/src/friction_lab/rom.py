"""Replicator-mutator dynamics on the probability simplex with consent instantiation.

Populations are plain 1-D float arrays that sum to one. A ``RomSystem`` bundles
per-type weight, survival and a row-stochastic mutation matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import gcd
from typing import Callable, Sequence

import numpy as np

from . import _accel
from . import _rom_kernels as K
from .errors import (
    ConvergenceError,
    ErgodicityError,
    NumericError,
    ParameterError,
)
from .kernel import DelegationDomain, Stakeholder, friction_aggregate, legitimacy

STOCHASTIC_TOL = 1e-9
SIMPLEX_TOL = 1e-9


def _frozen(a, name, ndim):
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ParameterError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def check_stochastic(M, name="mutation"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParameterError(f"{name} must be a square matrix, got shape {M.shape}")
    if np.any(M < 0):
        raise ParameterError(f"{name} has negative entries")
    rows = M.sum(axis=1)
    bad = np.flatnonzero(np.abs(rows - 1.0) > STOCHASTIC_TOL)
    if bad.size:
        raise ParameterError(f"{name} row {int(bad[0])} sums to {rows[bad[0]]!r}, expected 1")
    return M


def check_population(p, n=None):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ParameterError("population must be a 1-D vector")
    if n is not None and p.shape[0] != n:
        raise ParameterError(f"population has {p.shape[0]} entries, system has {n} types")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ParameterError("population entries must be finite and >= 0")
    if abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ParameterError(f"population sums to {p.sum()!r}, expected 1")
    return p


@dataclass(frozen=True)
class ConsentType:
    """A governance configuration whose kernel entries derive from its stakeholders."""

    domain: DelegationDomain
    mean_ownership: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mean_ownership <= 1.0:
            raise ParameterError("mean ownership must lie in [0, 1]")

    @property
    def legitimacy(self):
        return legitimacy(self.domain)

    @property
    def friction(self):
        return friction_aggregate(self.domain)

    @property
    def total_stake(self):
        return self.domain.total_stake

    @property
    def mean_entropy(self):
        return self.domain.mean_entropy

    @property
    def survival(self):
        return consent_survival(self.legitimacy, self.friction)

    @property
    def support_weight(self):
        return consent_weight(self.domain)

    def to_dict(self):
        return {
            "mean_ownership": self.mean_ownership,
            "stakeholders": [
                {"id": s.id, "stake": s.stake, "alignment": s.alignment, "entropy": s.entropy,
                 "voice": s.voice, "consents": s.consents}
                for s in self.domain.stakeholders
            ],
        }

    @classmethod
    def from_dict(cls, data):
        holders = tuple(
            Stakeholder(h.get("id", i), h["stake"], h.get("alignment", 0.0), h.get("entropy", 0.0),
                        h.get("voice", 0.0), h.get("consents", False))
            for i, h in enumerate(data["stakeholders"])
        )
        return cls(DelegationDomain(holders), data.get("mean_ownership", 0.0))


@dataclass(frozen=True)
class OwnershipParams:
    beta: float = 1.0
    gamma_decay: float = 1.0
    gamma_entrench: float = 1.0

    def __post_init__(self):
        for name in ("beta", "gamma_decay", "gamma_entrench"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")


@dataclass(frozen=True)
class RomSystem:
    weights: np.ndarray
    survival: np.ndarray
    mutation: np.ndarray
    consent_types: tuple[ConsentType, ...] = field(default=(), compare=False)

    def __post_init__(self):
        w = _frozen(self.weights, "weights", 1)
        rho = _frozen(self.survival, "survival", 1)
        M = _frozen(self.mutation, "mutation", 2)
        n = w.shape[0]
        if n < 1:
            raise ParameterError("a system needs at least one type")
        if rho.shape != (n,) or M.shape != (n, n):
            raise ParameterError(
                f"dimension mismatch: weights {w.shape}, survival {rho.shape}, mutation {M.shape}"
            )
        if np.any(w < 0):
            raise ParameterError("weights must be >= 0")
        if np.any(rho < 0) or np.any(rho > 1):
            raise ParameterError("survival must lie in [0, 1]")
        check_stochastic(M)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "survival", rho)
        object.__setattr__(self, "mutation", M)
        object.__setattr__(self, "consent_types", tuple(self.consent_types))

    @property
    def type_count(self) -> int:
        return self.weights.shape[0]

    @property
    def fitness(self) -> np.ndarray:
        return self.weights * self.survival

    def to_dict(self):
        out = {
            "weights": self.weights.tolist(),
            "survival": self.survival.tolist(),
            "mutation": self.mutation.tolist(),
        }
        if self.consent_types:
            out["consent_types"] = [c.to_dict() for c in self.consent_types]
        return out

    @classmethod
    def from_dict(cls, data):
        """Build from a JSON document.

        ``survival`` may be omitted when ``consent_types`` are present, in which
        case survival is derived per type as legitimacy / (1 + friction).
        """
        types = tuple(ConsentType.from_dict(c) for c in data.get("consent_types", ()))
        survival = data.get("survival")
        if survival is None:
            if not types:
                raise ParameterError("system needs either survival or consent_types")
            survival = [c.survival for c in types]
        return cls(data["weights"], survival, data["mutation"], types)


def system_from_consent_types(
    types: Sequence[ConsentType],
    base_mutation,
    weight: str = "supporters",
    entropy_lambda: float | None = None,
    entrench_gamma: float | None = None,
) -> RomSystem:
    """Instantiate a ROM system from consent configurations.

    ``weight`` selects supporter-only stakes (``"supporters"``) or total stake
    (``"total"``). Optional entropy and ownership modulations are applied to
    ``base_mutation`` in that order.
    """
    types = tuple(types)
    if weight == "supporters":
        w = [t.support_weight for t in types]
    elif weight == "total":
        w = [t.total_stake for t in types]
    else:
        raise ParameterError(f"weight mode must be 'supporters' or 'total', got {weight!r}")
    M = np.asarray(base_mutation, dtype=float)
    if entropy_lambda is not None:
        M = entropy_modulated_mutation(M, [t.mean_entropy for t in types], entropy_lambda)
    if entrench_gamma is not None:
        M = ownership_modulated_mutation(M, [t.mean_ownership for t in types], entrench_gamma)
    return RomSystem(w, [t.survival for t in types], M, types)


# ---------------------------------------------------------------------------
# dynamics


def mean_fitness(p, sys: RomSystem) -> float:
    p = check_population(p, sys.type_count)
    return float(np.dot(p, sys.fitness))


def rom_derivative(p, sys: RomSystem) -> np.ndarray:
    p = check_population(p, sys.type_count)
    return K.rhs_numpy(p, sys.fitness, sys.mutation)


def rom_integrate(p0, sys: RomSystem, dt: float, steps: int, backend: str | None = None) -> np.ndarray:
    """Fixed-step RK4 with clip-and-renormalise projection.

    Returns the trajectory as an array of shape ``(steps + 1, n)``; row 0 is ``p0``.
    """
    p0 = check_population(p0, sys.type_count)
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    steps = int(steps)
    if steps < 0:
        raise ParameterError("steps must be >= 0")
    traj = np.empty((steps + 1, sys.type_count))
    f = np.ascontiguousarray(sys.fitness)
    M = np.ascontiguousarray(sys.mutation)
    if _pick(backend) == "numba":
        bad = K.rk4_loops(p0.copy(), f, M, float(dt), steps, traj)
    else:
        bad = K.rk4_numpy(p0.copy(), f, M, float(dt), steps, traj)
    if bad >= 0:
        raise NumericError(f"non-finite population at step {bad}", step=int(bad))
    return traj


def _pick(backend):
    if backend is None:
        return _accel.backend_name()
    if backend not in ("numba", "numpy"):
        raise ParameterError(f"unknown backend {backend!r}")
    return backend


# ---------------------------------------------------------------------------
# consent instantiation


def consent_survival(L: float, F: float) -> float:
    if not 0.0 <= L <= 1.0:
        raise ParameterError(f"legitimacy must lie in [0, 1], got {L}")
    if F < 0:
        raise ParameterError(f"friction must be >= 0, got {F}")
    return L / (1.0 + F)


def consent_survival_modulated(rho_base: float, F: float, lam: float) -> float:
    if not 0.0 <= rho_base <= 1.0:
        raise ParameterError("baseline survival must lie in [0, 1]")
    if F < 0:
        raise ParameterError("friction must be >= 0")
    if not lam > 0:
        raise ParameterError("lambda must be > 0")
    return rho_base * math.exp(-lam * F)


def consent_weight(d: DelegationDomain) -> float:
    """Stake held by stakeholders who support the configuration."""
    return math.fsum(s.stake for s in d.stakeholders if s.consents)


def _renormalise_rows(M0, scaled):
    out = M0.copy()
    for i in range(M0.shape[0]):
        if np.all(scaled[i] == M0[i]):
            continue
        out[i] = scaled[i] / scaled[i].sum()
    return out


def entropy_modulated_mutation(M0, eps_bar, lam: float) -> np.ndarray:
    """Scale the off-diagonal part of each row by ``1 + lam * eps_bar[row]``,
    then restore row-stochasticity. Rows with zero entropy are returned untouched."""
    M0 = check_stochastic(np.array(M0, dtype=float), "base mutation")
    eps_bar = np.asarray(eps_bar, dtype=float)
    n = M0.shape[0]
    if eps_bar.shape != (n,):
        raise ParameterError(f"eps_bar must have {n} entries")
    if np.any(eps_bar < 0) or np.any(eps_bar > 1):
        raise ParameterError("eps_bar must lie in [0, 1]")
    if not lam > 0:
        raise ParameterError("lambda must be > 0")
    factor = 1.0 + lam * eps_bar
    scaled = M0 * factor[:, None]
    np.fill_diagonal(scaled, np.diag(M0))
    return _renormalise_rows(M0, scaled)


def ownership_modulated_mutation(M0, O_bar, gamma_entrench: float) -> np.ndarray:
    M0 = check_stochastic(np.array(M0, dtype=float), "base mutation")
    O_bar = np.asarray(O_bar, dtype=float)
    n = M0.shape[0]
    if O_bar.shape != (n,):
        raise ParameterError(f"O_bar must have {n} entries")
    if np.any(O_bar < 0) or np.any(O_bar > 1):
        raise ParameterError("O_bar must lie in [0, 1]")
    if not gamma_entrench > 0:
        raise ParameterError("gamma must be > 0")
    factor = np.exp(-gamma_entrench * (O_bar[:, None] - O_bar[None, :]))
    return _renormalise_rows(M0, M0 * factor)


def ownership_integrate(
    O0: float,
    params: OwnershipParams,
    holding: bool | Sequence[bool] | Callable[[float], bool],
    dt: float,
    steps: int,
) -> np.ndarray:
    """RK4 trajectory of perceived ownership, shape ``(steps + 1,)``.

    ``holding`` is a constant, a per-step sequence, or a function of time; it is
    sampled at the start of each step and held fixed within the step.
    """
    if not 0.0 <= O0 <= 1.0:
        raise ParameterError("initial ownership must lie in [0, 1]")
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    steps = int(steps)
    if callable(holding):
        flags = np.array([bool(holding(s * dt)) for s in range(steps)])
    elif np.ndim(holding) == 0:
        flags = np.full(steps, bool(holding))
    else:
        flags = np.asarray(holding, dtype=bool)
        if flags.shape != (steps,):
            raise ParameterError(f"holding schedule needs {steps} entries")
    traj = np.empty(steps + 1)
    K.ownership_loops(float(O0), params.beta, params.gamma_decay, flags, float(dt), traj)
    return traj


def tenure_transition_hazard(tenure: float, params: OwnershipParams) -> float:
    """Unnormalised regime-transition hazard after ``tenure`` of consent-holding."""
    if tenure < 0:
        raise ParameterError("tenure must be >= 0")
    ownership = -math.expm1(-params.beta * tenure)
    return math.exp(-params.gamma_entrench * ownership)


# ---------------------------------------------------------------------------
# stationary distribution


def support_graph_properties(M) -> tuple[bool, int]:
    """Strong connectivity and period of the directed graph on M's support."""
    A = np.asarray(M) > 0
    n = A.shape[0]

    def reach(adj):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(adj[u]):
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        return seen

    strongly = bool(reach(A).all() and reach(A.T).all())
    if not strongly:
        return False, 0
    level = np.full(n, -1)
    level[0] = 0
    queue = [0]
    for u in queue:
        for v in np.flatnonzero(A[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
    period = 0
    for u, v in zip(*np.nonzero(A)):
        period = gcd(period, int(abs(level[u] + 1 - level[v])))
    return True, period


def check_ergodic(M):
    strongly, period = support_graph_properties(M)
    if not strongly:
        raise ErgodicityError("mutation kernel is reducible")
    if period != 1:
        raise ErgodicityError(f"mutation kernel is periodic with period {period}")


def stationary_residual(p, sys: RomSystem) -> float:
    pf = np.asarray(p) * sys.fitness
    return float(np.max(np.abs(pf @ sys.mutation - np.asarray(p) * pf.sum())))


def stationary_distribution(
    sys: RomSystem, tol: float = 1e-12, max_iters: int = 1_000_000, backend: str | None = None
) -> np.ndarray:
    """Power iteration on ``Q = diag(w * rho) @ M``, normalised each step."""
    check_ergodic(sys.mutation)
    if np.any(sys.fitness <= 0):
        raise ParameterError("stationary distribution requires w * rho > 0 for every type")
    Q = np.ascontiguousarray(sys.fitness[:, None] * sys.mutation)
    p0 = np.full(sys.type_count, 1.0 / sys.type_count)
    if _pick(backend) == "numba":
        p, iters, residual = K.power_loops(p0, Q, float(tol), int(max_iters))
    else:
        p, iters, residual = K.power_numpy(p0, Q, float(tol), int(max_iters))
    if not residual < tol:
        raise ConvergenceError(
            f"power iteration did not reach tol={tol} in {iters} iterations (residual {residual:.3e})",
            residual=float(residual),
        )
    return p
