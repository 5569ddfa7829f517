"""Friction and legitimacy algebra over the (alignment, stake, entropy) triple."""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import DivergenceError, ParameterError, SizeError, UndefinedError

FORM_KINDS = ("canonical", "additive", "multiplicative", "exponential", "power_law")
MAX_ALLOCATION_SIZE = 6


def _check_alpha(alpha, who="alignment"):
    if alpha == -1.0:
        raise DivergenceError(f"{who} = -1 is a pole of the friction function")


@dataclass(frozen=True)
class KernelTriple:
    alpha: float
    sigma: float
    epsilon: float

    def __post_init__(self):
        for name in ("alpha", "sigma", "epsilon"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if not -1.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in [-1, 1], got {self.alpha}")
        if self.sigma < 0.0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ParameterError(f"epsilon must lie in [0, 1], got {self.epsilon}")


@dataclass(frozen=True)
class Stakeholder:
    id: Hashable
    stake: float
    alignment: float = 0.0
    entropy: float = 0.0
    voice: float = 0.0
    consents: bool = False

    def __post_init__(self):
        for name in ("stake", "alignment", "entropy", "voice"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ParameterError(f"stakeholder {self.id!r}: {name} must be finite")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "consents", bool(self.consents))
        if self.stake < 0:
            raise ParameterError(f"stakeholder {self.id!r}: stake must be >= 0")
        if not -1.0 <= self.alignment <= 1.0:
            raise ParameterError(f"stakeholder {self.id!r}: alignment must lie in [-1, 1]")
        if not 0.0 <= self.entropy <= 1.0:
            raise ParameterError(f"stakeholder {self.id!r}: entropy must lie in [0, 1]")
        if not 0.0 <= self.voice <= 1.0:
            raise ParameterError(f"stakeholder {self.id!r}: voice must lie in [0, 1]")


@dataclass(frozen=True)
class DelegationDomain:
    stakeholders: tuple[Stakeholder, ...]

    def __post_init__(self):
        object.__setattr__(self, "stakeholders", tuple(self.stakeholders))

    @classmethod
    def from_arrays(cls, stakes, alignments=None, entropies=None, voices=None, consents=None):
        n = len(stakes)
        alignments = [0.0] * n if alignments is None else alignments
        entropies = [0.0] * n if entropies is None else entropies
        voices = [0.0] * n if voices is None else voices
        consents = [False] * n if consents is None else consents
        lengths = {len(alignments), len(entropies), len(voices), len(consents)}
        if lengths != {n}:
            raise ParameterError("stakeholder arrays must have equal length")
        return cls(tuple(
            Stakeholder(i, s, a, e, v, c)
            for i, (s, a, e, v, c) in enumerate(zip(stakes, alignments, entropies, voices, consents))
        ))

    @property
    def total_stake(self) -> float:
        return math.fsum(s.stake for s in self.stakeholders)

    @property
    def affected(self) -> tuple[Stakeholder, ...]:
        return tuple(s for s in self.stakeholders if s.stake > 0)

    @property
    def mean_entropy(self) -> float:
        if not self.stakeholders:
            raise UndefinedError("mean entropy of an empty domain")
        return math.fsum(s.entropy for s in self.stakeholders) / len(self.stakeholders)


@dataclass(frozen=True)
class FrictionForm:
    kind: str = "canonical"
    p: float = 1.0
    q: float = 1.0

    def __post_init__(self):
        if self.kind not in FORM_KINDS:
            raise ParameterError(f"unknown friction form {self.kind!r}; expected one of {FORM_KINDS}")


@dataclass(frozen=True)
class SuppressionSchedule:
    """Piecewise-constant suppression intensity.

    ``breakpoints[i] = (t_i, kappa_i)`` holds on ``[t_i, t_{i+1})``; the last
    value extends to infinity and the intensity before ``t_0`` is zero.
    """

    breakpoints: tuple[tuple[float, float], ...] = field(default=((0.0, 0.0),))

    def __post_init__(self):
        bps = tuple((float(t), float(k)) for t, k in self.breakpoints)
        if not bps:
            raise ParameterError("suppression schedule needs at least one breakpoint")
        times = [t for t, _ in bps]
        if any(t < 0 for t in times):
            raise ParameterError("breakpoint times must be >= 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ParameterError("breakpoint times must be strictly increasing")
        if any(k < 0 for _, k in bps):
            raise ParameterError("suppression intensity must be >= 0")
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def constant(cls, kappa):
        return cls(((0.0, kappa),))

    def kappa(self, t):
        times = [b[0] for b in self.breakpoints]
        i = bisect.bisect_right(times, t) - 1
        return 0.0 if i < 0 else self.breakpoints[i][1]

    def integral(self, t):
        """Exact value of the integral of kappa over [0, t]."""
        if t < 0:
            raise ParameterError(f"time must be >= 0, got {t}")
        total = 0.0
        for i, (start, k) in enumerate(self.breakpoints):
            if start >= t:
                break
            end = self.breakpoints[i + 1][0] if i + 1 < len(self.breakpoints) else math.inf
            total += k * (min(end, t) - start)
        return total


# ---------------------------------------------------------------------------
# friction and its variants


def friction(k: KernelTriple) -> float:
    """Canonical friction ``sigma * (1 + epsilon) / (1 + alpha)``."""
    _check_alpha(k.alpha)
    return k.sigma * (1.0 + k.epsilon) / (1.0 + k.alpha)


def friction_form(form: FrictionForm, k: KernelTriple) -> float:
    s, a, e = k.sigma, k.alpha, k.epsilon
    if form.kind == "canonical":
        return friction(k)
    if form.kind == "additive":
        return s + e - a
    if form.kind == "multiplicative":
        return s * e * (1.0 - a)
    if form.kind == "exponential":
        return s * math.exp(e - a)
    _check_alpha(a)
    return s * (1.0 + e) ** form.p / (1.0 + a) ** form.q


def friction_partials(k: KernelTriple) -> tuple[float, float, float]:
    """Returns (dF/dsigma, dF/dalpha, dF/depsilon)."""
    _check_alpha(k.alpha)
    inv = 1.0 / (1.0 + k.alpha)
    return (
        (1.0 + k.epsilon) * inv,
        -k.sigma * (1.0 + k.epsilon) * inv * inv,
        k.sigma * inv,
    )


def friction_aggregate(d: DelegationDomain) -> float:
    terms = []
    for s in d.stakeholders:
        if s.alignment == -1.0:
            raise DivergenceError(f"stakeholder {s.id!r} has alignment -1", index=s.id)
        terms.append(s.stake * (1.0 + s.entropy) / (1.0 + s.alignment))
    return math.fsum(terms)


def _require_stake(d):
    total = d.total_stake
    if total <= 0:
        raise UndefinedError("domain has zero total stake")
    return total


def legitimacy(d: DelegationDomain) -> float:
    total = _require_stake(d)
    value = math.fsum(s.stake * s.voice for s in d.stakeholders) / total
    return min(1.0, max(0.0, value))


def consent_share(d: DelegationDomain) -> float:
    """Stake-weighted fraction of the affected set that consents."""
    total = _require_stake(d)
    return math.fsum(s.stake for s in d.affected if s.consents) / total


def is_legitimate(d: DelegationDomain, theta: float) -> bool:
    if not 0.0 < theta <= 1.0:
        raise ParameterError(f"theta must lie in (0, 1], got {theta}")
    total = _require_stake(d)
    supporting = math.fsum(s.stake for s in d.affected if s.consents)
    return supporting >= theta * total


def aggregate_alignment(d: DelegationDomain) -> float:
    total = _require_stake(d)
    value = math.fsum(s.stake * s.alignment for s in d.stakeholders) / total
    return min(1.0, max(-1.0, value))


def friction_error_propagation(k: KernelTriple, noise: Sequence[float]) -> float:
    """First-order shift of the friction estimate under additive measurement noise.

    ``noise`` is ``(eta_sigma, eta_alpha, eta_epsilon)``.
    """
    eta_s, eta_a, eta_e = noise
    ds, da, de = friction_partials(k)
    return ds * eta_s + de * eta_e + da * eta_a


def friction_error_std(k: KernelTriple, stds: Sequence[float]) -> float:
    """First-order standard deviation of the friction estimate for independent
    zero-mean errors with standard deviations ``(sd_sigma, sd_alpha, sd_epsilon)``."""
    sd_s, sd_a, sd_e = stds
    ds, da, de = friction_partials(k)
    return math.sqrt((ds * sd_s) ** 2 + (da * sd_a) ** 2 + (de * sd_e) ** 2)


def latent_friction(F: float, schedule: SuppressionSchedule, t: float) -> float:
    if F < 0:
        raise ParameterError("friction must be >= 0")
    return F * math.exp(schedule.integral(t))


def falsification_index(expressed_variance: float, authentic_variance: float) -> float:
    """One minus the expressed/authentic variance ratio, clamped to [0, 1]."""
    if expressed_variance < 0:
        raise ParameterError("expressed variance must be >= 0")
    if authentic_variance <= 0:
        raise UndefinedError("authentic variance must be > 0")
    psi = 1.0 - expressed_variance / authentic_variance
    return min(1.0, max(0.0, psi))


def falsification_split(F_total: float, psi: float) -> tuple[float, float]:
    if not 0.0 <= psi <= 1.0:
        raise ParameterError(f"psi must lie in [0, 1], got {psi}")
    if F_total < 0:
        raise ParameterError("total friction must be >= 0")
    return _exact_split(F_total, psi * F_total)


def _exact_split(total, latent):
    # (total - latent) + latent may round away from total; search neighbouring
    # ulps of both parts for a pair whose float sum is exactly total
    for lat in (latent, math.nextafter(latent, math.inf), math.nextafter(latent, -math.inf)):
        lat = min(max(lat, 0.0), total)
        obs = total - lat
        for _ in range(4):
            s = obs + lat
            if s == total:
                return max(obs, 0.0), lat
            obs = math.nextafter(obs, -math.inf if s > total else math.inf)
    return total - latent, latent


# ---------------------------------------------------------------------------
# resource consent


def _allocation_arrays(stakes, alignments, entropies):
    stakes = np.asarray(stakes, dtype=float)
    alignments = np.asarray(alignments, dtype=float)
    entropies = np.asarray(entropies, dtype=float)
    if stakes.ndim != 2:
        raise ParameterError("stakes must be an agent x resource matrix")
    n, m = stakes.shape
    if alignments.shape != (n, n, m):
        raise ParameterError(f"alignments must have shape {(n, n, m)}, got {alignments.shape}")
    if entropies.shape != (n, n):
        raise ParameterError(f"entropies must have shape {(n, n)}, got {entropies.shape}")
    if np.any(stakes < 0):
        raise ParameterError("stakes must be >= 0")
    if np.any(alignments < -1) or np.any(alignments > 1):
        raise ParameterError("alignments must lie in [-1, 1]")
    if np.any(entropies < 0) or np.any(entropies > 1):
        raise ParameterError("entropies must lie in [0, 1]")
    return stakes, alignments, entropies


def controller_costs(stakes, alignments, entropies) -> np.ndarray:
    """``cost[c, r]``: friction resource r generates when agent c controls it."""
    stakes, alignments, entropies = _allocation_arrays(stakes, alignments, entropies)
    n, m = stakes.shape
    cost = np.zeros((n, m))
    for c in range(n):
        others = np.arange(n) != c
        denom = 1.0 + alignments[c][others]  # (n-1, m)
        if np.any(denom == 0.0):
            raise DivergenceError(f"alignment -1 between controller {c} and an affected agent", index=c)
        num = stakes[others] * (1.0 + entropies[c][others])[:, None]
        cost[c] = (num / denom).sum(axis=0)
    return cost


def system_friction(assignment, stakes, alignments, entropies) -> float:
    stakes, alignments, entropies = _allocation_arrays(stakes, alignments, entropies)
    n, m = stakes.shape
    assignment = [int(c) for c in assignment]
    if len(assignment) != m:
        raise ParameterError(f"assignment must name a controller for each of {m} resources")
    terms = []
    for r, c in enumerate(assignment):
        if not 0 <= c < n:
            raise ParameterError(f"resource {r} assigned to unknown agent {c}")
        for j in range(n):
            if j == c:
                continue
            a = alignments[c, j, r]
            if a == -1.0:
                raise DivergenceError(f"alignment -1 between controller {c} and agent {j} on resource {r}")
            terms.append(stakes[j, r] * (1.0 + entropies[c, j]) / (1.0 + a))
    return math.fsum(terms)


def friction_aware_allocation(stakes, alignments, entropies):
    """Exhaustive search for the friction-minimising controller assignment.

    Returns ``(assignment, objective)``; ties resolve to the lexicographically
    smallest assignment vector.
    """
    stakes, alignments, entropies = _allocation_arrays(stakes, alignments, entropies)
    n, m = stakes.shape
    if n > MAX_ALLOCATION_SIZE or m > MAX_ALLOCATION_SIZE:
        raise SizeError(f"exhaustive allocation limited to n, m <= {MAX_ALLOCATION_SIZE}; got n={n}, m={m}")
    cost = controller_costs(stakes, alignments, entropies)
    # product() yields assignments in lexicographic order; argmin keeps the first minimum
    candidates = np.array(list(itertools.product(range(n), repeat=m)), dtype=np.intp).reshape(-1, m)
    totals = cost[candidates, np.arange(m)].sum(axis=1)
    best = int(np.argmin(totals))
    assignment = tuple(int(c) for c in candidates[best])
    return assignment, system_friction(assignment, stakes, alignments, entropies)
