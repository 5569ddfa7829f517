"""Friction and legitimacy along exogenous, piecewise-linear parameter paths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .kernel import DelegationDomain, KernelTriple, friction, friction_partials, legitimacy

MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class LinearPath:
    """Piecewise-linear scalar function; held constant outside its breakpoints."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        v = tuple(float(x) for x in self.values)
        if len(t) == 0 or len(t) != len(v):
            raise ParameterError("path needs matching, non-empty times and values")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ParameterError("path times must be strictly increasing")
        if not all(math.isfinite(x) for x in t + v):
            raise ParameterError("path breakpoints must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value):
        return cls((0.0,), (value,))

    def __call__(self, t):
        return float(np.interp(t, self.times, self.values))

    def segment(self, t) -> int:
        """Index i of the segment [times[i], times[i+1]) holding t; -1 before, len-1 after."""
        return int(np.searchsorted(self.times, t, side="right")) - 1

    def rate(self, t) -> float:
        i = self.segment(t)
        if i < 0 or i >= len(self.times) - 1:
            return 0.0
        return (self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i])

    def segments(self):
        """Yield (start, end, slope) for every interior segment."""
        for i in range(len(self.times) - 1):
            t0, t1 = self.times[i], self.times[i + 1]
            yield t0, t1, (self.values[i + 1] - self.values[i]) / (t1 - t0)

    def to_dict(self):
        return {"times": list(self.times), "values": list(self.values)}

    @classmethod
    def from_dict(cls, data):
        if isinstance(data, (int, float)):
            return cls.constant(data)
        return cls(data["times"], data["values"])


@dataclass(frozen=True)
class ParameterPath:
    sigma: LinearPath
    alpha: LinearPath
    epsilon: LinearPath

    def __post_init__(self):
        if any(v < 0 for v in self.sigma.values):
            raise ParameterError("stake path must stay >= 0")
        if any(not -1.0 < v <= 1.0 for v in self.alpha.values):
            raise ParameterError("alignment path must stay in (-1, 1]")
        if any(not 0.0 <= v <= 1.0 for v in self.epsilon.values):
            raise ParameterError("entropy path must stay in [0, 1]")

    @classmethod
    def constant(cls, sigma, alpha, epsilon):
        return cls(LinearPath.constant(sigma), LinearPath.constant(alpha), LinearPath.constant(epsilon))

    def triple(self, t) -> KernelTriple:
        return KernelTriple(self.alpha(t), self.sigma(t), self.epsilon(t))

    def rates(self, t) -> tuple[float, float, float]:
        """(dsigma/dt, dalpha/dt, depsilon/dt) on the segment holding t."""
        return self.sigma.rate(t), self.alpha.rate(t), self.epsilon.rate(t)

    def friction(self, t) -> float:
        return friction(self.triple(t))

    def to_dict(self):
        return {"sigma": self.sigma.to_dict(), "alpha": self.alpha.to_dict(), "epsilon": self.epsilon.to_dict()}

    @classmethod
    def from_dict(cls, data):
        return cls(*(LinearPath.from_dict(data[k]) for k in ("sigma", "alpha", "epsilon")))


@dataclass(frozen=True)
class VoiceStakePath:
    stakes: tuple[LinearPath, ...]
    voices: tuple[LinearPath, ...]

    def __post_init__(self):
        if len(self.stakes) != len(self.voices) or not self.stakes:
            raise ParameterError("need one stake path and one voice path per stakeholder")
        if any(v < 0 for p in self.stakes for v in p.values):
            raise ParameterError("stakes must stay >= 0")
        if any(not 0 <= v <= 1 for p in self.voices for v in p.values):
            raise ParameterError("voices must stay in [0, 1]")

    def domain(self, t) -> DelegationDomain:
        return DelegationDomain.from_arrays([s(t) for s in self.stakes], voices=[v(t) for v in self.voices])

    def rates(self, t):
        return np.array([v.rate(t) for v in self.voices]), np.array([s.rate(t) for s in self.stakes])

    def legitimacy_rate(self, t) -> float:
        dv, ds = self.rates(t)
        return legitimacy_rate(self.domain(t), dv, ds)


def friction_rate(k: KernelTriple, d_sigma: float, d_alpha: float, d_epsilon: float) -> float:
    """Chain-rule time derivative of friction for the given parameter velocities."""
    g_s, g_a, g_e = friction_partials(k)
    return g_s * d_sigma + g_a * d_alpha + g_e * d_epsilon


def equilibrium_residual(k: KernelTriple, derivatives) -> float:
    """Friction drift; zero exactly at a friction equilibrium, positive when friction grows."""
    d_sigma, d_alpha, d_epsilon = derivatives
    return friction_rate(k, d_sigma, d_alpha, d_epsilon)


@dataclass
class Violation:
    condition: str
    time: float
    detail: str

    def to_dict(self):
        return {"condition": self.condition, "time": self.time, "detail": self.detail}


@dataclass
class LyapunovReport:
    times: np.ndarray
    friction: np.ndarray
    violations: list[Violation] = field(default_factory=list)
    stake_constant: bool = True
    monotone_checked: bool = False

    @property
    def conditions_hold(self) -> bool:
        return not any(v.condition in ("stake_bounded", "alignment_nondecreasing", "entropy_nonincreasing")
                       for v in self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def violated(self, condition):
        return [v for v in self.violations if v.condition == condition]

    def to_dict(self):
        return {
            "ok": self.ok,
            "conditions_hold": self.conditions_hold,
            "stake_constant": self.stake_constant,
            "monotone_checked": self.monotone_checked,
            "violations": [v.to_dict() for v in self.violations],
            "times": self.times.tolist(),
            "friction": self.friction.tolist(),
        }


def _segment_violations(path: LinearPath, horizon, bad, condition, label):
    out = []
    for t0, t1, slope in path.segments():
        if t0 >= horizon or t1 <= 0:
            continue
        if bad(slope):
            out.append(Violation(condition, max(t0, 0.0), f"d{label}/dt = {slope:.6g} on [{t0:g}, {t1:g})"))
    return out


def lyapunov_check(path: ParameterPath, horizon: float, samples: int, sigma_max: float | None = None) -> LyapunovReport:
    """Check the sufficient conditions for friction to act as a Lyapunov function.

    Conditions: stake bounded by ``sigma_max`` at every sample, alignment never
    decreasing, entropy never increasing. Rate conditions are checked per path
    segment, so a violation between samples is still caught. When all three
    hold and stake is constant, sampled friction must be non-increasing up to
    ``MONOTONE_SLACK``.
    """
    if samples < 2:
        raise ParameterError("samples must be >= 2")
    if not horizon > 0:
        raise ParameterError("horizon must be > 0")
    times = np.linspace(0.0, horizon, samples)
    F = np.array([path.friction(t) for t in times])
    sig = np.array([path.sigma(t) for t in times])
    report = LyapunovReport(times, F)

    if sigma_max is not None:
        for t, s in zip(times, sig):
            if s > sigma_max:
                report.violations.append(Violation("stake_bounded", float(t), f"sigma = {s:.6g} > {sigma_max:g}"))
    report.violations += _segment_violations(path.alpha, horizon, lambda r: r < 0, "alignment_nondecreasing", "alpha")
    report.violations += _segment_violations(path.epsilon, horizon, lambda r: r > 0, "entropy_nonincreasing", "epsilon")

    report.stake_constant = not any(r != 0 for t0, t1, r in path.sigma.segments() if t0 < horizon and t1 > 0)
    if report.conditions_hold and report.stake_constant:
        report.monotone_checked = True
        for i in np.flatnonzero(np.diff(F) > MONOTONE_SLACK):
            report.violations.append(
                Violation("friction_nonincreasing", float(times[i + 1]), f"F rose by {F[i + 1] - F[i]:.3e}")
            )
    return report


def legitimacy_rate(d: DelegationDomain, voice_rates, stake_rates) -> float:
    """Time derivative of stake-weighted legitimacy given voice and stake velocities."""
    L = legitimacy(d)
    n = len(d.stakeholders)
    dv = np.asarray(voice_rates, dtype=float)
    ds = np.asarray(stake_rates, dtype=float)
    if dv.shape != (n,) or ds.shape != (n,):
        raise ParameterError(f"expected {n} voice and stake rates")
    total = d.total_stake
    s = np.array([h.stake for h in d.stakeholders])
    v = np.array([h.voice for h in d.stakeholders])
    return float(np.dot(s / total, dv) + np.dot((v - L) / total, ds))
