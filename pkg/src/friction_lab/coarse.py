"""Coarse-graining of ROM systems over a partition of the type space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LumpabilityError, ParameterError
from .rom import RomSystem, check_population, rom_integrate


@dataclass(frozen=True)
class Partition:
    """Surjective map from fine type index to coarse class index ``0..k-1``."""

    assignment: tuple[int, ...]

    def __post_init__(self):
        a = tuple(int(x) for x in self.assignment)
        if not a:
            raise ParameterError("partition must cover at least one type")
        if min(a) < 0:
            raise ParameterError("class indices must be >= 0")
        missing = sorted(set(range(max(a) + 1)) - set(a))
        if missing:
            raise ParameterError(f"partition is not surjective; empty classes {missing}")
        object.__setattr__(self, "assignment", a)

    @classmethod
    def identity(cls, n):
        return cls(tuple(range(n)))

    @classmethod
    def single(cls, n):
        return cls((0,) * n)

    @property
    def fine_count(self) -> int:
        return len(self.assignment)

    @property
    def coarse_count(self) -> int:
        return max(self.assignment) + 1

    def members(self, c) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignment) == c)

    def indicator(self) -> np.ndarray:
        """Fine-by-coarse 0/1 matrix."""
        B = np.zeros((self.fine_count, self.coarse_count))
        B[np.arange(self.fine_count), self.assignment] = 1.0
        return B

    def then(self, outer: "Partition") -> "Partition":
        """Compose with a partition of this partition's classes."""
        if outer.fine_count != self.coarse_count:
            raise ParameterError("outer partition must act on this partition's classes")
        return Partition(tuple(outer.assignment[c] for c in self.assignment))

    def to_list(self):
        return list(self.assignment)

    @classmethod
    def from_list(cls, data):
        return cls(tuple(data))

    def _check(self, n):
        if self.fine_count != n:
            raise ParameterError(f"partition covers {self.fine_count} types, system has {n}")


@dataclass
class LumpabilityReport:
    """Outcome of the three lumpability checks.

    ``flow_gap`` is the combined weight-survival-mutation criterion,
    ``block_gap`` is transition uniformity of the raw kernel and
    ``survival_gap`` is in-class survival homogeneity. Each gap is the largest
    in-class spread; the matching flag is ``gap <= tol``.
    """

    tol: float
    flow_gap: float
    block_gap: float
    survival_gap: float
    failures: list[str] = field(default_factory=list)

    @property
    def flows_equal(self) -> bool:
        return self.flow_gap <= self.tol

    @property
    def transition_uniform(self) -> bool:
        return self.block_gap <= self.tol

    @property
    def survival_homogeneous(self) -> bool:
        return self.survival_gap <= self.tol

    @property
    def lumpable(self) -> bool:
        """Transition uniformity together with survival homogeneity."""
        return self.transition_uniform and self.survival_homogeneous

    @property
    def exact(self) -> bool:
        return self.lumpable and self.flows_equal

    def to_dict(self):
        return {
            "tol": self.tol,
            "lumpable": self.lumpable,
            "exact": self.exact,
            "flows_equal": self.flows_equal,
            "transition_uniform": self.transition_uniform,
            "survival_homogeneous": self.survival_homogeneous,
            "flow_gap": self.flow_gap,
            "block_gap": self.block_gap,
            "survival_gap": self.survival_gap,
            "failures": list(self.failures),
        }


def _spread(values, part, label, failures, tol):
    """Largest in-class range of per-type rows; records offending classes."""
    worst = 0.0
    for c in range(part.coarse_count):
        block = values[part.members(c)]
        gap = float(np.max(np.ptp(block, axis=0))) if block.ndim > 1 else float(np.ptp(block))
        if gap > tol:
            failures.append(f"{label}: class {c} spread {gap:.3e}")
        worst = max(worst, gap)
    return worst


def check_lumpability(sys: RomSystem, part: Partition, tol: float = 1e-9) -> LumpabilityReport:
    part._check(sys.type_count)
    B = part.indicator()
    block = sys.mutation @ B
    flows = sys.fitness[:, None] * block
    failures: list[str] = []
    return LumpabilityReport(
        tol,
        flow_gap=_spread(flows, part, "flow", failures, tol),
        block_gap=_spread(block, part, "transition", failures, tol),
        survival_gap=_spread(sys.survival, part, "survival", failures, tol),
        failures=failures,
    )


def project(p, part: Partition) -> np.ndarray:
    p = check_population(p, part.fine_count)
    return np.bincount(part.assignment, weights=p, minlength=part.coarse_count)


def conditional(p, part: Partition) -> np.ndarray:
    """p(tau | class of tau); uniform inside classes with zero mass."""
    p = np.asarray(p, dtype=float)
    P = project(p, part)
    a = np.asarray(part.assignment)
    sizes = np.bincount(a, minlength=part.coarse_count)
    out = np.empty_like(p)
    for c in range(part.coarse_count):
        idx = a == c
        out[idx] = p[idx] / P[c] if P[c] > 0 else 1.0 / sizes[c]
    return out


def coarse_grain(sys: RomSystem, part: Partition, p, tol: float = 1e-9, strict: bool = True) -> RomSystem:
    """Induced coarse system at population ``p``.

    Weights and the mutation kernel are averaged with the within-class
    conditional distribution; when the partition is lumpable the kernel
    average equals the block sum of any representative row. Survival is the
    class mean, equal to every member's value under homogeneity.

    With ``strict`` the call raises ``LumpabilityError`` unless transition
    uniformity and survival homogeneity hold at ``tol``.
    """
    report = check_lumpability(sys, part, tol)
    if strict and not report.lumpable:
        raise LumpabilityError("partition is not lumpable: " + "; ".join(report.failures), report=report)
    cond = conditional(p, part)
    B = part.indicator()
    w = B.T @ (cond * sys.weights)
    M = B.T @ (cond[:, None] * (sys.mutation @ B))
    rho = (B.T @ sys.survival) / B.sum(axis=0)
    M /= M.sum(axis=1, keepdims=True)
    return RomSystem(w, np.clip(rho, 0.0, 1.0), M)


def commutation_error(sys: RomSystem, part: Partition, p0, dt: float, steps: int, tol: float = 1e-9) -> float:
    """Max-norm gap between projecting the fine trajectory and evolving the projection."""
    fine = rom_integrate(p0, sys, dt, steps)[-1]
    coarse_sys = coarse_grain(sys, part, p0, tol=tol, strict=False)
    coarse = rom_integrate(project(p0, part), coarse_sys, dt, steps)[-1]
    return float(np.max(np.abs(project(fine, part) - coarse)))
