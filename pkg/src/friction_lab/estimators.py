"""Empirical estimators for alignment, stake, entropy and observable friction.

Each family has plain functions plus a ``estimate_*`` dispatcher keyed by mode,
which is what the command line uses. Logarithms are natural.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateInputError, DivergenceError, ParameterError, TableError, UndefinedError

POLITICAL_WEIGHTS = (0.4, 0.3, 0.3)
PRESENT_VALUE_TAIL = 1e-12
SUM_TOL = 1e-9


def _vector(v, name):
    a = np.asarray(v, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise DegenerateInputError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(a)):
        raise DegenerateInputError(f"{name} has non-finite entries")
    return a


def _cosine(u, v, name="vector"):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DegenerateInputError(f"{name} has zero norm")
    if u.shape != v.shape:
        raise ParameterError(f"vector lengths differ: {u.shape[0]} vs {v.shape[0]}")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


# ---------------------------------------------------------------------------
# alignment


def survey_alignment(p_agent, p_holder) -> float:
    """Cosine similarity between stated preference vectors."""
    return _cosine(_vector(p_agent, "agent preferences"), _vector(p_holder, "holder preferences"), "preference vector")


def market_alignment(delta_holdings: float, sensitivity: float) -> float:
    """Signed saturating response to a holdings change: sign(dh) * (1 - exp(-lam |dh|))."""
    if not sensitivity > 0:
        raise ParameterError("sensitivity must be > 0")
    if not math.isfinite(delta_holdings):
        raise DegenerateInputError("holdings change must be finite")
    return math.copysign(-math.expm1(-sensitivity * abs(delta_holdings)), delta_holdings) if delta_holdings else 0.0


def vote_alignment(shares, party_positions, government_position) -> float:
    """Vote-share weighted cosine between each party's position and the government's."""
    v = _vector(shares, "vote shares")
    if np.any(v < 0) or abs(v.sum() - 1.0) > SUM_TOL:
        raise ParameterError("vote shares must be >= 0 and sum to 1")
    parties = np.asarray(party_positions, dtype=float)
    if parties.ndim != 2 or parties.shape[0] != v.size:
        raise ParameterError("need one position vector per party")
    gov = _vector(government_position, "government position")
    total = sum(s * _cosine(row, gov, f"party {i} position") for i, (s, row) in enumerate(zip(v, parties)))
    return float(np.clip(total, -1.0, 1.0))


# ---------------------------------------------------------------------------
# stake


def monetary_stake(wealth, probabilities=None) -> float:
    """Expected absolute wealth difference over independent outcome pairs."""
    W = _vector(wealth, "wealth outcomes")
    if W.size < 2:
        raise DegenerateInputError("need at least two outcomes")
    if probabilities is None:
        p = np.full(W.size, 1.0 / W.size)
    else:
        p = _vector(probabilities, "outcome probabilities")
        if p.shape != W.shape or np.any(p < 0) or abs(p.sum() - 1.0) > SUM_TOL:
            raise ParameterError("outcome probabilities must match outcomes, be >= 0 and sum to 1")
    return float(p @ np.abs(W[:, None] - W[None, :]) @ p)


def present_value_stake(delta: float, stakes: Sequence[float] | None = None, constant: float | None = None) -> float:
    """Discounted sum of per-period stakes.

    Pass a finite ``stakes`` sequence, or a ``constant`` per-period stake whose
    infinite stream is truncated once the next term falls below 1e-12.
    """
    if not 0.0 < delta < 1.0:
        raise ParameterError("discount must lie in (0, 1)")
    if (stakes is None) == (constant is None):
        raise ParameterError("give exactly one of stakes or constant")
    if stakes is not None:
        s = _vector(stakes, "stakes")
        return float(np.sum(s * delta ** np.arange(s.size)))
    if constant < 0:
        raise ParameterError("stake must be >= 0")
    total, term = 0.0, float(constant)
    while term >= PRESENT_VALUE_TAIL:
        total += term
        term *= delta
    return total


def computational_stake(losses, sensitivity: float) -> float:
    """Loss range times the agent's sensitivity to the outcome."""
    L = _vector(losses, "losses")
    if sensitivity < 0:
        raise ParameterError("sensitivity must be >= 0")
    return float((L.max() - L.min()) * sensitivity)


def political_stake(proximity: float, reversibility: float, magnitude: float, weights=POLITICAL_WEIGHTS) -> float:
    scores = np.array([proximity, reversibility, magnitude], dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any((scores < 0) | (scores > 1)):
        raise ParameterError("political scores must lie in [0, 1]")
    if w.shape != (3,) or np.any(w < 0):
        raise ParameterError("need three non-negative weights")
    return float(w @ scores)


# ---------------------------------------------------------------------------
# entropy


def kl_divergence(p, p_hat) -> float:
    p = _vector(p, "truth")
    q = _vector(p_hat, "estimate")
    if p.shape != q.shape:
        raise ParameterError("distributions must share a support")
    if np.any(p < 0) or np.any(q < 0):
        raise ParameterError("probabilities must be >= 0")
    support = p > 0
    if np.any(q[support] == 0):
        raise DivergenceError("estimate is zero where the truth has mass")
    return max(0.0, float(np.sum(p[support] * np.log(p[support] / q[support]))))


@dataclass(frozen=True)
class DiscreteJoint:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.size == 0:
            raise ParameterError("joint table must be a non-empty matrix")
        if np.any(m < 0) or abs(m.sum() - 1.0) > SUM_TOL:
            raise ParameterError("joint table must be >= 0 and sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_channel(cls, px, channel):
        """Joint from an input distribution and a row-stochastic channel P(y|x)."""
        px = np.asarray(px, dtype=float)
        return cls(px[:, None] * np.asarray(channel, dtype=float))


def _entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def mutual_information(joint: DiscreteJoint) -> float:
    m = joint.matrix
    px, py = m.sum(axis=1), m.sum(axis=0)
    nz = m > 0
    return max(0.0, float(np.sum(m[nz] * np.log(m[nz] / np.outer(px, py)[nz]))))


def channel_entropy(joint: DiscreteJoint) -> float:
    """Fraction of the source's information lost in the channel: 1 - I(X;Y)/H(X)."""
    hx = _entropy(joint.matrix.sum(axis=1))
    if hx == 0:
        raise UndefinedError("source entropy is zero; channel entropy undefined")
    return float(np.clip(1.0 - mutual_information(joint) / hx, 0.0, 1.0))


def misperception(estimates, truth) -> float:
    """Mean squared distance between estimated and true preference rows."""
    a = np.atleast_2d(np.asarray(estimates, dtype=float))
    b = np.atleast_2d(np.asarray(truth, dtype=float))
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))


# ---------------------------------------------------------------------------
# observable friction


@dataclass(frozen=True)
class ReturnSeries:
    timestamps: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=float)
        r = np.array(self.returns, dtype=float)
        if t.shape != r.shape or t.ndim != 1:
            raise ParameterError("timestamps and returns must be equal-length vectors")
        if np.any(np.diff(t) <= 0):
            raise ParameterError("timestamps must be strictly increasing")
        t.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "returns", r)

    def window(self, start, end) -> np.ndarray:
        """Returns with start <= t < end."""
        mask = (self.timestamps >= start) & (self.timestamps < end)
        return self.returns[mask]

    def volatility(self, start=-np.inf, end=np.inf) -> float:
        r = self.window(start, end)
        if r.size < 2:
            raise DegenerateInputError("need at least two returns in the window")
        return float(np.std(r, ddof=1))


def volatility_friction(realized: float, baseline: float) -> float:
    if not baseline > 0:
        raise UndefinedError("baseline volatility must be > 0")
    if realized < 0:
        raise ParameterError("volatility must be >= 0")
    return realized / baseline


def volatility_friction_series(series: ReturnSeries, event_window, baseline_window) -> float:
    return volatility_friction(series.volatility(*event_window), series.volatility(*baseline_window))


def institutional_friction(components, weights) -> float:
    c = _vector(components, "components")
    w = _vector(weights, "weights")
    if c.shape != w.shape:
        raise ParameterError("need one weight per component")
    if np.any((c < 0) | (c > 1)) or np.any((w < 0) | (w > 1)):
        raise ParameterError("components and weights must lie in [0, 1]")
    if abs(w.sum() - 1.0) > SUM_TOL:
        raise ParameterError("weights must sum to 1")
    return float(w @ c)


def coordination_friction(achieved: float, optimal: float) -> float:
    if optimal == 0:
        raise UndefinedError("optimal reward is zero; ratio undefined")
    return 1.0 - achieved / optimal


def overhead_friction(coordination_cost: float, total_cost: float) -> float:
    if not total_cost > 0:
        raise UndefinedError("total cost must be > 0")
    return coordination_cost / total_cost


# ---------------------------------------------------------------------------
# dispatch

_ALIGNMENT = {"survey": survey_alignment, "market": market_alignment, "vote": vote_alignment}
_STAKE = {
    "monetary": monetary_stake,
    "present_value": present_value_stake,
    "computational": computational_stake,
    "political": political_stake,
}
_ENTROPY = {
    "kl": kl_divergence,
    "channel": lambda joint: channel_entropy(joint if isinstance(joint, DiscreteJoint) else DiscreteJoint(joint)),
    "misperception": misperception,
}
_PROXY = {
    "volatility": volatility_friction,
    "institutional": institutional_friction,
    "coordination": coordination_friction,
    "overhead": overhead_friction,
}
FAMILIES = {"alignment": _ALIGNMENT, "stake": _STAKE, "entropy": _ENTROPY, "friction": _PROXY}


def _dispatch(table, family, mode, inputs: Mapping):
    try:
        fn = table[mode]
    except KeyError:
        raise ParameterError(f"unknown {family} mode {mode!r}; choose from {sorted(table)}") from None
    try:
        return fn(**inputs)
    except TypeError as exc:
        raise ParameterError(f"bad inputs for {family} mode {mode!r}: {exc}") from None


def estimate_alignment(mode: str, **inputs) -> float:
    return _dispatch(_ALIGNMENT, "alignment", mode, inputs)


def estimate_stake(mode: str, **inputs) -> float:
    return _dispatch(_STAKE, "stake", mode, inputs)


def estimate_entropy(mode: str, **inputs) -> float:
    return _dispatch(_ENTROPY, "entropy", mode, inputs)


def estimate_friction_proxy(mode: str, **inputs) -> float:
    return _dispatch(_PROXY, "friction", mode, inputs)


def estimate(family: str, mode: str, inputs: Mapping) -> float:
    if family not in FAMILIES:
        raise ParameterError(f"unknown estimator family {family!r}")
    return _dispatch(FAMILIES[family], family, mode, inputs)


# ---------------------------------------------------------------------------
# CSV ingestion


def read_table(path, columns: Sequence[str] | None = None, numeric: bool = True) -> dict[str, np.ndarray]:
    """Read a headed CSV into column arrays.

    Only ``columns`` are kept (all when ``None``). A short row or a cell that
    does not parse as a float raises ``TableError`` with the 1-based file line.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError("empty file, expected a header row", row=1, path=str(path)) from None
        wanted = list(header) if columns is None else list(columns)
        missing = [c for c in wanted if c not in header]
        if missing:
            raise TableError(f"missing columns {missing}", row=1, path=str(path))
        idx = [header.index(c) for c in wanted]
        data: dict[str, list] = {c: [] for c in wanted}
        for reader_row in reader:
            line = reader.line_num
            if not reader_row:
                continue
            if len(reader_row) != len(header):
                raise TableError(f"expected {len(header)} fields, got {len(reader_row)}", row=line, path=str(path))
            for c, i in zip(wanted, idx):
                cell = reader_row[i]
                if numeric:
                    try:
                        cell = float(cell)
                    except ValueError:
                        raise TableError(f"column {c!r}: cannot parse {cell!r}", row=line, path=str(path)) from None
                data[c].append(cell)
    return {c: np.array(v) for c, v in data.items()}


def return_series_from_csv(path, time_column="t", return_column="r") -> ReturnSeries:
    table = read_table(path, [time_column, return_column])
    return ReturnSeries(table[time_column], table[return_column])
