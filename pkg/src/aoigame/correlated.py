"""Correlated one-slot strategies and the closed-form one-stage optimum.

A correlated strategy is summarised by the probabilities of the slot events:
success of each source, an idle slot, and a collision. Arrays in the batched
helpers use the column layout ``[p_1 .. p_n, p_idle, p_collision]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .stage_game import SlotLengths, check_ages, is_individually_rational

SUM_TOL = 1e-9


class ClosedFormError(RuntimeError):
    """The closed-form optimum produced an infeasible or malformed vector."""


@dataclass(frozen=True)
class ProbabilityVector:
    p_success: tuple[float, ...]
    p_idle: float = 0.0
    p_collision: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p_success", tuple(float(p) for p in self.p_success))
        entries = self.as_array()
        if np.any(entries < -SUM_TOL) or np.any(entries > 1 + SUM_TOL):
            raise ValueError(f"probabilities outside [0, 1]: {entries.tolist()}")
        if abs(entries.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {entries.sum()!r}, not 1")

    @property
    def n(self) -> int:
        return len(self.p_success)

    def as_array(self) -> np.ndarray:
        return np.array([*self.p_success, self.p_idle, self.p_collision], dtype=float)

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "ProbabilityVector":
        arr = [float(x) for x in arr]
        return cls(tuple(arr[:-2]), arr[-2], arr[-1])

    def __str__(self):
        body = ", ".join(f"{p:.6g}" for p in self.p_success)
        return f"[{body} | idle={self.p_idle:.6g}, collision={self.p_collision:.6g}]"


class CaseTag(enum.Enum):
    ALL_IDLE = "AllIdle"
    MAX_AGE_DETERMINISTIC = "MaxAgeDeterministic"
    MIXED_CASE1 = "MixedCase1"
    IDLE_MIX_CASE2 = "IdleMixCase2"


@dataclass(frozen=True)
class OptimalSolution:
    vector: ProbabilityVector
    case: CaseTag
    objective: float


def next_age_matrix(ages: Sequence[float], sl: SlotLengths) -> np.ndarray:
    """Row k, column e: age of source k at slot end given event e.

    Columns follow the probability-vector layout.
    """
    ages = np.asarray(ages, dtype=float)
    n = ages.size
    mat = np.empty((n, n + 2))
    mat[:, :n] = (ages + sl.sigma_s)[:, None]
    mat[np.arange(n), np.arange(n)] = sl.sigma_s
    mat[:, n] = ages + sl.sigma_i
    mat[:, n + 1] = ages + sl.sigma_c
    return mat


def expected_payoffs(p: ProbabilityVector, ages: Sequence[float], sl: SlotLengths) -> np.ndarray:
    if p.n != len(ages):
        raise ValueError(f"probability vector for {p.n} sources, {len(ages)} ages given")
    return -(next_age_matrix(ages, sl) @ p.as_array())


def sum_payoff(p: ProbabilityVector, ages: Sequence[float], sl: SlotLengths) -> float:
    return float(expected_payoffs(p, ages, sl).sum())


def access_fair_vector(n: int) -> ProbabilityVector:
    if n < 2:
        raise ValueError("need at least two sources")
    return ProbabilityVector((1.0 / n,) * n, 0.0, 0.0)


def age_fair_vector(ages: Sequence[float]) -> ProbabilityVector:
    # np.argmax picks the lowest index on ties
    j = int(np.argmax(ages))
    p = [0.0] * len(ages)
    p[j] = 1.0
    return ProbabilityVector(tuple(p), 0.0, 0.0)


def is_feasible(p: ProbabilityVector, ages: Sequence[float], sl: SlotLengths) -> bool:
    return is_individually_rational(expected_payoffs(p, ages, sl), ages, sl)


def harmonic_mean(ages: Sequence[float]) -> float:
    ages = np.asarray(ages, dtype=float)
    return float(ages.size / np.sum(1.0 / ages))


def one_stage_optimal(ages: Sequence[float], sl: SlotLengths) -> OptimalSolution:
    """Closed-form maximiser of the summed expected payoff over feasible vectors."""
    ages = check_ages(ages, sl)
    n = ages.size
    threshold = n * (sl.sigma_s - sl.sigma_i)
    j = int(np.argmax(ages))
    p = np.zeros(n + 2)

    if np.all(ages < threshold):
        p[n] = 1.0
        case = CaseTag.ALL_IDLE
    elif sl.short_success:
        p[j] = 1.0
        case = CaseTag.MAX_AGE_DETERMINISTIC
    elif harmonic_mean(ages) >= threshold:
        others = np.arange(n) != j
        p[:n][others] = (sl.sigma_s - sl.sigma_c) / ages[others]
        p[j] = 1.0 - p[:n][others].sum()
        case = CaseTag.MIXED_CASE1
    else:
        p[n] = (sl.sigma_s - sl.sigma_c) / (sl.sigma_s - sl.sigma_i)
        p[j] = 1.0 - p[n]
        case = CaseTag.IDLE_MIX_CASE2

    try:
        vector = ProbabilityVector.from_array(p)
    except ValueError as exc:
        raise ClosedFormError(f"{case.value} produced an invalid vector at ages {ages.tolist()}: {exc}") from exc
    if not is_feasible(vector, ages, sl):
        raise ClosedFormError(f"{case.value} vector {vector} is not individually rational at ages {ages.tolist()}")
    return OptimalSolution(vector, case, sum_payoff(vector, ages, sl))


# Batched prescriptions used by the path simulator. ``ages`` is source-major,
# shape (n, paths), and the result has shape (n + 2, paths).

def first_argmax(ages: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index and value of the largest age in each column, lowest index on ties."""
    best = ages[0].copy()
    j = np.zeros(ages.shape[1], dtype=np.intp)
    for k in range(1, ages.shape[0]):
        j[ages[k] > best] = k
        np.maximum(best, ages[k], out=best)
    return j, best


def access_fair_batch(ages: np.ndarray) -> np.ndarray:
    n, cols = ages.shape
    p = np.zeros((n + 2, cols))
    p[:n] = 1.0 / n
    return p


def age_fair_batch(ages: np.ndarray) -> np.ndarray:
    n, cols = ages.shape
    j, _ = first_argmax(ages)
    p = np.zeros((n + 2, cols))
    p[:n] = j == np.arange(n)[:, None]
    return p


def one_stage_optimal_batch(ages: np.ndarray, sl: SlotLengths) -> np.ndarray:
    """Column-wise equivalent of :func:`one_stage_optimal` without validation."""
    n, cols = ages.shape
    threshold = n * (sl.sigma_s - sl.sigma_i)
    j, top = first_argmax(ages)
    is_max = j == np.arange(n)[:, None]
    p = np.zeros((n + 2, cols))

    if sl.short_success:
        p[:n] = is_max
    else:
        gap = sl.sigma_s - sl.sigma_c
        p_idle = gap / (sl.sigma_s - sl.sigma_i)
        case1 = n / np.sum(1.0 / ages, axis=0) >= threshold
        mixed = np.divide(gap, ages)
        mixed *= ~is_max
        mixed += is_max * (1.0 - mixed.sum(axis=0))
        p[:n] = np.where(case1, mixed, is_max * (1.0 - p_idle))
        p[n] = np.where(case1, 0.0, p_idle)

    idle = top < threshold
    if idle.any():
        p *= ~idle
        p[n] += idle
    return p
