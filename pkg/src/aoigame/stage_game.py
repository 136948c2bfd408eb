"""One-slot game played by sources sharing a slotted collision channel.

Sources are indexed from 0. Ages and slot durations share one arbitrary time
unit. A payoff is the negated age at the end of the slot.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PAYOFF_TOL = 1e-9


class AccessRegime(enum.Enum):
    SHORT_SUCCESS = "short-success"  # sigma_s <= sigma_c
    LONG_SUCCESS = "long-success"  # sigma_s > sigma_c


@dataclass(frozen=True)
class SlotLengths:
    """Durations of idle, successful and collision slots."""

    sigma_i: float
    sigma_s: float
    sigma_c: float

    def __post_init__(self):
        for name in ("sigma_i", "sigma_s", "sigma_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not (self.sigma_i < self.sigma_s and self.sigma_i < self.sigma_c):
            raise ValueError("sigma_i must be shorter than both sigma_s and sigma_c")

    @property
    def regime(self) -> AccessRegime:
        if self.sigma_s <= self.sigma_c:
            return AccessRegime.SHORT_SUCCESS
        return AccessRegime.LONG_SUCCESS

    @property
    def short_success(self) -> bool:
        return self.regime is AccessRegime.SHORT_SUCCESS

    def scaled(self, factor: float) -> "SlotLengths":
        return SlotLengths(self.sigma_i * factor, self.sigma_s * factor, self.sigma_c * factor)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.sigma_i, self.sigma_s, self.sigma_c)


class EventKind(enum.Enum):
    IDLE = "idle"
    COLLISION = "collision"
    SUCCESS = "success"


@dataclass(frozen=True)
class SlotEvent:
    kind: EventKind
    source: int | None = None

    def __post_init__(self):
        if (self.kind is EventKind.SUCCESS) != (self.source is not None):
            raise ValueError("only a success event carries a source index")
        if self.source is not None and self.source < 0:
            raise ValueError(f"invalid source index {self.source}")

    @classmethod
    def idle(cls) -> "SlotEvent":
        return cls(EventKind.IDLE)

    @classmethod
    def collision(cls) -> "SlotEvent":
        return cls(EventKind.COLLISION)

    @classmethod
    def success(cls, source: int) -> "SlotEvent":
        return cls(EventKind.SUCCESS, source)

    def label(self) -> str:
        """Short label with 1-based source numbering (I, C, S1, S2, ...)."""
        if self.kind is EventKind.IDLE:
            return "I"
        if self.kind is EventKind.COLLISION:
            return "C"
        return f"S{self.source + 1}"


def check_ages(ages: Sequence[float], sl: SlotLengths) -> np.ndarray:
    """Validate an age vector and return it as a float array."""
    arr = np.asarray(ages, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("an age vector needs at least two sources")
    if not np.all(np.isfinite(arr)):
        raise ValueError("ages must be finite")
    if np.any(arr < sl.sigma_s * (1 - 1e-12)):
        bad = int(np.argmin(arr))
        raise ValueError(f"age below sigma_s: source {bad + 1} has age {arr[bad]} < {sl.sigma_s}")
    return arr


def classify_event(profile: Sequence[bool]) -> SlotEvent:
    transmitters = [k for k, act in enumerate(profile) if act]
    if not transmitters:
        return SlotEvent.idle()
    if len(transmitters) == 1:
        return SlotEvent.success(transmitters[0])
    return SlotEvent.collision()


def step_age(age: float, source: int, event: SlotEvent, sl: SlotLengths) -> float:
    """Age of ``source`` at the end of a slot that started with ``age``."""
    if event.kind is EventKind.IDLE:
        return age + sl.sigma_i
    if event.kind is EventKind.COLLISION:
        return age + sl.sigma_c
    if event.source == source:
        return sl.sigma_s
    return age + sl.sigma_s


def stage_payoffs(ages: Sequence[float], profile: Sequence[bool], sl: SlotLengths) -> np.ndarray:
    if len(ages) != len(profile):
        raise ValueError(f"{len(ages)} ages but {len(profile)} actions")
    event = classify_event(profile)
    return np.array([-step_age(a, k, event, sl) for k, a in enumerate(ages)])


def minmax_payoff(age: float, n: int, sl: SlotLengths) -> float:
    """Worst payoff the other n-1 sources can force on a best-responding source."""
    if n < 2:
        raise ValueError("minmax payoff needs n >= 2")
    if n == 2 and sl.short_success:
        return -(age + sl.sigma_s)
    return -(age + sl.sigma_c)


def minmax_payoff_bruteforce(ages: Sequence[float], source: int, sl: SlotLengths) -> float:
    """Minmax by enumerating every opponent profile and every own action."""
    n = len(ages)
    if n < 2:
        raise ValueError("minmax payoff needs n >= 2")
    worst = np.inf
    for others in itertools.product((False, True), repeat=n - 1):
        best = -np.inf
        for own in (False, True):
            profile = list(others[:source]) + [own] + list(others[source:])
            best = max(best, stage_payoffs(ages, profile, sl)[source])
        worst = min(worst, best)
    return float(worst)


def minmax_vector(ages: Sequence[float], sl: SlotLengths) -> np.ndarray:
    n = len(ages)
    return np.array([minmax_payoff(a, n, sl) for a in ages])


def is_individually_rational(
    payoffs: Sequence[float], ages: Sequence[float], sl: SlotLengths, tol: float = PAYOFF_TOL
) -> bool:
    if len(payoffs) != len(ages):
        raise ValueError(f"{len(payoffs)} payoffs but {len(ages)} ages")
    floor = minmax_vector(ages, sl)
    return bool(np.all(np.asarray(payoffs, dtype=float) >= floor - tol))
