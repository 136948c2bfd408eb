"""Infinitely repeated game: discounted payoffs, path simulation, SPNE checks.

Payoffs use the normalised discounted sum ``-(1 - alpha) * sum_t alpha**(t-1) * age_t``
where ``age_t`` is the age at the end of slot ``t - 1``.

Random paths draw one uniform per slot. Uniforms come from independent
PCG64 streams, one per block of ``PATH_BLOCK`` paths, keyed by the master seed
and the block index through ``SeedSequence`` spawn keys. A path's draws thus
depend only on (seed, key, path index, total paths), never on how the batch is
scheduled or chunked.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import correlated
from .correlated import ProbabilityVector
from .stage_game import (
    SlotEvent,
    SlotLengths,
    check_ages,
    is_individually_rational,
    minmax_payoff,
)

PATH_BLOCK = 256
CHUNK_SLOTS = 64
TAIL_TOL = 1e-12
ANALYTIC_EPS = 1e-10


class Strategy(enum.Enum):
    ACCESS_FAIR = "access-fair"
    AGE_FAIR = "age-fair"
    ONE_STAGE_OPTIMAL = "optimal"

    def vector(self, ages: Sequence[float], sl: SlotLengths) -> ProbabilityVector:
        if self is Strategy.ACCESS_FAIR:
            return correlated.access_fair_vector(len(ages))
        if self is Strategy.AGE_FAIR:
            return correlated.age_fair_vector(ages)
        return correlated.one_stage_optimal(ages, sl).vector

    def batch(self, ages: np.ndarray, sl: SlotLengths) -> np.ndarray:
        if self is Strategy.ACCESS_FAIR:
            return correlated.access_fair_batch(ages)
        if self is Strategy.AGE_FAIR:
            return correlated.age_fair_batch(ages)
        return correlated.one_stage_optimal_batch(ages, sl)


class DeviationKind(enum.Enum):
    IDLE_WHEN_TRANSMIT = "idle-when-transmit"
    TRANSMIT_WHEN_IDLE = "transmit-when-idle"


_KIND_CODE = {DeviationKind.IDLE_WHEN_TRANSMIT: 0, DeviationKind.TRANSMIT_WHEN_IDLE: 1}


@dataclass(frozen=True)
class Deviation:
    """Source ``source`` disobeys its slot-0 recommendation, then complies forever."""

    source: int
    kind: DeviationKind


@dataclass(frozen=True)
class GameConfig:
    n: int
    sl: SlotLengths
    alpha: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two sources")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")


@dataclass(frozen=True)
class AgePmf:
    support: tuple[tuple[float, float], ...]

    def total(self) -> float:
        return math.fsum(p for _, p in self.support)

    def mean(self) -> float:
        return math.fsum(x * p for x, p in self.support)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    paths: int
    slots_per_path: int
    seed: int


# ---------------------------------------------------------------------------
# analytic results for the access-fair strategy

def _check_t(t: int) -> None:
    if t < 1:
        raise ValueError(f"slot count must be >= 1, got {t}")


def access_fair_age_pmf(t: int, delta0: float, cfg: GameConfig) -> AgePmf:
    """Distribution of one source's age after ``t`` access-fair slots."""
    _check_t(t)
    n, s = cfg.n, cfg.sl.sigma_s
    r = (n - 1) / n
    support = [(m * s, r ** (m - 1) / n) for m in range(1, t + 1)]
    support.append((delta0 + t * s, r**t))
    return AgePmf(tuple(support))


def _expected_age(t: np.ndarray | int, delta0: float, n: int, sigma_s: float):
    r = (n - 1) / n
    # sigma_s * sum_{m<=t} m r^(m-1) / n, summed in closed form
    reset_part = sigma_s * n * (1.0 - (t + 1) * r**t + t * r ** (t + 1))
    return reset_part + r**t * (delta0 + t * sigma_s)


def access_fair_expected_age(t: int, delta0: float, cfg: GameConfig) -> float:
    _check_t(t)
    return float(_expected_age(t, delta0, cfg.n, cfg.sl.sigma_s))


def truncation_horizon(delta0: float, cfg: GameConfig, eps: float = ANALYTIC_EPS) -> int:
    """Slots after which the discarded tail of the discounted sum is below ``eps``."""
    a = cfg.alpha
    if a == 0.0:
        return 1
    s = cfg.sl.sigma_s
    horizon = 1
    while True:
        bound = delta0 + horizon * s * (1.0 + 1.0 / (1.0 - a))
        needed = math.ceil(math.log(eps * (1.0 - a) / bound) / math.log(a))
        if needed <= horizon:
            return horizon
        horizon = needed


def discounted_payoff_access_fair(delta0: float, cfg: GameConfig) -> float:
    horizon = truncation_horizon(delta0, cfg)
    t = np.arange(1, horizon + 1)
    ages = _expected_age(t, delta0, cfg.n, cfg.sl.sigma_s)
    return float(-(1.0 - cfg.alpha) * np.sum(cfg.alpha ** (t - 1) * ages))


def access_fair_deviation_payoff(delta0: float, cfg: GameConfig, kind: DeviationKind) -> float:
    """Expected payoff of a one-shot deviation at slot 0 under access-fair play.

    The deviator sees its recommendation first, so only the branch the
    deviation applies to changes; the other branch is ordinary compliance.
    """
    n, a, sl = cfg.n, cfg.alpha, cfg.sl

    def then(age1: float) -> float:
        return -(1.0 - a) * age1 + a * discounted_payoff_access_fair(age1, cfg)

    if kind is DeviationKind.IDLE_WHEN_TRANSMIT:
        told_tx, told_idle = then(delta0 + sl.sigma_i), then(delta0 + sl.sigma_s)
    else:
        told_tx, told_idle = then(sl.sigma_s), then(delta0 + sl.sigma_c)
    return told_tx / n + told_idle * (n - 1) / n


# ---------------------------------------------------------------------------
# path simulation

class PathStreams:
    """Uniform draws for a batch of paths, one PCG64 stream per block of paths."""

    def __init__(self, seed: int, paths: int, key: tuple[int, ...] = ()):
        if paths < 1:
            raise ValueError("paths must be >= 1")
        self.paths = paths
        self._sizes = [min(PATH_BLOCK, paths - start) for start in range(0, paths, PATH_BLOCK)]
        self._gens = [
            np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(*key, b))))
            for b in range(len(self._sizes))
        ]

    def draw(self, slots: int) -> np.ndarray:
        """Next ``slots`` uniforms for every path, shape (slots, paths)."""
        return np.hstack([g.random((slots, size)) for g, size in zip(self._gens, self._sizes)])


def _sample_events(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Event code per path: source index for a success, n for idle, n + 1 for collision."""
    total = probs.sum(axis=0)
    v = np.minimum(u * total, np.nextafter(total, 0.0))
    # running sums are nondecreasing, so counting those <= v finds the first above v
    cum = np.zeros_like(v)
    event = np.zeros(v.shape, dtype=np.intp)
    for row in probs:
        cum += row
        event += cum <= v
    return event


def _deviate(rec: np.ndarray, n: int, dev_source: np.ndarray, dev_kind: np.ndarray) -> np.ndarray:
    # a collision recommendation means every source transmits
    event = rec.copy()
    k = dev_source
    active = k >= 0
    idle_dev = active & (dev_kind == 0)
    tx_dev = active & (dev_kind == 1)

    event[idle_dev & (rec == k)] = n
    if n == 2:
        lone = idle_dev & (rec == n + 1)
        event[lone] = 1 - k[lone]
    event[tx_dev & (rec < n) & (rec != k)] = n + 1
    alone = tx_dev & (rec == n)
    event[alone] = k[alone]
    return event


def _advance(ages: np.ndarray, events: np.ndarray, sl: SlotLengths) -> None:
    n = ages.shape[0]
    inc = np.where(events < n, sl.sigma_s, np.where(events == n, sl.sigma_i, sl.sigma_c))
    ages += inc
    for k in range(n):
        np.putmask(ages[k], events == k, sl.sigma_s)


@dataclass
class _Run:
    payoffs: np.ndarray
    slots_run: int
    ages: list = field(default_factory=list)
    events: list = field(default_factory=list)


def _run_paths(
    strategy: Strategy,
    ages0: np.ndarray,
    cfg: GameConfig,
    slots: int,
    draw: Callable[[int], np.ndarray],
    dev_source: np.ndarray | None = None,
    dev_kind: np.ndarray | None = None,
    tail_tol: float = 0.0,
    record: bool = False,
) -> _Run:
    """Simulate every row of ``ages0`` (paths x n) and return discounted payoffs (n x paths).

    Stops early once a deterministic bound on the remaining discounted
    contribution falls below ``tail_tol``.
    """
    if slots < 1:
        raise ValueError("slots must be >= 1")
    sl, alpha = cfg.sl, cfg.alpha
    ages = np.array(np.asarray(ages0, dtype=float).T, order="C")
    n, rows = ages.shape
    acc = np.zeros_like(ages)
    weight = 1.0 - alpha
    sigma_max = max(sl.as_tuple())
    age_cap = float(ages.max())
    fixed = strategy.batch(ages, sl) if strategy is Strategy.ACCESS_FAIR else None
    out = _Run(acc, 0)
    if record:
        out.ages.append(ages.copy())

    t = 0
    done = False
    while t < slots and not done:
        for u in draw(min(CHUNK_SLOTS, slots - t)):
            probs = fixed if fixed is not None else strategy.batch(ages, sl)
            events = _sample_events(probs, u)
            if t == 0 and dev_source is not None:
                events = _deviate(events, n, dev_source, dev_kind)
            _advance(ages, events, sl)
            acc += weight * ages
            weight *= alpha
            t += 1
            if record:
                out.ages.append(ages.copy())
                out.events.append(events.copy())
            age_cap += sigma_max
            if tail_tol > 0.0 and alpha**t * (age_cap + sigma_max / (1.0 - alpha)) < tail_tol:
                done = True
                break

    out.payoffs = -acc
    out.slots_run = t
    return out


def _event_from_code(code: int, n: int) -> SlotEvent:
    if code < n:
        return SlotEvent.success(int(code))
    return SlotEvent.idle() if code == n else SlotEvent.collision()


@dataclass(frozen=True)
class PathTrace:
    ages: np.ndarray  # (slots + 1, n); row 0 holds the initial ages
    events: tuple[SlotEvent, ...]


def _dev_arrays(deviation: Deviation | None, rows: int, n: int):
    if deviation is None:
        return None, None
    if not 0 <= deviation.source < n:
        raise ValueError(f"deviating source {deviation.source} out of range for {n} sources")
    return (np.full(rows, deviation.source), np.full(rows, _KIND_CODE[deviation.kind]))


def simulate_path(
    strategy: Strategy,
    ages0: Sequence[float],
    cfg: GameConfig,
    slots: int,
    deviation: Deviation | None = None,
    rng: np.random.Generator | int | None = None,
) -> PathTrace:
    ages0 = check_ages(ages0, cfg.sl)
    if ages0.size != cfg.n:
        raise ValueError(f"config has {cfg.n} sources, ages give {ages0.size}")
    rng = np.random.default_rng(rng)
    dev_source, dev_kind = _dev_arrays(deviation, 1, cfg.n)
    run = _run_paths(
        strategy, ages0[None, :], cfg, slots, lambda k: rng.random((k, 1)),
        dev_source, dev_kind, record=True,
    )
    ages = np.vstack([a[:, 0] for a in run.ages])
    events = tuple(_event_from_code(int(e[0]), cfg.n) for e in run.events)
    return PathTrace(ages, events)


def _estimate(samples: np.ndarray, seed: int, slots: int) -> McEstimate:
    paths = samples.size
    se = float(samples.std(ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
    return McEstimate(float(samples.mean()), se, paths, slots, seed)


def mc_discounted_payoff(
    strategy: Strategy,
    source: int,
    ages0: Sequence[float],
    cfg: GameConfig,
    paths: int,
    slots: int,
    seed: int,
    deviation: Deviation | None = None,
    tail_tol: float = TAIL_TOL,
) -> McEstimate:
    ages0 = check_ages(ages0, cfg.sl)
    if ages0.size != cfg.n:
        raise ValueError(f"config has {cfg.n} sources, ages give {ages0.size}")
    if not 0 <= source < cfg.n:
        raise ValueError(f"source {source} out of range")
    streams = PathStreams(seed, paths)
    dev_source, dev_kind = _dev_arrays(deviation, paths, cfg.n)
    run = _run_paths(
        strategy, np.tile(ages0, (paths, 1)), cfg, slots, streams.draw,
        dev_source, dev_kind, tail_tol=tail_tol,
    )
    return _estimate(run.payoffs[source], seed, slots)


@dataclass(frozen=True)
class DeviationComparison:
    """Cooperative vs deviating payoff of one source from one initial state.

    All three estimates reuse the same random streams, so ``gap_std_error``
    is the standard error of the paired per-path differences.
    """

    ages: tuple[float, ...]
    source: int
    cooperate: McEstimate
    deviations: dict[DeviationKind, McEstimate]
    gap_std_errors: dict[DeviationKind, float]

    @property
    def best_deviation(self) -> DeviationKind:
        return max(self.deviations, key=lambda k: self.deviations[k].mean)

    @property
    def gap(self) -> float:
        return self.cooperate.mean - self.deviations[self.best_deviation].mean

    @property
    def std_error(self) -> float:
        return self.gap_std_errors[self.best_deviation]

    def supports_cooperation(self, buffer: float = 2.0) -> bool:
        return self.gap >= -buffer * self.std_error


def _compare_batch(
    strategy: Strategy,
    states: np.ndarray,
    cfg: GameConfig,
    paths: int,
    slots: int,
    seed: int,
    source: int,
    tail_tol: float,
    key: tuple[int, ...] = (),
    first_index: int = 0,
) -> list[DeviationComparison]:
    states = np.atleast_2d(states)
    n_states, n = states.shape
    streams = [PathStreams(seed, paths, key=(*key, first_index + i)) for i in range(n_states)]
    kinds = list(DeviationKind)
    variants = 1 + len(kinds)

    def draw(k: int) -> np.ndarray:
        u = np.hstack([s.draw(k) for s in streams])
        return np.tile(u, (1, variants))

    base = np.repeat(states, paths, axis=0)
    ages0 = np.tile(base, (variants, 1))
    block = n_states * paths
    dev_source = np.full(variants * block, -1)
    dev_kind = np.zeros(variants * block, dtype=int)
    for v, kind in enumerate(kinds, start=1):
        dev_source[v * block:(v + 1) * block] = source
        dev_kind[v * block:(v + 1) * block] = _KIND_CODE[kind]

    run = _run_paths(strategy, ages0, cfg, slots, draw, dev_source, dev_kind, tail_tol=tail_tol)
    pay = run.payoffs[source].reshape(variants, n_states, paths)

    out = []
    for i in range(n_states):
        coop = _estimate(pay[0, i], seed, slots)
        devs, gap_se = {}, {}
        for v, kind in enumerate(kinds, start=1):
            devs[kind] = _estimate(pay[v, i], seed, slots)
            gap_se[kind] = _estimate(pay[0, i] - pay[v, i], seed, slots).std_error
        out.append(DeviationComparison(tuple(states[i].tolist()), source, coop, devs, gap_se))
    return out


def compare_deviations(
    strategy: Strategy,
    source: int,
    ages0: Sequence[float],
    cfg: GameConfig,
    paths: int,
    slots: int,
    seed: int,
    tail_tol: float = TAIL_TOL,
) -> DeviationComparison:
    ages0 = check_ages(ages0, cfg.sl)
    if ages0.size != cfg.n:
        raise ValueError(f"config has {cfg.n} sources, ages give {ages0.size}")
    if not 0 <= source < cfg.n:
        raise ValueError(f"source {source} out of range")
    if paths < 1:
        raise ValueError("paths must be >= 1")
    return _compare_batch(strategy, ages0[None, :], cfg, paths, slots, seed, source, tail_tol)[0]


def compare_deviations_batch(
    strategy: Strategy,
    source: int,
    states: np.ndarray,
    cfg: GameConfig,
    paths: int,
    slots: int,
    seed: int,
    tail_tol: float = TAIL_TOL,
) -> list[DeviationComparison]:
    """:func:`compare_deviations` for many initial states (rows) in one vectorised run."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    for row in states:
        check_ages(row, cfg.sl)
    if states.shape[1] != cfg.n:
        raise ValueError(f"config has {cfg.n} sources, states have {states.shape[1]}")
    if not 0 <= source < cfg.n:
        raise ValueError(f"source {source} out of range")
    if paths < 1:
        raise ValueError("paths must be >= 1")
    return _compare_batch(strategy, states, cfg, paths, slots, seed, source, tail_tol)


# ---------------------------------------------------------------------------
# SPNE verdicts

@dataclass(frozen=True)
class Witness:
    """A state (and source) at which the strategy fails a one-shot check."""

    ages: tuple[float, ...]
    source: int
    reason: str  # "individual-rationality" or "profitable-deviation"
    payoff: float
    bound: float  # minmax payoff, or the cooperative payoff for a deviation witness


@dataclass(frozen=True)
class AnalyticVerdict:
    strategy: Strategy
    spne: bool
    witness: Witness | None = None


def _ir_witness(strategy: Strategy, ages: np.ndarray, cfg: GameConfig) -> Witness | None:
    p = strategy.vector(ages, cfg.sl)
    pay = correlated.expected_payoffs(p, ages, cfg.sl)
    if is_individually_rational(pay, ages, cfg.sl):
        return None
    floors = np.array([minmax_payoff(a, cfg.n, cfg.sl) for a in ages])
    k = int(np.argmin(pay - floors))
    return Witness(tuple(ages.tolist()), k, "individual-rationality", float(pay[k]), float(floors[k]))


def spne_verdict_analytic(
    strategy: Strategy, cfg: GameConfig, ages: Sequence[float] | None = None
) -> AnalyticVerdict:
    """SPNE verdict for the access-fair and age-fair strategies.

    With ``sigma_s <= sigma_c`` both are equilibria. Otherwise a witness is
    returned and checked before returning: the given state if it breaks
    individual rationality, else a constructed state that does, else (access-
    fair only, when every valid state is individually rational) a profitable
    transmit-when-idle deviation.
    """
    if strategy is Strategy.ONE_STAGE_OPTIMAL:
        raise ValueError("no analytic verdict for the one-stage optimal strategy; use spne_verdict_mc")
    sl, n = cfg.sl, cfg.n
    if sl.short_success:
        return AnalyticVerdict(strategy, True)

    if ages is not None:
        ages = check_ages(ages, sl)
        if ages.size != n:
            raise ValueError(f"config has {n} sources, ages give {ages.size}")
        witness = _ir_witness(strategy, ages, cfg)
        if witness is not None:
            return AnalyticVerdict(strategy, False, witness)

    if strategy is Strategy.AGE_FAIR:
        candidate = sl.sigma_s * np.arange(n, 0, -1, dtype=float)
    else:
        candidate = np.full(n, sl.sigma_s)
    witness = _ir_witness(strategy, candidate, cfg)
    if witness is not None:
        return AnalyticVerdict(strategy, False, witness)

    # access-fair with n (sigma_s - sigma_c) <= sigma_s: IR holds everywhere,
    # but colliding instead of letting another source succeed always pays
    state = candidate if ages is None else ages
    k = 0
    coop = discounted_payoff_access_fair(float(state[k]), cfg)
    dev = access_fair_deviation_payoff(float(state[k]), cfg, DeviationKind.TRANSMIT_WHEN_IDLE)
    if dev > coop:
        return AnalyticVerdict(strategy, False, Witness(tuple(state.tolist()), k, "profitable-deviation", dev, coop))
    raise AssertionError(f"no witness found for {strategy.value} with {sl}")


@dataclass(frozen=True)
class McVerdict:
    spne: bool
    outcomes: tuple[DeviationComparison, ...]

    @property
    def min_gap(self) -> float:
        return min(o.gap for o in self.outcomes)

    @property
    def max_std_error(self) -> float:
        return max(o.std_error for o in self.outcomes)


def sample_states(num_states: int, n: int, age_range: tuple[float, float], seed: int) -> np.ndarray:
    lo, hi = age_range
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
    return rng.uniform(lo, hi, size=(num_states, n))


def spne_verdict_mc(
    cfg: GameConfig,
    num_states: int,
    age_range: tuple[float, float],
    paths: int,
    slots: int,
    seed: int,
    strategy: Strategy = Strategy.ONE_STAGE_OPTIMAL,
    source: int = 0,
    buffer: float = 2.0,
    tail_tol: float = TAIL_TOL,
    max_rows: int = 240_000,
) -> McVerdict:
    """Monte Carlo one-shot-deviation test from randomly drawn initial states.

    The verdict is SPNE only if cooperation is within ``buffer`` standard
    errors of the best deviation in every sampled state.
    """
    lo, hi = age_range
    if lo < cfg.sl.sigma_s:
        raise ValueError(f"age range lower end {lo} is below sigma_s = {cfg.sl.sigma_s}")
    if hi < lo:
        raise ValueError("age range upper end below lower end")
    if num_states < 1 or paths < 1:
        raise ValueError("num_states and paths must be >= 1")
    states = sample_states(num_states, cfg.n, age_range, seed)
    per_batch = max(1, max_rows // (3 * paths))
    outcomes = []
    for start in range(0, num_states, per_batch):
        group = states[start:start + per_batch]
        outcomes.extend(
            _compare_batch(strategy, group, cfg, paths, slots, seed, source, tail_tol, key=(1,), first_index=start)
        )
    return McVerdict(all(o.supports_cooperation(buffer) for o in outcomes), tuple(outcomes))
