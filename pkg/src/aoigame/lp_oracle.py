"""Exact solver for the one-stage optimisation by vertex enumeration.

The problem has n + 2 variables (the probability vector), one equality
(probabilities sum to one) and 2n + 2 inequalities: nonnegativity of every
entry plus one individual-rationality constraint per source. Every basic
feasible solution makes n + 1 of the inequalities active, so for small n we
can afford to try every such subset.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .correlated import ProbabilityVector, next_age_matrix
from .stage_game import SlotLengths, check_ages, minmax_vector

MAX_SOURCES = 8
_BATCH = 4096


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class LpInstance:
    ages: tuple[float, ...]
    sl: SlotLengths

    def __post_init__(self):
        object.__setattr__(self, "ages", tuple(float(a) for a in check_ages(self.ages, self.sl)))

    @property
    def n(self) -> int:
        return len(self.ages)

    def objective_coefficients(self) -> np.ndarray:
        """Summed expected payoff per unit of probability on each event."""
        return -next_age_matrix(self.ages, self.sl).sum(axis=0)

    def inequalities(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows ``G x <= h``: nonnegativity first, then individual rationality."""
        m = self.n + 2
        next_age = next_age_matrix(self.ages, self.sl)
        G = np.vstack([-np.eye(m), next_age])
        h = np.concatenate([np.zeros(m), -minmax_vector(self.ages, self.sl)])
        return G, h


@lru_cache(maxsize=None)
def _active_sets(n_ineq: int, k: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(n_ineq), k)), dtype=np.intp)


def solve_exact(inst: LpInstance) -> tuple[ProbabilityVector, float]:
    n = inst.n
    if n > MAX_SOURCES:
        raise ValueError(f"vertex enumeration supports at most {MAX_SOURCES} sources, got {n}")
    m = n + 2
    G, h = inst.inequalities()
    c = inst.objective_coefficients()
    scale = max(1.0, float(np.abs(G).max()))
    feas_tol = 1e-9 * scale

    best_x, best_val = None, -np.inf
    subsets = _active_sets(G.shape[0], m - 1)
    for start in range(0, len(subsets), _BATCH):
        chunk = subsets[start:start + _BATCH]
        A = np.empty((len(chunk), m, m))
        A[:, 0, :] = 1.0
        A[:, 1:, :] = G[chunk]
        b = np.empty((len(chunk), m))
        b[:, 0] = 1.0
        b[:, 1:] = h[chunk]

        sv = np.linalg.svd(A, compute_uv=False)
        regular = sv[:, -1] > 1e-11 * sv[:, 0]
        if not regular.any():
            continue
        x = np.linalg.solve(A[regular], b[regular][..., None])[..., 0]
        feasible = np.all(x @ G.T <= h + feas_tol, axis=1)
        if not feasible.any():
            continue
        x = x[feasible]
        vals = x @ c
        i = int(np.argmax(vals))
        # strict improvement keeps the first optimum in subset order
        if vals[i] > best_val + 1e-12 * scale:
            best_x, best_val = x[i], float(vals[i])

    if best_x is None:
        raise OracleError(f"no feasible vertex for ages {inst.ages} and {inst.sl}")
    x = np.clip(best_x, 0.0, 1.0) + 0.0  # + 0.0 turns -0.0 into 0.0
    x /= x.sum()
    return ProbabilityVector.from_array(x), best_val


@lru_cache(maxsize=64)
def _compositions3(total: int) -> np.ndarray:
    a, b = np.triu_indices(total + 1)
    # a <= b, parts (a, b - a, total - b)
    return np.stack([a, b - a, total - b], axis=1)


def _compositions(total: int, parts: int):
    """Yield blocks of nonnegative integer vectors with ``parts`` entries summing to ``total``."""
    if parts == 3:
        yield _compositions3(total)
        return
    for first in range(total + 1):
        for block in _compositions(total - first, parts - 1):
            yield np.column_stack([np.full(len(block), first), block])


def grid_refine(inst: LpInstance, resolution: int) -> tuple[ProbabilityVector, float]:
    """Best feasible point on the uniform simplex grid with ``resolution`` steps."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    G, h = inst.inequalities()
    c = inst.objective_coefficients()
    tol = 1e-9 * max(1.0, float(np.abs(G).max()))
    best_x, best_val = None, -np.inf
    for block in _compositions(resolution, inst.n + 2):
        x = block / resolution
        ok = np.all(x @ G.T <= h + tol, axis=1)
        if not ok.any():
            continue
        vals = x[ok] @ c
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_x, best_val = x[ok][i], float(vals[i])
    if best_x is None:
        raise OracleError("no feasible grid point")
    return ProbabilityVector.from_array(best_x), best_val
