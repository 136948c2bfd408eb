"""Age-of-information spectrum sharing as a repeated game."""

from .correlated import (
    CaseTag,
    OptimalSolution,
    ProbabilityVector,
    access_fair_vector,
    age_fair_vector,
    expected_payoffs,
    one_stage_optimal,
)
from .lp_oracle import LpInstance, grid_refine, solve_exact
from .repeated_game import (
    Deviation,
    DeviationKind,
    GameConfig,
    Strategy,
    compare_deviations,
    discounted_payoff_access_fair,
    mc_discounted_payoff,
    simulate_path,
    spne_verdict_analytic,
    spne_verdict_mc,
)
from .stage_game import SlotEvent, SlotLengths, minmax_payoff

__version__ = "0.1.0"
