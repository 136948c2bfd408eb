"""Acceptance checks, one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or as a script.
"""

import time

import numpy as np
import pytest

from aoigame.correlated import access_fair_vector, expected_payoffs, is_feasible, one_stage_optimal
from aoigame.experiments import main as cli_main
from aoigame.experiments import parse_rows
from aoigame.lp_oracle import LpInstance, solve_exact
from aoigame.repeated_game import (
    DeviationKind,
    GameConfig,
    McEstimate,
    PathStreams,
    Strategy,
    access_fair_age_pmf,
    access_fair_deviation_payoff,
    access_fair_expected_age,
    compare_deviations_batch,
    discounted_payoff_access_fair,
    mc_discounted_payoff,
    spne_verdict_analytic,
)
from aoigame.stage_game import SlotLengths, is_individually_rational, minmax_payoff, minmax_payoff_bruteforce

ALPHA_GRID = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99]
DESK_SCAN = ["spne-scan", "--preset", "fig3", "--n", "2:6", "--alpha", "0.1,0.3,0.5,0.7,0.9,0.99",
             "--states", "20", "--paths", "2000", "--slots", "2000", "--seed", "7"]


def report(capsys, number, title, ok, detail):
    line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


def random_slot_lengths(rng, short_success):
    si = rng.uniform(0.005, 0.2)
    ss = rng.uniform(0.5, 2.0)
    sc = rng.uniform(ss, 2 * ss) if short_success else rng.uniform(si + 0.01, ss - 1e-3)
    return SlotLengths(si, ss, sc)


# 1. closed form against the exact LP optimum

def check_closed_form_vs_oracle(seed=1):
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst_gap, worst_collision, count = 0.0, 0.0, 0
    for short_success in (True, False):
        for _ in range(1000):
            sl = random_slot_lengths(rng, short_success)
            n = int(rng.integers(2, 6))
            ages = rng.uniform(sl.sigma_s, 10 * sl.sigma_s, size=n)
            sol = one_stage_optimal(ages, sl)
            p, oracle = solve_exact(LpInstance(tuple(ages), sl))
            worst_gap = max(worst_gap, abs(sol.objective - oracle))
            worst_collision = max(worst_collision, p.p_collision)
            count += 1
    elapsed = time.perf_counter() - start
    ok = worst_gap < 1e-6 and worst_collision <= 1e-9 and elapsed < 30
    return ok, f"{count} instances, max gap {worst_gap:.2e}, max oracle p_C {worst_collision:.1e}, {elapsed:.1f}s"


# 2. access-fair feasibility boundary

def check_access_fair_boundary():
    failures, checked = [], 0
    for sl in (SlotLengths(0.01, 1.01, 0.101), SlotLengths(0.1, 2.0, 0.5), SlotLengths(0.2, 1.0, 0.9)):
        for n in range(2, 7):
            edge = n * (sl.sigma_s - sl.sigma_c)
            if edge - 1e-6 < sl.sigma_s:
                continue  # boundary sits below the smallest valid age
            for k in range(n):
                for offset, expected in ((1e-6, True), (-1e-6, False)):
                    ages = np.full(n, 10.0 * n)
                    ages[k] = edge + offset
                    checked += 1
                    if is_feasible(access_fair_vector(n), ages, sl) != expected:
                        failures.append((sl, n, k, offset))
    return not failures and checked > 0, f"{checked} boundary probes, {len(failures)} wrong"


# 3. closed-form minmax against exhaustive search

def check_minmax_equivalence(seed=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for sl in (SlotLengths(0.1, 1.0, 1.5), SlotLengths(0.01, 1.01, 0.101)):
        for n in range(2, 7):
            for _ in range(1000):
                ages = rng.uniform(sl.sigma_s, 10 * sl.sigma_s, size=n)
                k = int(rng.integers(n))
                worst = max(worst, abs(minmax_payoff(ages[k], n, sl) - minmax_payoff_bruteforce(ages, k, sl)))
    return worst <= 1e-12, f"max difference {worst:.1e}"


# 4. access-fair PMF, closed-form mean and Monte Carlo payoff

def check_access_fair_triangle(seed=4):
    sl = SlotLengths(0.1, 1.0, 1.5)
    start = time.perf_counter()
    worst_sum, worst_mean = 0.0, 0.0
    for n in (2, 3, 5):
        c = GameConfig(n, sl, 0.5)
        for t in (1, 2, 5, 20, 100, 1000):
            pmf = access_fair_age_pmf(t, 3.0, c)
            worst_sum = max(worst_sum, abs(pmf.total() - 1.0))
            worst_mean = max(worst_mean, abs(pmf.mean() - access_fair_expected_age(t, 3.0, c)))
    z_scores = []
    for n in (2, 3, 5):
        for alpha in (0.1, 0.5, 0.9):
            c = GameConfig(n, sl, alpha)
            ages = np.linspace(3.0, 5.0, n)
            est = mc_discounted_payoff(Strategy.ACCESS_FAIR, 0, ages, c, 100_000, 5000, seed=seed)
            z_scores.append(abs(est.mean - discounted_payoff_access_fair(3.0, c)) / est.std_error)
    elapsed = time.perf_counter() - start
    ok = worst_sum <= 1e-12 and worst_mean <= 1e-9 and max(z_scores) < 3 and elapsed < 120
    return ok, (f"pmf sum err {worst_sum:.1e}, mean err {worst_mean:.1e}, "
                f"max |MC - analytic| {max(z_scores):.2f} SE, {elapsed:.1f}s")


# 5. one-shot deviations never pay when successes are short

def check_short_success_deviations(seed=5):
    rng = np.random.default_rng(seed)
    counterexamples, checks = 0, 0
    # sigma_s == sigma_c is left out: a collision then costs exactly what another
    # source's success costs, so transmit-when-idle ties (see test_repeated_game)
    for sl in (SlotLengths(0.1, 1.0, 1.5), SlotLengths(0.05, 1.0, 1.05), SlotLengths(0.01, 0.3, 2.0)):
        for n in range(2, 6):
            states = rng.uniform(sl.sigma_s, 10 * sl.sigma_s, size=(100, n))
            for alpha in ALPHA_GRID:
                c = GameConfig(n, sl, alpha)
                # access-fair, analytic
                for state in states:
                    for k in range(n):
                        coop = discounted_payoff_access_fair(state[k], c)
                        for kind in DeviationKind:
                            checks += 1
                            counterexamples += not coop > access_fair_deviation_payoff(state[k], c, kind)
                # age-fair, deterministic paths; only the deviation against the recommendation changes play
                for k in range(n):
                    told_transmit = np.argmax(states, axis=1) == k
                    for row, cmp in zip(told_transmit, compare_deviations_batch(
                            Strategy.AGE_FAIR, k, states, c, 1, 20_000, seed)):
                        kind = DeviationKind.IDLE_WHEN_TRANSMIT if row else DeviationKind.TRANSMIT_WHEN_IDLE
                        checks += 1
                        counterexamples += not cmp.cooperate.mean > cmp.deviations[kind].mean
    return counterexamples == 0, f"{checks} comparisons, {counterexamples} counterexamples"


# 6. individual-rationality witnesses when successes are long

def check_long_success_witnesses(seed=6):
    rng = np.random.default_rng(seed)
    bad, checked = 0, 0
    for sl in (SlotLengths(0.01, 1.01, 0.101), SlotLengths(0.1, 2.0, 0.5)):
        for n in range(2, 6):
            edge = n * (sl.sigma_s - sl.sigma_c)
            for alpha in (0.0, 0.5, 0.9, 0.99):
                c = GameConfig(n, sl, alpha)
                for _ in range(25):
                    ages = rng.uniform(sl.sigma_s, 10 * sl.sigma_s, size=n)
                    # one source below the access-fair boundary
                    ages[int(rng.integers(n))] = rng.uniform(sl.sigma_s, edge)
                    for strategy in (Strategy.AGE_FAIR, Strategy.ACCESS_FAIR):
                        checked += 1
                        v = spne_verdict_analytic(strategy, c, ages=ages)
                        w = v.witness
                        verified = (
                            w is not None
                            and w.reason == "individual-rationality"
                            and np.allclose(w.ages, ages)
                            and not is_individually_rational(
                                expected_payoffs(strategy.vector(ages, sl), ages, sl), ages, sl)
                        )
                        bad += v.spne or not verified
    return bad == 0, f"{checked} states x strategies, {bad} without a verified witness"


# 7 and 8. desk-scale SPNE region scan and its determinism

def run_desk_scan(path):
    start = time.perf_counter()
    code = cli_main(DESK_SCAN + ["--output", str(path)])
    return code, time.perf_counter() - start


def check_region(rows, elapsed):
    verdict = {(r["n"], r["alpha"]): r["verdict"] == "SPNE" for r in rows}
    counts = [sum(v for (n, _), v in verdict.items() if n == m) for m in range(2, 7)]
    small_n = verdict[(2, 0.9)]
    large_n = not verdict[(6, 0.1)]
    monotone = all(a >= b for a, b in zip(counts, counts[1:]))
    ok = small_n and large_n and monotone and elapsed < 600
    min_gap = {(r["n"], r["alpha"]): round(r["min_gap"], 3) for r in rows if (r["n"], r["alpha"]) in ((2, 0.9), (6, 0.1))}
    return ok, (f"SPNE at (2, 0.9): {small_n}, NotSPNE at (6, 0.1): {large_n}, "
                f"SPNE counts by n {counts}, min gaps {min_gap}, {elapsed:.0f}s")


@pytest.fixture(scope="module")
def desk_scan(tmp_path_factory):
    path = tmp_path_factory.mktemp("scan") / "fig3_desk.csv"
    code, elapsed = run_desk_scan(path)
    return path, code, elapsed


def test_closed_form_matches_oracle(capsys):
    ok, detail = check_closed_form_vs_oracle()
    assert report(capsys, 1, "closed-form optimum matches LP oracle", ok, detail)


def test_access_fair_feasibility_boundary(capsys):
    ok, detail = check_access_fair_boundary()
    assert report(capsys, 2, "access-fair feasibility flips at n(sigma_s - sigma_c)", ok, detail)


def test_minmax_matches_exhaustive_search(capsys):
    ok, detail = check_minmax_equivalence()
    assert report(capsys, 3, "closed-form minmax equals exhaustive minmax", ok, detail)


def test_access_fair_pmf_mean_and_monte_carlo(capsys):
    ok, detail = check_access_fair_triangle()
    assert report(capsys, 4, "access-fair PMF, expected age and MC payoff agree", ok, detail)


def test_short_success_deviations_never_pay(capsys):
    ok, detail = check_short_success_deviations()
    assert report(capsys, 5, "short successes: both deviations strictly worse", ok, detail)


def test_long_success_witnesses(capsys):
    ok, detail = check_long_success_witnesses()
    assert report(capsys, 6, "long successes: verified IR witnesses for both strategies", ok, detail)


@pytest.mark.slow
def test_desk_scale_spne_region(desk_scan, capsys):
    path, code, elapsed = desk_scan
    assert code == 0
    ok, detail = check_region(parse_rows(path.read_text(), "csv"), elapsed)
    assert report(capsys, 7, "desk-scale SPNE region", ok, detail)


@pytest.mark.slow
def test_desk_scan_is_byte_identical(desk_scan, tmp_path, capsys):
    path, _, _ = desk_scan
    again = tmp_path / "again.csv"
    code, _ = run_desk_scan(again)
    ok = code == 0 and again.read_bytes() == path.read_bytes()
    assert report(capsys, 8, "repeated desk scan is byte-identical", ok, f"{len(path.read_bytes())} bytes compared")


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    for number, title, check in (
        (1, "closed-form optimum matches LP oracle", check_closed_form_vs_oracle),
        (2, "access-fair feasibility boundary", check_access_fair_boundary),
        (3, "minmax equivalence", check_minmax_equivalence),
        (4, "access-fair PMF / mean / MC", check_access_fair_triangle),
        (5, "short-success deviations", check_short_success_deviations),
        (6, "long-success witnesses", check_long_success_witnesses),
    ):
        report(None, number, title, *check())
    with tempfile.TemporaryDirectory() as tmp:
        first, second = Path(tmp) / "a.csv", Path(tmp) / "b.csv"
        _, elapsed = run_desk_scan(first)
        report(None, 7, "desk-scale SPNE region", *check_region(parse_rows(first.read_text(), "csv"), elapsed))
        run_desk_scan(second)
        report(None, 8, "repeated desk scan is byte-identical", first.read_bytes() == second.read_bytes(), "")
