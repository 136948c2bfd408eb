"""Command-line front end: optimal, simulate, payoff and spne-scan.

All durations (ages and slot lengths) are in one arbitrary time unit.
Sources are numbered from 1 on the command line and in output files.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import secrets
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .correlated import expected_payoffs, one_stage_optimal
from .lp_oracle import LpInstance, solve_exact
from .repeated_game import (
    Deviation,
    DeviationKind,
    GameConfig,
    Strategy,
    access_fair_deviation_payoff,
    compare_deviations,
    discounted_payoff_access_fair,
    simulate_path,
    spne_verdict_analytic,
    spne_verdict_mc,
)
from .stage_game import SlotLengths, check_ages

FIG3_BETA = 0.01


def fig3_slot_lengths(beta: float = FIG3_BETA) -> SlotLengths:
    return SlotLengths(beta, 1.0 + beta, 0.1 * (1.0 + beta))


PRESETS = {"fig3": fig3_slot_lengths}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# serialisation

def _fmt_csv(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _fmt_json(value: Any) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, int):
        return str(value)
    return json.dumps(value)


def format_rows(rows: Sequence[dict], fmt: str) -> str:
    """Render rows as CSV (header + one line per row) or a JSON array of objects."""
    if fmt == "json":
        body = ",\n".join(
            "  {" + ", ".join(f"{json.dumps(k)}: {_fmt_json(v)}" for k, v in row.items()) + "}" for row in rows
        )
        return "[\n" + body + "\n]\n" if rows else "[]\n"
    if fmt != "csv":
        raise ConfigError(f"unknown output format {fmt!r}")
    if not rows:
        return ""
    header = list(rows[0])
    lines = [",".join(header)]
    lines += [",".join(_fmt_csv(row[k]) for k in header) for row in rows]
    return "\n".join(lines) + "\n"


def _parse_scalar(text: str) -> Any:
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_rows(text: str, fmt: str) -> list[dict]:
    if fmt == "json":
        return json.loads(text)
    lines = text.splitlines()
    if not lines:
        return []
    header = lines[0].split(",")
    return [dict(zip(header, map(_parse_scalar, line.split(",")))) for line in lines[1:]]


def write_output(text: str, output: str | None) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(output)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write output file {output}: {exc}") from exc


# ---------------------------------------------------------------------------
# option parsing helpers

def parse_floats(text: str | Sequence[float]) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def parse_n_range(text: str | int | Sequence[int]) -> list[int]:
    """``2:6`` (inclusive), ``2,3,5`` or a single integer."""
    if isinstance(text, int):
        return [text]
    if isinstance(text, (list, tuple)):
        values = [int(x) for x in text]
    else:
        text = str(text)
        try:
            if ":" in text:
                lo, hi = text.split(":")
                values = list(range(int(lo), int(hi) + 1))
            else:
                values = [int(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad source-count range {text!r}") from exc
    if not values or min(values) < 2:
        raise ConfigError("source counts must be >= 2")
    return values


def _check_alpha(alpha: float) -> float:
    if not alpha < 1.0:
        raise ConfigError(f"alpha must be < 1, got {alpha}")
    if alpha < 0.0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    return alpha


def _positive_int(name: str, value: Any) -> int:
    if value is None or int(value) < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value}")
    return int(value)


def load_config_file(path: str) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise ConfigError(f"config file {path} must be a flat key-value mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve_options(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults, preset, config file and flags (later wins)."""
    opts = dict(defaults)
    if getattr(args, "config", None):
        opts.update(load_config_file(args.config))
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "func", "config"):
            opts[key] = value

    if opts.get("sigma") is None:
        preset = opts.get("preset")
        if preset is None:
            raise ConfigError("slot lengths required: pass --sigma I,S,C or --preset fig3")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        opts["sl"] = PRESETS[preset]()
    else:
        values = parse_floats(opts["sigma"])
        if len(values) != 3:
            raise ConfigError("--sigma takes three values: idle,success,collision")
        opts["sl"] = SlotLengths(*values)
    return opts


def _seed(opts: dict) -> int:
    seed = opts.get("seed")
    if seed is None:
        seed = secrets.randbits(63)
        print(f"seed: {seed}", file=sys.stderr)
    seed = int(seed)
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    return seed


def _ages(opts: dict, sl: SlotLengths) -> np.ndarray:
    if opts.get("ages") is None:
        raise ConfigError("--ages is required")
    try:
        return check_ages(parse_floats(opts["ages"]), sl)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# commands

def cmd_optimal(opts: dict) -> str:
    sl = opts["sl"]
    ages = _ages(opts, sl)
    sol = one_stage_optimal(ages, sl)
    p = sol.vector
    row = {f"p_{k + 1}": v for k, v in enumerate(p.p_success)}
    row.update(p_idle=p.p_idle, p_collision=p.p_collision, case=sol.case.value, objective=sol.objective)
    if opts.get("verify"):
        _, oracle = solve_exact(LpInstance(tuple(ages), sl))
        row.update(oracle_objective=oracle, oracle_gap=abs(oracle - sol.objective))

    fmt = opts.get("format") or "text"
    if fmt != "text":
        return format_rows([row], fmt)
    lines = [f"vector: {p}", f"case: {sol.case.value}", f"objective: {sol.objective:.17g}"]
    if opts.get("verify"):
        gap = row["oracle_gap"]
        status = "ok" if gap < 1e-6 else "MISMATCH"
        lines.append(f"oracle objective: {row['oracle_objective']:.17g}")
        lines.append(f"oracle objective gap < 1e-6: {status} ({gap:.3g})")
    return "\n".join(lines) + "\n"


def _strategy(opts: dict) -> Strategy:
    try:
        return Strategy(opts.get("strategy") or "optimal")
    except ValueError as exc:
        raise ConfigError(f"unknown strategy {opts.get('strategy')!r}") from exc


def cmd_simulate(opts: dict) -> str:
    sl = opts["sl"]
    ages = _ages(opts, sl)
    slots = _positive_int("slots", opts.get("slots"))
    strategy = _strategy(opts)
    deviation = None
    if opts.get("deviate_source") is not None:
        kind = DeviationKind(opts.get("deviate_kind") or "transmit-when-idle")
        deviation = Deviation(int(opts["deviate_source"]) - 1, kind)
    cfg = GameConfig(ages.size, sl, 0.0)
    rng = np.random.Generator(np.random.PCG64(_seed(opts)))
    try:
        trace = simulate_path(strategy, ages, cfg, slots, deviation, rng)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = []
    for t, event in enumerate(trace.events, start=1):
        row = {"t": t, "event": event.label()}
        row.update({f"age_{k + 1}": float(a) for k, a in enumerate(trace.ages[t])})
        rows.append(row)
    return format_rows(rows, opts.get("format") or "csv")


def cmd_payoff(opts: dict) -> str:
    sl = opts["sl"]
    ages = _ages(opts, sl)
    alpha = _check_alpha(float(opts.get("alpha", 0.0)))
    strategy = _strategy(opts)
    source = int(opts.get("source") or 1) - 1
    if not 0 <= source < ages.size:
        raise ConfigError(f"source must be between 1 and {ages.size}")
    paths = _positive_int("paths", opts.get("paths"))
    slots = _positive_int("slots", opts.get("slots"))
    seed = _seed(opts)
    cfg = GameConfig(ages.size, sl, alpha)

    cmp = compare_deviations(strategy, source, ages, cfg, paths, slots, seed)
    analytic: dict[str, float | None] = {"cooperate": None}
    analytic.update({k.value: None for k in DeviationKind})
    if strategy is Strategy.ACCESS_FAIR:
        analytic["cooperate"] = discounted_payoff_access_fair(float(ages[source]), cfg)
        for kind in DeviationKind:
            analytic[kind.value] = access_fair_deviation_payoff(float(ages[source]), cfg, kind)
    elif alpha == 0.0:
        vec = strategy.vector(ages, sl)
        analytic["cooperate"] = float(expected_payoffs(vec, ages, sl)[source])

    rows = [{
        "policy": "cooperate", "mc_mean": cmp.cooperate.mean, "mc_std_error": cmp.cooperate.std_error,
        "gap": 0.0, "gap_std_error": 0.0, "analytic": analytic["cooperate"],
    }]
    for kind, est in cmp.deviations.items():
        rows.append({
            "policy": kind.value, "mc_mean": est.mean, "mc_std_error": est.std_error,
            "gap": cmp.cooperate.mean - est.mean, "gap_std_error": cmp.gap_std_errors[kind],
            "analytic": analytic[kind.value],
        })
    return format_rows(rows, opts.get("format") or "csv")


@dataclass(frozen=True)
class ScanCell:
    n: int
    alpha: float
    sl: SlotLengths
    states: int
    paths: int
    slots: int
    seed: int
    age_range: tuple[float, float] | None
    strategy: Strategy = Strategy.ONE_STAGE_OPTIMAL


def cell_seed(seed: int, n: int) -> int:
    """Per-n seed shared by every alpha, so cells in a row use common random numbers."""
    return int(np.random.SeedSequence(seed, spawn_key=(n,)).generate_state(1, np.uint64)[0] >> 1)


def run_cell(cell: ScanCell) -> dict:
    start = time.perf_counter()
    cfg = GameConfig(cell.n, cell.sl, cell.alpha)
    lo, hi = cell.age_range or (float(cell.n), 3.0 * cell.n)
    sl = cell.sl
    row = {"n": cell.n, "alpha": float(cell.alpha)}
    # with short success slots and every age >= n sigma_s, the optimum is age-fair along every path
    reduces_to_age_fair = cell.strategy in (Strategy.ONE_STAGE_OPTIMAL, Strategy.AGE_FAIR) and lo >= cell.n * sl.sigma_s
    if sl.short_success and (reduces_to_age_fair or cell.strategy is Strategy.ACCESS_FAIR):
        verdict = spne_verdict_analytic(
            Strategy.ACCESS_FAIR if cell.strategy is Strategy.ACCESS_FAIR else Strategy.AGE_FAIR, cfg
        )
        row.update(verdict="SPNE" if verdict.spne else "NotSPNE", method="analytic",
                   min_gap=None, max_std_error=None)
    else:
        mc = spne_verdict_mc(cfg, cell.states, (lo, hi), cell.paths, cell.slots,
                             cell_seed(cell.seed, cell.n), strategy=cell.strategy)
        row.update(verdict="SPNE" if mc.spne else "NotSPNE", method="mc",
                   min_gap=mc.min_gap, max_std_error=mc.max_std_error)
    row.update(states=cell.states, paths=cell.paths, slots=cell.slots, seed=cell.seed,
               wall_time=time.perf_counter() - start)
    return row


def run_scan(
    ns: Iterable[int],
    alphas: Iterable[float],
    sl: SlotLengths,
    states: int,
    paths: int,
    slots: int,
    seed: int,
    age_range: tuple[float, float] | None = None,
    strategy: Strategy = Strategy.ONE_STAGE_OPTIMAL,
    workers: int = 1,
    progress: io.TextIOBase | None = None,
) -> list[dict]:
    """Verdict per (n, alpha) cell, rows in grid order whatever the completion order."""
    cells = [ScanCell(n, a, sl, states, paths, slots, seed, age_range, strategy) for n in ns for a in alphas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells))
        if progress:
            for row in rows:
                _report(row, progress)
        return rows
    rows = []
    for cell in cells:
        rows.append(run_cell(cell))
        if progress:
            _report(rows[-1], progress)
    return rows


def _report(row: dict, stream) -> None:
    gap = "" if row["min_gap"] is None else f" min_gap={row['min_gap']:.4g}"
    print(f"n={row['n']} alpha={row['alpha']:g}: {row['verdict']} ({row['method']}){gap} "
          f"[{row['wall_time']:.1f}s]", file=stream, flush=True)


def cmd_spne_scan(opts: dict) -> str:
    ns = parse_n_range(opts.get("n") or "2:6")
    alphas = [_check_alpha(a) for a in parse_floats(opts.get("alpha") or "0.1,0.3,0.5,0.7,0.9,0.99")]
    if not alphas:
        raise ConfigError("empty alpha grid")
    states = _positive_int("states", opts.get("states"))
    paths = _positive_int("paths", opts.get("paths"))
    slots = _positive_int("slots", opts.get("slots"))
    workers = _positive_int("workers", opts.get("workers") or 1)
    age_range = None
    if opts.get("age_range") is not None:
        lo_hi = parse_floats(opts["age_range"])
        if len(lo_hi) != 2 or lo_hi[0] > lo_hi[1]:
            raise ConfigError("--age-range takes lo,hi with lo <= hi")
        if lo_hi[0] < opts["sl"].sigma_s:
            raise ConfigError("age range lower end below sigma_s")
        age_range = (lo_hi[0], lo_hi[1])
    seed = _seed(opts)
    fmt = opts.get("format") or "csv"
    output = opts.get("output")
    if output not in (None, "-"):
        parent = Path(output).resolve().parent
        if not parent.is_dir():
            raise ConfigError(f"cannot write output file {output}: no directory {parent}")

    started = time.perf_counter()
    rows = run_scan(ns, alphas, opts["sl"], states, paths, slots, seed, age_range,
                    _strategy(opts), workers, progress=sys.stderr)
    print(f"scan finished in {time.perf_counter() - started:.1f}s", file=sys.stderr)
    if not opts.get("timing"):
        for row in rows:
            del row["wall_time"]
    return format_rows(rows, fmt)


# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat YAML key-value file; keys mirror flag names")
    p.add_argument("--sigma", help="slot lengths idle,success,collision (time units)")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="fig3: idle=beta, success=1+beta, collision=0.1(1+beta), beta=0.01")
    p.add_argument("--format", choices=["csv", "json"], help="output format (default csv)")
    p.add_argument("--output", "-o", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoigame",
        description="Age-of-information spectrum sharing game. All ages and slot lengths share one time unit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimal", help="closed-form one-stage optimal probability vector")
    _common(p)
    p.set_defaults(func=cmd_optimal)
    p.add_argument("--ages", help="comma-separated ages at the slot start (each >= sigma_s)")
    p.add_argument("--verify", action="store_true", default=None, help="cross-check against the exact LP oracle")
    p._option_string_actions["--format"].choices = ["text", "csv", "json"]

    p = sub.add_parser("simulate", help="age trace of one sample path")
    _common(p)
    p.set_defaults(func=cmd_simulate)
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--ages", help="initial ages")
    p.add_argument("--slots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--deviate-source", type=int, help="1-based source deviating in slot 0")
    p.add_argument("--deviate-kind", choices=[k.value for k in DeviationKind])

    p = sub.add_parser("payoff", help="cooperative vs one-shot deviation discounted payoffs")
    _common(p)
    p.set_defaults(func=cmd_payoff)
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--ages", help="initial ages")
    p.add_argument("--alpha", type=float, help="discount factor in [0, 1)")
    p.add_argument("--source", type=int, help="1-based deviating source (default 1)")
    p.add_argument("--paths", type=int)
    p.add_argument("--slots", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("spne-scan", help="Monte Carlo SPNE region over (n, alpha)")
    _common(p)
    p.set_defaults(func=cmd_spne_scan)
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--n", help="source counts, e.g. 2:6 or 2,3,5")
    p.add_argument("--alpha", help="comma-separated discount factors, each in [0, 1)")
    p.add_argument("--states", type=int, help="initial age vectors per cell")
    p.add_argument("--paths", type=int, help="sample paths per state and policy")
    p.add_argument("--slots", type=int, help="slots per sample path")
    p.add_argument("--age-range", help="lo,hi for initial ages (default n,3n)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="parallel processes across grid cells")
    p.add_argument("--timing", action="store_true", default=None, help="add a wall_time column")
    return parser


DEFAULTS = {
    "optimal": {},
    "simulate": {"strategy": "age-fair", "slots": 20},
    "payoff": {"strategy": "optimal", "alpha": 0.9, "source": 1, "paths": 10000, "slots": 2000},
    "spne-scan": {"states": 20, "paths": 2000, "slots": 2000},
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args, DEFAULTS[args.command])
        text = args.func(opts)
        write_output(text, opts.get("output"))
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
