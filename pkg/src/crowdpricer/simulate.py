"""Monte Carlo simulators, the fixed-price baseline, and validation helpers.

Determinism contract: trial i draws from a Philox counter-based generator
keyed by (seed, i) and nothing else, so results are bit-identical however
trials are scheduled (serial, chunked, or a process pool) and aggregates are
reductions of the per-trial arrays in trial order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .deadline import (
    DeadlinePolicy,
    DeadlineProblem,
    PolicyEvaluation,
    evaluate_policy_exact,
    problem_digest,
)
from .errors import CapacityError, DataError, InfeasibleError
from .market import AcceptanceModel, ArrivalProfile, TabulatedAcceptance

SCHEMA_VERSION = 1

_PARALLEL_MIN_TRIALS = 512  # below this a pool costs more than it saves


@dataclass(frozen=True)
class FixedPrice:
    """Post the same price every interval, whatever the state."""

    price: int

    def __post_init__(self) -> None:
        if self.price < 0:
            raise ValueError("price must be >= 0")


@dataclass(frozen=True)
class SimulationConfig:
    trials: int
    seed: int
    parallel: bool = False

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not (0 <= self.seed < 2**63):
            raise ValueError("seed must be in [0, 2**63)")


@dataclass(frozen=True)
class TrialOutcome:
    total_cost: int
    remaining_tasks: int
    completion_seconds: float | None
    workers: int | None = None  # arrivals observed; set by the budget simulator


@dataclass(frozen=True)
class Aggregates:
    mean_cost: float
    se_cost: float
    mean_remaining: float
    se_remaining: float
    completion_rate: float
    mean_completion_seconds: float | None
    se_completion_seconds: float | None
    mean_workers: float | None
    se_workers: float | None


@dataclass(frozen=True)
class SimulationReport:
    strategy_descriptor: str
    config: SimulationConfig
    per_trial: tuple[TrialOutcome, ...]

    def aggregates(self) -> Aggregates:
        """Reductions of the per-trial columns, in trial order."""

        def mean_se(values: np.ndarray) -> tuple[float, float]:
            m = float(np.mean(values))
            se = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
            return m, se

        cost = np.array([o.total_cost for o in self.per_trial], dtype=np.float64)
        remaining = np.array([o.remaining_tasks for o in self.per_trial], dtype=np.float64)
        done = np.array(
            [o.completion_seconds for o in self.per_trial if o.completion_seconds is not None],
            dtype=np.float64,
        )
        mean_cost, se_cost = mean_se(cost)
        mean_rem, se_rem = mean_se(remaining)
        rate = len(done) / len(self.per_trial)
        mean_done, se_done = mean_se(done) if len(done) else (None, None)
        workers = [o.workers for o in self.per_trial]
        if any(w is None for w in workers):
            mean_w, se_w = None, None
        else:
            mean_w, se_w = mean_se(np.array(workers, dtype=np.float64))
        return Aggregates(
            mean_cost=mean_cost,
            se_cost=se_cost,
            mean_remaining=mean_rem,
            se_remaining=se_rem,
            completion_rate=rate,
            mean_completion_seconds=mean_done,
            se_completion_seconds=se_done,
            mean_workers=mean_w,
            se_workers=se_w,
        )


def _trial_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _run_chunked(worker, payload, config: SimulationConfig) -> tuple[TrialOutcome, ...]:
    """Run trials 0..trials-1 through `worker`, optionally on a process pool.

    Chunking never changes results: each trial's stream depends only on
    (seed, trial index).
    """
    n = config.trials
    if not config.parallel or n < _PARALLEL_MIN_TRIALS:
        return tuple(worker(payload, config.seed, 0, n))
    import os

    pool_size = min(os.cpu_count() or 1, 8)
    chunk = math.ceil(n / (pool_size * 4))
    spans = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    out: list[TrialOutcome] = []
    with ProcessPoolExecutor(max_workers=pool_size) as pool:
        futures = [
            pool.submit(worker, payload, config.seed, lo, hi) for lo, hi in spans
        ]
        for fut in futures:  # submission order == trial order
            out.extend(fut.result())
    return tuple(out)


# ---------------------------------------------------------------------------
# Deadline simulation (interval-level).


def _deadline_trials(payload, seed: int, lo: int, hi: int) -> list[TrialOutcome]:
    rates, interval_seconds, n_tasks, price_of, accept_of = payload
    horizon = len(rates)
    out = []
    for i in range(lo, hi):
        rng = _trial_rng(seed, i)
        n = n_tasks
        cost = 0
        completion = None
        for t in range(horizon):
            c = int(price_of[n, t])
            s = int(rng.poisson(rates[t] * accept_of[c]))
            if s > n:
                s = n
            cost += s * c
            n -= s
            if n == 0:
                completion = float((t + 1) * interval_seconds)
                break
        out.append(TrialOutcome(cost, n, completion))
    return out


def simulate_deadline(
    problem: DeadlineProblem,
    strategy: DeadlinePolicy | FixedPrice,
    config: SimulationConfig,
) -> SimulationReport:
    """Interval-level Monte Carlo: completions per interval are Poisson draws
    at lambda_t * p(price), capped at the remaining count; completion time is
    the end of the interval that finished the batch."""
    rates = tuple(float(r) for r in problem.interval_rates())
    n_max = problem.n_tasks
    if isinstance(strategy, FixedPrice):
        price_of = np.full((n_max + 1, len(rates)), strategy.price, dtype=np.int64)
        descriptor = f"fixed-price:{strategy.price}"
    else:
        if strategy.price.shape != (n_max + 1, problem.n_intervals):
            raise DataError(
                f"policy/problem dimension mismatch: policy is "
                f"{strategy.price.shape}, problem needs "
                f"{(n_max + 1, problem.n_intervals)}"
            )
        price_of = strategy.price
        descriptor = f"policy:{strategy.problem_digest[:12]}"
    accept_of = {
        int(c): problem.model.probability(int(c)) for c in np.unique(price_of)
    }
    payload = (rates, problem.interval_seconds, n_max, price_of, accept_of)
    per_trial = _run_chunked(_deadline_trials, payload, config)
    return SimulationReport(
        strategy_descriptor=descriptor, config=config, per_trial=per_trial
    )


# ---------------------------------------------------------------------------
# Budget simulation (event-level).

_BUCKET_BLOCK = 64  # buckets drawn per poisson call while seeking the last arrival


def _budget_trial_detail(
    prices_desc: np.ndarray,
    probs_desc: np.ndarray,
    profile: ArrivalProfile,
    rng: np.random.Generator,
) -> tuple[int, int, float | None, int]:
    """One trial; returns (cost, remaining, completion_seconds, workers).

    Acceptance checks are per-task geometric draws: a worker facing the
    current highest remaining price accepts with that price's probability,
    so the count of arrivals consumed by each task is Geometric(p), highest
    price first.
    """
    w = rng.geometric(probs_desc)  # arrivals consumed per task, descending price
    need = int(np.sum(w))

    rates = np.asarray(profile.rates)
    span = len(rates)
    total_per_period = float(np.sum(rates))
    if profile.periodic and total_per_period <= 0.0:
        raise DataError("profile exhausted: periodic profile with zero total rate")
    if profile.periodic and need * span / total_per_period > 5e6:
        raise CapacityError(
            f"simulation horizon exceeded: ~{need * span / total_per_period:.3g} "
            f"buckets needed to see {need} arrivals"
        )

    seen = 0
    k = 0  # bucket index
    while True:
        if not profile.periodic and k >= span:
            # profile ran out: count tasks whose arrival quota was met
            prefix = np.cumsum(w)
            done = int(np.searchsorted(prefix, seen, side="right"))
            cost = int(np.sum(prices_desc[:done]))
            return cost, len(w) - done, None, seen
        if profile.periodic:
            block = rates[np.arange(k, k + _BUCKET_BLOCK) % span]
        else:
            block = rates[k : min(k + _BUCKET_BLOCK, span)]
        counts = rng.poisson(block)
        cum = np.cumsum(counts)
        hit = np.nonzero(seen + cum >= need)[0]
        if len(hit) == 0:
            seen += int(cum[-1])
            k += len(block)
            continue
        j = int(hit[0])
        before = seen + (int(cum[j - 1]) if j > 0 else 0)
        cnt = int(counts[j])
        # uniform placement inside the completing bucket; we need the
        # (need-before)-th order statistic
        u = np.sort(rng.random(cnt))
        frac = float(u[need - before - 1])
        completion = (k + j + frac) * profile.bucket_seconds
        cost = int(np.sum(prices_desc))
        return cost, 0, completion, need


def _budget_trials(payload, seed: int, lo: int, hi: int) -> list[TrialOutcome]:
    prices_desc, probs_desc, profile = payload
    out = []
    for i in range(lo, hi):
        cost, remaining, completion, workers = _budget_trial_detail(
            prices_desc, probs_desc, profile, _trial_rng(seed, i)
        )
        out.append(TrialOutcome(cost, remaining, completion, workers))
    return out


def simulate_budget(
    entries: tuple[tuple[int, int], ...],
    profile: ArrivalProfile,
    model: AcceptanceModel,
    config: SimulationConfig,
) -> SimulationReport:
    """Event-level Monte Carlo of a static allocation.

    Workers arrive by an NHPP (bucket-wise Poisson counts, uniform placement
    within buckets); each arrival faces the highest-priced remaining task and
    accepts with its probability.  A non-periodic profile that ends before
    the batch finishes yields a partial trial (remaining > 0, no completion
    time)."""
    prices: list[int] = []
    for c, k in entries:
        if k < 1 or c < 0:
            raise ValueError(f"bad allocation entry ({c}, {k})")
        prices.extend([int(c)] * int(k))
    if not prices:
        raise ValueError("allocation is empty")
    prices_desc = np.array(sorted(prices, reverse=True), dtype=np.int64)
    probs_desc = np.array([model.probability(int(c)) for c in prices_desc])
    if np.any(probs_desc < 1e-12):
        dead = int(prices_desc[np.argmin(probs_desc)])
        raise DataError(f"price effectively dead: p({dead}) < 1e-12")
    payload = (prices_desc, probs_desc, profile)
    per_trial = _run_chunked(_budget_trials, payload, config)
    descriptor = "allocation:" + ",".join(
        f"{c}x{k}" for c, k in sorted(entries)
    )
    return SimulationReport(
        strategy_descriptor=descriptor, config=config, per_trial=per_trial
    )


# ---------------------------------------------------------------------------
# Fixed-price baseline and related scalar helpers.


def constant_price_policy(problem: DeadlineProblem, price: int) -> DeadlinePolicy:
    """The policy posting `price` in every state (opt matrix left zero)."""
    return DeadlinePolicy(
        price=np.full((problem.n_tasks + 1, problem.n_intervals), int(price), dtype=np.int64),
        opt=np.zeros((problem.n_tasks + 1, problem.n_intervals + 1)),
        problem_digest=problem_digest(problem),
    )


def evaluate_fixed_price(problem: DeadlineProblem, price: int) -> PolicyEvaluation:
    """Exact outcome distribution summary of a constant price, by the
    forward evaluator (not sampling)."""
    return evaluate_policy_exact(problem, constant_price_policy(problem, price))


def completion_probability_fixed(problem: DeadlineProblem, price: int) -> float:
    return 1.0 - evaluate_fixed_price(problem, price).pr_any_remaining


def baseline_fixed_price(
    problem: DeadlineProblem, confidence: float
) -> tuple[int, float]:
    """Smallest grid price whose exact completion probability meets
    `confidence`.  Monotone in price, so bisection over the grid."""
    if not (0.0 <= confidence < 1.0):
        raise ValueError("confidence must be in [0, 1)")
    prices = list(problem.grid.prices())
    pr_hi = completion_probability_fixed(problem, prices[-1])
    if pr_hi < confidence:
        raise InfeasibleError(
            f"deadline infeasible at max price: completion probability "
            f"{pr_hi:.6g} < {confidence} at {prices[-1]}"
        )
    pr_lo = completion_probability_fixed(problem, prices[0])
    if pr_lo >= confidence:
        return prices[0], pr_lo
    lo, hi = 0, len(prices) - 1  # pr(lo) < confidence <= pr(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if completion_probability_fixed(problem, prices[mid]) >= confidence:
            hi = mid
        else:
            lo = mid
    return prices[hi], completion_probability_fixed(problem, prices[hi])


def price_floor_c0(problem: DeadlineProblem) -> float | None:
    """Price where expected pickups over the whole horizon equal n_tasks:
    p(c0) = N / integral(lambda).  None marks infeasibility (N exceeds the
    total expected arrivals even at p = 1)."""
    total = float(np.sum(problem.interval_rates()))
    if total <= 0:
        raise ValueError("profile has no arrivals over the horizon")
    target = problem.n_tasks / total
    if target > 1.0:
        return None
    model = problem.model
    if isinstance(model, TabulatedAcceptance):
        for c in problem.grid.prices():
            if model.probability(c) >= target:
                return float(c)
        return None
    if model.probability(0) >= target:
        return 0.0
    hi = float(max(problem.grid.max_price, 1))
    while model.probability(hi) < target:
        hi *= 2.0
        if hi > 1e12:
            return None
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if model.probability(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def cost_reduction(fixed_cost: float, dynamic_cost: float) -> float:
    """Relative saving (fixed - dynamic) / fixed."""
    if fixed_cost <= 0:
        raise ValueError("fixed_cost must be positive")
    return (fixed_cost - dynamic_cost) / fixed_cost


# ---------------------------------------------------------------------------
# Discrete-choice validation experiment.


def simulate_choice_model(
    market_size: int,
    reward_slope: float,
    trials: int,
    prices: list[int],
    seed: int,
) -> list[tuple[int, float]]:
    """Empirical acceptance curve from a utility-maximizing worker choosing
    among market_size tasks.

    Competing mean utilities are drawn once from N(0,1) and dispersions from
    U[0,1]; our task's mean utility is reward_slope * price - 1.  Each trial
    draws every task's utility and our task wins if it is the strict maximum.
    """
    if market_size < 2:
        raise ValueError("market_size must be >= 2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = _trial_rng(seed, 0)
    mu_others = rng.standard_normal(market_size - 1)
    sigma = rng.random(market_size)  # index 0 is our task
    out = []
    chunk = max(1, min(trials, 10**6 // max(market_size, 1)))
    for price in prices:
        mu_ours = reward_slope * price - 1.0
        wins = 0
        left = trials
        while left > 0:
            m = min(chunk, left)
            z = rng.standard_normal((m, market_size))
            ours = mu_ours + sigma[0] * z[:, 0]
            best_other = np.max(mu_others + sigma[1:] * z[:, 1:], axis=1)
            wins += int(np.sum(ours > best_other))
            left -= m
        out.append((int(price), wins / trials))
    return out


# ---------------------------------------------------------------------------
# Report documents.


def config_to_dict(config: SimulationConfig) -> dict:
    return {
        "trials": config.trials,
        "seed": config.seed,
        "parallel": config.parallel,
    }


def _agg_to_dict(agg: Aggregates) -> dict:
    return {
        "mean_cost": agg.mean_cost,
        "se_cost": agg.se_cost,
        "mean_remaining": agg.mean_remaining,
        "se_remaining": agg.se_remaining,
        "completion_rate": agg.completion_rate,
        "mean_completion_seconds": agg.mean_completion_seconds,
        "se_completion_seconds": agg.se_completion_seconds,
        "mean_workers": agg.mean_workers,
        "se_workers": agg.se_workers,
    }


def report_to_dict(report: SimulationReport, include_per_trial: bool = False) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "strategy_descriptor": report.strategy_descriptor,
        "config": config_to_dict(report.config),
        "aggregates": _agg_to_dict(report.aggregates()),
    }
    if include_per_trial:
        rows = []
        for o in report.per_trial:
            row = {
                "total_cost": o.total_cost,
                "remaining_tasks": o.remaining_tasks,
                "completion_time_seconds": o.completion_seconds,
            }
            if o.workers is not None:
                row["workers"] = o.workers
            rows.append(row)
        doc["per_trial"] = rows
    return doc


def write_trials_csv(report: SimulationReport, path: str) -> None:
    """CSV export: trial,cost_cents,remaining,completion_seconds (empty when
    the trial never completed)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("trial,cost_cents,remaining,completion_seconds\n")
        for i, o in enumerate(report.per_trial):
            done = "" if o.completion_seconds is None else repr(o.completion_seconds)
            fh.write(f"{i},{o.total_cost},{o.remaining_tasks},{done}\n")
