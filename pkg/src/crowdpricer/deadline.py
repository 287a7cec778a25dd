"""Deadline-constrained pricing as a finite-horizon MDP.

State (n, t): n tasks remain at the start of interval t.  Posting price c for
interval t completes s ~ Pois(lambda_t * p(c)) tasks (capped at n); each
completion pays c; tasks remaining at the deadline pay a penalty.  Backward
induction over t yields the cost-to-go matrix opt and the price matrix.

Two solvers share one per-state cost evaluator:

* ``solve_simple`` scans every price for every state (ground truth);
* ``solve_efficient`` assumes prices are non-decreasing in n within a time
  slice and recursively bisects the state range, shrinking the price range
  like a divide-and-conquer argmin.

Transition tails are truncated at the smallest s0 with
Pr(Pois >= s0) < epsilon; the dropped mass is never renormalized, which
under-estimates cost by at most epsilon * n * (horizon) * max_price
(the truncation bound tested in the acceptance suite).
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, InfeasibleError
from .market import (
    AcceptanceModel,
    ArrivalProfile,
    PriceGrid,
    grid_from_dict,
    grid_to_dict,
    model_from_dict,
    model_to_dict,
    poisson_pmf_vector,
    poisson_tail_vector,
    profile_from_dict,
    profile_to_dict,
    truncation_threshold,
)

SCHEMA_VERSION = 1

# relative slack when deciding that two expected costs tie; ties break to the
# lowest price
_TIE_REL = 1e-12


@dataclass(frozen=True)
class DeadlineProblem:
    """A batch of n_tasks to finish within n_intervals intervals.

    penalty is the terminal cost per unfinished task (cents).  When
    existence_alpha > 0 the terminal cost becomes (n + alpha) * penalty for
    n > 0, charging an extra fixed cost for finishing incomplete at all.
    epsilon is the transition truncation level; 0 disables truncation.
    penalty=None resolves to the default 10 * grid.max_price.
    """

    n_tasks: int
    n_intervals: int
    interval_seconds: int
    profile: ArrivalProfile
    model: AcceptanceModel
    grid: PriceGrid
    penalty: float | None = None
    start_offset_seconds: int = 0
    existence_alpha: float = 0.0
    epsilon: float = 1e-9

    def __post_init__(self) -> None:
        if self.n_tasks < 1:
            raise ValueError("n_tasks must be >= 1")
        if self.n_intervals < 1:
            raise ValueError("n_intervals must be >= 1")
        if self.interval_seconds <= 0:
            raise ValueError("interval_seconds must be positive")
        if self.start_offset_seconds < 0:
            raise ValueError("start_offset_seconds must be >= 0")
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError("epsilon must be in [0, 1); 0 disables truncation")
        if self.existence_alpha < 0:
            raise ValueError("existence_alpha must be >= 0")
        if self.penalty is None:
            object.__setattr__(self, "penalty", 10.0 * self.grid.max_price)
        if self.penalty < 0:
            raise ValueError("penalty must be >= 0")
        if 0 < self.penalty < self.grid.max_price:
            warnings.warn(
                f"penalty {self.penalty} below grid.max_price "
                f"{self.grid.max_price}: top prices can never pay off",
                stacklevel=2,
            )

    def interval_rates(self) -> np.ndarray:
        """Expected arrivals per interval, integrated from the profile."""
        d = self.interval_seconds
        off = self.start_offset_seconds
        return np.array(
            [
                self.profile.expected_arrivals(off + t * d, off + (t + 1) * d)
                for t in range(self.n_intervals)
            ]
        )

    def terminal_cost(self, n: int) -> float:
        if n == 0:
            return 0.0
        if self.existence_alpha > 0:
            return (n + self.existence_alpha) * self.penalty
        return n * self.penalty


@dataclass(frozen=True)
class DeadlinePolicy:
    """Solver output: price[n][t] to post, opt[n][t] cost-to-go."""

    price: np.ndarray  # (N+1, N_T) int64
    opt: np.ndarray  # (N+1, N_T+1) float64
    problem_digest: str

    def __post_init__(self) -> None:
        price = np.asarray(self.price, dtype=np.int64)
        opt = np.asarray(self.opt, dtype=np.float64)
        if price.ndim != 2 or opt.ndim != 2 or opt.shape != (
            price.shape[0],
            price.shape[1] + 1,
        ):
            raise ValueError("price must be (N+1, N_T) and opt (N+1, N_T+1)")
        price.setflags(write=False)
        opt.setflags(write=False)
        object.__setattr__(self, "price", price)
        object.__setattr__(self, "opt", opt)

    def price_at(self, n: int, t: int) -> int:
        return int(self.price[n, t])


def transition_distribution(
    n: int, lambda_t: float, p: float, epsilon: float
) -> list[tuple[int, float]]:
    """Transition law out of a state with n remaining tasks.

    Returns (s, probability) pairs: s = 0..min(n-1, s0-1) carry the Poisson
    pmf at mean lambda_t*p, and s = n carries the entire upper tail
    Pr(Pois >= n) (every arrival beyond the n-th is surplus).  Mass between
    s0 and n-1 is dropped, not renormalized.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must be a probability")
    mu = lambda_t * p
    if mu == 0.0:
        return [(0, 1.0)]
    if epsilon == 0.0:
        head = n
    else:
        head = min(n, truncation_threshold(mu, epsilon))
    pmf = poisson_pmf_vector(head, mu)
    out = [(s, float(pmf[s])) for s in range(head)]
    tail = float(poisson_tail_vector(n + 1, mu)[n])
    if tail > 0.0:
        out.append((n, tail))
    return out


class _SliceCache:
    """Per-(time-slice, price) transition arrays, built lazily.

    For price index j: pmf head (s = 0..cap-1), prefix sums of s*pmf[s], and
    upper tails Pr(Pois >= n) for n = 0..N.  cap = min(N, s0).
    """

    def __init__(self, problem: DeadlineProblem, lam: float):
        self.problem = problem
        self.lam = lam
        self.prices = list(problem.grid.prices())
        self._acc = [None] * len(self.prices)
        self._arrays: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def acceptance(self, j: int) -> float:
        if self._acc[j] is None:
            self._acc[j] = self.problem.model.probability(self.prices[j])
        return self._acc[j]

    def arrays(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        got = self._arrays.get(j)
        if got is None:
            n_max = self.problem.n_tasks
            mu = self.lam * self.acceptance(j)
            if self.problem.epsilon == 0.0:
                cap = n_max
            else:
                cap = min(n_max, truncation_threshold(mu, self.problem.epsilon))
            pmf = poisson_pmf_vector(cap, mu)
            sp = np.cumsum(np.arange(cap) * pmf)
            tails = poisson_tail_vector(n_max + 1, mu)
            got = (pmf, sp, tails)
            self._arrays[j] = got
        return got

    def state_costs(
        self, n: int, opt_next: np.ndarray, j_lo: int, j_hi: int
    ) -> np.ndarray:
        """Expected cost of posting each price j in [j_lo, j_hi] at state n."""
        out = np.empty(j_hi - j_lo + 1)
        for idx, j in enumerate(range(j_lo, j_hi + 1)):
            pmf, sp, tails = self.arrays(j)
            c = self.prices[j]
            head = min(n, len(pmf))
            rev = opt_next[n - head + 1 : n + 1][::-1]
            out[idx] = float(np.dot(pmf[:head], rev)) + c * (
                sp[head - 1] + n * tails[n]
            )
        return out


def _pick_lowest_tie(costs: np.ndarray, j_lo: int) -> tuple[int, float]:
    """Index of the lowest price whose cost ties the minimum (1e-12 relative)."""
    v = float(np.min(costs))
    thresh = v + _TIE_REL * max(1.0, abs(v))
    idx = int(np.argmax(costs <= thresh))
    return j_lo + idx, float(costs[idx])


def _init_solution(problem: DeadlineProblem) -> tuple[np.ndarray, np.ndarray]:
    n_max, horizon = problem.n_tasks, problem.n_intervals
    price = np.full((n_max + 1, horizon), problem.grid.min_price, dtype=np.int64)
    opt = np.zeros((n_max + 1, horizon + 1))
    opt[:, horizon] = [problem.terminal_cost(n) for n in range(n_max + 1)]
    return price, opt


def solve_simple(problem: DeadlineProblem) -> DeadlinePolicy:
    """Backward induction scanning every price for every state."""
    price, opt = _init_solution(problem)
    rates = problem.interval_rates()
    j_hi = len(problem.grid) - 1
    for t in range(problem.n_intervals - 1, -1, -1):
        cache = _SliceCache(problem, float(rates[t]))
        opt_next = opt[:, t + 1]
        for n in range(1, problem.n_tasks + 1):
            costs = cache.state_costs(n, opt_next, 0, j_hi)
            j, v = _pick_lowest_tie(costs, 0)
            price[n, t] = cache.prices[j]
            opt[n, t] = v
    return DeadlinePolicy(price=price, opt=opt, problem_digest=problem_digest(problem))


def solve_efficient(problem: DeadlineProblem) -> DeadlinePolicy:
    """Backward induction with divide-and-conquer price search.

    Relies on prices being non-decreasing in n within a slice: solving the
    middle state m first confines states below m to prices <= price(m) and
    states above to prices >= price(m).
    """
    price, opt = _init_solution(problem)
    rates = problem.interval_rates()
    j_max = len(problem.grid) - 1
    for t in range(problem.n_intervals - 1, -1, -1):
        cache = _SliceCache(problem, float(rates[t]))
        opt_next = opt[:, t + 1]

        # explicit stack of (n_lo, n_hi, j_lo, j_hi) segments
        stack = [(1, problem.n_tasks, 0, j_max)]
        while stack:
            n_lo, n_hi, j_lo, j_hi = stack.pop()
            if n_lo > n_hi:
                continue
            m = (n_lo + n_hi) // 2
            costs = cache.state_costs(m, opt_next, j_lo, j_hi)
            j, v = _pick_lowest_tie(costs, j_lo)
            price[m, t] = cache.prices[j]
            opt[m, t] = v
            stack.append((n_lo, m - 1, j_lo, j))
            stack.append((m + 1, n_hi, j, j_hi))
    return DeadlinePolicy(price=price, opt=opt, problem_digest=problem_digest(problem))


@dataclass(frozen=True)
class PolicyEvaluation:
    expected_cost: float  # reward spend only, penalties excluded
    expected_remaining: float
    pr_any_remaining: float


def evaluate_policy_exact(
    problem: DeadlineProblem, policy: DeadlinePolicy
) -> PolicyEvaluation:
    """Exact policy evaluation by forward-propagating the state distribution.

    Transitions use the full Poisson support (no truncation) regardless of
    problem.epsilon, so this is the reference cost of actually running the
    policy.
    """
    n_max, horizon = problem.n_tasks, problem.n_intervals
    if policy.price.shape != (n_max + 1, horizon):
        raise DataError(
            f"policy/problem dimension mismatch: policy is "
            f"{policy.price.shape}, problem needs {(n_max + 1, horizon)}"
        )
    rates = problem.interval_rates()
    dist = np.zeros(n_max + 1)
    dist[n_max] = 1.0
    cost = 0.0
    for t in range(horizon):
        lam = float(rates[t])
        cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        new = np.zeros(n_max + 1)
        new[0] = dist[0]
        for n in range(1, n_max + 1):
            mass = dist[n]
            if mass == 0.0:
                continue
            c = int(policy.price[n, t])
            got = cache.get(c)
            if got is None:
                mu = lam * problem.model.probability(c)
                pmf = poisson_pmf_vector(n_max, mu)
                sp = np.cumsum(np.arange(n_max) * pmf)
                tails = poisson_tail_vector(n_max + 1, mu)
                got = (pmf, sp, tails)
                cache[c] = got
            pmf, sp, tails = got
            new[1 : n + 1] += mass * pmf[:n][::-1]
            new[0] += mass * tails[n]
            cost += mass * c * (sp[n - 1] + n * tails[n])
        dist = new
    remaining = float(np.dot(np.arange(n_max + 1), dist))
    pr_any = float(np.sum(dist[1:]))
    return PolicyEvaluation(
        expected_cost=cost, expected_remaining=remaining, pr_any_remaining=pr_any
    )


def calibrate_penalty(
    problem: DeadlineProblem,
    bound: float,
    tolerance: float = 0.05,
    solver=solve_efficient,
) -> tuple[float, float]:
    """Find a penalty whose induced optimal policy leaves at most `bound`
    expected tasks unfinished (plus alpha * Pr(any) when existence_alpha > 0).

    Returns (penalty, achieved).  Doubling search for an upper endpoint, then
    bisection; stops when the achieved value lands within `tolerance`
    (relative) below the bound or the penalty interval collapses.
    """
    if bound < 0:
        raise ValueError("bound must be >= 0")
    if not (0.0 < tolerance < 1.0):
        raise ValueError("tolerance must be in (0, 1)")

    def achieved_at(pen: float) -> float:
        with warnings.catch_warnings():
            # probing penalties below max_price is intentional here
            warnings.simplefilter("ignore")
            probe = replace(problem, penalty=pen)
        ev = evaluate_policy_exact(probe, solver(probe))
        if problem.existence_alpha > 0:
            return ev.expected_remaining + problem.existence_alpha * ev.pr_any_remaining
        return ev.expected_remaining

    got = achieved_at(0.0)
    if got <= bound:
        return 0.0, got

    hi = float(max(problem.grid.max_price, 1))
    lo = 0.0
    achieved_hi = achieved_at(hi)
    while achieved_hi > bound:
        lo = hi
        hi *= 2.0
        if hi > 1e9:
            raise InfeasibleError(
                f"bound infeasible: expected remaining still {achieved_hi:.6g} "
                f"> {bound} at penalty 1e9"
            )
        achieved_hi = achieved_at(hi)

    for _ in range(64):
        if achieved_hi > bound * (1.0 - tolerance):
            break  # close enough under the bound
        if hi - lo <= 1e-9 * max(1.0, hi):
            break  # interval collapsed onto a jump of the achieved value
        mid = 0.5 * (lo + hi)
        got = achieved_at(mid)
        if got <= bound:
            hi, achieved_hi = mid, got
        else:
            lo = mid
    return hi, achieved_hi


# ---------------------------------------------------------------------------
# File format (policy documents).


def problem_to_dict(problem: DeadlineProblem) -> dict:
    return {
        "n_tasks": problem.n_tasks,
        "n_intervals": problem.n_intervals,
        "interval_seconds": problem.interval_seconds,
        "start_offset_seconds": problem.start_offset_seconds,
        "penalty": problem.penalty,
        "existence_alpha": problem.existence_alpha,
        "epsilon": problem.epsilon,
        "profile": profile_to_dict(problem.profile),
        "model": model_to_dict(problem.model),
        "grid": grid_to_dict(problem.grid),
    }


def problem_from_dict(d: dict) -> DeadlineProblem:
    try:
        return DeadlineProblem(
            n_tasks=int(d["n_tasks"]),
            n_intervals=int(d["n_intervals"]),
            interval_seconds=int(d["interval_seconds"]),
            start_offset_seconds=int(d.get("start_offset_seconds", 0)),
            penalty=float(d["penalty"]),
            existence_alpha=float(d.get("existence_alpha", 0.0)),
            epsilon=float(d.get("epsilon", 1e-9)),
            profile=profile_from_dict(d["profile"]),
            model=model_from_dict(d["model"]),
            grid=grid_from_dict(d["grid"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad deadline problem document: {exc}") from exc


def problem_digest(problem: DeadlineProblem) -> str:
    blob = json.dumps(problem_to_dict(problem), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def policy_to_dict(problem: DeadlineProblem, policy: DeadlinePolicy) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "problem": problem_to_dict(problem),
        "price": policy.price.tolist(),
        "opt": policy.opt.tolist(),
    }


def policy_from_dict(d: dict) -> tuple[DeadlineProblem, DeadlinePolicy]:
    try:
        if int(d["schema_version"]) != SCHEMA_VERSION:
            raise DataError(f"unsupported schema_version {d['schema_version']}")
        problem = problem_from_dict(d["problem"])
        policy = DeadlinePolicy(
            price=np.array(d["price"], dtype=np.int64),
            opt=np.array(d["opt"], dtype=np.float64),
            problem_digest=problem_digest(problem),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad policy document: {exc}") from exc
    if policy.price.shape != (problem.n_tasks + 1, problem.n_intervals):
        raise DataError("policy document: price matrix shape does not match problem")
    return problem, policy
