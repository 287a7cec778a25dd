"""Fitting market parameters from observed marketplace data.

Two ingestion paths:

* arrival CSVs (`t_seconds,count` at uniform spacing) become ArrivalProfiles,
  optionally folded onto a period and averaged across files;
* task-group observation CSVs (`wage_per_second,workload_per_hour,task_type`)
  feed an OLS fit of log(workload) on wage, whose coefficients convert into a
  logistic acceptance model.

The conversion chain: a task paying c cents over task_seconds of work offers
wage c/(100*task_seconds) dollars per second, so utility u(c) = alpha*wage + b
= c/s + b with s = 100*task_seconds/alpha.  Taking exp(utility) as workload
share against a constant competing mass K = market_total_per_hour *
task_seconds gives p(c) = e^u/(e^u + K).  The (bias, mass) pair is only
identified up to a shift (b - ln k, K/k); `mass_normalization_seconds` picks
the reported parameterization (default 360, the implied per-alternative
workload that reproduces the conventional rounding) without changing p(c).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .market import ArrivalProfile, LogisticAcceptance


@dataclass(frozen=True)
class TaskGroupObservation:
    wage_per_second: float  # dollars per second of work
    workload_per_hour: float  # seconds of completed work per hour
    task_type: str


@dataclass(frozen=True)
class FitResult:
    linear_coefficient: float  # alpha: utility per (dollar/second)
    bias: float  # intercept of the selected task type
    intercepts: dict[str, float]
    r_squared: float
    n_points: int


@dataclass(frozen=True)
class DerivedModel:
    model: LogisticAcceptance
    derivation: dict


# ---------------------------------------------------------------------------
# Arrival CSVs.

ARRIVAL_HEADER = ["t_seconds", "count"]


def load_arrival_csv(path: str, cumulative_snapshot: bool = False) -> ArrivalProfile:
    """Parse an arrival CSV into a non-periodic profile.

    With cumulative_snapshot=True, rows are remaining-task snapshots and each
    bucket's rate is the decrease between consecutive rows, clamped at 0
    (increases mean new postings, not negative completions).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != ARRIVAL_HEADER:
            raise DataError(
                f"{path}: row 1: header must be "
                f"'{','.join(ARRIVAL_HEADER)}', got '{','.join(header)}'"
            )
        times: list[int] = []
        counts: list[float] = []
        for row_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # tolerate a trailing blank line
            if len(row) != 2:
                raise DataError(f"{path}: row {row_no}: expected 2 fields, got {len(row)}")
            try:
                t = int(row[0])
            except ValueError:
                raise DataError(
                    f"{path}: row {row_no}: t_seconds must be an integer, got '{row[0]}'"
                ) from None
            try:
                count = float(row[1])
            except ValueError:
                raise DataError(
                    f"{path}: row {row_no}: count must be a number, got '{row[1]}'"
                ) from None
            if t < 0:
                raise DataError(f"{path}: row {row_no}: t_seconds must be non-negative")
            if times and t <= times[-1]:
                raise DataError(
                    f"{path}: row {row_no}: t_seconds must be strictly increasing"
                )
            if not math.isfinite(count) or count < 0:
                raise DataError(
                    f"{path}: row {row_no}: count must be finite and non-negative"
                )
            times.append(t)
            counts.append(count)
    if len(times) < 2:
        raise DataError(f"{path}: need at least 2 rows to infer the bucket size")
    bucket = times[1] - times[0]
    for i in range(1, len(times)):
        if times[i] - times[i - 1] != bucket:
            raise DataError(
                f"{path}: row {i + 2}: spacing {times[i] - times[i - 1]} "
                f"differs from the bucket size {bucket} set by the first two rows"
            )
    if cumulative_snapshot:
        rates = [max(0.0, counts[i] - counts[i + 1]) for i in range(len(counts) - 1)]
    else:
        rates = counts
    return ArrivalProfile(bucket_seconds=bucket, rates=tuple(rates), periodic=False)


def write_arrival_csv(profile: ArrivalProfile, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(ARRIVAL_HEADER) + "\n")
        for i, rate in enumerate(profile.rates):
            fh.write(f"{i * profile.bucket_seconds},{rate!r}\n")


def fit_periodic_profile(
    profiles: list[ArrivalProfile], period_buckets: int
) -> ArrivalProfile:
    """Bucket-wise mean of the inputs folded onto a period.

    Each profile is folded individually (slot i averages its entries at
    indices congruent to i), then slots are averaged across profiles.
    """
    if not profiles:
        raise ValueError("need at least one profile")
    if period_buckets < 1:
        raise ValueError("period_buckets must be >= 1")
    bucket = profiles[0].bucket_seconds
    folded = []
    for prof in profiles:
        if prof.bucket_seconds != bucket:
            raise DataError(
                f"profiles disagree on bucket size: {prof.bucket_seconds} vs {bucket}"
            )
        if len(prof.rates) < period_buckets:
            raise DataError(
                f"profile with {len(prof.rates)} buckets is shorter than the "
                f"period ({period_buckets})"
            )
        sums = np.zeros(period_buckets)
        hits = np.zeros(period_buckets)
        for i, r in enumerate(prof.rates):
            sums[i % period_buckets] += r
            hits[i % period_buckets] += 1
        folded.append(sums / hits)
    mean = np.mean(folded, axis=0)
    return ArrivalProfile(
        bucket_seconds=bucket, rates=tuple(float(r) for r in mean), periodic=True
    )


# ---------------------------------------------------------------------------
# Observation CSVs and the wage-utility fit.

OBSERVATION_HEADER = ["wage_per_second", "workload_per_hour", "task_type"]


def load_observations_csv(path: str) -> list[TaskGroupObservation]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != OBSERVATION_HEADER:
            raise DataError(
                f"{path}: row 1: header must be "
                f"'{','.join(OBSERVATION_HEADER)}', got '{','.join(header)}'"
            )
        out = []
        for row_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DataError(f"{path}: row {row_no}: expected 3 fields, got {len(row)}")
            try:
                wage = float(row[0])
                workload = float(row[1])
            except ValueError:
                raise DataError(f"{path}: row {row_no}: bad numeric field") from None
            if not (math.isfinite(wage) and wage >= 0):
                raise DataError(
                    f"{path}: row {row_no}: wage_per_second must be finite and >= 0"
                )
            if not (math.isfinite(workload) and workload > 0):
                raise DataError(
                    f"{path}: row {row_no}: workload_per_hour must be positive "
                    f"(its log enters the fit)"
                )
            task_type = row[2].strip()
            if not task_type:
                raise DataError(f"{path}: row {row_no}: task_type must be non-empty")
            out.append(TaskGroupObservation(wage, workload, task_type))
    if not out:
        raise DataError(f"{path}: no observation rows")
    return out


def fit_wage_utility(
    observations: list[TaskGroupObservation], task_type: str | None = None
) -> FitResult:
    """OLS of log(workload_per_hour) on wage_per_second with a shared slope
    and one intercept per task type, via the normal equations.

    `bias` reports the intercept of `task_type` (or of the only type present).
    """
    if len(observations) < 2:
        raise DataError("need at least 2 observations")
    types = sorted({o.task_type for o in observations})
    wages = np.array([o.wage_per_second for o in observations])
    y = np.array([math.log(o.workload_per_hour) for o in observations])
    dummies = np.zeros((len(observations), len(types)))
    for i, o in enumerate(observations):
        dummies[i, types.index(o.task_type)] = 1.0
    design = np.column_stack([wages, dummies])
    gram = design.T @ design
    try:
        beta = np.linalg.solve(gram, design.T @ y)
    except np.linalg.LinAlgError:
        raise DataError(
            "degenerate design: wages carry no variation independent of task type"
        ) from None
    # a solvable but rank-deficient system can slip through solve(); reject it
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise DataError(
            "degenerate design: wages carry no variation independent of task type"
        )
    residuals = y - design @ beta
    sst = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if sst == 0.0 else 1.0 - float(np.sum(residuals**2)) / sst
    intercepts = {t: float(beta[1 + i]) for i, t in enumerate(types)}
    if task_type is None:
        if len(types) > 1:
            raise DataError(
                f"multiple task types present ({', '.join(types)}); "
                f"pass task_type to select the reported bias"
            )
        task_type = types[0]
    if task_type not in intercepts:
        raise DataError(f"task_type '{task_type}' not present in the observations")
    return FitResult(
        linear_coefficient=float(beta[0]),
        bias=intercepts[task_type],
        intercepts=intercepts,
        r_squared=r2,
        n_points=len(observations),
    )


def derive_acceptance_model(
    fit: FitResult,
    task_seconds: float,
    market_total_per_hour: float,
    mass_normalization_seconds: float = 360.0,
) -> DerivedModel:
    """Convert a wage-utility fit into a logistic acceptance model.

    p(c) = e^u/(e^u + K) with u(c) = c/s + bias, s = 100*task_seconds/alpha
    (cents to dollars, task time to wage rate) and K = market_total_per_hour
    * task_seconds (the competing workload mass).  The returned model stores
    the shifted parameterization (bias_b, market_mass_m) = (ln(norm) - bias,
    K/norm); p(c) is invariant to norm, and the chain is recorded step by
    step in `derivation`.
    """
    if task_seconds <= 0:
        raise ValueError("task_seconds must be positive")
    if market_total_per_hour <= 0:
        raise ValueError("market_total_per_hour must be positive")
    if mass_normalization_seconds <= 0:
        raise ValueError("mass_normalization_seconds must be positive")
    alpha = fit.linear_coefficient
    if alpha <= 0:
        raise DataError(
            f"fitted wage coefficient must be positive to derive an "
            f"acceptance curve, got {alpha:.6g}"
        )
    scale_s = 100.0 * task_seconds / alpha
    mass_k = market_total_per_hour * task_seconds
    market_mass_m = mass_k / mass_normalization_seconds
    bias_b = math.log(mass_normalization_seconds) - fit.bias
    model = LogisticAcceptance(
        scale_s=scale_s, bias_b=bias_b, market_mass_m=market_mass_m
    )
    derivation = {
        "alpha_per_dollar_second": alpha,
        "bias_raw": fit.bias,
        "task_seconds": task_seconds,
        "market_total_per_hour": market_total_per_hour,
        "scale_s_cents": scale_s,
        "competing_workload_per_hour": mass_k,
        "mass_normalization_seconds": mass_normalization_seconds,
        "market_mass_m": market_mass_m,
        "bias_b": bias_b,
        "note": (
            "p(c) = exp(c/scale_s - bias_b) / (exp(c/scale_s - bias_b) + "
            "market_mass_m); invariant to mass_normalization_seconds, which "
            "only picks the reported (bias, mass) pair"
        ),
    }
    return DerivedModel(model=model, derivation=derivation)
