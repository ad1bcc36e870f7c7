"""Rolling-window replay of pruning policies over a keyword-day log.

The environment is a contextual bandit: on each decision day t the policy
sees a window of per-keyword statistics ending at t, picks a retained set,
and is scored against the logged profits of day t+1. The keyword set
carries forward day to day (pruning compounds), and the daily budget is
re-split evenly across whatever survives.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_FLOOR, ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from os import PathLike
from typing import IO

from .data import CENT, Campaign, ExperimentLog, log_digest, window_stats
from .errors import InvalidConfig, KwpruneError
from .gateway import build_reflection_prompt
from .memory import MemoryEntry, MemoryStore, Overview, render_overview
from .policies import (
    POLICY_NAMES,
    DecisionContext,
    PruningDecision,
    ctr_rank,
    cvr_rank,
    hindsight_oracle,
    identity_decide,
    impression_rank,
    impression_regression,
    kp_agent_decide,
)
from .toolset import StatsTable

RESPONSE_MODELS = ("identity", "linear", "concave")

TRACE_HEADER = (
    "policy",
    "campaign_id",
    "day",
    "retained_count",
    "clamped",
    "repair_attempts",
    "reward",
    "cumulative",
)

SUMMARY_HEADER = ("policy", "day", "daily_profit", "cumulative_profit")


class SimulationAborted(KwpruneError):
    """A policy or gateway failure stopped the run mid-way.

    Carries the rows completed so far on `partial` so the failure point
    can be located; the original error is chained as __cause__.
    """

    def __init__(self, message: str, partial: "SimulationTrace"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class BudgetModel:
    """How logged profit responds to a larger per-keyword budget share.

    identity replays the log untouched; linear scales profit by the share
    multiplier s; concave applies diminishing returns, scaling by s**alpha.
    """

    response: str = "linear"
    alpha: float = 1.0

    def __post_init__(self):
        if self.response not in RESPONSE_MODELS:
            raise InvalidConfig(
                f"unknown response model {self.response!r}; expected one of {RESPONSE_MODELS}"
            )
        if self.response == "concave" and not 0.0 < self.alpha <= 1.0:
            raise InvalidConfig(f"concave alpha must lie in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class SimulationConfig:
    n_min: int
    window: int = 7
    start_day: int = 7
    end_day: int = 20
    policy: str = "kp_agent"
    budget_model: BudgetModel = BudgetModel()
    seed: int = 0
    k_shot: int = 3
    prune_to: int | None = None
    compound: bool = True
    same_campaign_only: bool = False
    max_chars: int | None = None
    max_repairs: int = 3

    def __post_init__(self):
        if self.n_min < 1:
            raise InvalidConfig(f"n_min must be a positive integer, got {self.n_min}")
        if self.window < 1:
            raise InvalidConfig(f"window must be a positive integer, got {self.window}")
        if self.start_day < self.window:
            raise InvalidConfig(
                f"start_day {self.start_day} does not leave room for a full "
                f"{self.window}-day window"
            )
        if self.end_day < self.start_day:
            raise InvalidConfig(
                f"end_day {self.end_day} precedes start_day {self.start_day}"
            )
        if self.policy not in POLICY_NAMES:
            raise InvalidConfig(
                f"unknown policy {self.policy!r}; expected one of {POLICY_NAMES}"
            )
        if self.k_shot < 1:
            raise InvalidConfig(f"k_shot must be a positive integer, got {self.k_shot}")
        if self.prune_to is not None and self.prune_to < self.n_min:
            raise InvalidConfig(
                f"prune_to {self.prune_to} must be at least n_min {self.n_min}"
            )
        if self.max_repairs < 0:
            raise InvalidConfig(f"max_repairs must be non-negative, got {self.max_repairs}")


@dataclass(frozen=True)
class TraceRow:
    """One (policy, campaign, decision day) outcome.

    The serialized trace carries only the columns in TRACE_HEADER; the
    remaining fields (retained set, shares, plan text, disabled flag) stay
    in memory for tests and diagnostics.
    """

    policy: str
    campaign_id: str
    day: int
    retained_count: int
    clamped: bool
    repair_attempts: int
    reward: Decimal
    cumulative: Decimal
    retained: tuple[str, ...]
    shares: tuple[Decimal, ...]
    plan_text: str | None
    pruning_disabled: bool


@dataclass(frozen=True)
class SimulationTrace:
    rows: tuple[TraceRow, ...]
    config: SimulationConfig
    policies: tuple[str, ...]
    input_digest: str


@dataclass(frozen=True)
class SummaryRow:
    policy: str
    day: int
    daily_profit: Decimal
    cumulative_profit: Decimal


@dataclass(frozen=True)
class UpliftRow:
    policy: str
    final_cumulative: Decimal
    uplift_pct: float | None  # None when the policy's final cumulative is zero


@dataclass(frozen=True)
class Summary:
    series: tuple[SummaryRow, ...]
    uplift: tuple[UpliftRow, ...]
    reference_policy: str


# --- budget and reward ----------------------------------------------------


def budget_shares(
    budget: Decimal, retained_count: int, original_count: int
) -> tuple[tuple[Decimal, ...], Fraction]:
    """Split a daily budget evenly across the retained keywords.

    Shares are floored to the cent with the rounding remainder assigned to
    the first keyword in keyword-ascending order, so they sum to the budget
    exactly. Also returns the share multiplier s = original/retained.
    """
    if retained_count < 1:
        raise ValueError("retained_count must be at least 1")
    if original_count < retained_count:
        raise ValueError(
            f"retained_count {retained_count} exceeds original_count {original_count}"
        )
    base = (budget / retained_count).quantize(CENT, rounding=ROUND_FLOOR)
    first = budget - base * (retained_count - 1)
    shares = (first,) + (base,) * (retained_count - 1)
    return shares, Fraction(original_count, retained_count)


def compute_reward(
    log: ExperimentLog,
    campaign: Campaign,
    day_plus_1: int,
    retained: tuple[str, ...],
    model: BudgetModel,
) -> Decimal:
    """Score a retained set against the logged profits of the next day.

    Keywords without a logged record that day contribute zero. The share
    multiplier s is the campaign's full keyword count over the retained
    count. Linear response is computed exactly in rational arithmetic;
    concave goes through floats. Both round half-even to the cent.
    """
    if not retained:
        raise ValueError("retained set must not be empty")
    logged = log.profits_on(campaign.campaign_id, day_plus_1)
    profits = [logged.get(keyword, Decimal("0.00")) for keyword in retained]
    total = sum(profits, Decimal("0.00"))
    if model.response == "identity":
        return total
    s = Fraction(len(campaign.keywords), len(retained))
    if model.response == "linear":
        exact = Fraction(total) * s
        return (Decimal(exact.numerator) / Decimal(exact.denominator)).quantize(
            CENT, rounding=ROUND_HALF_EVEN
        )
    factor = float(s) ** model.alpha
    value = sum(float(p) * factor for p in profits)
    return Decimal(repr(value)).quantize(CENT, rounding=ROUND_HALF_EVEN)


# --- the replay loop --------------------------------------------------------


def _decide(
    policy: str,
    ctx: DecisionContext,
    prune_count: int,
    log: ExperimentLog,
    config: SimulationConfig,
    memory: MemoryStore,
    backend,
) -> PruningDecision:
    if policy == "impression_rank":
        return impression_rank(ctx, prune_count)
    if policy == "ctr_rank":
        return ctr_rank(ctx, prune_count)
    if policy == "cvr_rank":
        return cvr_rank(ctx, prune_count)
    if policy == "impression_regression":
        return impression_regression(ctx, prune_count)
    if policy == "oracle":
        logged = log.profits_on(ctx.campaign.campaign_id, ctx.day + 1)
        future = {kw: logged.get(kw, Decimal("0.00")) for kw in ctx.keywords()}
        return hindsight_oracle(ctx, future, prune_count)
    if policy == "identity":
        return identity_decide(ctx)
    if policy == "kp_agent":
        return kp_agent_decide(
            ctx,
            memory,
            backend,
            k=config.k_shot,
            max_repairs=config.max_repairs,
            same_campaign_only=config.same_campaign_only,
            max_chars=config.max_chars,
        )
    raise InvalidConfig(f"unknown policy {policy!r}")


def _initial_sets(log: ExperimentLog, start_day: int) -> dict[str, set[str]]:
    # a keyword joins the starting universe if it logged any row by start_day
    initial: dict[str, set[str]] = {cid: set() for cid in log.campaigns}
    for rec in log.records:
        if rec.day <= start_day:
            initial[rec.campaign_id].add(rec.keyword)
    return initial


def run_experiment(
    log: ExperimentLog,
    config: SimulationConfig,
    policies: tuple[str, ...] | list[str] | None = None,
    *,
    backend=None,
    memory: MemoryStore | None = None,
    jobs: int = 1,
) -> SimulationTrace:
    """Replay every policy over the decision days of the log.

    Within a day, each policy decides for campaigns in campaign_id order
    (duplicate policy names collapse to one series). Agent reflections and
    memory appends are batched at end of day, after all rewards for the
    day are observed, so day-t experience is retrievable only on later
    days. `jobs` > 1 parallelizes agent decisions within a day, but only
    when the backend declares itself concurrency-safe; scripted backends
    always run sequentially.

    Policy and gateway errors abort the run with SimulationAborted
    carrying the partial trace.
    """
    names: tuple[str, ...] = tuple(dict.fromkeys(policies)) if policies else (config.policy,)
    for name in names:
        if name not in POLICY_NAMES:
            raise InvalidConfig(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
    if "kp_agent" in names and backend is None:
        raise InvalidConfig("the kp_agent policy requires a gateway backend")
    if jobs < 1:
        raise InvalidConfig(f"jobs must be a positive integer, got {jobs}")

    first, last = log.horizon
    if config.start_day - config.window + 1 < first:
        raise InvalidConfig(
            f"window [{config.start_day - config.window + 1}, {config.start_day}] "
            f"starts before the log's first day {first}"
        )
    if config.end_day + 1 > last:
        raise InvalidConfig(
            f"end_day {config.end_day} needs day {config.end_day + 1} for scoring, "
            f"but the log ends on day {last}"
        )

    memory = memory if memory is not None else MemoryStore()
    initial = _initial_sets(log, config.start_day)
    # campaigns with no activity by start_day have nothing to replay
    included = [cid for cid in sorted(log.campaigns) if initial[cid]]
    disabled = {cid: len(initial[cid]) < config.n_min for cid in included}
    target = config.prune_to if config.prune_to is not None else config.n_min

    parallel = jobs > 1 and getattr(backend, "concurrency_safe", False)
    digest = log_digest(log)
    currents = {(name, cid): set(initial[cid]) for name in names for cid in included}
    cumulative = {(name, cid): Decimal("0.00") for name in names for cid in included}
    rows: list[TraceRow] = []

    def partial_trace() -> SimulationTrace:
        return SimulationTrace(tuple(rows), config, names, digest)

    try:
        for day in range(config.start_day, config.end_day + 1):
            reflections: list[tuple[Overview, PruningDecision, Decimal]] = []
            for name in names:
                work = []
                for cid in included:
                    campaign = log.campaigns[cid]
                    current = sorted(currents[(name, cid)])
                    stats = window_stats(log, cid, day, config.window, keywords=current)
                    table = StatsTable.from_stats(stats, (cid, day, config.window))
                    ctx = DecisionContext(
                        campaign=campaign, day=day, stats=table, n_min=config.n_min
                    )
                    prune_count = max(0, len(current) - target)
                    work.append((cid, ctx, prune_count))

                def decide(item):
                    cid, ctx, prune_count = item
                    if disabled[cid]:
                        return identity_decide(ctx)
                    return _decide(name, ctx, prune_count, log, config, memory, backend)

                if parallel and name == "kp_agent":
                    with ThreadPoolExecutor(max_workers=jobs) as pool:
                        decisions = list(pool.map(decide, work))
                else:
                    decisions = [decide(item) for item in work]

                for (cid, ctx, _), decision in zip(work, decisions):
                    campaign = log.campaigns[cid]
                    shares, _ = budget_shares(
                        campaign.daily_budget, len(decision.retained), len(campaign.keywords)
                    )
                    reward = compute_reward(
                        log, campaign, day + 1, decision.retained, config.budget_model
                    )
                    cumulative[(name, cid)] += reward
                    rows.append(
                        TraceRow(
                            policy=name,
                            campaign_id=cid,
                            day=day,
                            retained_count=len(decision.retained),
                            clamped=decision.clamped,
                            repair_attempts=decision.repair_attempts,
                            reward=reward,
                            cumulative=cumulative[(name, cid)],
                            retained=decision.retained,
                            shares=shares,
                            plan_text=decision.plan_text,
                            pruning_disabled=disabled[cid],
                        )
                    )
                    if config.compound and not disabled[cid]:
                        currents[(name, cid)] = set(decision.retained)
                    if name == "kp_agent" and not disabled[cid] and decision.plan_text is not None:
                        overview = render_overview(cid, day, ctx.stats.rows)
                        reflections.append((overview, decision, reward))

            # end of day: reflect on agent outcomes and bank the experience
            for seq, (overview, decision, reward) in enumerate(reflections):
                request = build_reflection_prompt(overview, decision.plan_text, reward)
                reflection = backend.complete(request).text
                memory.append(
                    MemoryEntry(
                        overview=overview,
                        knowledge=decision.knowledge,
                        plan_text=decision.plan_text,
                        reflection=reflection,
                        reward=reward,
                        inserted_at=(day, seq),
                    )
                )
    except KwpruneError as err:
        raise SimulationAborted(
            f"run aborted at {len(rows)} rows: {err}", partial_trace()
        ) from err

    return partial_trace()


# --- summaries ---------------------------------------------------------------


def summarize(trace: SimulationTrace) -> Summary:
    """Aggregate a trace into per-day and cumulative profit per policy.

    Uplift is (reference - policy) / |policy| on final cumulative profit,
    where the reference is kp_agent when present, else the first policy.
    """
    if not trace.rows:
        raise ValueError("cannot summarize an empty trace")
    days = sorted({row.day for row in trace.rows})
    daily: dict[tuple[str, int], Decimal] = {
        (name, day): Decimal("0.00") for name in trace.policies for day in days
    }
    for row in trace.rows:
        daily[(row.policy, row.day)] += row.reward

    series = []
    finals = {}
    for name in trace.policies:
        running = Decimal("0.00")
        for day in days:
            running += daily[(name, day)]
            series.append(SummaryRow(name, day, daily[(name, day)], running))
        finals[name] = running

    reference = "kp_agent" if "kp_agent" in trace.policies else trace.policies[0]
    uplift = []
    for name in trace.policies:
        final = finals[name]
        if final == 0:
            pct = None
        else:
            pct = float((finals[reference] - final) / abs(final) * 100)
        uplift.append(UpliftRow(name, final, pct))
    return Summary(tuple(series), tuple(uplift), reference)


# --- serialization -----------------------------------------------------------


def write_trace_csv(trace: SimulationTrace, sink: IO[str] | str | PathLike) -> None:
    if isinstance(sink, (str, PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_trace_csv(trace, fh)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for row in trace.rows:
        writer.writerow(
            (
                row.policy,
                row.campaign_id,
                row.day,
                row.retained_count,
                "true" if row.clamped else "false",
                row.repair_attempts,
                str(row.reward),
                str(row.cumulative),
            )
        )


def write_summary_csv(summary: Summary, sink: IO[str] | str | PathLike) -> None:
    if isinstance(sink, (str, PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_summary_csv(summary, fh)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for row in summary.series:
        writer.writerow((row.policy, row.day, str(row.daily_profit), str(row.cumulative_profit)))


def manifest_dict(trace: SimulationTrace) -> dict:
    from . import __version__

    cfg = trace.config
    model = {"response": cfg.budget_model.response, "alpha": cfg.budget_model.alpha}
    return {
        "package": "kwprune",
        "version": __version__,
        "input_log_digest": trace.input_digest,
        "response_model": model,
        "policies": list(trace.policies),
        "config": {
            "n_min": cfg.n_min,
            "window": cfg.window,
            "start_day": cfg.start_day,
            "end_day": cfg.end_day,
            "policy": cfg.policy,
            "budget_model": model,
            "seed": cfg.seed,
            "k_shot": cfg.k_shot,
            "prune_to": cfg.prune_to,
            "compound": cfg.compound,
            "same_campaign_only": cfg.same_campaign_only,
            "max_chars": cfg.max_chars,
            "max_repairs": cfg.max_repairs,
        },
    }


def render_manifest(trace: SimulationTrace) -> str:
    return json.dumps(manifest_dict(trace), indent=2, sort_keys=True) + "\n"


def write_manifest(trace: SimulationTrace, sink: IO[str] | str | PathLike) -> None:
    if isinstance(sink, (str, PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_manifest(trace, fh)
        return
    sink.write(render_manifest(trace))
